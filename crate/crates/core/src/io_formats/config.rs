use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::json::from_json_str;
use super::FormatError;
use crate::lineshape::{saturated_fwhm, BroadeningModel, SamplePreset};
use crate::signal_chain::{
    noise_equivalent_bandwidth, DetectorModel, FieldTimeline, LockInConfig, ModulationMode, NoiseModel, Scene,
    SweepPlan,
};
use crate::spin_model::{FieldVector, SpinParams, TransitionClasses};

/// Bias field, T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldSection {
    pub bx_t: f64,
    pub by_t: f64,
    pub bz_t: f64,
}

impl Default for FieldSection {
    fn default() -> Self {
        FieldSection {
            bx_t: 0.0,
            by_t: 0.0,
            bz_t: 1e-3,
        }
    }
}

/// Overrides of the sample preset. After loading every field is filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineshapeSection {
    pub fwhm0_hz: Option<f64>,
    pub rf_sat_w: Option<f64>,
    pub contrast_max: Option<f64>,
    pub opt_sat_w: Option<f64>,
    pub rf_contrast_sat_w: Option<f64>,
    pub pl_rate_per_w: Option<f64>,
    /// Include the hyperfine satellites of `nu2` (and `nu1`).
    pub hyperfine: bool,
}

impl Default for LineshapeSection {
    fn default() -> Self {
        LineshapeSection {
            fwhm0_hz: None,
            rf_sat_w: None,
            contrast_max: None,
            opt_sat_w: None,
            rf_contrast_sat_w: None,
            pl_rate_per_w: None,
            hyperfine: true,
        }
    }
}

/// Operating point, W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub p_opt_w: f64,
    pub p_rf_w: f64,
}

impl Default for DriveSection {
    fn default() -> Self {
        DriveSection {
            p_opt_w: 0.4,
            p_rf_w: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LockInSection {
    pub mod_freq_hz: f64,
    pub sample_rate_hz: f64,
    pub time_constant_s: f64,
    pub filter_order: u32,
    pub ref_phase_rad: f64,
    /// Peak FM deviation; defaults to 0.35 of the linewidth at the drive point.
    pub fm_deviation_hz: Option<f64>,
    pub output_rate_hz: f64,
}

impl Default for LockInSection {
    fn default() -> Self {
        LockInSection {
            mod_freq_hz: 10e3,
            sample_rate_hz: 200e3,
            time_constant_s: 0.5,
            filter_order: 1,
            ref_phase_rad: 0.0,
            fm_deviation_hz: None,
            output_rate_hz: 10.0,
        }
    }
}

/// FM deviation as a fraction of the FWHM when not configured: the point of
/// maximum discriminator slope for a Lorentzian.
pub const DEFAULT_DEVIATION_FRACTION: f64 = 0.35;

impl LockInSection {
    fn base(&self, mode: ModulationMode, deviation: f64) -> LockInConfig {
        LockInConfig {
            mode,
            mod_freq_hz: self.mod_freq_hz,
            time_constant_s: self.time_constant_s,
            fm_deviation_hz: deviation,
            sample_rate_hz: self.sample_rate_hz,
            filter_order: self.filter_order,
            ref_phase_rad: self.ref_phase_rad,
            output_rate_hz: self.output_rate_hz,
        }
    }

    pub fn am(&self) -> LockInConfig {
        self.base(ModulationMode::Am, 0.0)
    }

    pub fn fm(&self, fwhm_hz: f64) -> LockInConfig {
        let dev = self.fm_deviation_hz.unwrap_or(DEFAULT_DEVIATION_FRACTION * fwhm_hz);
        self.base(ModulationMode::Fm, dev)
    }
}

/// AM frequency sweep. Without explicit limits the sweep is centered on
/// `nu2` and spans `span_fwhm` linewidths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub f_start_hz: Option<f64>,
    pub f_stop_hz: Option<f64>,
    pub n_points: usize,
    pub dwell_s: Option<f64>,
    pub span_fwhm: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            f_start_hz: None,
            f_stop_hz: None,
            n_points: 101,
            dwell_s: None,
            span_fwhm: 8.0,
        }
    }
}

impl SweepSection {
    pub fn plan(&self, center_hz: f64, fwhm_hz: f64) -> SweepPlan {
        let half = 0.5 * self.span_fwhm * fwhm_hz;
        SweepPlan {
            f_start_hz: self.f_start_hz.unwrap_or(center_hz - half),
            f_stop_hz: self.f_stop_hz.unwrap_or(center_hz + half),
            n_points: self.n_points,
            dwell_s: self.dwell_s,
        }
    }
}

/// Field staircase for FM tracking.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    /// First step; defaults to `field.bz_t`.
    pub bias_t: Option<f64>,
    pub step_t: f64,
    pub interval_s: f64,
    pub n_steps: usize,
    /// Discarded after each edge; defaults to 20 time constants.
    pub settle_discard_s: Option<f64>,
    /// Defaults to `n_steps * interval_s`.
    pub duration_s: Option<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            bias_t: None,
            step_t: 500e-9,
            interval_s: 120.0,
            n_steps: 10,
            settle_discard_s: None,
            duration_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub shot_noise: bool,
    /// White field noise, T/√Hz.
    pub field_noise_asd_t: f64,
    /// Alternative to `field_noise_asd_t`: the standard deviation the field
    /// noise alone produces at the lock-in output, T.
    pub field_step_sigma_t: Option<f64>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            shot_noise: true,
            field_noise_asd_t: 0.0,
            field_step_sigma_t: None,
        }
    }
}

/// Field-by-frequency ODMR map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub field_start_t: f64,
    pub field_stop_t: f64,
    pub field_points: usize,
    pub f_start_hz: f64,
    pub f_stop_hz: f64,
    pub f_points: usize,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            field_start_t: 0.0,
            field_stop_t: 3e-3,
            field_points: 61,
            f_start_hz: 1e6,
            f_stop_hz: 160e6,
            f_points: 319,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapSource {
    /// Simulate and fit an AM sweep per cell.
    #[default]
    Simulate,
    /// Fit the noise-free lineshape per cell.
    Model,
}

/// Optical by RF power grid. The default optical range stops at 0.4 W, the
/// pump limit of the reference setup.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MapSection {
    pub p_opt_start_w: f64,
    pub p_opt_stop_w: f64,
    pub p_opt_points: usize,
    pub p_rf_start_w: f64,
    pub p_rf_stop_w: f64,
    pub p_rf_points: usize,
    pub source: MapSource,
}

impl Default for MapSection {
    fn default() -> Self {
        MapSection {
            p_opt_start_w: 0.02,
            p_opt_stop_w: 0.4,
            p_opt_points: 20,
            p_rf_start_w: 0.1,
            p_rf_stop_w: 2.0,
            p_rf_points: 20,
            source: MapSource::Simulate,
        }
    }
}

/// Complete run configuration. Every section and key is optional; missing
/// values take their defaults and unknown keys are rejected. `Default` gives
/// the unresolved document; [`ConfigDoc::resolve`] fills the derived values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDoc {
    pub spin: SpinParams,
    pub field: FieldSection,
    pub sample_preset: String,
    pub lineshape: LineshapeSection,
    pub detector: DetectorModel,
    pub drive: DriveSection,
    pub lockin: LockInSection,
    pub sweep: SweepSection,
    pub schedule: ScheduleSection,
    pub noise: NoiseSection,
    pub spectrum: SpectrumSection,
    pub map: MapSection,
}

impl Default for ConfigDoc {
    fn default() -> Self {
        ConfigDoc {
            spin: SpinParams::default(),
            field: FieldSection::default(),
            sample_preset: "quenched".into(),
            lineshape: LineshapeSection::default(),
            detector: DetectorModel::default(),
            drive: DriveSection::default(),
            lockin: LockInSection::default(),
            sweep: SweepSection::default(),
            schedule: ScheduleSection::default(),
            noise: NoiseSection::default(),
            spectrum: SpectrumSection::default(),
            map: MapSection::default(),
        }
    }
}

fn violation(path: &str, message: impl Into<String>) -> FormatError {
    FormatError::SchemaViolation {
        path: path.into(),
        message: message.into(),
    }
}

fn positive(path: &str, v: f64) -> Result<(), FormatError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(violation(path, format!("must be > 0, got {v}")))
    }
}

fn non_negative(path: &str, v: f64) -> Result<(), FormatError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(violation(path, format!("must be >= 0, got {v}")))
    }
}

fn finite(path: &str, v: f64) -> Result<(), FormatError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(violation(path, "must be finite"))
    }
}

fn at_least(path: &str, v: usize, min: usize) -> Result<(), FormatError> {
    if v >= min {
        Ok(())
    } else {
        Err(violation(path, format!("must be >= {min}, got {v}")))
    }
}

impl ConfigDoc {
    /// Validates every section and fills the derived defaults in place.
    pub fn resolve(&mut self) -> Result<(), FormatError> {
        self.spin.validate().map_err(|e| violation("spin", e.to_string()))?;

        finite("field.bx_t", self.field.bx_t)?;
        finite("field.by_t", self.field.by_t)?;
        finite("field.bz_t", self.field.bz_t)?;
        self.field_vector().map_err(|e| violation("field", e.to_string()))?;

        let preset = SamplePreset::by_name(&self.sample_preset).map_err(|e| violation("sample_preset", e.to_string()))?;
        let ls = &mut self.lineshape;
        let b = preset.broadening;
        ls.fwhm0_hz.get_or_insert(b.fwhm0_hz);
        ls.rf_sat_w.get_or_insert(b.rf_sat_w);
        ls.contrast_max.get_or_insert(b.contrast_max);
        ls.opt_sat_w.get_or_insert(b.opt_sat_w);
        ls.rf_contrast_sat_w.get_or_insert(b.rf_contrast_sat_w);
        ls.pl_rate_per_w.get_or_insert(preset.pl_rate_per_w);
        for (key, v) in [
            ("lineshape.fwhm0_hz", ls.fwhm0_hz),
            ("lineshape.rf_sat_w", ls.rf_sat_w),
            ("lineshape.contrast_max", ls.contrast_max),
            ("lineshape.opt_sat_w", ls.opt_sat_w),
            ("lineshape.rf_contrast_sat_w", ls.rf_contrast_sat_w),
            ("lineshape.pl_rate_per_w", ls.pl_rate_per_w),
        ] {
            positive(key, v.expect("filled above"))?;
        }
        self.sample()
            .broadening
            .validate()
            .map_err(|e| violation("lineshape", e.to_string()))?;

        self.detector.validate().map_err(|e| violation("detector", e.to_string()))?;
        non_negative("drive.p_opt_w", self.drive.p_opt_w)?;
        non_negative("drive.p_rf_w", self.drive.p_rf_w)?;

        let li = &mut self.lockin;
        positive("lockin.mod_freq_hz", li.mod_freq_hz)?;
        positive("lockin.sample_rate_hz", li.sample_rate_hz)?;
        positive("lockin.time_constant_s", li.time_constant_s)?;
        positive("lockin.output_rate_hz", li.output_rate_hz)?;
        finite("lockin.ref_phase_rad", li.ref_phase_rad)?;
        if li.filter_order == 0 {
            return Err(violation("lockin.filter_order", "must be >= 1"));
        }
        let fwhm = saturated_fwhm(&self.sample().broadening, self.drive.p_rf_w, self.drive.p_opt_w);
        let dev = *self
            .lockin
            .fm_deviation_hz
            .get_or_insert(DEFAULT_DEVIATION_FRACTION * fwhm);
        positive("lockin.fm_deviation_hz", dev)?;
        self.lockin.am().validate().map_err(|e| violation("lockin", e.to_string()))?;
        self.lockin.fm(fwhm).validate().map_err(|e| violation("lockin", e.to_string()))?;

        let sw = &self.sweep;
        at_least("sweep.n_points", sw.n_points, 5)?;
        positive("sweep.span_fwhm", sw.span_fwhm)?;
        if let Some(v) = sw.f_start_hz {
            non_negative("sweep.f_start_hz", v)?;
        }
        if let Some(v) = sw.f_stop_hz {
            positive("sweep.f_stop_hz", v)?;
        }
        if let (Some(a), Some(b)) = (sw.f_start_hz, sw.f_stop_hz) {
            if !(b > a) {
                return Err(violation("sweep.f_stop_hz", "must exceed sweep.f_start_hz"));
            }
        }
        if let Some(d) = sw.dwell_s {
            positive("sweep.dwell_s", d)?;
            if d < 5.0 * self.lockin.time_constant_s {
                return Err(violation("sweep.dwell_s", "must be at least 5 lockin.time_constant_s"));
            }
        }

        let tau = self.lockin.time_constant_s;
        let bz = self.field.bz_t;
        let sc = &mut self.schedule;
        finite("schedule.bias_t", *sc.bias_t.get_or_insert(bz))?;
        finite("schedule.step_t", sc.step_t)?;
        positive("schedule.interval_s", sc.interval_s)?;
        at_least("schedule.n_steps", sc.n_steps, 1)?;
        let settle = *sc.settle_discard_s.get_or_insert(20.0 * tau);
        if !(settle >= 5.0 * tau) {
            return Err(violation(
                "schedule.settle_discard_s",
                "must be at least 5 lockin.time_constant_s",
            ));
        }
        if settle >= sc.interval_s {
            return Err(violation("schedule.settle_discard_s", "must be shorter than schedule.interval_s"));
        }
        let n_steps = sc.n_steps as f64;
        positive("schedule.duration_s", *sc.duration_s.get_or_insert(n_steps * sc.interval_s))?;
        let (bias, last) = (sc.bias_t.expect("filled"), sc.bias_t.expect("filled") + sc.step_t * (n_steps - 1.0));
        for b in [bias, last] {
            FieldVector::new(self.field.bx_t, self.field.by_t, b).map_err(|e| violation("schedule", e.to_string()))?;
        }

        let nz = &mut self.noise;
        non_negative("noise.field_noise_asd_t", nz.field_noise_asd_t)?;
        if let Some(sigma) = nz.field_step_sigma_t {
            non_negative("noise.field_step_sigma_t", sigma)?;
            let from_sigma = sigma / noise_equivalent_bandwidth(tau, self.lockin.filter_order).sqrt();
            if nz.field_noise_asd_t != 0.0 && (nz.field_noise_asd_t / from_sigma - 1.0).abs() > 1e-9 {
                return Err(violation(
                    "noise.field_step_sigma_t",
                    "conflicts with noise.field_noise_asd_t; set only one",
                ));
            }
            nz.field_noise_asd_t = from_sigma;
        }

        let sp = &self.spectrum;
        non_negative("spectrum.field_start_t", sp.field_start_t)?;
        if !(sp.field_stop_t > sp.field_start_t) {
            return Err(violation("spectrum.field_stop_t", "must exceed spectrum.field_start_t"));
        }
        FieldVector::new(self.field.bx_t, self.field.by_t, sp.field_stop_t)
            .map_err(|e| violation("spectrum.field_stop_t", e.to_string()))?;
        at_least("spectrum.field_points", sp.field_points, 1)?;
        non_negative("spectrum.f_start_hz", sp.f_start_hz)?;
        if !(sp.f_stop_hz > sp.f_start_hz) {
            return Err(violation("spectrum.f_stop_hz", "must exceed spectrum.f_start_hz"));
        }
        at_least("spectrum.f_points", sp.f_points, 2)?;

        let m = &self.map;
        positive("map.p_opt_start_w", m.p_opt_start_w)?;
        positive("map.p_rf_start_w", m.p_rf_start_w)?;
        positive("map.p_opt_stop_w", m.p_opt_stop_w)?;
        positive("map.p_rf_stop_w", m.p_rf_stop_w)?;
        at_least("map.p_opt_points", m.p_opt_points, 1)?;
        at_least("map.p_rf_points", m.p_rf_points, 1)?;
        if m.p_opt_points > 1 && !(m.p_opt_stop_w > m.p_opt_start_w) {
            return Err(violation("map.p_opt_stop_w", "must exceed map.p_opt_start_w"));
        }
        if m.p_rf_points > 1 && !(m.p_rf_stop_w > m.p_rf_start_w) {
            return Err(violation("map.p_rf_stop_w", "must exceed map.p_rf_start_w"));
        }
        Ok(())
    }

    pub fn field_vector(&self) -> Result<FieldVector, crate::spin_model::SpinError> {
        FieldVector::new(self.field.bx_t, self.field.by_t, self.field.bz_t)
    }

    /// Sample preset with the lineshape overrides applied.
    pub fn sample(&self) -> SamplePreset {
        let mut preset = SamplePreset::by_name(&self.sample_preset).unwrap_or_else(|_| SamplePreset::quenched());
        let ls = &self.lineshape;
        let b = preset.broadening;
        preset.broadening = BroadeningModel {
            fwhm0_hz: ls.fwhm0_hz.unwrap_or(b.fwhm0_hz),
            rf_sat_w: ls.rf_sat_w.unwrap_or(b.rf_sat_w),
            contrast_max: ls.contrast_max.unwrap_or(b.contrast_max),
            opt_sat_w: ls.opt_sat_w.unwrap_or(b.opt_sat_w),
            rf_contrast_sat_w: ls.rf_contrast_sat_w.unwrap_or(b.rf_contrast_sat_w),
        };
        preset.pl_rate_per_w = ls.pl_rate_per_w.unwrap_or(preset.pl_rate_per_w);
        preset
    }

    pub fn classes(&self) -> TransitionClasses {
        if self.lineshape.hyperfine {
            TransitionClasses::ALL
        } else {
            TransitionClasses::ALL.without_hyperfine()
        }
    }

    /// Scene at the configured drive point and bias field.
    pub fn scene(&self) -> Result<Scene, FormatError> {
        self.scene_at(self.drive.p_opt_w, self.drive.p_rf_w)
    }

    pub fn scene_at(&self, p_opt_w: f64, p_rf_w: f64) -> Result<Scene, FormatError> {
        let mut scene = Scene::new(self.sample(), p_opt_w, p_rf_w);
        scene.spin = self.spin;
        scene.field = self.field_vector().map_err(|e| violation("field", e.to_string()))?;
        scene.detector = self.detector;
        scene.classes = self.classes();
        scene.noise = NoiseModel {
            shot_noise: self.noise.shot_noise,
            field_noise_asd_t: self.noise.field_noise_asd_t,
        };
        Ok(scene)
    }

    pub fn timeline(&self) -> Result<FieldTimeline, FormatError> {
        let s = &self.schedule;
        FieldTimeline::staircase(s.bias_t.unwrap_or(self.field.bz_t), s.step_t, s.interval_s, s.n_steps)
            .map_err(|e| violation("schedule", e.to_string()))
    }

    pub fn settle_discard_s(&self) -> f64 {
        self.schedule
            .settle_discard_s
            .unwrap_or(20.0 * self.lockin.time_constant_s)
    }

    pub fn duration_s(&self) -> f64 {
        self.schedule
            .duration_s
            .unwrap_or(self.schedule.n_steps as f64 * self.schedule.interval_s)
    }

    /// Fully defaulted configuration as JSON, for manifests.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Parses and resolves a configuration. A blank document yields the defaults.
pub fn parse_config(text: &str) -> Result<ConfigDoc, FormatError> {
    let mut doc: ConfigDoc = if text.trim().is_empty() {
        ConfigDoc::default()
    } else {
        from_json_str(text)?
    };
    doc.resolve()?;
    Ok(doc)
}

pub fn load_config(path: &Path) -> Result<ConfigDoc, FormatError> {
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_config(&text)
}
