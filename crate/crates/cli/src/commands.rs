use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use odmr_core::analysis::{
    analyze_steps, build_sensitivity_map, fit_lorentzian_with, median, odmr_contrast, shot_noise_sensitivity, CellInput,
    FitOptions, LockInScaling, LorentzFit, Satellites, SensitivityMap, SensitivityPoint, StepReport,
};
use odmr_core::io_formats::{
    derive_seed, load_config, load_sweep, parse_config, sha256_hex, write_json, write_map, write_sweep, write_table,
    write_time_series, Cell, ConfigDoc, MapSource, RunManifest, SweepRecord, Versioned,
};
use odmr_core::lineshape::{linspace, odmr_value, SyntheticSpectrum};
use odmr_core::signal_chain::{
    photon_rate_from_voltage, simulate_am_sweep, simulate_fm_tracking, Scene, ShotNoiseSource, SweepPlan,
};
use odmr_core::spin_model::{lines_at, FieldVector, TransitionClasses, TransitionLabel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{svg, CliError, CommandKind, Invocation};

pub const MANIFEST_NAME: &str = "manifest.json";

/// Files a command wrote, its manifest and a one-line human summary.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub manifest: RunManifest,
    pub summary: String,
}

/// Contents of `fit.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub fit: LorentzFit,
    /// Fractional PL contrast; absent when the sweep has no complete DC column.
    pub contrast: Option<f64>,
    pub dc_v: Option<f64>,
    pub rate_hz: Option<f64>,
    pub eta_t_rthz: Option<f64>,
    pub sweep_sha256: String,
}

/// Contents of `argmin.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgminReport {
    pub i_opt: usize,
    pub i_rf: usize,
    pub best: SensitivityPoint,
    pub n_cells: usize,
    /// Cells where no peak could be fitted.
    pub n_failed: usize,
}

pub fn run(inv: &Invocation) -> Result<Outcome, CliError> {
    let mut doc = match &inv.config {
        Some(path) => load_config(path),
        None => parse_config(""),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    if inv.no_hyperfine {
        doc.lineshape.hyperfine = false;
    }

    fs::create_dir_all(&inv.out).map_err(|e| CliError::Domain(format!("{}: {e}", inv.out.display())))?;
    let manifest_path = inv.out.join(MANIFEST_NAME);
    if manifest_path.exists() {
        fs::remove_file(&manifest_path).map_err(|e| CliError::Domain(format!("{}: {e}", manifest_path.display())))?;
    }

    let pool = thread_pool()?;
    let mut manifest = RunManifest::new(inv.command.name(), Some(inv.seed), doc.snapshot());
    let (files, summary) = pool.install(|| match &inv.command {
        CommandKind::Spectrum => spectrum(&doc, inv),
        CommandKind::Simulate => simulate(&doc, inv),
        CommandKind::Fit { sweep } => fit(&doc, inv, sweep),
        CommandKind::Map => map(&doc, inv),
        CommandKind::Steps => steps(&doc, inv),
    })?;
    for f in &files {
        manifest.record_output(f)?;
    }
    manifest.write(&manifest_path)?;
    Ok(Outcome {
        files,
        manifest,
        summary,
    })
}

fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("ODMR_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| CliError::Usage(format!("ODMR_THREADS must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| CliError::Domain(e.to_string()))
}

fn nu2_line(scene: &Scene) -> Result<(f64, f64), CliError> {
    let lines = lines_at(&scene.spin, &scene.field, TransitionClasses::PRIMARY_ONLY)?;
    let l = lines
        .iter()
        .find(|l| l.label == TransitionLabel::Nu2)
        .ok_or_else(|| CliError::Domain("no nu2 transition".into()))?;
    Ok((l.frequency_hz, l.odmr_weight()))
}

fn fit_options(doc: &ConfigDoc) -> FitOptions {
    FitOptions {
        satellites: doc.lineshape.hyperfine.then_some(Satellites {
            offset_hz: doc.spin.hyperfine_offset_hz,
            rel_amp: doc.spin.hyperfine_rel_amp,
        }),
        ..FitOptions::default()
    }
}

fn spectrum(doc: &ConfigDoc, inv: &Invocation) -> Result<(Vec<PathBuf>, String), CliError> {
    let sp = &doc.spectrum;
    let fields = linspace(sp.field_start_t, sp.field_stop_t, sp.field_points);
    let freqs = linspace(sp.f_start_hz, sp.f_stop_hz, sp.f_points);
    let scene = doc.scene()?;
    let (fwhm, contrast) = (scene.fwhm(), scene.contrast());
    // On/off photon counts over one sweep dwell per pixel.
    let dwell = doc.sweep.dwell_s.unwrap_or(5.0 * doc.lockin.time_constant_s + 1.0 / doc.lockin.mod_freq_hz);
    let sigma = if doc.noise.shot_noise {
        2.0 / (scene.photon_rate() * dwell).sqrt()
    } else {
        0.0
    };

    let rows = fields
        .par_iter()
        .enumerate()
        .map(|(i, &bz)| {
            let field = FieldVector::new(doc.field.bx_t, doc.field.by_t, bz)?;
            let lines = lines_at(&doc.spin, &field, doc.classes())?;
            let mut noise = ShotNoiseSource::new(derive_seed(inv.seed, i as u64));
            let values: Vec<f64> = freqs
                .iter()
                .map(|&nu| {
                    let n = if sigma > 0.0 { sigma * noise.standard_normal() } else { 0.0 };
                    odmr_value(&lines, fwhm, contrast, nu) + n
                })
                .collect();
            Ok((lines, values))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let spectrum_path = inv.out.join("spectrum.csv");
    write_table(
        &spectrum_path,
        "field_t,frequency_hz,contrast",
        fields.iter().zip(&rows).flat_map(|(&bz, (_, values))| {
            freqs
                .iter()
                .zip(values)
                .map(move |(&f, &v)| vec![bz.into(), f.into(), v.into()])
        }),
    )?;
    let transitions_path = inv.out.join("transitions.csv");
    write_table(
        &transitions_path,
        "field_t,label,lower_m,upper_m,frequency_hz,rel_strength,readout_weight",
        fields.iter().zip(&rows).flat_map(|(&bz, (lines, _))| {
            lines.iter().map(move |l| {
                vec![
                    bz.into(),
                    Cell::Text(l.label.to_string()),
                    Cell::Text(l.lower_m.to_string()),
                    Cell::Text(l.upper_m.to_string()),
                    l.frequency_hz.into(),
                    l.rel_strength.into(),
                    l.readout_weight.into(),
                ]
            })
        }),
    )?;
    let mut files = vec![spectrum_path, transitions_path];
    if inv.svg {
        let path = inv.out.join("spectrum.svg");
        let values: Vec<Option<f64>> = rows.iter().flat_map(|(_, v)| v.iter().map(|&x| Some(x))).collect();
        svg::heatmap(&path, "ODMR contrast", ("frequency (Hz)", &freqs), ("field (T)", &fields), &values)?;
        files.push(path);
    }
    let crossing = odmr_core::spin_model::level_crossing_field(&doc.spin);
    Ok((
        files,
        format!(
            "{} fields x {} frequencies; nu1 crosses the dark line at {:.4} mT",
            fields.len(),
            freqs.len(),
            crossing * 1e3
        ),
    ))
}

fn sweep_at(doc: &ConfigDoc, scene: &Scene, seed: u64) -> Result<SyntheticSpectrum, CliError> {
    let (center, _) = nu2_line(scene)?;
    let plan = doc.sweep.plan(center, scene.fwhm());
    Ok(simulate_am_sweep(scene, &plan, &doc.lockin.am(), seed)?)
}

fn simulate(doc: &ConfigDoc, inv: &Invocation) -> Result<(Vec<PathBuf>, String), CliError> {
    let scene = doc.scene()?;
    let spectrum = sweep_at(doc, &scene, inv.seed)?;
    let rec = SweepRecord {
        frequency_hz: spectrum.frequency_hz.clone(),
        lockin_v: spectrum.values.clone(),
        dc_v: spectrum.dc_v.iter().flatten().map(|&v| Some(v)).collect(),
    };
    let path = inv.out.join("sweep.csv");
    write_sweep(&path, &rec)?;
    let mut files = vec![path];
    if inv.svg {
        let p = inv.out.join("sweep.svg");
        svg::lines(&p, "AM sweep", "frequency (Hz)", "lock-in (V)", &[(&rec.frequency_hz, &rec.lockin_v, "black")])?;
        files.push(p);
    }
    Ok((
        files,
        format!(
            "{} points, FWHM {:.3} MHz, contrast {:.3e}",
            rec.len(),
            scene.fwhm() * 1e-6,
            scene.contrast()
        ),
    ))
}

fn fit(doc: &ConfigDoc, inv: &Invocation, sweep: &Path) -> Result<(Vec<PathBuf>, String), CliError> {
    let bytes = fs::read(sweep).map_err(|e| CliError::Usage(format!("{}: {e}", sweep.display())))?;
    let rec = load_sweep(sweep).map_err(|e| CliError::Usage(format!("{}: {e}", sweep.display())))?;
    let fit = fit_lorentzian_with(&rec, None, &fit_options(doc))?;
    if !fit.converged {
        warn!("fit stopped after {} iterations without converging", fit.iterations);
    }
    let mut report = FitReport {
        fit,
        contrast: None,
        dc_v: None,
        rate_hz: None,
        eta_t_rthz: None,
        sweep_sha256: sha256_hex(&bytes),
    };
    match rec.dc_complete() {
        Some(dc) => {
            // Off-resonance points dominate the sweep, so the median is the
            // unmodulated detector level.
            let dc = median(&dc);
            let c = odmr_contrast(fit.baseline + fit.amplitude, fit.baseline, dc, LockInScaling::Fundamental)?;
            let rate = photon_rate_from_voltage(dc, &doc.detector)?;
            report.contrast = Some(c);
            report.dc_v = Some(dc);
            report.rate_hz = Some(rate);
            report.eta_t_rthz = Some(shot_noise_sensitivity(fit.fwhm_hz, c.abs(), rate, doc.spin.g_factor)?);
        }
        None => warn!("dc_v column is incomplete; contrast, rate and sensitivity omitted"),
    }
    let path = inv.out.join("fit.json");
    write_json(&path, &Versioned::new(&report))?;
    let mut files = vec![path];
    if inv.svg {
        let p = inv.out.join("fit.svg");
        let peak = fit.peak();
        let model: Vec<f64> = rec
            .frequency_hz
            .iter()
            .map(|&f| fit.baseline + odmr_core::lineshape::lorentzian_value(&peak, f))
            .collect();
        svg::lines(
            &p,
            "Lorentzian fit",
            "frequency (Hz)",
            "lock-in (V)",
            &[(&rec.frequency_hz, &rec.lockin_v, "black"), (&rec.frequency_hz, &model, "red")],
        )?;
        files.push(p);
    }
    let mut summary = format!(
        "center {:.4} MHz, FWHM {:.4} ± {:.4} MHz",
        fit.center_hz * 1e-6,
        fit.fwhm_hz * 1e-6,
        fit.fwhm_ci_hz * 1e-6
    );
    if let Some(eta) = report.eta_t_rthz {
        summary.push_str(&format!(", shot-noise limit {:.3} nT/√Hz", eta * 1e9));
    }
    Ok((files, summary))
}

fn map_cell(doc: &ConfigDoc, p_opt_w: f64, p_rf_w: f64, seed: u64) -> Result<Option<CellInput>, CliError> {
    let scene = doc.scene_at(p_opt_w, p_rf_w)?;
    let opts = fit_options(doc);
    let fitted = match doc.map.source {
        MapSource::Simulate => {
            let spectrum = sweep_at(doc, &scene, seed)?;
            fit_lorentzian_with(&spectrum, None, &opts).and_then(|fit| {
                let dc = spectrum.dc_v.as_deref().map_or(0.0, median);
                let c = odmr_contrast(fit.baseline + fit.amplitude, fit.baseline, dc, LockInScaling::Fundamental)?;
                Ok((fit, c.abs(), photon_rate_from_voltage(dc, &scene.detector).unwrap_or(0.0)))
            })
        }
        MapSource::Model => {
            let (center, _) = nu2_line(&scene)?;
            let plan: SweepPlan = doc.sweep.plan(center, scene.fwhm());
            let lines = scene.lines()?;
            let freqs = plan.frequencies();
            let values: Vec<f64> = freqs
                .iter()
                .map(|&nu| odmr_value(&lines, scene.fwhm(), scene.contrast(), nu))
                .collect();
            fit_lorentzian_with(&(&freqs[..], &values[..]), None, &opts)
                .map(|fit| (fit, fit.amplitude.abs(), scene.photon_rate()))
        }
    };
    match fitted {
        Ok((fit, contrast, rate_hz)) if contrast > 0.0 && rate_hz > 0.0 => Ok(Some(CellInput {
            p_opt_w,
            p_rf_w,
            fwhm_hz: fit.fwhm_hz,
            contrast,
            rate_hz,
        })),
        Ok(_) => Ok(None),
        Err(e) => {
            info!("cell p_opt_w={p_opt_w} p_rf_w={p_rf_w}: {e}");
            Ok(None)
        }
    }
}

fn map(doc: &ConfigDoc, inv: &Invocation) -> Result<(Vec<PathBuf>, String), CliError> {
    let m = &doc.map;
    let p_opt = linspace(m.p_opt_start_w, m.p_opt_stop_w, m.p_opt_points);
    let p_rf = linspace(m.p_rf_start_w, m.p_rf_stop_w, m.p_rf_points);
    let n_cells = p_opt.len() * p_rf.len();
    let records: Vec<CellInput> = (0..n_cells)
        .into_par_iter()
        .map(|k| map_cell(doc, p_opt[k / p_rf.len()], p_rf[k % p_rf.len()], derive_seed(inv.seed, k as u64)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    let n_failed = n_cells - records.len();
    if n_failed > 0 {
        warn!("{n_failed} of {n_cells} cells had no fittable peak and are left out");
    }
    let smap: SensitivityMap = build_sensitivity_map(&records, doc.spin.g_factor)?;
    let best = *smap.best();
    let report = ArgminReport {
        i_opt: p_opt.partition_point(|&v| v < best.p_opt_w),
        i_rf: p_rf.partition_point(|&v| v < best.p_rf_w),
        best,
        n_cells,
        n_failed,
    };

    let map_path = inv.out.join("map.csv");
    write_map(&map_path, &smap)?;
    let argmin_path = inv.out.join("argmin.json");
    write_json(&argmin_path, &Versioned::new(&report))?;
    let mut files = vec![map_path, argmin_path];
    if inv.svg {
        let p = inv.out.join("map.svg");
        let values: Vec<Option<f64>> = (0..n_cells)
            .map(|k| {
                let (po, pr) = (p_opt[k / p_rf.len()], p_rf[k % p_rf.len()]);
                smap.points()
                    .find(|c| c.p_opt_w == po && c.p_rf_w == pr)
                    .map(|c| c.eta_t_rthz.log10())
            })
            .collect();
        svg::heatmap(&p, "log10 sensitivity (T/√Hz)", ("RF power (W)", &p_rf), ("optical power (W)", &p_opt), &values)?;
        files.push(p);
    }
    Ok((
        files,
        format!(
            "minimum {:.3} nT/√Hz at p_opt {:.4} W, p_rf {:.4} W",
            best.eta_t_rthz * 1e9,
            best.p_opt_w,
            best.p_rf_w
        ),
    ))
}

fn steps(doc: &ConfigDoc, inv: &Invocation) -> Result<(Vec<PathBuf>, String), CliError> {
    let scene = doc.scene()?;
    let timeline = doc.timeline()?;
    let cfg = doc.lockin.fm(scene.fwhm());
    let run = simulate_fm_tracking(&timeline, &scene, &cfg, doc.duration_s(), inv.seed)?;
    let report: StepReport = analyze_steps(
        &run.field_estimate,
        &timeline,
        doc.lockin.time_constant_s,
        doc.settle_discard_s(),
    )?;

    let tracking_path = inv.out.join("tracking.csv");
    write_time_series(&tracking_path, &run)?;
    let steps_path = inv.out.join("steps.json");
    write_json(&steps_path, &Versioned::new(&report))?;
    let mut files = vec![tracking_path, steps_path];
    if inv.svg {
        let p = inv.out.join("tracking.svg");
        let t: Vec<f64> = (0..run.field_estimate.len()).map(|i| run.field_estimate.time(i)).collect();
        let expected: Vec<f64> = t.iter().map(|&ti| timeline.value_at(ti)).collect();
        svg::lines(
            &p,
            "Field step response",
            "time (s)",
            "field (T)",
            &[(&t, &run.field_estimate.values, "black"), (&t, &expected, "red")],
        )?;
        files.push(p);
    }
    Ok((
        files,
        format!(
            "{} steps, σ {:.2} nT, sensitivity {:.2} nT/√Hz",
            report.steps.len(),
            report.pooled_sigma_t * 1e9,
            report.sensitivity_t_rthz * 1e9
        ),
    ))
}
