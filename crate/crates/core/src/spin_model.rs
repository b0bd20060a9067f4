//! Ground-state spin-3/2 Hamiltonian of the silicon vacancy.
//!
//! The Hamiltonian, in frequency units, is
//!
//! ```text
//! H/h = D (S_z^2 - 5/4) + gamma (B_x S_x + B_y S_y + B_z S_z),   D = zfs / 2
//! ```
//!
//! written in the `S_z` eigenbasis ordered `m = +3/2, +1/2, -1/2, -3/2`. With
//! `D > 0` the `|±3/2>` doublet sits `zfs` above the `|±1/2>` doublet at zero
//! field.
//!
//! # Labeling convention
//!
//! Transition labels follow the published figure convention: `nu1` is the branch
//! whose frequency falls with an axial field (`zfs - gamma B`) and is labeled
//! `+1/2 -> +3/2`, `nu2` rises (`zfs + gamma B`) and is labeled `-1/2 -> -3/2`.
//! With `D > 0` and a positive Zeeman term those branches are the matrix-basis
//! pairs `(-1/2, -3/2)` and `(+1/2, +3/2)`, so the `m` values carried on a
//! [`TransitionLine`] are the mirror image (`m -> -m`) of the matrix-basis labels
//! stored in [`LevelSet::dominant_m`].

use std::fmt;

use itertools::Itertools;
use nalgebra::{Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consts::BOHR_MAGNETON_HZ_PER_T;

/// Largest field magnitude accepted by the ground-state model.
pub const MAX_FIELD_T: f64 = 0.1;

/// Relative Hermiticity tolerance for [`Hamiltonian4`].
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("invalid spin parameters: {0}")]
    InvalidParams(String),
    #[error("field magnitude {magnitude_t} T is outside the model validity range (<= {MAX_FIELD_T} T)")]
    FieldOutOfRange { magnitude_t: f64 },
    #[error("field components must be finite")]
    NonFiniteField,
    #[error("eigensolver did not converge (residual {residual:e} Hz)")]
    ConvergenceFailure { residual: f64 },
}

/// Defect constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinParams {
    /// Zero-field splitting between the `|±1/2>` and `|±3/2>` doublets, Hz.
    pub zfs_hz: f64,
    pub g_factor: f64,
    /// Offset of the ²⁹Si hyperfine satellites from the parent line, Hz.
    pub hyperfine_offset_hz: f64,
    /// Satellite amplitude relative to the parent line.
    pub hyperfine_rel_amp: f64,
    /// Optical readout weight of the dark `-1/2 -> +1/2` line. The ±1/2
    /// doublet carries almost no optically pumped population difference, so
    /// the line is faint in ODMR even though its RF coupling is strong.
    pub dark_readout_weight: f64,
}

impl Default for SpinParams {
    fn default() -> Self {
        SpinParams {
            zfs_hz: 70e6,
            g_factor: 2.0032,
            hyperfine_offset_hz: 5e6,
            hyperfine_rel_amp: 0.05,
            dark_readout_weight: 0.05,
        }
    }
}

impl SpinParams {
    pub fn validate(&self) -> Result<(), SpinError> {
        let bad = |msg: &str| Err(SpinError::InvalidParams(msg.to_owned()));
        if !(self.zfs_hz.is_finite() && self.zfs_hz > 0.0) {
            return bad("zfs_hz must be > 0");
        }
        if !(1.9..=2.1).contains(&self.g_factor) {
            return bad("g_factor must lie in [1.9, 2.1]");
        }
        if !(self.hyperfine_offset_hz.is_finite() && self.hyperfine_offset_hz >= 0.0) {
            return bad("hyperfine_offset_hz must be >= 0");
        }
        if !(0.0..1.0).contains(&self.hyperfine_rel_amp) {
            return bad("hyperfine_rel_amp must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.dark_readout_weight) {
            return bad("dark_readout_weight must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        gyromagnetic_ratio(self.g_factor)
    }
}

/// Lab-frame magnetic flux density in tesla, `z` along the crystal c axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub fn new(bx: f64, by: f64, bz: f64) -> Result<Self, SpinError> {
        let f = FieldVector { bx, by, bz };
        f.validate()?;
        Ok(f)
    }

    pub fn axial(bz: f64) -> Result<Self, SpinError> {
        Self::new(0.0, 0.0, bz)
    }

    pub fn magnitude(&self) -> f64 {
        (self.bx * self.bx + self.by * self.by + self.bz * self.bz).sqrt()
    }

    pub fn validate(&self) -> Result<(), SpinError> {
        if !(self.bx.is_finite() && self.by.is_finite() && self.bz.is_finite()) {
            return Err(SpinError::NonFiniteField);
        }
        let magnitude_t = self.magnitude();
        if magnitude_t > MAX_FIELD_T {
            return Err(SpinError::FieldOutOfRange { magnitude_t });
        }
        Ok(())
    }
}

/// Spin projection stored as twice its value (`+3/2` is `3`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinProjection(i8);

impl SpinProjection {
    pub const PLUS_3_2: Self = SpinProjection(3);
    pub const PLUS_1_2: Self = SpinProjection(1);
    pub const MINUS_1_2: Self = SpinProjection(-1);
    pub const MINUS_3_2: Self = SpinProjection(-3);

    /// Basis order used by [`Hamiltonian4`].
    pub const BASIS: [SpinProjection; 4] = [
        Self::PLUS_3_2,
        Self::PLUS_1_2,
        Self::MINUS_1_2,
        Self::MINUS_3_2,
    ];

    pub fn twice(self) -> i8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    pub fn mirrored(self) -> Self {
        SpinProjection(-self.0)
    }
}

impl fmt::Display for SpinProjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { '-' } else { '+' };
        write!(f, "{}{}/2", sign, self.0.abs())
    }
}

/// 4×4 Hermitian Hamiltonian in Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian4 {
    matrix: Matrix4<Complex64>,
}

impl Hamiltonian4 {
    /// Wraps an arbitrary matrix, checking Hermiticity.
    pub fn from_matrix(matrix: Matrix4<Complex64>) -> Result<Self, SpinError> {
        let h = Hamiltonian4 { matrix };
        if !h.is_hermitian(HERMITIAN_TOL) {
            return Err(SpinError::InvalidParams("matrix is not Hermitian".into()));
        }
        Ok(h)
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.matrix
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn is_hermitian(&self, rel_tol: f64) -> bool {
        let scale = self.norm().max(f64::MIN_POSITIVE);
        (self.matrix - self.matrix.adjoint()).norm() <= rel_tol * scale
    }

    pub fn is_diagonal(&self) -> bool {
        (0..4).all(|i| (0..4).all(|j| i == j || self.matrix[(i, j)] == Complex64::new(0.0, 0.0)))
    }
}

/// Eigen-decomposition of a [`Hamiltonian4`], ascending in energy.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    pub energies_hz: [f64; 4],
    /// `vectors[k][i]` is the amplitude of basis state `i` in level `k`.
    pub vectors: [[Complex64; 4]; 4],
    /// Matrix-basis `m` label of the dominant component of each level.
    pub dominant_m: [SpinProjection; 4],
}

impl LevelSet {
    fn level_of(&self, m: SpinProjection) -> usize {
        self.dominant_m
            .iter()
            .position(|&d| d == m)
            .expect("dominant labels form a permutation of the basis")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionLabel {
    Nu1,
    Nu2,
    Dark,
    M2Plus,
    M2Minus,
    Nu1HfMinus,
    Nu1HfPlus,
    Nu2HfMinus,
    Nu2HfPlus,
}

impl TransitionLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            TransitionLabel::Nu1 => "nu1",
            TransitionLabel::Nu2 => "nu2",
            TransitionLabel::Dark => "dark",
            TransitionLabel::M2Plus => "m2_plus",
            TransitionLabel::M2Minus => "m2_minus",
            TransitionLabel::Nu1HfMinus => "nu1_hf_minus",
            TransitionLabel::Nu1HfPlus => "nu1_hf_plus",
            TransitionLabel::Nu2HfMinus => "nu2_hf_minus",
            TransitionLabel::Nu2HfPlus => "nu2_hf_plus",
        }
    }

    pub fn is_satellite(self) -> bool {
        matches!(
            self,
            TransitionLabel::Nu1HfMinus
                | TransitionLabel::Nu1HfPlus
                | TransitionLabel::Nu2HfMinus
                | TransitionLabel::Nu2HfPlus
        )
    }
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One ground-state transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionLine {
    pub label: TransitionLabel,
    pub lower_m: SpinProjection,
    pub upper_m: SpinProjection,
    pub frequency_hz: f64,
    /// `|<f|S_x|i>|^2` normalized to 1 for `nu1`/`nu2` at B ∥ c.
    pub rel_strength: f64,
    /// Optical readout weight multiplying the ODMR contrast of this line.
    pub readout_weight: f64,
}

impl TransitionLine {
    /// Effective ODMR amplitude relative to the saturated contrast.
    pub fn odmr_weight(&self) -> f64 {
        self.rel_strength * self.readout_weight
    }
}

/// Which transition families [`transitions`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionClasses {
    pub primary: bool,
    pub dark: bool,
    pub double_quantum: bool,
    pub hyperfine: bool,
    pub hyperfine_on_nu1: bool,
}

impl TransitionClasses {
    pub const ALL: Self = TransitionClasses {
        primary: true,
        dark: true,
        double_quantum: true,
        hyperfine: true,
        hyperfine_on_nu1: false,
    };

    pub const PRIMARY_ONLY: Self = TransitionClasses {
        primary: true,
        dark: false,
        double_quantum: false,
        hyperfine: false,
        hyperfine_on_nu1: false,
    };

    pub fn without_hyperfine(self) -> Self {
        TransitionClasses {
            hyperfine: false,
            hyperfine_on_nu1: false,
            ..self
        }
    }
}

impl Default for TransitionClasses {
    fn default() -> Self {
        Self::ALL
    }
}

/// `g μ_B / h` in Hz/T.
pub fn gyromagnetic_ratio(g_factor: f64) -> f64 {
    g_factor * BOHR_MAGNETON_HZ_PER_T
}

// <m+1|S_+|m> for m = +1/2, -1/2, -3/2, i.e. the coupling between basis
// indices (i, i + 1).
const RAISING: [f64; 3] = [1.732_050_807_568_877_2, 2.0, 1.732_050_807_568_877_2];

fn spin_x() -> Matrix4<Complex64> {
    let mut sx = Matrix4::<Complex64>::zeros();
    for (i, c) in RAISING.iter().enumerate() {
        sx[(i, i + 1)] = Complex64::new(c / 2.0, 0.0);
        sx[(i + 1, i)] = Complex64::new(c / 2.0, 0.0);
    }
    sx
}

pub fn build_hamiltonian(params: &SpinParams, field: &FieldVector) -> Result<Hamiltonian4, SpinError> {
    params.validate()?;
    field.validate()?;
    let d = params.zfs_hz / 2.0;
    let gamma = params.gamma();
    let mut h = Matrix4::<Complex64>::zeros();
    for (i, m) in SpinProjection::BASIS.iter().enumerate() {
        let m = m.value();
        h[(i, i)] = Complex64::new(d * (m * m - 1.25) + gamma * field.bz * m, 0.0);
    }
    // <m+1|H|m> = gamma * c / 2 * (B_x - i B_y)
    let transverse = Complex64::new(field.bx, -field.by) * gamma;
    for (i, c) in RAISING.iter().enumerate() {
        let elem = transverse * (c / 2.0);
        h[(i, i + 1)] = elem;
        h[(i + 1, i)] = elem.conj();
    }
    Ok(Hamiltonian4 { matrix: h })
}

/// Full eigen-decomposition, levels sorted ascending.
pub fn eigenlevels(h: &Hamiltonian4) -> Result<LevelSet, SpinError> {
    let matrix = *h.matrix();
    let norm = h.norm();
    let eig = SymmetricEigen::try_new(matrix, f64::EPSILON, 10_000).ok_or(
        SpinError::ConvergenceFailure {
            residual: f64::INFINITY,
        },
    )?;

    let mut order: [usize; 4] = [0, 1, 2, 3];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut energies_hz = [0.0; 4];
    let mut vectors = [[Complex64::new(0.0, 0.0); 4]; 4];
    let mut residual: f64 = 0.0;
    for (k, &col) in order.iter().enumerate() {
        let e = eig.eigenvalues[col];
        let v: Vector4<Complex64> = eig.eigenvectors.column(col).into_owned();
        residual = residual.max((matrix * v - v * Complex64::new(e, 0.0)).norm());
        energies_hz[k] = e;
        for i in 0..4 {
            vectors[k][i] = v[i];
        }
    }
    if residual > 1e-8 * norm {
        return Err(SpinError::ConvergenceFailure { residual });
    }

    Ok(LevelSet {
        energies_hz,
        vectors,
        dominant_m: assign_labels(&vectors),
    })
}

/// Labels each level with a distinct basis state, maximizing the total
/// weight `sum_k |<m_k|level_k>|^2`. Ties keep the first permutation found.
fn assign_labels(vectors: &[[Complex64; 4]; 4]) -> [SpinProjection; 4] {
    let mut best = (f64::NEG_INFINITY, [0usize; 4]);
    for perm in (0..4).permutations(4) {
        let w: f64 = perm
            .iter()
            .enumerate()
            .map(|(k, &i)| vectors[k][i].norm_sqr())
            .sum();
        if w > best.0 + 1e-12 {
            best = (w, [perm[0], perm[1], perm[2], perm[3]]);
        }
    }
    best.1.map(|i| SpinProjection::BASIS[i])
}

// Matrix-basis pairs for each labeled family, given as (first, second).
const PAIRS: [(TransitionLabel, SpinProjection, SpinProjection); 5] = [
    (TransitionLabel::Nu1, SpinProjection::MINUS_1_2, SpinProjection::MINUS_3_2),
    (TransitionLabel::Nu2, SpinProjection::PLUS_1_2, SpinProjection::PLUS_3_2),
    (TransitionLabel::Dark, SpinProjection::PLUS_1_2, SpinProjection::MINUS_1_2),
    (TransitionLabel::M2Plus, SpinProjection::PLUS_3_2, SpinProjection::MINUS_1_2),
    (TransitionLabel::M2Minus, SpinProjection::MINUS_3_2, SpinProjection::PLUS_1_2),
];

/// Strongest `Δm = 1` coupling at B ∥ c, `|<3/2|S_x|1/2>|^2`.
const STRENGTH_NORM: f64 = 0.75;

/// All transitions of the requested classes, in a fixed order.
pub fn transitions(
    levels: &LevelSet,
    params: &SpinParams,
    classes: TransitionClasses,
) -> Vec<TransitionLine> {
    let sx = spin_x();
    let coupling = |a: usize, b: usize| -> f64 {
        let va = Vector4::from_iterator(levels.vectors[a].iter().copied());
        let vb = Vector4::from_iterator(levels.vectors[b].iter().copied());
        va.dotc(&(sx * vb)).norm_sqr() / STRENGTH_NORM
    };

    let mut lines = Vec::with_capacity(9);
    for (label, m_a, m_b) in PAIRS {
        let wanted = match label {
            TransitionLabel::Nu1 | TransitionLabel::Nu2 => classes.primary,
            TransitionLabel::Dark => classes.dark,
            _ => classes.double_quantum,
        };
        if !wanted {
            continue;
        }
        let a = levels.level_of(m_a);
        let b = levels.level_of(m_b);
        let (lower_m, upper_m) = figure_labels(label, m_a, m_b);
        let readout_weight = if label == TransitionLabel::Dark {
            params.dark_readout_weight
        } else {
            1.0
        };
        lines.push(TransitionLine {
            label,
            lower_m,
            upper_m,
            frequency_hz: (levels.energies_hz[a] - levels.energies_hz[b]).abs(),
            rel_strength: coupling(a, b),
            readout_weight,
        });
    }

    if classes.hyperfine && params.hyperfine_rel_amp > 0.0 {
        let parents: Vec<TransitionLine> = lines
            .iter()
            .filter(|l| {
                l.label == TransitionLabel::Nu2
                    || (classes.hyperfine_on_nu1 && l.label == TransitionLabel::Nu1)
            })
            .copied()
            .collect();
        for parent in parents {
            let (minus, plus) = match parent.label {
                TransitionLabel::Nu1 => (TransitionLabel::Nu1HfMinus, TransitionLabel::Nu1HfPlus),
                _ => (TransitionLabel::Nu2HfMinus, TransitionLabel::Nu2HfPlus),
            };
            for (label, sign) in [(minus, -1.0), (plus, 1.0)] {
                lines.push(TransitionLine {
                    label,
                    frequency_hz: (parent.frequency_hz + sign * params.hyperfine_offset_hz).max(0.0),
                    rel_strength: parent.rel_strength * params.hyperfine_rel_amp,
                    ..parent
                });
            }
        }
    }
    lines
}

/// Figure-convention `(lower, upper)` labels for a matrix-basis pair.
fn figure_labels(
    label: TransitionLabel,
    m_a: SpinProjection,
    m_b: SpinProjection,
) -> (SpinProjection, SpinProjection) {
    match label {
        // Mirror symmetric; the published label is -1/2 -> +1/2.
        TransitionLabel::Dark => (SpinProjection::MINUS_1_2, SpinProjection::PLUS_1_2),
        _ => {
            let (lo, hi) = if m_a.value().abs() < m_b.value().abs() {
                (m_a, m_b)
            } else {
                (m_b, m_a)
            };
            (lo.mirrored(), hi.mirrored())
        }
    }
}

/// Convenience wrapper: Hamiltonian, eigenlevels and transitions in one call.
pub fn lines_at(
    params: &SpinParams,
    field: &FieldVector,
    classes: TransitionClasses,
) -> Result<Vec<TransitionLine>, SpinError> {
    let h = build_hamiltonian(params, field)?;
    let levels = eigenlevels(&h)?;
    Ok(transitions(&levels, params, classes))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialFrequencies {
    pub nu1_hz: f64,
    pub nu2_hz: f64,
    pub dark_hz: f64,
}

/// Closed-form transition frequencies for a field along c (`bz >= 0`).
pub fn axial_frequencies(params: &SpinParams, bz: f64) -> AxialFrequencies {
    debug_assert!(bz >= 0.0, "axial_frequencies expects bz >= 0");
    let zeeman = params.gamma() * bz;
    AxialFrequencies {
        nu1_hz: (params.zfs_hz - zeeman).abs(),
        nu2_hz: params.zfs_hz + zeeman,
        dark_hz: zeeman,
    }
}

/// Axial field at which `nu1` crosses the dark transition, T.
pub fn level_crossing_field(params: &SpinParams) -> f64 {
    params.zfs_hz / (2.0 * params.gamma())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn find(lines: &[TransitionLine], label: TransitionLabel) -> TransitionLine {
        *lines.iter().find(|l| l.label == label).unwrap()
    }

    #[test]
    fn gyromagnetic_values() {
        // mu_B/h = 13.996245 GHz/T
        assert!(rel(gyromagnetic_ratio(2.0032), 2.80372e10) < 1e-5);
        assert!(rel(gyromagnetic_ratio(2.0), 2.79925e10) < 1e-5);
        assert_eq!(gyromagnetic_ratio(4.0), 2.0 * gyromagnetic_ratio(2.0));
    }

    #[test]
    fn zero_field_is_diagonal_with_kramers_pairs() {
        let p = SpinParams::default();
        let h = build_hamiltonian(&p, &FieldVector::default()).unwrap();
        assert!(h.is_diagonal());
        let diag: Vec<f64> = (0..4).map(|i| h.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![35e6, -35e6, -35e6, 35e6]);
        let levels = eigenlevels(&h).unwrap();
        assert_eq!(levels.energies_hz[0], levels.energies_hz[1]);
        assert_eq!(levels.energies_hz[2], levels.energies_hz[3]);
        assert_eq!(levels.energies_hz[2] - levels.energies_hz[0], 70e6);
    }

    #[test]
    fn axial_field_shifts_diagonal() {
        let p = SpinParams::default();
        let gamma = p.gamma();
        let h = build_hamiltonian(&p, &FieldVector::axial(1e-3).unwrap()).unwrap();
        assert!(h.is_diagonal());
        let base = [35e6, -35e6, -35e6, 35e6];
        for (i, m) in SpinProjection::BASIS.iter().enumerate() {
            let expected = base[i] + gamma * 1e-3 * m.value();
            assert!((h.matrix()[(i, i)].re - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn transverse_field_couplings() {
        let p = SpinParams::default();
        let gb = p.gamma() * 1e-3;
        let h = build_hamiltonian(&p, &FieldVector::new(1e-3, 0.0, 0.0).unwrap()).unwrap();
        let expected = [3f64.sqrt() / 2.0, 1.0, 3f64.sqrt() / 2.0];
        for i in 0..3 {
            assert!(rel(h.matrix()[(i, i + 1)].norm(), gb * expected[i]) < 1e-12);
        }
        assert!(h.is_hermitian(HERMITIAN_TOL));
    }

    #[test]
    fn field_guard() {
        assert!(matches!(
            FieldVector::new(0.0, 0.0, 0.2),
            Err(SpinError::FieldOutOfRange { .. })
        ));
        assert_eq!(FieldVector::new(f64::NAN, 0.0, 0.0), Err(SpinError::NonFiniteField));
    }

    #[test]
    fn diagonal_input_gives_identity_vectors() {
        let mut m = Matrix4::<Complex64>::zeros();
        for (i, v) in [3.0, -1.0, 2.0, 0.5].iter().enumerate() {
            m[(i, i)] = Complex64::new(*v, 0.0);
        }
        let levels = eigenlevels(&Hamiltonian4::from_matrix(m).unwrap()).unwrap();
        assert_eq!(levels.energies_hz, [-1.0, 0.5, 2.0, 3.0]);
        let order = [1usize, 3, 2, 0];
        for (k, &i) in order.iter().enumerate() {
            assert!((levels.vectors[k][i].norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_millitesla_axial_lines() {
        let p = SpinParams::default();
        let lines = lines_at(&p, &FieldVector::axial(1e-3).unwrap(), TransitionClasses::ALL).unwrap();
        let nu1 = find(&lines, TransitionLabel::Nu1);
        let nu2 = find(&lines, TransitionLabel::Nu2);
        let dark = find(&lines, TransitionLabel::Dark);
        assert!((nu1.frequency_hz - 41.963e6).abs() < 5e3);
        assert!((nu2.frequency_hz - 98.037e6).abs() < 5e3);
        assert!((dark.frequency_hz - 28.037e6).abs() < 5e3);
        assert_eq!((nu1.lower_m, nu1.upper_m), (SpinProjection::PLUS_1_2, SpinProjection::PLUS_3_2));
        assert_eq!((nu2.lower_m, nu2.upper_m), (SpinProjection::MINUS_1_2, SpinProjection::MINUS_3_2));
        assert!((nu1.rel_strength - 1.0).abs() < 1e-12);
        assert!((nu2.rel_strength - 1.0).abs() < 1e-12);
        // |<1/2|S_x|-1/2>|^2 = 1, normalized by 3/4
        assert!((dark.rel_strength - 4.0 / 3.0).abs() < 1e-12);
        assert_eq!(find(&lines, TransitionLabel::M2Plus).rel_strength, 0.0);
        let hf: Vec<_> = lines.iter().filter(|l| l.label.is_satellite()).collect();
        assert_eq!(hf.len(), 2);
        assert!((hf[0].frequency_hz - (nu2.frequency_hz - 5e6)).abs() < 1e-6);
        assert!((hf[1].frequency_hz - (nu2.frequency_hz + 5e6)).abs() < 1e-6);
        assert!((hf[0].rel_strength - 0.05).abs() < 1e-12);
    }

    #[test]
    fn zero_field_degenerate_lines() {
        let p = SpinParams::default();
        let lines = lines_at(&p, &FieldVector::default(), TransitionClasses::PRIMARY_ONLY).unwrap();
        assert_eq!(lines.len(), 2);
        for l in lines {
            assert_eq!(l.frequency_hz, 70e6);
        }
    }

    #[test]
    fn crossing_field() {
        let p = SpinParams::default();
        assert!((level_crossing_field(&p) - 1.2483e-3).abs() < 1e-7);
        let g2 = SpinParams { g_factor: 2.0, ..p };
        assert!((level_crossing_field(&g2) - 1.2503e-3).abs() < 1e-7);
        let doubled = SpinParams { zfs_hz: 140e6, ..p };
        assert!(rel(level_crossing_field(&doubled), 2.0 * level_crossing_field(&p)) < 1e-15);
        let f = axial_frequencies(&p, level_crossing_field(&p));
        assert!(rel(f.nu1_hz, 35e6) < 1e-12);
        assert!(rel(f.dark_hz, 35e6) < 1e-12);
    }

    #[test]
    fn invalid_params_rejected() {
        let p = SpinParams { g_factor: 0.0, ..Default::default() };
        assert!(build_hamiltonian(&p, &FieldVector::default()).is_err());
        let p = SpinParams { hyperfine_rel_amp: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn tilt_turns_on_double_quantum_lines() {
        let p = SpinParams::default();
        let mut last = -1.0;
        for k in 0..6 {
            let theta = f64::from(k) * 0.05;
            let f = FieldVector::new(2e-3 * theta.sin(), 0.0, 2e-3 * theta.cos()).unwrap();
            let lines = lines_at(&p, &f, TransitionClasses::ALL).unwrap();
            let s = find(&lines, TransitionLabel::M2Plus).rel_strength;
            if k == 0 {
                assert_eq!(s, 0.0);
            } else {
                assert!(s > last);
            }
            last = s;
        }
    }

    #[test]
    fn projection_display() {
        assert_eq!(SpinProjection::PLUS_3_2.to_string(), "+3/2");
        assert_eq!(SpinProjection::MINUS_1_2.to_string(), "-1/2");
    }
}
