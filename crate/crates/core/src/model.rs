//! Problem instances, the real-valued reformulation, random instance
//! generation, feasibility checks and the JSON instance format.
//!
//! An instance asks for a transmit vector `x` with as few nonzero entries as
//! possible such that every nonzero entry has unit modulus and the received
//! vector `Hᵀx` is within Euclidean distance `tol` of the desired vector `s`.
//! The squared budget `tol²` is what the real-valued quadratic constraint
//! compares against; [`ProblemInstance::delta`] returns it.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magnitude of the QPSK desired symbol used by the generated ensembles.
pub const QPSK_MAGNITUDE: f64 = 1.414;

/// Default modulus tolerance for feasibility checks.
pub const DEFAULT_EPS: f64 = 1e-5;

/// A complex instance: channel `H` (N×K, row `n` is the channel from antenna
/// `n` to all users), desired receive vector `s` and error bound `tol`.
///
/// The modulus of active entries is fixed to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    n_antennas: usize,
    n_users: usize,
    /// Row-major N×K.
    channel: Vec<Complex64>,
    desired: Vec<Complex64>,
    tol: f64,
}

impl ProblemInstance {
    /// `channel` is row-major with `n_antennas` rows of `n_users` entries.
    pub fn new(
        n_antennas: usize,
        n_users: usize,
        channel: Vec<Complex64>,
        desired: Vec<Complex64>,
        tol: f64,
    ) -> Result<Self> {
        if n_antennas == 0 || n_users == 0 {
            return Err(Error::InvalidInstance(format!(
                "need at least one antenna and one user, got N={n_antennas}, K={n_users}"
            )));
        }
        if channel.len() != n_antennas * n_users {
            return Err(Error::DimensionMismatch {
                what: "channel".into(),
                expected: n_antennas * n_users,
                found: channel.len(),
            });
        }
        if desired.len() != n_users {
            return Err(Error::DimensionMismatch {
                what: "desired".into(),
                expected: n_users,
                found: desired.len(),
            });
        }
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::InvalidInstance(format!("tolerance must be finite and >= 0, got {tol}")));
        }
        if channel.iter().chain(&desired).any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::InvalidInstance("non-finite channel or desired entry".into()));
        }
        for k in 0..n_users {
            if (0..n_antennas).all(|n| channel[n * n_users + k] == Complex64::new(0.0, 0.0)) {
                return Err(Error::InvalidInstance(format!("user {k} has an all-zero channel")));
            }
        }
        Ok(Self { n_antennas, n_users, channel, desired, tol })
    }

    pub fn n_antennas(&self) -> usize {
        self.n_antennas
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    /// Euclidean error bound on `‖s − Hᵀx‖₂`.
    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Squared error budget `tol²`.
    pub fn delta(&self) -> f64 {
        self.tol * self.tol
    }

    /// Active-entry modulus; always 1.
    pub fn modulus(&self) -> f64 {
        1.0
    }

    /// Channel coefficient between antenna `n` and user `k`.
    #[inline]
    pub fn h(&self, n: usize, k: usize) -> Complex64 {
        self.channel[n * self.n_users + k]
    }

    /// Row `n` of `H`: antenna `n`'s channel to every user.
    #[inline]
    pub fn antenna_row(&self, n: usize) -> &[Complex64] {
        &self.channel[n * self.n_users..(n + 1) * self.n_users]
    }

    pub fn desired(&self) -> &[Complex64] {
        &self.desired
    }

    pub fn desired_norm(&self) -> f64 {
        self.desired.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Same channel and desired vector with a different error bound.
    pub fn with_tol(&self, tol: f64) -> Result<Self> {
        Self::new(self.n_antennas, self.n_users, self.channel.clone(), self.desired.clone(), tol)
    }

    /// `Hᵀx`.
    pub fn receive(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.n_antennas {
            return Err(Error::DimensionMismatch {
                what: "transmit vector".into(),
                expected: self.n_antennas,
                found: x.len(),
            });
        }
        let mut y = vec![Complex64::new(0.0, 0.0); self.n_users];
        for (n, xn) in x.iter().enumerate() {
            if *xn == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (yk, h) in y.iter_mut().zip(self.antenna_row(n)) {
                *yk += h * xn;
            }
        }
        Ok(y)
    }

    /// `‖s − Hᵀx‖₂`.
    pub fn residual(&self, x: &[Complex64]) -> Result<f64> {
        let y = self.receive(x)?;
        Ok(self.desired.iter().zip(&y).map(|(s, y)| (s - y).norm_sqr()).sum::<f64>().sqrt())
    }

    pub fn to_real(&self) -> RealInstance {
        RealInstance::from_complex(self)
    }
}

/// Real-valued coefficient blocks of an instance: `Re H`, `Im H`, `Re s`,
/// `Im s` and the squared budget `delta`.
///
/// With `x = w + i·z`, user `k` receives
/// `(Re h_kᵀw − Im h_kᵀz) + i·(Re h_kᵀz + Im h_kᵀw)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealInstance {
    pub n_antennas: usize,
    pub n_users: usize,
    /// Row-major N×K.
    pub re_h: Vec<f64>,
    pub im_h: Vec<f64>,
    pub re_s: Vec<f64>,
    pub im_s: Vec<f64>,
    /// Euclidean bound, kept so the complex instance can be rebuilt exactly.
    pub tol: f64,
    pub delta: f64,
}

impl RealInstance {
    pub fn from_complex(inst: &ProblemInstance) -> Self {
        Self {
            n_antennas: inst.n_antennas,
            n_users: inst.n_users,
            re_h: inst.channel.iter().map(|c| c.re).collect(),
            im_h: inst.channel.iter().map(|c| c.im).collect(),
            re_s: inst.desired.iter().map(|c| c.re).collect(),
            im_s: inst.desired.iter().map(|c| c.im).collect(),
            tol: inst.tol,
            delta: inst.delta(),
        }
    }

    /// Rebuilds the complex instance. Exact inverse of [`RealInstance::from_complex`].
    pub fn to_complex(&self) -> Result<ProblemInstance> {
        let channel = self.re_h.iter().zip(&self.im_h).map(|(&re, &im)| Complex64::new(re, im)).collect();
        let desired = self.re_s.iter().zip(&self.im_s).map(|(&re, &im)| Complex64::new(re, im)).collect();
        ProblemInstance::new(self.n_antennas, self.n_users, channel, desired, self.tol)
    }

    /// Per-user real and imaginary residual parts at `(w, z)`.
    fn user_residuals(&self, w: &[f64], z: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let k_users = self.n_users;
        let mut re_r = self.re_s.clone();
        let mut im_r = self.im_s.clone();
        for n in 0..self.n_antennas {
            let (wn, zn) = (w[n], z[n]);
            if wn == 0.0 && zn == 0.0 {
                continue;
            }
            for k in 0..k_users {
                let hr = self.re_h[n * k_users + k];
                let hi = self.im_h[n * k_users + k];
                re_r[k] -= hr * wn - hi * zn;
                im_r[k] -= hr * zn + hi * wn;
            }
        }
        (re_r, im_r)
    }

    /// Left side of the real quadratic error constraint: the squared residual.
    pub fn error_sq(&self, w: &[f64], z: &[f64]) -> f64 {
        let (re_r, im_r) = self.user_residuals(w, z);
        re_r.iter().zip(&im_r).map(|(a, b)| a * a + b * b).sum()
    }

    /// `error_sq(w, z) − delta` together with its gradient with respect to
    /// `w` and `z`.
    pub fn error_constraint(&self, w: &[f64], z: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
        let k_users = self.n_users;
        let (re_r, im_r) = self.user_residuals(w, z);
        let value = re_r.iter().zip(&im_r).map(|(a, b)| a * a + b * b).sum::<f64>() - self.delta;
        let mut gw = vec![0.0; self.n_antennas];
        let mut gz = vec![0.0; self.n_antennas];
        for n in 0..self.n_antennas {
            let (mut sw, mut sz) = (0.0, 0.0);
            for k in 0..k_users {
                let hr = self.re_h[n * k_users + k];
                let hi = self.im_h[n * k_users + k];
                // d(re_r)/dw = -hr, d(im_r)/dw = -hi; d(re_r)/dz = hi, d(im_r)/dz = -hr
                sw += -2.0 * (re_r[k] * hr + im_r[k] * hi);
                sz += 2.0 * (re_r[k] * hi - im_r[k] * hr);
            }
            gw[n] = sw;
            gz[n] = sz;
        }
        (value, gw, gz)
    }
}

/// A point of the mixed-binary reformulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSolution {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub b: Vec<bool>,
}

impl CandidateSolution {
    /// Active entries are those with nonzero `x_n`.
    pub fn from_complex(x: &[Complex64]) -> Self {
        Self {
            w: x.iter().map(|c| c.re).collect(),
            z: x.iter().map(|c| c.im).collect(),
            b: x.iter().map(|c| *c != Complex64::new(0.0, 0.0)).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.b.iter().filter(|&&b| b).count()
    }

    pub fn to_complex(&self) -> ComplexSolution {
        ComplexSolution {
            x: self.w.iter().zip(&self.z).map(|(&re, &im)| Complex64::new(re, im)).collect(),
        }
    }
}

/// A complex transmit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexSolution {
    pub x: Vec<Complex64>,
}

impl ComplexSolution {
    /// Number of nonzero entries.
    pub fn l0(&self) -> usize {
        self.x.iter().filter(|c| **c != Complex64::new(0.0, 0.0)).count()
    }

    /// Every nonzero entry has modulus in `[1 − eps, 1 + eps]`.
    pub fn is_constant_modulus(&self, eps: f64) -> bool {
        self.x.iter().all(|c| {
            let m = c.norm();
            m == 0.0 || (m >= 1.0 - eps && m <= 1.0 + eps)
        })
    }
}

/// ε-feasibility of a candidate: squared residual within `delta·(1+eps)`,
/// and each entry either inactive and zero or active with squared modulus in
/// `[1 − eps, 1 + eps]`.
pub fn is_feasible(inst: &ProblemInstance, sol: &CandidateSolution, eps: f64) -> bool {
    let n = inst.n_antennas();
    if sol.w.len() != n || sol.z.len() != n || sol.b.len() != n {
        return false;
    }
    for i in 0..n {
        let m2 = sol.w[i] * sol.w[i] + sol.z[i] * sol.z[i];
        if sol.b[i] {
            if m2 < 1.0 - eps || m2 > 1.0 + eps {
                return false;
            }
        } else if sol.w[i] != 0.0 || sol.z[i] != 0.0 {
            return false;
        }
    }
    let real = inst.to_real();
    real.error_sq(&sol.w, &sol.z) <= inst.delta() * (1.0 + eps)
}

/// Named error-bound levels of the benchmark ensembles, expressed as a
/// fraction of the symbol magnitude `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TolPreset {
    /// `0.1q`
    Tenth,
    /// `0.2q`
    Fifth,
}

impl TolPreset {
    pub const ALL: [TolPreset; 2] = [TolPreset::Tenth, TolPreset::Fifth];

    pub fn label(self) -> &'static str {
        match self {
            TolPreset::Tenth => "0.1q",
            TolPreset::Fifth => "0.2q",
        }
    }

    pub fn fraction(self) -> f64 {
        match self {
            TolPreset::Tenth => 0.1,
            TolPreset::Fifth => 0.2,
        }
    }

    /// Euclidean error bound for this preset under `mapping`.
    pub fn tol(self, mapping: PresetMapping) -> f64 {
        mapping.tol(self.fraction() * QPSK_MAGNITUDE)
    }
}

impl std::str::FromStr for TolPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0.1q" => Ok(TolPreset::Tenth),
            "0.2q" => Ok(TolPreset::Fifth),
            other => Err(Error::InvalidInstance(format!("unknown tolerance preset '{other}'"))),
        }
    }
}

/// How a preset label value `v` (e.g. `0.1·q`) becomes the Euclidean bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PresetMapping {
    /// The label is the squared bound: `tol = √v`.
    SquaredBound,
    /// The label is the bound itself: `tol = v`.
    #[default]
    Bound,
}

impl PresetMapping {
    pub fn tol(self, label_value: f64) -> f64 {
        match self {
            PresetMapping::SquaredBound => label_value.sqrt(),
            PresetMapping::Bound => label_value,
        }
    }
}

impl std::str::FromStr for PresetMapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(PresetMapping::SquaredBound),
            "bound" => Ok(PresetMapping::Bound),
            other => Err(Error::InvalidInstance(format!("unknown preset mapping '{other}'"))),
        }
    }
}

/// Draws a Rayleigh-fading single-group multicast instance.
///
/// Channel entries are i.i.d. `CN(0, 1)` (variance split equally between the
/// real and imaginary parts); the desired vector is `s·1` with `s` one of the
/// four QPSK symbols `q·e^{iπ(2m+1)/4}`.
pub fn generate_instance(n: usize, k: usize, tol: f64, seed: u64) -> Result<ProblemInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let channel: Vec<Complex64> = (0..n * k)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re * scale, im * scale)
        })
        .collect();
    let m: u32 = rng.random_range(0..4);
    let phase = std::f64::consts::PI * f64::from(2 * m + 1) / 4.0;
    let symbol = Complex64::from_polar(QPSK_MAGNITUDE, phase);
    ProblemInstance::new(n, k, channel, vec![symbol; k], tol)
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    n: usize,
    k: usize,
    tol: f64,
    channel: Vec<Vec<[f64; 2]>>,
    desired: Vec<[f64; 2]>,
}

/// Serializes to the JSON instance format.
pub fn instance_to_json(inst: &ProblemInstance) -> String {
    let file = InstanceFile {
        n: inst.n_antennas,
        k: inst.n_users,
        tol: inst.tol,
        channel: (0..inst.n_antennas)
            .map(|n| inst.antenna_row(n).iter().map(|c| [c.re, c.im]).collect())
            .collect(),
        desired: inst.desired.iter().map(|c| [c.re, c.im]).collect(),
    };
    serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
}

/// Parses the JSON instance format, reporting the offending row or field on
/// dimension errors.
pub fn instance_from_json(text: &str) -> Result<ProblemInstance> {
    let file: InstanceFile = serde_json::from_str(text)
        .map_err(|e| Error::Parse { line: e.line(), column: e.column(), message: e.to_string() })?;
    if file.channel.len() != file.n {
        return Err(Error::DimensionMismatch { what: "channel rows".into(), expected: file.n, found: file.channel.len() });
    }
    if file.desired.len() != file.k {
        return Err(Error::DimensionMismatch { what: "desired".into(), expected: file.k, found: file.desired.len() });
    }
    let mut channel = Vec::with_capacity(file.n * file.k);
    for (row_idx, row) in file.channel.iter().enumerate() {
        if row.len() != file.k {
            return Err(Error::DimensionMismatch {
                what: format!("channel row {row_idx}"),
                expected: file.k,
                found: row.len(),
            });
        }
        channel.extend(row.iter().map(|[re, im]| Complex64::new(*re, *im)));
    }
    let desired = file.desired.iter().map(|[re, im]| Complex64::new(*re, *im)).collect();
    ProblemInstance::new(file.n, file.k, channel, desired, file.tol)
}

pub fn write_instance(inst: &ProblemInstance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance_to_json(inst))?;
    Ok(())
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<ProblemInstance> {
    instance_from_json(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_channel_real_residual_is_zero() {
        let inst = ProblemInstance::new(1, 1, vec![c(1.0, 0.0)], vec![c(1.0, 0.0)], 0.0).unwrap();
        let real = inst.to_real();
        assert_eq!(real.error_sq(&[1.0], &[0.0]), 0.0);
    }

    #[test]
    fn imaginary_channel_expansion() {
        let inst = ProblemInstance::new(1, 1, vec![c(0.0, 1.0)], vec![c(1.0, 0.0)], 0.0).unwrap();
        let real = inst.to_real();
        for &(w, z) in &[(0.3, -0.2), (1.0, 1.0), (-0.7, 0.4)] {
            let expected = (1.0 + z) * (1.0 + z) + w * w;
            assert!((real.error_sq(&[w], &[z]) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn residual_of_zero_vector_is_desired_norm() {
        let inst = generate_instance(5, 3, 0.3, 11).unwrap();
        let zero = vec![c(0.0, 0.0); 5];
        assert!((inst.residual(&zero).unwrap() - inst.desired_norm()).abs() < 1e-15);
    }

    #[test]
    fn residual_consistent_system_is_zero() {
        // s = Hᵀx for x = (1, i)
        let h = vec![c(1.0, 0.0), c(0.5, 0.5), c(0.0, 2.0), c(1.0, -1.0)];
        let x = [c(1.0, 0.0), c(0.0, 1.0)];
        let s = vec![h[0] * x[0] + h[2] * x[1], h[1] * x[0] + h[3] * x[1]];
        let inst = ProblemInstance::new(2, 2, h, s, 0.0).unwrap();
        assert!(inst.residual(&x).unwrap() < 1e-15);
    }

    #[test]
    fn residual_hand_expansion_two_antennas() {
        // H rows (1,·) and (i,·), one user; x = (e^{iπ/3}, 1), s = 2.
        let inst = ProblemInstance::new(2, 1, vec![c(1.0, 0.0), c(0.0, 1.0)], vec![c(2.0, 0.0)], 0.0).unwrap();
        let x = [Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_3), c(1.0, 0.0)];
        // Hᵀx = cos60 + i sin60 + i = 0.5 + i(√3/2 + 1)
        let re = 2.0 - 0.5;
        let im = -(3f64.sqrt() / 2.0 + 1.0);
        let expected = (re * re + im * im).sqrt();
        assert!((inst.residual(&x).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn residual_dimension_mismatch() {
        let inst = generate_instance(3, 2, 0.3, 1).unwrap();
        assert!(matches!(inst.residual(&[c(1.0, 0.0)]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_solution_feasible_when_budget_covers_desired() {
        let inst = generate_instance(4, 2, 0.3, 5).unwrap();
        let inst = inst.with_tol(inst.desired_norm()).unwrap();
        let sol = CandidateSolution { w: vec![0.0; 4], z: vec![0.0; 4], b: vec![false; 4] };
        assert!(is_feasible(&inst, &sol, DEFAULT_EPS));
    }

    #[test]
    fn violated_modulus_is_infeasible() {
        let inst = generate_instance(2, 1, 100.0, 5).unwrap();
        let half = 0.5f64.sqrt();
        let sol = CandidateSolution { w: vec![half, 0.0], z: vec![0.0, 0.0], b: vec![true, false] };
        assert!(!is_feasible(&inst, &sol, DEFAULT_EPS));
    }

    #[test]
    fn generation_is_deterministic_and_multicast() {
        let a = generate_instance(8, 3, 0.4, 42).unwrap();
        let b = generate_instance(8, 3, 0.4, 42).unwrap();
        assert_eq!(a, b);
        let s0 = a.desired()[0];
        for s in a.desired() {
            assert_eq!(*s, s0);
            assert!((s.norm() - QPSK_MAGNITUDE).abs() < 1e-12);
        }
        let d = generate_instance(8, 3, 0.4, 43).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn channel_power_is_unit() {
        let inst = generate_instance(100, 100, 0.1, 7).unwrap();
        let mean: f64 = (0..100).flat_map(|n| (0..100).map(move |k| (n, k))).map(|(n, k)| inst.h(n, k).norm_sqr()).sum::<f64>()
            / 1e4;
        assert!((mean - 1.0).abs() < 0.05, "mean |h|² = {mean}");
    }

    #[test]
    fn rejects_zero_user_channel() {
        let err = ProblemInstance::new(2, 2, vec![c(1.0, 0.0), c(0.0, 0.0), c(1.0, 1.0), c(0.0, 0.0)], vec![c(1.0, 0.0); 2], 0.1);
        assert!(matches!(err, Err(Error::InvalidInstance(_))));
    }

    #[test]
    fn json_round_trip() {
        let inst = generate_instance(6, 3, fifth_tol(), 99).unwrap();
        let text = instance_to_json(&inst);
        assert_eq!(instance_from_json(&text).unwrap(), inst);
    }

    fn fifth_tol() -> f64 {
        TolPreset::Fifth.tol(PresetMapping::SquaredBound)
    }

    #[test]
    fn json_short_row_is_dimension_error() {
        let text = r#"{"n": 2, "k": 2, "tol": 0.5,
            "channel": [[[1.0, 0.0], [0.0, 1.0]], [[2.0, 0.5]]],
            "desired": [[1.0, 1.0], [1.0, 1.0]]}"#;
        match instance_from_json(text) {
            Err(Error::DimensionMismatch { what, expected, found }) => {
                assert_eq!(what, "channel row 1");
                assert_eq!((expected, found), (2, 1));
            }
            other => panic!("expected dimension error, got {other:?}"),
        }
    }

    #[test]
    fn json_parse_error_has_location() {
        let text = "{\"n\": 2,\n \"k\": oops}";
        match instance_from_json(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn json_hand_written_two_by_one() {
        let text = r#"{"n": 2, "k": 1, "tol": 0.25,
            "channel": [[[1.0, -0.5]], [[0.0, 2.0]]],
            "desired": [[1.0, 1.0]]}"#;
        let inst = instance_from_json(text).unwrap();
        let expected = ProblemInstance::new(2, 1, vec![c(1.0, -0.5), c(0.0, 2.0)], vec![c(1.0, 1.0)], 0.25).unwrap();
        assert_eq!(inst, expected);
    }
}
