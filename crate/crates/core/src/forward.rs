//! Forward evaluation: Dirichlet series, 1-D fractional heat solutions,
//! boundary fluxes, tensor-product solutions, and noisy sampling.
//!
//! Normalization: an initial datum on `(0, mu·π)` is `f(x) = Σ f̂_k sin(kx/mu)`
//! with `f̂_k = (2/(mu·π)) ∫ f sin(kx/mu)`, so mode maps round-trip exactly.
//! The fractional evolution on that interval uses eigenvalues `(k/mu)^{2α}`.

use rug::Float;
use serde_json::{json, Value};
use std::fmt;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::precision::{to_decimal_string, Prec};
use crate::quadrature::MonotoneCubic;
use crate::sequences::{CoefficientSequence, EigenvalueSequence, SequenceNormKind};

/// Anything that can evaluate a time series `t ↦ F(t)` at working precision.
pub trait SeriesEval: Sync {
    fn value(&self, t: &Float) -> Float;
}

/// Exact finite Dirichlet sum `Σ a_k e^{-λ_k t}`.
pub struct ExactSeries<'a> {
    pub coeffs: &'a CoefficientSequence,
    pub exponents: &'a EigenvalueSequence,
    pub prec: Prec,
}

impl SeriesEval for ExactSeries<'_> {
    fn value(&self, t: &Float) -> Float {
        dirichlet_sum(self.coeffs, self.exponents, t, self.prec)
    }
}

/// A sampled series evaluated between time stamps by monotone cubic
/// interpolation.
pub struct SampledSeries {
    interp: MonotoneCubic,
}

impl SeriesEval for SampledSeries {
    fn value(&self, t: &Float) -> Float {
        self.interp.eval(t)
    }
}

/// Wraps an evaluator with deterministic sup-norm noise: a fixed bounded
/// perturbation `|n(t)| ≤ ε` that is a pure function of `(seed, t)`, so the
/// perturbed series is a legitimate fixed function queryable anywhere.
pub struct NoisySeries<'a> {
    pub inner: &'a dyn SeriesEval,
    pub epsilon: f64,
    pub seed: u64,
    pub prec: Prec,
}

impl SeriesEval for NoisySeries<'_> {
    fn value(&self, t: &Float) -> Float {
        let u = hash_unit(self.seed, t.to_f64().to_bits());
        let noise = self.prec.from_f64((2.0 * u - 1.0) * self.epsilon);
        self.inner.value(t) + noise
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_unit(seed: u64, payload: u64) -> f64 {
    (splitmix64(seed ^ splitmix64(payload)) >> 11) as f64 / (1u64 << 53) as f64
}

fn dirichlet_sum(
    a: &CoefficientSequence,
    seq: &EigenvalueSequence,
    t: &Float,
    prec: Prec,
) -> Float {
    let bits = prec.bits();
    let mut sum = prec.zero();
    for (i, coeff) in a.entries().iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let exponent = Float::with_val(bits, seq.value(i + 1) * t);
        sum += coeff * (-exponent).exp();
    }
    sum
}

/// `F_a(t) = Σ a_k e^{-λ_k t}` for `t ≥ 0`.
pub fn eval_dirichlet(
    a: &CoefficientSequence,
    seq: &EigenvalueSequence,
    t: &Float,
    prec: Prec,
) -> Result<Float> {
    if *t < 0f64 {
        return Err(Error::Domain(format!(
            "Dirichlet series evaluated at negative time {}",
            t.to_f64()
        )));
    }
    if a.support() > seq.len() {
        return Err(Error::DimensionMismatch {
            expected: a.support(),
            got: seq.len(),
        });
    }
    Ok(dirichlet_sum(a, seq, t, prec))
}

/// Sobolev-ball metadata `(θ, m)` declaring membership in `m·B_{H^θ}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Regularity {
    pub theta: f64,
    pub m: f64,
}

/// Initial datum given by its sine coefficients on `(0, mu·π)`.
#[derive(Clone, Debug)]
pub struct InitialDatum {
    coeffs: CoefficientSequence,
    domain_scale: f64,
    regularity: Option<Regularity>,
}

impl InitialDatum {
    pub fn new(coeffs: CoefficientSequence, domain_scale: f64) -> Result<Self> {
        if domain_scale <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "domain scale must be positive, got {domain_scale}"
            )));
        }
        Ok(Self {
            coeffs,
            domain_scale,
            regularity: None,
        })
    }

    /// Attaches `(θ, m)` metadata; the stored support must already satisfy
    /// the declared ball inequality.
    pub fn with_regularity(mut self, reg: Regularity) -> Result<Self> {
        if reg.theta < 0.0 || reg.m <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "regularity requires theta >= 0 and m > 0, got {reg:?}"
            )));
        }
        let norm = if reg.theta == 0.0 {
            self.coeffs.norm(SequenceNormKind::L2)?
        } else {
            self.coeffs.norm(SequenceNormKind::HTheta(reg.theta))?
        };
        // Tolerate roundoff at the ball boundary.
        let slack = self.coeffs.prec().from_f64(reg.m * (1.0 + 1e-12));
        if norm > slack {
            return Err(Error::InvalidParameter(format!(
                "declared ball m={} violated: ‖f̂‖_{{h^{}}} = {}",
                reg.m,
                reg.theta,
                norm.to_f64()
            )));
        }
        self.regularity = Some(reg);
        Ok(self)
    }

    pub fn coeffs(&self) -> &CoefficientSequence {
        &self.coeffs
    }

    pub fn domain_scale(&self) -> f64 {
        self.domain_scale
    }

    pub fn regularity(&self) -> Option<Regularity> {
        self.regularity
    }

    /// The exponent sequence `(k/mu)^{2α}` driving this datum's evolution.
    pub fn exponents(&self, alpha: f64, count: usize, prec: Prec) -> Result<EigenvalueSequence> {
        EigenvalueSequence::power(alpha, self.domain_scale, count, prec)
    }

    /// `‖f‖_{L²(0, mu·π)} = sqrt(mu·π/2)·‖f̂‖_{ℓ²}`.
    pub fn l2_norm(&self, prec: Prec) -> Float {
        let half_len = prec.from_f64(self.domain_scale) * prec.pi() / 2u32;
        let l2 = self.coeffs.norm(SequenceNormKind::L2).expect("l2 norm");
        half_len.sqrt() * l2
    }
}

/// Tensor-product initial datum `f = f_1 ⊗ … ⊗ f_d`.
#[derive(Clone, Debug)]
pub struct TensorDatum {
    factors: Vec<InitialDatum>,
    /// Non-resonance of the scales `(mu_i)` is declared, not verified; it is
    /// undecidable numerically.
    pub non_resonant: bool,
}

impl TensorDatum {
    pub fn new(factors: Vec<InitialDatum>, non_resonant: bool) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::EmptyInput("tensor datum needs at least one factor"));
        }
        Ok(Self {
            factors,
            non_resonant,
        })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[InitialDatum] {
        &self.factors
    }

    /// `‖f‖_{L²(Ω)} = ∏ ‖f_i‖_{L²(0, mu_i π)}`.
    pub fn l2_norm(&self, prec: Prec) -> Float {
        let mut out = prec.one();
        for f in &self.factors {
            out *= f.l2_norm(prec);
        }
        out
    }
}

/// Point value of the fractional heat solution,
/// `u_f^α(x0, t) = Σ f̂_k e^{-(k/mu)^{2α} t} sin(k·x0/mu)`.
pub fn heat_point(
    f: &InitialDatum,
    alpha: f64,
    x0: &Float,
    t: &Float,
    prec: Prec,
) -> Result<Float> {
    if *t < 0f64 {
        return Err(Error::Domain(format!(
            "heat solution evaluated at negative time {}",
            t.to_f64()
        )));
    }
    let bits = prec.bits();
    let mu = prec.from_f64(f.domain_scale);
    let right = Float::with_val(bits, &mu * prec.pi());
    if !(*x0 > 0f64 && *x0 < right) {
        return Err(Error::Domain(format!(
            "sensor location {} outside (0, {})",
            x0.to_f64(),
            right.to_f64()
        )));
    }
    let support = f.coeffs.support();
    if support == 0 {
        return Ok(prec.zero());
    }
    let seq = f.exponents(alpha, support, prec)?;
    let mut sum = prec.zero();
    for (i, coeff) in f.coeffs.entries().iter().enumerate() {
        if coeff.is_zero() {
            continue;
        }
        let k = i + 1;
        let phase = Float::with_val(bits, x0 / &mu) * prec.from_usize(k);
        let decay = (-Float::with_val(bits, seq.value(k) * t)).exp();
        sum += coeff * decay * phase.sin();
    }
    Ok(sum)
}

/// Boundary flux `∂_x u_f^α(0, t) = Σ (k/mu) f̂_k e^{-(k/mu)^{2α} t}`; only
/// defined for `t > 0` since the series may diverge at `t = 0` for rough data.
pub fn boundary_flux(f: &InitialDatum, alpha: f64, t: &Float, prec: Prec) -> Result<Float> {
    if *t <= 0f64 {
        return Err(Error::Domain(format!(
            "boundary flux requires t > 0, got {}",
            t.to_f64()
        )));
    }
    let support = f.coeffs.support();
    if support == 0 {
        return Ok(prec.zero());
    }
    let seq = f.exponents(alpha, support, prec)?;
    eval_dirichlet(&flux_coefficients(f, prec), &seq, t, prec)
}

/// The flux series coefficients `(k/mu)·f̂_k`.
pub fn flux_coefficients(f: &InitialDatum, prec: Prec) -> CoefficientSequence {
    let bits = prec.bits();
    let mu = prec.from_f64(f.domain_scale);
    let entries = f
        .coeffs
        .entries()
        .iter()
        .enumerate()
        .map(|(i, c)| Float::with_val(bits, c * prec.from_usize(i + 1)) / &mu)
        .collect();
    CoefficientSequence::from_entries(entries, prec)
}

/// Tensor solution value `u_f^α(x, t) = ∏_i u_{f_i}^α(x_i, t)`; the operator
/// is the tensor sum of per-axis fractional powers, which is exactly what
/// makes the product formula an identity.
pub fn tensor_eval(
    f: &TensorDatum,
    alpha: f64,
    x: &[Float],
    t: &Float,
    prec: Prec,
) -> Result<Float> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch {
            expected: f.dim(),
            got: x.len(),
        });
    }
    let mut out = prec.one();
    for (factor, xi) in f.factors().iter().zip(x) {
        out *= heat_point(factor, alpha, xi, t, prec)?;
    }
    Ok(out)
}

/// Noise model for sampling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseNorm {
    /// Each sample perturbed uniformly within `[-ε, ε]`.
    Sup,
    /// Gaussian noise rescaled so its empirical quadrature `L²(0,T)` norm
    /// equals ε.
    L2,
}

impl fmt::Display for NoiseNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseNorm::Sup => write!(f, "sup"),
            NoiseNorm::L2 => write!(f, "L2"),
        }
    }
}

impl std::str::FromStr for NoiseNorm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" => Ok(NoiseNorm::Sup),
            "L2" | "l2" => Ok(NoiseNorm::L2),
            other => Err(Error::InvalidParameter(format!(
                "unknown noise norm `{other}`"
            ))),
        }
    }
}

/// Time-stamped noisy evaluations of a series on `[0, T]`.
#[derive(Clone, Debug)]
pub struct DirichletSample {
    times: Vec<Float>,
    values: Vec<Float>,
    pub noise_level: f64,
    pub noise_norm: NoiseNorm,
    pub horizon: f64,
    pub seed: Option<u64>,
}

impl DirichletSample {
    pub fn new(
        times: Vec<Float>,
        values: Vec<Float>,
        noise_level: f64,
        noise_norm: NoiseNorm,
        horizon: f64,
        seed: Option<u64>,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::EmptyInput("sample needs at least one time stamp"));
        }
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                got: values.len(),
            });
        }
        let horizon_f = Float::with_val(64, horizon);
        let mut prev: Option<&Float> = None;
        for (i, t) in times.iter().enumerate() {
            if *t < 0f64 || *t > horizon_f {
                return Err(Error::Domain(format!(
                    "sample time {} outside [0, {horizon}]",
                    t.to_f64()
                )));
            }
            if prev.is_some_and(|p| t <= p) {
                return Err(Error::NonMonotoneSequence { index: i + 1 });
            }
            prev = Some(t);
        }
        if noise_level < 0.0 {
            return Err(Error::InvalidParameter("noise level must be >= 0".into()));
        }
        Ok(Self {
            times,
            values,
            noise_level,
            noise_norm,
            horizon,
            seed,
        })
    }

    pub fn times(&self) -> &[Float] {
        &self.times
    }

    pub fn values(&self) -> &[Float] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest sample magnitude over times inside `window` (whole sample when
    /// `None`).
    pub fn sup_on(&self, window: Option<(&Float, &Float)>, prec: Prec) -> Float {
        let mut best = prec.zero();
        for (t, v) in self.times.iter().zip(&self.values) {
            if let Some((lo, hi)) = window {
                if t < lo || t > hi {
                    continue;
                }
            }
            let mag = Float::with_val(prec.bits(), v.abs_ref());
            if mag > best {
                best = mag;
            }
        }
        best
    }

    /// Largest spacing between consecutive sample times.
    pub fn max_spacing(&self, prec: Prec) -> Float {
        let mut best = prec.zero();
        for w in self.times.windows(2) {
            let gap = Float::with_val(prec.bits(), &w[1] - &w[0]);
            if gap > best {
                best = gap;
            }
        }
        best
    }

    /// Interpolating evaluator over the sampled window.
    pub fn evaluator(&self, prec: Prec) -> Result<SampledSeries> {
        Ok(SampledSeries {
            interp: MonotoneCubic::new(&self.times, &self.values, prec)?,
        })
    }

    /// Rough bound on the monotone-cubic interpolation error between the
    /// stored samples, measured from the data itself: the fourth-difference
    /// term everywhere (h⁴f''''), a third-difference term at the ends
    /// (boundary slopes are one order short), and a second-difference term
    /// wherever the shape limiter engages (interior extrema degrade to h²).
    /// Recovery treats this as part of the noise floor — structure finer
    /// than this is interpolation-made-up.
    pub fn interpolation_floor(&self, prec: Prec) -> Float {
        let v = &self.values;
        if v.len() < 5 {
            return prec.zero();
        }
        let bits = prec.bits();
        let mut best = prec.zero();
        let mut consider = |x: Float| {
            let mag = x.abs();
            if mag > best {
                best = mag;
            }
        };
        for w in v.windows(5) {
            let d4 = Float::with_val(bits, &w[0] - Float::with_val(bits, 4 * &w[1]))
                + Float::with_val(bits, 6 * &w[2])
                - Float::with_val(bits, 4 * &w[3])
                + &w[4];
            consider(d4 / 16u32);
        }
        let d3 = |a: &Float, b: &Float, c: &Float, d: &Float| {
            (Float::with_val(bits, a - Float::with_val(bits, 3 * b))
                + Float::with_val(bits, 3 * c)
                - d)
                / 12u32
        };
        let n = v.len();
        consider(d3(&v[0], &v[1], &v[2], &v[3]));
        consider(d3(&v[n - 4], &v[n - 3], &v[n - 2], &v[n - 1]));
        for w in v.windows(3) {
            let left = Float::with_val(bits, &w[1] - &w[0]);
            let right = Float::with_val(bits, &w[2] - &w[1]);
            if Float::with_val(bits, &left * &right) <= 0f64 {
                let d2 = Float::with_val(bits, &w[0] - Float::with_val(bits, 2 * &w[1])) + &w[2];
                consider(d2 / 8u32);
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            out.push_str(&to_decimal_string(t));
            out.push(',');
            out.push_str(&to_decimal_string(v));
            out.push('\n');
        }
        out
    }

    pub fn sidecar_json(&self) -> Value {
        json!({
            "epsilon": self.noise_level,
            "noise_norm": self.noise_norm.to_string(),
            "T": self.horizon,
            "seed": self.seed,
        })
    }

    /// Writes `<path>` as CSV and `<path>.meta.json` as the sidecar.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        let sidecar = path.with_extension("meta.json");
        std::fs::write(sidecar, serde_json::to_string_pretty(&self.sidecar_json())?)?;
        Ok(())
    }

    pub fn read_csv(path: &Path, prec: Prec) -> Result<Self> {
        let body = std::fs::read_to_string(path)?;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if i == 0 {
                continue; // header
            }
            if line.trim().is_empty() {
                continue;
            }
            let (t, v) = line.split_once(',').ok_or_else(|| {
                Error::InvalidParameter(format!("malformed CSV line {}: `{line}`", i + 1))
            })?;
            times.push(prec.parse(t.trim())?);
            values.push(prec.parse(v.trim())?);
        }
        let sidecar = path.with_extension("meta.json");
        let (epsilon, noise_norm, horizon, seed) = if sidecar.exists() {
            let meta: Value = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
            (
                meta.get("epsilon").and_then(Value::as_f64).unwrap_or(0.0),
                meta.get("noise_norm")
                    .and_then(Value::as_str)
                    .unwrap_or("sup")
                    .parse()?,
                meta.get("T")
                    .and_then(Value::as_f64)
                    .unwrap_or_else(|| times.last().map_or(1.0, |t| t.to_f64())),
                meta.get("seed").and_then(Value::as_u64),
            )
        } else {
            let horizon = times.last().map_or(1.0, |t| t.to_f64());
            (0.0, NoiseNorm::Sup, horizon, None)
        };
        Self::new(times, values, epsilon, noise_norm, horizon, seed)
    }
}

/// Evenly spaced times `t_0 … t_1` inclusive.
pub fn uniform_grid(t0: f64, t1: f64, n: usize, prec: Prec) -> Vec<Float> {
    assert!(n >= 2 && t1 > t0);
    let step = (t1 - t0) / (n - 1) as f64;
    (0..n)
        .map(|i| prec.from_f64(t0 + step * i as f64))
        .collect()
}

/// A finite union of closed intervals inside `[0, T]`; measurement windows
/// are restricted to this shape so sup norms can be taken over grids.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(mut intervals: Vec<(f64, f64)>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::EmptyInput("interval union needs an interval"));
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (a, b) in &intervals {
            if !(b > a) {
                return Err(Error::InvalidParameter(format!(
                    "degenerate interval [{a}, {b}]"
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn single(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(a, b)])
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|(a, b)| t >= *a && t <= *b)
    }

    pub fn inf(&self) -> f64 {
        self.intervals[0].0
    }

    /// Evaluation grid with `per_interval` points in each component.
    pub fn grid(&self, per_interval: usize, prec: Prec) -> Vec<Float> {
        let mut out = Vec::new();
        for (a, b) in &self.intervals {
            out.extend(uniform_grid(*a, *b, per_interval.max(2), prec));
        }
        out
    }
}

/// The data handed to a recovery route: either a live evaluator (optionally
/// with a declared noise level) or a recorded sample.
pub enum SeriesData<'a> {
    Evaluator {
        f: &'a dyn SeriesEval,
        noise: Option<f64>,
    },
    Sample(&'a DirichletSample),
}

impl<'a> SeriesData<'a> {
    pub fn declared_noise(&self) -> Option<f64> {
        match self {
            SeriesData::Evaluator { noise, .. } => *noise,
            SeriesData::Sample(s) => Some(s.noise_level),
        }
    }

    /// Materializes an evaluator (interpolating when the data is sampled).
    pub fn evaluator(&self, prec: Prec) -> Result<Box<dyn SeriesEval + 'a>> {
        match self {
            SeriesData::Evaluator { f, .. } => Ok(Box::new(Borrowed(*f))),
            SeriesData::Sample(s) => Ok(Box::new(s.evaluator(prec)?)),
        }
    }

    /// Largest observed magnitude over a grid in `window` (or all of
    /// `[0, horizon]`).
    pub fn sup_on_window(
        &self,
        window: Option<&IntervalUnion>,
        horizon: f64,
        grid_points: usize,
        prec: Prec,
    ) -> Result<Float> {
        match self {
            SeriesData::Sample(s) => {
                let mut best = prec.zero();
                for (t, v) in s.times().iter().zip(s.values()) {
                    if window.is_some_and(|w| !w.contains(t.to_f64())) {
                        continue;
                    }
                    let mag = Float::with_val(prec.bits(), v.abs_ref());
                    if mag > best {
                        best = mag;
                    }
                }
                Ok(best)
            }
            SeriesData::Evaluator { f, .. } => {
                let grid = match window {
                    Some(w) => w.grid(grid_points, prec),
                    None => uniform_grid(0.0, horizon, grid_points.max(2), prec),
                };
                let mut best = prec.zero();
                for t in &grid {
                    let mag = f.value(t).abs();
                    if mag > best {
                        best = mag;
                    }
                }
                Ok(best)
            }
        }
    }

    pub fn max_spacing(&self, prec: Prec) -> Option<Float> {
        match self {
            SeriesData::Sample(s) => Some(s.max_spacing(prec)),
            SeriesData::Evaluator { .. } => None,
        }
    }
}

struct Borrowed<'a>(&'a dyn SeriesEval);

impl SeriesEval for Borrowed<'_> {
    fn value(&self, t: &Float) -> Float {
        self.0.value(t)
    }
}

/// Samples `truth` at the given times with the requested noise model.
///
/// Sup noise draws each perturbation uniformly from `[-ε, ε]`; L² noise draws
/// Gaussians and rescales them so the trapezoid quadrature of the noise over
/// `[0, T]` has norm exactly ε. Both are deterministic under `seed`.
pub fn sample(
    truth: &dyn SeriesEval,
    times: &[Float],
    epsilon: f64,
    noise_norm: NoiseNorm,
    horizon: f64,
    seed: Option<u64>,
    prec: Prec,
) -> Result<DirichletSample> {
    use rand::{Rng, SeedableRng};
    if times.is_empty() {
        return Err(Error::EmptyInput("sampling needs a nonempty time grid"));
    }
    let bits = prec.bits();
    let clean: Vec<Float> = times.iter().map(|t| truth.value(t)).collect();
    let values = if epsilon == 0.0 {
        clean
    } else {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed.unwrap_or(0));
        match noise_norm {
            NoiseNorm::Sup => clean
                .iter()
                .map(|v| {
                    let u: f64 = rng.gen();
                    Float::with_val(bits, v + prec.from_f64((2.0 * u - 1.0) * epsilon))
                })
                .collect(),
            NoiseNorm::L2 => {
                let n = times.len();
                let draws: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
                // Trapezoid weights covering [0, T].
                let mut weights = vec![0.0; n];
                for j in 0..n {
                    let left = if j == 0 {
                        times[0].to_f64()
                    } else {
                        (times[j].to_f64() - times[j - 1].to_f64()) / 2.0
                    };
                    let right = if j == n - 1 {
                        horizon - times[n - 1].to_f64()
                    } else {
                        (times[j + 1].to_f64() - times[j].to_f64()) / 2.0
                    };
                    weights[j] = left + right;
                }
                let quad: f64 = draws
                    .iter()
                    .zip(&weights)
                    .map(|(g, w)| w * g * g)
                    .sum::<f64>()
                    .sqrt();
                let scale = if quad == 0.0 { 0.0 } else { epsilon / quad };
                clean
                    .iter()
                    .zip(&draws)
                    .map(|(v, g)| Float::with_val(bits, v + prec.from_f64(scale * g)))
                    .collect()
            }
        }
    };
    DirichletSample::new(times.to_vec(), values, epsilon, noise_norm, horizon, seed)
}

fn gaussian(rng: &mut impl rand::Rng) -> f64 {
    // Box-Muller; u clamped away from zero.
    let u: f64 = rng.gen::<f64>().max(1e-300);
    let v: f64 = rng.gen();
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Prec {
        Prec::new(192)
    }

    fn seq_squares(n: usize) -> EigenvalueSequence {
        EigenvalueSequence::power(1.0, 1.0, n, p()).unwrap()
    }

    #[test]
    fn eval_dirichlet_examples() {
        // Single mode at t = 0.
        let a = CoefficientSequence::unit(1, p().one(), p());
        let v = eval_dirichlet(&a, &seq_squares(4), &p().zero(), p()).unwrap();
        assert_eq!(v, p().one());

        // a = (1, -1), λ = (1, 2), t = ln 2 → 1/2 - 1/4.
        let a = CoefficientSequence::from_entries(vec![p().one(), p().from_f64(-1.0)], p());
        let lam = EigenvalueSequence::explicit(vec![p().one(), p().from_f64(2.0)], p()).unwrap();
        let t = p().from_f64(2.0).ln();
        let v = eval_dirichlet(&a, &lam, &t, p()).unwrap();
        let err = Float::with_val(p().bits(), &v - &p().from_f64(0.25)).abs();
        assert!(err < 1e-50);

        // Negative time is a domain error.
        assert!(matches!(
            eval_dirichlet(&a, &lam, &p().from_f64(-0.5), p()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn eval_dirichlet_matches_double_precision_oracle() {
        // Independent summation at doubled precision.
        let a = CoefficientSequence::from_entries(
            vec![p().one(), p().one(), p().one()],
            p(),
        );
        let lam = seq_squares(3);
        let t = p().one();
        let v = eval_dirichlet(&a, &lam, &t, p()).unwrap();
        let hp = p().doubled();
        let mut oracle = hp.zero();
        for k in [1.0f64, 4.0, 9.0] {
            oracle += (-hp.from_f64(k)).exp();
        }
        let err = Float::with_val(hp.bits(), &v - &oracle).abs();
        assert!(err < 1e-55);
    }

    #[test]
    fn heat_point_examples() {
        let e1 = InitialDatum::new(CoefficientSequence::unit(1, p().one(), p()), 1.0).unwrap();
        let half_pi = p().pi() / 2u32;
        let v = heat_point(&e1, 1.0, &half_pi, &p().zero(), p()).unwrap();
        let err = Float::with_val(p().bits(), &v - 1f64).abs();
        assert!(err < 1e-50);

        // Second mode is blind at x0 = π/2.
        let e2 = InitialDatum::new(CoefficientSequence::unit(2, p().one(), p()), 1.0).unwrap();
        let v = heat_point(&e2, 1.0, &half_pi, &p().from_f64(0.37), p()).unwrap();
        assert!(v.abs() < 1e-50);

        // Out-of-interval sensor rejected.
        assert!(matches!(
            heat_point(&e1, 1.0, &p().from_f64(4.0), &p().zero(), p()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn heat_point_matches_direct_sum() {
        // f̂ = (1, 1/2), α = 1/2, mu = 1, x0 = 1, t = 1.
        let f = InitialDatum::new(
            CoefficientSequence::from_entries(vec![p().one(), p().from_f64(0.5)], p()),
            1.0,
        )
        .unwrap();
        let v = heat_point(&f, 0.5, &p().one(), &p().one(), p()).unwrap();
        let hp = p().doubled();
        // λ_k = k for α = 1/2: e^{-1} sin 1 + (1/2) e^{-2} sin 2.
        let oracle = (-hp.one()).exp() * hp.one().sin()
            + hp.from_f64(0.5) * (-hp.from_f64(2.0)).exp() * hp.from_f64(2.0).sin();
        let err = Float::with_val(hp.bits(), &v - &oracle).abs();
        assert!(err < 1e-50);
    }

    #[test]
    fn boundary_flux_examples() {
        let e1 = InitialDatum::new(CoefficientSequence::unit(1, p().one(), p()), 1.0).unwrap();
        let t = p().from_f64(0.7);
        let v = boundary_flux(&e1, 1.0, &t, p()).unwrap();
        let expect = (-p().from_f64(0.7)).exp();
        assert!(Float::with_val(p().bits(), &v - &expect).abs() < 1e-50);

        // f̂ = (1,1), α = 1, t = 1 → e^{-1} + 2 e^{-4}.
        let f = InitialDatum::new(
            CoefficientSequence::from_entries(vec![p().one(), p().one()], p()),
            1.0,
        )
        .unwrap();
        let v = boundary_flux(&f, 1.0, &p().one(), p()).unwrap();
        let hp = p().doubled();
        let oracle = (-hp.one()).exp() + hp.from_f64(2.0) * (-hp.from_f64(4.0)).exp();
        assert!(Float::with_val(hp.bits(), &v - &oracle).abs() < 1e-50);

        assert!(matches!(
            boundary_flux(&f, 1.0, &p().zero(), p()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn tensor_eval_examples() {
        let e1 = InitialDatum::new(CoefficientSequence::unit(1, p().one(), p()), 1.0).unwrap();
        let td = TensorDatum::new(vec![e1.clone(), e1.clone()], true).unwrap();
        let half_pi = p().pi() / 2u32;
        let v = tensor_eval(
            &td,
            1.0,
            &[half_pi.clone(), half_pi.clone()],
            &p().zero(),
            p(),
        )
        .unwrap();
        assert!(Float::with_val(p().bits(), &v - 1f64).abs() < 1e-50);

        // A zero factor annihilates the product.
        let zero = InitialDatum::new(CoefficientSequence::zero(p()), 1.0).unwrap();
        let td = TensorDatum::new(vec![e1.clone(), zero], true).unwrap();
        let v = tensor_eval(&td, 1.0, &[p().one(), p().one()], &p().from_f64(0.3), p()).unwrap();
        assert!(v.is_zero());

        // Product equals per-axis values.
        let f1 = InitialDatum::new(
            CoefficientSequence::from_entries(vec![p().one(), p().one()], p()),
            1.0,
        )
        .unwrap();
        let td = TensorDatum::new(vec![f1.clone(), e1.clone()], true).unwrap();
        let x = [p().one(), p().one()];
        let t = p().from_f64(0.5);
        let v = tensor_eval(&td, 1.0, &x, &t, p()).unwrap();
        let oracle = heat_point(&f1, 1.0, &x[0], &t, p()).unwrap()
            * heat_point(&e1, 1.0, &x[1], &t, p()).unwrap();
        assert!(Float::with_val(p().bits(), &v - &oracle).abs() < 1e-50);

        assert!(matches!(
            tensor_eval(&td, 1.0, &[p().one()], &t, p()),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn linearity_and_decay() {
        let lam = seq_squares(3);
        let a = CoefficientSequence::from_entries(
            vec![p().from_f64(0.4), p().from_f64(-0.2), p().from_f64(0.9)],
            p(),
        );
        let b = CoefficientSequence::from_entries(
            vec![p().from_f64(-1.1), p().from_f64(0.5)],
            p(),
        );
        let scale = p().from_f64(2.5);
        let combo = a.scale(&scale).sub(&b.scale(&p().from_f64(-1.0)));
        for tv in [0.0, 0.1, 1.3] {
            let t = p().from_f64(tv);
            let lhs = eval_dirichlet(&combo, &lam, &t, p()).unwrap();
            let rhs = scale.clone() * eval_dirichlet(&a, &lam, &t, p()).unwrap()
                + eval_dirichlet(&b, &lam, &t, p()).unwrap();
            assert!(Float::with_val(p().bits(), &lhs - &rhs).abs() < 1e-45);
        }

        // Positive coefficients decay strictly.
        let pos = CoefficientSequence::from_entries(
            vec![p().one(), p().from_f64(0.3), p().from_f64(0.01)],
            p(),
        );
        let mut prev = eval_dirichlet(&pos, &lam, &p().zero(), p()).unwrap();
        for i in 1..=20 {
            let t = p().from_f64(i as f64 * 0.05);
            let v = eval_dirichlet(&pos, &lam, &t, p()).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn heat_equation_residual_smoke() {
        // α = 1: centered differences satisfy ∂_t u ≈ ∂_x² u on a smooth datum.
        let f = InitialDatum::new(
            CoefficientSequence::from_entries(
                vec![p().one(), p().from_f64(0.5), p().from_f64(0.25)],
                p(),
            ),
            1.0,
        )
        .unwrap();
        let h = p().from_f64(1e-3);
        let x = p().from_f64(1.1);
        let t = p().from_f64(0.2);
        let at = |dx: f64, dt: f64| {
            heat_point(
                &f,
                1.0,
                &Float::with_val(p().bits(), &x + p().from_f64(dx)),
                &Float::with_val(p().bits(), &t + p().from_f64(dt)),
                p(),
            )
            .unwrap()
        };
        let h_f = h.to_f64();
        let du_dt = (at(0.0, h_f) - at(0.0, -h_f)) / (p().from_f64(2.0) * &h);
        let d2u_dx2 = (at(h_f, 0.0) - p().from_f64(2.0) * at(0.0, 0.0) + at(-h_f, 0.0))
            / Float::with_val(p().bits(), h.square_ref());
        let residual = Float::with_val(p().bits(), &du_dt - &d2u_dx2).abs();
        // Residual scales with h²; generous constant.
        assert!(residual < 1e-4, "residual {residual}");
    }

    #[test]
    fn parseval_at_final_time() {
        use crate::quadrature::integrate;
        let f = InitialDatum::new(
            CoefficientSequence::from_entries(
                vec![p().one(), p().from_f64(-0.7), p().from_f64(0.3)],
                p(),
            ),
            1.0,
        )
        .unwrap();
        let horizon = p().one();
        // Quadrature of u(·, T)² over (0, π).
        let mut integrand =
            |x: &Float| {
                let u = heat_point(&f, 1.0, x, &horizon, p()).unwrap();
                Float::with_val(p().bits(), u.square_ref())
            };
        let upper = p().pi();
        let quad = integrate(&mut integrand, &p().from_f64(1e-30), &upper, 256, p());
        // Σ e^{-2 k² T} |f̂_k|² times the interval normalization π/2.
        let lam = seq_squares(3);
        let mut sum = p().zero();
        for (i, c) in f.coeffs().entries().iter().enumerate() {
            let w = (-Float::with_val(p().bits(), 2 * lam.value(i + 1).clone()) * &horizon).exp();
            sum += w * Float::with_val(p().bits(), c.square_ref());
        }
        let rhs = sum * p().pi() / 2u32;
        let err = Float::with_val(p().bits(), &quad - &rhs).abs();
        assert!(err < 1e-40, "Parseval mismatch {err}");
    }

    #[test]
    fn sampling_is_reproducible_and_bounded() {
        let a = CoefficientSequence::from_entries(vec![p().one(), p().from_f64(0.5)], p());
        let lam = seq_squares(2);
        let truth = ExactSeries {
            coeffs: &a,
            exponents: &lam,
            prec: p(),
        };
        let times = uniform_grid(0.0, 1.0, 33, p());

        // ε = 0 reproduces the truth exactly.
        let s0 = sample(&truth, &times, 0.0, NoiseNorm::Sup, 1.0, Some(7), p()).unwrap();
        for (t, v) in s0.times().iter().zip(s0.values()) {
            assert_eq!(*v, truth.value(t));
        }

        // Same seed, same sample; different seed differs.
        let s1 = sample(&truth, &times, 1e-3, NoiseNorm::Sup, 1.0, Some(7), p()).unwrap();
        let s2 = sample(&truth, &times, 1e-3, NoiseNorm::Sup, 1.0, Some(7), p()).unwrap();
        assert_eq!(s1.values(), s2.values());
        let s3 = sample(&truth, &times, 1e-3, NoiseNorm::Sup, 1.0, Some(8), p()).unwrap();
        assert_ne!(s1.values(), s3.values());

        // Sup noise bound verified post-hoc against recomputed truth.
        for (t, v) in s1.times().iter().zip(s1.values()) {
            let err = Float::with_val(p().bits(), v - truth.value(t)).abs();
            assert!(err <= 1e-3 + 1e-30);
        }

        // Empty grid refused.
        assert!(matches!(
            sample(&truth, &[], 0.0, NoiseNorm::Sup, 1.0, None, p()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn l2_noise_has_requested_quadrature_norm() {
        let a = CoefficientSequence::unit(1, p().one(), p());
        let lam = seq_squares(1);
        let truth = ExactSeries {
            coeffs: &a,
            exponents: &lam,
            prec: p(),
        };
        let times = uniform_grid(0.0, 1.0, 65, p());
        let eps = 1e-4;
        let s = sample(&truth, &times, eps, NoiseNorm::L2, 1.0, Some(3), p()).unwrap();
        // Recompute the trapezoid norm of the injected noise.
        let n = times.len();
        let mut quad = 0.0;
        for j in 0..n {
            let noise = Float::with_val(p().bits(), &s.values()[j] - truth.value(&times[j]))
                .to_f64();
            let left = if j == 0 {
                times[0].to_f64()
            } else {
                (times[j].to_f64() - times[j - 1].to_f64()) / 2.0
            };
            let right = if j == n - 1 {
                1.0 - times[n - 1].to_f64()
            } else {
                (times[j + 1].to_f64() - times[j].to_f64()) / 2.0
            };
            quad += (left + right) * noise * noise;
        }
        assert!((quad.sqrt() - eps).abs() < 1e-12 * eps.max(1.0));
    }

    #[test]
    fn csv_roundtrip() {
        let a = CoefficientSequence::unit(1, p().one(), p());
        let lam = seq_squares(1);
        let truth = ExactSeries {
            coeffs: &a,
            exponents: &lam,
            prec: p(),
        };
        let times = uniform_grid(0.0, 1.0, 9, p());
        let s = sample(&truth, &times, 1e-6, NoiseNorm::Sup, 1.0, Some(1), p()).unwrap();
        let dir = std::env::temp_dir().join("dirichlet_heat_test_csv");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("sample.csv");
        s.write_csv(&path).unwrap();
        let back = DirichletSample::read_csv(&path, p()).unwrap();
        assert_eq!(s.times(), back.times());
        assert_eq!(s.values(), back.values());
        assert_eq!(s.noise_level, back.noise_level);
        assert_eq!(s.seed, back.seed);
    }
}
