//! Experiment harness: noise sweeps over the recovery pipelines, stability
//! rate fits (log, double-log, Hölder), and machine-readable exports.

use rayon::prelude::*;
use rug::Float;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::biortho::BiorthoConfig;
use crate::error::{Error, Result};
use crate::forward::{
    uniform_grid, ExactSeries, InitialDatum, SeriesData, TensorDatum,
};
use crate::inverse_heat::{
    l2_datum_error, recover_initial_boundary, recover_initial_point, recover_tensor,
    sample_hyperplane, tensor_l2_error, InverseConfig,
};
use crate::precision::{to_decimal_string, Prec};
use crate::report::Method;
use crate::sensor::{propose_point, verify_point, SensorPoint, Strategy};
use crate::sequences::{CoefficientSequence, EigenvalueSequence, SequenceNormKind};

/// Ordinary least squares `y ≈ slope·x + intercept` with the coefficient of
/// determination.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return (0.0, mean_y, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

pub fn median_f64(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Which experiment to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    SeriesRecovery,
    PointInversion,
    BoundaryInversion,
    TensorInversion,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Scenario::SeriesRecovery => "series_recovery",
            Scenario::PointInversion => "point_inversion",
            Scenario::BoundaryInversion => "boundary_inversion",
            Scenario::TensorInversion => "tensor_inversion",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series_recovery" => Ok(Scenario::SeriesRecovery),
            "point_inversion" => Ok(Scenario::PointInversion),
            "boundary_inversion" => Ok(Scenario::BoundaryInversion),
            "tensor_inversion" => Ok(Scenario::TensorInversion),
            other => Err(Error::InvalidParameter(format!(
                "unknown scenario `{other}`"
            ))),
        }
    }
}

/// How the per-trial truth is generated.
#[derive(Clone, Debug)]
pub enum DatumSpec {
    /// The same coefficients every trial.
    Fixed(Vec<f64>),
    /// Random support-`support` draw scaled to `h^θ` norm exactly `m`.
    Random { support: usize },
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub method: Method,
    pub alpha: f64,
    pub mu: f64,
    pub datum: DatumSpec,
    /// Positive, strictly decreasing noise grid.
    pub noise_grid: Vec<f64>,
    pub trials: usize,
    pub precision_bits: u32,
    pub horizon: f64,
    pub theta: f64,
    pub m: f64,
    pub seed: u64,
    /// Sobolev index for the boundary scenario.
    pub beta: f64,
    pub inverse: InverseConfig,
    pub biortho: BiorthoConfig,
}

impl ExperimentConfig {
    pub fn new(scenario: Scenario, method: Method) -> Self {
        Self {
            scenario,
            method,
            alpha: 1.0,
            mu: 1.0,
            datum: DatumSpec::Random { support: 8 },
            noise_grid: vec![1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12],
            trials: 10,
            precision_bits: 256,
            horizon: 1.0,
            theta: 1.0,
            m: 1.0,
            seed: 0,
            beta: 1.0,
            inverse: InverseConfig::default(),
            biortho: BiorthoConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_grid.is_empty() {
            return Err(Error::EmptyInput("noise grid must be nonempty"));
        }
        for w in self.noise_grid.windows(2) {
            if !(w[1] < w[0]) {
                return Err(Error::InvalidParameter(
                    "noise grid must be strictly decreasing".into(),
                ));
            }
        }
        if self.noise_grid.iter().any(|e| *e <= 0.0) {
            return Err(Error::InvalidParameter("noise grid must be positive".into()));
        }
        if self.trials < 1 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        Ok(())
    }

    pub fn echo_json(&self) -> Value {
        json!({
            "scenario": self.scenario.to_string(),
            "method": self.method.to_string(),
            "alpha": self.alpha,
            "mu": self.mu,
            "noise_grid": self.noise_grid,
            "trials": self.trials,
            "precision_bits": self.precision_bits,
            "horizon": self.horizon,
            "theta": self.theta,
            "m": self.m,
            "beta": self.beta,
            "seed": self.seed,
            "datum": match &self.datum {
                DatumSpec::Fixed(c) => json!({"fixed": c}),
                DatumSpec::Random { support } => json!({"random_support": support}),
            },
        })
    }
}

/// One sweep record. The runtime is informational and deliberately excluded
/// from the CSV export so identical runs produce identical bytes.
#[derive(Clone, Debug)]
pub struct Record {
    pub epsilon: f64,
    pub trial: u64,
    pub error: Float,
    pub n_used: usize,
    pub runtime_ms: Option<u64>,
}

/// Deterministic per-trial seed.
fn trial_seed(master: u64, eps_idx: usize, trial: usize) -> u64 {
    let mut z = master
        ^ ((eps_idx as u64) << 40).wrapping_add(0x517c_c1b7_2722_0a95)
        ^ (trial as u64).wrapping_mul(0x2545_f491_4f6c_dd1d);
    z = (z ^ (z >> 33)).wrapping_mul(0xff51_afd7_ed55_8ccd);
    z ^ (z >> 33)
}

fn random_coeffs(support: usize, theta: f64, m: f64, seed: u64, prec: Prec) -> CoefficientSequence {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    // Generic ball direction: the profile ⟨k⟩^{-(θ+1/2)} spreads the h^θ
    // energy evenly across modes, so the unresolved tail carries the ball
    // rate m/N^θ rather than the lighter tail of flat draws.
    let raw: Vec<f64> = (0..support)
        .map(|i| {
            let k = (i + 1) as f64;
            let profile = (1.0 + k * k).powf(-(theta + 0.5) / 2.0);
            (2.0 * rng.gen::<f64>() - 1.0) * profile
        })
        .collect();
    let coeffs = CoefficientSequence::from_entries(
        raw.iter().map(|x| prec.from_f64(*x)).collect(),
        prec,
    );
    let norm = coeffs
        .norm(SequenceNormKind::HTheta(theta.max(1e-9)))
        .expect("norm");
    if norm.is_zero() {
        return CoefficientSequence::unit(1, prec.from_f64(m), prec);
    }
    let scale = prec.from_f64(m) / norm;
    coeffs.scale(&scale)
}

fn datum_for_trial(cfg: &ExperimentConfig, seed: u64, prec: Prec) -> InitialDatum {
    let coeffs = match &cfg.datum {
        DatumSpec::Fixed(c) => CoefficientSequence::from_entries(
            c.iter().map(|x| prec.from_f64(*x)).collect(),
            prec,
        ),
        DatumSpec::Random { support } => random_coeffs(*support, cfg.theta, cfg.m, seed, prec),
    };
    InitialDatum::new(coeffs, cfg.mu).expect("mu > 0")
}

/// Runs the sweep: `trials` independent recoveries per noise level, in
/// parallel, each recording the truth-vs-estimate error and the truncation
/// used. Deterministic under `cfg.seed`; records are sorted by
/// `(ε decreasing, trial)`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<Record>> {
    cfg.validate()?;
    let prec = Prec::new(cfg.precision_bits);
    // One verified sensor shared by every point/tensor trial.
    let sensor = match cfg.scenario {
        Scenario::PointInversion | Scenario::TensorInversion => Some(verify_point(
            &propose_point(Strategy::Golden, cfg.mu, prec)?,
            cfg.inverse.max_modes.max(64),
            prec,
        )?),
        _ => None,
    };
    let jobs: Vec<(usize, usize)> = (0..cfg.noise_grid.len())
        .flat_map(|e| (0..cfg.trials).map(move |t| (e, t)))
        .collect();
    // A failed trial (ill-conditioning, refused regime) is recorded with an
    // infinite error rather than aborting the sweep; the median-based fits
    // tolerate occasional failures.
    let mut records: Vec<Record> = jobs
        .par_iter()
        .map(|&(eps_idx, trial)| {
            run_trial(cfg, sensor.as_ref(), eps_idx, trial, prec).unwrap_or(Record {
                epsilon: cfg.noise_grid[eps_idx],
                trial: trial as u64,
                error: prec.from_f64(f64::INFINITY),
                n_used: 0,
                runtime_ms: None,
            })
        })
        .collect();
    records.sort_by(|a, b| {
        b.epsilon
            .total_cmp(&a.epsilon)
            .then(a.trial.cmp(&b.trial))
    });
    Ok(records)
}

fn run_trial(
    cfg: &ExperimentConfig,
    sensor: Option<&SensorPoint>,
    eps_idx: usize,
    trial: usize,
    prec: Prec,
) -> Result<Record> {
    let epsilon = cfg.noise_grid[eps_idx];
    // Paired design: the same truths are used at every noise level (datum
    // seed ignores ε), while the noise realization varies with both.
    let datum_seed = trial_seed(cfg.seed, usize::MAX, trial);
    let noise_seed = trial_seed(cfg.seed, eps_idx, trial);
    let start = Instant::now();
    let (error, n_used) = match cfg.scenario {
        Scenario::SeriesRecovery => series_trial(cfg, epsilon, datum_seed, noise_seed, prec)?,
        Scenario::PointInversion => {
            point_trial(cfg, sensor.unwrap(), epsilon, datum_seed, noise_seed, prec)?
        }
        Scenario::BoundaryInversion => {
            boundary_trial(cfg, epsilon, datum_seed, noise_seed, prec)?
        }
        Scenario::TensorInversion => {
            tensor_trial(cfg, sensor.unwrap(), epsilon, datum_seed, noise_seed, prec)?
        }
    };
    Ok(Record {
        epsilon,
        trial: trial as u64,
        error,
        n_used,
        runtime_ms: Some(start.elapsed().as_millis() as u64),
    })
}

fn series_trial(
    cfg: &ExperimentConfig,
    epsilon: f64,
    datum_seed: u64,
    noise_seed: u64,
    prec: Prec,
) -> Result<(Float, usize)> {
    let datum = datum_for_trial(cfg, datum_seed, prec);
    let truth = datum.coeffs().clone();
    let seq = EigenvalueSequence::power(cfg.alpha, cfg.mu, cfg.inverse.max_modes, prec)?;
    let exact = ExactSeries {
        coeffs: &truth,
        exponents: &seq,
        prec,
    };
    let noisy = crate::forward::NoisySeries {
        inner: &exact,
        epsilon,
        seed: noise_seed,
        prec,
    };
    let data = SeriesData::Evaluator {
        f: &noisy,
        noise: Some(epsilon),
    };
    let report = match cfg.method {
        Method::Biortho => crate::biortho::recover_log(
            &data,
            &seq,
            cfg.horizon,
            cfg.theta,
            cfg.m,
            &cfg.biortho,
            prec,
        )?,
        Method::Peeling => {
            let m_eff = truth
                .norm(SequenceNormKind::L1Theta(cfg.theta))
                .expect("norm")
                .to_f64()
                .max(cfg.m);
            crate::peeling::recover_peeling(&data, &seq, cfg.theta, m_eff, &cfg.inverse.peel, prec)?
                .0
        }
        Method::Vandermonde => {
            let m_eff = truth
                .norm(SequenceNormKind::L1Exp {
                    alpha: cfg.inverse.holder_alpha,
                    beta: cfg.inverse.holder_beta,
                })
                .expect("norm")
                .to_f64()
                .max(cfg.m);
            crate::vandermonde::recover_holder(
                &data,
                &seq,
                m_eff,
                cfg.inverse.holder_alpha,
                cfg.inverse.holder_beta,
                &cfg.inverse.vandermonde,
                prec,
            )?
        }
    };
    let err = report.estimate.sub(&truth).norm(SequenceNormKind::L2)?;
    Ok((err, report.truncation))
}

fn point_trial(
    cfg: &ExperimentConfig,
    sensor: &SensorPoint,
    epsilon: f64,
    datum_seed: u64,
    noise_seed: u64,
    prec: Prec,
) -> Result<(Float, usize)> {
    let datum = datum_for_trial(cfg, datum_seed, prec);
    let a = crate::sensor::mode_to_series(&datum, sensor, prec)?;
    let seq = EigenvalueSequence::power(cfg.alpha, cfg.mu, cfg.inverse.max_modes, prec)?;
    let exact = ExactSeries {
        coeffs: &a,
        exponents: &seq,
        prec,
    };
    let noisy = crate::forward::NoisySeries {
        inner: &exact,
        epsilon,
        seed: noise_seed,
        prec,
    };
    let data = SeriesData::Evaluator {
        f: &noisy,
        noise: Some(epsilon),
    };
    let result = recover_initial_point(
        sensor,
        cfg.alpha,
        &data,
        cfg.horizon,
        cfg.theta,
        cfg.m,
        cfg.method,
        &cfg.inverse,
        Some(&datum),
        prec,
    )?;
    let err = l2_datum_error(result.estimate.as_datum().unwrap(), &datum, prec);
    let n = result.reports.first().map_or(0, |r| r.truncation);
    Ok((err, n))
}

fn boundary_trial(
    cfg: &ExperimentConfig,
    epsilon: f64,
    datum_seed: u64,
    noise_seed: u64,
    prec: Prec,
) -> Result<(Float, usize)> {
    let datum = datum_for_trial(cfg, datum_seed, prec);
    let b = crate::forward::flux_coefficients(&datum, prec);
    let seq = EigenvalueSequence::power(cfg.alpha, cfg.mu, cfg.inverse.max_modes, prec)?;
    let exact = ExactSeries {
        coeffs: &b,
        exponents: &seq,
        prec,
    };
    let noisy = crate::forward::NoisySeries {
        inner: &exact,
        epsilon,
        seed: noise_seed,
        prec,
    };
    let data = SeriesData::Evaluator {
        f: &noisy,
        noise: Some(epsilon),
    };
    let result = recover_initial_boundary(
        cfg.alpha,
        cfg.mu,
        &data,
        cfg.horizon,
        cfg.beta,
        cfg.m,
        cfg.method,
        &cfg.inverse,
        Some(&datum),
        prec,
    )?;
    let err = l2_datum_error(result.estimate.as_datum().unwrap(), &datum, prec);
    let n = result.reports.first().map_or(0, |r| r.truncation);
    Ok((err, n))
}

fn tensor_trial(
    cfg: &ExperimentConfig,
    sensor: &SensorPoint,
    epsilon: f64,
    datum_seed: u64,
    noise_seed: u64,
    prec: Prec,
) -> Result<(Float, usize)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand::rngs::StdRng::seed_from_u64(datum_seed);
    let mut make = |support: usize| {
        let mut entries: Vec<Float> = (0..support)
            .map(|_| prec.from_f64(2.0 * rng.gen::<f64>() - 1.0))
            .collect();
        if entries[0].clone().abs() < 0.3 {
            entries[0] = prec.from_f64(0.8);
        }
        InitialDatum::new(CoefficientSequence::from_entries(entries, prec), cfg.mu).unwrap()
    };
    let td = TensorDatum::new(vec![make(3), make(2)], true)?;
    let times = uniform_grid(0.0, cfg.horizon, 1025, prec);
    let channels: Vec<_> = (0..2)
        .map(|axis| {
            sample_hyperplane(
                &td,
                axis,
                sensor,
                cfg.alpha,
                &times,
                epsilon,
                noise_seed ^ axis as u64,
                cfg.horizon,
                24,
                prec,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let result = recover_tensor(
        &channels,
        cfg.alpha,
        1e-6,
        cfg.theta,
        cfg.m,
        cfg.method,
        &cfg.inverse,
        Some(&td),
        prec,
    )?;
    let err = tensor_l2_error(result.estimate.as_tensor().unwrap(), &td, prec);
    let n = result.reports.first().map_or(0, |r| r.truncation);
    Ok((err, n))
}

/// Rate models matching the three stability shapes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RateModel {
    /// `err ≈ C·|ln ε|^{-θ}`.
    Log,
    /// `err ≈ C·(ln|ln ε|)^{-θ/2}`.
    DoubleLog,
    /// `err ≈ C·ε^γ`.
    Holder,
}

impl std::fmt::Display for RateModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RateModel::Log => write!(f, "log"),
            RateModel::DoubleLog => write!(f, "doublelog"),
            RateModel::Holder => write!(f, "holder"),
        }
    }
}

impl std::str::FromStr for RateModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(RateModel::Log),
            "doublelog" => Ok(RateModel::DoubleLog),
            "holder" => Ok(RateModel::Holder),
            other => Err(Error::InvalidParameter(format!("unknown model `{other}`"))),
        }
    }
}

/// A fitted rate: exponent, constant, and `R²` in the linearizing
/// coordinates. `flagged` marks degenerate designs (no error variation).
#[derive(Clone, Debug)]
pub struct RateFit {
    pub model: RateModel,
    pub exponent: f64,
    pub constant: f64,
    pub r_squared: f64,
    pub flagged: bool,
}

impl RateFit {
    pub fn to_json(&self) -> Value {
        json!({
            "model": self.model.to_string(),
            "exponent": self.exponent,
            "constant": self.constant,
            "r_squared": self.r_squared,
            "flagged": self.flagged,
        })
    }
}

/// Median error per noise level, largest ε first.
pub fn medians_per_epsilon(records: &[Record]) -> Vec<(f64, f64)> {
    let mut groups: BTreeMap<u64, (f64, Vec<f64>)> = BTreeMap::new();
    for r in records {
        groups
            .entry(r.epsilon.to_bits())
            .or_insert((r.epsilon, Vec::new()))
            .1
            .push(r.error.to_f64());
    }
    let mut out: Vec<(f64, f64)> = groups
        .into_values()
        .map(|(eps, mut errs)| (eps, median_f64(&mut errs)))
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

/// Least squares in the model's linearizing coordinates over the per-ε
/// median errors.
pub fn fit_rate(records: &[Record], model: RateModel) -> Result<RateFit> {
    let medians = medians_per_epsilon(records);
    let usable: Vec<(f64, f64)> = medians
        .into_iter()
        .filter(|(eps, err)| *eps > 0.0 && *eps < 1.0 && err.is_finite() && *err > 0.0)
        .collect();
    if usable.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "rate fitting needs at least 4 usable noise levels, got {}",
            usable.len()
        )));
    }
    let mut xs = Vec::with_capacity(usable.len());
    let mut ys = Vec::with_capacity(usable.len());
    for (eps, err) in &usable {
        let x = match model {
            RateModel::Log => eps.ln().abs().ln(),
            RateModel::DoubleLog => eps.ln().abs().ln().ln(),
            RateModel::Holder => eps.ln(),
        };
        xs.push(x);
        ys.push(err.ln());
    }
    let (slope, intercept, r2) = linear_fit(&xs, &ys);
    let flagged = ys.windows(2).all(|w| w[0] == w[1]);
    let exponent = match model {
        RateModel::Log => -slope,
        RateModel::DoubleLog => -2.0 * slope,
        RateModel::Holder => slope,
    };
    Ok(RateFit {
        model,
        exponent,
        constant: intercept.exp(),
        r_squared: r2,
        flagged,
    })
}

/// Writes `records.csv` (bit-exact decimal strings, runtime excluded) and
/// `fits.json` (fits + config echo + medians). Returns the two paths.
pub fn export(
    records: &[Record],
    fits: &[RateFit],
    config_echo: &Value,
    dir: &Path,
) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let csv_path = dir.join("records.csv");
    std::fs::write(&csv_path, records_to_csv(records))?;
    let fits_path = dir.join("fits.json");
    let medians: Vec<Value> = medians_per_epsilon(records)
        .into_iter()
        .map(|(eps, med)| json!({"epsilon": eps, "median_error": med}))
        .collect();
    let total_runtime: u64 = records.iter().filter_map(|r| r.runtime_ms).sum();
    let body = json!({
        "config": config_echo,
        "fits": fits.iter().map(RateFit::to_json).collect::<Vec<_>>(),
        "medians": medians,
        "total_runtime_ms": total_runtime,
    });
    std::fs::write(&fits_path, serde_json::to_string_pretty(&body)?)?;
    Ok((csv_path, fits_path))
}

pub fn records_to_csv(records: &[Record]) -> String {
    let mut out = String::from("epsilon,trial,error,n\n");
    for r in records {
        out.push_str(&format!(
            "{:e},{},{},{}\n",
            r.epsilon,
            r.trial,
            to_decimal_string(&r.error),
            r.n_used
        ));
    }
    out
}

/// Re-reads an exported records CSV (runtimes come back empty).
pub fn import_records(path: &Path, prec: Prec) -> Result<Vec<Record>> {
    let body = std::fs::read_to_string(path)?;
    records_from_csv(&body, prec)
}

pub fn records_from_csv(body: &str, prec: Prec) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in body.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(Error::InvalidParameter(format!(
                "malformed records CSV line {}: `{line}`",
                i + 1
            )));
        }
        out.push(Record {
            epsilon: cols[0].parse().map_err(|e| {
                Error::InvalidParameter(format!("bad epsilon on line {}: {e}", i + 1))
            })?,
            trial: cols[1].parse().map_err(|e| {
                Error::InvalidParameter(format!("bad trial on line {}: {e}", i + 1))
            })?,
            error: prec.parse(cols[2])?,
            n_used: cols[3].parse().map_err(|e| {
                Error::InvalidParameter(format!("bad n on line {}: {e}", i + 1))
            })?,
            runtime_ms: None,
        });
    }
    Ok(out)
}
