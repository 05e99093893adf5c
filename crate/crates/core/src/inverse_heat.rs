//! End-to-end inversions: initial datum from a point measurement, from the
//! boundary flux, and tensor-product data from hyperplane measurements.
//!
//! Every pipeline reduces to Dirichlet-series recovery: a point sensor at a
//! strategic `x0` observes the series with coefficients `sin(k·x0/mu)·f̂_k`;
//! the boundary flux observes `(k/mu)·f̂_k`; a hyperplane observation,
//! projected onto the first transverse eigenfunction, observes a scalar
//! multiple of one axis's point measurement. Recovery route admissibility
//! follows the exponent regime: the biorthogonal route needs `2α > 1`
//! (summable reciprocals), peeling and Vandermonde need the gap condition,
//! which `(k/mu)^{2α}` satisfies for every α.

use rug::Float;
use serde_json::{json, Value};
use std::collections::BTreeMap;

use crate::biortho::{recover_log, BiorthoConfig};
use crate::error::{Error, Result};
use crate::forward::{
    heat_point, InitialDatum, IntervalUnion, NoiseNorm, SeriesData, TensorDatum,
};
use crate::peeling::{recover_peeling, PeelConfig};
use crate::precision::{to_decimal_string, Prec};
use crate::report::{Method, RecoveryReport};
use crate::sensor::SensorPoint;
use crate::sequences::{CoefficientSequence, EigenvalueSequence, SequenceNormKind, SumClass};
use crate::vandermonde::{recover_holder, VandermondeConfig};

/// Shared configuration for the inversion pipelines.
#[derive(Clone, Debug)]
pub struct InverseConfig {
    pub biortho: BiorthoConfig,
    pub peel: PeelConfig,
    pub vandermonde: VandermondeConfig,
    /// Number of exponents made available to the series routes.
    pub max_modes: usize,
    /// Calibrated constant for reported theorem-shaped bounds.
    pub cert_constant: f64,
    /// Weighted-ball decay used by the Hölder route on finitely supported
    /// problems (`a ∈ m·B_{ℓ¹_{α,β}}`).
    pub holder_alpha: f64,
    pub holder_beta: f64,
}

impl Default for InverseConfig {
    fn default() -> Self {
        // Exercise the restriction mechanism: measure ε on an interior
        // window by default.
        let biortho = BiorthoConfig {
            window: IntervalUnion::single(0.25, 0.75).ok(),
            ..BiorthoConfig::default()
        };
        Self {
            biortho,
            peel: PeelConfig::default(),
            vandermonde: VandermondeConfig::default(),
            max_modes: 32,
            cert_constant: 1.0,
            holder_alpha: 1.0,
            holder_beta: 3.0,
        }
    }
}

impl InverseConfig {
    /// Rescales the default measurement window `[T/4, 3T/4]` to a horizon.
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.biortho.window = IntervalUnion::single(horizon * 0.25, horizon * 0.75).ok();
        self
    }
}

/// What was recovered.
#[derive(Clone, Debug)]
pub enum InversionEstimate {
    Datum(InitialDatum),
    Tensor(TensorDatum),
}

impl InversionEstimate {
    pub fn as_datum(&self) -> Option<&InitialDatum> {
        match self {
            InversionEstimate::Datum(d) => Some(d),
            InversionEstimate::Tensor(_) => None,
        }
    }

    pub fn as_tensor(&self) -> Option<&TensorDatum> {
        match self {
            InversionEstimate::Tensor(t) => Some(t),
            InversionEstimate::Datum(_) => None,
        }
    }
}

/// An inversion outcome: the estimate, the series-level report(s), and a
/// theorem-shaped bound evaluated with calibrated constants.
#[derive(Clone, Debug)]
pub struct InversionResult {
    pub estimate: InversionEstimate,
    pub reports: Vec<RecoveryReport>,
    pub theorem_bound: Float,
    /// Rate family of the bound: `point-log`, `point-double-log`,
    /// `point-holder`, `flux-log`, or `tensor-log`.
    pub theorem: String,
    pub diagnostics: BTreeMap<String, String>,
}

impl InversionResult {
    fn note(&mut self, key: &str, value: impl std::fmt::Display) {
        self.diagnostics.insert(key.into(), value.to_string());
    }

    pub fn to_json(&self) -> Value {
        let estimate = match &self.estimate {
            InversionEstimate::Datum(d) => json!({
                "kind": "datum",
                "mu": d.domain_scale(),
                "coeffs": coeff_strings(d.coeffs()),
            }),
            InversionEstimate::Tensor(t) => json!({
                "kind": "tensor",
                "factors": t
                    .factors()
                    .iter()
                    .map(|f| json!({"mu": f.domain_scale(), "coeffs": coeff_strings(f.coeffs())}))
                    .collect::<Vec<_>>(),
            }),
        };
        json!({
            "estimate": estimate,
            "theorem": self.theorem,
            "theorem_bound": to_decimal_string(&self.theorem_bound),
            "reports": self.reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
            "diagnostics": self.diagnostics,
        })
    }
}

fn coeff_strings(c: &CoefficientSequence) -> Vec<Value> {
    c.entries()
        .iter()
        .map(|x| Value::String(to_decimal_string(x)))
        .collect()
}

/// Dispatches one series recovery by method, with regime checks.
#[allow(clippy::too_many_arguments)]
fn run_route(
    method: Method,
    data: &SeriesData,
    seq: &EigenvalueSequence,
    horizon: f64,
    theta_series: f64,
    m_series: f64,
    cfg: &InverseConfig,
    prec: Prec,
) -> Result<RecoveryReport> {
    match method {
        Method::Biortho => {
            if seq.reciprocal_sum_class() != SumClass::Summable {
                return Err(Error::RegimeMismatch {
                    method: "biortho".into(),
                    reason: "exponent reciprocals are not summable (needs 2α > 1); \
                             use peeling or vandermonde"
                        .into(),
                });
            }
            let mut bcfg = cfg.biortho.clone();
            if bcfg.window.is_none() {
                bcfg.window = IntervalUnion::single(horizon * 0.25, horizon * 0.75).ok();
            }
            recover_log(data, seq, horizon, theta_series.max(0.1), m_series, &bcfg, prec)
        }
        Method::Peeling => {
            let (report, _trace) =
                recover_peeling(data, seq, theta_series.max(0.1), m_series, &cfg.peel, prec)?;
            Ok(report)
        }
        Method::Vandermonde => recover_holder(
            data,
            seq,
            m_series,
            cfg.holder_alpha,
            cfg.holder_beta,
            &cfg.vandermonde,
            prec,
        ),
    }
}

/// Recovers the initial datum from a point measurement `u_f^α(x0, ·)`.
///
/// `theta` and `m` declare the Sobolev ball `f ∈ m·B_{H^θ}`. The biorthogonal
/// route requires `2α > 1`; peeling additionally requires `θ > 3/2` (its
/// weighted-ℓ¹ chain needs that much smoothness). When `truth` is supplied
/// (test mode) the relative L² error is recorded in the diagnostics.
#[allow(clippy::too_many_arguments)]
pub fn recover_initial_point(
    sensor: &SensorPoint,
    alpha: f64,
    data: &SeriesData,
    horizon: f64,
    theta: f64,
    m: f64,
    method: Method,
    cfg: &InverseConfig,
    truth: Option<&InitialDatum>,
    prec: Prec,
) -> Result<InversionResult> {
    if alpha <= 0.0 {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    if sensor.verification().is_none() {
        return Err(Error::RegimeMismatch {
            method: method.to_string(),
            reason: "point channel requires a verified sensor".into(),
        });
    }
    let mu = sensor.mu();
    let seq = EigenvalueSequence::power(alpha, mu, cfg.max_modes, prec)?;

    // Peeling's double-log chain works in the ℓ^{1,2} ball, which needs the
    // datum smoothness θ = θ' + 1 with θ' > 1/2.
    let (theta_series, m_series, shape) = match method {
        // The inverse mode map divides by sin(k·x0/mu), amplifying mode k
        // by up to k/d0; demanding one extra tail order in the truncation
        // rule absorbs that weight (the k-weighted ball the map induces).
        Method::Biortho => (theta + 1.0, m, "point-log"),
        Method::Peeling => {
            if theta <= 1.5 {
                return Err(Error::RegimeMismatch {
                    method: "peeling".into(),
                    reason: format!(
                        "double-log point inversion needs theta > 3/2, got {theta}"
                    ),
                });
            }
            let c_theta = c_theta_constant(theta - 1.0, prec);
            (2.0, c_theta.to_f64() * m, "point-double-log")
        }
        Method::Vandermonde => (theta, m, "point-holder"),
    };

    let report = run_route(method, data, &seq, horizon, theta_series, m_series, cfg, prec)?;
    if !sensor.is_verified_to(report.estimate.support()) {
        return Err(Error::VerificationRange {
            verified: sensor.verification().map_or(0, |v| v.k_range),
            needed: report.estimate.support(),
        });
    }
    let datum = crate::sensor::series_to_mode(&report.estimate, sensor, prec)?;

    // ε entering the bound is what the route measured/declared.
    let epsilon = report
        .diagnostics
        .get("epsilon")
        .map(|s| prec.parse(s))
        .transpose()?
        .unwrap_or_else(|| prec.eps());
    let theorem_bound = match shape {
        "point-log" => {
            // ‖f‖ ≲ ‖f‖_{H^θ}^{1/2}·‖a‖_{ℓ²}^{1/2} halves the series exponent.
            let abs_ln = epsilon.clone().ln().abs();
            prec.from_f64(cfg.cert_constant * m)
                * (prec.powf(&abs_ln, -theta / 2.0) + &epsilon)
        }
        "point-double-log" => {
            let c_theta = c_theta_constant(theta - 1.0, prec);
            let scaled = epsilon.clone() / (prec.from_f64(m) * c_theta);
            let lnln = scaled.ln().abs().ln().abs();
            prec.from_f64(cfg.cert_constant * m) * (prec.powf(&lnln, -0.25) + &epsilon)
        }
        _ => {
            // Hölder shape: reuse the route's certified objective value.
            report
                .certified_bound
                .clone()
                .unwrap_or_else(|| prec.from_f64(f64::NAN))
        }
    };

    let mut out = InversionResult {
        estimate: InversionEstimate::Datum(datum),
        reports: vec![report],
        theorem_bound,
        theorem: shape.into(),
        diagnostics: BTreeMap::new(),
    };
    out.note("alpha", alpha);
    out.note("epsilon", to_decimal_string(&epsilon));
    if let Some(t) = truth {
        let err = l2_datum_error(out.estimate.as_datum().unwrap(), t, prec);
        out.note("l2_error", to_decimal_string(&err));
    }
    Ok(out)
}

/// Recovers the initial datum from the boundary flux `∂_x u_f^α(0, ·)`.
///
/// The flux series has coefficients `(k/mu)·f̂_k`; the truncation balances
/// the Gram amplification against the `H^β`-ball tail `m²/N^{2β}`, so the
/// series-level smoothness parameter is β itself. Sup-norm data requires
/// β > 1/2; an L²-declared noise model admits any β > 0.
#[allow(clippy::too_many_arguments)]
pub fn recover_initial_boundary(
    alpha: f64,
    mu: f64,
    data: &SeriesData,
    horizon: f64,
    beta: f64,
    m: f64,
    method: Method,
    cfg: &InverseConfig,
    truth: Option<&InitialDatum>,
    prec: Prec,
) -> Result<InversionResult> {
    if alpha <= 0.0 || mu <= 0.0 {
        return Err(Error::InvalidParameter(
            "alpha and mu must be positive".into(),
        ));
    }
    let sup_variant = match data {
        SeriesData::Sample(s) => s.noise_norm == NoiseNorm::Sup,
        SeriesData::Evaluator { .. } => true,
    };
    if sup_variant && beta <= 0.5 {
        return Err(Error::InvalidParameter(format!(
            "sup-norm flux inversion needs beta > 1/2, got {beta}"
        )));
    }
    if !sup_variant && beta <= 0.0 {
        return Err(Error::InvalidParameter(
            "flux inversion needs beta > 0".into(),
        ));
    }
    let seq = EigenvalueSequence::power(alpha, mu, cfg.max_modes, prec)?;
    // Flux coefficients live in a ball of radius ~ m/mu at smoothness β-1;
    // the truncation rule works at the f̂ level with exponent β.
    let m_series = m / mu * (cfg.max_modes as f64).max(1.0);
    let report = run_route(method, data, &seq, horizon, beta, m_series, cfg, prec)?;

    // Divide out the flux weight k/mu.
    let bits = prec.bits();
    let mu_f = prec.from_f64(mu);
    let entries = (1..=report.estimate.support())
        .map(|k| {
            Float::with_val(bits, report.estimate.get(k) * &mu_f) / prec.from_usize(k)
        })
        .collect();
    let datum = InitialDatum::new(CoefficientSequence::from_entries(entries, prec), mu)?;

    let epsilon = report
        .diagnostics
        .get("epsilon")
        .map(|s| prec.parse(s))
        .transpose()?
        .unwrap_or_else(|| prec.eps());
    let exponent = beta / alpha.max(beta);
    let abs_ln = epsilon.clone().ln().abs();
    let theorem_bound = prec.from_f64(cfg.cert_constant * m)
        * (prec.powf(&abs_ln, -exponent) + &epsilon);

    let mut out = InversionResult {
        estimate: InversionEstimate::Datum(datum),
        reports: vec![report],
        theorem_bound,
        theorem: "flux-log".into(),
        diagnostics: BTreeMap::new(),
    };
    out.note("alpha", alpha);
    out.note("beta", beta);
    out.note("bound_exponent", exponent);
    if let Some(t) = truth {
        let err = l2_datum_error(out.estimate.as_datum().unwrap(), t, prec);
        out.note("l2_error", to_decimal_string(&err));
    }
    Ok(out)
}

/// One hyperplane observation: the solution restricted to
/// `x_j = sensor.x0()`, tabulated on tensor quadrature grids over the
/// transverse axes and a time grid.
#[derive(Clone, Debug)]
pub struct HyperplaneSample {
    /// Fixed axis `j` (0-based).
    pub axis: usize,
    /// Verified sensor point on axis `j` (its `mu` is the axis scale).
    pub sensor: SensorPoint,
    /// Scales of all axes, in order.
    pub scales: Vec<f64>,
    /// Quadrature nodes per transverse axis (in axis order, skipping `j`).
    pub transverse_nodes: Vec<Vec<Float>>,
    /// Matching quadrature weights.
    pub transverse_weights: Vec<Vec<Float>>,
    pub times: Vec<Float>,
    /// `values[time][flattened transverse index]`, row-major over the
    /// transverse grids in order.
    pub values: Vec<Vec<Float>>,
    pub noise: f64,
    pub horizon: f64,
}

impl HyperplaneSample {
    /// Raw sup of the tabulated observation (the `Λ(f)` ingredient).
    pub fn sup(&self, prec: Prec) -> Float {
        let mut best = prec.zero();
        for row in &self.values {
            for v in row {
                let a = Float::with_val(prec.bits(), v.abs_ref());
                if a > best {
                    best = a;
                }
            }
        }
        best
    }

    pub fn to_json(&self) -> Value {
        let strings = |v: &[Float]| -> Vec<Value> {
            v.iter()
                .map(|x| Value::String(to_decimal_string(x)))
                .collect()
        };
        json!({
            "axis": self.axis,
            "sensor_x0": to_decimal_string(self.sensor.x0()),
            "sensor_mu": self.sensor.mu(),
            "sensor_k_range": self.sensor.verification().map(|v| v.k_range),
            "scales": self.scales,
            "transverse_nodes": self.transverse_nodes.iter().map(|v| Value::Array(strings(v))).collect::<Vec<_>>(),
            "transverse_weights": self.transverse_weights.iter().map(|v| Value::Array(strings(v))).collect::<Vec<_>>(),
            "times": strings(&self.times),
            "values": self.values.iter().map(|v| Value::Array(strings(v))).collect::<Vec<_>>(),
            "noise": self.noise,
            "horizon": self.horizon,
        })
    }

    pub fn from_json(v: &Value, prec: Prec) -> Result<Self> {
        let parse_list = |val: &Value| -> Result<Vec<Float>> {
            val.as_array()
                .ok_or_else(|| Error::InvalidParameter("expected array of decimals".into()))?
                .iter()
                .map(|x| match x {
                    Value::String(s) => prec.parse(s),
                    Value::Number(n) => prec.parse(&n.to_string()),
                    other => Err(Error::InvalidParameter(format!("bad decimal {other}"))),
                })
                .collect()
        };
        let parse_nested = |val: &Value| -> Result<Vec<Vec<Float>>> {
            val.as_array()
                .ok_or_else(|| Error::InvalidParameter("expected nested array".into()))?
                .iter()
                .map(&parse_list)
                .collect()
        };
        let field = |name: &str| -> Result<&Value> {
            v.get(name)
                .ok_or_else(|| Error::InvalidParameter(format!("hyperplane JSON needs `{name}`")))
        };
        let mu = field("sensor_mu")?
            .as_f64()
            .ok_or_else(|| Error::InvalidParameter("sensor_mu must be a number".into()))?;
        let x0 = prec.parse(
            field("sensor_x0")?
                .as_str()
                .ok_or_else(|| Error::InvalidParameter("sensor_x0 must be a string".into()))?,
        )?;
        let k_range = v
            .get("sensor_k_range")
            .and_then(Value::as_u64)
            .unwrap_or(64) as usize;
        let sensor = crate::sensor::verify_point(
            &crate::sensor::explicit_point(x0, mu, prec)?,
            k_range,
            prec,
        )?;
        Ok(Self {
            axis: field("axis")?
                .as_u64()
                .ok_or_else(|| Error::InvalidParameter("axis must be an integer".into()))?
                as usize,
            sensor,
            scales: field("scales")?
                .as_array()
                .ok_or_else(|| Error::InvalidParameter("scales must be an array".into()))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| Error::InvalidParameter("scale must be a number".into()))
                })
                .collect::<Result<Vec<_>>>()?,
            transverse_nodes: parse_nested(field("transverse_nodes")?)?,
            transverse_weights: parse_nested(field("transverse_weights")?)?,
            times: parse_list(field("times")?)?,
            values: parse_nested(field("values")?)?,
            noise: field("noise")?
                .as_f64()
                .ok_or_else(|| Error::InvalidParameter("noise must be a number".into()))?,
            horizon: field("horizon")?
                .as_f64()
                .ok_or_else(|| Error::InvalidParameter("horizon must be a number".into()))?,
        })
    }
}

/// Tabulates a hyperplane observation of a tensor datum (the forward map
/// for the tensor inversion), with optional sup-model noise.
#[allow(clippy::too_many_arguments)]
pub fn sample_hyperplane(
    td: &TensorDatum,
    axis: usize,
    sensor: &SensorPoint,
    alpha: f64,
    times: &[Float],
    noise: f64,
    seed: u64,
    horizon: f64,
    transverse_points: usize,
    prec: Prec,
) -> Result<HyperplaneSample> {
    use crate::quadrature::gauss_legendre;
    let d = td.dim();
    if axis >= d {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for dimension {d}"
        )));
    }
    let bits = prec.bits();
    let scales: Vec<f64> = td.factors().iter().map(|f| f.domain_scale()).collect();
    if (sensor.mu() - scales[axis]).abs() > 1e-12 * scales[axis] {
        return Err(Error::InvalidParameter(format!(
            "sensor scale {} does not match axis scale {}",
            sensor.mu(),
            scales[axis]
        )));
    }
    // Per-transverse-axis Gauss-Legendre grids on (0, mu_i π).
    let (base_nodes, base_weights) = gauss_legendre(transverse_points.max(8), prec);
    let mut transverse_nodes = Vec::new();
    let mut transverse_weights = Vec::new();
    for (i, sc) in scales.iter().enumerate() {
        if i == axis {
            continue;
        }
        let half = prec.from_f64(*sc) * prec.pi() / 2u32;
        let nodes: Vec<Float> = base_nodes
            .iter()
            .map(|x| Float::with_val(bits, &half + Float::with_val(bits, &half * x)))
            .collect();
        let weights: Vec<Float> = base_weights
            .iter()
            .map(|w| Float::with_val(bits, w * &half))
            .collect();
        transverse_nodes.push(nodes);
        transverse_weights.push(weights);
    }
    let grid_sizes: Vec<usize> = transverse_nodes.iter().map(Vec::len).collect();
    let total: usize = grid_sizes.iter().product::<usize>().max(1);

    let mut values = Vec::with_capacity(times.len());
    for (ti, t) in times.iter().enumerate() {
        let mut row = Vec::with_capacity(total);
        for flat in 0..total {
            // Point in the full domain with x_j pinned to the sensor.
            let mut x = Vec::with_capacity(d);
            let mut rest = flat;
            let mut gi = 0;
            for i in 0..d {
                if i == axis {
                    x.push(sensor.x0().clone());
                } else {
                    let n = grid_sizes[gi];
                    x.push(transverse_nodes[gi][rest % n].clone());
                    rest /= n;
                    gi += 1;
                }
            }
            let mut v = crate::forward::tensor_eval(td, alpha, &x, t, prec)?;
            if noise > 0.0 {
                let payload = (ti as u64) << 32 | flat as u64;
                let u = hash_unit(seed, payload);
                v += prec.from_f64((2.0 * u - 1.0) * noise);
            }
            row.push(v);
        }
        values.push(row);
    }
    Ok(HyperplaneSample {
        axis,
        sensor: sensor.clone(),
        scales,
        transverse_nodes,
        transverse_weights,
        times: times.to_vec(),
        values,
        noise,
        horizon,
    })
}

fn hash_unit(seed: u64, payload: u64) -> f64 {
    let mut z = seed ^ payload.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Projects the hyperplane observation onto the first transverse
/// eigenfunction and divides out the known transverse envelope, leaving
/// `g_j(t) = κ_j·u_{f_j}^α(x0_j, t)` with `κ_j = Π_{i≠j} f̂^{(i)}_1`.
pub fn project_hyperplane(
    hs: &HyperplaneSample,
    alpha: f64,
    prec: Prec,
) -> Result<crate::forward::DirichletSample> {
    let bits = prec.bits();
    let grid_sizes: Vec<usize> = hs.transverse_nodes.iter().map(Vec::len).collect();
    let total: usize = grid_sizes.iter().product::<usize>().max(1);
    // Transverse normalization Π (mu_i π / 2).
    let mut norm = prec.one();
    let mut trans_scales = Vec::new();
    for (i, sc) in hs.scales.iter().enumerate() {
        if i == hs.axis {
            continue;
        }
        trans_scales.push(*sc);
        norm *= prec.from_f64(*sc) * prec.pi() / 2u32;
    }
    // Envelope exponent Σ_{i≠j} (1/mu_i)^{2α}.
    let mut envelope_rate = prec.zero();
    for sc in &trans_scales {
        envelope_rate += prec.powf(&prec.from_f64(1.0 / sc), 2.0 * alpha);
    }

    let mut out_values = Vec::with_capacity(hs.times.len());
    for (ti, t) in hs.times.iter().enumerate() {
        let mut acc = prec.zero();
        for flat in 0..total {
            let mut weight = prec.one();
            let mut rest = flat;
            for (gi, n) in grid_sizes.iter().enumerate() {
                let idx = rest % n;
                rest /= n;
                let node = &hs.transverse_nodes[gi][idx];
                let w = &hs.transverse_weights[gi][idx];
                let phase = Float::with_val(bits, node / prec.from_f64(trans_scales[gi]));
                weight *= Float::with_val(bits, w * phase.sin());
            }
            acc += weight * &hs.values[ti][flat];
        }
        let envelope = (-Float::with_val(bits, &envelope_rate * t)).exp();
        out_values.push(acc / &norm / envelope);
    }
    crate::forward::DirichletSample::new(
        hs.times.clone(),
        out_values,
        hs.noise, // conservative: projection averages noise, never grows sup
        NoiseNorm::Sup,
        hs.horizon,
        None,
    )
}

/// Tensor inversion from `d` hyperplane measurements.
///
/// Per axis: project, run the 1-D recovery, divide by the sensor sines. The
/// resulting factor `w_j = κ_j f̂^{(j)}` has first coefficient
/// `w_{j,1} = Π_i f̂^{(i)}_1` for every axis, so normalizing each factor by
/// its own first coefficient and restoring the common product `P̂` fixes
/// all scalars at once: `f = P̂ · ⊗_j (w_j / w_{j,1})`.
#[allow(clippy::too_many_arguments)]
pub fn recover_tensor(
    channels: &[HyperplaneSample],
    alpha: f64,
    eta: f64,
    theta: f64,
    m: f64,
    method: Method,
    cfg: &InverseConfig,
    truth: Option<&TensorDatum>,
    prec: Prec,
) -> Result<InversionResult> {
    let d = channels.len();
    if d == 0 {
        return Err(Error::EmptyInput("tensor inversion needs channels"));
    }
    let mut axes: Vec<usize> = channels.iter().map(|c| c.axis).collect();
    axes.sort_unstable();
    if axes != (0..d).collect::<Vec<_>>() {
        return Err(Error::InvalidParameter(
            "need exactly one hyperplane channel per axis".into(),
        ));
    }
    // Test-mode admissibility: every factor must clear the declared
    // sup-norm floor, or the amplitude bookkeeping below is vacuous.
    if let Some(t) = truth {
        for (j, f) in t.factors().iter().enumerate() {
            let sup = factor_sup(f, prec);
            if sup.to_f64() < eta {
                return Err(Error::Domain(format!(
                    "factor {j} has sup-norm {} below the declared eta = {eta}",
                    sup.to_f64()
                )));
            }
        }
    }

    let bits = prec.bits();
    let mut lambda_raw = prec.zero();
    let mut factors_w: Vec<CoefficientSequence> = Vec::with_capacity(d);
    let mut reports = Vec::with_capacity(d);
    let mut sorted: Vec<&HyperplaneSample> = channels.iter().collect();
    sorted.sort_by_key(|c| c.axis);
    for hs in &sorted {
        let sup = hs.sup(prec);
        if sup > lambda_raw {
            lambda_raw = sup;
        }
        let projected = project_hyperplane(hs, alpha, prec)?;
        let mu_j = hs.scales[hs.axis];
        let seq = EigenvalueSequence::power(alpha, mu_j, cfg.max_modes, prec)?;
        let data = SeriesData::Sample(&projected);
        // The projected series scale carries the unknown κ_j; use a data-
        // driven ball radius.
        let scale_proxy = projected
            .sup_on(None, prec)
            .to_f64()
            .max(m)
            .max(1e-6);
        let report = run_route(
            method,
            &data,
            &seq,
            hs.horizon,
            theta,
            2.0 * scale_proxy,
            cfg,
            prec,
        )?;
        if !hs.sensor.is_verified_to(report.estimate.support()) {
            return Err(Error::VerificationRange {
                verified: hs.sensor.verification().map_or(0, |v| v.k_range),
                needed: report.estimate.support(),
            });
        }
        let w = crate::sensor::series_to_mode(&report.estimate, &hs.sensor, prec)?;
        factors_w.push(w.coeffs().clone());
        reports.push(report);
    }

    // Scalar fixing: every w_{j,1} estimates P = Π f̂^{(i)}_1.
    let firsts: Vec<Float> = factors_w.iter().map(|w| w.get(1)).collect();
    let mut p_hat = prec.zero();
    for (j, w1) in firsts.iter().enumerate() {
        if w1.is_zero() {
            return Err(Error::ScalarFixing(format!(
                "axis {j}: first transverse Fourier coefficient vanished"
            )));
        }
        p_hat += w1;
    }
    p_hat /= prec.from_usize(d);
    let mut spread = prec.zero();
    for w1 in &firsts {
        let dev = Float::with_val(bits, w1 - &p_hat).abs();
        if dev > spread {
            spread = dev;
        }
    }
    let rel_spread = spread.clone() / p_hat.clone().abs();
    if rel_spread > 0.5f64 {
        return Err(Error::ScalarFixing(format!(
            "axis amplitude products disagree (relative spread {})",
            rel_spread.to_f64()
        )));
    }

    // Assemble: normalized factors with the product assigned to axis 0.
    let mut factors = Vec::with_capacity(d);
    for (j, w) in factors_w.iter().enumerate() {
        let scale = if j == 0 {
            Float::with_val(bits, &p_hat / &firsts[j])
        } else {
            prec.one() / &firsts[j]
        };
        let coeffs = w.scale(&scale);
        factors.push(InitialDatum::new(coeffs, sorted[j].scales[j])?);
    }
    let tensor = TensorDatum::new(factors, true)?;

    // Bound shape dC(|ln(η^{d-1}Λ)|^{-1} + Λ).
    let eta_pow = prec.from_f64(eta.powi(d as i32 - 1));
    let arg = Float::with_val(bits, &eta_pow * &lambda_raw);
    let theorem_bound = if arg > 0f64 && arg < 1f64 {
        prec.from_f64(cfg.cert_constant * d as f64)
            * (arg.clone().ln().abs().recip() + &lambda_raw)
    } else {
        prec.from_f64(cfg.cert_constant * d as f64) * (prec.one() + &lambda_raw)
    };

    let mut out = InversionResult {
        estimate: InversionEstimate::Tensor(tensor),
        reports,
        theorem_bound,
        theorem: "tensor-log".into(),
        diagnostics: BTreeMap::new(),
    };
    out.note("lambda_measured", to_decimal_string(&lambda_raw));
    out.note("scalar_spread", to_decimal_string(&rel_spread));
    out.note("eta", eta);
    if let Some(t) = truth {
        let err = tensor_l2_error(out.estimate.as_tensor().unwrap(), t, prec);
        out.note("l2_error", to_decimal_string(&err));
    }
    Ok(out)
}

/// The embedding constant `c_θ = (Σ_{k≥1} ⟨k⟩^{-2θ})^{1/2}` for θ > 1/2,
/// summed to a long prefix with the integral tail bound added.
pub fn c_theta_constant(theta: f64, prec: Prec) -> Float {
    assert!(theta > 0.5, "c_theta needs theta > 1/2");
    let cutoff = 2000usize;
    let mut sum = prec.zero();
    for k in 1..=cutoff {
        let bracket = prec.from_usize(1 + k * k);
        sum += prec.powf(&bracket, -theta);
    }
    // Σ_{k>K} ⟨k⟩^{-2θ} ≤ ∫_K^∞ x^{-2θ} dx = K^{1-2θ}/(2θ-1).
    let tail = prec.powf(&prec.from_usize(cutoff), 1.0 - 2.0 * theta)
        / prec.from_f64(2.0 * theta - 1.0);
    (sum + tail).sqrt()
}

/// `‖f - g‖_{L²(0, mu·π)}` via Parseval on the coefficient difference.
pub fn l2_datum_error(f: &InitialDatum, g: &InitialDatum, prec: Prec) -> Float {
    let diff = f.coeffs().sub(g.coeffs());
    let half_len = prec.from_f64(f.domain_scale()) * prec.pi() / 2u32;
    half_len.sqrt() * diff.norm(SequenceNormKind::L2).expect("l2")
}

/// `‖f - g‖_{L²(Ω)}` for tensor data, via Parseval over the product grid.
pub fn tensor_l2_error(f: &TensorDatum, g: &TensorDatum, prec: Prec) -> Float {
    assert_eq!(f.dim(), g.dim());
    let bits = prec.bits();
    let d = f.dim();
    let supports: Vec<usize> = (0..d)
        .map(|i| {
            f.factors()[i]
                .coeffs()
                .support()
                .max(g.factors()[i].coeffs().support())
        })
        .collect();
    let total: usize = supports.iter().map(|s| s.max(&1)).product();
    let mut sum = prec.zero();
    for flat in 0..total {
        let mut rest = flat;
        let mut pf = prec.one();
        let mut pg = prec.one();
        for (i, support) in supports.iter().enumerate() {
            let s = (*support).max(1);
            let k = rest % s + 1;
            rest /= s;
            pf *= f.factors()[i].coeffs().get(k);
            pg *= g.factors()[i].coeffs().get(k);
        }
        sum += Float::with_val(bits, (pf - pg).square_ref());
    }
    let mut norm = prec.one();
    for i in 0..d {
        norm *= prec.from_f64(f.factors()[i].domain_scale()) * prec.pi() / 2u32;
    }
    norm.sqrt() * sum.sqrt()
}

fn factor_sup(f: &InitialDatum, prec: Prec) -> Float {
    let grid = crate::forward::uniform_grid(
        1e-9,
        f.domain_scale() * std::f64::consts::PI * (1.0 - 1e-9),
        512,
        prec,
    );
    let mut best = prec.zero();
    for x in &grid {
        let v = heat_point(f, 1.0, x, &prec.zero(), prec)
            .expect("grid inside the interval")
            .abs();
        if v > best {
            best = v;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{sample, uniform_grid, ExactSeries};
    use crate::sensor::{propose_point, verify_point, Strategy};

    fn p() -> Prec {
        Prec::new(256)
    }

    fn golden(prec: Prec) -> SensorPoint {
        verify_point(&propose_point(Strategy::Golden, 1.0, prec).unwrap(), 64, prec).unwrap()
    }

    fn random_datum(support: usize, seed: u64) -> InitialDatum {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        InitialDatum::new(
            CoefficientSequence::from_entries(
                (0..support)
                    .map(|_| p().from_f64(2.0 * rng.gen::<f64>() - 1.0))
                    .collect(),
                p(),
            ),
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn point_inversion_noiseless_biortho() {
        let sensor = golden(p());
        let f = random_datum(5, 3);
        let a = crate::sensor::mode_to_series(&f, &sensor, p()).unwrap();
        let seq = EigenvalueSequence::power(1.0, 1.0, 32, p()).unwrap();
        let truth_series = ExactSeries {
            coeffs: &a,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator {
            f: &truth_series,
            noise: Some(0.0),
        };
        let result = recover_initial_point(
            &sensor,
            1.0,
            &data,
            1.0,
            1.0,
            2.0,
            Method::Biortho,
            &InverseConfig::default(),
            Some(&f),
            p(),
        )
        .unwrap();
        let err = l2_datum_error(result.estimate.as_datum().unwrap(), &f, p());
        let rel = err.clone() / f.l2_norm(p());
        assert!(rel < 1e-6, "relative L2 error {rel}");
        assert!(result.theorem_bound.is_finite());
        assert!(result.diagnostics.contains_key("l2_error"));
    }

    #[test]
    fn unverified_sensor_is_refused() {
        let sensor = propose_point(Strategy::Golden, 1.0, p()).unwrap();
        let f = random_datum(3, 1);
        let seq = EigenvalueSequence::power(1.0, 1.0, 8, p()).unwrap();
        let a = CoefficientSequence::unit(1, p().one(), p());
        let truth_series = ExactSeries {
            coeffs: &a,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator {
            f: &truth_series,
            noise: Some(0.0),
        };
        let err = recover_initial_point(
            &sensor,
            1.0,
            &data,
            1.0,
            1.0,
            1.0,
            Method::Biortho,
            &InverseConfig::default(),
            Some(&f),
            p(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RegimeMismatch { .. }));
    }

    #[test]
    fn biortho_refused_in_divergent_regime() {
        let sensor = golden(p());
        let seq = EigenvalueSequence::power(0.5, 1.0, 8, p()).unwrap();
        let a = CoefficientSequence::unit(1, p().one(), p());
        let truth_series = ExactSeries {
            coeffs: &a,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator {
            f: &truth_series,
            noise: Some(0.0),
        };
        let err = recover_initial_point(
            &sensor,
            0.5,
            &data,
            1.0,
            2.0,
            1.0,
            Method::Biortho,
            &InverseConfig::default(),
            None,
            p(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::RegimeMismatch { .. }));
    }

    #[test]
    fn point_inversion_peeling_small_alpha() {
        let sensor = golden(p());
        let f = random_datum(3, 9);
        let a = crate::sensor::mode_to_series(&f, &sensor, p()).unwrap();
        let seq = EigenvalueSequence::power(0.5, 1.0, 32, p()).unwrap();
        let truth_series = ExactSeries {
            coeffs: &a,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator {
            f: &truth_series,
            noise: Some(0.0),
        };
        let result = recover_initial_point(
            &sensor,
            0.5,
            &data,
            1.0,
            2.0,
            4.0,
            Method::Peeling,
            &InverseConfig::default(),
            Some(&f),
            p(),
        )
        .unwrap();
        assert_eq!(result.theorem, "point-double-log");
        // Peeling recovers a k̃-prefix; with refinement the recovered modes
        // are accurate, so compare on the overlap.
        let est = result.estimate.as_datum().unwrap();
        let overlap = est.coeffs().support().min(3);
        assert!(overlap >= 1);
        for k in 1..=overlap {
            let err = Float::with_val(p().bits(), est.coeffs().get(k) - f.coeffs().get(k))
                .abs();
            assert!(err < 1e-6, "mode {k} error {err}");
        }
    }

    #[test]
    fn flux_inversion_single_mode_exact() {
        let f = InitialDatum::new(CoefficientSequence::unit(1, p().one(), p()), 1.0).unwrap();
        let seq = EigenvalueSequence::power(1.0, 1.0, 16, p()).unwrap();
        let b = crate::forward::flux_coefficients(&f, p());
        let flux_series = ExactSeries {
            coeffs: &b,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator {
            f: &flux_series,
            noise: Some(0.0),
        };
        let result = recover_initial_boundary(
            1.0,
            1.0,
            &data,
            1.0,
            1.0,
            1.0,
            Method::Biortho,
            &InverseConfig::default(),
            Some(&f),
            p(),
        )
        .unwrap();
        let err = l2_datum_error(result.estimate.as_datum().unwrap(), &f, p());
        assert!(err < 1e-8, "single-mode flux inversion error {err}");
    }

    #[test]
    fn flux_inversion_four_modes() {
        let f = random_datum(4, 17);
        let seq = EigenvalueSequence::power(1.0, 1.0, 24, p()).unwrap();
        let b = crate::forward::flux_coefficients(&f, p());
        let flux_series = ExactSeries {
            coeffs: &b,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator {
            f: &flux_series,
            noise: Some(0.0),
        };
        let result = recover_initial_boundary(
            1.0,
            1.0,
            &data,
            1.0,
            1.0,
            2.0,
            Method::Biortho,
            &InverseConfig::default(),
            Some(&f),
            p(),
        )
        .unwrap();
        let err = l2_datum_error(result.estimate.as_datum().unwrap(), &f, p());
        let rel = err.clone() / f.l2_norm(p());
        assert!(rel < 1e-6, "flux 4-mode relative error {rel}");
        // β too small for the sup variant is refused.
        let err = recover_initial_boundary(
            1.0,
            1.0,
            &data,
            1.0,
            0.4,
            2.0,
            Method::Biortho,
            &InverseConfig::default(),
            None,
            p(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    fn tensor_fixture(seed: u64) -> (TensorDatum, Vec<HyperplaneSample>) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut make = |support: usize, mu: f64| {
            let mut entries: Vec<Float> = (0..support)
                .map(|_| p().from_f64(2.0 * rng.gen::<f64>() - 1.0))
                .collect();
            // Keep the first coefficient well away from zero for stable
            // scalar fixing.
            if entries[0].clone().abs() < 0.3 {
                entries[0] = p().from_f64(if entries[0] < 0f64 { -0.8 } else { 0.8 });
            }
            InitialDatum::new(CoefficientSequence::from_entries(entries, p()), mu).unwrap()
        };
        let f1 = make(3, 1.0);
        let f2 = make(2, 1.0);
        let td = TensorDatum::new(vec![f1, f2], true).unwrap();
        let times = uniform_grid(0.0, 1.0, 1025, p());
        let sensor = golden(p());
        let channels: Vec<HyperplaneSample> = (0..2)
            .map(|axis| {
                sample_hyperplane(&td, axis, &sensor, 1.0, &times, 0.0, 1, 1.0, 24, p())
                    .unwrap()
            })
            .collect();
        (td, channels)
    }

    #[test]
    fn tensor_inversion_noiseless() {
        let (td, channels) = tensor_fixture(23);
        let result = recover_tensor(
            &channels,
            1.0,
            0.05,
            1.0,
            2.0,
            Method::Biortho,
            &InverseConfig::default(),
            Some(&td),
            p(),
        )
        .unwrap();
        let est = result.estimate.as_tensor().unwrap();
        let err = tensor_l2_error(est, &td, p());
        let rel = err.clone() / td.l2_norm(p());
        assert!(rel < 1e-4, "tensor relative L2 error {rel}");

        // Product-norm identity at working precision.
        let direct = est.l2_norm(p());
        let mut product = p().one();
        for f in est.factors() {
            product *= f.l2_norm(p());
        }
        let gap = Float::with_val(p().bits(), &direct - &product).abs();
        assert!(gap < 1e-60);
    }

    #[test]
    fn tensor_eta_violation_refused() {
        let (td, channels) = tensor_fixture(29);
        let err = recover_tensor(
            &channels,
            1.0,
            1e3, // impossible floor
            1.0,
            2.0,
            Method::Biortho,
            &InverseConfig::default(),
            Some(&td),
            p(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn projection_recovers_scaled_point_series() {
        // The projected hyperplane series must equal κ_j·u_{f_j}(x0, ·).
        let (td, channels) = tensor_fixture(31);
        let hs = &channels[0];
        let projected = project_hyperplane(hs, 1.0, p()).unwrap();
        let kappa = td.factors()[1].coeffs().get(1); // f̂^{(2)}_1
        for (t, v) in projected.times().iter().zip(projected.values()).step_by(64) {
            let expect = kappa.clone()
                * heat_point(&td.factors()[0], 1.0, hs.sensor.x0(), t, p()).unwrap();
            let err = Float::with_val(p().bits(), v - &expect).abs();
            assert!(err < 1e-20, "projection mismatch {err} at t={}", t.to_f64());
        }
    }

    #[test]
    fn point_inversion_with_noise_is_stable() {
        let sensor = golden(p());
        let f = random_datum(4, 41);
        let a = crate::sensor::mode_to_series(&f, &sensor, p()).unwrap();
        let seq = EigenvalueSequence::power(1.0, 1.0, 32, p()).unwrap();
        let truth_series = ExactSeries {
            coeffs: &a,
            exponents: &seq,
            prec: p(),
        };
        let times = uniform_grid(0.0, 1.0, 1025, p());
        let noisy = sample(&truth_series, &times, 1e-8, NoiseNorm::Sup, 1.0, Some(5), p())
            .unwrap();
        let data = SeriesData::Sample(&noisy);
        let result = recover_initial_point(
            &sensor,
            1.0,
            &data,
            1.0,
            1.0,
            2.0,
            Method::Biortho,
            &InverseConfig::default(),
            Some(&f),
            p(),
        )
        .unwrap();
        let err = l2_datum_error(result.estimate.as_datum().unwrap(), &f, p());
        let rel = (err.clone() / f.l2_norm(p())).to_f64();
        assert!(rel < 0.2, "noisy point inversion error {rel}");
    }
}
