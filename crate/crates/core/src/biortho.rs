//! Biorthogonal-family recovery (the log-stability route).
//!
//! For a summable exponent family (`Σ 1/λ_k < ∞`) the exponentials
//! `{e^{-λ_k t}}` admit a biorthogonal set `{ψ_n}` in `L²(0,T)`, so each
//! coefficient is a linear functional of the data: `a_n = ∫ F ψ_n`. The
//! finite-section family is computed by inverting the Gram matrix
//! `G_{jk} = ∫_0^T e^{-(λ_j+λ_k)t} dt = (1 - e^{-(λ_j+λ_k)T})/(λ_j+λ_k)`,
//! whose conditioning grows like `e^{cN}` — hence the elevated-precision
//! factorization with iterative refinement, and the truncation rule that
//! balances `e^{CN}ε²` against the smoothness tail `N^{-2θ}`.

use rug::Float;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::forward::{IntervalUnion, SeriesData, SeriesEval};
use crate::linalg::{solve_spd_refined, Matrix};
use crate::precision::{to_decimal_string, Prec};
use crate::report::{Method, RecoveryReport};
use crate::sequences::{CoefficientSequence, EigenvalueSequence, SumClass};

/// Tuning knobs for the biorthogonal route.
#[derive(Clone, Debug)]
pub struct BiorthoConfig {
    /// Minimum quadrature node count.
    pub quad_min_nodes: usize,
    /// Extra nodes per recovered coefficient: `M = max(min, factor·N)`.
    pub quad_node_factor: usize,
    /// Hard cap on the selected truncation.
    pub max_truncation: usize,
    /// Guard modes appended to the extraction section beyond the selected
    /// head. The finite section is biorthogonal only to its own modes, so
    /// an unguarded section aliases the first unmodeled exponential into
    /// the deepest kept coefficients; guards push that aliasing out while
    /// the head functional norms stay near their limiting values.
    pub section_guard: usize,
    /// Constant `C` in the truncation rule `e^{CÑ}ε² ≤ Ñ^{-2θ}`; calibrated
    /// from a pilot family when absent.
    pub trunc_constant: Option<f64>,
    /// Calibrated constant for the reported log-stability bound.
    pub cert_constant: f64,
    /// Window `B` over which the data norm ε is measured; full `[0,T]` when
    /// absent.
    pub window: Option<IntervalUnion>,
    /// Grid points per interval for sup-norm measurements.
    pub grid_points: usize,
}

impl Default for BiorthoConfig {
    fn default() -> Self {
        Self {
            quad_min_nodes: 64,
            quad_node_factor: 8,
            max_truncation: 20,
            section_guard: 4,
            trunc_constant: None,
            cert_constant: 1.0,
            window: None,
            grid_points: 512,
        }
    }
}

/// Gram matrix of `{e^{-λ_k t}}` in `L²(0,T)`, by the closed-form integral.
pub fn gram_matrix(
    seq: &EigenvalueSequence,
    horizon: &Float,
    n: usize,
    prec: Prec,
) -> Result<Matrix> {
    if n > seq.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: seq.len(),
        });
    }
    if !(*horizon > 0f64) {
        return Err(Error::InvalidParameter("horizon must be positive".into()));
    }
    let bits = prec.bits();
    Ok(Matrix::from_fn(n, n, prec, |j, k| {
        let lam_sum = Float::with_val(bits, seq.value(j + 1) + seq.value(k + 1));
        let decay = (-Float::with_val(bits, &lam_sum * horizon)).exp();
        (prec.one() - decay) / lam_sum
    }))
}

/// The finite-section biorthogonal family `ψ_n(t) = Σ_k C_{nk} e^{-λ_k t}`.
#[derive(Clone, Debug)]
pub struct BiorthoFamily {
    horizon: Float,
    lambda: Vec<Float>,
    combo: Matrix,
    psi_norms: Vec<Float>,
    precision_bits: u32,
    residual: Float,
}

impl BiorthoFamily {
    pub fn truncation(&self) -> usize {
        self.lambda.len()
    }

    pub fn horizon(&self) -> &Float {
        &self.horizon
    }

    pub fn lambda(&self) -> &[Float] {
        &self.lambda
    }

    pub fn combo(&self) -> &Matrix {
        &self.combo
    }

    /// `‖ψ_n‖_{L²(0,T)}`, 1-based.
    pub fn psi_norm(&self, n: usize) -> &Float {
        &self.psi_norms[n - 1]
    }

    pub fn psi_norms(&self) -> &[Float] {
        &self.psi_norms
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    /// Achieved biorthogonality residual
    /// `max_{n,m} |∫ ψ_n e^{-λ_m t} dt - δ_{nm}|` of the stored family.
    pub fn residual(&self) -> &Float {
        &self.residual
    }

    /// Evaluates `ψ_n(t)`, 1-based.
    pub fn psi_value(&self, n: usize, t: &Float, prec: Prec) -> Float {
        let bits = prec.bits();
        let mut sum = prec.zero();
        for (k, lam) in self.lambda.iter().enumerate() {
            let decay = (-Float::with_val(bits, lam * t)).exp();
            sum += self.combo.at(n - 1, k) * decay;
        }
        sum
    }

    pub fn to_json(&self) -> Value {
        let n = self.truncation();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let row: Vec<Value> = (0..n)
                .map(|j| Value::String(to_decimal_string(self.combo.at(i, j))))
                .collect();
            rows.push(Value::Array(row));
        }
        json!({
            "T": to_decimal_string(&self.horizon),
            "N": n,
            "precision_bits": self.precision_bits,
            "lambda": self.lambda.iter().map(|x| Value::String(to_decimal_string(x))).collect::<Vec<_>>(),
            "combo": rows,
            "psi_norms": self.psi_norms.iter().map(|x| Value::String(to_decimal_string(x))).collect::<Vec<_>>(),
            "residual": to_decimal_string(&self.residual),
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bits = v
            .get("precision_bits")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::InvalidParameter("family JSON needs precision_bits".into()))?
            as u32;
        let prec = Prec::new(bits);
        let n = v
            .get("N")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::InvalidParameter("family JSON needs N".into()))?
            as usize;
        let parse_list = |key: &str| -> Result<Vec<Float>> {
            v.get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| Error::InvalidParameter(format!("family JSON needs `{key}`")))?
                .iter()
                .map(|x| {
                    prec.parse(x.as_str().ok_or_else(|| {
                        Error::InvalidParameter(format!("`{key}` entries must be strings"))
                    })?)
                })
                .collect()
        };
        let lambda = parse_list("lambda")?;
        let psi_norms = parse_list("psi_norms")?;
        let rows = v
            .get("combo")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidParameter("family JSON needs `combo`".into()))?;
        if rows.len() != n || lambda.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: rows.len(),
            });
        }
        let mut combo = Matrix::zeros(n, n, prec);
        for (i, row) in rows.iter().enumerate() {
            let row = row
                .as_array()
                .ok_or_else(|| Error::InvalidParameter("combo rows must be arrays".into()))?;
            for (j, x) in row.iter().enumerate() {
                *combo.at_mut(i, j) = prec.parse(x.as_str().ok_or_else(|| {
                    Error::InvalidParameter("combo entries must be strings".into())
                })?)?;
            }
        }
        let horizon = prec.parse(
            v.get("T")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::InvalidParameter("family JSON needs T".into()))?,
        )?;
        let residual = prec.parse(
            v.get("residual")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::InvalidParameter("family JSON needs residual".into()))?,
        )?;
        Ok(Self {
            horizon,
            lambda,
            combo,
            psi_norms,
            precision_bits: bits,
            residual,
        })
    }
}

/// Builds the biorthogonal family of size `n` stored at `prec` bits.
///
/// The Gram system is factorized at doubled precision with iterative
/// refinement; the returned family is the solution rounded back to `prec`
/// and must satisfy the residual target `2^{-prec/4}`, otherwise an
/// ill-conditioning error names the precision that would be required.
pub fn build_family(
    seq: &EigenvalueSequence,
    horizon: &Float,
    n: usize,
    prec: Prec,
) -> Result<BiorthoFamily> {
    if n == 0 {
        return Err(Error::EmptyInput("family size must be at least 1"));
    }
    let work = prec.doubled();
    let gram = gram_matrix(seq, horizon, n, work)?;
    let identity = Matrix::identity(n, work);
    let tiny = Float::with_val(work.bits(), Float::i_exp(1, -(work.bits() as i32) + 24));
    let (inverse, _solve_residual) = solve_spd_refined(&gram, &identity, work, &tiny, 6)?;

    // Round to storage precision and measure the residual of what is stored.
    let combo = inverse.to_prec(prec);
    let achieved = combo
        .to_prec(work)
        .mul(&gram, work)
        .sub(&identity, work)
        .max_abs();
    let target = Float::with_val(work.bits(), Float::i_exp(1, -(prec.bits() as i32) / 4));
    if achieved > target {
        // residual ≈ κ(G)·2^{-bits}, so log2(κ) ≈ log2(residual) + bits.
        let log2_kappa = achieved.to_f64().log2() + prec.bits() as f64;
        let required = (log2_kappa + prec.bits() as f64 / 4.0).ceil() as u32 + 16;
        return Err(Error::IllConditioned {
            achieved: to_decimal_string(&achieved),
            target: to_decimal_string(&target),
            required_bits: required.max(prec.bits() * 2),
        });
    }
    // ‖ψ_n‖² = (G^{-1})_{nn}, taken from the refined inverse.
    let psi_norms = (0..n)
        .map(|i| Float::with_val(prec.bits(), inverse.at(i, i).sqrt_ref()))
        .collect();
    Ok(BiorthoFamily {
        horizon: Float::with_val(prec.bits(), horizon),
        lambda: seq.values()[..n]
            .iter()
            .map(|x| Float::with_val(prec.bits(), x))
            .collect(),
        combo,
        psi_norms,
        precision_bits: prec.bits(),
        residual: Float::with_val(prec.bits(), achieved),
    })
}

/// Extracts `â_n = ∫_0^T F ψ_n dt` for `n ≤ N` by Gauss–Legendre
/// quadrature with at least `quad_nodes` points, on a mesh graded for the
/// steepest exponential in the family (the integrand has a boundary layer
/// of width `1/λ_N` at the origin that uniform panels cannot resolve).
pub fn extract_coefficients(
    f: &dyn SeriesEval,
    fam: &BiorthoFamily,
    quad_nodes: usize,
    prec: Prec,
) -> Result<CoefficientSequence> {
    let bits = prec.bits();
    let n = fam.truncation();
    let lambda_max = fam.lambda.last().map_or(1.0, |x| x.to_f64());
    let (nodes, weights) =
        crate::quadrature::exp_graded_rule(&fam.horizon, lambda_max, quad_nodes, prec);
    // Weighted data values once per node, exponential basis per (node, k).
    let mut acc = vec![prec.zero(); n];
    for (t, w) in nodes.iter().zip(&weights) {
        let fv = Float::with_val(bits, w * f.value(t));
        let basis: Vec<Float> = fam
            .lambda
            .iter()
            .map(|lam| (-Float::with_val(bits, lam * t)).exp())
            .collect();
        for (i, a) in acc.iter_mut().enumerate() {
            let mut psi = prec.zero();
            for (k, e) in basis.iter().enumerate() {
                psi += fam.combo.at(i, k) * e;
            }
            *a += Float::with_val(bits, &fv * &psi);
        }
    }
    Ok(CoefficientSequence::from_entries(acc, prec))
}

/// Greatest `Ñ ≤ n_cap` with `e^{CÑ}(ε/m)² ≤ Ñ^{-2θ}`; 1 when no integer
/// qualifies (ε too large). Monotone non-increasing in ε. The ball radius
/// enters only through the normalized data scale ε/m.
pub fn select_truncation(epsilon: &Float, c: f64, theta: f64, m: f64, n_cap: usize) -> usize {
    if !(*epsilon > 0f64) {
        return n_cap.max(1);
    }
    let ln_eps = epsilon.clone().ln().to_f64() - m.max(f64::MIN_POSITIVE).ln();
    let holds = |n: usize| c * n as f64 + 2.0 * ln_eps + 2.0 * theta * (n as f64).ln() <= 0.0;
    if !holds(1) {
        return 1;
    }
    let mut best = 1;
    for n in 2..=n_cap {
        if holds(n) {
            best = n;
        } else {
            break;
        }
    }
    best
}

/// Calibrates the truncation constant from a pilot family: the smallest `C`
/// with `Σ_{n≤N} ψ_n² ≤ e^{CN}` for every pilot `N`, which is what the
/// truncation rule pairs against `ε²`.
pub fn calibrate_truncation_constant(fam: &BiorthoFamily) -> f64 {
    let mut partial = 0.0f64;
    let mut best = 0.0f64;
    for (i, psi) in fam.psi_norms.iter().enumerate() {
        let norm = psi.to_f64();
        partial += norm * norm;
        let c = partial.max(1.0).ln() / (i + 1) as f64;
        if c > best {
            best = c;
        }
    }
    best
}

/// Full log-stability pipeline: measure ε, select `Ñ`, build the family,
/// extract, and report with the calibrated bound
/// `C(|ln ε|^{-θ} + ε)`.
pub fn recover_log(
    data: &SeriesData,
    seq: &EigenvalueSequence,
    horizon: f64,
    theta: f64,
    m: f64,
    cfg: &BiorthoConfig,
    prec: Prec,
) -> Result<RecoveryReport> {
    if theta <= 0.0 || m <= 0.0 {
        return Err(Error::InvalidParameter(
            "recover_log needs theta > 0 and m > 0".into(),
        ));
    }
    let horizon_f = prec.from_f64(horizon);

    // ε is the declared noise level when available (0 meaning exact data,
    // floored at machine noise); without a declaration the measured sup
    // over the window stands in, which is the conservative reading of the
    // data-norm stability statement.
    let measured = data.sup_on_window(cfg.window.as_ref(), horizon, cfg.grid_points, prec)?;
    let mut epsilon = match data.declared_noise() {
        Some(e) => prec.from_f64(e),
        None => measured.clone(),
    };
    if let SeriesData::Sample(s) = data {
        let interp = s.interpolation_floor(prec);
        if interp > epsilon {
            epsilon = interp;
        }
    }
    let floor = prec.eps() * prec.from_f64(64.0);
    if epsilon < floor {
        epsilon = floor;
    }

    let mut n_cap = cfg.max_truncation.min(seq.len());
    // Sampled data can only support as many functionals as its time
    // resolution allows (spacing ≤ T/(4M) with M = factor·N).
    if let Some(spacing) = data.max_spacing(prec) {
        let spacing_f = spacing.to_f64();
        if spacing_f > 0.0 {
            let supported = (horizon / (4.0 * spacing_f * cfg.quad_node_factor as f64))
                .floor() as usize;
            if supported < 1 {
                return Err(Error::SparseSamples {
                    spacing: to_decimal_string(&spacing),
                    limit: to_decimal_string(&prec.from_f64(
                        horizon / (4.0 * cfg.quad_node_factor as f64),
                    )),
                });
            }
            n_cap = n_cap.min(supported);
        }
    }
    let trunc_c = match cfg.trunc_constant {
        Some(c) => c,
        None => {
            let pilot_n = n_cap.clamp(1, 12);
            let pilot = build_family(seq, &horizon_f, pilot_n, prec)?;
            calibrate_truncation_constant(&pilot)
        }
    };
    let n_sel = select_truncation(&epsilon, trunc_c, theta, m, n_cap);

    let evaluator = data.evaluator(prec)?;

    // Extraction with a discrepancy guard: when the data is only known up
    // to interpolation error (sampled series), deep functionals amplify
    // that error by ‖ψ_n‖ and produce wild coefficients. A reconstruction
    // that does not fit the data to within the noise scale is rejected and
    // the truncation lowered.
    let mut n_run = n_sel;
    let fit_grid = crate::forward::uniform_grid(
        horizon * 1e-3,
        horizon,
        cfg.grid_points.clamp(16, 128),
        prec,
    );
    let data_sup = {
        let mut best = prec.zero();
        for t in &fit_grid {
            let v = evaluator.value(t).abs();
            if v > best {
                best = v;
            }
        }
        best
    };
    // The extraction section is as deep as the precision and data afford,
    // independent of the selected head: a section that covers the datum's
    // support sees no tail at all, and whatever sits beyond the section
    // would otherwise alias into the deepest kept coefficients.
    let mut section = (cfg.max_truncation + cfg.section_guard).min(seq.len());
    let (fam, estimate, quad_nodes, misfit) = loop {
        section = section.max(n_run.min(seq.len()));
        let fam = match build_family(seq, &horizon_f, section, prec) {
            Ok(f) => f,
            // The requested section exceeds what this precision can invert;
            // retry shallower rather than failing the whole pipeline.
            Err(Error::IllConditioned { .. }) if section > 1 => {
                section = (section * 3 / 4).max(1);
                n_run = n_run.min(section);
                continue;
            }
            Err(e) => return Err(e),
        };
        let quad_nodes = cfg.quad_min_nodes.max(cfg.quad_node_factor * section);
        let full = extract_coefficients(evaluator.as_ref(), &fam, quad_nodes, prec)?;
        // Keep only the selected head; deeper coefficients absorb the tail
        // and are discarded.
        let mut head = full.entries().to_vec();
        head.truncate(n_run);
        let estimate = CoefficientSequence::from_entries(head, prec);
        let mut misfit = prec.zero();
        for t in &fit_grid {
            let mut model = prec.zero();
            for (i, c) in estimate.entries().iter().enumerate() {
                let decay = (-Float::with_val(prec.bits(), seq.value(i + 1) * t)).exp();
                model += c * decay;
            }
            let gap = Float::with_val(prec.bits(), evaluator.value(t) - model).abs();
            if gap > misfit {
                misfit = gap;
            }
        }
        // A legitimate section leaves at most the unmodeled tail behind,
        // which is bounded by the data scale. A misfit beyond that means
        // the deep functionals amplified sub-resolution error into wild
        // coefficients, so the section is rejected and lowered.
        let attainable = Float::with_val(
            prec.bits(),
            fam.residual() * prec.from_usize(32 * n_run),
        ) * &data_sup;
        let reject_above = prec.from_f64(8.0) * &data_sup
            + prec.from_f64(8.0) * &epsilon
            + attainable;
        if misfit <= reject_above || section == 1 {
            break (fam, estimate, quad_nodes, misfit);
        }
        section = (section * 3 / 4).max(1);
        n_run = n_run.min(section);
    };
    // Trailing coefficients below their own noise amplification
    // ‖â_n‖ ≤ ε·√T·‖ψ_n‖ are indistinguishable from zero; drop them.
    let estimate = {
        let sqrt_t = prec.from_f64(horizon).sqrt();
        let mut entries = estimate.entries().to_vec();
        while let Some(last) = entries.last() {
            let n = entries.len();
            let threshold = prec.from_f64(4.0) * &epsilon * &sqrt_t * fam.psi_norm(n);
            if last.clone().abs() <= threshold {
                entries.pop();
            } else {
                break;
            }
        }
        CoefficientSequence::from_entries(entries, prec)
    };
    let n_sel = n_run;

    let abs_ln = epsilon.clone().ln().abs();
    let bound = prec.from_f64(cfg.cert_constant * m)
        * (prec.powf(&abs_ln, -theta) + &epsilon);
    let mut report = RecoveryReport::new(Method::Biortho, estimate, n_sel).with_bound(bound);
    report.note("epsilon", to_decimal_string(&epsilon));
    report.note("measured_sup", to_decimal_string(&measured));
    report.note("trunc_constant", trunc_c);
    report.note("family_residual", to_decimal_string(fam.residual()));
    report.note("psi_norm_max", to_decimal_string(fam.psi_norm(n_sel)));
    report.note("quad_nodes", quad_nodes);
    report.note("fit_misfit", to_decimal_string(&misfit));
    if seq.reciprocal_sum_class() != SumClass::Summable {
        report.note(
            "warning",
            "exponent family not verified summable; biorthogonal route degrades",
        );
    }
    Ok(report)
}

/// Empirical lower bound for the restriction constant
/// `d = sup ‖F‖_{L∞(0,T)} / ‖F‖_{L∞(B)}` over randomized unit coefficient
/// vectors of length `n`. Diagnostic only.
pub fn restriction_constant(
    seq: &EigenvalueSequence,
    horizon: f64,
    window: &IntervalUnion,
    n: usize,
    trials: usize,
    seed: u64,
    prec: Prec,
) -> Result<Float> {
    use rand::{Rng, SeedableRng};
    if n > seq.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: seq.len(),
        });
    }
    let full_grid = crate::forward::uniform_grid(0.0, horizon, 512, prec);
    let window_grid = window.grid(256, prec);
    let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
    let mut best = prec.zero();
    for _ in 0..trials.max(1) {
        let raw: Vec<f64> = (0..n).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let coeffs = CoefficientSequence::from_entries(
            raw.iter().map(|x| prec.from_f64(x / norm)).collect(),
            prec,
        );
        let sup = |grid: &[Float]| -> Float {
            let mut out = prec.zero();
            for t in grid {
                let v = crate::forward::eval_dirichlet(&coeffs, seq, t, prec)
                    .expect("grid times nonnegative")
                    .abs();
                if v > out {
                    out = v;
                }
            }
            out
        };
        let full = sup(&full_grid);
        let restricted = sup(&window_grid);
        if restricted.is_zero() {
            continue;
        }
        let ratio = full / restricted;
        if ratio > best {
            best = ratio;
        }
    }
    Ok(best)
}
