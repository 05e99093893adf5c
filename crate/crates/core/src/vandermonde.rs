//! Hölder-stability recovery through the Vandermonde system in the nodes
//! `x_n = e^{-λ_n}`.
//!
//! Sampling the series at integer times `t = 0, …, N-1` gives the moment
//! system `Σ_n a_n x_n^j = F(j)`. It is solved by the O(N²)
//! divided-difference/back-substitution recurrences rather than by forming
//! an inverse; the `ℓ¹ ← ℓ∞` stability factor is bounded by the product
//! formula `Σ_j ∏_{i≠j} (1+x_i)/|x_i-x_j|`, which is also what the
//! truncation selection balances against the weighted-ball tail `e^{-cN^β}`.

use rug::{ops::Pow, Float};

use crate::error::{Error, Result};
use crate::forward::SeriesData;
use crate::lab::linear_fit;
use crate::precision::{to_decimal_string, Prec};
use crate::report::{Method, RecoveryReport};
use crate::sequences::{CoefficientSequence, EigenvalueSequence, SequenceNormKind};

#[derive(Clone, Debug)]
pub struct VandermondeConfig {
    /// Time dilation τ: samples at `τ·{0,…,N-1}`, nodes `e^{-τλ_n}`. The
    /// default 1 is the plain integer-time scheme.
    pub dilation: f64,
    /// Hard cap on the selected truncation.
    pub max_truncation: usize,
    /// Override for the growth constant `C` in the selection objective
    /// `e^{CN^{β₁}}ε + e^{-cN^β}`; fitted from the node geometry when absent.
    pub growth_constant: Option<f64>,
    /// Calibrated constant for the reported Hölder bound.
    pub cert_constant: f64,
    /// Grid points for sup-norm measurement when ε is not declared.
    pub grid_points: usize,
}

impl Default for VandermondeConfig {
    fn default() -> Self {
        Self {
            dilation: 1.0,
            max_truncation: 24,
            growth_constant: None,
            cert_constant: 1.0,
            grid_points: 512,
        }
    }
}

/// Assembled moment system in the nodes `x_n = e^{-τλ_n}`.
#[derive(Clone, Debug)]
pub struct VandermondeSystem {
    nodes: Vec<Float>,
    rhs: Vec<Float>,
    inv_norm_bound: Float,
    prec: Prec,
}

impl VandermondeSystem {
    pub fn size(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Float] {
        &self.nodes
    }

    pub fn rhs(&self) -> &[Float] {
        &self.rhs
    }

    /// Product-formula bound on the entrywise ℓ¹ norm of the inverse.
    pub fn inv_norm_bound(&self) -> &Float {
        &self.inv_norm_bound
    }
}

/// Nodes for the first `n` exponents under dilation τ.
pub fn nodes(seq: &EigenvalueSequence, n: usize, dilation: f64, prec: Prec) -> Result<Vec<Float>> {
    if n > seq.len() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: seq.len(),
        });
    }
    if dilation <= 0.0 {
        return Err(Error::InvalidParameter("dilation must be positive".into()));
    }
    let bits = prec.bits();
    let tau = prec.from_f64(dilation);
    Ok((1..=n)
        .map(|k| (-Float::with_val(bits, seq.value(k) * &tau)).exp())
        .collect())
}

/// Σ_j ∏_{i≠j} (1+x_i)/|x_i-x_j|, the Lagrange-coefficient bound on the
/// entrywise norm of the inverse. Infinite node collisions are reported as
/// ill-conditioning.
pub fn inverse_norm_bound(nodes: &[Float], prec: Prec) -> Result<Float> {
    let bits = prec.bits();
    let mut total = prec.zero();
    for j in 0..nodes.len() {
        let mut prod = prec.one();
        for i in 0..nodes.len() {
            if i == j {
                continue;
            }
            let diff = Float::with_val(bits, &nodes[i] - &nodes[j]).abs();
            if diff.is_zero() {
                return Err(Error::IllConditioned {
                    achieved: "node collision below working precision".into(),
                    target: "distinct nodes".into(),
                    required_bits: prec.bits() * 2,
                });
            }
            prod *= (prec.one() + &nodes[i]) / diff;
        }
        total += prod;
    }
    Ok(total)
}

/// Builds the system from samples taken at exactly `τ·{0,…,N-1}`.
pub fn build_system(
    seq: &EigenvalueSequence,
    n: usize,
    samples: &[Float],
    dilation: f64,
    prec: Prec,
) -> Result<VandermondeSystem> {
    if samples.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: samples.len(),
        });
    }
    let nodes = nodes(seq, n, dilation, prec)?;
    let inv_norm_bound = inverse_norm_bound(&nodes, prec)?;
    Ok(VandermondeSystem {
        nodes,
        rhs: samples.to_vec(),
        inv_norm_bound,
        prec,
    })
}

/// Solves the moment system `Σ_n a_n x_n^j = b_j` by the Björck–Pereyra
/// recurrences. Returns the estimate and the max-norm residual of the
/// solved system.
pub fn solve_primal(sys: &VandermondeSystem) -> Result<(CoefficientSequence, Float)> {
    let prec = sys.prec;
    let bits = prec.bits();
    let n = sys.size();
    let x = &sys.nodes;
    let mut b: Vec<Float> = sys.rhs.to_vec();

    // Stage 1: divided-difference style elimination.
    for (k, x_k) in x.iter().enumerate().take(n.saturating_sub(1)) {
        for i in (k + 1..n).rev() {
            let delta = Float::with_val(bits, x_k * &b[i - 1]);
            b[i] = Float::with_val(bits, &b[i] - &delta);
        }
    }
    // Stage 2: scaled back-substitution.
    for k in (0..n.saturating_sub(1)).rev() {
        for i in k + 1..n {
            let denom = Float::with_val(bits, &x[i] - &x[i - k - 1]);
            if denom.is_zero() {
                return Err(Error::IllConditioned {
                    achieved: "node collision below working precision".into(),
                    target: "distinct nodes".into(),
                    required_bits: prec.bits() * 2,
                });
            }
            b[i] = Float::with_val(bits, &b[i] / &denom);
        }
        for i in k..n - 1 {
            let next = b[i + 1].clone();
            b[i] = Float::with_val(bits, &b[i] - &next);
        }
    }
    let estimate = CoefficientSequence::from_entries(b, prec);

    // Residual ‖V·Â - B‖_∞ on the moment equations.
    let mut residual = prec.zero();
    for (j, rhs) in sys.rhs.iter().enumerate() {
        let mut acc = prec.zero();
        for (idx, node) in x.iter().enumerate() {
            let pw = Float::with_val(bits, node.pow(j as u32));
            acc += estimate.get(idx + 1) * pw;
        }
        let r = Float::with_val(bits, &acc - rhs).abs();
        if r > residual {
            residual = r;
        }
    }

    // Runtime check: the ℓ¹ norm of the estimate must respect
    // the product-formula bound times ‖B‖_∞ (modulo roundoff slack).
    let l1 = estimate.norm(SequenceNormKind::L1).expect("l1");
    let mut sup_b = prec.zero();
    for v in &sys.rhs {
        let a = Float::with_val(bits, v.abs_ref());
        if a > sup_b {
            sup_b = a;
        }
    }
    let slack = prec.one() + Float::with_val(bits, Float::i_exp(1, -(bits as i32) / 2));
    let allowance = Float::with_val(bits, &sys.inv_norm_bound * &sup_b) * slack;
    assert!(
        l1 <= allowance,
        "solved instance violates the inverse-norm bound: ‖A‖₁ = {l1} > {allowance}"
    );

    Ok((estimate, residual))
}

/// Smallest-argmin integer `N ∈ [n_min, n_max]` of the Hölder objective
/// `e^{C N^{β₁}} ε + m·e^{-c N^β}` (the declared ball radius scales the
/// tail bound).
#[allow(clippy::too_many_arguments)]
pub fn select_n_holder(
    epsilon: &Float,
    c_growth: f64,
    c_decay: f64,
    beta1: f64,
    beta: f64,
    m: f64,
    n_min: usize,
    n_max: usize,
    prec: Prec,
) -> usize {
    let objective = |n: usize| -> Float {
        let nf = n as f64;
        let amplification = prec.from_f64(c_growth * nf.powf(beta1)).exp();
        let tail = prec.from_f64(m) * prec.from_f64(-c_decay * nf.powf(beta)).exp();
        amplification * epsilon + tail
    };
    let mut best_n = n_min.max(1);
    let mut best = objective(best_n);
    for n in best_n + 1..=n_max {
        let j = objective(n);
        if j < best {
            best = j;
            best_n = n;
        }
    }
    best_n
}

/// Fits `C` in `ln inv_norm_bound ≈ C·N^{β₁}` over a pilot range of sizes.
pub fn calibrate_growth_constant(
    seq: &EigenvalueSequence,
    beta1: f64,
    dilation: f64,
    n_pilot: usize,
    prec: Prec,
) -> Result<f64> {
    let n_pilot = n_pilot.min(seq.len()).max(3);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in 2..=n_pilot {
        let nd = nodes(seq, n, dilation, prec)?;
        let bound = inverse_norm_bound(&nd, prec)?;
        xs.push((n as f64).powf(beta1));
        ys.push(bound.to_f64().ln());
    }
    let (slope, _, _) = linear_fit(&xs, &ys);
    Ok(slope.max(1e-6))
}

/// Hölder recovery: select `N`, sample at `τ·{0,…,N-1}`, solve, zero-pad.
///
/// The a-priori ball is `a ∈ m·B_{ℓ¹_{α,β}}` with `β > β₁`; its tail decays
/// like `m·e^{-αN^β}`, so the decay constant in the selection objective is
/// `α` itself.
pub fn recover_holder(
    data: &SeriesData,
    seq: &EigenvalueSequence,
    m: f64,
    alpha_w: f64,
    beta_w: f64,
    cfg: &VandermondeConfig,
    prec: Prec,
) -> Result<RecoveryReport> {
    if m <= 0.0 || alpha_w <= 0.0 {
        return Err(Error::InvalidParameter(
            "recover_holder needs m > 0 and alpha_w > 0".into(),
        ));
    }
    // Gap validation is the route's admissibility condition.
    let check_len = seq.len().min(64);
    let gap = seq.validate_gap(check_len)?;
    if !gap.pass {
        return Err(Error::GapCondition(format!(
            "declared gap constants fail on the stored prefix (best d = {}, best c = {})",
            gap.best_d.to_f64(),
            gap.best_c.to_f64()
        )));
    }
    let beta1 = match seq.gap_params() {
        Some(g) => g.beta1,
        None => match seq.family() {
            crate::sequences::Family::Power { alpha, .. } => 2.0 * alpha,
            crate::sequences::Family::Explicit => 1.0,
        },
    };
    if beta_w <= beta1 {
        return Err(Error::InvalidParameter(format!(
            "weighted-ball exponent beta = {beta_w} must exceed beta1 = {beta1}"
        )));
    }

    let horizon = cfg.dilation * (cfg.max_truncation.max(2) - 1) as f64;
    let measured = data.sup_on_window(None, horizon.max(1.0), cfg.grid_points, prec)?;
    let mut epsilon = match data.declared_noise() {
        Some(e) => prec.from_f64(e),
        None => measured,
    };
    let floor = prec.eps() * prec.from_f64(64.0);
    if epsilon < floor {
        epsilon = floor;
    }

    let c_growth = match cfg.growth_constant {
        Some(c) => c,
        None => calibrate_growth_constant(seq, beta1, cfg.dilation, 12, prec)?,
    };
    let n_max = cfg.max_truncation.min(seq.len());
    let n_sel = select_n_holder(
        &epsilon, c_growth, alpha_w, beta1, beta_w, m, 1, n_max, prec,
    );

    // Collect samples at exactly τ·{0,…,N-1}.
    let samples = values_at_integer_times(data, n_sel, cfg.dilation, prec)?;
    let sys = build_system(seq, n_sel, &samples, cfg.dilation, prec)?;
    let (estimate, residual) = solve_primal(&sys)?;

    // Certified objective value at the chosen truncation, with the tail term
    // scaled by the declared ball radius.
    let amplification = prec.from_f64(c_growth * (n_sel as f64).powf(beta1)).exp();
    let tail = prec.from_f64(m) * prec.from_f64(-alpha_w * (n_sel as f64).powf(beta_w)).exp();
    let objective = amplification * &epsilon + tail;
    let bound = prec.from_f64(cfg.cert_constant) * &objective;
    let gamma_eff = if epsilon < 1f64 {
        objective.clone().ln().to_f64() / epsilon.clone().ln().to_f64()
    } else {
        0.0
    };

    let mut report = RecoveryReport::new(Method::Vandermonde, estimate, n_sel).with_bound(bound);
    report.note("epsilon", to_decimal_string(&epsilon));
    report.note("growth_constant", c_growth);
    report.note("inv_norm_bound", to_decimal_string(sys.inv_norm_bound()));
    report.note("residual", to_decimal_string(&residual));
    report.note("gamma_effective", gamma_eff);
    report.note("dilation", cfg.dilation);
    Ok(report)
}

/// Values at `τ·{0,…,N-1}`: direct evaluation for evaluator data; exact
/// time-stamp lookup for samples (missing stamps are an error, since the
/// scheme needs those very moments).
fn values_at_integer_times(
    data: &SeriesData,
    n: usize,
    dilation: f64,
    prec: Prec,
) -> Result<Vec<Float>> {
    match data {
        SeriesData::Evaluator { f, .. } => Ok((0..n)
            .map(|j| f.value(&prec.from_f64(dilation * j as f64)))
            .collect()),
        SeriesData::Sample(s) => {
            let mut out = Vec::with_capacity(n);
            for j in 0..n {
                let want = dilation * j as f64;
                let found = s
                    .times()
                    .iter()
                    .position(|t| (t.to_f64() - want).abs() <= 1e-12 * want.max(1.0));
                match found {
                    Some(idx) => out.push(s.values()[idx].clone()),
                    None => {
                        return Err(Error::Domain(format!(
                            "sample is missing the required time stamp t = {want}"
                        )))
                    }
                }
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::{ExactSeries, SeriesEval};
    use crate::linalg::{lu_solve, Matrix};

    fn p() -> Prec {
        Prec::new(256)
    }

    fn linear(n: usize) -> EigenvalueSequence {
        EigenvalueSequence::power(0.5, 1.0, n, p()).unwrap()
    }

    #[test]
    fn nodes_and_trivial_system() {
        let seq = EigenvalueSequence::explicit(vec![p().one(), p().from_f64(2.0)], p()).unwrap();
        let nd = nodes(&seq, 2, 1.0, p()).unwrap();
        assert!(Float::with_val(p().bits(), &nd[0] - (-p().one()).exp()).abs() < 1e-70);
        assert!(Float::with_val(p().bits(), &nd[1] - (-p().from_f64(2.0)).exp()).abs() < 1e-70);

        // N = 1: a_1 = F(0).
        let sys = build_system(&seq, 1, &[p().from_f64(0.37)], 1.0, p()).unwrap();
        let (a, res) = solve_primal(&sys).unwrap();
        assert_eq!(a.get(1), p().from_f64(0.37));
        assert!(res.is_zero());
    }

    #[test]
    fn two_by_two_closed_form() {
        let seq = EigenvalueSequence::explicit(vec![p().one(), p().from_f64(2.0)], p()).unwrap();
        let f0 = p().from_f64(1.3);
        let f1 = p().from_f64(0.4);
        let sys = build_system(&seq, 2, &[f0.clone(), f1.clone()], 1.0, p()).unwrap();
        let (a, _) = solve_primal(&sys).unwrap();
        let x1 = (-p().one()).exp();
        let x2 = (-p().from_f64(2.0)).exp();
        let a2 = (f1.clone() - Float::with_val(p().bits(), &x1 * &f0))
            / Float::with_val(p().bits(), &x2 - &x1);
        let a1 = f0 - &a2;
        assert!(Float::with_val(p().bits(), a.get(1) - &a1).abs() < 1e-60);
        assert!(Float::with_val(p().bits(), a.get(2) - &a2).abs() < 1e-60);
    }

    #[test]
    fn unit_vector_solves_exactly() {
        let seq = linear(5);
        let nd = nodes(&seq, 5, 1.0, p()).unwrap();
        // B_j = x_1^j ↔ A = e_1.
        let samples: Vec<Float> = (0..5)
            .map(|j| Float::with_val(p().bits(), (&nd[0]).pow(j as u32)))
            .collect();
        let sys = build_system(&seq, 5, &samples, 1.0, p()).unwrap();
        let (a, _) = solve_primal(&sys).unwrap();
        let e1 = CoefficientSequence::unit(1, p().one(), p());
        assert!(a.rel_l2_error(&e1) < 1e-50);
    }

    #[test]
    fn inverse_norm_bound_dominates_explicit_inverse() {
        // Direct high-precision entrywise ‖V^{-1}‖ via LU inverse.
        let n = 6;
        let hp = Prec::new(512);
        let seq = EigenvalueSequence::power(0.5, 1.0, n, hp).unwrap();
        let nd = nodes(&seq, n, 1.0, hp).unwrap();
        let v = Matrix::from_fn(n, n, hp, |j, k| {
            Float::with_val(hp.bits(), (&nd[k]).pow(j as u32))
        });
        let inv = lu_solve(&v, &Matrix::identity(n, hp), hp).unwrap();
        let mut entry_sum = hp.zero();
        for i in 0..n {
            for j in 0..n {
                entry_sum += Float::with_val(hp.bits(), inv.at(i, j).abs_ref());
            }
        }
        let bound = inverse_norm_bound(&nd, hp).unwrap();
        assert!(
            entry_sum <= bound,
            "product formula {bound} must dominate the entrywise norm {entry_sum}"
        );
    }

    #[test]
    fn random_roundtrip_at_512_bits() {
        use rand::{Rng, SeedableRng};
        let hp = Prec::new(512);
        let seq = EigenvalueSequence::power(0.5, 1.0, 8, hp).unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let truth = CoefficientSequence::from_entries(
            (0..8).map(|_| hp.from_f64(2.0 * rng.gen::<f64>() - 1.0)).collect(),
            hp,
        );
        let with_truth = ExactSeries {
            coeffs: &truth,
            exponents: &seq,
            prec: hp,
        };
        let samples: Vec<Float> = (0..8)
            .map(|j| with_truth.value(&hp.from_usize(j)))
            .collect();
        let sys = build_system(&seq, 8, &samples, 1.0, hp).unwrap();
        let (a, _) = solve_primal(&sys).unwrap();
        let err = a.rel_l2_error(&truth);
        assert!(err < 1e-8, "round-trip error {err}");
    }

    #[test]
    fn bp_agrees_with_dense_lu() {
        use rand::{Rng, SeedableRng};
        for n in [4usize, 8, 12] {
            let seq = linear(n);
            let nd = nodes(&seq, n, 1.0, p()).unwrap();
            let mut rng = rand::rngs::StdRng::seed_from_u64(n as u64);
            let rhs: Vec<Float> = (0..n).map(|_| p().from_f64(rng.gen::<f64>())).collect();
            let sys = build_system(&seq, n, &rhs, 1.0, p()).unwrap();
            let (a_bp, _) = solve_primal(&sys).unwrap();
            let v = Matrix::from_fn(n, n, p(), |j, k| {
                Float::with_val(p().bits(), (&nd[k]).pow(j as u32))
            });
            let b = Matrix::from_fn(n, 1, p(), |j, _| rhs[j].clone());
            let dense = lu_solve(&v, &b, p()).unwrap();
            let dense_seq = CoefficientSequence::from_entries(
                (0..n).map(|i| dense.at(i, 0).clone()).collect(),
                p(),
            );
            let rel = a_bp.rel_l2_error(&dense_seq);
            let tol = Float::with_val(p().bits(), Float::i_exp(1, -(p().bits() as i32) / 2));
            assert!(
                rel < tol,
                "BP and LU disagree at n={n}: rel {rel} tol {tol}"
            );
        }
    }

    #[test]
    fn selection_examples() {
        // Noise at or above 1 → the smallest admissible N.
        assert_eq!(
            select_n_holder(&p().one(), 1.0, 1.0, 1.0, 2.0, 1.0, 1, 32, p()),
            1
        );

        // Integer-scan oracle at C = c = 1, β₁ = 1, β = 2, ε = 1e-8.
        let eps = p().from_f64(1e-8);
        let got = select_n_holder(&eps, 1.0, 1.0, 1.0, 2.0, 1.0, 1, 64, p());
        let mut best_n = 1;
        let mut best = f64::INFINITY;
        for n in 1..=64 {
            let nf = n as f64;
            let j = nf.exp() * 1e-8 + (-nf * nf).exp();
            if j < best {
                best = j;
                best_n = n;
            }
        }
        assert_eq!(got, best_n);

        // ε → ε/10 never decreases the selected N.
        let mut prev = 0;
        for k in 0..=12 {
            let eps = p().from_f64(10f64.powi(-k));
            let n = select_n_holder(&eps, 1.0, 1.0, 1.0, 2.0, 1.0, 1, 64, p());
            assert!(n >= prev, "selection must grow as noise shrinks");
            prev = n;
        }
    }

    #[test]
    fn recover_holder_roundtrip_and_zero() {
        let seq = linear(24);
        let truth = CoefficientSequence::from_entries(
            vec![
                p().from_f64(0.8),
                p().from_f64(-0.3),
                p().from_f64(0.45),
                p().from_f64(0.1),
            ],
            p(),
        );
        let ev = ExactSeries {
            coeffs: &truth,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator { f: &ev, noise: Some(0.0) };
        let m = truth
            .norm(SequenceNormKind::L1Exp { alpha: 1.0, beta: 2.0 })
            .unwrap()
            .to_f64();
        let report = recover_holder(
            &data,
            &seq,
            m,
            1.0,
            2.0,
            &VandermondeConfig::default(),
            p(),
        )
        .unwrap();
        let err = report.estimate.rel_l2_error(&truth);
        assert!(err < 1e-8, "noiseless Hölder round-trip error {err}");

        let zero = CoefficientSequence::zero(p());
        let ev = ExactSeries {
            coeffs: &zero,
            exponents: &seq,
            prec: p(),
        };
        let data = SeriesData::Evaluator { f: &ev, noise: Some(0.0) };
        let report = recover_holder(
            &data,
            &seq,
            1.0,
            1.0,
            2.0,
            &VandermondeConfig::default(),
            p(),
        )
        .unwrap();
        assert!(report.estimate.norm(SequenceNormKind::L2).unwrap() < 1e-20);
    }

    #[test]
    fn missing_sample_times_rejected() {
        let seq = linear(4);
        let times: Vec<Float> = vec![p().from_f64(0.5), p().from_f64(1.5)];
        let values = vec![p().one(), p().one()];
        let sample = crate::forward::DirichletSample::new(
            times,
            values,
            0.0,
            crate::forward::NoiseNorm::Sup,
            2.0,
            None,
        )
        .unwrap();
        let data = SeriesData::Sample(&sample);
        let err = values_at_integer_times(&data, 2, 1.0, p()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }
}
