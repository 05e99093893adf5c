//! Strategic sensor placement on `(0, mu·π)`.
//!
//! A point measurement sees mode `k` through the factor `sin(k·x0/mu)`, so
//! `x0` must keep every such factor away from zero. Quadratic irrationals
//! have bounded continued-fraction partial quotients, which keeps
//! `k·dist(k·x0/(mu·π), Z)` bounded below; the golden and silver ratios are
//! the canonical choices. The lower bound `|sin(k·x0/mu)| ≥ d0/k` is
//! certified empirically up to a verification range `K`, and the certified
//! constant `d0` is what enters all error bookkeeping afterwards.

use rug::Float;

use crate::error::{Error, Result};
use crate::forward::InitialDatum;
use crate::precision::Prec;
use crate::sequences::CoefficientSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// `x0 = mu·π·(√5 - 1)/2`.
    Golden,
    /// `x0 = mu·π·(√2 - 1)`.
    Silver,
    /// A caller-supplied location.
    Explicit,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Golden => write!(f, "golden"),
            Strategy::Silver => write!(f, "silver"),
            Strategy::Explicit => write!(f, "explicit"),
        }
    }
}

/// Outcome of an empirical verification sweep.
#[derive(Clone, Debug)]
pub struct Verification {
    /// `min_{k≤K} k·|sin(k·x0/mu)|`.
    pub d0_empirical: Float,
    /// Verification range.
    pub k_range: usize,
    /// Index attaining the minimum.
    pub argmin_k: usize,
}

/// A sensor location `x0 ∈ (0, mu·π)`, possibly carrying its certificate.
#[derive(Clone, Debug)]
pub struct SensorPoint {
    x0: Float,
    mu: f64,
    strategy: Strategy,
    verification: Option<Verification>,
}

impl SensorPoint {
    pub fn x0(&self) -> &Float {
        &self.x0
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn verification(&self) -> Option<&Verification> {
        self.verification.as_ref()
    }

    pub fn is_verified_to(&self, k: usize) -> bool {
        self.verification.as_ref().is_some_and(|v| v.k_range >= k)
    }

    /// `sin(k·x0/mu)` at verification-grade precision.
    pub fn sine_at(&self, k: usize, prec: Prec) -> Float {
        let elevated = argument_precision(prec, k);
        let phase = Float::with_val(elevated.bits(), &self.x0 / elevated.from_f64(self.mu));
        let arg = phase * elevated.from_usize(k);
        Float::with_val(prec.bits(), arg.sin())
    }
}

/// Proposes an (unverified) sensor point for the given strategy.
pub fn propose_point(strategy: Strategy, mu: f64, prec: Prec) -> Result<SensorPoint> {
    if mu <= 0.0 {
        return Err(Error::InvalidParameter("mu must be positive".into()));
    }
    let bits = prec.bits();
    let fraction = match strategy {
        // (√5 - 1)/2 ≈ 0.618 and √2 - 1 ≈ 0.414 both lie in (0, 1) already.
        Strategy::Golden => (prec.from_f64(5.0).sqrt() - 1u32) / 2u32,
        Strategy::Silver => prec.from_f64(2.0).sqrt() - 1u32,
        Strategy::Explicit => {
            return Err(Error::InvalidParameter(
                "explicit strategy needs a location; use explicit_point".into(),
            ))
        }
    };
    let x0 = Float::with_val(bits, prec.pi() * prec.from_f64(mu)) * fraction;
    Ok(SensorPoint {
        x0,
        mu,
        strategy,
        verification: None,
    })
}

/// Wraps a caller-supplied location.
pub fn explicit_point(x0: Float, mu: f64, prec: Prec) -> Result<SensorPoint> {
    if mu <= 0.0 {
        return Err(Error::InvalidParameter("mu must be positive".into()));
    }
    let right = prec.from_f64(mu) * prec.pi();
    if !(x0 > 0f64 && x0 < right) {
        return Err(Error::Domain(format!(
            "sensor location {} outside (0, {})",
            x0.to_f64(),
            right.to_f64()
        )));
    }
    Ok(SensorPoint {
        x0,
        mu,
        strategy: Strategy::Explicit,
        verification: None,
    })
}

/// Extra mantissa bits so that `k·x0` keeps full fractional accuracy during
/// argument reduction.
fn argument_precision(prec: Prec, k: usize) -> Prec {
    let extra = 2 * (usize::BITS - k.leading_zeros()).max(1);
    Prec::new(prec.bits() + extra)
}

/// Empirically certifies the lower bound `|sin(k·x0/mu)| ≥ d0/k` for
/// `k ≤ k_range`, returning the point with its certificate attached.
/// Fails at the first index where the sine is numerically indistinguishable
/// from zero.
pub fn verify_point(pt: &SensorPoint, k_range: usize, prec: Prec) -> Result<SensorPoint> {
    if k_range < 1 {
        return Err(Error::InvalidParameter("k_range must be at least 1".into()));
    }
    let elevated = argument_precision(prec, k_range);
    let bits = elevated.bits();
    let phase = Float::with_val(bits, &pt.x0 / elevated.from_f64(pt.mu));
    // A sine below the argument-reduction noise cannot be certified nonzero.
    let zero_threshold = Float::with_val(
        bits,
        Float::i_exp(1, -(prec.bits() as i32) + 8),
    ) * elevated.from_usize(k_range);
    let mut best = elevated.from_f64(f64::INFINITY);
    let mut argmin = 0;
    for k in 1..=k_range {
        let arg = Float::with_val(bits, &phase * elevated.from_usize(k));
        let s = arg.sin().abs();
        if s <= zero_threshold {
            return Err(Error::SensorVerification { k });
        }
        let weighted = s * elevated.from_usize(k);
        if weighted < best {
            best = weighted;
            argmin = k;
        }
    }
    Ok(SensorPoint {
        x0: pt.x0.clone(),
        mu: pt.mu,
        strategy: pt.strategy,
        verification: Some(Verification {
            d0_empirical: Float::with_val(prec.bits(), best),
            k_range,
            argmin_k: argmin,
        }),
    })
}

/// Mode-to-series map `a_k = sin(k·x0/mu)·f̂_k` (the series a point sensor
/// actually observes).
pub fn mode_to_series(f: &InitialDatum, pt: &SensorPoint, prec: Prec) -> Result<CoefficientSequence> {
    let support = f.coeffs().support();
    require_verified(pt, support)?;
    let entries = (1..=support)
        .map(|k| {
            let s = pt.sine_at(k, prec);
            Float::with_val(prec.bits(), f.coeffs().get(k) * s)
        })
        .collect();
    Ok(CoefficientSequence::from_entries(entries, prec))
}

/// Inverse map `f̂_k = a_k / sin(k·x0/mu)`; the per-mode amplification is
/// bounded by `k/d0_empirical`, which is exactly what the certificate
/// guarantees.
pub fn series_to_mode(
    a: &CoefficientSequence,
    pt: &SensorPoint,
    prec: Prec,
) -> Result<InitialDatum> {
    let support = a.support();
    require_verified(pt, support)?;
    let entries = (1..=support)
        .map(|k| {
            let s = pt.sine_at(k, prec);
            Float::with_val(prec.bits(), a.get(k) / s)
        })
        .collect();
    InitialDatum::new(CoefficientSequence::from_entries(entries, prec), pt.mu)
}

fn require_verified(pt: &SensorPoint, support: usize) -> Result<()> {
    match pt.verification() {
        None => Err(Error::RegimeMismatch {
            method: "sensor".into(),
            reason: "sensor point is unverified".into(),
        }),
        Some(v) if v.k_range < support => Err(Error::VerificationRange {
            verified: v.k_range,
            needed: support,
        }),
        Some(_) => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> Prec {
        Prec::new(192)
    }

    #[test]
    fn golden_point_location() {
        let pt = propose_point(Strategy::Golden, 1.0, p()).unwrap();
        // π(√5-1)/2 ≈ 1.9416.
        assert!((pt.x0().to_f64() - 1.941611038725466).abs() < 1e-12);
        let pt2 = propose_point(Strategy::Silver, 2.0, p()).unwrap();
        assert!(pt2.x0().to_f64() > 0.0 && pt2.x0().to_f64() < 2.0 * std::f64::consts::PI);
    }

    #[test]
    fn blind_spots_fail_verification() {
        // x0 = π/2 dies at k = 2.
        let half_pi = p().pi() / 2u32;
        let pt = explicit_point(half_pi, 1.0, p()).unwrap();
        let err = verify_point(&pt, 4, p()).unwrap_err();
        assert!(matches!(err, Error::SensorVerification { k: 2 }));

        // Rational multiple π·p/q dies at k = q.
        let x0 = p().pi() * 3u32 / 7u32;
        let pt = explicit_point(x0, 1.0, p()).unwrap();
        let err = verify_point(&pt, 10, p()).unwrap_err();
        assert!(matches!(err, Error::SensorVerification { k: 7 }));

        // x0 = π/3 at K = 3.
        let third_pi = p().pi() / 3u32;
        let pt = explicit_point(third_pi, 1.0, p()).unwrap();
        let err = verify_point(&pt, 3, p()).unwrap_err();
        assert!(matches!(err, Error::SensorVerification { k: 3 }));

        // K = 1 passes for any interior point.
        let pt = explicit_point(p().one(), 1.0, p()).unwrap();
        let v = verify_point(&pt, 1, p()).unwrap();
        assert!(v.verification().unwrap().d0_empirical > 0f64);
    }

    #[test]
    fn golden_point_certifies_and_minimum_stabilizes() {
        let pt = propose_point(Strategy::Golden, 1.0, p()).unwrap();
        let v = verify_point(&pt, 10_000, p()).unwrap();
        let cert = v.verification().unwrap();
        assert!(cert.d0_empirical > 0f64);
        // The golden continued fraction keeps k·|sin(k x0)| bounded below;
        // the running minimum is attained at k = 1 (≈ 0.932) and stays there.
        assert!(
            cert.d0_empirical.to_f64() > 0.9,
            "golden d0 = {}",
            cert.d0_empirical.to_f64()
        );
        assert_eq!(cert.argmin_k, 1);
        // Running minimum is non-increasing in K.
        let shorter = verify_point(&pt, 100, p()).unwrap();
        assert!(
            shorter.verification().unwrap().d0_empirical >= cert.d0_empirical
        );
    }

    #[test]
    fn mode_series_roundtrip() {
        use rand::{Rng, SeedableRng};
        let pt = verify_point(&propose_point(Strategy::Golden, 1.0, p()).unwrap(), 64, p())
            .unwrap();
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let f = InitialDatum::new(
            CoefficientSequence::from_entries(
                (0..8).map(|_| p().from_f64(2.0 * rng.gen::<f64>() - 1.0)).collect(),
                p(),
            ),
            1.0,
        )
        .unwrap();
        let a = mode_to_series(&f, &pt, p()).unwrap();
        // Direct evaluation oracle.
        for k in 1..=8 {
            let expect = Float::with_val(
                p().bits(),
                f.coeffs().get(k) * pt.sine_at(k, p()),
            );
            assert_eq!(a.get(k), expect);
        }
        let back = series_to_mode(&a, &pt, p()).unwrap();
        for k in 1..=8 {
            let err = Float::with_val(p().bits(), back.coeffs().get(k) - f.coeffs().get(k))
                .abs();
            assert!(err < 1e-50, "mode {k} error {err}");
        }

        // Amplification bound per mode.
        let d0 = &pt.verification().unwrap().d0_empirical;
        for k in 1..=8 {
            let lhs = back.coeffs().get(k).abs();
            let rhs = p().from_usize(k) / d0.clone() * a.get(k).abs();
            assert!(lhs <= rhs * (p().one() + p().from_f64(1e-40)));
        }
    }

    #[test]
    fn unverified_points_are_refused() {
        let pt = propose_point(Strategy::Golden, 1.0, p()).unwrap();
        let f = InitialDatum::new(
            CoefficientSequence::unit(1, p().one(), p()),
            1.0,
        )
        .unwrap();
        assert!(matches!(
            mode_to_series(&f, &pt, p()),
            Err(Error::RegimeMismatch { .. })
        ));

        // Verified, but not far enough for the requested support.
        let v = verify_point(&pt, 2, p()).unwrap();
        let a = CoefficientSequence::unit(5, p().one(), p());
        assert!(matches!(
            series_to_mode(&a, &v, p()),
            Err(Error::VerificationRange { verified: 2, needed: 5 })
        ));
    }

    #[test]
    fn weighted_norm_transfer() {
        use crate::sequences::SequenceNormKind;
        let pt = verify_point(&propose_point(Strategy::Golden, 1.0, p()).unwrap(), 16, p())
            .unwrap();
        let f = InitialDatum::new(
            CoefficientSequence::from_entries(
                vec![p().from_f64(0.5), p().from_f64(0.25), p().from_f64(-0.7)],
                p(),
            ),
            1.0,
        )
        .unwrap();
        let a = mode_to_series(&f, &pt, p()).unwrap();
        // |sin| ≤ 1 keeps every weighted norm from growing.
        let lhs = a.norm(SequenceNormKind::HTheta(1.0)).unwrap();
        let rhs = f.coeffs().norm(SequenceNormKind::HTheta(1.0)).unwrap();
        assert!(lhs <= rhs);

        // Division amplification controlled by ‖a‖_{h¹}/d0.
        let back = series_to_mode(&a, &pt, p()).unwrap();
        let l2 = back.coeffs().norm(SequenceNormKind::L2).unwrap();
        let h1 = a.norm(SequenceNormKind::HTheta(1.0)).unwrap();
        let d0 = &pt.verification().unwrap().d0_empirical;
        assert!(l2 <= h1 / d0.clone() * (p().one() + p().from_f64(1e-40)));
    }
}
