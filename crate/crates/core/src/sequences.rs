//! Exponent sequences, coefficient sequences and the weighted sequence norms
//! used by the recovery routes, together with validation of the structural
//! hypotheses (monotonicity, power asymptotics, gap condition) each route
//! requires.

use rug::{ops::Pow, Float};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::precision::{to_decimal_string, Prec};

/// Parametric description of an exponent family.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `λ_k = (k/mu)^{2α}` on the interval `(0, mu·π)`.
    Power { alpha: f64, mu: f64 },
    /// Values supplied directly; no analytic tail model.
    Explicit,
}

/// Asymptotic parameters `λ_n = K(n+a)^β + o(n^{β-1})`, `β > 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AsymptoticParams {
    pub scale: f64,
    pub shift: f64,
    pub exponent: f64,
}

/// Gap/growth constants: `λ_{i+1} - λ_i ≥ d/(i+1)^{β0}` and `λ_i ≤ c·i^{β1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapParams {
    pub beta0: f64,
    pub beta1: f64,
    pub c: f64,
    pub d: f64,
}

impl GapParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta0 < 0.0 || self.beta1 <= 0.0 || self.c <= 0.0 || self.d <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gap parameters require beta0 >= 0, beta1 > 0, c > 0, d > 0; got {self:?}"
            )));
        }
        Ok(())
    }

    /// `β = β0 + β1`, the exponent entering the double-log truncation rule.
    pub fn beta_sum(&self) -> f64 {
        self.beta0 + self.beta1
    }

    /// `c_* = min(d/c, 1)`.
    pub fn c_star(&self) -> f64 {
        (self.d / self.c).min(1.0)
    }
}

/// Convergence class of `Σ 1/λ_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SumClass {
    Summable,
    Divergent,
    Unknown,
}

/// Result of checking the gap condition on a stored prefix.
#[derive(Clone, Debug)]
pub struct GapValidation {
    pub pass: bool,
    /// Largest `d` such that the gap lower bound holds on the prefix.
    pub best_d: Float,
    /// Smallest `c` such that the growth upper bound holds on the prefix.
    pub best_c: Float,
}

/// A strictly increasing sequence of positive exponents `λ_1 < λ_2 < …`.
#[derive(Clone, Debug)]
pub struct EigenvalueSequence {
    values: Vec<Float>,
    family: Family,
    asymptotic: Option<AsymptoticParams>,
    gap: Option<GapParams>,
    prec: Prec,
}

impl EigenvalueSequence {
    /// Builds the power family `λ_k = (k/mu)^{2α}` with `count` terms.
    pub fn power(alpha: f64, mu: f64, count: usize, prec: Prec) -> Result<Self> {
        if alpha <= 0.0 || mu <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "power family requires alpha > 0 and mu > 0, got alpha={alpha}, mu={mu}"
            )));
        }
        let two_alpha = prec.from_f64(2.0 * alpha);
        let mu_f = prec.from_f64(mu);
        let values = (1..=count)
            .map(|k| {
                let ratio = prec.from_usize(k) / &mu_f;
                Float::with_val(prec.bits(), ratio.pow(&two_alpha))
            })
            .collect();
        let seq = Self {
            values,
            family: Family::Power { alpha, mu },
            // Power eigenvalues have the exact asymptotic shape K·n^β with
            // β = 2α and K = mu^{-2α}.
            asymptotic: Some(AsymptoticParams {
                scale: mu.powf(-2.0 * alpha),
                shift: 0.0,
                exponent: 2.0 * alpha,
            }),
            gap: None,
            prec,
        };
        seq.check_monotone()?;
        Ok(seq)
    }

    /// Wraps an explicit list of exponents.
    pub fn explicit(values: Vec<Float>, prec: Prec) -> Result<Self> {
        let seq = Self {
            values,
            family: Family::Explicit,
            asymptotic: None,
            gap: None,
            prec,
        };
        seq.check_monotone()?;
        Ok(seq)
    }

    pub fn with_asymptotics(mut self, params: AsymptoticParams) -> Result<Self> {
        if params.exponent <= 1.0 || params.scale <= 0.0 || params.shift < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "asymptotic parameters require K > 0, shift >= 0, beta > 1; got {params:?}"
            )));
        }
        self.asymptotic = Some(params);
        Ok(self)
    }

    pub fn with_gap_params(mut self, params: GapParams) -> Result<Self> {
        params.validate()?;
        self.gap = Some(params);
        Ok(self)
    }

    fn check_monotone(&self) -> Result<()> {
        let mut prev: Option<&Float> = None;
        for (i, v) in self.values.iter().enumerate() {
            if *v <= 0f64 || prev.is_some_and(|p| v <= p) {
                return Err(Error::NonMonotoneSequence { index: i + 1 });
            }
            prev = Some(v);
        }
        // Summable-regime consistency: in the summable power regime the stored
        // reciprocal sum must stay below the analytic bound mu^{2α}·2α/(2α-1)
        // for Σ (mu/k)^{2α}.
        if let Family::Power { alpha, mu } = self.family {
            let two_alpha = 2.0 * alpha;
            if two_alpha > 1.0 && !self.values.is_empty() {
                let mut sum = self.prec.zero();
                for v in &self.values {
                    sum += Float::with_val(self.prec.bits(), v.recip_ref());
                }
                let bound = self
                    .prec
                    .from_f64(mu.powf(two_alpha) * two_alpha / (two_alpha - 1.0));
                if sum > bound {
                    return Err(Error::InvalidParameter(format!(
                        "stored reciprocal sum {} exceeds the analytic tail bound {} \
                         for the summable power family",
                        sum.to_f64(),
                        bound.to_f64()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 1-based access: `value(1)` is `λ_1`.
    pub fn value(&self, k: usize) -> &Float {
        &self.values[k - 1]
    }

    pub fn values(&self) -> &[Float] {
        &self.values
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn gap_params(&self) -> Option<&GapParams> {
        self.gap.as_ref()
    }

    pub fn asymptotic(&self) -> Option<&AsymptoticParams> {
        self.asymptotic.as_ref()
    }

    pub fn prec(&self) -> Prec {
        self.prec
    }

    /// `λ_k^{1/β}` with `β` from the asymptotic parameters; used to calibrate
    /// the biorthogonal growth constant. Falls back to the index when no
    /// asymptotics are declared.
    pub fn growth_coordinate(&self, k: usize) -> Float {
        match self.asymptotic {
            Some(a) => self.prec.powf(self.value(k), 1.0 / a.exponent),
            None => self.prec.from_usize(k),
        }
    }

    /// Checks the gap condition on the prefix `λ_1..λ_upto` and reports the
    /// best achievable constants: the largest `d` and smallest `c` making
    /// both inequalities hold, plus pass/fail against declared parameters.
    pub fn validate_gap(&self, upto: usize) -> Result<GapValidation> {
        if upto > self.len() {
            return Err(Error::InvalidParameter(format!(
                "gap validation up to {upto} requested, only {} values stored",
                self.len()
            )));
        }
        if upto < 2 {
            return Err(Error::InvalidParameter(
                "gap validation needs at least two values".into(),
            ));
        }
        self.check_monotone()?;
        let declared = self.gap;
        let (beta0, beta1) = match declared {
            Some(g) => (g.beta0, g.beta1),
            // Without declared exponents, measure against the power-family
            // defaults β0 = max(1-2α, 0), β1 = 2α, or unit exponents.
            None => match self.family {
                Family::Power { alpha, .. } => ((1.0 - 2.0 * alpha).max(0.0), 2.0 * alpha),
                Family::Explicit => (0.0, 1.0),
            },
        };
        let p = self.prec;
        let mut best_d: Option<Float> = None;
        let mut best_c: Option<Float> = None;
        for i in 1..=upto {
            // Growth: λ_i ≤ c·i^β1 → c ≥ λ_i / i^β1.
            let c_i = self.value(i) / p.powf(&p.from_usize(i), beta1);
            if best_c.as_ref().is_none_or(|b| c_i > *b) {
                best_c = Some(c_i);
            }
            if i < upto {
                // Gap: λ_{i+1} - λ_i ≥ d/(i+1)^β0 → d ≤ gap·(i+1)^β0.
                let gap = Float::with_val(p.bits(), self.value(i + 1) - self.value(i));
                let d_i = gap * p.powf(&p.from_usize(i + 1), beta0);
                if best_d.as_ref().is_none_or(|b| d_i < *b) {
                    best_d = Some(d_i);
                }
            }
        }
        let best_d = best_d.expect("upto >= 2");
        let best_c = best_c.expect("upto >= 1");
        let pass = match declared {
            Some(g) => best_d >= g.d && best_c <= g.c,
            None => best_d > 0f64 && best_c.is_finite(),
        };
        Ok(GapValidation {
            pass,
            best_d,
            best_c,
        })
    }

    /// Classifies `Σ 1/λ_k`: analytic for power families; explicit lists
    /// are `Unknown` unless an asymptotic tail model is attached (whose
    /// exponent is > 1 by construction, hence summable).
    pub fn reciprocal_sum_class(&self) -> SumClass {
        match self.family {
            Family::Power { alpha, .. } => {
                if 2.0 * alpha > 1.0 {
                    SumClass::Summable
                } else {
                    SumClass::Divergent
                }
            }
            Family::Explicit => {
                if self.asymptotic.is_some() {
                    SumClass::Summable
                } else {
                    SumClass::Unknown
                }
            }
        }
    }

    pub fn to_json(&self) -> Value {
        match self.family {
            Family::Power { alpha, mu } => json!({
                "family": "power",
                "alpha": alpha,
                "mu": mu,
                "count": self.len(),
            }),
            Family::Explicit => json!({
                "family": "explicit",
                "values": self.values.iter().map(|v| Value::String(to_decimal_string(v))).collect::<Vec<_>>(),
            }),
        }
    }

    pub fn from_json(v: &Value, prec: Prec) -> Result<Self> {
        let family = v
            .get("family")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::InvalidParameter("eigenvalue JSON needs a `family` tag".into()))?;
        match family {
            "power" => {
                let alpha = field_f64(v, "alpha")?;
                let mu = field_f64(v, "mu")?;
                let count = field_f64(v, "count")? as usize;
                Self::power(alpha, mu, count, prec)
            }
            "explicit" => {
                let raw = v
                    .get("values")
                    .and_then(Value::as_array)
                    .ok_or_else(|| Error::InvalidParameter("explicit family needs `values`".into()))?;
                let values = raw
                    .iter()
                    .map(|x| match x {
                        Value::String(s) => prec.parse(s),
                        Value::Number(n) => prec.parse(&n.to_string()),
                        other => Err(Error::InvalidParameter(format!(
                            "cannot read eigenvalue from {other}"
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::explicit(values, prec)
            }
            other => Err(Error::InvalidParameter(format!(
                "unknown eigenvalue family `{other}`"
            ))),
        }
    }
}

fn field_f64(v: &Value, name: &str) -> Result<f64> {
    v.get(name)
        .and_then(Value::as_f64)
        .ok_or_else(|| Error::InvalidParameter(format!("missing numeric field `{name}`")))
}

/// Which weighted norm to evaluate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SequenceNormKind {
    L1,
    L2,
    LInf,
    /// `(Σ ⟨k⟩^{2θ} |a_k|²)^{1/2}` with `⟨k⟩ = (1+k²)^{1/2}`, θ > 0.
    HTheta(f64),
    /// `Σ k^θ |a_k|`, θ > 0.
    L1Theta(f64),
    /// `Σ e^{α k^β} |a_k|`, α > 0, β > 0.
    L1Exp { alpha: f64, beta: f64 },
}

impl SequenceNormKind {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SequenceNormKind::L1 | SequenceNormKind::L2 | SequenceNormKind::LInf => true,
            SequenceNormKind::HTheta(theta) | SequenceNormKind::L1Theta(theta) => theta > 0.0,
            SequenceNormKind::L1Exp { alpha, beta } => alpha > 0.0 && beta > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "norm parameters must be positive: {self:?}"
            )))
        }
    }
}

/// A finitely supported coefficient vector, 1-based like the series index.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientSequence {
    entries: Vec<Float>,
    prec: Prec,
}

impl CoefficientSequence {
    /// Wraps entries `a_1, …, a_n` (position 0 holds `a_1`); trailing zeros
    /// are trimmed so `support` is the largest nonzero index.
    pub fn from_entries(mut entries: Vec<Float>, prec: Prec) -> Self {
        while entries.last().is_some_and(|x| x.is_zero()) {
            entries.pop();
        }
        Self { entries, prec }
    }

    pub fn zero(prec: Prec) -> Self {
        Self {
            entries: Vec::new(),
            prec,
        }
    }

    /// The basis vector `e_k` scaled by `value`.
    pub fn unit(k: usize, value: Float, prec: Prec) -> Self {
        let mut entries = vec![prec.zero(); k];
        entries[k - 1] = value;
        Self::from_entries(entries, prec)
    }

    /// Largest index with a nonzero entry (0 for the zero sequence).
    pub fn support(&self) -> usize {
        self.entries.len()
    }

    pub fn prec(&self) -> Prec {
        self.prec
    }

    /// 1-based access; indices beyond the support read as zero.
    pub fn get(&self, k: usize) -> Float {
        self.entries.get(k - 1).cloned().unwrap_or_else(|| self.prec.zero())
    }

    pub fn entries(&self) -> &[Float] {
        &self.entries
    }

    pub fn scale(&self, factor: &Float) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|x| Float::with_val(self.prec.bits(), x * factor))
            .collect();
        Self::from_entries(entries, self.prec)
    }

    pub fn sub(&self, other: &Self) -> Self {
        let n = self.entries.len().max(other.entries.len());
        let entries = (1..=n)
            .map(|k| Float::with_val(self.prec.bits(), self.get(k) - other.get(k)))
            .collect();
        Self::from_entries(entries, self.prec)
    }

    /// Evaluates the requested norm; finite support makes every norm a
    /// finite sum.
    pub fn norm(&self, kind: SequenceNormKind) -> Result<Float> {
        kind.validate()?;
        let p = self.prec;
        let mut acc = p.zero();
        match kind {
            SequenceNormKind::L1 => {
                for x in &self.entries {
                    acc += Float::with_val(p.bits(), x.abs_ref());
                }
                Ok(acc)
            }
            SequenceNormKind::L2 => {
                for x in &self.entries {
                    acc += Float::with_val(p.bits(), x.square_ref());
                }
                Ok(acc.sqrt())
            }
            SequenceNormKind::LInf => {
                for x in &self.entries {
                    let a = Float::with_val(p.bits(), x.abs_ref());
                    if a > acc {
                        acc = a;
                    }
                }
                Ok(acc)
            }
            SequenceNormKind::HTheta(theta) => {
                for (i, x) in self.entries.iter().enumerate() {
                    let k = i + 1;
                    let bracket = p.from_usize(1 + k * k); // ⟨k⟩² = 1+k²
                    let weight = p.powf(&bracket, theta);
                    acc += weight * Float::with_val(p.bits(), x.square_ref());
                }
                Ok(acc.sqrt())
            }
            SequenceNormKind::L1Theta(theta) => {
                for (i, x) in self.entries.iter().enumerate() {
                    let k = i + 1;
                    let weight = p.powf(&p.from_usize(k), theta);
                    acc += weight * Float::with_val(p.bits(), x.abs_ref());
                }
                Ok(acc)
            }
            SequenceNormKind::L1Exp { alpha, beta } => {
                for (i, x) in self.entries.iter().enumerate() {
                    let k = i + 1;
                    let exponent = p.from_f64(alpha) * p.powf(&p.from_usize(k), beta);
                    let weight = exponent.exp();
                    acc += weight * Float::with_val(p.bits(), x.abs_ref());
                }
                Ok(acc)
            }
        }
    }

    /// Relative ℓ² distance `‖self - other‖ / ‖other‖` (absolute when `other`
    /// is zero).
    pub fn rel_l2_error(&self, other: &Self) -> Float {
        let diff = self.sub(other).norm(SequenceNormKind::L2).expect("l2");
        let denom = other.norm(SequenceNormKind::L2).expect("l2");
        if denom.is_zero() {
            diff
        } else {
            diff / denom
        }
    }
}
