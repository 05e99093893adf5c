//! Recovery reports shared by the three routes.

use rug::Float;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt;

use crate::precision::to_decimal_string;
use crate::sequences::CoefficientSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Biortho,
    Peeling,
    Vandermonde,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Biortho => write!(f, "biortho"),
            Method::Peeling => write!(f, "peeling"),
            Method::Vandermonde => write!(f, "vandermonde"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "biortho" => Ok(Method::Biortho),
            "peeling" => Ok(Method::Peeling),
            "vandermonde" => Ok(Method::Vandermonde),
            other => Err(crate::error::Error::InvalidParameter(format!(
                "unknown method `{other}`"
            ))),
        }
    }
}

/// Outcome of a coefficient recovery: the estimate, the truncation level it
/// was computed at, an optional certified error bound (with calibrated
/// constants), and free-form diagnostics.
#[derive(Clone, Debug)]
pub struct RecoveryReport {
    pub method: Method,
    pub estimate: CoefficientSequence,
    pub truncation: usize,
    pub certified_bound: Option<Float>,
    pub diagnostics: BTreeMap<String, String>,
}

impl RecoveryReport {
    pub fn new(method: Method, estimate: CoefficientSequence, truncation: usize) -> Self {
        Self {
            method,
            estimate,
            truncation,
            certified_bound: None,
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with_bound(mut self, bound: Float) -> Self {
        self.certified_bound = Some(bound);
        self
    }

    pub fn note(&mut self, key: &str, value: impl fmt::Display) {
        self.diagnostics.insert(key.to_string(), value.to_string());
    }

    pub fn to_json(&self) -> Value {
        json!({
            "method": self.method.to_string(),
            "truncation": self.truncation,
            "estimate": self
                .estimate
                .entries()
                .iter()
                .map(|x| Value::String(to_decimal_string(x)))
                .collect::<Vec<_>>(),
            "certified_bound": self
                .certified_bound
                .as_ref()
                .map(|b| Value::String(to_decimal_string(b)))
                .unwrap_or(Value::Null),
            "diagnostics": self.diagnostics,
        })
    }
}
