use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Correlation, Distribution, EnvError, Utility, Weight};
use crate::scalar::{lit, Scalar};

/// Primitive spec as read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    pub theta_min: f64,
    pub theta_max: f64,
    pub distribution: FamilySpec,
    pub utility: UtilitySpec,
    pub cost: f64,
    pub alpha: f64,
    pub welfare_weight: FamilySpec,
    pub correlation: Correlation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub params: Map<String, Value>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<f64>,
}

impl EnvConfig {
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        serde_json::from_str(text).map_err(|e| EnvError::Config(e.to_string()))
    }
}

fn number(params: &Map<String, Value>, section: &str, key: &str) -> Result<f64, EnvError> {
    match params.get(key) {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| EnvError::Config(format!("{section}.params.{key} must be a number"))),
        None => Err(EnvError::Config(format!("missing key {section}.params.{key}"))),
    }
}

fn number_or(params: &Map<String, Value>, section: &str, key: &str, default: f64) -> Result<f64, EnvError> {
    if params.contains_key(key) {
        number(params, section, key)
    } else {
        Ok(default)
    }
}

fn array(params: &Map<String, Value>, section: &str, key: &str) -> Result<Vec<f64>, EnvError> {
    let bad = || EnvError::Config(format!("{section}.params.{key} must be an array of numbers"));
    match params.get(key) {
        Some(Value::Array(items)) => items.iter().map(|v| v.as_f64().ok_or_else(bad)).collect(),
        Some(_) => Err(bad()),
        None => Err(EnvError::Config(format!("missing key {section}.params.{key}"))),
    }
}

pub(crate) fn parse_distribution<T: Scalar>(spec: &FamilySpec) -> Result<Distribution<T>, EnvError> {
    let p = &spec.params;
    match spec.kind.as_str() {
        "uniform" => Ok(Distribution::Uniform),
        "truncated-normal" | "truncated_normal" => Ok(Distribution::TruncatedNormal {
            mean: lit(number(p, "distribution", "mean")?),
            sd: lit(number(p, "distribution", "sd")?),
        }),
        "scaled-beta" | "scaled_beta" => Ok(Distribution::ScaledBeta {
            a: lit(number(p, "distribution", "a")?),
            b: lit(number(p, "distribution", "b")?),
            pad: lit(number_or(p, "distribution", "pad", 0.0)?),
        }),
        other => Err(EnvError::Config(format!("unknown distribution.type '{other}'"))),
    }
}

pub(crate) fn parse_utility<T: Scalar>(spec: &UtilitySpec) -> Result<Utility<T>, EnvError> {
    match spec.kind.as_str() {
        "sqrt" => Ok(Utility::Sqrt),
        "log" => Ok(Utility::Log),
        "crra" => Ok(Utility::Crra {
            gamma: lit(number(&spec.params, "utility", "gamma")?),
        }),
        other => Err(EnvError::Config(format!("unknown utility.type '{other}'"))),
    }
}

pub(crate) fn parse_weight<T: Scalar>(spec: &FamilySpec) -> Result<Weight<T>, EnvError> {
    let p = &spec.params;
    match spec.kind.as_str() {
        "linear" => Ok(Weight::Linear {
            intercept: lit(number(p, "welfare_weight", "intercept")?),
            slope: lit(number(p, "welfare_weight", "slope")?),
        }),
        "exponential" => Ok(Weight::Exponential {
            scale: lit(number(p, "welfare_weight", "scale")?),
            rate: lit(number(p, "welfare_weight", "rate")?),
        }),
        "tabulated-monotone" | "tabulated_monotone" | "tabulated" => {
            let theta = array(p, "welfare_weight", "theta")?;
            let omega = array(p, "welfare_weight", "omega")?;
            Ok(Weight::Tabulated {
                theta: theta.into_iter().map(lit).collect(),
                omega: omega.into_iter().map(lit).collect(),
            })
        }
        other => Err(EnvError::Config(format!("unknown welfare_weight.type '{other}'"))),
    }
}
