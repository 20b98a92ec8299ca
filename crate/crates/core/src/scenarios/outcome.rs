use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = ">=")]
    AtLeast,
    /// Every value lies in the closed interval `threshold = [lo, hi]`.
    #[serde(rename = "in")]
    Within,
    #[serde(rename = "==")]
    Equals,
    /// Every named part passes; `value` holds the parts.
    #[serde(rename = "all")]
    All,
}

/// Measured value of a suite entry and the comparison it was held to.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub value: Value,
    pub threshold: Value,
    pub comparison: Comparison,
    pub passed: bool,
    pub detail: Option<String>,
}

fn finite(x: f64) -> bool {
    x.is_finite()
}

impl Outcome {
    fn new(value: Value, threshold: Value, comparison: Comparison, passed: bool) -> Self {
        Outcome {
            value,
            threshold,
            comparison,
            passed,
            detail: None,
        }
    }

    pub fn at_most(value: f64, threshold: f64) -> Self {
        Self::new(json!(value), json!(threshold), Comparison::AtMost, finite(value) && value <= threshold)
    }

    pub fn at_least(value: f64, threshold: f64) -> Self {
        Self::new(json!(value), json!(threshold), Comparison::AtLeast, finite(value) && value >= threshold)
    }

    /// All values present and inside `[lo, hi]`; `None` marks a failed evaluation.
    pub fn within(values: &[Option<f64>], lo: f64, hi: f64) -> Self {
        let passed = !values.is_empty() && values.iter().all(|v| v.is_some_and(|x| x >= lo && x <= hi));
        Self::new(json!(values), json!([lo, hi]), Comparison::Within, passed)
    }

    pub fn equals<T: Serialize + PartialEq>(observed: T, expected: T) -> Self {
        let passed = observed == expected;
        Self::new(json!(observed), json!(expected), Comparison::Equals, passed)
    }

    pub fn all(parts: Vec<(&str, Outcome)>) -> Self {
        let passed = parts.iter().all(|(_, o)| o.passed);
        let mut value = Map::new();
        for (name, o) in parts {
            value.insert(
                name.to_string(),
                json!({
                    "comparison": o.comparison,
                    "value": o.value,
                    "threshold": o.threshold,
                    "passed": o.passed,
                }),
            );
        }
        Self::new(Value::Object(value), Value::Null, Comparison::All, passed)
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }
}

/// One serialized suite result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub operation: String,
    pub criterion: Option<u8>,
    pub comparison: Option<Comparison>,
    pub value: Value,
    pub threshold: Value,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Check {
    pub(crate) fn from_result(name: &str, operation: &str, criterion: Option<u8>, r: Result<Outcome>) -> Self {
        let base = Check {
            name: name.to_string(),
            operation: operation.to_string(),
            criterion,
            comparison: None,
            value: Value::Null,
            threshold: Value::Null,
            passed: false,
            detail: None,
            error: None,
        };
        match r {
            Ok(o) => Check {
                comparison: Some(o.comparison),
                value: o.value,
                threshold: o.threshold,
                passed: o.passed,
                detail: o.detail,
                ..base
            },
            Err(e) => Check {
                error: Some(e.to_string()),
                ..base
            },
        }
    }
}
