//! JSON instance files: two bodies named `K` and `K_prime`, an optional
//! start pair and optional free-form expectations for golden tests.
//!
//! ```json
//! {
//!   "name": "discs",
//!   "K": { "type": "ball", "center": [-4, 0], "radius": 2.1 },
//!   "K_prime": { "type": "point_set", "points": [[1, 5]] },
//!   "start": { "p": [-4, 0], "p_prime": [1, 5] }
//! }
//! ```
//!
//! Polytopes are `{ "type": "polytope", "a": [[..], ..], "b": [..] }` for
//! `{x : a x <= b}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body::{ConvexBody, SupportOracle};
use crate::error::{Error, Result};
use crate::linalg::Vector;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Start {
    pub p: Vector,
    pub p_prime: Vector,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(rename = "K")]
    pub k: ConvexBody,
    #[serde(rename = "K_prime")]
    pub k_prime: ConvexBody,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Start>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<serde_json::Value>,
}

impl Instance {
    pub fn new(k: ConvexBody, k_prime: ConvexBody) -> Result<Self> {
        let inst = Self {
            name: None,
            k,
            k_prime,
            start: None,
            expected: None,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.k.dim();
        if self.k_prime.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.k_prime.dim(),
            });
        }
        if let Some(s) = &self.start {
            s.p.check_dim(dim)?;
            s.p_prime.check_dim(dim)?;
        }
        Ok(())
    }

    pub fn start_pair(&self) -> Option<(Vector, Vector)> {
        self.start.as_ref().map(|s| (s.p.clone(), s.p_prime.clone()))
    }

    pub fn from_json(text: &str, context: &str) -> Result<Self> {
        let inst: Instance = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("{context}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// Reads and validates an instance file.
pub fn parse_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    Instance::from_json(&text, &path.display().to_string())
}
