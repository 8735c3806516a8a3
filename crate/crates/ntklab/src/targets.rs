//! The three benchmark targets: a Gaussian, a cusp and a jump.

use serde::{Deserialize, Serialize};

use crate::error::{NtkLabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSpec {
    Gaussian,
    Cusp,
    Step,
}

impl TargetSpec {
    pub const ALL: [TargetSpec; 3] = [TargetSpec::Gaussian, TargetSpec::Cusp, TargetSpec::Step];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            // (5 / (4 sqrt(2 pi))) exp(-25 x^2 / 2)
            TargetSpec::Gaussian => {
                5.0 / (4.0 * (2.0 * std::f64::consts::PI).sqrt()) * (-12.5 * x * x).exp()
            }
            TargetSpec::Cusp => 1.0 - x.abs().sqrt(),
            // the jump assigns its boundary point to the left branch
            TargetSpec::Step => {
                if x <= 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TargetSpec::Gaussian => "gaussian",
            TargetSpec::Cusp => "cusp",
            TargetSpec::Step => "step",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(TargetSpec::Gaussian),
            "cusp" => Ok(TargetSpec::Cusp),
            "step" => Ok(TargetSpec::Step),
            other => Err(NtkLabError::Config(format!(
                "unknown target {other:?}; expected gaussian, cusp or step"
            ))),
        }
    }
}
