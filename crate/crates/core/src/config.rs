//! JSON model files.
//!
//! Accepted shapes:
//! `{"nu":[..],"Sigma":[[..],..]}`,
//! `{"equicorrelated":{"d":..,"rho":..,"s2":..,"nu":[..] or scalar}}`,
//! `{"black_scholes":{"X0":..,"r":..,"sigma":..,"T":..,"d":..}}`.

use crate::error::{Error, Result};
use crate::model::{BlackScholesSpec, SlnModel};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuSpec {
    Scalar(f64),
    Vector(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquicorrelatedSpec {
    pub d: usize,
    pub rho: f64,
    pub s2: f64,
    #[serde(default = "zero_nu")]
    pub nu: NuSpec,
}

fn zero_nu() -> NuSpec {
    NuSpec::Scalar(0.0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Full {
        nu: Vec<f64>,
        #[serde(rename = "Sigma")]
        sigma: Vec<Vec<f64>>,
    },
    Equicorrelated {
        equicorrelated: EquicorrelatedSpec,
    },
    BlackScholes {
        black_scholes: BlackScholesSpec,
    },
}

impl ModelSpec {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "{e}; expected {{\"nu\",\"Sigma\"}}, {{\"equicorrelated\":{{..}}}} or {{\"black_scholes\":{{..}}}}"
            ))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validates and factorizes.
    pub fn build(&self) -> Result<SlnModel> {
        match self {
            ModelSpec::Full { nu, sigma } => SlnModel::from_rows(nu.clone(), sigma),
            ModelSpec::Equicorrelated { equicorrelated: e } => {
                let nu = match &e.nu {
                    NuSpec::Scalar(v) => vec![*v; e.d],
                    NuSpec::Vector(v) => v.clone(),
                };
                SlnModel::equicorrelated(e.d, e.rho, e.s2, nu)
            }
            ModelSpec::BlackScholes { black_scholes } => SlnModel::black_scholes(black_scholes),
        }
    }
}
