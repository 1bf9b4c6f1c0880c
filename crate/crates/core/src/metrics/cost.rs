use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::TokenUsage;

/// Prices in US cents per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    pub input_cents_per_million: f64,
    pub output_cents_per_million: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub models: BTreeMap<String, ModelPrice>,
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error("no price configured for model {0:?}")]
    UnknownModel(String),
    #[error("price for model {model:?} must be finite and non-negative")]
    InvalidPrice { model: String },
    #[error("cannot read cost model {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse cost model {path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl CostModel {
    pub fn from_toml_str(text: &str) -> Result<Self, String> {
        let model: CostModel = toml::from_str(text).map_err(|e| e.to_string())?;
        model.validate().map_err(|e| e.to_string())?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, CostError> {
        let text = std::fs::read_to_string(path).map_err(|source| CostError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let model: CostModel = toml::from_str(&text).map_err(|e| CostError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), CostError> {
        for (name, p) in &self.models {
            let ok = |v: f64| v.is_finite() && v >= 0.0;
            if !ok(p.input_cents_per_million) || !ok(p.output_cents_per_million) {
                return Err(CostError::InvalidPrice { model: name.clone() });
            }
        }
        Ok(())
    }

    pub fn with_price(mut self, model_id: &str, input: f64, output: f64) -> Self {
        self.models.insert(
            model_id.to_string(),
            ModelPrice {
                input_cents_per_million: input,
                output_cents_per_million: output,
            },
        );
        self
    }

    pub fn price(&self, model_id: &str) -> Result<&ModelPrice, CostError> {
        self.models
            .get(model_id)
            .ok_or_else(|| CostError::UnknownModel(model_id.to_string()))
    }
}

/// Cents for `usage` at the model's per-million prices.
pub fn compute_cost(usage: TokenUsage, model_id: &str, costs: &CostModel) -> Result<f64, CostError> {
    let p = costs.price(model_id)?;
    Ok(usage.input_tokens as f64 / 1e6 * p.input_cents_per_million
        + usage.output_tokens as f64 / 1e6 * p.output_cents_per_million)
}
