//! Per-token API pricing and cost accounting.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PricingError {
    #[error("unknown model {model_id:?}; known models: {known:?}")]
    UnknownModel { model_id: String, known: Vec<String> },
    #[error("price table {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    /// USD per million input tokens.
    pub input_per_million: f64,
    /// USD per million output tokens.
    pub output_per_million: f64,
}

/// USD prices per million tokens, keyed by model id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    prices: BTreeMap<String, ModelPrice>,
}

const BUNDLED_PRICES: &str = include_str!("../data/prices.json");

impl PriceTable {
    /// The table the crate ships with.
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_PRICES).expect("bundled price table parses")
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PricingError> {
        let display = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| PricingError::Io {
            path: display.clone(),
            source,
        })?;
        let table: PriceTable =
            serde_json::from_str(&text).map_err(|e| PricingError::Invalid {
                path: display.clone(),
                message: e.to_string(),
            })?;
        for (model, price) in &table.prices {
            if price.input_per_million <= 0.0 || price.output_per_million <= 0.0 {
                return Err(PricingError::Invalid {
                    path: display,
                    message: format!("non-positive price for {model:?}"),
                });
            }
        }
        Ok(table)
    }

    pub fn known_models(&self) -> Vec<String> {
        self.prices.keys().cloned().collect()
    }

    pub fn get(&self, model_id: &str) -> Result<ModelPrice, PricingError> {
        self.prices
            .get(model_id)
            .copied()
            .ok_or_else(|| PricingError::UnknownModel {
                model_id: model_id.to_string(),
                known: self.known_models(),
            })
    }

    /// `in_tokens / 1e6 * input_price + out_tokens / 1e6 * output_price`.
    pub fn cost_usd(
        &self,
        in_tokens: u64,
        out_tokens: u64,
        model_id: &str,
    ) -> Result<f64, PricingError> {
        let price = self.get(model_id)?;
        Ok(in_tokens as f64 / 1_000_000.0 * price.input_per_million
            + out_tokens as f64 / 1_000_000.0 * price.output_per_million)
    }

    /// Digest of the table contents, recorded in run manifests.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(&self.prices).expect("table serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bundled_table_reproduces_unit_prices_exactly() {
        let table = PriceTable::bundled();
        assert_eq!(table.cost_usd(1_000_000, 0, "Qwen3-0.6b").unwrap(), 0.11);
        assert_eq!(table.cost_usd(0, 1_000_000, "Qwen3-14b").unwrap(), 4.20);
        assert_eq!(table.cost_usd(0, 0, "Qwen3-8b").unwrap(), 0.0);
    }

    #[test]
    fn unknown_model_error_lists_known_ids() {
        let table = PriceTable::bundled();
        match table.cost_usd(1, 1, "gpt-nope") {
            Err(PricingError::UnknownModel { model_id, known }) => {
                assert_eq!(model_id, "gpt-nope");
                assert!(known.contains(&"Qwen3-0.6b".to_string()));
                assert_eq!(known.len(), 6);
            }
            other => panic!("expected UnknownModel, got {other:?}"),
        }
    }

    #[test]
    fn non_positive_price_files_are_rejected() {
        let file = tempfile::NamedTempFile::new().unwrap();
        std::fs::write(
            file.path(),
            r#"{"m":{"input_per_million":0.0,"output_per_million":1.0}}"#,
        )
        .unwrap();
        assert!(matches!(
            PriceTable::from_json_file(file.path()),
            Err(PricingError::Invalid { .. })
        ));
    }

    proptest! {
        #[test]
        fn cost_is_linear_in_each_token_argument(
            a in 0u64..10_000_000,
            b in 0u64..10_000_000,
            out in 0u64..10_000_000,
        ) {
            let table = PriceTable::bundled();
            let split = table.cost_usd(a, out, "Qwen3-4b").unwrap()
                + table.cost_usd(b, 0, "Qwen3-4b").unwrap();
            let joint = table.cost_usd(a + b, out, "Qwen3-4b").unwrap();
            prop_assert!((split - joint).abs() < 1e-9);
        }
    }
}
