//! Pipeline configuration and its key-value text format.
//!
//! The config file is plain `key = value` lines; `#` starts a comment.
//! Unknown keys are rejected so typos fail fast. Every field has a default,
//! so an empty file (or no file) is valid.

use std::fmt;

use crate::error::{Error, Result};
use crate::hasher::HashLossWeights;

/// Every tunable of the pipeline in one place. One root seed pins all
/// derived randomness (generator, encoder init/shuffling, basis, hash
/// init/shuffling).
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    /// Hyperdimensionality D.
    pub d: usize,
    /// Feature dimensionality z.
    pub z: usize,
    /// Encoder bottleneck z' (must satisfy z > z').
    pub z_prime: usize,
    /// Pseudo-class count c.
    pub c: usize,
    /// Hash code length L.
    pub l_bits: usize,
    /// Spatial length scale w.
    pub w: f64,
    /// Encoder reconstruction coefficient.
    pub lambda_rec: f64,
    /// Hash loss coefficients.
    pub hash_weights: HashLossWeights,
    pub lr_encoder: f64,
    pub lr_hash: f64,
    pub epochs_encoder: usize,
    pub epochs_hash: usize,
    pub batch_encoder: usize,
    pub batch_hash: usize,
    /// Root seed; stage seeds derive from it by label.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            d: 10_000,
            z: 64,
            z_prime: 16,
            c: 8,
            l_bits: 64,
            w: 1.0,
            lambda_rec: 1.0,
            hash_weights: HashLossWeights::default(),
            lr_encoder: 1e-3,
            // The hash gradients carry 1/(M^2 L) factors; this step size is
            // tuned on the synthetic corpus for normalized scene rows.
            lr_hash: 10.0,
            epochs_encoder: 10,
            epochs_hash: 30,
            batch_encoder: 64,
            batch_hash: 64,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.z_prime < 1 || self.z <= self.z_prime {
            return Err(Error::invalid(format!(
                "bottleneck requires z > z' >= 1, got z = {}, z' = {}",
                self.z, self.z_prime
            )));
        }
        if self.d < self.z {
            return Err(Error::invalid(format!(
                "hyperdimensionality must satisfy D >= z, got D = {}, z = {}",
                self.d, self.z
            )));
        }
        if self.c < 2 {
            return Err(Error::invalid("class count c must be >= 2"));
        }
        if self.l_bits < 1 {
            return Err(Error::invalid("l_bits must be >= 1"));
        }
        if !(self.w > 0.0) {
            return Err(Error::invalid(format!("w must be > 0, got {}", self.w)));
        }
        if !(self.lambda_rec >= 0.0) {
            return Err(Error::invalid("lambda_rec must be >= 0"));
        }
        self.hash_weights.validate()?;
        if !(self.lr_encoder >= 0.0) || !(self.lr_hash >= 0.0) {
            return Err(Error::invalid("learning rates must be >= 0"));
        }
        if self.epochs_encoder == 0 || self.epochs_hash == 0 {
            return Err(Error::invalid("epoch counts must be >= 1"));
        }
        if self.batch_encoder == 0 || self.batch_hash == 0 {
            return Err(Error::invalid("batch sizes must be >= 1"));
        }
        Ok(())
    }

    /// Parse the key-value text format, starting from defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("config line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| {
                Error::invalid(format!(
                    "config line {}: cannot parse `{value}` as {what} for key `{key}`",
                    lineno + 1
                ))
            };
            macro_rules! int {
                () => {
                    value.parse::<usize>().map_err(|_| bad("an integer"))?
                };
            }
            macro_rules! real {
                () => {
                    value.parse::<f64>().map_err(|_| bad("a number"))?
                };
            }
            match key {
                "d" => config.d = int!(),
                "z" => config.z = int!(),
                "z_prime" => config.z_prime = int!(),
                "c" => config.c = int!(),
                "l_bits" => config.l_bits = int!(),
                "w" => config.w = real!(),
                "lambda_rec" => config.lambda_rec = real!(),
                "lambda_mse" => config.hash_weights.lambda_mse = real!(),
                "lambda_w" => config.hash_weights.lambda_w = real!(),
                "lambda_q" => config.hash_weights.lambda_q = real!(),
                "lambda_u" => config.hash_weights.lambda_u = real!(),
                "lambda_o" => config.hash_weights.lambda_o = real!(),
                "lr_encoder" => config.lr_encoder = real!(),
                "lr_hash" => config.lr_hash = real!(),
                "epochs_encoder" => config.epochs_encoder = int!(),
                "epochs_hash" => config.epochs_hash = int!(),
                "batch_encoder" => config.batch_encoder = int!(),
                "batch_hash" => config.batch_hash = int!(),
                "seed" => {
                    config.seed = value.parse::<u64>().map_err(|_| bad("a u64 seed"))?
                }
                other => {
                    return Err(Error::invalid(format!(
                        "config line {}: unknown key `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        config.validate()?;
        Ok(config)
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "d = {}", self.d)?;
        writeln!(f, "z = {}", self.z)?;
        writeln!(f, "z_prime = {}", self.z_prime)?;
        writeln!(f, "c = {}", self.c)?;
        writeln!(f, "l_bits = {}", self.l_bits)?;
        writeln!(f, "w = {}", self.w)?;
        writeln!(f, "lambda_rec = {}", self.lambda_rec)?;
        writeln!(f, "lambda_mse = {}", self.hash_weights.lambda_mse)?;
        writeln!(f, "lambda_w = {}", self.hash_weights.lambda_w)?;
        writeln!(f, "lambda_q = {}", self.hash_weights.lambda_q)?;
        writeln!(f, "lambda_u = {}", self.hash_weights.lambda_u)?;
        writeln!(f, "lambda_o = {}", self.hash_weights.lambda_o)?;
        writeln!(f, "lr_encoder = {}", self.lr_encoder)?;
        writeln!(f, "lr_hash = {}", self.lr_hash)?;
        writeln!(f, "epochs_encoder = {}", self.epochs_encoder)?;
        writeln!(f, "epochs_hash = {}", self.epochs_hash)?;
        writeln!(f, "batch_encoder = {}", self.batch_encoder)?;
        writeln!(f, "batch_hash = {}", self.batch_hash)?;
        writeln!(f, "seed = {}", self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn parse_overrides_and_round_trips() {
        let text = "d = 2000\nz = 32\nz_prime = 8\nw = 0.1  # sharp spatial kernel\nseed = 7\n";
        let config = PipelineConfig::parse(text).unwrap();
        assert_eq!(config.d, 2000);
        assert_eq!(config.z, 32);
        assert_eq!(config.z_prime, 8);
        assert_eq!(config.w, 0.1);
        assert_eq!(config.seed, 7);
        assert_eq!(config.l_bits, 64); // untouched default

        let rendered = config.to_string();
        let reparsed = PipelineConfig::parse(&rendered).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn parse_rejects_unknown_keys_and_bad_values() {
        assert!(PipelineConfig::parse("dd = 5\n").is_err());
        assert!(PipelineConfig::parse("d = many\n").is_err());
        assert!(PipelineConfig::parse("d\n").is_err());
    }

    #[test]
    fn parse_rejects_invalid_combinations() {
        assert!(PipelineConfig::parse("z = 8\nz_prime = 8\n").is_err());
        assert!(PipelineConfig::parse("w = 0\n").is_err());
        assert!(PipelineConfig::parse("d = 16\nz = 64\n").is_err());
    }

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(
            PipelineConfig::parse("").unwrap(),
            PipelineConfig::default()
        );
    }
}
