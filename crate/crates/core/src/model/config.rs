use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture of the asymmetric autoencoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub clip_len: usize,
    pub input_dim: usize,
    pub enc_depth: usize,
    pub enc_heads: usize,
    pub enc_dim: usize,
    pub dec_depth: usize,
    pub dec_heads: usize,
    pub dec_dim: usize,
    pub mlp_ratio: usize,
    /// Standardize each target frame (zero mean, unit variance) before the
    /// loss and before scoring. Off by default: plain MSE on raw features.
    pub normalize_target: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::base(1024)
    }
}

impl ModelConfig {
    /// 12×12 encoder at 768, 4×6 decoder at 384.
    pub fn base(input_dim: usize) -> Self {
        ModelConfig {
            clip_len: 30,
            input_dim,
            enc_depth: 12,
            enc_heads: 12,
            enc_dim: 768,
            dec_depth: 4,
            dec_heads: 6,
            dec_dim: 384,
            mlp_ratio: 4,
            normalize_target: false,
        }
    }

    /// 24×16 encoder at 1024, 8×16 decoder at 512.
    pub fn large(input_dim: usize) -> Self {
        ModelConfig {
            enc_depth: 24,
            enc_heads: 16,
            enc_dim: 1024,
            dec_depth: 8,
            dec_heads: 16,
            dec_dim: 512,
            ..Self::base(input_dim)
        }
    }

    /// Six-frame clips of 8-d features, one block per stack; used for
    /// gradient checks and fast end-to-end tests.
    pub fn tiny() -> Self {
        ModelConfig {
            clip_len: 6,
            input_dim: 8,
            enc_depth: 1,
            enc_heads: 2,
            enc_dim: 8,
            dec_depth: 1,
            dec_heads: 2,
            dec_dim: 4,
            mlp_ratio: 4,
            normalize_target: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.clip_len < 2 {
            return fail(format!("clip_len must be >= 2, got {}", self.clip_len));
        }
        if self.input_dim == 0 {
            return fail("input_dim must be positive".into());
        }
        if self.enc_heads == 0 || !self.enc_dim.is_multiple_of(self.enc_heads) {
            return fail(format!(
                "enc_dim {} not divisible by enc_heads {}",
                self.enc_dim, self.enc_heads
            ));
        }
        if self.dec_heads == 0 || !self.dec_dim.is_multiple_of(self.dec_heads) {
            return fail(format!(
                "dec_dim {} not divisible by dec_heads {}",
                self.dec_dim, self.dec_heads
            ));
        }
        if !self.enc_dim.is_multiple_of(2) || !self.dec_dim.is_multiple_of(2) {
            return fail("enc_dim and dec_dim must be even".into());
        }
        if self.mlp_ratio == 0 {
            return fail("mlp_ratio must be positive".into());
        }
        Ok(())
    }
}

/// Learnable scalars in one pre-norm transformer block of width `d`:
/// two layer norms, fused QKV, output projection and a two-layer MLP.
pub fn block_parameter_count(d: usize, mlp_ratio: usize) -> usize {
    let h = d * mlp_ratio;
    let norms = 2 * 2 * d;
    let attn = (d * 3 * d + 3 * d) + (d * d + d);
    let mlp = (d * h + h) + (h * d + d);
    norms + attn + mlp
}

/// Exact number of learnable scalars for `config`.
pub fn parameter_count(config: &ModelConfig) -> usize {
    let (i, e, dd) = (config.input_dim, config.enc_dim, config.dec_dim);
    let input_proj = i * e + e;
    let enc_blocks = config.enc_depth * block_parameter_count(e, config.mlp_ratio);
    let enc_norm = 2 * e;
    let enc_to_dec = e * dd + dd;
    let mask_token = dd;
    let dec_blocks = config.dec_depth * block_parameter_count(dd, config.mlp_ratio);
    let dec_norm = 2 * dd;
    let output_proj = dd * i + i;
    input_proj + enc_blocks + enc_norm + enc_to_dec + mask_token + dec_blocks + dec_norm + output_proj
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ModelConfig::base(1024).validate().unwrap();
        ModelConfig::base(2048).validate().unwrap();
        ModelConfig::large(1024).validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::tiny();
        c.enc_heads = 3;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.clip_len = 1;
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.dec_dim = 6;
        c.dec_heads = 6;
        c.validate().unwrap();
        c.dec_dim = 3;
        c.dec_heads = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn depth_is_additive() {
        let c = ModelConfig::base(1024);
        let mut d = c.clone();
        d.enc_depth *= 2;
        assert_eq!(
            parameter_count(&d) - parameter_count(&c),
            c.enc_depth * block_parameter_count(c.enc_dim, c.mlp_ratio)
        );
    }

    #[test]
    fn large_exceeds_base() {
        assert!(parameter_count(&ModelConfig::large(1024)) > parameter_count(&ModelConfig::base(1024)));
    }

    #[test]
    fn tiny_hand_tally() {
        // input proj 8·8+8 = 72
        // enc block (d=8, hidden 32): ln 32, qkv 8·24+24 = 216, proj 72,
        //   fc1 8·32+32 = 288, fc2 32·8+8 = 264 → 872
        // enc norm 16, enc→dec 8·4+4 = 36, mask token 4
        // dec block (d=4, hidden 16): ln 16, qkv 4·12+12 = 60, proj 20,
        //   fc1 4·16+16 = 80, fc2 16·4+4 = 68 → 244
        // dec norm 8, output proj 4·8+8 = 40
        assert_eq!(
            parameter_count(&ModelConfig::tiny()),
            72 + 872 + 16 + 36 + 4 + 244 + 8 + 40
        );
    }
}
