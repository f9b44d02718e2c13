//! Closed-form memory calculators for long-video prefill.
//!
//! Byte counts are exact integers. Grouped variants divide the whole
//! ungrouped count by `G`, so the reduction is exactly `G` even when the
//! block term does not scale with the sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GIB: f64 = (1u64 << 30) as f64;
pub const GB: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryParams {
    pub batch: u64,
    pub seq_len: u64,
    pub layers: u64,
    pub n_heads: u64,
    pub d_head: u64,
    pub d_model: u64,
    pub d_ff: u64,
    pub block_rows: u64,
    pub block_cols: u64,
    pub bytes_per_element: u64,
    pub groups: Option<u64>,
}

impl MemoryParams {
    /// 8B-class model, one hour at 1 fps with 256 tokens per frame plus a
    /// 256-token prompt for the cache.
    pub fn internvl25_8b_1h() -> Self {
        MemoryParams {
            batch: 1,
            seq_len: 3600 * 256,
            layers: 28,
            n_heads: 8,
            d_head: 512,
            d_model: 4096,
            d_ff: 14336,
            block_rows: 1024,
            block_cols: 1024,
            bytes_per_element: 2,
            groups: None,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "internvl25-8b-1h" => Ok(Self::internvl25_8b_1h()),
            other => Err(Error::InvalidConfig(format!("unknown memory preset {other:?}"))),
        }
    }

    /// `seq_len` may be zero; every other field must be positive.
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.batch,
            self.layers,
            self.n_heads,
            self.d_head,
            self.d_model,
            self.d_ff,
            self.block_rows,
            self.block_cols,
            self.bytes_per_element,
            self.groups.unwrap_or(1),
        ];
        if fields.contains(&0) {
            return Err(Error::InvalidConfig(format!("non-positive memory parameter in {self:?}")));
        }
        if self.d_model != self.n_heads * self.d_head {
            return Err(Error::InvalidConfig(format!(
                "d_model {} != n_heads {} * d_head {}",
                self.d_model, self.n_heads, self.d_head
            )));
        }
        Ok(())
    }

    fn grouped(&self, bytes: u128) -> f64 {
        bytes as f64 / self.groups.unwrap_or(1) as f64
    }
}

/// `2 * L * S * n_h * d_h * bytes_per_element`
pub fn kv_cache_bytes(p: &MemoryParams) -> u128 {
    2 * u128::from(p.layers)
        * u128::from(p.seq_len)
        * u128::from(p.n_heads)
        * u128::from(p.d_head)
        * u128::from(p.bytes_per_element)
}

/// `(3 * B * S * n_h * d_h + B * n_h * B_r * B_c) * bytes_per_element`, ignoring `groups`.
pub fn flash_attention_activation_bytes(p: &MemoryParams) -> u128 {
    let (b, h) = (u128::from(p.batch), u128::from(p.n_heads));
    (3 * b * u128::from(p.seq_len) * h * u128::from(p.d_head) + b * h * u128::from(p.block_rows) * u128::from(p.block_cols))
        * u128::from(p.bytes_per_element)
}

/// `B * S * (2 * d_model + 4 * d_ff) * bytes_per_element`, ignoring `groups`.
pub fn swiglu_activation_bytes(p: &MemoryParams) -> u128 {
    u128::from(p.batch)
        * u128::from(p.seq_len)
        * (2 * u128::from(p.d_model) + 4 * u128::from(p.d_ff))
        * u128::from(p.bytes_per_element)
}

/// Peak attention activation per group.
pub fn grouped_flash_attention_bytes(p: &MemoryParams) -> f64 {
    p.grouped(flash_attention_activation_bytes(p))
}

/// Peak feed-forward activation per group.
pub fn grouped_swiglu_bytes(p: &MemoryParams) -> f64 {
    p.grouped(swiglu_activation_bytes(p))
}

/// Uncompressed 8-bit RGB frames.
pub fn raw_video_bytes(frames: u64, height: u64, width: u64) -> u128 {
    u128::from(frames) * 3 * u128::from(height) * u128::from(width)
}

pub fn to_gib(bytes: f64) -> f64 {
    bytes / GIB
}

pub fn to_gb(bytes: f64) -> f64 {
    bytes / GB
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MemoryReport {
    pub params: MemoryParams,
    pub kv_cache_bytes: u128,
    pub kv_cache_gib: f64,
    pub attention_bytes: u128,
    pub attention_gib: f64,
    pub attention_grouped_gib: f64,
    pub swiglu_bytes: u128,
    pub swiglu_gib: f64,
    pub swiglu_grouped_gib: f64,
}

impl MemoryReport {
    /// The cache holds the text prompt as well; `prompt_tokens` is added to `S`.
    pub fn new(params: MemoryParams, prompt_tokens: u64) -> Result<Self> {
        params.validate()?;
        let kv = kv_cache_bytes(&MemoryParams {
            seq_len: params.seq_len + prompt_tokens,
            ..params
        });
        let attn = flash_attention_activation_bytes(&params);
        let ffn = swiglu_activation_bytes(&params);
        Ok(MemoryReport {
            params,
            kv_cache_bytes: kv,
            kv_cache_gib: to_gib(kv as f64),
            attention_bytes: attn,
            attention_gib: to_gib(attn as f64),
            attention_grouped_gib: to_gib(grouped_flash_attention_bytes(&params)),
            swiglu_bytes: ffn,
            swiglu_gib: to_gib(ffn as f64),
            swiglu_grouped_gib: to_gib(grouped_swiglu_bytes(&params)),
        })
    }
}

impl std::fmt::Display for MemoryReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let g = self.params.groups.unwrap_or(1);
        writeln!(f, "kv cache            {:>16} B  {:>10.1} GiB", self.kv_cache_bytes, self.kv_cache_gib)?;
        writeln!(f, "attention act.      {:>16} B  {:>10.2} GiB", self.attention_bytes, self.attention_gib)?;
        writeln!(f, "  per group (G={g:<4}) {:>27.3} GiB", self.attention_grouped_gib)?;
        writeln!(f, "swiglu act.         {:>16} B  {:>10.2} GiB", self.swiglu_bytes, self.swiglu_gib)?;
        write!(f, "  per group (G={g:<4}) {:>27.3} GiB", self.swiglu_grouped_gib)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hour() -> MemoryParams {
        MemoryParams::internvl25_8b_1h()
    }

    #[test]
    fn empty_sequence_is_free() {
        let p = MemoryParams { seq_len: 0, ..hour() };
        assert_eq!(kv_cache_bytes(&p), 0);
        assert_eq!(swiglu_activation_bytes(&p), 0);
    }

    #[test]
    fn minimal_attention() {
        let p = MemoryParams {
            seq_len: 1,
            block_rows: 1,
            block_cols: 1,
            ..hour()
        };
        assert_eq!(flash_attention_activation_bytes(&p), (3 * 8 * 512 + 8) * 2);
    }

    #[test]
    fn kv_is_linear_in_layers() {
        let half = MemoryParams { layers: 14, ..hour() };
        assert_eq!(2 * kv_cache_bytes(&half), kv_cache_bytes(&hour()));
    }

    #[test]
    fn grouping_divides_exactly() {
        let p = MemoryParams { groups: Some(225), ..hour() };
        let ratio = flash_attention_activation_bytes(&p) as f64 / grouped_flash_attention_bytes(&p);
        assert!((ratio - 225.0).abs() <= 225.0 * f64::EPSILON);
        let ratio = swiglu_activation_bytes(&p) as f64 / grouped_swiglu_bytes(&p);
        assert!((ratio - 225.0).abs() <= 225.0 * f64::EPSILON);
    }

    #[test]
    fn raw_video_single_pixel() {
        assert_eq!(raw_video_bytes(1, 1, 1), 3);
        assert_eq!(raw_video_bytes(20, 4, 4), 2 * raw_video_bytes(10, 4, 4));
    }

    #[test]
    fn mismatched_heads_rejected() {
        assert!(MemoryParams { d_head: 100, ..hour() }.validate().is_err());
        assert!(MemoryParams { groups: Some(0), ..hour() }.validate().is_err());
        assert!(MemoryParams::preset("nope").is_err());
    }
}
