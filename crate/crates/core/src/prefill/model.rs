use std::ops::Range;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decode::FrameBuffer;
use crate::error::{Error, Result};

use super::TokenGroup;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub layers: usize,
    pub tokens_per_frame: usize,
    pub seed: u64,
}

impl ModelConfig {
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            d_head: 8,
            layers: 2,
            tokens_per_frame: 4,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.layers == 0 || self.tokens_per_frame == 0 {
            return Err(Error::InvalidConfig(format!("degenerate model {self:?}")));
        }
        if self.d_model != self.n_heads * self.d_head {
            return Err(Error::InvalidConfig(format!(
                "d_model {} != n_heads {} * d_head {}",
                self.d_model, self.n_heads, self.d_head
            )));
        }
        Ok(())
    }

    /// Patch grid `(rows, cols)` with `rows * cols == tokens_per_frame` and
    /// rows the largest divisor not above the square root.
    pub fn patch_grid(&self) -> (usize, usize) {
        let n = self.tokens_per_frame;
        let rows = (1..=n).take_while(|r| r * r <= n).filter(|r| n.is_multiple_of(*r)).last().unwrap_or(1);
        (rows, n / rows)
    }
}

/// Per-patch features: three channel means and a bias.
const FEATURES: usize = 4;

/// Seeded stand-in weights. Matrices are `(d_in, d_out)` row-major.
pub struct Model {
    cfg: ModelConfig,
    embed: Vec<f32>,
    w_k: Vec<Vec<f32>>,
    w_v: Vec<Vec<f32>>,
    w_q: Vec<Vec<f32>>,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f32> {
    let scale = 1.0 / (rows as f32).sqrt();
    (0..rows * cols).map(|_| rng.gen_range(-1.0f32..1.0) * scale).collect()
}

/// `x (n, d_in) * w (d_in, d_out)`; each output row depends only on its input
/// row and always accumulates in the same order.
pub(crate) fn matmul(x: &[f32], w: &[f32], d_in: usize, d_out: usize) -> Vec<f32> {
    let n = x.len() / d_in;
    let mut out = vec![0f32; n * d_out];
    for (row, dst) in x.chunks_exact(d_in).zip(out.chunks_exact_mut(d_out)) {
        for (&a, wrow) in row.iter().zip(w.chunks_exact(d_out)) {
            for (o, &b) in dst.iter_mut().zip(wrow) {
                *o += a * b;
            }
        }
    }
    out
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let d = cfg.d_model;
        let embed = random_matrix(&mut rng, FEATURES, d);
        let mut layer = |_| random_matrix(&mut rng, d, d);
        let w_k = (0..cfg.layers).map(&mut layer).collect();
        let w_v = (0..cfg.layers).map(&mut layer).collect();
        let w_q = (0..cfg.layers).map(&mut layer).collect();
        Model {
            cfg,
            embed,
            w_k,
            w_v,
            w_q,
        }
    }

    pub fn try_new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self::new(cfg))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Tokens for one planar `(3, h, w)` frame, appended to `out`.
    pub fn tokenize_frame(&self, pixels: &[u8], height: usize, width: usize, out: &mut Vec<f32>) -> Result<()> {
        let (grid_h, grid_w) = self.cfg.patch_grid();
        if !height.is_multiple_of(grid_h) || !width.is_multiple_of(grid_w) {
            return Err(Error::PatchGrid {
                height,
                width,
                grid_h,
                grid_w,
            });
        }
        let (ph, pw) = (height / grid_h, width / grid_w);
        let area = (ph * pw) as f32;
        let mut sums = vec![[0u64; 3]; grid_h * grid_w];
        for c in 0..3 {
            let plane = &pixels[c * height * width..(c + 1) * height * width];
            for (y, row) in plane.chunks_exact(width).enumerate() {
                let gy = y / ph;
                for (gx, cell) in row.chunks_exact(pw).enumerate() {
                    sums[gy * grid_w + gx][c] += cell.iter().map(|&v| u64::from(v)).sum::<u64>();
                }
            }
        }
        let mut features = Vec::with_capacity(sums.len() * FEATURES);
        for s in &sums {
            for &v in s {
                features.push(v as f32 / area / 255.0 - 0.5);
            }
            features.push(1.0);
        }
        out.extend(matmul(&features, &self.embed, FEATURES, self.cfg.d_model));
        Ok(())
    }

    pub(crate) fn tokenize_group(
        &self,
        frames: &FrameBuffer,
        slots: Range<usize>,
        group_id: usize,
        first_token: u64,
    ) -> Result<TokenGroup> {
        self.tokenize_slots(|j| frames.slot(j), (frames.height, frames.width), slots, group_id, first_token)
    }

    /// Tokenizes `slots` in order, reading each frame through `pixels`.
    pub(crate) fn tokenize_slots<'a>(
        &self,
        pixels: impl Fn(usize) -> &'a [u8],
        (height, width): (usize, usize),
        slots: Range<usize>,
        group_id: usize,
        first_token: u64,
    ) -> Result<TokenGroup> {
        let mut tokens = Vec::with_capacity(slots.len() * self.cfg.tokens_per_frame * self.cfg.d_model);
        for j in slots.clone() {
            self.tokenize_frame(pixels(j), height, width, &mut tokens)?;
        }
        Ok(TokenGroup {
            group_id,
            first_token,
            n_tokens: tokens.len() / self.cfg.d_model,
            tokens,
            frame_span: (slots.start, slots.end - 1),
        })
    }

    pub fn project_keys(&self, layer: usize, tokens: &[f32]) -> Vec<f32> {
        matmul(tokens, &self.w_k[layer], self.cfg.d_model, self.cfg.d_model)
    }

    pub fn project_values(&self, layer: usize, tokens: &[f32]) -> Vec<f32> {
        matmul(tokens, &self.w_v[layer], self.cfg.d_model, self.cfg.d_model)
    }

    /// Per-layer queries for a seeded synthetic prompt of `prompt_tokens`.
    pub fn text_query(&self, prompt_tokens: usize) -> Arc<TextQuery> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x7e57_0000);
        let d = self.cfg.d_model;
        let prompt: Vec<f32> = (0..prompt_tokens * d).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        Arc::new(TextQuery {
            tokens: prompt_tokens,
            per_layer: self.w_q.iter().map(|w| matmul(&prompt, w, d, d)).collect(),
        })
    }
}

/// Text-token queries, one `(tokens, n_heads * d_head)` matrix per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct TextQuery {
    pub tokens: usize,
    pub per_layer: Vec<Vec<f32>>,
}

impl TextQuery {
    pub fn layer(&self, l: usize) -> &[f32] {
        &self.per_layer[l]
    }
}
