use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::Mat;
use crate::error::{Error, Result};

/// Point features fed to the first edge convolution: position then normal.
pub const INPUT_DIM: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Hidden width h.
    pub hidden: usize,
    /// Number of stacked blocks L.
    pub blocks: usize,
    pub k_nn: usize,
    pub heads: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            blocks: 2,
            k_nn: 8,
            heads: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden < 8 || self.blocks < 1 || self.k_nn < 1 || self.heads < 1 {
            return Err(Error::InvalidInput(format!(
                "model needs hidden >= 8, blocks >= 1, k_nn >= 1, heads >= 1 (got {self:?})"
            )));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::InvalidInput(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct EdgeConvLayout {
    pub w_self: usize,
    pub w_diff: usize,
    pub bias: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct AttentionLayout {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub ln_gain: usize,
    pub ln_shift: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

/// The four attention applications of one block.
#[derive(Clone, Copy, Debug)]
pub struct BlockLayout {
    pub target_self: AttentionLayout,
    pub parts_self: AttentionLayout,
    pub target_from_parts: AttentionLayout,
    pub parts_from_target: AttentionLayout,
}

#[derive(Clone, Copy, Debug)]
pub struct HeadLayout {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Clone, Debug)]
pub struct Layout {
    pub edge: [EdgeConvLayout; 2],
    pub blocks: Vec<BlockLayout>,
    pub prob: HeadLayout,
    pub pose: HeadLayout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Weight,
    Zero,
    One,
}

struct Builder {
    names: Vec<String>,
    shapes: Vec<(usize, usize)>,
    inits: Vec<Init>,
}

impl Builder {
    fn add(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.names.push(name);
        self.shapes.push((rows, cols));
        self.inits.push(init);
        self.names.len() - 1
    }

    fn attention(&mut self, prefix: &str, h: usize) -> AttentionLayout {
        AttentionLayout {
            wq: self.add(format!("{prefix}.wq"), h, h, Init::Weight),
            wk: self.add(format!("{prefix}.wk"), h, h, Init::Weight),
            wv: self.add(format!("{prefix}.wv"), h, h, Init::Weight),
            ln_gain: self.add(format!("{prefix}.ln.gain"), 1, h, Init::One),
            ln_shift: self.add(format!("{prefix}.ln.shift"), 1, h, Init::Zero),
            w1: self.add(format!("{prefix}.mlp.w1"), h, 2 * h, Init::Weight),
            b1: self.add(format!("{prefix}.mlp.b1"), 1, 2 * h, Init::Zero),
            w2: self.add(format!("{prefix}.mlp.w2"), 2 * h, h, Init::Weight),
            b2: self.add(format!("{prefix}.mlp.b2"), 1, h, Init::Zero),
        }
    }

    fn head(&mut self, prefix: &str, h: usize, out: usize) -> HeadLayout {
        HeadLayout {
            w1: self.add(format!("{prefix}.w1"), h, h, Init::Weight),
            b1: self.add(format!("{prefix}.b1"), 1, h, Init::Zero),
            w2: self.add(format!("{prefix}.w2"), h, out, Init::Weight),
            b2: self.add(format!("{prefix}.b2"), 1, out, Init::Zero),
        }
    }
}

fn build(config: &ModelConfig) -> (Layout, Builder) {
    let h = config.hidden;
    let mut b = Builder {
        names: Vec::new(),
        shapes: Vec::new(),
        inits: Vec::new(),
    };
    let mut edge = Vec::new();
    for (l, d) in [INPUT_DIM, h].into_iter().enumerate() {
        edge.push(EdgeConvLayout {
            w_self: b.add(format!("encoder.{l}.w_self"), d, h, Init::Weight),
            w_diff: b.add(format!("encoder.{l}.w_diff"), d, h, Init::Weight),
            bias: b.add(format!("encoder.{l}.bias"), 1, h, Init::Zero),
        });
    }
    let blocks = (0..config.blocks)
        .map(|i| BlockLayout {
            target_self: b.attention(&format!("block.{i}.target_self"), h),
            parts_self: b.attention(&format!("block.{i}.parts_self"), h),
            target_from_parts: b.attention(&format!("block.{i}.target_from_parts"), h),
            parts_from_target: b.attention(&format!("block.{i}.parts_from_target"), h),
        })
        .collect();
    let prob = b.head("prob_head", h, 1);
    let pose = b.head("pose_head", h, 6);
    let layout = Layout {
        edge: [edge[0], edge[1]],
        blocks,
        prob,
        pose,
    };
    (layout, b)
}

/// Named dense parameter matrices in a fixed order.
#[derive(Clone, Debug)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub names: Vec<String>,
    pub tensors: Vec<Mat>,
    pub layout: Layout,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.names == other.names && self.tensors == other.tensors
    }
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (layout, b) = build(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tensors = b
            .shapes
            .iter()
            .zip(&b.inits)
            .map(|(&(r, c), init)| match init {
                Init::Weight => {
                    let a = (6.0 / (r + c) as f64).sqrt();
                    Mat::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-a..a)).collect())
                }
                Init::Zero => Mat::zeros(r, c),
                Init::One => Mat::from_vec(r, c, vec![1.0; r * c]),
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            names: b.names,
            tensors,
            layout,
        })
    }

    /// All weights and biases zero, layer-norm gains one.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut p = Self::new(config, 0)?;
        for (t, name) in p.tensors.iter_mut().zip(&p.names) {
            let v = if name.ends_with("ln.gain") { 1.0 } else { 0.0 };
            t.data.iter_mut().for_each(|x| *x = v);
        }
        Ok(p)
    }

    /// Rebuilds from named tensors, checking names and shapes against the
    /// layout implied by `config`.
    pub fn from_tensors(config: &ModelConfig, names: Vec<String>, tensors: Vec<Mat>) -> Result<Self> {
        config.validate()?;
        let (layout, b) = build(config);
        if names != b.names || tensors.len() != names.len() {
            return Err(Error::format("model parameters", "parameter names do not match the configuration"));
        }
        for ((t, &(r, c)), n) in tensors.iter().zip(&b.shapes).zip(&names) {
            if (t.rows, t.cols) != (r, c) {
                return Err(Error::format(
                    "model parameters",
                    format!("{n} has shape {}x{}, expected {r}x{c}", t.rows, t.cols),
                ));
            }
        }
        let params = Self {
            config: config.clone(),
            names,
            tensors,
            layout,
        };
        if !params.is_finite() {
            return Err(Error::format("model parameters", "non-finite value"));
        }
        Ok(params)
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Mat::is_finite)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Whether weight decay applies (matrices, not biases or norm terms).
    pub fn decays(&self, i: usize) -> bool {
        let n = &self.names[i];
        let last = n.rsplit('.').next().unwrap_or_default();
        !(last.starts_with('b') || n.contains(".ln."))
    }
}
