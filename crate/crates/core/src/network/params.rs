//! Model shapes, structured parameters and their flat encoding.
//!
//! Every weight and bias of the model is laid out in one flat vector, which
//! is both the differential-evolution genotype and the optimizer state. The
//! layout is described by a [`Manifest`]: an ordered list of named blocks.
//! The default order is
//!
//! 1. each LSTM branch (one when tied; source then suspicious otherwise),
//!    forward direction then backward direction, each as
//!    `W_i W_f W_o W_j U_i U_f U_o U_j b_i b_f b_o b_j`;
//! 2. each attention block (source then suspicious unless tied) as
//!    `W_u w_score b_u`;
//! 3. each head layer as `W b`.
//!
//! Matrices are row-major. Any permutation of the manifest entries is a valid
//! layout; flatten and unflatten follow whatever order the manifest lists.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::linalg::Matrix;
use crate::error::{Error, Result};

/// Bumped whenever the default block order changes.
pub const ORDERING_VERSION: u32 = 1;

pub const GATES: [&str; 4] = ["i", "f", "o", "j"];
pub const GATE_I: usize = 0;
pub const GATE_F: usize = 1;
pub const GATE_O: usize = 2;
pub const GATE_J: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    /// Token vector size.
    pub dim: usize,
    /// LSTM hidden size per direction.
    pub hidden: usize,
    /// Attention projection size.
    pub attention: usize,
    /// Widths of the tanh hidden layers of the head.
    pub head_hidden: Vec<usize>,
    /// Source and suspicious branches share LSTM weights.
    pub tied_lstm: bool,
    /// Source and suspicious branches share attention weights.
    pub tied_attention: bool,
}

impl ModelShape {
    /// Siamese LSTMs, separate attention, head `6H -> 2H -> 1`.
    pub fn new(dim: usize, hidden: usize, attention: usize) -> Self {
        ModelShape {
            dim,
            hidden,
            attention,
            head_hidden: vec![2 * hidden],
            tied_lstm: true,
            tied_attention: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 || self.attention == 0 {
            return Err(Error::Config(format!(
                "model sizes must be positive (dim {}, hidden {}, attention {})",
                self.dim, self.hidden, self.attention
            )));
        }
        if self.head_hidden.contains(&0) {
            return Err(Error::Config("head layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn lstm_branches(&self) -> usize {
        if self.tied_lstm {
            1
        } else {
            2
        }
    }

    pub fn attention_branches(&self) -> usize {
        if self.tied_attention {
            1
        } else {
            2
        }
    }

    fn lstm_prefix(&self, branch: usize) -> &'static str {
        match (self.tied_lstm, branch) {
            (true, _) => "lstm",
            (false, 0) => "lstm_src",
            (false, _) => "lstm_sus",
        }
    }

    fn attention_prefix(&self, branch: usize) -> &'static str {
        match (self.tied_attention, branch) {
            (true, _) => "att",
            (false, 0) => "att_src",
            (false, _) => "att_sus",
        }
    }

    /// Layer widths of the head, input and output included.
    pub fn head_widths(&self) -> Vec<usize> {
        let mut widths = vec![6 * self.hidden];
        widths.extend(&self.head_hidden);
        widths.push(1);
        widths
    }

    /// The default layout.
    pub fn manifest(&self) -> Manifest {
        let (h, d, a) = (self.hidden, self.dim, self.attention);
        let mut blocks = Vec::new();
        for branch in 0..self.lstm_branches() {
            let prefix = self.lstm_prefix(branch);
            for dir in ["fwd", "bwd"] {
                for g in GATES {
                    blocks.push(BlockSpec::new(format!("{prefix}.{dir}.W_{g}"), h, d, h));
                }
                for g in GATES {
                    blocks.push(BlockSpec::new(format!("{prefix}.{dir}.U_{g}"), h, h, h));
                }
                for g in GATES {
                    blocks.push(BlockSpec::new(format!("{prefix}.{dir}.b_{g}"), h, 1, h));
                }
            }
        }
        for branch in 0..self.attention_branches() {
            let prefix = self.attention_prefix(branch);
            blocks.push(BlockSpec::new(format!("{prefix}.W_u"), a, 2 * h, 2 * h));
            blocks.push(BlockSpec::new(format!("{prefix}.w_score"), a, 1, a));
            blocks.push(BlockSpec::new(format!("{prefix}.b_u"), a, 1, 2 * h));
        }
        let widths = self.head_widths();
        for (l, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            blocks.push(BlockSpec::new(format!("head.{l}.W"), fan_out, fan_in, fan_in));
            blocks.push(BlockSpec::new(format!("head.{l}.b"), fan_out, 1, fan_in));
        }
        Manifest {
            shape: self.clone(),
            ordering_version: ORDERING_VERSION,
            blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Fan-in used for the default initialization range.
    pub fan_in: usize,
}

impl BlockSpec {
    fn new(name: String, rows: usize, cols: usize, fan_in: usize) -> Self {
        BlockSpec {
            name,
            rows,
            cols,
            fan_in,
        }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Half-width of the uniform initialization range, `1/sqrt(fan_in)`.
    pub fn init_bound(&self) -> f64 {
        1.0 / (self.fan_in.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub shape: ModelShape,
    pub ordering_version: u32,
    pub blocks: Vec<BlockSpec>,
}

impl Manifest {
    /// Total number of parameters.
    pub fn dimension(&self) -> usize {
        self.blocks.iter().map(BlockSpec::len).sum()
    }

    /// Per-coordinate initialization ranges `[-b, b]`, scaled by `scale`.
    pub fn bounds(&self, scale: f64) -> Vec<(f64, f64)> {
        self.blocks
            .iter()
            .flat_map(|b| {
                let w = b.init_bound() * scale;
                std::iter::repeat_n((-w, w), b.len())
            })
            .collect()
    }

    /// Checks that the entries are exactly the default blocks (in any order).
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        let mut expected: HashMap<String, BlockSpec> = self
            .shape
            .manifest()
            .blocks
            .into_iter()
            .map(|b| (b.name.clone(), b))
            .collect();
        for b in &self.blocks {
            match expected.remove(&b.name) {
                Some(e) if e.rows == b.rows && e.cols == b.cols => {}
                Some(e) => {
                    return Err(Error::Config(format!(
                        "block {} is {}x{}, model expects {}x{}",
                        b.name, b.rows, b.cols, e.rows, e.cols
                    )))
                }
                None => return Err(Error::Config(format!("unknown or repeated block {}", b.name))),
            }
        }
        if let Some(name) = expected.keys().next() {
            return Err(Error::Config(format!("manifest is missing block {name}")));
        }
        Ok(())
    }

    /// A copy with the blocks listed in a different order.
    pub fn permuted(&self, order: &[usize]) -> Manifest {
        Manifest {
            shape: self.shape.clone(),
            ordering_version: self.ordering_version,
            blocks: order.iter().map(|&i| self.blocks[i].clone()).collect(),
        }
    }
}

/// The flat genotype together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub manifest: Manifest,
}

impl ParamVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmDirectionParams {
    /// Input weights per gate (i, f, o, j), each `H x dim`.
    pub w: [Matrix; 4],
    /// Recurrent weights per gate, each `H x H`.
    pub u: [Matrix; 4],
    /// Biases per gate, each of length `H`.
    pub b: [Vec<f64>; 4],
}

impl LstmDirectionParams {
    pub fn zeros(dim: usize, hidden: usize) -> Self {
        LstmDirectionParams {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b[0].len()
    }

    pub fn dim(&self) -> usize {
        self.w[0].cols
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub fwd: LstmDirectionParams,
    pub bwd: LstmDirectionParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `A x 2H`
    pub w_u: Matrix,
    pub b_u: Vec<f64>,
    /// Projects the `A`-dimensional activation to a scalar score.
    pub w_score: Vec<f64>,
}

impl AttentionParams {
    pub fn zeros(input: usize, size: usize) -> Self {
        AttentionParams {
            w_u: Matrix::zeros(size, input),
            b_u: vec![0.0; size],
            w_score: vec![0.0; size],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
}

/// Feed-forward head: tanh hidden layers, logistic output unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams {
    pub layers: Vec<DenseLayer>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub shape: ModelShape,
    /// One entry when tied, otherwise source then suspicious.
    pub lstm: Vec<BiLstmParams>,
    /// One entry when tied, otherwise source then suspicious.
    pub attention: Vec<AttentionParams>,
    pub head: FfnParams,
}

impl ModelParams {
    pub fn zeros(shape: &ModelShape) -> Self {
        let (d, h, a) = (shape.dim, shape.hidden, shape.attention);
        let lstm = (0..shape.lstm_branches())
            .map(|_| BiLstmParams {
                fwd: LstmDirectionParams::zeros(d, h),
                bwd: LstmDirectionParams::zeros(d, h),
            })
            .collect();
        let attention = (0..shape.attention_branches())
            .map(|_| AttentionParams::zeros(2 * h, a))
            .collect();
        let layers = shape
            .head_widths()
            .windows(2)
            .map(|w| DenseLayer {
                w: Matrix::zeros(w[1], w[0]),
                b: vec![0.0; w[1]],
            })
            .collect();
        ModelParams {
            shape: shape.clone(),
            lstm,
            attention,
            head: FfnParams { layers },
        }
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` per block.
    pub fn random<R: Rng + ?Sized>(shape: &ModelShape, rng: &mut R) -> Self {
        let manifest = shape.manifest();
        let values: Vec<f64> = manifest
            .bounds(1.0)
            .into_iter()
            .map(|(lo, hi)| rng.random_range(lo..=hi))
            .collect();
        unflatten(&values, &manifest).expect("default manifest matches its own shape")
    }

    pub fn lstm_for(&self, branch: Branch) -> &BiLstmParams {
        &self.lstm[branch.index().min(self.lstm.len() - 1)]
    }

    pub fn attention_for(&self, branch: Branch) -> &AttentionParams {
        &self.attention[branch.index().min(self.attention.len() - 1)]
    }

    pub(crate) fn lstm_for_mut(&mut self, branch: Branch) -> &mut BiLstmParams {
        let i = branch.index().min(self.lstm.len() - 1);
        &mut self.lstm[i]
    }

    pub(crate) fn attention_for_mut(&mut self, branch: Branch) -> &mut AttentionParams {
        let i = branch.index().min(self.attention.len() - 1);
        &mut self.attention[i]
    }

    /// Named views of every block in default order.
    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let names = self.shape.manifest().blocks.into_iter().map(|b| b.name);
        names.zip(self.raw_blocks()).collect()
    }

    fn raw_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for bi in &self.lstm {
            for dir in [&bi.fwd, &bi.bwd] {
                out.extend(dir.w.iter().map(|m| m.data.as_slice()));
                out.extend(dir.u.iter().map(|m| m.data.as_slice()));
                out.extend(dir.b.iter().map(Vec::as_slice));
            }
        }
        for att in &self.attention {
            out.push(&att.w_u.data);
            out.push(&att.w_score);
            out.push(&att.b_u);
        }
        for layer in &self.head.layers {
            out.push(&layer.w.data);
            out.push(&layer.b);
        }
        out
    }

    fn raw_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for bi in &mut self.lstm {
            for dir in [&mut bi.fwd, &mut bi.bwd] {
                out.extend(dir.w.iter_mut().map(|m| m.data.as_mut_slice()));
                out.extend(dir.u.iter_mut().map(|m| m.data.as_mut_slice()));
                out.extend(dir.b.iter_mut().map(Vec::as_mut_slice));
            }
        }
        for att in &mut self.attention {
            out.push(&mut att.w_u.data);
            out.push(&mut att.w_score);
            out.push(&mut att.b_u);
        }
        for layer in &mut self.head.layers {
            out.push(&mut layer.w.data);
            out.push(&mut layer.b);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.raw_blocks().iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Elementwise `self += other`; shapes must match.
    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.raw_blocks_mut().into_iter().zip(other.raw_blocks()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Which sentence of a pair a branch processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Source,
    Suspicious,
}

impl Branch {
    fn index(self) -> usize {
        match self {
            Branch::Source => 0,
            Branch::Suspicious => 1,
        }
    }
}

/// Lays out `params` in `manifest` order.
pub fn flatten(params: &ModelParams, manifest: &Manifest) -> ParamVector {
    let by_name: HashMap<String, &[f64]> = params.blocks().into_iter().collect();
    let mut values = Vec::with_capacity(manifest.dimension());
    for b in &manifest.blocks {
        values.extend_from_slice(by_name[&b.name]);
    }
    ParamVector {
        values,
        manifest: manifest.clone(),
    }
}

/// Rebuilds structured parameters from a flat vector in `manifest` order.
pub fn unflatten(values: &[f64], manifest: &Manifest) -> Result<ModelParams> {
    if values.len() != manifest.dimension() {
        return Err(Error::Usage(format!(
            "parameter vector has {} entries, manifest describes {}",
            values.len(),
            manifest.dimension()
        )));
    }
    let mut params = ModelParams::zeros(&manifest.shape);
    let names: Vec<String> = manifest.shape.manifest().blocks.into_iter().map(|b| b.name).collect();
    let mut by_name: HashMap<String, &mut [f64]> = names.into_iter().zip(params.raw_blocks_mut()).collect();
    let mut offset = 0;
    for b in &manifest.blocks {
        let dst = by_name
            .get_mut(&b.name)
            .ok_or_else(|| Error::Usage(format!("unknown block {}", b.name)))?;
        if dst.len() != b.len() {
            return Err(Error::Usage(format!("block {} has the wrong size", b.name)));
        }
        dst.copy_from_slice(&values[offset..offset + b.len()]);
        offset += b.len();
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shapes() -> Vec<ModelShape> {
        let mut out = Vec::new();
        for tied_lstm in [true, false] {
            for tied_attention in [true, false] {
                let mut s = ModelShape::new(4, 3, 2);
                s.tied_lstm = tied_lstm;
                s.tied_attention = tied_attention;
                out.push(s);
            }
        }
        let mut deep = ModelShape::new(5, 2, 3);
        deep.head_hidden = vec![4, 3];
        out.push(deep);
        out
    }

    #[test]
    fn manifest_counts() {
        let s = ModelShape::new(4, 3, 2);
        let m = s.manifest();
        // one tied BLSTM: 2 * 4 * (3*4 + 3*3 + 3); two attentions: 2 * (2*6 + 2 + 2);
        // head 18 -> 6 -> 1: 18*6 + 6 + 6 + 1
        assert_eq!(m.dimension(), 192 + 32 + 121);
        assert_eq!(flatten(&ModelParams::zeros(&s), &m).len(), m.dimension());
        m.validate().unwrap();
    }

    #[test]
    fn round_trip_every_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in shapes() {
            let p = ModelParams::random(&s, &mut rng);
            let m = s.manifest();
            let v = flatten(&p, &m);
            assert_eq!(v.len(), m.dimension());
            assert_eq!(unflatten(&v.values, &m).unwrap(), p);
        }
    }

    #[test]
    fn default_order_matches_raw_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = ModelShape::new(2, 2, 2);
        let p = ModelParams::random(&s, &mut rng);
        let v = flatten(&p, &s.manifest());
        assert_eq!(&v.values[..4], p.lstm[0].fwd.w[GATE_I].data.as_slice());
        let tail = p.head.layers.last().unwrap().b[0];
        assert_eq!(*v.values.last().unwrap(), tail);
    }

    #[test]
    fn wrong_length_is_rejected() {
        let m = ModelShape::new(2, 2, 2).manifest();
        assert!(matches!(unflatten(&[0.0; 3], &m), Err(Error::Usage(_))));
    }

    #[test]
    fn validate_rejects_foreign_blocks() {
        let mut m = ModelShape::new(2, 2, 2).manifest();
        m.blocks.pop();
        assert!(m.validate().is_err());
        let mut m = ModelShape::new(2, 2, 2).manifest();
        m.blocks[0].rows += 1;
        assert!(m.validate().is_err());
    }

    #[test]
    fn random_init_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = ModelShape::new(4, 3, 2);
        let m = s.manifest();
        let v = flatten(&ModelParams::random(&s, &mut rng), &m);
        for (x, (lo, hi)) in v.values.iter().zip(m.bounds(1.0)) {
            assert!(lo <= *x && *x <= hi);
        }
    }

    proptest! {
        #[test]
        fn permuted_manifest_round_trips(seed in any::<u64>(), perm_seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = ModelShape::new(3, 2, 2);
            let p = ModelParams::random(&s, &mut rng);
            let m = s.manifest();
            let mut order: Vec<usize> = (0..m.blocks.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(perm_seed));
            let pm = m.permuted(&order);
            pm.validate().unwrap();
            let v = flatten(&p, &pm);
            prop_assert_eq!(unflatten(&v.values, &pm).unwrap(), p.clone());
            if order.iter().enumerate().any(|(i, &o)| i != o && m.blocks[i].len() > 0) {
                let default = flatten(&p, &m);
                prop_assert_ne!(v.values, default.values);
            }
        }
    }
}
