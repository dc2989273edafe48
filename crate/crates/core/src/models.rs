//! PointNet-KAN networks built from declarative configs.
//!
//! Classification: shared KAN blocks over every point, a max-pool into one
//! global vector, then a head. Segmentation: the first encoder block's
//! output (local), the tiled global vector and an optional one-hot category
//! are concatenated per point and decoded to per-point logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{softmax_rows, Graph, Mode, Tensor, Var};
use crate::data::{PointCloud, Task};
use crate::error::{Error, Result};
use crate::hierarchy::{HybridPP, SaStageConfig};
use crate::jacobi::JacobiParams;
use crate::layers::{
    Block, BlockSettings, Bound, CountKind, ForwardCtx, Layer, LayerKind, ModelState, ParamBreakdown,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Classification,
    PartSeg,
    SemanticSeg,
    /// Set-abstraction encoder with an MLP classification head.
    Hierarchical,
}

impl Branch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Branch::Classification => "classification",
            Branch::PartSeg => "part_seg",
            Branch::SemanticSeg => "semantic_seg",
            Branch::Hierarchical => "hierarchical",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classification" | "cls" => Ok(Branch::Classification),
            "part_seg" => Ok(Branch::PartSeg),
            "semantic_seg" | "sem_seg" => Ok(Branch::SemanticSeg),
            "hierarchical" | "hybridpp" => Ok(Branch::Hierarchical),
            other => Err(Error::Config(format!("unknown branch '{other}'"))),
        }
    }

    pub fn task(&self) -> Task {
        match self {
            Branch::Classification | Branch::Hierarchical => Task::Classification,
            Branch::PartSeg => Task::PartSeg,
            Branch::SemanticSeg => Task::SemanticSeg,
        }
    }

    pub fn is_segmentation(&self) -> bool {
        matches!(self, Branch::PartSeg | Branch::SemanticSeg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderKind {
    Kan,
    Mlp,
}

impl DecoderKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DecoderKind::Kan => "kan",
            DecoderKind::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "kan" => Ok(DecoderKind::Kan),
            "mlp" => Ok(DecoderKind::Mlp),
            other => Err(Error::Config(format!("unknown decoder kind '{other}'"))),
        }
    }

    fn layer(self) -> LayerKind {
        match self {
            DecoderKind::Kan => LayerKind::Kan,
            DecoderKind::Mlp => LayerKind::Mlp,
        }
    }
}

/// Network description. For the hierarchical branch `encoder_widths` are
/// the global stage's widths and `decoder_widths` the hidden head widths.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub branch: Branch,
    pub input_dim: usize,
    pub num_classes: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub decoder_kind: DecoderKind,
    pub poly: JacobiParams,
    pub one_hot_size: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Dropout after every hidden decoder block.
    pub dropout: f64,
    pub sa_stages: Vec<SaStageConfig>,
    /// Pick the first farthest-point centroid at random instead of index 0.
    pub fps_random_start: bool,
}

impl ModelConfig {
    /// `d=6` inputs, one shared KAN to 3072, a KAN head to 40 classes,
    /// degree 4 with `α = β = 1`.
    pub fn classification() -> Self {
        Self {
            branch: Branch::Classification,
            input_dim: 6,
            num_classes: 40,
            encoder_widths: vec![3072],
            decoder_widths: vec![],
            decoder_kind: DecoderKind::Kan,
            poly: JacobiParams::new(1.0, 1.0, 4).expect("valid"),
            one_hot_size: 0,
            bn_momentum: crate::autodiff::BatchNormState::DEFAULT_MOMENTUM,
            bn_eps: crate::autodiff::BatchNormState::DEFAULT_EPS,
            dropout: 0.0,
            sa_stages: Vec::new(),
            fps_random_start: false,
        }
    }

    /// 50 parts over 16 categories, encoder 640 → 5120, decoder 640,
    /// degree 2 Chebyshev (`α = β = −0.5`).
    pub fn part_seg() -> Self {
        Self {
            branch: Branch::PartSeg,
            input_dim: 3,
            num_classes: 50,
            encoder_widths: vec![640, 5120],
            decoder_widths: vec![640],
            poly: JacobiParams::new(-0.5, -0.5, 2).expect("valid"),
            one_hot_size: 16,
            ..Self::classification()
        }
    }

    /// 13 classes from 9 per-point features, no one-hot input.
    pub fn semantic_seg() -> Self {
        Self {
            branch: Branch::SemanticSeg,
            input_dim: 9,
            num_classes: 13,
            one_hot_size: 0,
            ..Self::part_seg()
        }
    }

    /// Three set-abstraction stages with shared KAN layers and an MLP head
    /// `1024 → 512 → 256 → k` with 40% dropout.
    pub fn hierarchical() -> Self {
        Self {
            branch: Branch::Hierarchical,
            input_dim: 3,
            num_classes: 40,
            encoder_widths: vec![256, 512, 1024],
            decoder_widths: vec![512, 256],
            decoder_kind: DecoderKind::Mlp,
            poly: JacobiParams::new(-0.5, -0.5, 2).expect("valid"),
            dropout: 0.4,
            sa_stages: vec![
                SaStageConfig {
                    centroids: 512,
                    radius: 0.2,
                    neighbors: 32,
                    widths: vec![64, 64, 128],
                },
                SaStageConfig {
                    centroids: 128,
                    radius: 0.4,
                    neighbors: 64,
                    widths: vec![128, 128, 256],
                },
            ],
            ..Self::classification()
        }
    }

    pub fn for_branch(branch: Branch) -> Self {
        match branch {
            Branch::Classification => Self::classification(),
            Branch::PartSeg => Self::part_seg(),
            Branch::SemanticSeg => Self::semantic_seg(),
            Branch::Hierarchical => Self::hierarchical(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if self.input_dim < 3 {
            return cfg(format!("input_dim must be at least 3 (xyz), got {}", self.input_dim));
        }
        if self.num_classes == 0 {
            return cfg("num_classes must be positive".into());
        }
        if self.encoder_widths.is_empty() {
            return cfg("encoder_widths must list at least one width".into());
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return cfg("layer widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return cfg(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..1.0).contains(&self.bn_momentum) || !(self.bn_eps > 0.0) {
            return cfg("batch-norm momentum must be in [0, 1) and eps positive".into());
        }
        match self.branch {
            Branch::SemanticSeg if self.one_hot_size > 0 => {
                cfg("semantic segmentation takes no one-hot category input; set one_hot_size = 0".into())
            }
            Branch::Classification | Branch::Hierarchical if self.one_hot_size > 0 => {
                cfg("one_hot_size is only meaningful for part segmentation".into())
            }
            Branch::Hierarchical => {
                if self.sa_stages.is_empty() {
                    return cfg("hierarchical branch needs at least one set-abstraction stage".into());
                }
                for (i, s) in self.sa_stages.iter().enumerate() {
                    s.validate().map_err(|e| Error::Config(format!("stage {}: {e}", i + 1)))?;
                    if i > 0 && s.centroids > self.sa_stages[i - 1].centroids {
                        return cfg(format!(
                            "stage {} samples more centroids than stage {}",
                            i + 1,
                            i
                        ));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn settings(&self) -> BlockSettings {
        BlockSettings {
            poly: self.poly,
            bn_momentum: self.bn_momentum,
            bn_eps: self.bn_eps,
        }
    }
}

/// Equal-size clouds stacked into one `(B·N) × d` matrix.
#[derive(Debug, Clone)]
pub struct Batch {
    pub size: usize,
    pub points: usize,
    pub features: Tensor,
    /// `B × one_hot_size` category indicators.
    pub one_hot: Option<Tensor>,
    pub shape_labels: Option<Vec<usize>>,
    /// `B·N` point labels, cloud-major.
    pub point_labels: Option<Vec<usize>>,
    pub categories: Option<Vec<usize>>,
}

impl Batch {
    pub fn from_clouds(clouds: &[&PointCloud], one_hot_size: usize) -> Result<Self> {
        let first = clouds
            .first()
            .ok_or_else(|| Error::Data("empty batch".into()))?;
        let (n, d) = (first.len(), first.dim);
        let mut features = Vec::with_capacity(clouds.len() * n * d);
        for c in clouds {
            if c.len() != n || c.dim != d {
                return Err(Error::Data(format!(
                    "batch mixes clouds of {n}×{d} and {}×{}",
                    c.len(),
                    c.dim
                )));
            }
            features.extend_from_slice(&c.features);
        }
        let all = |f: &dyn Fn(&PointCloud) -> Option<usize>| -> Option<Vec<usize>> {
            clouds.iter().map(|c| f(c)).collect()
        };
        let shape_labels = all(&|c| c.shape_label);
        let categories = all(&|c| c.category);
        let point_labels = if clouds.iter().all(|c| c.point_labels.is_some()) {
            Some(
                clouds
                    .iter()
                    .flat_map(|c| c.point_labels.as_ref().unwrap().iter().copied())
                    .collect(),
            )
        } else {
            None
        };
        let one_hot = if one_hot_size > 0 {
            let cats = categories.as_ref().ok_or_else(|| {
                Error::Data("part segmentation needs a category for every cloud (one-hot input)".into())
            })?;
            let mut oh = vec![0.0; clouds.len() * one_hot_size];
            for (b, &c) in cats.iter().enumerate() {
                if c >= one_hot_size {
                    return Err(Error::Data(format!(
                        "category {c} does not fit a one-hot vector of size {one_hot_size}"
                    )));
                }
                oh[b * one_hot_size + c] = 1.0;
            }
            Some(Tensor::new(vec![clouds.len(), one_hot_size], oh)?)
        } else {
            None
        };
        Ok(Self {
            size: clouds.len(),
            points: n,
            features: Tensor::new(vec![clouds.len() * n, d], features)?,
            one_hot,
            shape_labels,
            point_labels,
            categories,
        })
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// xyz of point `p` in cloud `b`.
    pub fn xyz(&self, b: usize, p: usize) -> [f64; 3] {
        let r = self.features.row(b * self.points + p);
        [r[0], r[1], r[2]]
    }
}

/// The flat (non-hierarchical) PointNet-KAN network.
#[derive(Debug, Clone)]
pub struct PointNetKan {
    pub encoder: Vec<Block>,
    pub decoder: Vec<Block>,
    branch: Branch,
}

impl PointNetKan {
    fn build(cfg: &ModelConfig, state: &mut ModelState, rng: &mut ChaCha8Rng) -> Self {
        let s = cfg.settings();
        let mut encoder = Vec::new();
        let mut d = cfg.input_dim;
        for (i, &w) in cfg.encoder_widths.iter().enumerate() {
            encoder.push(Block::hidden(state, &format!("enc{i}"), LayerKind::Kan, d, w, &s, rng));
            d = w;
        }
        if cfg.branch.is_segmentation() {
            d += cfg.encoder_widths[0] + cfg.one_hot_size;
        }
        let kind = cfg.decoder_kind.layer();
        let mut decoder = Vec::new();
        for (i, &w) in cfg.decoder_widths.iter().enumerate() {
            decoder.push(
                Block::hidden(state, &format!("dec{i}"), kind, d, w, &s, rng).with_dropout(cfg.dropout),
            );
            d = w;
        }
        decoder.push(Block::output(state, "head", kind, d, cfg.num_classes, &s, rng));
        Self {
            encoder,
            decoder,
            branch: cfg.branch,
        }
    }

    /// Width of the first decoder layer's input.
    pub fn decoder_input_width(&self) -> usize {
        self.decoder[0].layer.dims().0
    }

    fn forward(&self, g: &mut Graph, bound: &Bound<'_>, batch: &Batch, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let (b, n) = (batch.size, batch.points);
        let x = g.constant(batch.features.clone());
        let mut h = x;
        let mut local = None;
        for blk in &self.encoder {
            h = blk.forward(g, bound, h, ctx)?;
            local.get_or_insert(h);
        }
        let global = g.max_pool_groups(h, n)?;
        let mut y = if self.branch.is_segmentation() {
            let tiled = g.tile_global(global, n)?;
            let mut parts = vec![local.expect("encoder is non-empty"), tiled];
            if let Some(oh) = &batch.one_hot {
                let c = g.constant(oh.clone());
                parts.push(g.tile_global(c, n)?);
            }
            g.concat_features(&parts)?
        } else {
            global
        };
        for blk in &self.decoder {
            y = blk.forward(g, bound, y, ctx)?;
        }
        if self.branch.is_segmentation() {
            let m = g.value(y).cols();
            y = g.reshape(y, vec![b, n, m])?;
        }
        Ok(y)
    }
}

#[derive(Debug, Clone)]
enum Arch {
    Flat(PointNetKan),
    Hierarchical(HybridPP),
}

/// A built network: config, parameters, and layer structure.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub state: ModelState,
    arch: Arch,
}

/// Operation counts per stage for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FlopReport {
    pub stages: Vec<(String, u64)>,
    pub convention: &'static str,
}

impl FlopReport {
    pub fn total(&self) -> u64 {
        self.stages.iter().map(|(_, f)| f).sum()
    }
}

pub const FLOP_CONVENTION: &str = "multiply and add counted separately; per KAN layer and row: \
2·(n+1)·d_in·d_out contraction + 6·n·d_in basis recursion + d_in tanh; per MLP layer and row: \
2·d_in·d_out + d_out bias (+ d_out ReLU); batch norm, max-pool and concat: 1 op per element";

pub(crate) fn block_flops(blk: &Block, rows: u64) -> u64 {
    let (di, dout) = blk.layer.dims();
    let (di, dout) = (di as u64, dout as u64);
    let layer = match &blk.layer {
        Layer::Kan(l) => {
            let n = l.params().degree() as u64;
            2 * (n + 1) * di * dout + 6 * n * di + di
        }
        Layer::Mlp(l) => {
            2 * di * dout + dout + if l.activation == crate::layers::Activation::Relu { dout } else { 0 }
        }
    };
    let bn = if blk.norm.is_some() { dout } else { 0 };
    rows * (layer + bn)
}

impl Model {
    /// Builds and initializes a network from a validated config.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = ModelState::new();
        let arch = match config.branch {
            Branch::Hierarchical => Arch::Hierarchical(HybridPP::build(config, &mut state, &mut rng)),
            _ => Arch::Flat(PointNetKan::build(config, &mut state, &mut rng)),
        };
        Ok(Self {
            config: config.clone(),
            state,
            arch,
        })
    }

    pub fn task(&self) -> Task {
        self.config.branch.task()
    }

    pub fn flat(&self) -> Option<&PointNetKan> {
        match &self.arch {
            Arch::Flat(m) => Some(m),
            Arch::Hierarchical(_) => None,
        }
    }

    pub fn hierarchical(&self) -> Option<&HybridPP> {
        match &self.arch {
            Arch::Hierarchical(m) => Some(m),
            Arch::Flat(_) => None,
        }
    }

    /// Checks a batch against the model's input contract.
    pub fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.dim() != self.config.input_dim {
            return Err(Error::Config(format!(
                "model expects {} features per point, data has {}",
                self.config.input_dim,
                batch.dim()
            )));
        }
        if self.config.one_hot_size > 0 && batch.one_hot.is_none() {
            return Err(Error::Data("part segmentation batch lacks one-hot categories".into()));
        }
        Ok(())
    }

    pub fn batch(&self, clouds: &[&PointCloud]) -> Result<Batch> {
        let b = Batch::from_clouds(clouds, self.config.one_hot_size)?;
        self.check_batch(&b)?;
        Ok(b)
    }

    /// Logits: `B × k` for classification, `B × N × m` for segmentation.
    pub fn forward(&self, g: &mut Graph, bound: &Bound<'_>, batch: &Batch, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        self.check_batch(batch)?;
        match &self.arch {
            Arch::Flat(m) => m.forward(g, bound, batch, ctx),
            Arch::Hierarchical(m) => m.forward(g, bound, batch, ctx).map(|(logits, _)| logits),
        }
    }

    /// Eval-mode logits with frozen parameters.
    pub fn logits(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.state.bind_frozen(&mut g);
        // Dropout is the identity in eval mode, so the generator is never drawn from.
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = ForwardCtx::new(Mode::Eval, &mut rng);
        let y = self.forward(&mut g, &bound, batch, &mut ctx)?;
        Ok(g.value(y).clone())
    }

    /// Class probabilities: softmax over the last axis of [`Model::logits`].
    pub fn predict_proba(&self, batch: &Batch) -> Result<Tensor> {
        Ok(softmax_rows(&self.logits(batch)?))
    }

    pub fn param_breakdown(&self) -> ParamBreakdown {
        let mut layers = Vec::new();
        match &self.arch {
            Arch::Flat(m) => {
                for blk in m.encoder.iter().chain(&m.decoder) {
                    blk.counts(&mut layers);
                }
            }
            Arch::Hierarchical(m) => {
                for blk in m.blocks() {
                    blk.counts(&mut layers);
                }
            }
        }
        ParamBreakdown { layers }
    }

    pub fn param_count(&self) -> usize {
        self.param_breakdown().total()
    }

    /// Encoder-only parameter count (everything before the pool for flat
    /// models, the set-abstraction stages for hierarchical ones).
    pub fn encoder_param_count(&self) -> usize {
        let mut layers = Vec::new();
        match &self.arch {
            Arch::Flat(m) => m.encoder.iter().for_each(|b| b.counts(&mut layers)),
            Arch::Hierarchical(m) => m.encoder_blocks().for_each(|b| b.counts(&mut layers)),
        }
        layers.iter().map(|l| l.params).sum()
    }

    /// Operation estimate for one sample of `n` points; see [`FLOP_CONVENTION`].
    pub fn flops_estimate(&self, n: usize) -> FlopReport {
        let rows = n as u64;
        let mut stages = Vec::new();
        match &self.arch {
            Arch::Flat(m) => {
                let mut width = 0;
                for blk in &m.encoder {
                    stages.push((blk.name.clone(), block_flops(blk, rows)));
                    width = blk.d_out() as u64;
                }
                stages.push(("max_pool".into(), rows * width));
                let head_rows = if self.config.branch.is_segmentation() {
                    let concat = m.decoder_input_width() as u64;
                    stages.push(("concat".into(), rows * concat));
                    rows
                } else {
                    u64::from(n > 0)
                };
                for blk in &m.decoder {
                    stages.push((blk.name.clone(), block_flops(blk, head_rows)));
                }
            }
            Arch::Hierarchical(h) => h.flops(n, &mut stages),
        }
        FlopReport {
            stages,
            convention: FLOP_CONVENTION,
        }
    }

    /// KAN degree used by every KAN layer.
    pub fn degree(&self) -> usize {
        self.config.poly.degree()
    }
}

/// `true` when every KAN row of `b` has degree `n`.
pub fn breakdown_degree_is(b: &ParamBreakdown, n: usize) -> bool {
    b.layers.iter().all(|l| match l.kind {
        CountKind::Kan { degree } => degree == n,
        _ => true,
    })
}
