//! Set-abstraction hierarchy with shared KAN layers and an MLP head.
//!
//! Each stage samples centroids by farthest-point sampling, gathers up to
//! `neighbors` points within `radius` of each centroid, expresses their
//! coordinates relative to the centroid, runs shared KAN blocks over every
//! grouped point and max-pools each group into one descriptor. A final
//! global stage pools all remaining centroids into one vector for the head.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::layers::{Block, Bound, ForwardCtx, LayerKind, ModelState};
use crate::models::{block_flops, Batch, DecoderKind, ModelConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SaStageConfig {
    pub centroids: usize,
    pub radius: f64,
    pub neighbors: usize,
    pub widths: Vec<usize>,
}

impl SaStageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.centroids == 0 || self.neighbors == 0 {
            return Err(Error::Config("centroid and neighbor counts must be positive".into()));
        }
        if !(self.radius > 0.0) {
            return Err(Error::Config(format!("radius {} must be positive", self.radius)));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("stage widths must be a non-empty list of positive widths".into()));
        }
        Ok(())
    }

    /// `centroids:radius:neighbors:w1,w2,...`
    pub fn to_spec(&self) -> String {
        let w: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        format!("{}:{}:{}:{}", self.centroids, self.radius, self.neighbors, w.join(","))
    }

    pub fn parse_spec(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("stage '{s}' is not centroids:radius:neighbors:w1,w2,..."));
        let f: Vec<&str> = s.split(':').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        let stage = Self {
            centroids: f[0].parse().map_err(|_| bad())?,
            radius: f[1].parse().map_err(|_| bad())?,
            neighbors: f[2].parse().map_err(|_| bad())?,
            widths: f[3]
                .split(',')
                .map(|w| w.trim().parse().map_err(|_| bad()))
                .collect::<Result<_>>()?,
        };
        stage.validate()?;
        Ok(stage)
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Greedy max-min selection of `count` indices starting at `start`.
///
/// Each pick maximizes the distance to the already selected set; ties go
/// to the lowest index. Already selected points are never picked again,
/// even when duplicates leave every remaining distance at zero.
pub fn farthest_point_sample(points: &[[f64; 3]], count: usize, start: usize) -> Result<Vec<usize>> {
    let n = points.len();
    if count > n {
        return Err(Error::Data(format!("cannot sample {count} centroids from {n} points")));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    if start >= n {
        return Err(Error::Data(format!("start index {start} out of range for {n} points")));
    }
    let mut best = vec![f64::INFINITY; n];
    let mut out = Vec::with_capacity(count);
    let mut cur = start;
    for _ in 0..count {
        out.push(cur);
        best[cur] = -1.0;
        let c = points[cur];
        let mut next = usize::MAX;
        let mut far = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if best[i] < 0.0 {
                continue;
            }
            let d = dist2(p, &c);
            if d < best[i] {
                best[i] = d;
            }
            if best[i] > far {
                far = best[i];
                next = i;
            }
        }
        cur = next;
    }
    Ok(out)
}

/// Up to `n_b` indices within `radius` of `points[center]`, ascending. Short
/// groups are padded by repeating the first index.
pub fn ball_query(points: &[[f64; 3]], center: usize, radius: f64, n_b: usize) -> Vec<usize> {
    let c = points[center];
    let r2 = radius * radius;
    let mut idx: Vec<usize> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| dist2(p, &c) <= r2)
        .map(|(i, _)| i)
        .take(n_b)
        .collect();
    if idx.is_empty() {
        idx.push(center);
    }
    let first = idx[0];
    idx.resize(n_b, first);
    idx
}

/// Rows `[xyz − centroid, extras]` for each grouped point.
///
/// `extras` holds per-point features beyond xyz (row-major, `width` each)
/// and passes through unshifted.
pub fn group_normalize(
    points: &[[f64; 3]],
    extras: Option<(&[f64], usize)>,
    centroid: [f64; 3],
    group: &[usize],
) -> Vec<f64> {
    let w = extras.map_or(0, |(_, w)| w);
    let mut out = Vec::with_capacity(group.len() * (3 + w));
    for &i in group {
        let p = points[i];
        out.extend_from_slice(&[p[0] - centroid[0], p[1] - centroid[1], p[2] - centroid[2]]);
        if let Some((e, w)) = extras {
            out.extend_from_slice(&e[i * w..(i + 1) * w]);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SaStage {
    pub config: SaStageConfig,
    pub blocks: Vec<Block>,
}

#[derive(Debug, Clone)]
pub struct HybridPP {
    pub stages: Vec<SaStage>,
    pub global: Vec<Block>,
    pub head: Vec<Block>,
    fps_random_start: bool,
}

fn stack(
    state: &mut ModelState,
    prefix: &str,
    d_in: usize,
    widths: &[usize],
    cfg: &ModelConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<Block>, usize) {
    let s = crate::layers::BlockSettings {
        poly: cfg.poly,
        bn_momentum: cfg.bn_momentum,
        bn_eps: cfg.bn_eps,
    };
    let mut d = d_in;
    let mut blocks = Vec::new();
    for (i, &w) in widths.iter().enumerate() {
        blocks.push(Block::hidden(state, &format!("{prefix}.{i}"), LayerKind::Kan, d, w, &s, rng));
        d = w;
    }
    (blocks, d)
}

impl HybridPP {
    pub(crate) fn build(cfg: &ModelConfig, state: &mut ModelState, rng: &mut ChaCha8Rng) -> Self {
        let mut extra = cfg.input_dim - 3;
        let mut stages = Vec::new();
        for (i, sc) in cfg.sa_stages.iter().enumerate() {
            let (blocks, d) = stack(state, &format!("sa{}", i + 1), 3 + extra, &sc.widths, cfg, rng);
            stages.push(SaStage {
                config: sc.clone(),
                blocks,
            });
            extra = d;
        }
        let (global, mut d) = stack(state, "sa_global", 3 + extra, &cfg.encoder_widths, cfg, rng);
        let s = crate::layers::BlockSettings {
            poly: cfg.poly,
            bn_momentum: cfg.bn_momentum,
            bn_eps: cfg.bn_eps,
        };
        let kind = match cfg.decoder_kind {
            DecoderKind::Kan => LayerKind::Kan,
            DecoderKind::Mlp => LayerKind::Mlp,
        };
        let mut head = Vec::new();
        for (i, &w) in cfg.decoder_widths.iter().enumerate() {
            head.push(Block::hidden(state, &format!("head{i}"), kind, d, w, &s, rng).with_dropout(cfg.dropout));
            d = w;
        }
        head.push(Block::output(state, "head_out", kind, d, cfg.num_classes, &s, rng));
        Self {
            stages,
            global,
            head,
            fps_random_start: cfg.fps_random_start,
        }
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.encoder_blocks().chain(&self.head)
    }

    pub fn encoder_blocks(&self) -> impl Iterator<Item = &Block> {
        self.stages.iter().flat_map(|s| &s.blocks).chain(&self.global)
    }

    /// Logits `B × k` plus each stage's pooled output: `(B·c_s) × w_s` for
    /// the set-abstraction stages and `B × w` for the global stage.
    pub fn forward(
        &self,
        g: &mut Graph,
        bound: &Bound<'_>,
        batch: &Batch,
        ctx: &mut ForwardCtx<'_>,
    ) -> Result<(Var, Vec<Var>)> {
        let (b, n) = (batch.size, batch.points);
        let d = batch.dim();
        if let Some(first) = self.stages.first() {
            if n < first.config.centroids {
                return Err(Error::Data(format!(
                    "{n} points per cloud, first stage samples {} centroids",
                    first.config.centroids
                )));
            }
        }
        let mut pos: Vec<Vec<[f64; 3]>> = (0..b)
            .map(|bi| (0..n).map(|p| batch.xyz(bi, p)).collect())
            .collect();
        // Per-point features beyond xyz; the raw extras before the first stage.
        let mut feat: Option<Var> = if d > 3 {
            let mut e = Vec::with_capacity(b * n * (d - 3));
            for r in 0..b * n {
                e.extend_from_slice(&batch.features.row(r)[3..]);
            }
            Some(g.constant(Tensor::new(vec![b * n, d - 3], e)?))
        } else {
            None
        };
        let mut per_cloud = n;
        let mut outputs = Vec::new();

        for stage in &self.stages {
            let sc = &stage.config;
            let mut rel = Vec::with_capacity(b * sc.centroids * sc.neighbors * 3);
            let mut rows = Vec::with_capacity(b * sc.centroids * sc.neighbors);
            let mut next_pos = Vec::with_capacity(b);
            for (bi, pts) in pos.iter().enumerate() {
                let start = if self.fps_random_start {
                    ctx.rng.random_range(0..pts.len())
                } else {
                    0
                };
                let cent = farthest_point_sample(pts, sc.centroids, start)?;
                for &c in &cent {
                    let group = ball_query(pts, c, sc.radius, sc.neighbors);
                    rel.extend(group_normalize(pts, None, pts[c], &group));
                    rows.extend(group.iter().map(|&j| bi * per_cloud + j));
                }
                next_pos.push(cent.iter().map(|&c| pts[c]).collect::<Vec<_>>());
            }
            let rel = g.constant(Tensor::new(vec![rows.len(), 3], rel)?);
            let mut x = match feat {
                Some(f) => {
                    let gathered = g.gather_rows(f, &rows)?;
                    g.concat_features(&[rel, gathered])?
                }
                None => rel,
            };
            for blk in &stage.blocks {
                x = blk.forward(g, bound, x, ctx)?;
            }
            let pooled = g.max_pool_groups(x, sc.neighbors)?;
            outputs.push(pooled);
            feat = Some(pooled);
            pos = next_pos;
            per_cloud = sc.centroids;
        }

        let xyz: Vec<f64> = pos.iter().flatten().flatten().copied().collect();
        let xyz = g.constant(Tensor::new(vec![b * per_cloud, 3], xyz)?);
        let mut x = match feat {
            Some(f) => g.concat_features(&[xyz, f])?,
            None => xyz,
        };
        for blk in &self.global {
            x = blk.forward(g, bound, x, ctx)?;
        }
        let global = g.max_pool_groups(x, per_cloud)?;
        outputs.push(global);
        let mut y = global;
        for blk in &self.head {
            y = blk.forward(g, bound, y, ctx)?;
        }
        Ok((y, outputs))
    }

    /// Distances count 8 ops (3 subtract, 3 multiply, 2 add).
    pub(crate) fn flops(&self, n: usize, out: &mut Vec<(String, u64)>) {
        if n == 0 {
            return;
        }
        let mut pts = n as u64;
        let mut extra = 0u64;
        for (i, st) in self.stages.iter().enumerate() {
            let c = st.config.centroids as u64;
            let rows = c * st.config.neighbors as u64;
            out.push((format!("sa{}.sample_group", i + 1), 2 * 8 * c * pts + rows * (3 + extra)));
            for blk in &st.blocks {
                out.push((blk.name.clone(), block_flops(blk, rows)));
            }
            let w = st.blocks.last().map_or(0, |b| b.d_out()) as u64;
            out.push((format!("sa{}.max_pool", i + 1), rows * w));
            pts = c;
            extra = w;
        }
        out.push(("sa_global.concat".into(), pts * (3 + extra)));
        for blk in &self.global {
            out.push((blk.name.clone(), block_flops(blk, pts)));
        }
        let w = self.global.last().map_or(0, |b| b.d_out()) as u64;
        out.push(("sa_global.max_pool".into(), pts * w));
        for blk in &self.head {
            out.push((blk.name.clone(), block_flops(blk, 1)));
        }
    }
}
