#![allow(dead_code)]

use std::path::PathBuf;

use pointnet_kan::autodiff::{grad_check, GradCheckReport, Graph, Mode, Tensor};
use pointnet_kan::config::RunConfig;
use pointnet_kan::data::{PointCloud, Task};
use pointnet_kan::jacobi::JacobiParams;
use pointnet_kan::layers::ForwardCtx;
use pointnet_kan::models::{Batch, Branch, DecoderKind, Model, ModelConfig};
use pointnet_kan::Result;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALPHA_BETA: [f64; 4] = [-0.5, 0.0, 0.5, 1.0];

/// Random cloud of `n` points with `d` features in `[-1, 1]`.
pub fn random_cloud(rng: &mut impl Rng, n: usize, d: usize) -> PointCloud {
    let f = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    PointCloud::new(f, d).unwrap()
}

/// A small network of either flat branch with random widths, degree and
/// Jacobi parameters, plus a labeled batch for it.
pub struct TinyNet {
    pub model: Model,
    pub batch: Batch,
    pub targets: Vec<usize>,
}

/// `allow_mlp` lets segmentation nets draw an MLP decoder.
pub fn random_tiny_net(seed: u64, allow_mlp: bool) -> TinyNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seg = rng.random_bool(0.5);
    let widths = |rng: &mut ChaCha8Rng, k: usize| -> Vec<usize> { (0..k).map(|_| rng.random_range(2..=8)).collect() };
    let poly = JacobiParams::new(
        *ALPHA_BETA.choose(&mut rng).unwrap(),
        *ALPHA_BETA.choose(&mut rng).unwrap(),
        rng.random_range(1..=4),
    )
    .unwrap();
    let classes = rng.random_range(2..=4);
    let d = 3;
    let cfg = if seg {
        ModelConfig {
            input_dim: d,
            num_classes: classes,
            encoder_widths: widths(&mut rng, 2),
            decoder_widths: widths(&mut rng, 1),
            decoder_kind: if allow_mlp && rng.random_bool(0.5) { DecoderKind::Kan } else { DecoderKind::Mlp },
            poly,
            one_hot_size: 2,
            ..ModelConfig::part_seg()
        }
    } else {
        let (ke, kd) = (rng.random_range(1..=2), rng.random_range(0..=1));
        ModelConfig {
            input_dim: d,
            num_classes: classes,
            encoder_widths: widths(&mut rng, ke),
            decoder_widths: widths(&mut rng, kd),
            poly,
            ..ModelConfig::classification()
        }
    };
    let model = Model::build(&cfg, rng.random()).unwrap();
    let b = rng.random_range(2..=3);
    let n = rng.random_range(4..=16);
    let clouds: Vec<PointCloud> = (0..b)
        .map(|_| {
            let c = random_cloud(&mut rng, n, d);
            if seg {
                let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
                c.with_point_labels(labels).unwrap().with_category(rng.random_range(0..2))
            } else {
                c.with_shape_label(rng.random_range(0..classes))
            }
        })
        .collect();
    let refs: Vec<&PointCloud> = clouds.iter().collect();
    let batch = model.batch(&refs).unwrap();
    let targets = match cfg.branch.task() {
        Task::Classification => batch.shape_labels.clone().unwrap(),
        _ => batch.point_labels.clone().unwrap(),
    };
    TinyNet { model, batch, targets }
}

/// Central-difference check of the training loss against every parameter.
pub fn network_grad_check(net: &TinyNet, mode: Mode, h: f64, tol: f64) -> Result<GradCheckReport> {
    let params: Vec<Tensor> = net.model.state.param_values().to_vec();
    grad_check(
        |g: &mut Graph, vars| {
            let bound = net.model.state.bind_vars(vars.to_vec())?;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut ctx = ForwardCtx::new(mode, &mut rng);
            let logits = net.model.forward(g, &bound, &net.batch, &mut ctx)?;
            g.log_softmax_cross_entropy(logits, &net.targets)
        },
        &params,
        h,
        tol,
    )
}

pub fn is_seg(net: &TinyNet) -> bool {
    net.model.config.branch == Branch::PartSeg
}

/// Running statistics away from their initial values, so eval-mode batch
/// norm is a non-trivial affine map.
pub fn randomize_running_stats(model: &mut Model, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5747);
    for s in model.state.norms_mut() {
        for m in &mut s.running_mean {
            *m = rng.random_range(-0.5..0.5);
        }
        for v in &mut s.running_var {
            *v = rng.random_range(0.5..2.0);
        }
    }
}

pub fn config_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn shipped() -> Vec<(String, ModelConfig)> {
    let mut out: Vec<(String, ModelConfig)> = [
        Branch::Classification,
        Branch::PartSeg,
        Branch::SemanticSeg,
        Branch::Hierarchical,
    ]
    .into_iter()
    .map(|b| (format!("default {}", b.as_str()), ModelConfig::for_branch(b)))
    .collect();
    let mut files: Vec<PathBuf> = std::fs::read_dir(config_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    files.sort();
    assert!(files.len() >= 6);
    for p in files {
        let cfg = RunConfig::load(Some(&p), &[]).unwrap();
        out.push((p.display().to_string(), cfg.model));
    }
    out
}

/// Parameter count recomputed from the config alone.
pub fn formula(cfg: &ModelConfig) -> usize {
    let n1 = cfg.poly.degree() + 1;
    let kan = |a: usize, b: usize| n1 * a * b;
    let head = |a: usize, b: usize| match cfg.decoder_kind {
        DecoderKind::Kan => kan(a, b),
        DecoderKind::Mlp => a * b + b,
    };
    let mut total = 0;
    let mut d;
    let hidden = |total: &mut usize, layer: usize, w: usize| *total += layer + 2 * w;
    if cfg.branch == Branch::Hierarchical {
        let mut extra = cfg.input_dim - 3;
        for st in &cfg.sa_stages {
            d = 3 + extra;
            for &w in &st.widths {
                hidden(&mut total, kan(d, w), w);
                d = w;
            }
            extra = d;
        }
        d = 3 + extra;
    } else {
        d = cfg.input_dim;
    }
    for &w in &cfg.encoder_widths {
        hidden(&mut total, kan(d, w), w);
        d = w;
    }
    if cfg.branch.is_segmentation() {
        d += cfg.encoder_widths[0] + cfg.one_hot_size;
    }
    for &w in &cfg.decoder_widths {
        hidden(&mut total, head(d, w), w);
        d = w;
    }
    total + head(d, cfg.num_classes)
}

/// Activation shapes of every encoder and decoder block, recorded by
/// running blocks one at a time.
pub fn block_shapes(m: &Model, cloud: &PointCloud) -> Vec<Vec<usize>> {
    let flat = m.flat().unwrap();
    let batch = m.batch(&[cloud]).unwrap();
    let mut g = Graph::new();
    let bound = m.state.bind_frozen(&mut g);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut ctx = ForwardCtx::new(Mode::Eval, &mut rng);
    let mut h = g.constant(batch.features.clone());
    let mut shapes = Vec::new();
    for blk in &flat.encoder {
        h = blk.forward(&mut g, &bound, h, &mut ctx).unwrap();
        shapes.push(g.value(h).shape().to_vec());
    }
    let logits = m.forward(&mut g, &bound, &batch, &mut ctx).unwrap();
    shapes.push(vec![flat.decoder_input_width()]);
    for blk in &flat.decoder {
        shapes.push(vec![blk.layer.dims().0, blk.layer.dims().1]);
    }
    shapes.push(g.value(logits).shape().to_vec());
    shapes
}

pub fn d2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let (x, y, z) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    x * x + y * y + z * z
}

/// Recomputes every min-distance from scratch at each step.
pub fn fps_oracle(p: &[[f64; 3]], count: usize, start: usize) -> Vec<usize> {
    let mut sel = vec![start];
    while sel.len() < count {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for i in 0..p.len() {
            if sel.contains(&i) {
                continue;
            }
            let m = sel.iter().map(|&s| d2(p[i], p[s])).fold(f64::INFINITY, f64::min);
            if m > best.0 {
                best = (m, i);
            }
        }
        sel.push(best.1);
    }
    sel
}

pub fn ball_oracle(p: &[[f64; 3]], c: usize, r: f64, k: usize) -> Vec<usize> {
    let mut inside: Vec<usize> = (0..p.len()).filter(|&i| d2(p[i], p[c]) <= r * r).collect();
    inside.truncate(k);
    while inside.len() < k {
        inside.push(inside[0]);
    }
    inside
}

/// Half the clouds sit on a coarse lattice so ties and duplicates occur.
pub fn oracle_clouds(count: usize, seed: u64) -> Vec<Vec<[f64; 3]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.random_range(1..=64);
            (0..n)
                .map(|_| {
                    let mut q = [0.0; 3];
                    for v in &mut q {
                        *v = if i % 2 == 0 {
                            rng.random_range(-1.0..1.0)
                        } else {
                            rng.random_range(-2..=2) as f64 * 0.25
                        };
                    }
                    q
                })
                .collect()
        })
        .collect()
}


/// Two-layer encoder, one hidden decoder layer, randomized running stats.
pub fn desk_flat(branch: Branch, kind: DecoderKind, seed: u64) -> Model {
    let cfg = match branch {
        Branch::Classification => ModelConfig {
            input_dim: 3,
            num_classes: 5,
            encoder_widths: vec![16, 32],
            decoder_widths: vec![8],
            decoder_kind: kind,
            poly: JacobiParams::new(0.5, -0.5, 3).unwrap(),
            ..ModelConfig::classification()
        },
        _ => ModelConfig {
            num_classes: 4,
            encoder_widths: vec![16, 32],
            decoder_widths: vec![8],
            decoder_kind: kind,
            one_hot_size: 2,
            ..ModelConfig::part_seg()
        },
    };
    let mut m = Model::build(&cfg, seed).unwrap();
    randomize_running_stats(&mut m, seed);
    m
}


/// Closed-form Legendre polynomials up to degree 6.
pub fn legendre(n: usize, x: f64) -> f64 {
    let x2 = x * x;
    match n {
        0 => 1.0,
        1 => x,
        2 => (3.0 * x2 - 1.0) / 2.0,
        3 => (5.0 * x2 - 3.0) * x / 2.0,
        4 => ((35.0 * x2 - 30.0) * x2 + 3.0) / 8.0,
        5 => ((63.0 * x2 - 70.0) * x2 + 15.0) * x / 8.0,
        6 => (((231.0 * x2 - 315.0) * x2 + 105.0) * x2 - 5.0) / 16.0,
        _ => unreachable!(),
    }
}
