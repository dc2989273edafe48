//! Desk-scale synthetic shapes standing in for the mesh benchmarks.
//!
//! Shapes are sampled analytically on their surfaces (area-uniform), spun
//! by a random angle about the up (z) axis, jittered, and normalized into
//! the unit sphere. The mug-like shape carries per-point part labels.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Category, Dataset, PointCloud, Sample, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Sphere,
    Cube,
    Cylinder,
    Torus,
    Mug,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 5] = [
        ShapeClass::Sphere,
        ShapeClass::Cube,
        ShapeClass::Cylinder,
        ShapeClass::Torus,
        ShapeClass::Mug,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ShapeClass::Sphere => "sphere",
            ShapeClass::Cube => "cube",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Torus => "torus",
            ShapeClass::Mug => "mug",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic shape '{s}'")))
    }
}

pub const MUG_BODY: usize = 0;
pub const MUG_HANDLE: usize = 1;

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub classes: Vec<ShapeClass>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub points: usize,
    pub with_normals: bool,
    /// Half-width of the uniform per-coordinate jitter, in shape units.
    pub jitter: f64,
    pub rotate: bool,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            classes: vec![
                ShapeClass::Sphere,
                ShapeClass::Cube,
                ShapeClass::Cylinder,
                ShapeClass::Torus,
            ],
            train_per_class: 200,
            test_per_class: 50,
            points: 256,
            with_normals: false,
            jitter: 0.02,
            rotate: true,
            seed: 0,
        }
    }
}

/// Surface sample before rotation, jitter and normalization.
pub(crate) struct RawShape {
    pub points: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
    pub labels: Vec<usize>,
}

fn push(raw: &mut RawShape, p: [f64; 3], n: [f64; 3], label: usize) {
    raw.points.push(p);
    raw.normals.push(n);
    raw.labels.push(label);
}

fn pick<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Tube point on a torus-like sweep, accepted with probability
/// proportional to the local area element.
fn tube_point<R: Rng>(
    rng: &mut R,
    major: f64,
    minor: f64,
    sweep: (f64, f64),
    frame: impl Fn(f64) -> ([f64; 3], [f64; 3], [f64; 3]),
) -> ([f64; 3], [f64; 3]) {
    loop {
        let theta = sweep.0 + (sweep.1 - sweep.0) * rng.random::<f64>();
        let v = TAU * rng.random::<f64>();
        if rng.random::<f64>() * (major + minor) > major + minor * v.cos() {
            continue;
        }
        let (center, radial, side) = frame(theta);
        let n = [
            v.cos() * radial[0] + v.sin() * side[0],
            v.cos() * radial[1] + v.sin() * side[1],
            v.cos() * radial[2] + v.sin() * side[2],
        ];
        let p = [
            center[0] + minor * n[0],
            center[1] + minor * n[1],
            center[2] + minor * n[2],
        ];
        return (p, n);
    }
}

pub(crate) fn sample_raw<R: Rng>(class: ShapeClass, n: usize, rng: &mut R) -> RawShape {
    let mut raw = RawShape {
        points: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
    };
    let vary = |rng: &mut R| 0.9 + 0.2 * rng.random::<f64>();
    match class {
        ShapeClass::Sphere => {
            for _ in 0..n {
                let z = 2.0 * rng.random::<f64>() - 1.0;
                let phi = TAU * rng.random::<f64>();
                let s = (1.0 - z * z).sqrt();
                let p = [s * phi.cos(), s * phi.sin(), z];
                push(&mut raw, p, p, 0);
            }
        }
        ShapeClass::Cube => {
            let h = [vary(rng), vary(rng), vary(rng)];
            // faces normal to x, y, z (two each)
            let areas = [4.0 * h[1] * h[2], 4.0 * h[0] * h[2], 4.0 * h[0] * h[1]];
            for _ in 0..n {
                let axis = pick(rng, &areas);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let mut p = [0.0; 3];
                let mut nrm = [0.0; 3];
                for k in 0..3 {
                    p[k] = h[k] * (2.0 * rng.random::<f64>() - 1.0);
                }
                p[axis] = sign * h[axis];
                nrm[axis] = sign;
                push(&mut raw, p, nrm, 0);
            }
        }
        ShapeClass::Cylinder => {
            let r = 0.6 * vary(rng);
            let half = vary(rng);
            let areas = [TAU * r * 2.0 * half, PI * r * r, PI * r * r];
            for _ in 0..n {
                let phi = TAU * rng.random::<f64>();
                match pick(rng, &areas) {
                    0 => {
                        let z = half * (2.0 * rng.random::<f64>() - 1.0);
                        let (c, s) = (phi.cos(), phi.sin());
                        push(&mut raw, [r * c, r * s, z], [c, s, 0.0], 0);
                    }
                    cap => {
                        let rho = r * rng.random::<f64>().sqrt();
                        let z = if cap == 1 { half } else { -half };
                        push(
                            &mut raw,
                            [rho * phi.cos(), rho * phi.sin(), z],
                            [0.0, 0.0, z.signum()],
                            0,
                        );
                    }
                }
            }
        }
        ShapeClass::Torus => {
            let major = 1.0;
            let minor = 0.35 * vary(rng);
            for _ in 0..n {
                let (p, nrm) = tube_point(rng, major, minor, (0.0, TAU), |t| {
                    let (c, s) = (t.cos(), t.sin());
                    ([major * c, major * s, 0.0], [c, s, 0.0], [0.0, 0.0, 1.0])
                });
                push(&mut raw, p, nrm, 0);
            }
        }
        ShapeClass::Mug => {
            let r = 0.5;
            let half = 0.6;
            let (hr, ht) = (0.4, 0.08);
            let handle_area = PI * hr * TAU * ht;
            let areas = [TAU * r * 2.0 * half, PI * r * r, handle_area];
            for _ in 0..n {
                let phi = TAU * rng.random::<f64>();
                match pick(rng, &areas) {
                    0 => {
                        let z = half * (2.0 * rng.random::<f64>() - 1.0);
                        let (c, s) = (phi.cos(), phi.sin());
                        push(&mut raw, [r * c, r * s, z], [c, s, 0.0], MUG_BODY);
                    }
                    1 => {
                        let rho = r * rng.random::<f64>().sqrt();
                        push(
                            &mut raw,
                            [rho * phi.cos(), rho * phi.sin(), -half],
                            [0.0, 0.0, -1.0],
                            MUG_BODY,
                        );
                    }
                    _ => {
                        let (p, nrm) = tube_point(rng, hr, ht, (-PI / 2.0, PI / 2.0), |t| {
                            let (c, s) = (t.cos(), t.sin());
                            ([r + hr * c, 0.0, hr * s], [c, 0.0, s], [0.0, 1.0, 0.0])
                        });
                        push(&mut raw, p, nrm, MUG_HANDLE);
                    }
                }
            }
        }
    }
    raw
}

/// Rotates about z by a random angle and jitters each coordinate.
pub(crate) fn place<R: Rng>(raw: &RawShape, opts: &SynthOptions, rng: &mut R) -> Vec<f64> {
    let angle = if opts.rotate { TAU * rng.random::<f64>() } else { 0.0 };
    let (c, s) = (angle.cos(), angle.sin());
    let rot = |v: [f64; 3]| [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
    let dim = if opts.with_normals { 6 } else { 3 };
    let mut features = Vec::with_capacity(raw.points.len() * dim);
    for (p, nrm) in raw.points.iter().zip(&raw.normals) {
        for v in rot(*p) {
            features.push(v + opts.jitter * (2.0 * rng.random::<f64>() - 1.0));
        }
        if opts.with_normals {
            features.extend_from_slice(&rot(*nrm));
        }
    }
    features
}

/// One synthetic shape: rotated about z, jittered, normalized.
pub(crate) fn make_shape(
    class: ShapeClass,
    label: usize,
    opts: &SynthOptions,
    item_seed: u64,
) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
    let raw = sample_raw(class, opts.points, &mut rng);
    let features = place(&raw, opts, &mut rng);
    let dim = if opts.with_normals { 6 } else { 3 };
    let mut cloud = PointCloud::new(features, dim)?
        .normalize_unit_sphere()?
        .with_shape_label(label);
    if class == ShapeClass::Mug {
        cloud = cloud.with_point_labels(raw.labels)?.with_category(0);
    }
    Ok(cloud)
}

/// `counts[i]` clouds of `classes[i]`, each from seed `seed ^ item_index`.
pub fn gen_synthetic(
    classes: &[ShapeClass],
    counts: &[usize],
    points: usize,
    seed: u64,
) -> Result<Vec<PointCloud>> {
    if classes.len() != counts.len() {
        return Err(Error::Config(format!(
            "{} classes but {} per-class counts",
            classes.len(),
            counts.len()
        )));
    }
    let opts = SynthOptions {
        points,
        seed,
        ..SynthOptions::default()
    };
    let mut out = Vec::new();
    let mut item = 0u64;
    for (label, (&class, &count)) in classes.iter().zip(counts).enumerate() {
        for _ in 0..count {
            out.push(make_shape(class, label, &opts, seed ^ item)?);
            item += 1;
        }
    }
    Ok(out)
}

fn split_samples(
    opts: &SynthOptions,
    per_class: usize,
    first_item: u64,
    prefix: &str,
) -> Result<Vec<Sample>> {
    let mut samples = Vec::new();
    let mut item = first_item;
    for (label, &class) in opts.classes.iter().enumerate() {
        for i in 0..per_class {
            let cloud = make_shape(class, label, opts, opts.seed ^ item)?;
            samples.push(Sample {
                name: format!("{prefix}_{}_{i:04}.txt", class.name()),
                cloud,
            });
            item += 1;
        }
    }
    Ok(samples)
}

/// Classification dataset with `train` and `test` splits.
pub fn gen_shape_dataset(opts: &SynthOptions) -> Result<Dataset> {
    if opts.classes.is_empty() {
        return Err(Error::Config("no synthetic classes requested".into()));
    }
    let n_train = (opts.classes.len() * opts.train_per_class) as u64;
    let train = split_samples(opts, opts.train_per_class, 0, "train")?;
    let test = split_samples(opts, opts.test_per_class, n_train, "test")?;
    Ok(Dataset {
        task: Task::Classification,
        dim: if opts.with_normals { 6 } else { 3 },
        class_names: opts.classes.iter().map(|c| c.name().to_string()).collect(),
        categories: Vec::new(),
        splits: vec![("train".into(), train), ("test".into(), test)],
    })
}

/// Two-part mug segmentation dataset (body = part 0, handle = part 1).
pub fn gen_part_dataset(opts: &SynthOptions) -> Result<Dataset> {
    let opts = SynthOptions {
        classes: vec![ShapeClass::Mug],
        ..opts.clone()
    };
    let train = split_samples(&opts, opts.train_per_class, 0, "train")?;
    let test = split_samples(&opts, opts.test_per_class, opts.train_per_class as u64, "test")?;
    Ok(Dataset {
        task: Task::PartSeg,
        dim: if opts.with_normals { 6 } else { 3 },
        class_names: vec!["mug_body".into(), "mug_handle".into()],
        categories: vec![Category {
            name: "mug".into(),
            parts: vec![MUG_BODY, MUG_HANDLE],
        }],
        splits: vec![("train".into(), train), ("test".into(), test)],
    })
}

/// Labeled room scan: floor (0), walls (1) and a table (2), with xyz + rgb.
///
/// `width × depth` metres, 2.5 m tall, roughly `density` points per m².
pub fn gen_scene(width: f64, depth: f64, density: f64, seed: u64) -> Result<PointCloud> {
    if !(width > 0.0 && depth > 0.0 && density > 0.0) {
        return Err(Error::Config("scene extents and density must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let height = 2.5;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let colors = [[0.55, 0.45, 0.35], [0.85, 0.85, 0.8], [0.3, 0.2, 0.1]];
    let mut emit = |rng: &mut ChaCha8Rng, p: [f64; 3], label: usize| {
        features.extend_from_slice(&p);
        for c in colors[label] {
            features.push((c + 0.05 * (2.0 * rng.random::<f64>() - 1.0)).clamp(0.0, 1.0));
        }
        labels.push(label);
    };
    let count = |area: f64| (area * density).round().max(1.0) as usize;

    let (tx0, tx1) = (0.3 * width, 0.6 * width);
    let (ty0, ty1) = (0.3 * depth, 0.6 * depth);
    let table_h = 0.75;
    for _ in 0..count(width * depth) {
        let (x, y) = (width * rng.random::<f64>(), depth * rng.random::<f64>());
        if (tx0..tx1).contains(&x) && (ty0..ty1).contains(&y) {
            emit(&mut rng, [x, y, table_h], 2);
        } else {
            emit(&mut rng, [x, y, 0.0], 0);
        }
    }
    let perimeter = 2.0 * (width + depth);
    for _ in 0..count(perimeter * height) {
        let s = perimeter * rng.random::<f64>();
        let z = height * rng.random::<f64>();
        let (x, y) = if s < width {
            (s, 0.0)
        } else if s < width + depth {
            (width, s - width)
        } else if s < 2.0 * width + depth {
            (s - width - depth, depth)
        } else {
            (0.0, s - 2.0 * width - depth)
        };
        emit(&mut rng, [x, y, z], 1);
    }
    PointCloud::new(features, 6)?.with_point_labels(labels)
}
