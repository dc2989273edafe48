//! Point clouds, mesh ingestion, synthetic datasets and the on-disk format.

mod convert;
mod io;
mod mesh;
mod scene;
mod synth;

pub use convert::{convert_modelnet, convert_shapenet_part, ConvertOptions};
pub use io::{read_dataset, write_dataset};
pub use mesh::{load_off, parse_off, sample_mesh, TriangleMesh};
pub use scene::{block_partition, gen_scene_dataset, BlockOptions, SCENE_CLASSES};
pub use synth::{gen_part_dataset, gen_scene, gen_shape_dataset, gen_synthetic, ShapeClass, SynthOptions};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `N × d` per-point features with optional labels.
///
/// Feature columns are xyz first, then optional normals, then any extras.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub features: Vec<f64>,
    pub dim: usize,
    pub point_labels: Option<Vec<usize>>,
    pub shape_label: Option<usize>,
    pub category: Option<usize>,
}

impl PointCloud {
    pub fn new(features: Vec<f64>, dim: usize) -> Result<Self> {
        if dim < 3 || !features.len().is_multiple_of(dim) {
            return Err(Error::Data(format!(
                "{} feature values do not form rows of width {dim} (width must be at least 3)",
                features.len()
            )));
        }
        Ok(Self {
            features,
            dim,
            point_labels: None,
            shape_label: None,
            category: None,
        })
    }

    pub fn with_point_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Data(format!(
                "{} point labels for {} points",
                labels.len(),
                self.len()
            )));
        }
        self.point_labels = Some(labels);
        Ok(self)
    }

    pub fn with_shape_label(mut self, label: usize) -> Self {
        self.shape_label = Some(label);
        self
    }

    pub fn with_category(mut self, category: usize) -> Self {
        self.category = Some(category);
        self
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn xyz(&self, i: usize) -> [f64; 3] {
        let p = self.point(i);
        [p[0], p[1], p[2]]
    }

    /// Rows in the given order; labels follow their points.
    pub fn select(&self, idx: &[usize]) -> PointCloud {
        let mut features = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            features.extend_from_slice(self.point(i));
        }
        PointCloud {
            features,
            dim: self.dim,
            point_labels: self
                .point_labels
                .as_ref()
                .map(|l| idx.iter().map(|&i| l[i]).collect()),
            shape_label: self.shape_label,
            category: self.category,
        }
    }

    /// Keeps only the first `dim` feature columns.
    pub fn truncate_dim(&self, dim: usize) -> Result<PointCloud> {
        if dim < 3 || dim > self.dim {
            return Err(Error::Data(format!(
                "cannot keep {dim} of {} feature columns",
                self.dim
            )));
        }
        let features = self
            .features
            .chunks(self.dim)
            .flat_map(|r| r[..dim].iter().copied())
            .collect();
        Ok(PointCloud {
            features,
            dim,
            ..self.clone()
        })
    }

    /// Centers on the centroid and scales so the farthest point has norm 1.
    ///
    /// Only the xyz columns change; normals and extras are untouched.
    pub fn normalize_unit_sphere(&self) -> Result<PointCloud> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Data("cannot normalize an empty cloud".into()));
        }
        let mut c = [0.0; 3];
        for i in 0..n {
            for (a, v) in c.iter_mut().zip(self.xyz(i)) {
                *a += v;
            }
        }
        for a in &mut c {
            *a /= n as f64;
        }
        let mut scale = 0.0_f64;
        for i in 0..n {
            let p = self.xyz(i);
            let r = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt();
            scale = scale.max(r);
        }
        if scale == 0.0 || !scale.is_finite() {
            return Err(Error::Data(
                "cloud has zero spatial extent; cannot normalize".into(),
            ));
        }
        let mut out = self.clone();
        for row in out.features.chunks_mut(self.dim) {
            for k in 0..3 {
                row[k] = (row[k] - c[k]) / scale;
            }
        }
        Ok(out)
    }

    /// Alias of [`PointCloud::normalize_unit_sphere`].
    pub fn normalize_unit_ball(&self) -> Result<PointCloud> {
        self.normalize_unit_sphere()
    }

    /// Uniform random subset of `keep` points without replacement.
    pub fn drop_points(&self, keep: usize, seed: u64) -> Result<PointCloud> {
        let n = self.len();
        if keep == 0 || keep > n {
            return Err(Error::Data(format!(
                "cannot keep {keep} of {n} points"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = index::sample(&mut rng, n, keep).into_vec();
        Ok(self.select(&idx))
    }
}

/// What a dataset's labels mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classification,
    PartSeg,
    SemanticSeg,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Classification => "cls",
            Task::PartSeg => "part_seg",
            Task::SemanticSeg => "sem_seg",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "cls" | "classification" => Ok(Task::Classification),
            "part_seg" => Ok(Task::PartSeg),
            "sem_seg" | "semantic_seg" => Ok(Task::SemanticSeg),
            other => Err(Error::Config(format!("unknown task '{other}'"))),
        }
    }
}

/// An object category and the global part ids that belong to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Category {
    pub name: String,
    pub parts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub cloud: PointCloud,
}

/// Named clouds grouped into splits.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub dim: usize,
    /// Shape classes (classification) or point classes (segmentation).
    pub class_names: Vec<String>,
    /// Part-segmentation categories; empty otherwise.
    pub categories: Vec<Category>,
    pub splits: Vec<(String, Vec<Sample>)>,
}

impl Dataset {
    pub fn split(&self, name: &str) -> Option<&[Sample]> {
        self.splits
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.as_slice())
    }

    pub fn require_split(&self, name: &str) -> Result<&[Sample]> {
        self.split(name)
            .ok_or_else(|| Error::Data(format!("dataset has no split named '{name}'")))
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// SHA-256 over the canonical text serialization.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(io::manifest_text(self).as_bytes());
        for (_, samples) in &self.splits {
            for s in samples {
                h.update(s.name.as_bytes());
                h.update(io::cloud_text(&s.cloud).as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
