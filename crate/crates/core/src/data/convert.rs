//! Converters from the public ModelNet40 (OFF tree) and ShapeNet-part (text
//! rows) layouts into [`Dataset`]s.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{load_off, sample_mesh, Category, Dataset, PointCloud, Sample, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ConvertOptions {
    pub points: usize,
    pub with_normals: bool,
    pub seed: u64,
}

impl Default for ConvertOptions {
    fn default() -> Self {
        Self {
            points: 1024,
            with_normals: false,
            seed: 0,
        }
    }
}

fn sorted_entries(dir: &Path, want_dir: bool, ext: Option<&str>) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.is_dir() != want_dir {
            continue;
        }
        if let Some(ext) = ext {
            if p.extension().and_then(|x| x.to_str()) != Some(ext) {
                continue;
            }
        }
        out.push(p);
    }
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("cloud").to_string()
}

/// Reads `root/<class>/{train,test}/*.off`, samples each mesh and normalizes
/// it into the unit sphere. Classes are numbered in sorted directory order.
pub fn convert_modelnet(root: impl AsRef<Path>, opts: &ConvertOptions) -> Result<Dataset> {
    let root = root.as_ref();
    let class_dirs = sorted_entries(root, true, None)?;
    if class_dirs.is_empty() {
        return Err(Error::Data(format!("{}: no class directories", root.display())));
    }
    let class_names: Vec<String> = class_dirs.iter().map(|p| stem(p)).collect();
    let mut splits = Vec::new();
    let mut item = 0u64;
    for split in ["train", "test"] {
        let mut jobs = Vec::new();
        for (label, cdir) in class_dirs.iter().enumerate() {
            let sdir = cdir.join(split);
            if !sdir.is_dir() {
                continue;
            }
            for f in sorted_entries(&sdir, false, Some("off"))? {
                jobs.push((label, f, opts.seed ^ item));
                item += 1;
            }
        }
        let samples = jobs
            .par_iter()
            .map(|(label, f, seed)| {
                let mesh = load_off(f)?;
                let cloud = sample_mesh(&mesh, opts.points, *seed, opts.with_normals)
                    .map_err(|e| Error::Data(format!("{}: {e}", f.display())))?
                    .normalize_unit_sphere()?
                    .with_shape_label(*label);
                Ok(Sample {
                    name: format!("{split}_{}.txt", stem(f)),
                    cloud,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        splits.push((split.to_string(), samples));
    }
    Ok(Dataset {
        task: Task::Classification,
        dim: if opts.with_normals { 6 } else { 3 },
        class_names,
        categories: Vec::new(),
        splits,
    })
}

fn parse_part_file(path: &Path) -> Result<(Vec<f64>, Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut feats = Vec::new();
    let mut labels = Vec::new();
    for (i, l) in text.lines().enumerate() {
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: m,
        };
        if toks.len() != 7 {
            return Err(err(format!("expected 'x y z nx ny nz part', found {} values", toks.len())));
        }
        for t in &toks[..6] {
            feats.push(t.parse::<f64>().map_err(|e| err(format!("bad value '{t}': {e}")))?);
        }
        // Labels are stored as floats ("12.000000") in the public release.
        let lab: f64 = toks[6].parse().map_err(|e| err(format!("bad label '{}': {e}", toks[6])))?;
        if lab < 0.0 || lab.fract() != 0.0 {
            return Err(err(format!("label '{}' is not a non-negative integer", toks[6])));
        }
        labels.push(lab as usize);
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: no points", path.display())));
    }
    Ok((feats, labels))
}

/// Pulls `shape_data/<synset>/<id>` entries out of a split list file.
fn split_list(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .split('"')
        .skip(1)
        .step_by(2)
        .filter_map(|s| {
            let mut parts = s.rsplit('/');
            let id = parts.next()?;
            let synset = parts.next()?;
            Some((synset.to_string(), id.to_string()))
        })
        .collect())
}

/// Reads the ShapeNet-part text release: `synsetoffset2category.txt`, one
/// directory per synset of `x y z nx ny nz part` files, and the optional
/// `train_test_split/shuffled_{train,val,test}_file_list.json` lists.
///
/// Clouds are resampled to `opts.points` points (with replacement when a
/// shape has fewer) and normalized into the unit sphere.
pub fn convert_shapenet_part(root: impl AsRef<Path>, opts: &ConvertOptions) -> Result<Dataset> {
    let root = root.as_ref();
    let cat_file = root.join("synsetoffset2category.txt");
    let text = fs::read_to_string(&cat_file).map_err(|e| Error::io(&cat_file, e))?;
    let mut cats: Vec<(String, String)> = Vec::new();
    for l in text.lines() {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() == 2 {
            cats.push((t[0].to_string(), t[1].to_string()));
        }
    }
    if cats.is_empty() {
        return Err(Error::Data(format!("{}: no categories", cat_file.display())));
    }

    let split_dir = root.join("train_test_split");
    let mut lists: Vec<(String, Vec<(String, String)>)> = Vec::new();
    for s in ["train", "val", "test"] {
        let p = split_dir.join(format!("shuffled_{s}_file_list.json"));
        if p.is_file() {
            lists.push((s.to_string(), split_list(&p)?));
        }
    }
    if lists.is_empty() {
        log::warn!("{}: no split lists, every shape goes to 'train'", split_dir.display());
        let mut all = Vec::new();
        for (_, synset) in &cats {
            for f in sorted_entries(&root.join(synset), false, Some("txt"))? {
                all.push((synset.clone(), stem(&f)));
            }
        }
        lists.push(("train".into(), all));
    }

    let mut splits = Vec::new();
    let mut parts: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); cats.len()];
    let mut item = 0u64;
    for (split, entries) in lists {
        let jobs: Vec<(usize, String, String, u64)> = entries
            .into_iter()
            .filter_map(|(synset, id)| {
                let c = cats.iter().position(|(_, s)| *s == synset)?;
                item += 1;
                Some((c, synset, id, opts.seed ^ (item - 1)))
            })
            .collect();
        let loaded = jobs
            .par_iter()
            .map(|(c, synset, id, seed)| {
                let path = root.join(synset).join(format!("{id}.txt"));
                let (feats, labels) = parse_part_file(&path)?;
                let n = labels.len();
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let idx: Vec<usize> = if n >= opts.points {
                    index::sample(&mut rng, n, opts.points).into_vec()
                } else {
                    let mut v: Vec<usize> = (0..n).collect();
                    while v.len() < opts.points {
                        v.push(rng.random_range(0..n));
                    }
                    v
                };
                let cloud = PointCloud::new(feats, 6)?
                    .with_point_labels(labels)?
                    .select(&idx)
                    .truncate_dim(if opts.with_normals { 6 } else { 3 })?
                    .normalize_unit_sphere()?
                    .with_category(*c);
                Ok((
                    *c,
                    Sample {
                        name: format!("{split}_{synset}_{id}.txt"),
                        cloud,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut samples = Vec::with_capacity(loaded.len());
        for (c, s) in loaded {
            parts[c].extend(s.cloud.point_labels.iter().flatten().copied());
            samples.push(s);
        }
        splits.push((split, samples));
    }

    let num_parts = parts.iter().flatten().max().map_or(0, |m| m + 1);
    Ok(Dataset {
        task: Task::PartSeg,
        dim: if opts.with_normals { 6 } else { 3 },
        class_names: (0..num_parts).map(|p| format!("part{p}")).collect(),
        categories: cats
            .iter()
            .zip(parts)
            .map(|((name, _), p)| Category {
                name: name.clone(),
                parts: p.into_iter().collect(),
            })
            .collect(),
        splits,
    })
}
