//! Text dataset directory: a `manifest` plus one file per cloud.
//!
//! ```text
//! version 1
//! task part_seg
//! d 3
//! classes mug_body mug_handle
//! category mug 0 1
//! split train train_mug_0000.txt ...
//! split test
//! ```
//!
//! Each cloud file starts with `N d has_point_labels shape_label category`
//! (`-1` for an absent label) followed by `N` rows of `d` features and, when
//! labeled, the point label.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{Category, Dataset, PointCloud, Sample, Task};
use crate::error::{Error, Result};

const MANIFEST: &str = "manifest";
const VERSION: u32 = 1;

fn check_token(kind: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.chars().any(char::is_whitespace) || s.contains('/') {
        return Err(Error::Data(format!(
            "{kind} '{s}' must be a non-empty name without whitespace or '/'"
        )));
    }
    Ok(())
}

pub(crate) fn manifest_text(ds: &Dataset) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "version {VERSION}");
    let _ = writeln!(s, "task {}", ds.task.as_str());
    let _ = writeln!(s, "d {}", ds.dim);
    let _ = writeln!(s, "classes {}", ds.class_names.join(" "));
    for c in &ds.categories {
        let parts: Vec<String> = c.parts.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "category {} {}", c.name, parts.join(" "));
    }
    for (name, samples) in &ds.splits {
        let _ = write!(s, "split {name}");
        for smp in samples {
            let _ = write!(s, " {}", smp.name);
        }
        s.push('\n');
    }
    s
}

fn opt_label(v: Option<usize>) -> String {
    v.map_or_else(|| "-1".to_string(), |x| x.to_string())
}

pub(crate) fn cloud_text(pc: &PointCloud) -> String {
    let mut s = String::with_capacity(pc.len() * pc.dim * 24 + 32);
    let _ = writeln!(
        s,
        "{} {} {} {} {}",
        pc.len(),
        pc.dim,
        u8::from(pc.point_labels.is_some()),
        opt_label(pc.shape_label),
        opt_label(pc.category)
    );
    for i in 0..pc.len() {
        for (j, v) in pc.point(i).iter().enumerate() {
            if j > 0 {
                s.push(' ');
            }
            let _ = write!(s, "{v:.16e}");
        }
        if let Some(l) = &pc.point_labels {
            let _ = write!(s, " {}", l[i]);
        }
        s.push('\n');
    }
    s
}

/// Writes `ds` under `dir`, creating it if needed.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for c in &ds.class_names {
        check_token("class name", c)?;
    }
    for c in &ds.categories {
        check_token("category name", &c.name)?;
    }
    let mut seen = std::collections::HashSet::new();
    for (name, samples) in &ds.splits {
        check_token("split name", name)?;
        for s in samples {
            check_token("sample name", &s.name)?;
            if s.name == MANIFEST || !seen.insert(s.name.as_str()) {
                return Err(Error::Data(format!("duplicate or reserved sample name '{}'", s.name)));
            }
            if s.cloud.dim != ds.dim {
                return Err(Error::Data(format!(
                    "sample '{}' has {} features, dataset declares {}",
                    s.name, s.cloud.dim, ds.dim
                )));
            }
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let all: Vec<&Sample> = ds.splits.iter().flat_map(|(_, s)| s).collect();
    all.par_iter().try_for_each(|s| {
        let path = dir.join(&s.name);
        fs::write(&path, cloud_text(&s.cloud)).map_err(|e| Error::io(&path, e))
    })?;
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest_text(ds)).map_err(|e| Error::io(&path, e))
}

struct Manifest {
    task: Task,
    dim: usize,
    class_names: Vec<String>,
    categories: Vec<Category>,
    splits: Vec<(String, Vec<String>)>,
}

fn parse_manifest(text: &str, path: &Path) -> Result<Manifest> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut version = None;
    let mut task = None;
    let mut dim = None;
    let mut class_names = None;
    let mut categories = Vec::new();
    let mut splits = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let mut toks = raw.split_whitespace();
        let Some(key) = toks.next() else { continue };
        let rest: Vec<&str> = toks.collect();
        let int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| err(ln, format!("bad integer '{s}': {e}")))
        };
        match key {
            "version" => {
                let v = rest.first().ok_or_else(|| err(ln, "missing version".into()))?;
                if int(v)? != VERSION as usize {
                    return Err(err(ln, format!("unsupported version {v}")));
                }
                version = Some(());
            }
            "task" => {
                let t = rest.first().ok_or_else(|| err(ln, "missing task".into()))?;
                task = Some(Task::parse(t).map_err(|_| err(ln, format!("unknown task '{t}'")))?);
            }
            "d" => {
                let d = rest.first().ok_or_else(|| err(ln, "missing d".into()))?;
                dim = Some(int(d)?);
            }
            "classes" => class_names = Some(rest.iter().map(|s| s.to_string()).collect()),
            "category" => {
                let (name, parts) = rest
                    .split_first()
                    .ok_or_else(|| err(ln, "category needs a name".into()))?;
                let parts = parts.iter().map(|p| int(p)).collect::<Result<Vec<_>>>()?;
                categories.push(Category {
                    name: name.to_string(),
                    parts,
                });
            }
            "split" => {
                let (name, files) = rest
                    .split_first()
                    .ok_or_else(|| err(ln, "split needs a name".into()))?;
                splits.push((name.to_string(), files.iter().map(|s| s.to_string()).collect()));
            }
            other => return Err(err(ln, format!("unknown manifest key '{other}'"))),
        }
    }
    let missing = |what: &str| Error::Data(format!("{}: manifest has no '{what}' line", path.display()));
    version.ok_or_else(|| missing("version"))?;
    Ok(Manifest {
        task: task.ok_or_else(|| missing("task"))?,
        dim: dim.ok_or_else(|| missing("d"))?,
        class_names: class_names.ok_or_else(|| missing("classes"))?,
        categories,
        splits,
    })
}

fn parse_cloud(text: &str, path: &Path, dim: usize) -> Result<PointCloud> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hl, header) = lines.next().ok_or_else(|| err(1, "empty cloud file".into()))?;
    let h: Vec<i64> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| err(hl + 1, format!("bad header '{header}': {e}")))?;
    if h.len() != 5 || h[0] < 0 || h[1] < 0 {
        return Err(err(hl + 1, "header must be 'N d has_point_labels shape_label category'".into()));
    }
    let (n, d, labeled) = (h[0] as usize, h[1] as usize, h[2] != 0);
    if d != dim {
        return Err(Error::Data(format!(
            "{}: cloud has {d} features, manifest declares {dim}",
            path.display()
        )));
    }
    let width = d + usize::from(labeled);
    let mut features = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(if labeled { n } else { 0 });
    let mut rows = 0;
    for (i, l) in lines {
        rows += 1;
        if rows > n {
            break;
        }
        let toks: Vec<&str> = l.split_whitespace().collect();
        if toks.len() != width {
            return Err(err(i + 1, format!("expected {width} values, found {}", toks.len())));
        }
        for t in &toks[..d] {
            features.push(
                t.parse::<f64>()
                    .map_err(|e| err(i + 1, format!("bad value '{t}': {e}")))?,
            );
        }
        if labeled {
            labels.push(
                toks[d]
                    .parse::<usize>()
                    .map_err(|e| err(i + 1, format!("bad label '{}': {e}", toks[d])))?,
            );
        }
    }
    if rows != n {
        return Err(Error::Data(format!(
            "{}: header declares {n} rows, file has {rows}",
            path.display()
        )));
    }
    let mut pc = PointCloud::new(features, d)?;
    if labeled {
        pc = pc.with_point_labels(labels)?;
    }
    if h[3] >= 0 {
        pc = pc.with_shape_label(h[3] as usize);
    }
    if h[4] >= 0 {
        pc = pc.with_category(h[4] as usize);
    }
    Ok(pc)
}

/// Reads a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let mpath = dir.join(MANIFEST);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let m = parse_manifest(&text, &mpath)?;
    let mut splits = Vec::with_capacity(m.splits.len());
    for (name, files) in m.splits {
        let samples = files
            .par_iter()
            .map(|f| {
                let path: PathBuf = dir.join(f);
                let text = fs::read_to_string(&path).map_err(|e| {
                    if e.kind() == std::io::ErrorKind::NotFound {
                        Error::Data(format!("manifest lists '{f}' but {} does not exist", path.display()))
                    } else {
                        Error::io(&path, e)
                    }
                })?;
                Ok(Sample {
                    name: f.clone(),
                    cloud: parse_cloud(&text, &path, m.dim)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        splits.push((name, samples));
    }
    Ok(Dataset {
        task: m.task,
        dim: m.dim,
        class_names: m.class_names,
        categories: m.categories,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Dataset {
        let a = PointCloud::new(vec![0.1, 1.0 / 3.0, -2.5e-300, 1e300, -0.0, 7.0], 3)
            .unwrap()
            .with_point_labels(vec![0, 1])
            .unwrap()
            .with_category(0);
        let b = PointCloud::new(vec![std::f64::consts::PI, 0.0, 1.0], 3)
            .unwrap()
            .with_shape_label(1);
        Dataset {
            task: Task::PartSeg,
            dim: 3,
            class_names: vec!["body".into(), "handle".into()],
            categories: vec![Category {
                name: "mug".into(),
                parts: vec![0, 1],
            }],
            splits: vec![
                ("train".into(), vec![Sample { name: "a.txt".into(), cloud: a }]),
                ("test".into(), vec![Sample { name: "b.txt".into(), cloud: b }]),
                ("val".into(), vec![]),
            ],
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.content_hash(), ds.content_hash());
        assert!(back.split("val").unwrap().is_empty());
    }

    #[test]
    fn corrupt_row_count_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&tiny(), dir.path()).unwrap();
        let p = dir.path().join("b.txt");
        let text = fs::read_to_string(&p).unwrap().replacen("1 3", "2 3", 1);
        fs::write(&p, text).unwrap();
        let e = read_dataset(dir.path()).unwrap_err();
        assert!(matches!(e, Error::Data(_)));
        assert!(e.to_string().contains("b.txt"), "{e}");
    }

    #[test]
    fn missing_file_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&tiny(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("a.txt")).unwrap();
        let e = read_dataset(dir.path()).unwrap_err();
        assert!(matches!(e, Error::Data(_)) && e.to_string().contains("a.txt"));
    }
}
