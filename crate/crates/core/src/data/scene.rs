use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{gen_scene, Dataset, PointCloud, Sample, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BlockOptions {
    /// Edge length of the square xy cells, in scene units (metres).
    pub block: f64,
    pub points_per_block: usize,
    pub seed: u64,
}

impl Default for BlockOptions {
    fn default() -> Self {
        Self {
            block: 1.0,
            points_per_block: 4096,
            seed: 0,
        }
    }
}

/// Cuts a labeled room scan into square xy blocks of fixed point count.
///
/// The scene must carry xyz and rgb (columns 0..6) and per-point labels.
/// Each output point has 9 features: x and y relative to the block centre,
/// raw z, rgb, and the point's position normalized to `[0, 1]` over the
/// room's bounding box. Blocks with more points than requested are
/// subsampled without replacement; smaller blocks keep every point and are
/// padded by random repeats. Empty blocks are skipped.
pub fn block_partition(scene: &PointCloud, opts: &BlockOptions) -> Result<Vec<PointCloud>> {
    if scene.dim < 6 {
        return Err(Error::Data(format!(
            "scene needs xyz + rgb columns, has {}",
            scene.dim
        )));
    }
    let labels = scene
        .point_labels
        .as_ref()
        .ok_or_else(|| Error::Data("scene has no point labels".into()))?;
    if !(opts.block > 0.0) || opts.points_per_block == 0 {
        return Err(Error::Config("block size and points per block must be positive".into()));
    }
    let n = scene.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for i in 0..n {
        for (k, v) in scene.xyz(i).into_iter().enumerate() {
            lo[k] = lo[k].min(v);
            hi[k] = hi[k].max(v);
        }
    }
    let cells = |k: usize| (((hi[k] - lo[k]) / opts.block).ceil() as usize).max(1);
    let (nx, ny) = (cells(0), cells(1));
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nx * ny];
    for i in 0..n {
        let p = scene.xyz(i);
        let cx = (((p[0] - lo[0]) / opts.block) as usize).min(nx - 1);
        let cy = (((p[1] - lo[1]) / opts.block) as usize).min(ny - 1);
        members[cy * nx + cx].push(i);
    }

    let mut blocks = Vec::new();
    for (cell, idx) in members.iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ cell as u64);
        let want = opts.points_per_block;
        let chosen: Vec<usize> = if idx.len() >= want {
            index::sample(&mut rng, idx.len(), want)
                .into_iter()
                .map(|j| idx[j])
                .collect()
        } else {
            let mut c = idx.clone();
            while c.len() < want {
                c.push(idx[rng.random_range(0..idx.len())]);
            }
            c
        };
        let (cx, cy) = (cell % nx, cell / nx);
        let center = [
            lo[0] + (cx as f64 + 0.5) * opts.block,
            lo[1] + (cy as f64 + 0.5) * opts.block,
        ];
        let mut features = Vec::with_capacity(want * 9);
        let mut block_labels = Vec::with_capacity(want);
        for &i in &chosen {
            let p = scene.point(i);
            features.push(p[0] - center[0]);
            features.push(p[1] - center[1]);
            features.push(p[2]);
            features.extend_from_slice(&p[3..6]);
            for k in 0..3 {
                let ext = hi[k] - lo[k];
                features.push(if ext > 0.0 { (p[k] - lo[k]) / ext } else { 0.0 });
            }
            block_labels.push(labels[i]);
        }
        blocks.push(PointCloud::new(features, 9)?.with_point_labels(block_labels)?);
    }
    Ok(blocks)
}

pub const SCENE_CLASSES: [&str; 3] = ["floor", "wall", "table"];

/// Semantic-segmentation dataset of `3 × 2` m synthetic rooms cut into
/// blocks. Room `i` uses seed `opts.seed ^ i`; the first `train_rooms` go
/// to `train`, the next `test_rooms` to `test`.
pub fn gen_scene_dataset(train_rooms: usize, test_rooms: usize, density: f64, opts: &BlockOptions) -> Result<Dataset> {
    let mut splits = vec![("train".to_string(), Vec::new()), ("test".to_string(), Vec::new())];
    for room in 0..train_rooms + test_rooms {
        let seed = opts.seed ^ room as u64;
        let scene = gen_scene(3.0, 2.0, density, seed)?;
        let blocks = block_partition(&scene, &BlockOptions { seed, ..opts.clone() })?;
        let split = usize::from(room >= train_rooms);
        for (b, cloud) in blocks.into_iter().enumerate() {
            splits[split].1.push(Sample {
                name: format!("room{room:03}_block{b:02}.txt"),
                cloud,
            });
        }
    }
    Ok(Dataset {
        task: Task::SemanticSeg,
        dim: 9,
        class_names: SCENE_CLASSES.iter().map(|s| s.to_string()).collect(),
        categories: Vec::new(),
        splits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_one_room_gives_two_blocks() {
        let scene = gen_scene(2.0, 1.0, 50.0, 1).unwrap();
        let blocks = block_partition(&scene, &BlockOptions::default()).unwrap();
        assert_eq!(blocks.len(), 2);
        for b in &blocks {
            assert_eq!(b.len(), 4096);
            assert_eq!(b.dim, 9);
            for i in 0..b.len() {
                for &v in &b.point(i)[6..9] {
                    assert!((0.0..=1.0).contains(&v));
                }
            }
        }
    }

    #[test]
    fn tiny_block_is_resampled() {
        let mut feats = Vec::new();
        for i in 0..10 {
            feats.extend_from_slice(&[0.05 * i as f64, 0.1, 0.0, 0.5, 0.5, 0.5]);
        }
        let scene = PointCloud::new(feats, 6).unwrap().with_point_labels(vec![3; 10]).unwrap();
        let blocks = block_partition(&scene, &BlockOptions::default()).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].len(), 4096);
        assert!(blocks[0].point_labels.as_ref().unwrap().iter().all(|&l| l == 3));
    }

    #[test]
    fn empty_cells_are_skipped() {
        let feats = vec![
            0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
            2.9, 0.2, 0.0, 0.0, 1.0, 0.0,
        ];
        let scene = PointCloud::new(feats, 6).unwrap().with_point_labels(vec![0, 1]).unwrap();
        let opts = BlockOptions {
            points_per_block: 4,
            ..BlockOptions::default()
        };
        let blocks = block_partition(&scene, &opts).unwrap();
        assert_eq!(blocks.len(), 2);
    }

    #[test]
    fn scene_dataset_splits_rooms() {
        let opts = BlockOptions {
            points_per_block: 64,
            ..BlockOptions::default()
        };
        let ds = gen_scene_dataset(2, 1, 30.0, &opts).unwrap();
        assert_eq!(ds.require_split("train").unwrap().len(), 12);
        assert_eq!(ds.require_split("test").unwrap().len(), 6);
    }
}
