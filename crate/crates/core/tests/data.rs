use std::collections::HashSet;

use pointnet_kan::data::{
    gen_part_dataset, gen_shape_dataset, read_dataset, sample_mesh, write_dataset, Category, Dataset, PointCloud,
    Sample, SynthOptions, Task, TriangleMesh,
};
use proptest::prelude::*;

fn unit_square() -> TriangleMesh {
    TriangleMesh::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1, 2], [0, 2, 3]],
    )
    .unwrap()
}

#[test]
fn square_sampling_is_uniform() {
    let n = 100_000;
    let pc = sample_mesh(&unit_square(), n, 17, false).unwrap();
    let mut counts = [0usize; 16];
    for i in 0..n {
        let [x, y, z] = pc.xyz(i);
        assert_eq!(z, 0.0);
        let cx = ((x * 4.0) as usize).min(3);
        let cy = ((y * 4.0) as usize).min(3);
        counts[cy * 4 + cx] += 1;
    }
    let e = n as f64 / 16.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    // 15 degrees of freedom: the 0.999 quantile is 37.70.
    assert!(chi2 < 37.7, "chi2 {chi2} counts {counts:?}");
}

#[test]
fn faces_are_hit_in_proportion_to_area() {
    // Two disjoint right triangles with areas 0.5 and 1.5.
    let mesh = TriangleMesh::new(
        vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [5.0, 0.0, 0.0],
            [8.0, 0.0, 0.0],
            [5.0, 1.0, 0.0],
        ],
        vec![[0, 1, 2], [3, 4, 5]],
    )
    .unwrap();
    let n = 40_000;
    let pc = sample_mesh(&mesh, n, 3, true).unwrap();
    assert_eq!(pc.dim, 6);
    let small = (0..n).filter(|&i| pc.xyz(i)[0] < 2.0).count() as f64 / n as f64;
    let sd = (0.25 * 0.75 / n as f64).sqrt();
    assert!((small - 0.25).abs() < 4.0 * sd, "{small}");
    for i in 0..n {
        assert_eq!(&pc.point(i)[3..], &[0.0, 0.0, 1.0]);
    }
}

fn cloud_strategy() -> impl Strategy<Value = PointCloud> {
    (2usize..40, prop_oneof![Just(3usize), Just(6)]).prop_flat_map(|(n, d)| {
        (
            proptest::collection::vec(-5.0..5.0f64, n * d),
            proptest::collection::vec(0usize..4, n),
        )
            .prop_map(move |(f, l)| PointCloud::new(f, d).unwrap().with_point_labels(l).unwrap())
    })
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drop_points_keeps_distinct_rows(pc in cloud_strategy(), seed in any::<u64>(), frac in 0.01..1.0f64) {
        let keep = ((pc.len() as f64 * frac).ceil() as usize).max(1);
        let out = pc.drop_points(keep, seed).unwrap();
        prop_assert_eq!(out.len(), keep);
        let rows: Vec<Vec<u64>> = (0..pc.len()).map(|i| pc.point(i).iter().map(|v| v.to_bits()).collect()).collect();
        let mut used = HashSet::new();
        for i in 0..keep {
            let r: Vec<u64> = out.point(i).iter().map(|v| v.to_bits()).collect();
            let src = rows.iter().position(|x| *x == r).unwrap();
            prop_assert!(used.insert(src));
            prop_assert_eq!(out.point_labels.as_ref().unwrap()[i], pc.point_labels.as_ref().unwrap()[src]);
        }
        prop_assert_eq!(out, pc.drop_points(keep, seed).unwrap());
        prop_assert!(pc.drop_points(pc.len() + 1, seed).is_err());
    }

    #[test]
    fn normalization_properties(pc in cloud_strategy(), s in 0.1..10.0f64, t in proptest::array::uniform3(-3.0..3.0f64)) {
        let a = pc.normalize_unit_sphere().unwrap();
        let r = (0..a.len()).map(|i| a.xyz(i).iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
        prop_assert!((r - 1.0).abs() < 1e-12);
        let again = a.normalize_unit_sphere().unwrap();
        prop_assert!(close(&a.features, &again.features, 1e-12));
        let mut moved = pc.clone();
        for row in moved.features.chunks_mut(pc.dim) {
            for k in 0..3 {
                row[k] = row[k] * s + t[k];
            }
        }
        let b = moved.normalize_unit_sphere().unwrap();
        prop_assert!(close(&a.features, &b.features, 1e-9));
    }

    #[test]
    fn dataset_round_trips_through_disk(clouds in proptest::collection::vec(cloud_strategy(), 1..5), with_empty in any::<bool>()) {
        let dim = clouds[0].dim;
        let samples: Vec<Sample> = clouds
            .into_iter()
            .filter(|c| c.dim == dim)
            .enumerate()
            .map(|(i, c)| Sample { name: format!("c{i}.txt"), cloud: c.with_category(0) })
            .collect();
        let mut splits = vec![("train".to_string(), samples)];
        if with_empty {
            splits.push(("test".to_string(), Vec::new()));
        }
        let ds = Dataset {
            task: Task::PartSeg,
            dim,
            class_names: (0..4).map(|i| format!("p{i}")).collect(),
            categories: vec![Category { name: "thing".into(), parts: vec![0, 1, 2, 3] }],
            splits,
        };
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(back.content_hash(), ds.content_hash());
    }
}

#[test]
fn hash_is_stable_and_sensitive() {
    let opts = SynthOptions {
        train_per_class: 3,
        test_per_class: 1,
        points: 64,
        seed: 21,
        ..SynthOptions::default()
    };
    let a = gen_shape_dataset(&opts).unwrap();
    assert_eq!(a.content_hash(), gen_shape_dataset(&opts).unwrap().content_hash());
    let mut b = a.clone();
    b.splits[0].1[0].cloud.features[5] += 1e-12;
    assert_ne!(a.content_hash(), b.content_hash());
    let other = gen_shape_dataset(&SynthOptions { seed: 22, ..opts }).unwrap();
    assert_ne!(a.content_hash(), other.content_hash());
}

#[test]
fn synthetic_splits_and_labels() {
    let opts = SynthOptions {
        train_per_class: 5,
        test_per_class: 2,
        points: 48,
        seed: 1,
        ..SynthOptions::default()
    };
    let ds = gen_shape_dataset(&opts).unwrap();
    assert_eq!(ds.require_split("train").unwrap().len(), 20);
    assert_eq!(ds.require_split("test").unwrap().len(), 8);
    assert!(ds.require_split("val").is_err());
    let mug = gen_part_dataset(&opts).unwrap();
    for s in mug.require_split("train").unwrap() {
        let labels = s.cloud.point_labels.as_ref().unwrap();
        assert_eq!(labels.len(), 48);
        assert!(labels.iter().all(|&l| l < 2));
        assert_eq!(s.cloud.category, Some(0));
    }
}
