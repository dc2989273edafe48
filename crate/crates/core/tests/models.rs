mod common;

use common::{block_shapes, desk_flat, formula, random_cloud, shipped};
use pointnet_kan::autodiff::Tensor;
use pointnet_kan::checkpoint;
use pointnet_kan::config::RunConfig;
use pointnet_kan::data::PointCloud;
use pointnet_kan::jacobi::JacobiParams;
use pointnet_kan::layers::CountKind;
use pointnet_kan::models::{Branch, DecoderKind, Model, ModelConfig};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn param_count_matches_formula_for_shipped_configs() {
    for (name, cfg) in shipped() {
        let m = Model::build(&cfg, 0).unwrap();
        let b = m.param_breakdown();
        assert_eq!(m.param_count(), formula(&cfg), "{name}");
        assert_eq!(m.state.param_count(), formula(&cfg), "{name}");
        for l in &b.layers {
            let want = match l.kind {
                CountKind::Kan { degree } => (degree + 1) * l.d_in * l.d_out,
                CountKind::Mlp => l.d_in * l.d_out + l.d_out,
                CountKind::BatchNorm => 2 * l.d_out,
            };
            assert_eq!(l.params, want, "{name}: {}", l.name);
        }
    }
}

#[test]
fn degree_increment_for_shipped_configs() {
    for (name, cfg) in shipped() {
        let n = cfg.poly.degree();
        let base = Model::build(&cfg, 0).unwrap();
        let up = ModelConfig {
            poly: JacobiParams::new(cfg.poly.alpha(), cfg.poly.beta(), n + 1).unwrap(),
            ..cfg.clone()
        };
        let up = Model::build(&up, 0).unwrap();
        let inc = base.param_breakdown().kan_degree_increment();
        assert!(inc > 0);
        assert_eq!(up.param_count() - base.param_count(), inc, "{name}");
    }
}

#[test]
fn default_classifier_first_layer() {
    let m = Model::build(&ModelConfig::classification(), 0).unwrap();
    let first = &m.param_breakdown().layers[0];
    assert_eq!((first.d_in, first.d_out, first.params), (6, 3072, 5 * 6 * 3072));
}

fn permuted(c: &PointCloud, perm: &[usize]) -> PointCloud {
    c.select(perm)
}

#[test]
fn classifier_logits_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for kind in [DecoderKind::Kan, DecoderKind::Mlp] {
        let m = desk_flat(Branch::Classification, kind, 1);
        let clouds: Vec<PointCloud> = (0..2).map(|_| random_cloud(&mut rng, 24, 3)).collect();
        let refs: Vec<&PointCloud> = clouds.iter().collect();
        let base = m.logits(&m.batch(&refs).unwrap()).unwrap();
        for _ in 0..20 {
            let moved: Vec<PointCloud> = clouds
                .iter()
                .map(|c| {
                    let mut p: Vec<usize> = (0..c.len()).collect();
                    p.shuffle(&mut rng);
                    permuted(c, &p)
                })
                .collect();
            let refs: Vec<&PointCloud> = moved.iter().collect();
            let y = m.logits(&m.batch(&refs).unwrap()).unwrap();
            for (a, b) in base.data().iter().zip(y.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn segmentation_logits_are_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for kind in [DecoderKind::Kan, DecoderKind::Mlp] {
        let m = desk_flat(Branch::PartSeg, kind, 2);
        let n = 20;
        let cloud = random_cloud(&mut rng, n, 3).with_category(1);
        let base = m.logits(&m.batch(&[&cloud]).unwrap()).unwrap();
        let k = base.shape()[2];
        for _ in 0..20 {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            let y = m.logits(&m.batch(&[&permuted(&cloud, &p)]).unwrap()).unwrap();
            for (i, &src) in p.iter().enumerate() {
                for c in 0..k {
                    assert!((y.data()[i * k + c] - base.data()[src * k + c]).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn hybrid_decoder_preserves_shapes_and_encoder_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for branch in [Branch::Classification, Branch::PartSeg] {
        let kan = desk_flat(branch, DecoderKind::Kan, 3);
        let mlp = desk_flat(branch, DecoderKind::Mlp, 3);
        let mut cloud = random_cloud(&mut rng, 12, 3);
        if branch == Branch::PartSeg {
            cloud = cloud.with_category(0);
        }
        assert_eq!(block_shapes(&kan, &cloud), block_shapes(&mlp, &cloud));
        assert_eq!(kan.encoder_param_count(), mlp.encoder_param_count());
        assert_ne!(kan.param_count(), mlp.param_count());
    }
}

#[test]
fn stacked_encoder_from_config() {
    let pairs: Vec<(String, String)> = [
        ("model.input_dim", "3"),
        ("model.num_classes", "3"),
        ("model.encoder_widths", "8,8,8,16,32"),
        ("model.decoder_widths", "16,8"),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect();
    let cfg = RunConfig::from_pairs(&pairs).unwrap().model;
    let m = Model::build(&cfg, 0).unwrap();
    assert_eq!(m.flat().unwrap().encoder.len(), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let c = random_cloud(&mut rng, 10, 3);
    assert_eq!(m.logits(&m.batch(&[&c]).unwrap()).unwrap().shape(), &[1, 3]);
}

#[test]
fn huge_inputs_give_finite_logits() {
    let m = desk_flat(Branch::Classification, DecoderKind::Kan, 7);
    let f: Vec<f64> = (0..30).map(|i| if i % 2 == 0 { 1e6 } else { -1e6 } * (i as f64 + 1.0)).collect();
    let c = PointCloud::new(f, 3).unwrap();
    let y = m.logits(&m.batch(&[&c]).unwrap()).unwrap();
    assert!(y.data().iter().all(|v| v.is_finite()));
}

#[test]
fn checkpoint_reload_reproduces_logits_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for branch in [Branch::Classification, Branch::PartSeg] {
        let m = desk_flat(branch, DecoderKind::Kan, 9);
        let path = dir.path().join(format!("{}.pkan", branch.as_str()));
        checkpoint::save(&path, &m, None).unwrap();
        let (back, opt) = checkpoint::load(&path).unwrap();
        assert!(opt.is_none());
        let c = random_cloud(&mut rng, 16, 3).with_category(1);
        let a: Tensor = m.logits(&m.batch(&[&c]).unwrap()).unwrap();
        let b = back.logits(&back.batch(&[&c]).unwrap()).unwrap();
        assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
