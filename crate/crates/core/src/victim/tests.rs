use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::diffnet::{finite_difference_check, Mat, Network};
use crate::geometry::{Point, PointCloud};

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    PointCloud::new((0..n).map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)]).collect()).unwrap()
}

fn permuted(cloud: &PointCloud, perm: &[usize]) -> PointCloud {
    PointCloud::new(perm.iter().map(|&i| cloud.points()[i]).collect()).unwrap()
}

fn set(store: &mut crate::diffnet::ParamStore<f64>, name: &str, values: &[f64]) {
    let p = store.params_mut().iter_mut().find(|p| p.name == name).unwrap_or_else(|| panic!("no parameter {name}"));
    assert_eq!(p.value.len(), values.len(), "{name}");
    p.value.copy_from_slice(values);
}

fn tiny_pointnet(input_transform: bool, normalize: bool) -> VictimConfig {
    VictimConfig::PointNet(PointNetConfig {
        classes: 3,
        point_widths: vec![6, 5],
        head_widths: vec![4],
        input_transform,
        normalize,
        dropout: 0.0,
    })
}

fn tiny_pointnetpp() -> VictimConfig {
    VictimConfig::PointNetPp(PointNetPpConfig {
        classes: 3,
        levels: vec![
            LevelSpec {
                centroids: 6,
                radius: 0.6,
                neighbors: 4,
                widths: vec![5, 4],
            },
            LevelSpec {
                centroids: 3,
                radius: 0.9,
                neighbors: 3,
                widths: vec![4],
            },
        ],
        global_widths: vec![6],
        head_widths: vec![4],
        normalize: false,
        dropout: 0.0,
    })
}

fn all_configs() -> Vec<VictimConfig> {
    vec![tiny_pointnet(false, false), tiny_pointnet(false, true), tiny_pointnet(true, false), tiny_pointnetpp()]
}

/// Randomizes every parameter so zero-initialized pieces (biases, the
/// transform head) also carry signal.
fn jittered(config: &VictimConfig, seed: u64) -> Victim<f64> {
    let mut m = Victim::<f64>::new(config, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in m.store_mut().params_mut() {
        for v in &mut p.value {
            *v += rng.random_range(-0.2..0.2);
        }
    }
    m
}

#[test]
fn logits_are_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for config in all_configs() {
        let model = jittered(&config, 1);
        let cloud = random_cloud(&mut rng, 24);
        let base = model.cloud_logits(&cloud).unwrap();
        assert_eq!(base.len(), 3);
        for _ in 0..4 {
            let mut perm: Vec<usize> = (0..24).collect();
            perm.shuffle(&mut rng);
            let got = model.cloud_logits(&permuted(&cloud, &perm)).unwrap();
            for (a, b) in got.iter().zip(&base) {
                assert!((a - b).abs() < 1e-12, "{} {a} vs {b}", config.arch_tag());
            }
        }
    }
}

#[test]
fn zero_parameters_give_zero_logits() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cloud = random_cloud(&mut rng, 16);
    for config in all_configs() {
        let mut model = Victim::<f64>::new(&config, 0).unwrap();
        model.store_mut().fill(0.0);
        assert_eq!(model.cloud_logits(&cloud).unwrap(), vec![0.0; 3]);
    }
}

#[test]
fn pointnet_matches_hand_evaluation() {
    let config = VictimConfig::PointNet(PointNetConfig {
        classes: 2,
        point_widths: vec![2],
        head_widths: vec![],
        input_transform: false,
        normalize: false,
        dropout: 0.0,
    });
    let mut model = Victim::<f64>::new(&config, 0).unwrap();
    let w1 = [1.0, -1.0, 0.5, 2.0, -0.5, 0.0];
    let b1 = [0.1, -0.2];
    let w2 = [1.0, 2.0, -3.0, 0.5];
    let b2 = [0.0, 1.0];
    let store = model.store_mut();
    set(store, "points.0.weight", &w1);
    set(store, "points.0.bias", &b1);
    set(store, "classifier.weight", &w2);
    set(store, "classifier.bias", &b2);
    let pts: Vec<Point> = vec![[0.1, 0.2, 0.3], [-0.4, 0.5, 0.0], [0.3, -0.3, 0.2], [0.0, 0.0, -0.5]];
    // h_i = relu(x_i·W1 + b1), g = max_i h_i, logits = g·W2 + b2
    let mut g = [f64::NEG_INFINITY; 2];
    for p in &pts {
        for o in 0..2 {
            let z = p[0] * w1[o] + p[1] * w1[2 + o] + p[2] * w1[4 + o] + b1[o];
            g[o] = g[o].max(z.max(0.0));
        }
    }
    let want = [g[0] * w2[0] + g[1] * w2[2] + b2[0], g[0] * w2[1] + g[1] * w2[3] + b2[1]];
    let got = model.cloud_logits(&PointCloud::new(pts).unwrap()).unwrap();
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn pointnetpp_matches_hand_trace() {
    let config = VictimConfig::PointNetPp(PointNetPpConfig {
        classes: 2,
        levels: vec![LevelSpec {
            centroids: 2,
            radius: 0.5,
            neighbors: 2,
            widths: vec![1],
        }],
        global_widths: vec![1],
        head_widths: vec![],
        normalize: false,
        dropout: 0.0,
    });
    let mut model = Victim::<f64>::new(&config, 0).unwrap();
    let store = model.store_mut();
    set(store, "sa0.0.weight", &[1.0, 2.0, 3.0]);
    set(store, "sa0.0.bias", &[0.5]);
    set(store, "global.0.weight", &[1.0, -1.0, 0.0, 2.0]);
    set(store, "global.0.bias", &[0.25]);
    set(store, "classifier.weight", &[1.0, -2.0]);
    set(store, "classifier.bias", &[0.0, 3.0]);
    let pts: Vec<Point> = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.1, 0.1, 0.0]];
    // centroid (0.275, 0.275, 0) is nearest to point 3, which seeds FPS.
    // points 1 and 2 tie as farthest from point 3 (d² = 0.82); the lower
    // index wins, so the centroids are [3, 1].
    // ball(3, 0.5) = [3, 0] nearest first; ball(1, 0.5) = [1].
    // level rows are offsets from the centroid, mapped by relu(x + 2y + 3z + 0.5).
    let f3 = f64::max(0.5, (-0.1 - 0.2) + 0.5); // offsets (0,0,0) and (-0.1,-0.1,0)
    let f1 = 0.5;
    // global rows [x, y, z, f] of centroids 3 and 1: relu(x - y + 2f + 0.25)
    let g3 = (0.1 - 0.1 + 2.0 * f3 + 0.25_f64).max(0.0);
    let g1 = (1.0 - 0.0 + 2.0 * f1 + 0.25_f64).max(0.0);
    let g = g3.max(g1);
    let want = [g, -2.0 * g + 3.0];
    let got = model.cloud_logits(&PointCloud::new(pts).unwrap()).unwrap();
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
    }
}

#[test]
fn all_inclusive_ball_gives_one_global_feature_per_centroid() {
    let config = PointNetPpConfig {
        classes: 2,
        levels: vec![LevelSpec {
            centroids: 1,
            radius: 10.0,
            neighbors: 64,
            widths: vec![8, 16],
        }],
        global_widths: vec![16],
        head_widths: vec![],
        normalize: false,
        dropout: 0.0,
    };
    let model = PointNetPp::<f64>::new(config, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cloud = random_cloud(&mut rng, 20);
    let (_, cache) = model.forward(&cloud_matrix(&cloud), None).unwrap();
    assert_eq!(cache.levels_len(), 1);
    assert_eq!(cache.level_rows(0), 20);
}

#[test]
fn input_gradient_passes_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for config in all_configs() {
        let model = jittered(&config, 5);
        let cloud = random_cloud(&mut rng, 8);
        let label = 1;
        let (_, grad) = model.loss_and_input_gradient(&cloud_matrix(&cloud), label).unwrap();
        let x = cloud.flat();
        let f = |v: &[f64]| {
            let xyz = Mat::from_vec(v.len() / 3, 3, v.to_vec());
            model.loss_and_input_gradient(&xyz, label).unwrap().0
        };
        let report = finite_difference_check(f, &x, grad.data(), 1e-4);
        assert!(report.passed, "{}: {report:?}", config.arch_tag());
    }
}

#[test]
fn constant_model_has_zero_input_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cloud = random_cloud(&mut rng, 10);
    for config in all_configs() {
        let mut model = jittered(&config, 6);
        // zero every weight; biases keep the logits constant but non-trivial
        for p in model.store_mut().params_mut() {
            if p.name.ends_with(".weight") {
                p.value.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let g = model.input_gradient(&cloud, 0).unwrap();
        assert!(g.iter().flatten().all(|&v| v == 0.0), "{}", config.arch_tag());
    }
}

#[test]
fn input_gradient_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for config in all_configs() {
        let model = jittered(&config, 7);
        let cloud = random_cloud(&mut rng, 16);
        let g = model.input_gradient(&cloud, 2).unwrap();
        let mut perm: Vec<usize> = (0..16).collect();
        perm.shuffle(&mut rng);
        let gp = model.input_gradient(&permuted(&cloud, &perm), 2).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for a in 0..3 {
                assert!((gp[k][a] - g[i][a]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn out_of_range_label_is_rejected() {
    let model = Victim::<f64>::new(&tiny_pointnet(false, false), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cloud = random_cloud(&mut rng, 8);
    assert!(matches!(model.input_gradient(&cloud, 3), Err(ModelError::TargetOutOfRange { .. })));
}

#[test]
fn config_serializes_with_arch_tag() {
    let c = tiny_pointnetpp();
    let s = serde_json::to_string(&c).unwrap();
    assert!(s.contains("\"arch\":\"pointnetpp\""));
    assert_eq!(serde_json::from_str::<VictimConfig>(&s).unwrap(), c);
    let t = toml::to_string(&VictimConfig::default()).unwrap();
    assert_eq!(toml::from_str::<VictimConfig>(&t).unwrap(), VictimConfig::default());
}

/// Two linearly separated classes: point sets left or right of the x = 0 plane.
fn separable(rng: &mut ChaCha8Rng, per_class: usize) -> Vec<PointCloud> {
    let mut out = Vec::new();
    for label in 0..2 {
        let sign = if label == 0 { -1.0 } else { 1.0 };
        for _ in 0..per_class {
            let pts = (0..32)
                .map(|_| [sign * rng.random_range(0.2..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
                .collect();
            out.push(PointCloud::new(pts).unwrap().with_label(label));
        }
    }
    out
}

fn small_pointnet(classes: usize) -> VictimConfig {
    VictimConfig::PointNet(PointNetConfig {
        classes,
        point_widths: vec![16, 32],
        head_widths: vec![16],
        input_transform: false,
        normalize: false,
        dropout: 0.0,
    })
}

#[test]
fn separable_two_class_task_is_learned() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let train = separable(&mut rng, 20);
    let test = separable(&mut rng, 10);
    let cfg = VictimTrainConfig {
        epochs: 50,
        batch_size: 8,
        lr: 1e-3,
        seed: 1,
    };
    let trained = train_victim(&small_pointnet(2), &cfg, &train, &test).unwrap();
    assert_eq!(trained.test_accuracy, 1.0, "{:?}", trained.history.last());
    assert_eq!(trained.history.len(), 50);
}

#[test]
fn zero_epochs_returns_initialization() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let train = separable(&mut rng, 4);
    let cfg = VictimTrainConfig {
        epochs: 0,
        seed: 9,
        ..Default::default()
    };
    let trained = train_victim(&small_pointnet(2), &cfg, &train, &[]).unwrap();
    assert_eq!(trained.model, Victim::<f32>::new(&small_pointnet(2), 9).unwrap());
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let train = separable(&mut rng, 6);
    let mut config = small_pointnet(2);
    if let VictimConfig::PointNet(c) = &mut config {
        c.dropout = 0.3;
    }
    let cfg = VictimTrainConfig {
        epochs: 3,
        batch_size: 4,
        lr: 1e-3,
        seed: 4,
    };
    let a = train_victim(&config, &cfg, &train, &train).unwrap();
    let b = train_victim(&config, &cfg, &train, &train).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
}

#[test]
fn training_rejects_bad_labels_and_divergence() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut train = separable(&mut rng, 2);
    train[0].set_label(Some(5));
    let cfg = VictimTrainConfig::default();
    assert!(matches!(train_victim(&small_pointnet(2), &cfg, &train, &[]), Err(ModelError::TargetOutOfRange { .. })));

    let train = separable(&mut rng, 2);
    let huge = VictimTrainConfig {
        epochs: 5,
        lr: 1e30,
        ..Default::default()
    };
    let far: Vec<PointCloud> = train
        .iter()
        .map(|c| c.map_points(c.points().iter().map(|p| p.map(|v| v * 1e30)).collect()).unwrap())
        .collect();
    let r = train_victim(&small_pointnet(2), &huge, &far, &[]);
    assert!(matches!(r, Err(ModelError::Diverged { .. })), "{:?}", r.map(|t| t.history));
}
