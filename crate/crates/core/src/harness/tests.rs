use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::attacks::AttackBudget;
use crate::defenses::Defense;
use crate::diffnet::Network;
use crate::geometry::{dist, Point, PointCloud};
use crate::lggan::{Discriminator, DiscriminatorConfig, EncoderLevel, Generator, GeneratorConfig, HyperParams, LabelConcat, LgganConfig, OutputMode};
use crate::victim::{accuracy, PointNetConfig, Victim, VictimConfig, VictimTrainConfig};

fn small_toy(seed: u64) -> ToyBenchmark {
    let config = ToyConfig {
        classes: 3,
        points: 64,
        train_per_class: 4,
        test_per_class: 3,
        jitter: 0.01,
    };
    make_toy_dataset(&config, seed).unwrap()
}

fn small_victim_config(classes: usize) -> VictimConfig {
    VictimConfig::PointNet(PointNetConfig {
        classes,
        point_widths: vec![8, 16],
        head_widths: vec![8],
        input_transform: false,
        normalize: false,
        dropout: 0.0,
    })
}

fn small_lggan(classes: usize) -> LgganConfig {
    LgganConfig {
        generator: GeneratorConfig {
            classes,
            levels: vec![
                EncoderLevel {
                    radius: 0.3,
                    neighbors: 4,
                    widths: vec![4, 8],
                },
                EncoderLevel {
                    radius: 0.6,
                    neighbors: 4,
                    widths: vec![8],
                },
            ],
            reduce_width: 4,
            decoder_widths: vec![8, 4],
            label_concat: LabelConcat::Multi,
            normalize: false,
            output: OutputMode::Offset,
        },
        discriminator: DiscriminatorConfig {
            head_widths: vec![4, 8],
            k: 3,
            pool_divisor: 2,
            residual_blocks: 1,
            patch_scores: false,
        },
        hyper: HyperParams {
            epochs: 1,
            validation_size: 2,
            seed: 3,
            ..Default::default()
        },
    }
}

fn unit_cross(label: usize) -> PointCloud {
    let pts: Vec<Point> = vec![[-0.5, 0.0, 0.0], [0.5, 0.0, 0.0], [0.0, 0.25, -0.25], [0.0, -0.25, 0.25]];
    PointCloud::new(pts).unwrap().with_label(label)
}

#[test]
fn packed_file_matches_hand_written_bytes() {
    let names = default_class_names(3);
    let d = Dataset::new(vec![unit_cross(0), unit_cross(2), unit_cross(1)], "test", names).unwrap();
    // f32 little-endian bit patterns of the coordinates above
    let (zero, half, m_half, quarter, m_quarter) = ([0u8; 4], [0, 0, 0, 0x3f], [0, 0, 0, 0xbf], [0, 0, 0x80, 0x3e], [0, 0, 0x80, 0xbe]);
    let mut want: Vec<u8> = b"PCAD".to_vec();
    for word in [[1, 0, 0, 0], [3, 0, 0, 0], [4, 0, 0, 0], [3, 0, 0, 0]] {
        want.extend_from_slice(&word);
    }
    for label in [0u8, 2, 1] {
        want.extend_from_slice(&[label, 0, 0, 0]);
        for p in [[m_half, zero, zero], [half, zero, zero], [zero, quarter, m_quarter], [zero, m_quarter, quarter]] {
            p.iter().for_each(|c| want.extend_from_slice(c));
        }
    }
    assert_eq!(want.len(), 20 + 3 * (4 + 48));
    assert_eq!(encode_packed(&d), want);
    let back = decode_packed(&want, Path::new("test.pcad")).unwrap();
    assert_eq!(back.clouds, d.clouds);
    assert_eq!(back.split, "test");
}

#[test]
fn datasets_round_trip_bit_identically() {
    let toy = small_toy(1);
    let dir = tempfile::tempdir().unwrap();
    for (format, name) in [(DatasetFormat::Packed, "test.pcad"), (DatasetFormat::AsciiDir, "test")] {
        let path = dir.path().join(name);
        save_dataset(&toy.test, &path, format).unwrap();
        let back = load_dataset(&path, format).unwrap();
        assert_eq!(back, toy.test, "{format:?}");
    }
}

#[test]
fn loading_normalizes_and_is_idempotent() {
    let pts: Vec<Point> = vec![[1.0, 2.0, 3.0], [3.0, 2.0, 3.0], [2.0, 3.0, 4.0], [2.0, 2.5, 3.5]];
    let raw = PointCloud::new(pts).unwrap().with_label(1);
    let names = default_class_names(2);
    let bytes = encode_packed(&Dataset::new(vec![raw], "x", names).unwrap());
    let d = decode_packed(&bytes, Path::new("x.pcad")).unwrap();
    let c = &d.clouds[0];
    assert_eq!(c.points()[0], [-0.5, -0.25, -0.25]);
    assert_eq!(c.points()[3], [0.0, 0.0, 0.0]);
    assert_eq!(canonical_cloud(c).unwrap(), *c);
    assert_eq!(decode_packed(&encode_packed(&d), Path::new("x.pcad")).unwrap(), d);
}

#[test]
fn corrupted_packed_files_are_rejected() {
    let d = Dataset::new(vec![unit_cross(0), unit_cross(1)], "t", default_class_names(2)).unwrap();
    let bytes = encode_packed(&d);
    let p = Path::new("t.pcad");
    let truncated = decode_packed(&bytes[..bytes.len() - 3], p);
    assert!(matches!(truncated, Err(HarnessError::Malformed { .. })), "{truncated:?}");
    assert!(matches!(decode_packed(&bytes[..10], p), Err(HarnessError::Malformed { .. })));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(decode_packed(&magic, p), Err(HarnessError::Malformed { .. })));
    let mut version = bytes.clone();
    version[4] = 9;
    assert!(matches!(decode_packed(&version, p), Err(HarnessError::Version { found: 9, expected: 1 })));
    let mut label = bytes.clone();
    label[20] = 7;
    assert!(matches!(decode_packed(&label, p), Err(HarnessError::LabelOutOfRange { label: 7, classes: 2 })));
    assert!(matches!(load_dataset(Path::new("/nonexistent/x.pcad"), DatasetFormat::Packed), Err(HarnessError::Io { .. })));
}

#[test]
fn malformed_ascii_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("a.xyz"), "0 0 0\n1 1\n").unwrap();
    fs::write(d.join(LABEL_FILE), "a.xyz 0\n").unwrap();
    assert!(matches!(load_dataset(d, DatasetFormat::AsciiDir), Err(HarnessError::Malformed { .. })));
    fs::write(d.join("a.xyz"), "0 0 0\n1 1 1\n").unwrap();
    fs::write(d.join(LABEL_FILE), "a.xyz\n").unwrap();
    assert!(matches!(load_dataset(d, DatasetFormat::AsciiDir), Err(HarnessError::Malformed { .. })));
    fs::write(d.join(LABEL_FILE), "a.xyz 0\n").unwrap();
    assert_eq!(load_dataset(d, DatasetFormat::AsciiDir).unwrap().len(), 1);
    assert!("ascii".parse::<DatasetFormat>().is_err());
}

#[test]
fn toy_data_is_deterministic_and_seed_dependent() {
    assert_eq!(small_toy(5), small_toy(5));
    assert_ne!(small_toy(5).train.clouds, small_toy(6).train.clouds);
    let t = small_toy(5);
    assert_ne!(t.train.clouds[0], t.test.clouds[0]);
    assert!(t.train.clouds.iter().all(|c| c.len() == 64 && c.points().iter().all(|p| p.iter().all(|v| v.abs() <= 0.5))));
    let bad = ToyConfig { classes: 9, ..Default::default() };
    assert!(make_toy_dataset(&bad, 0).is_err());
    let few = ToyConfig { points: 32, ..Default::default() };
    assert!(make_toy_dataset(&few, 0).is_err());
}

#[test]
fn sphere_points_lie_at_radius_half_within_jitter() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for jitter in [0.0, 0.01, 0.05] {
        for p in ToyShape::Sphere.sample(500, jitter, &mut rng) {
            let r = dist(&p, &[0.0; 3]);
            assert!((r - 0.5).abs() <= jitter + 1e-12, "{r}");
        }
    }
}

#[test]
fn toy_splits_are_class_balanced() {
    let config = ToyConfig {
        classes: 5,
        points: 64,
        train_per_class: 7,
        test_per_class: 2,
        jitter: 0.01,
    };
    let t = make_toy_dataset(&config, 2).unwrap();
    for (d, per) in [(&t.train, 7), (&t.test, 2)] {
        let mut hist = [0usize; 5];
        d.clouds.iter().for_each(|c| hist[c.label().unwrap()] += 1);
        assert_eq!(hist, [per; 5]);
        assert_eq!(d.class_names, ["sphere", "cube", "cone", "plane", "cylinder"]);
    }
}

#[test]
fn victim_checkpoint_round_trip_is_bit_identical() {
    let toy = small_toy(1);
    let v = Victim::<f32>::new(&small_victim_config(3), 4).unwrap();
    let train = VictimTrainConfig { epochs: 3, seed: 4, ..Default::default() };
    let ck = ModelCheckpoint::from_victim(&v, &train).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("victim.ckpt");
    ck.save(&path).unwrap();
    let loaded = ModelCheckpoint::load(&path).unwrap();
    assert_eq!(loaded, ck);
    let back = loaded.to_victim().unwrap();
    for c in &toy.test.clouds {
        let (a, b) = (v.cloud_logits(c).unwrap(), back.cloud_logits(c).unwrap());
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    // hyperparameters echo the configs they were trained with
    let (model, echoed) = loaded.victim_configs().unwrap();
    assert_eq!(model, small_victim_config(3));
    assert_eq!(echoed, train);
    assert_eq!(loaded.manifest.seed, 4);
    assert_eq!(loaded.manifest.arch, "pointnet");
    for (shape, values) in loaded.manifest.arrays.iter().zip(&loaded.arrays) {
        assert_eq!(shape.shape.iter().product::<usize>(), values.len());
    }
    assert!(loaded.to_lggan().is_err());
}

#[test]
fn lggan_checkpoint_round_trip_keeps_both_networks() {
    let config = small_lggan(3);
    let g = Generator::<f32>::new(config.generator.clone(), 8).unwrap();
    let d = Discriminator::<f32>::new(config.discriminator.clone(), 9).unwrap();
    let ck = ModelCheckpoint::from_lggan(&g, &d, &config).unwrap();
    let back = ModelCheckpoint::from_bytes(&ck.to_bytes().unwrap(), Path::new("g.ckpt")).unwrap();
    assert_eq!(back.lggan_config().unwrap(), config);
    let (g2, d2) = back.to_lggan().unwrap();
    assert_eq!(g2.store(), g.store());
    assert_eq!(d2.store(), d.store());
    assert!(back.manifest.arrays.iter().all(|a| a.name.starts_with("generator/") || a.name.starts_with("discriminator/")));
    assert!(back.to_victim().is_err());
}

#[test]
fn corrupted_checkpoints_are_rejected() {
    let v = Victim::<f32>::new(&small_victim_config(3), 1).unwrap();
    let bytes = ModelCheckpoint::from_victim(&v, &VictimTrainConfig::default()).unwrap().to_bytes().unwrap();
    let p = Path::new("v.ckpt");
    let mut manifest = bytes.clone();
    manifest[13] = b'#';
    assert!(matches!(ModelCheckpoint::from_bytes(&manifest, p), Err(HarnessError::Malformed { .. })));
    let mut version = bytes.clone();
    version[4] = 2;
    assert!(matches!(ModelCheckpoint::from_bytes(&version, p), Err(HarnessError::Version { found: 2, .. })));
    assert!(matches!(ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 4], p), Err(HarnessError::ShapeMismatch { .. })));
    let mut extra = bytes.clone();
    extra.extend_from_slice(&[0; 4]);
    assert!(matches!(ModelCheckpoint::from_bytes(&extra, p), Err(HarnessError::Malformed { .. })));
    assert!(matches!(ModelCheckpoint::from_bytes(b"PCK", p), Err(HarnessError::Malformed { .. })));
    // a manifest whose shapes disagree with the architecture
    let mut ck = ModelCheckpoint::from_bytes(&bytes, p).unwrap();
    ck.manifest.arrays[0].shape = vec![1];
    ck.arrays[0] = vec![0.0];
    assert!(matches!(ck.to_victim(), Err(HarnessError::ShapeMismatch { .. })));
}

fn trained_small_victim(toy: &ToyBenchmark) -> Victim<f32> {
    let train = VictimTrainConfig { epochs: 2, seed: 1, ..Default::default() };
    crate::victim::train_victim(&small_victim_config(3), &train, &toy.train.clouds, &toy.test.clouds)
        .unwrap()
        .model
}

#[test]
fn clean_attack_reports_victim_accuracy_and_partitions_rates() {
    let toy = small_toy(3);
    let v = trained_small_victim(&toy);
    let budget = AttackBudget::default();
    let ctx = AttackContext {
        victim: &v,
        generator: None,
        budget: &budget,
        fgsm_matches_l2: false,
    };
    let defenses = [Defense::Srs { drop_ratio: 0.5, seed: 2 }, Defense::Recenter];
    let report = evaluate_attack(&AttackSpec::Clean, &ctx, &toy.test, &defenses, 7, None).unwrap();
    assert_eq!(report.rows.len(), 3);
    let clean = report.row("clean", "none").unwrap();
    assert!((clean.accuracy - 100.0 * accuracy(&v, &toy.test.clouds).unwrap()).abs() < 1e-9);
    assert_eq!((clean.mean_l2, clean.mean_chamfer), (0.0, 0.0));
    for r in &report.rows {
        assert!((r.asr + r.accuracy + r.other - 100.0).abs() < 1e-9);
        assert!([r.asr, r.accuracy, r.other].iter().all(|v| (0.0..=100.0).contains(v)));
        assert_eq!(r.instances, toy.test.len());
    }
    let targets = evaluation_targets(&toy.test, 7);
    assert!(targets.iter().zip(&toy.test.clouds).all(|(&t, c)| t != c.label().unwrap() && t < 3));
    let rec = &report.records[0];
    assert!(rec.instances.iter().zip(&targets).all(|(i, &t)| i.target == t));
}

#[test]
fn rows_re_aggregate_from_instance_records() {
    let toy = small_toy(4);
    let v = trained_small_victim(&toy);
    let budget = AttackBudget { eps: 0.5, ..Default::default() };
    let ctx = AttackContext {
        victim: &v,
        generator: None,
        budget: &budget,
        fgsm_matches_l2: false,
    };
    let report = evaluate_attack(&AttackSpec::Ifgm, &ctx, &toy.test, &[Defense::Sor { k: 4, alpha: 0.9 }], 1, Some(6)).unwrap();
    let rec = &report.records[0];
    assert_eq!(rec.instances.len(), 6);
    // independent recount from the persisted outcomes
    let hits = rec.instances.iter().filter(|i| i.prediction == i.target).count();
    let sor_hits = rec.instances.iter().filter(|i| i.defended[0] == i.target).count();
    let l2 = rec.instances.iter().map(|i| i.paired_l2).sum::<f64>() / 6.0;
    let row = report.row("ifgm", "none").unwrap();
    assert!((row.asr - 100.0 * hits as f64 / 6.0).abs() < 1e-9);
    assert!((report.row("ifgm", "sor").unwrap().asr - 100.0 * sor_hits as f64 / 6.0).abs() < 1e-9);
    assert!((row.mean_l2 - l2).abs() < 1e-12);
    assert_eq!(aggregate(rec), report.rows);
    let again = evaluate_attack(&AttackSpec::Ifgm, &ctx, &toy.test, &[Defense::Sor { k: 4, alpha: 0.9 }], 1, Some(6)).unwrap();
    assert_eq!(again.without_timing(), report.without_timing());
}

#[test]
fn lggan_evaluation_needs_a_generator() {
    let toy = small_toy(4);
    let v = Victim::<f32>::new(&small_victim_config(3), 0).unwrap();
    let budget = AttackBudget::default();
    let ctx = AttackContext {
        victim: &v,
        generator: None,
        budget: &budget,
        fgsm_matches_l2: false,
    };
    assert!(matches!(evaluate_attack(&AttackSpec::Lggan, &ctx, &toy.test, &[], 0, None), Err(HarnessError::Config(_))));
    let wrong = Victim::<f32>::new(&small_victim_config(2), 0).unwrap();
    let ctx = AttackContext { victim: &wrong, ..ctx };
    assert!(evaluate_attack(&AttackSpec::Clean, &ctx, &toy.test, &[], 0, None).is_err());
}

#[test]
fn attack_names_round_trip() {
    for name in ["clean", "fgsm", "ifgm", "cw-l2", "cw-chamfer", "cw-hausdorff", "lggan", "translation-0.5"] {
        assert_eq!(AttackSpec::parse(name).unwrap().name(), name);
    }
    assert!(AttackSpec::parse("pgd").is_err());
    assert!(AttackSpec::parse("translation-x").is_err());
}

fn sample_report() -> EvalReport {
    let toy = small_toy(6);
    let v = Victim::<f32>::new(&small_victim_config(3), 2).unwrap();
    let budget = AttackBudget::default();
    let ctx = AttackContext {
        victim: &v,
        generator: None,
        budget: &budget,
        fgsm_matches_l2: true,
    };
    let mut report = evaluate_attack(&AttackSpec::Clean, &ctx, &toy.test, &[Defense::Recenter], 3, None).unwrap();
    report.merge(evaluate_attack(&AttackSpec::Fgsm, &ctx, &toy.test, &[Defense::Recenter], 3, Some(4)).unwrap());
    report
}

fn sample_sweep() -> AlphaSweep {
    let p = |alpha, seed, asr, mean_l2, mean_chamfer| SweepPoint {
        alpha,
        seed,
        asr,
        mean_l2,
        mean_chamfer,
    };
    AlphaSweep {
        points: vec![
            p(10.0, 0, 90.0, 0.3, 0.05),
            p(0.1, 0, 20.0, 0.01, 0.002),
            p(1.0, 0, 60.0, 0.1, 0.02),
            p(0.1, 1, 30.0, 0.03, 0.004),
            p(1.0, 1, 70.0, 0.12, 0.03),
            p(10.0, 1, 100.0, 0.5, 0.07),
        ],
    }
}

#[test]
fn csv_and_json_reports_mirror_the_report() {
    let report = sample_report();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path(), &[ReportFormat::Csv, ReportFormat::Json], None).unwrap();
    assert_eq!(files.len(), 2);
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.rows.len() + 1);
    assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    let fgsm = csv.lines().find(|l| l.starts_with("fgsm,pointnet,recenter,4,")).unwrap();
    assert_eq!(fgsm.split(',').count(), CSV_HEADER.split(',').count());
    let json: EvalReport = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json, report);
    assert!(emit_report(&EvalReport::default(), dir.path(), &[ReportFormat::Csv], None).is_err());
    let blocked = dir.path().join("report.csv").join("sub");
    assert!(matches!(emit_report(&report, &blocked, &[ReportFormat::Csv], None), Err(HarnessError::Io { .. })));
}

#[test]
fn sweep_plot_carries_the_per_alpha_means() {
    let sweep = sample_sweep();
    let means = sweep.means();
    assert_eq!(means.iter().map(|m| m.alpha).collect::<Vec<_>>(), [0.1, 1.0, 10.0]);
    assert_eq!(means.iter().map(|m| m.asr).collect::<Vec<_>>(), [25.0, 65.0, 95.0]);
    assert!((means[2].mean_l2 - 0.4).abs() < 1e-12);
    let svg = sweep_svg(&sweep);
    let series = |class: &str| -> Vec<f64> {
        let at = svg.find(&format!(r#"class="{class}" data-values=""#)).unwrap();
        let rest = &svg[at..];
        let start = rest.find("data-values=\"").unwrap() + 13;
        let end = start + rest[start..].find('"').unwrap();
        rest[start..end].split(' ').map(|v| v.parse().unwrap()).collect()
    };
    assert_eq!(series("asr"), [25.0, 65.0, 95.0]);
    assert_eq!(series("l2"), means.iter().map(|m| m.mean_l2).collect::<Vec<_>>());
    assert_eq!(series("chamfer"), means.iter().map(|m| m.mean_chamfer).collect::<Vec<_>>());
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&EvalReport::default(), dir.path(), &[ReportFormat::Csv], Some(&sweep)).unwrap();
    assert!(files.iter().any(|f| f.ends_with("alpha_sweep.svg")));
    let table = fs::read_to_string(dir.path().join("alpha_sweep.csv")).unwrap();
    assert_eq!(table.lines().nth(1).unwrap(), "0.1,2,25,0.02,0.003");
}

#[test]
fn alpha_sweep_trains_one_run_per_alpha_and_seed() {
    let toy = small_toy(7);
    let v = Victim::<f32>::new(&small_victim_config(3), 2).unwrap();
    let mut seen = Vec::new();
    let sweep = alpha_sweep(&v, &toy.train, &toy.test, &small_lggan(3), &[0.5, 2.0], &[1, 2], 5, Some(3), |p, run| {
        seen.push((p.alpha, p.seed, run.log.len()));
    })
    .unwrap();
    assert_eq!(seen, [(0.5, 1, 1), (0.5, 2, 1), (2.0, 1, 1), (2.0, 2, 1)]);
    assert_eq!(sweep.points.len(), 4);
    assert!(sweep.points.iter().all(|p| (0.0..=100.0).contains(&p.asr) && p.mean_l2 >= 0.0));
}

#[test]
fn config_round_trips_through_toml() {
    let config = ExperimentConfig::default();
    let text = config.to_toml().unwrap();
    assert_eq!(ExperimentConfig::from_toml(&text, Path::new("c.toml")).unwrap(), config);
    let seeded = config.clone().with_seed(9);
    assert_eq!((seeded.data.seed, seeded.victim.train.seed, seeded.lggan.hyper.seed, seeded.eval.seed), (9, 9, 9, 9));
    assert!(seeded.defense.defenses.iter().all(|d| !matches!(d, Defense::Srs { seed, .. } if *seed != 9)));
    let dir = tempfile::tempdir().unwrap();
    let path = config.save_beside(dir.path()).unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap(), config);
}

#[test]
fn partial_and_inconsistent_configs() {
    let p = Path::new("c.toml");
    let partial = ExperimentConfig::from_toml("[eval]\nseed = 4\nlimit = 10\n\n[lggan.hyper]\nalpha = 2.5\n", p).unwrap();
    assert_eq!(partial.eval.seed, 4);
    assert_eq!(partial.eval.limit_for("cw-l2"), Some(10));
    assert_eq!(partial.lggan.hyper.loss.alpha, 2.5);
    assert_eq!(partial.victim, VictimSection::default());
    assert!(matches!(ExperimentConfig::from_toml("[attack]\nattacks = [\"pgd\"]\n", p), Err(HarnessError::Config(_))));
    assert!(matches!(ExperimentConfig::from_toml("[data.toy]\nclasses = 3\n", p), Err(HarnessError::Config(_))));
    assert!(matches!(ExperimentConfig::from_toml("[data\n", p), Err(HarnessError::Malformed { .. })));
    let limits = ExperimentConfig::from_toml("[eval]\nlimit = 10\nattack_limits = [[\"cw-l2\", 3]]\n", p).unwrap();
    assert_eq!(limits.eval.limit_for("cw-l2"), Some(3));
    assert_eq!(limits.eval.limit_for("ifgm"), Some(10));
}
