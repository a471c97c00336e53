use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::error::{HarnessError, HarnessResult};
use super::report::{AlphaSweep, SweepPoint};
use crate::attacks::{cw_attack, fgsm_targeted, ifgm_targeted, translation_attack, AttackBudget, AttackResult, DistanceMode};
use crate::defenses::Defense;
use crate::geometry::PointCloud;
use crate::lggan::{attack_lggan, sample_target, train_lggan, Generator, LgganConfig, LgganRun};
use crate::victim::Victim;

/// Which attack to run, with the parameters that are not in the budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttackSpec {
    /// No perturbation.
    Clean,
    Fgsm,
    Ifgm,
    Cw { mode: DistanceMode },
    Lggan,
    Translation { eps: f64 },
}

impl AttackSpec {
    pub fn name(&self) -> String {
        match self {
            Self::Clean => "clean".into(),
            Self::Fgsm => "fgsm".into(),
            Self::Ifgm => "ifgm".into(),
            Self::Cw { mode } => format!("cw-{}", serde_json::to_value(mode).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()),
            Self::Lggan => "lggan".into(),
            Self::Translation { eps } => format!("translation-{eps}"),
        }
    }

    pub fn parse(s: &str) -> HarnessResult<Self> {
        Ok(match s {
            "clean" => Self::Clean,
            "fgsm" => Self::Fgsm,
            "ifgm" => Self::Ifgm,
            "cw" | "cw-l2" => Self::Cw { mode: DistanceMode::L2 },
            "cw-chamfer" => Self::Cw { mode: DistanceMode::Chamfer },
            "cw-hausdorff" => Self::Cw {
                mode: DistanceMode::Hausdorff,
            },
            "lggan" => Self::Lggan,
            _ => match s.strip_prefix("translation-").map(str::parse::<f64>) {
                Some(Ok(eps)) => Self::Translation { eps },
                _ => return Err(HarnessError::Config(format!("unknown attack {s:?}"))),
            },
        })
    }
}

/// Everything an attack may need besides the cloud.
#[derive(Clone, Copy)]
pub struct AttackContext<'a> {
    pub victim: &'a Victim<f32>,
    pub generator: Option<&'a Generator<f32>>,
    pub budget: &'a AttackBudget,
    /// FGSM step as the per-coordinate equivalent of the IFGM ℓ2 budget.
    pub fgsm_matches_l2: bool,
}

/// Per-cloud outcome, kept so that every aggregate can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub truth: usize,
    pub target: usize,
    /// Victim prediction on the raw adversarial cloud.
    pub prediction: usize,
    /// Prediction after each defense, in report defense order.
    pub defended: Vec<usize>,
    pub paired_l2: f64,
    pub chamfer: f64,
    pub kurtosis: Option<f64>,
    pub seconds: f64,
    pub failure: Option<String>,
}

/// One table row: an attack seen through one defense (or none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub attack: String,
    pub victim: String,
    pub defense: String,
    pub instances: usize,
    /// Instances for which the attack produced an adversary.
    pub produced: usize,
    /// Percent predicted as the target.
    pub asr: f64,
    /// Percent predicted as the ground truth.
    pub accuracy: f64,
    /// Percent predicted as anything else.
    pub other: f64,
    pub mean_l2: f64,
    pub mean_chamfer: f64,
    pub mean_kurtosis: Option<f64>,
    pub mean_seconds: f64,
}

/// Instance records of one attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRecords {
    pub attack: String,
    pub victim: String,
    pub defenses: Vec<String>,
    pub instances: Vec<InstanceRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    /// Seed of target sampling and defense randomness.
    pub seed: u64,
    pub rows: Vec<EvalRow>,
    pub records: Vec<AttackRecords>,
}

impl EvalReport {
    pub fn merge(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
        self.records.extend(other.records);
    }

    pub fn row(&self, attack: &str, defense: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.attack == attack && r.defense == defense)
    }

    /// Zeroes every wall-time field, leaving only reproducible content.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        out.rows.iter_mut().for_each(|r| r.mean_seconds = 0.0);
        for rec in &mut out.records {
            rec.instances.iter_mut().for_each(|i| i.seconds = 0.0);
        }
        out
    }
}

/// Targets for every cloud, uniform over the classes other than the truth.
pub fn evaluation_targets(dataset: &Dataset, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let classes = dataset.classes();
    dataset
        .clouds
        .iter()
        .map(|c| sample_target(&mut rng, c.label().unwrap_or(0), classes))
        .collect()
}

/// The defense used on cloud `index`: SRS draws from a per-cloud seed.
pub fn instance_defense(defense: &Defense, index: usize) -> Defense {
    match *defense {
        Defense::Srs { drop_ratio, seed } => Defense::Srs {
            drop_ratio,
            seed: seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15),
        },
        d => d,
    }
}

pub fn run_attack(spec: &AttackSpec, ctx: &AttackContext, cloud: &PointCloud, target: usize, seed: u64) -> HarnessResult<AttackResult> {
    let v = ctx.victim;
    Ok(match spec {
        AttackSpec::Clean => {
            let start = Instant::now();
            let prediction = v.predict(cloud)?;
            AttackResult::with_prediction(cloud, cloud.clone(), target, prediction, start.elapsed().as_secs_f64())?
        }
        AttackSpec::Fgsm => {
            let mut budget = ctx.budget.clone();
            if ctx.fgsm_matches_l2 {
                budget.eps = AttackBudget::sign_step_for_l2(budget.eps, cloud.len());
            }
            fgsm_targeted(v, cloud, target, &budget)?
        }
        AttackSpec::Ifgm => ifgm_targeted(v, cloud, target, ctx.budget)?,
        AttackSpec::Cw { mode } => cw_attack(v, cloud, target, *mode, ctx.budget)?,
        AttackSpec::Lggan => {
            let g = ctx.generator.ok_or_else(|| HarnessError::Config("LG-GAN evaluation needs a generator checkpoint".into()))?;
            attack_lggan(g, v, cloud, target)?
        }
        AttackSpec::Translation { eps } => {
            let start = Instant::now();
            let moved = translation_attack(cloud, *eps, seed)?;
            let seconds = start.elapsed().as_secs_f64();
            AttackResult::measure(v, cloud, moved, target, seconds)?
        }
    })
}

fn percent(hits: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * hits as f64 / n as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Aggregates the records of one attack into one row per defense (the first
/// row undefended). Distances and kurtosis average over produced adversaries.
pub fn aggregate(records: &AttackRecords) -> Vec<EvalRow> {
    let inst = &records.instances;
    let produced: Vec<&InstanceRecord> = inst.iter().filter(|r| r.failure.is_none()).collect();
    let base = EvalRow {
        attack: records.attack.clone(),
        victim: records.victim.clone(),
        defense: "none".into(),
        instances: inst.len(),
        produced: produced.len(),
        asr: 0.0,
        accuracy: 0.0,
        other: 0.0,
        mean_l2: mean(produced.iter().map(|r| r.paired_l2)).unwrap_or(0.0),
        mean_chamfer: mean(produced.iter().map(|r| r.chamfer)).unwrap_or(0.0),
        mean_kurtosis: mean(produced.iter().filter_map(|r| r.kurtosis)),
        mean_seconds: mean(inst.iter().map(|r| r.seconds)).unwrap_or(0.0),
    };
    let rates = |pred: &dyn Fn(&InstanceRecord) -> usize| {
        let hit = inst.iter().filter(|r| pred(r) == r.target).count();
        let right = inst.iter().filter(|r| pred(r) == r.truth).count();
        let (asr, accuracy) = (percent(hit, inst.len()), percent(right, inst.len()));
        (asr, accuracy, percent(inst.len() - hit - right, inst.len()))
    };
    let mut rows = Vec::with_capacity(1 + records.defenses.len());
    let (asr, accuracy, other) = rates(&|r| r.prediction);
    rows.push(EvalRow {
        asr,
        accuracy,
        other,
        ..base.clone()
    });
    for (d, name) in records.defenses.iter().enumerate() {
        let (asr, accuracy, other) = rates(&|r| r.defended[d]);
        rows.push(EvalRow {
            defense: name.clone(),
            asr,
            accuracy,
            other,
            ..base.clone()
        });
    }
    rows
}

/// Attacks every cloud of `dataset` (at most `limit`) once toward its seeded
/// target, then classifies the result raw and after each defense.
pub fn evaluate_attack(
    spec: &AttackSpec,
    ctx: &AttackContext,
    dataset: &Dataset,
    defenses: &[Defense],
    seed: u64,
    limit: Option<usize>,
) -> HarnessResult<EvalReport> {
    evaluate_attack_observed(spec, ctx, dataset, defenses, seed, limit, |_, _| {})
}

/// [`evaluate_attack`], handing every attack result to `observe` as made.
pub fn evaluate_attack_observed(
    spec: &AttackSpec,
    ctx: &AttackContext,
    dataset: &Dataset,
    defenses: &[Defense],
    seed: u64,
    limit: Option<usize>,
    mut observe: impl FnMut(usize, &AttackResult),
) -> HarnessResult<EvalReport> {
    if dataset.classes() != ctx.victim.classes() {
        return Err(HarnessError::Config(format!(
            "dataset has {} classes, victim {}",
            dataset.classes(),
            ctx.victim.classes()
        )));
    }
    let targets = evaluation_targets(dataset, seed);
    let n = limit.unwrap_or(dataset.len()).min(dataset.len());
    let mut instances = Vec::with_capacity(n);
    for (index, (cloud, &target)) in dataset.clouds.iter().zip(&targets).take(n).enumerate() {
        let r = run_attack(spec, ctx, cloud, target, seed ^ index as u64)?;
        let defended = defenses
            .iter()
            .map(|d| Ok(ctx.victim.predict(&instance_defense(d, index).apply(&r.cloud)?)?))
            .collect::<HarnessResult<Vec<_>>>()?;
        observe(index, &r);
        instances.push(InstanceRecord {
            index,
            truth: cloud.label().unwrap_or(0),
            target,
            prediction: r.prediction,
            defended,
            paired_l2: r.paired_l2,
            chamfer: r.chamfer,
            kurtosis: r.kurtosis,
            seconds: r.seconds,
            failure: r.failure,
        });
    }
    let records = AttackRecords {
        attack: spec.name(),
        victim: ctx.victim.arch_tag().into(),
        defenses: defenses.iter().map(|d| d.name().to_string()).collect(),
        instances,
    };
    Ok(EvalReport {
        seed,
        rows: aggregate(&records),
        records: vec![records],
    })
}

/// Trains one LG-GAN per `(alpha, seed)` pair on `train` and scores it with
/// [`evaluate_attack`] on `test`. `on_run` sees every trained run.
#[allow(clippy::too_many_arguments)]
pub fn alpha_sweep(
    victim: &Victim<f32>,
    train: &Dataset,
    test: &Dataset,
    base: &LgganConfig,
    alphas: &[f64],
    seeds: &[u64],
    eval_seed: u64,
    limit: Option<usize>,
    mut on_run: impl FnMut(&SweepPoint, &LgganRun),
) -> HarnessResult<AlphaSweep> {
    let mut points = Vec::with_capacity(alphas.len() * seeds.len());
    for &alpha in alphas {
        for &seed in seeds {
            let mut config = base.clone();
            config.hyper.loss.alpha = alpha;
            config.hyper.seed = seed;
            let run = train_lggan(victim, &train.clouds, &test.clouds, &config, |_| {})?;
            let ctx = AttackContext {
                victim,
                generator: Some(&run.generator),
                budget: &AttackBudget::default(),
                fgsm_matches_l2: false,
            };
            let report = evaluate_attack(&AttackSpec::Lggan, &ctx, test, &[], eval_seed, limit)?;
            let row = &report.rows[0];
            let point = SweepPoint {
                alpha,
                seed,
                asr: row.asr,
                mean_l2: row.mean_l2,
                mean_chamfer: row.mean_chamfer,
            };
            on_run(&point, &run);
            points.push(point);
        }
    }
    Ok(AlphaSweep { points })
}
