use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use pcadv::defenses::Defense;
use pcadv::harness::{
    alpha_sweep, emit_report, evaluate_attack, evaluate_attack_observed, load_dataset, make_toy_dataset, save_dataset, AlphaSweep, AttackContext, AttackSpec,
    Dataset, DatasetFormat, EvalReport, ExperimentConfig, ModelCheckpoint, ReportFormat,
};
use pcadv::lggan::{train_lggan, Generator};
use pcadv::victim::{train_victim, Victim};

#[derive(Parser)]
#[command(name = "pcadv", version, about = "Targeted adversarial attacks and defenses for point-cloud classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Replaces every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; the resolved config is copied here.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArg {
    /// Directory holding the `train` and `test` splits.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the toy benchmark.
    MakeData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        format: Option<DatasetFormat>,
    },
    /// Train a victim classifier.
    TrainVictim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
    },
    /// Train an LG-GAN against a victim, or sweep alpha with `--sweep`.
    TrainLggan {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        victim: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Train one model per configured alpha and seed and score each.
        #[arg(long)]
        sweep: bool,
    },
    /// Attack test clouds and save the adversarial clouds.
    Attack {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        victim: PathBuf,
        #[arg(long)]
        lggan: Option<PathBuf>,
        /// Attack name such as `ifgm`, `cw-chamfer` or `translation-0.5`.
        #[arg(long)]
        attack: String,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Evaluate attacks raw and under defenses.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        victim: PathBuf,
        #[arg(long)]
        lggan: Option<PathBuf>,
        /// Comma-separated attack names; defaults to the config list.
        #[arg(long, value_delimiter = ',')]
        attacks: Option<Vec<String>>,
        /// Comma-separated subset of the configured defenses by name, or `none`.
        #[arg(long, value_delimiter = ',')]
        defenses: Option<Vec<String>>,
    },
    /// Write report tables and the alpha-sweep plot.
    Report {
        /// `report.json` written by `evaluate`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// `alpha_sweep.json` written by `train-lggan --sweep`.
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "csv,json")]
        format: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn resolve(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config = config.with_seed(seed);
    }
    Ok(config)
}

fn split_path(dir: &Path, split: &str, format: DatasetFormat) -> PathBuf {
    match format {
        DatasetFormat::Packed => dir.join(format!("{split}.pcad")),
        DatasetFormat::AsciiDir => dir.join(split),
    }
}

fn load_splits(config: &ExperimentConfig, data: &DataArg) -> Result<(Dataset, Dataset)> {
    match data.data.as_ref().or(config.data.dir.as_ref()) {
        Some(dir) => {
            let f = config.data.format;
            let train = load_dataset(&split_path(dir, "train", f), f)?;
            let test = load_dataset(&split_path(dir, "test", f), f)?;
            Ok((train, test))
        }
        None => {
            info!("no data directory given; generating the toy benchmark");
            let toy = make_toy_dataset(&config.data.toy, config.data.seed)?;
            Ok((toy.train, toy.test))
        }
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    fs::write(path, serde_json::to_vec_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn load_victim(path: &Path) -> Result<Victim<f32>> {
    Ok(ModelCheckpoint::load(path)?.to_victim()?)
}

fn load_generator(path: Option<&PathBuf>) -> Result<Option<Generator<f32>>> {
    path.map(|p| Ok(ModelCheckpoint::load(p)?.to_lggan()?.0)).transpose()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::MakeData { common, format } => {
            let mut config = resolve(&common)?;
            let format = format.unwrap_or(config.data.format);
            config.data.format = format;
            let toy = make_toy_dataset(&config.data.toy, config.data.seed)?;
            fs::create_dir_all(&common.out)?;
            for d in [&toy.train, &toy.test] {
                save_dataset(d, &split_path(&common.out, &d.split, format), format)?;
            }
            config.data.dir = Some(common.out.clone());
            config.save_beside(&common.out)?;
            info!("wrote {} train and {} test clouds", toy.train.len(), toy.test.len());
        }
        Command::TrainVictim { common, data } => {
            let config = resolve(&common)?;
            let (train, test) = load_splits(&config, &data)?;
            let model = config.victim.model.clone().with_classes(train.classes());
            let run = train_victim(&model, &config.victim.train, &train.clouds, &test.clouds)?;
            fs::create_dir_all(&common.out)?;
            ModelCheckpoint::from_victim(&run.model, &config.victim.train)?.save(&common.out.join("victim.ckpt"))?;
            write_json(
                &common.out.join("victim_log.json"),
                &serde_json::json!({
                    "train_accuracy": run.train_accuracy,
                    "test_accuracy": run.test_accuracy,
                    "history": run.history,
                }),
            )?;
            config.save_beside(&common.out)?;
            info!("victim test accuracy {:.2}%", 100.0 * run.test_accuracy);
        }
        Command::TrainLggan {
            common,
            data,
            victim,
            alpha,
            beta,
            sweep,
        } => {
            let mut config = resolve(&common)?;
            if let Some(a) = alpha {
                config.lggan.hyper.loss.alpha = a;
            }
            if let Some(b) = beta {
                config.lggan.hyper.loss.beta = b;
            }
            let (train, test) = load_splits(&config, &data)?;
            let v = load_victim(&victim)?;
            fs::create_dir_all(&common.out)?;
            if sweep {
                let e = &config.eval;
                let result = alpha_sweep(&v, &train, &test, &config.lggan, &e.alphas, &e.sweep_seeds, e.seed, e.limit_for("lggan"), |p, run| {
                    info!("alpha {} seed {}: success {:.1}%, l2 {:.4}, chamfer {:.4}", p.alpha, p.seed, p.asr, p.mean_l2, p.mean_chamfer);
                    let mut c = config.lggan.clone();
                    c.hyper.loss.alpha = p.alpha;
                    c.hyper.seed = p.seed;
                    let path = common.out.join(format!("lggan_alpha{}_seed{}.ckpt", p.alpha, p.seed));
                    if let Err(err) = ModelCheckpoint::from_lggan(&run.generator, &run.discriminator, &c).and_then(|ck| ck.save(&path)) {
                        log::error!("cannot save {}: {err}", path.display());
                    }
                })?;
                write_json(&common.out.join("alpha_sweep.json"), &result)?;
            } else {
                let run = train_lggan(&v, &train.clouds, &test.clouds, &config.lggan, |r| {
                    info!(
                        "epoch {}: cls {:.4} rec {:.5} dis {:.4} D {:.4} validation success {:.1}%",
                        r.epoch,
                        r.l_cls,
                        r.l_rec,
                        r.l_dis,
                        r.l_d,
                        100.0 * r.val_success
                    );
                })?;
                if let Some(reason) = &run.abort {
                    log::warn!("training stopped early: {reason}");
                }
                ModelCheckpoint::from_lggan(&run.generator, &run.discriminator, &config.lggan)?.save(&common.out.join("lggan.ckpt"))?;
                write_json(&common.out.join("lggan_log.json"), &serde_json::json!({ "log": run.log, "abort": run.abort }))?;
            }
            config.save_beside(&common.out)?;
        }
        Command::Attack {
            common,
            data,
            victim,
            lggan,
            attack,
            limit,
        } => {
            let config = resolve(&common)?;
            let spec = AttackSpec::parse(&attack)?;
            let (_, test) = load_splits(&config, &data)?;
            let v = load_victim(&victim)?;
            let generator = load_generator(lggan.as_ref())?;
            let ctx = context(&config, &v, generator.as_ref());
            let n = limit.or(config.eval.limit_for(&spec.name())).unwrap_or(test.len()).min(test.len());
            let mut clouds = Vec::with_capacity(n);
            let report = evaluate_attack_observed(&spec, &ctx, &test, &[], config.eval.seed, Some(n), |_, r| clouds.push(r.cloud.clone()))?;
            fs::create_dir_all(&common.out)?;
            let adversarial = Dataset::new(clouds, "adversarial", test.class_names.clone())?;
            save_dataset(&adversarial, &common.out.join("adversarial.pcad"), DatasetFormat::Packed)?;
            write_json(&common.out.join("report.json"), &report)?;
            config.save_beside(&common.out)?;
            let r = &report.rows[0];
            info!("{}: success {:.1}%, accuracy {:.1}%, mean l2 {:.4}", r.attack, r.asr, r.accuracy, r.mean_l2);
        }
        Command::Evaluate {
            common,
            data,
            victim,
            lggan,
            attacks,
            defenses,
        } => {
            let mut config = resolve(&common)?;
            if let Some(a) = attacks {
                config.attack.attacks = a;
            }
            let chosen = select_defenses(&config.defense.defenses, defenses.as_deref())?;
            config.defense.defenses = chosen.clone();
            config.validate()?;
            let (_, test) = load_splits(&config, &data)?;
            let v = load_victim(&victim)?;
            let generator = load_generator(lggan.as_ref())?;
            let ctx = context(&config, &v, generator.as_ref());
            let mut report = EvalReport {
                seed: config.eval.seed,
                ..Default::default()
            };
            for spec in config.attack_specs()? {
                let name = spec.name();
                let part = evaluate_attack(&spec, &ctx, &test, &chosen, config.eval.seed, config.eval.limit_for(&name))?;
                for r in &part.rows {
                    info!("{} / {}: success {:.1}%, accuracy {:.1}%", r.attack, r.defense, r.asr, r.accuracy);
                }
                report.merge(part);
            }
            fs::create_dir_all(&common.out)?;
            write_json(&common.out.join("report.json"), &report)?;
            config.save_beside(&common.out)?;
        }
        Command::Report { input, sweep, format, out } => {
            let report: EvalReport = match &input {
                Some(p) => serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?,
                None => EvalReport::default(),
            };
            let sweep: Option<AlphaSweep> = match &sweep {
                Some(p) => Some(serde_json::from_slice(&fs::read(p).with_context(|| format!("reading {}", p.display()))?)?),
                None => None,
            };
            let formats = format
                .iter()
                .map(|f| match f.as_str() {
                    "csv" => Ok(ReportFormat::Csv),
                    "json" => Ok(ReportFormat::Json),
                    other => bail!("unknown report format {other:?}"),
                })
                .collect::<Result<Vec<_>>>()?;
            for path in emit_report(&report, &out, &formats, sweep.as_ref())? {
                info!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn context<'a>(config: &'a ExperimentConfig, victim: &'a Victim<f32>, generator: Option<&'a Generator<f32>>) -> AttackContext<'a> {
    AttackContext {
        victim,
        generator,
        budget: &config.attack.budget,
        fgsm_matches_l2: config.attack.fgsm_matches_l2,
    }
}

fn select_defenses(configured: &[Defense], names: Option<&[String]>) -> Result<Vec<Defense>> {
    let Some(names) = names else {
        return Ok(configured.to_vec());
    };
    if names.iter().any(|n| n == "none") {
        return Ok(Vec::new());
    }
    names
        .iter()
        .map(|n| match configured.iter().find(|d| d.name() == n) {
            Some(d) => Ok(*d),
            None if n == "recenter" => Ok(Defense::Recenter),
            None => bail!("defense {n:?} is not configured"),
        })
        .collect()
}
