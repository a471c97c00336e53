use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::DatasetFormat;
use super::error::{io_err, malformed, HarnessError, HarnessResult};
use super::eval::AttackSpec;
use super::report::ReportFormat;
use super::toy::ToyConfig;
use crate::attacks::AttackBudget;
use crate::defenses::Defense;
use crate::lggan::LgganConfig;
use crate::victim::{VictimConfig, VictimTrainConfig};

/// Name of the resolved config copied beside every command's outputs.
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

/// Where clouds come from: the procedural benchmark, or pre-sampled files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub seed: u64,
    pub toy: ToyConfig,
    /// Directory holding `train` and `test` datasets; toy data is generated
    /// when absent.
    pub dir: Option<PathBuf>,
    pub format: DatasetFormat,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            seed: 0,
            toy: ToyConfig::default(),
            dir: None,
            format: DatasetFormat::Packed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct VictimSection {
    pub model: VictimConfig,
    pub train: VictimTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackSection {
    /// Attack names as accepted by [`AttackSpec::parse`].
    pub attacks: Vec<String>,
    pub budget: AttackBudget,
    /// Scale the FGSM step so its ℓ2 norm equals the IFGM budget.
    pub fgsm_matches_l2: bool,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            attacks: ["clean", "fgsm", "ifgm", "cw-l2", "lggan"].map(String::from).to_vec(),
            budget: AttackBudget::default(),
            fgsm_matches_l2: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefenseSection {
    pub defenses: Vec<Defense>,
}

impl Default for DefenseSection {
    fn default() -> Self {
        Self {
            defenses: vec![
                Defense::Srs { drop_ratio: 0.75, seed: 0 },
                Defense::Sor { k: 12, alpha: 0.9 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Seed of target sampling, translation signs and SRS draws.
    pub seed: u64,
    /// Evaluate at most this many test clouds per attack.
    pub limit: Option<usize>,
    /// Per-attack override of `limit`, as `(attack name, limit)` pairs.
    pub attack_limits: Vec<(String, usize)>,
    pub formats: Vec<ReportFormat>,
    /// Balance weights swept by `train-lggan --sweep`.
    pub alphas: Vec<f64>,
    /// Seeds per swept alpha.
    pub sweep_seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            seed: 0,
            limit: None,
            attack_limits: Vec::new(),
            formats: vec![ReportFormat::Csv, ReportFormat::Json],
            alphas: vec![0.1, 1.0, 10.0, 100.0],
            sweep_seeds: vec![0, 1, 2],
        }
    }
}

impl EvalSection {
    pub fn limit_for(&self, attack: &str) -> Option<usize> {
        self.attack_limits.iter().find(|(a, _)| a == attack).map(|&(_, n)| n).or(self.limit)
    }
}

/// One experiment: a section per module, every field defaulted.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub victim: VictimSection,
    pub lggan: LgganConfig,
    pub attack: AttackSection,
    pub defense: DefenseSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> HarnessResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| malformed(path, e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        Self::from_toml(&fs::read_to_string(path).map_err(io_err(path))?, path)
    }

    pub fn to_toml(&self) -> HarnessResult<String> {
        toml::to_string(self).map_err(|e| HarnessError::Config(format!("cannot serialize config: {e}")))
    }

    /// Writes the resolved config into `dir`.
    pub fn save_beside(&self, dir: &Path) -> HarnessResult<PathBuf> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(RESOLVED_CONFIG);
        fs::write(&path, self.to_toml()?).map_err(io_err(&path))?;
        Ok(path)
    }

    /// Replaces every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.data.seed = seed;
        self.victim.train.seed = seed;
        self.lggan.hyper.seed = seed;
        self.eval.seed = seed;
        for d in &mut self.defense.defenses {
            if let Defense::Srs { seed: s, .. } = d {
                *s = seed;
            }
        }
        self
    }

    /// Checks cross-section consistency: one class count everywhere, known
    /// attack names, usable budgets.
    pub fn validate(&self) -> HarnessResult<()> {
        let classes = self.data.toy.classes;
        if self.data.dir.is_none() {
            for (what, c) in [("victim", self.victim.model.classes()), ("lggan.generator", self.lggan.generator.classes)] {
                if c != classes {
                    return Err(HarnessError::Config(format!("{what} has {c} classes, data.toy {classes}")));
                }
            }
        }
        for a in &self.attack.attacks {
            AttackSpec::parse(a)?;
        }
        self.attack.budget.validate()?;
        Ok(())
    }

    pub fn attack_specs(&self) -> HarnessResult<Vec<AttackSpec>> {
        self.attack.attacks.iter().map(|a| AttackSpec::parse(a)).collect()
    }
}
