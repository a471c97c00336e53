use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::error::{io_err, malformed, HarnessError, HarnessResult};
use crate::diffnet::{Network, ParamShape, ParamStore};
use crate::lggan::{Discriminator, Generator, LgganConfig};
use crate::victim::{Victim, VictimConfig, VictimTrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

const GENERATOR_PREFIX: &str = "generator/";
const DISCRIMINATOR_PREFIX: &str = "discriminator/";

/// Header of a checkpoint: what was trained, how, and the array layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// `pointnet`, `pointnetpp` or `lggan`.
    pub arch: String,
    pub seed: u64,
    /// The full training configuration.
    pub hyperparameters: serde_json::Value,
    pub arrays: Vec<ParamShape>,
}

/// Manifest plus named flat `f32` arrays in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub manifest: Manifest,
    pub arrays: Vec<Vec<f32>>,
}

#[derive(Serialize, Deserialize)]
struct VictimHyper {
    model: VictimConfig,
    train: VictimTrainConfig,
}

fn push_store(prefix: &str, store: &ParamStore<f32>, shapes: &mut Vec<ParamShape>, arrays: &mut Vec<Vec<f32>>) {
    for p in store.params() {
        shapes.push(ParamShape {
            name: format!("{prefix}{}", p.name),
            shape: p.shape.clone(),
        });
        arrays.push(p.value.clone());
    }
}

impl ModelCheckpoint {
    fn build(arch: &str, seed: u64, hyperparameters: serde_json::Value, stores: &[(&str, &ParamStore<f32>)]) -> HarnessResult<Self> {
        let (mut shapes, mut arrays) = (Vec::new(), Vec::new());
        for (prefix, store) in stores {
            push_store(prefix, store, &mut shapes, &mut arrays);
        }
        Ok(Self {
            manifest: Manifest {
                format_version: CHECKPOINT_VERSION,
                arch: arch.to_string(),
                seed,
                hyperparameters,
                arrays: shapes,
            },
            arrays,
        })
    }

    pub fn from_victim(model: &Victim<f32>, train: &VictimTrainConfig) -> HarnessResult<Self> {
        let hyper = serde_json::to_value(VictimHyper {
            model: model.config(),
            train: train.clone(),
        })?;
        Self::build(model.arch_tag(), train.seed, hyper, &[("", model.store())])
    }

    pub fn from_lggan(generator: &Generator<f32>, discriminator: &Discriminator<f32>, config: &LgganConfig) -> HarnessResult<Self> {
        Self::build(
            "lggan",
            config.hyper.seed,
            serde_json::to_value(config)?,
            &[(GENERATOR_PREFIX, generator.store()), (DISCRIMINATOR_PREFIX, discriminator.store())],
        )
    }

    fn fill(&self, prefix: &str, store: &mut ParamStore<f32>) -> HarnessResult<()> {
        for p in store.params_mut() {
            let name = format!("{prefix}{}", p.name);
            let at = self
                .manifest
                .arrays
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| HarnessError::Config(format!("checkpoint lacks array {name}")))?;
            let (shape, values) = (&self.manifest.arrays[at].shape, &self.arrays[at]);
            if *shape != p.shape || values.len() != p.value.len() {
                return Err(HarnessError::ShapeMismatch {
                    name,
                    expected: p.value.len(),
                    found: values.len(),
                });
            }
            p.value.copy_from_slice(values);
        }
        let expected = store.len();
        let found = self.manifest.arrays.iter().filter(|a| a.name.starts_with(prefix)).count();
        if found != expected {
            return Err(HarnessError::Config(format!("checkpoint holds {found} arrays under {prefix:?}, model has {expected}")));
        }
        Ok(())
    }

    pub fn victim_configs(&self) -> HarnessResult<(VictimConfig, VictimTrainConfig)> {
        if self.manifest.arch == "lggan" {
            return Err(HarnessError::Config("checkpoint holds an LG-GAN, not a victim".into()));
        }
        let h: VictimHyper = serde_json::from_value(self.manifest.hyperparameters.clone())?;
        Ok((h.model, h.train))
    }

    pub fn to_victim(&self) -> HarnessResult<Victim<f32>> {
        let (config, _) = self.victim_configs()?;
        let mut model = Victim::<f32>::new(&config, 0)?;
        self.fill("", model.store_mut())?;
        Ok(model)
    }

    pub fn lggan_config(&self) -> HarnessResult<LgganConfig> {
        if self.manifest.arch != "lggan" {
            return Err(HarnessError::Config(format!("checkpoint holds a {} victim, not an LG-GAN", self.manifest.arch)));
        }
        Ok(serde_json::from_value(self.manifest.hyperparameters.clone())?)
    }

    pub fn to_lggan(&self) -> HarnessResult<(Generator<f32>, Discriminator<f32>)> {
        let config = self.lggan_config()?;
        let mut g = Generator::<f32>::new(config.generator, 0)?;
        let mut d = Discriminator::<f32>::new(config.discriminator, 0)?;
        self.fill(GENERATOR_PREFIX, g.store_mut())?;
        self.fill(DISCRIMINATOR_PREFIX, d.store_mut())?;
        Ok((g, d))
    }

    /// Magic, version (u32), manifest length (u32), JSON manifest, then
    /// every array as little-endian `f32`.
    pub fn to_bytes(&self) -> HarnessResult<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = Vec::with_capacity(12 + manifest.len() + 4 * self.arrays.iter().map(Vec::len).sum::<usize>());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(&manifest);
        for a in &self.arrays {
            for v in a {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> HarnessResult<Self> {
        if bytes.get(..4) != Some(CHECKPOINT_MAGIC.as_slice()) {
            return Err(malformed(path, "missing checkpoint magic"));
        }
        let word = |at: usize| {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().expect("four bytes")))
                .ok_or_else(|| malformed(path, "truncated header"))
        };
        let version = word(4)?;
        if version != CHECKPOINT_VERSION {
            return Err(HarnessError::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = word(8)? as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| malformed(path, "truncated manifest"))?;
        let manifest: Manifest = serde_json::from_slice(body).map_err(|e| malformed(path, format!("manifest: {e}")))?;
        if manifest.format_version != CHECKPOINT_VERSION {
            return Err(HarnessError::Version {
                found: manifest.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut at = 12 + len;
        let mut arrays = Vec::with_capacity(manifest.arrays.len());
        for a in &manifest.arrays {
            let n: usize = a.shape.iter().product();
            let available = (bytes.len() - at) / 4;
            if available < n {
                return Err(HarnessError::ShapeMismatch {
                    name: a.name.clone(),
                    expected: n,
                    found: available,
                });
            }
            arrays.push(bytes[at..at + 4 * n].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect());
            at += 4 * n;
        }
        if at != bytes.len() {
            return Err(malformed(path, format!("{} trailing bytes after the last array", bytes.len() - at)));
        }
        Ok(Self { manifest, arrays })
    }

    pub fn save(&self, path: &Path) -> HarnessResult<()> {
        fs::write(path, self.to_bytes()?).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let bytes = fs::read(path).map_err(io_err(path))?;
        Self::from_bytes(&bytes, path)
    }
}
