use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deep_ac::DeepConfig;
use crate::envs::{self, CosineMode, CosineToyMG, Env, EnvParams};
use crate::error::{Error, Result};
use crate::linear_ac::{LinearACConfig, TabularGame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    LinearAc,
    DeepAc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvSpec {
    /// One of [`envs::ENV_NAMES`].
    pub name: String,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub mode: Option<CosineMode>,
}

impl Default for EnvSpec {
    fn default() -> Self {
        Self {
            name: "cosine".into(),
            n: None,
            k: None,
            mode: None,
        }
    }
}

impl EnvSpec {
    pub fn params(&self) -> EnvParams {
        EnvParams {
            n: self.n,
            k: self.k,
            mode: self.mode,
        }
    }

    pub fn build(&self) -> Result<Env> {
        envs::build(&self.name, &self.params())
    }
}

/// A finite game in the form the linear trainer takes.
pub enum LinearGame {
    Cosine(CosineToyMG),
    Tabular(TabularGame),
}

/// Everything one experiment needs. Serialises to TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub name: String,
    pub env: EnvSpec,
    pub algorithm: Algorithm,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub linear: LinearACConfig,
    pub deep: DeepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "run".into(),
            env: EnvSpec::default(),
            algorithm: Algorithm::LinearAc,
            seeds: vec![0],
            out_dir: PathBuf::from("runs/run"),
            linear: LinearACConfig::default(),
            deep: DeepConfig::default(),
        }
    }
}

fn parse_err(e: impl std::fmt::Display) -> Error {
    Error::Parse(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(parse_err)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(parse_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Applies a `dotted.key=value` override. The value is read as a TOML
    /// value, falling back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override '{assignment}' is not key=value")))?;
        let value: toml::Value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
        let mut root = toml::Value::try_from(&*self).map_err(parse_err)?;
        let mut node = &mut root;
        let parts: Vec<&str> = key.trim().split('.').collect();
        for (depth, part) in parts.iter().enumerate() {
            let table = node
                .as_table_mut()
                .ok_or_else(|| Error::Parse(format!("'{}' is not a table", parts[..depth].join("."))))?;
            if depth + 1 == parts.len() {
                table.insert(part.to_string(), value.clone());
                break;
            }
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        *self = root.try_into().map_err(parse_err)?;
        Ok(())
    }

    /// Copies the environment spec into the algorithm's own settings.
    pub fn resolved(&self) -> Result<Self> {
        let mut out = self.clone();
        if self.algorithm == Algorithm::DeepAc {
            if self.env.name != "particle-nav" {
                return Err(Error::InvalidParam(format!(
                    "the deep trainer runs on particle-nav, not '{}'",
                    self.env.name
                )));
            }
            if let Some(n) = self.env.n {
                out.deep.env.n_agents = n;
                out.deep.env.n_landmarks = n;
            }
            if let Some(k) = self.env.k {
                out.deep.env.k = k;
            }
            out.deep.validate()?;
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParam("no seeds given".into()));
        }
        Ok(out)
    }

    pub fn linear_game(&self) -> Result<LinearGame> {
        match self.env.name.as_str() {
            "cosine" => Ok(LinearGame::Cosine(CosineToyMG::new(
                self.env.n.unwrap_or(3),
                self.env.mode.unwrap_or(CosineMode::OneStep),
            )?)),
            _ => match self.env.build()? {
                Env::Finite { mg, obs } => Ok(LinearGame::Tabular(TabularGame::new(mg, obs, None)?)),
                Env::Continuous(_) => Err(Error::InvalidParam(
                    "the linear trainer needs a finite game".into(),
                )),
            },
        }
    }
}
