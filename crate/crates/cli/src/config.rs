//! Experiment configuration: an optional JSON file whose values are overridden
//! by command-line flags.
//!
//! The file holds global keys (`seed`, `threads`, `out_dir`) and one object per
//! subcommand:
//!
//! ```json
//! { "seed": 7, "scheme": { "preset": "pme", "mesh": 16, "n": 2000 } }
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Failure;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HIPSTER_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "hipster-out";

#[derive(Debug, Default)]
pub struct ConfigFile {
    root: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(root)) => Ok(Self { root }),
            Ok(_) => Err(Failure::Config(format!("{}: expected a JSON object", path.display()))),
            Err(e) => Err(Failure::Config(format!("{}: {e}", path.display()))),
        }
    }

    fn global<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.root
            .get(key)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| Failure::Config(format!("`{key}`: {e}"))))
            .transpose()
    }

    /// Merges the flags given on the command line over the file section for
    /// `command` and deserializes the result.
    pub fn resolve<F: Serialize, P: DeserializeOwned>(&self, command: &str, flags: &F) -> Result<P, Failure> {
        let mut section = match self.root.get(command) {
            Some(Value::Object(m)) => m.clone(),
            Some(_) => return Err(Failure::Config(format!("`{command}` section must be an object"))),
            None => Map::new(),
        };
        let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") else {
            unreachable!("flag structs serialize to objects")
        };
        section.extend(given);
        serde_json::from_value(Value::Object(section)).map_err(|e| Failure::Config(format!("{command}: {e}")))
    }
}

/// Settings shared by every subcommand.
#[derive(Debug, Clone, Serialize)]
pub struct Globals {
    pub seed: u64,
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl Globals {
    /// Precedence: flag, then config file, then the environment, then the default.
    pub fn resolve(
        file: &ConfigFile,
        seed: Option<u64>,
        threads: Option<usize>,
        out_dir: Option<PathBuf>,
    ) -> Result<Self, Failure> {
        let seed = match seed {
            Some(s) => s,
            None => file.global("seed")?.unwrap_or(0),
        };
        let threads = match threads {
            Some(t) => Some(t),
            None => file.global("threads")?,
        };
        if threads == Some(0) {
            return Err(Failure::Config("threads must be at least 1".into()));
        }
        let out_dir = match out_dir {
            Some(d) => d,
            None => match file.global::<PathBuf>("out_dir")? {
                Some(d) => d,
                None => std::env::var_os(OUT_DIR_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| DEFAULT_OUT_DIR.into()),
            },
        };
        Ok(Self { seed, threads, out_dir })
    }
}

/// Step distribution written as `step:weight,step:weight`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Steps(pub Vec<(i64, f64)>);

impl FromStr for Steps {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|atom| {
                let (step, weight) = atom
                    .split_once(':')
                    .ok_or_else(|| format!("expected step:weight, got `{atom}`"))?;
                let step = step.trim().parse().map_err(|e| format!("step `{step}`: {e}"))?;
                let weight = weight.trim().parse().map_err(|e| format!("weight `{weight}`: {e}"))?;
                Ok((step, weight))
            })
            .collect::<Result<_, _>>()
            .map(Steps)
    }
}
