use std::path::{Path, PathBuf};

use serde::Deserialize;

/// A scalar or a list in a config file; sweeps take lists, other commands a
/// single value.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(xs) => xs.clone(),
        }
    }
}

/// Keys accepted in a `--config` file. Flags given on the command line win.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    pub gamma: Option<OneOrMany<f64>>,
    pub dim: Option<OneOrMany<usize>>,
    #[serde(alias = "n_states")]
    pub nstates: Option<OneOrMany<usize>>,
    #[serde(alias = "grid-n")]
    pub grid_n: Option<usize>,
    #[serde(rename = "box")]
    pub box_size: Option<f64>,
    #[serde(alias = "l_max")]
    pub lmax: Option<usize>,
    pub eta: Option<f64>,
    #[serde(alias = "max-iter")]
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub init: Option<String>,
    pub betas: Option<Vec<f64>>,
    pub shifts: Option<Vec<f64>>,
    pub normalize: Option<bool>,
    pub potential: Option<String>,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub quick: Option<bool>,
}

impl FileConfig {
    /// Reads a TOML file, or JSON when the extension is `.json`.
    pub fn load(path: Option<&Path>, command: &str) -> Result<Self, String> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
        let cfg: FileConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        } else {
            toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?
        };
        if let Some(c) = &cfg.command {
            if c != command {
                return Err(format!("config file is for '{c}', not '{command}'"));
            }
        }
        Ok(cfg)
    }
}

/// The single value of a file entry that may hold a list.
pub fn single<T: Clone>(entry: &Option<OneOrMany<T>>, name: &str) -> Result<Option<T>, String> {
    match entry {
        None => Ok(None),
        Some(v) => match v.to_vec().as_slice() {
            [x] => Ok(Some(x.clone())),
            _ => Err(format!("'{name}' takes a single value for this command")),
        },
    }
}

/// Output directory: the flag, then the config file, then `$LTLAB_OUTPUT_DIR/<command>`.
pub fn output_dir(flag: &Option<PathBuf>, file: &FileConfig, command: &str) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| file.output.clone())
        .or_else(|| std::env::var_os("LTLAB_OUTPUT_DIR").map(|root| PathBuf::from(root).join(command)))
}
