//! Run configuration from flags, a `key = value` file and the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use sector_dmrg::dmrg::{DmrgConfig, SweepSchedule};
use sector_dmrg::model::ModelSpec;
use sector_dmrg::QuantumNumber;
use thiserror::Error;

pub const WORKERS_ENV: &str = "SECTOR_DMRG_WORKERS";
pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_ARENA_BYTES: u64 = 1 << 30;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value for {key}: `{value}`")]
    Value { key: String, value: String },
    #[error("{0}")]
    Invalid(String),
}

const KEYS: &[&str] = &[
    "model", "n", "j", "t", "u", "integrals", "d", "sweeps", "workers", "arena_bytes", "seed", "out", "checkpoint",
    "resume", "target",
];

/// Parses `key = value` lines; `#` starts a comment, dashes in keys are
/// read as underscores.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: "expected `key = value`".into() })?;
        let key = k.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

pub fn load_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    parse_config_text(&text)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModelKind {
    Heisenberg,
    Hubbard,
    File,
}

/// Flags shared by `solve` and `bench-sweep`. Unset flags fall back to the
/// config file, then to defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct RunArgs {
    /// `key = value` file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Number of sites (spins or spatial orbitals).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub j: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub u: Option<f64>,
    #[arg(long)]
    pub integrals: Option<PathBuf>,
    /// Bond dimension.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Defaults to $SECTOR_DMRG_WORKERS, then 1.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Per-worker arena size in bytes.
    #[arg(long)]
    pub arena_bytes: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target quantum number `a` or `a,b` (particles, 2Sz for fermions;
    /// 2Sz for spins).
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Continue from the checkpoint file.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub target: Option<QuantumNumber>,
    pub schedule: SweepSchedule,
    pub workers: usize,
    pub arena_bytes: u64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
}

impl RunConfig {
    pub fn dmrg_config(&self) -> DmrgConfig {
        DmrgConfig {
            workers: self.workers,
            seed: self.seed,
            arena_capacity: (self.arena_bytes / 8) as usize,
            target: self.target,
            checkpoint: self.checkpoint.clone(),
        }
    }
}

fn parse_target(s: &str) -> Option<QuantumNumber> {
    let parts: Vec<i32> = s.split(',').map(|p| p.trim().parse().ok()).collect::<Option<_>>()?;
    match parts[..] {
        [a] => Some(QuantumNumber::scalar(a)),
        [a, b] => Some(QuantumNumber::new(a, b)),
        _ => None,
    }
}

struct Merged<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Merged<'_> {
    fn get<T: std::str::FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, ConfigError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::Value { key: key.into(), value: v.clone() }),
        }
    }
}

fn positive(key: &str, v: usize) -> Result<usize, ConfigError> {
    if v == 0 {
        return Err(ConfigError::Value { key: key.into(), value: "0".into() });
    }
    Ok(v)
}

/// Flags override the file, the file overrides `env_workers` and defaults.
pub fn resolve(args: &RunArgs, env_workers: Option<&str>) -> Result<RunConfig, ConfigError> {
    let file = match &args.config {
        Some(p) => load_config_file(p)?,
        None => BTreeMap::new(),
    };
    let m = Merged { file: &file };
    let kind = match (args.model, file.get("model")) {
        (Some(k), _) => k,
        (None, None) => ModelKind::Heisenberg,
        (None, Some(v)) => match v.as_str() {
            "heisenberg" => ModelKind::Heisenberg,
            "hubbard" => ModelKind::Hubbard,
            "file" => ModelKind::File,
            _ => return Err(ConfigError::Value { key: "model".into(), value: v.clone() }),
        },
    };
    let n = m.get(args.n, "n")?;
    let need_n = || n.ok_or_else(|| ConfigError::Invalid("--n is required for this model".into()));
    let model = match kind {
        ModelKind::Heisenberg => ModelSpec::Heisenberg { n: need_n()?, j: m.get(args.j, "j")?.unwrap_or(1.0) },
        ModelKind::Hubbard => ModelSpec::Hubbard {
            n: need_n()?,
            t: m.get(args.t, "t")?.unwrap_or(1.0),
            u: m.get(args.u, "u")?.unwrap_or(4.0),
        },
        ModelKind::File => ModelSpec::IntegralFile {
            path: m
                .get(args.integrals.clone(), "integrals")?
                .ok_or_else(|| ConfigError::Invalid("--integrals is required for --model file".into()))?,
        },
    };
    let target = match m.get(args.target.clone(), "target")? {
        None => None,
        Some(s) => Some(parse_target(&s).ok_or(ConfigError::Value { key: "target".into(), value: s })?),
    };
    let d = positive("d", m.get(args.d, "d")?.unwrap_or(64))?;
    let sweeps = m.get(args.sweeps, "sweeps")?.unwrap_or(3);
    let env = match env_workers {
        Some(v) => Some(v.trim().parse().map_err(|_| ConfigError::Value { key: WORKERS_ENV.into(), value: v.into() })?),
        None => None,
    };
    let workers = positive("workers", m.get(args.workers, "workers")?.or(env).unwrap_or(1))?;
    let arena_bytes = m.get(args.arena_bytes, "arena_bytes")?.unwrap_or(DEFAULT_ARENA_BYTES);
    if arena_bytes < 8 {
        return Err(ConfigError::Value { key: "arena_bytes".into(), value: arena_bytes.to_string() });
    }
    let resume = args.resume || m.get(None, "resume")?.unwrap_or(false);
    let checkpoint = m.get(args.checkpoint.clone(), "checkpoint")?;
    if resume && checkpoint.is_none() {
        return Err(ConfigError::Invalid("--resume needs --checkpoint".into()));
    }
    Ok(RunConfig {
        model,
        target,
        schedule: SweepSchedule::constant(sweeps, d),
        workers,
        arena_bytes,
        seed: m.get(args.seed, "seed")?.unwrap_or(DEFAULT_SEED),
        out: m.get(args.out.clone(), "out")?,
        checkpoint,
        resume,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_flag_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "# run\nmodel = hubbard\nn = 6\nu = 8 # strong\nd = 32\nworkers = 3\n").unwrap();
        let args = RunArgs { config: Some(path), d: Some(16), ..RunArgs::default() };
        let c = resolve(&args, Some("7")).unwrap();
        assert_eq!(c.model, ModelSpec::Hubbard { n: 6, t: 1.0, u: 8.0 });
        assert_eq!(c.schedule.bond_dim(0), 16);
        assert_eq!(c.workers, 3);
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn environment_is_the_worker_fallback() {
        let args = RunArgs { n: Some(4), ..RunArgs::default() };
        assert_eq!(resolve(&args, Some("5")).unwrap().workers, 5);
        assert_eq!(resolve(&args, None).unwrap().workers, 1);
        assert!(resolve(&args, Some("many")).is_err());
    }

    #[test]
    fn invalid_settings() {
        assert!(parse_config_text("bogus = 1").is_err());
        assert!(parse_config_text("n 4").is_err());
        assert!(resolve(&RunArgs::default(), None).is_err());
        let zero = RunArgs { n: Some(4), d: Some(0), ..RunArgs::default() };
        assert!(resolve(&zero, None).is_err());
        let resume = RunArgs { n: Some(4), resume: true, ..RunArgs::default() };
        assert!(resolve(&resume, None).is_err());
        let file = RunArgs { model: Some(ModelKind::File), ..RunArgs::default() };
        assert!(resolve(&file, None).is_err());
    }

    #[test]
    fn targets() {
        assert_eq!(parse_target("2"), Some(QuantumNumber::scalar(2)));
        assert_eq!(parse_target("6, -2"), Some(QuantumNumber::new(6, -2)));
        assert_eq!(parse_target("1,2,3"), None);
    }
}
