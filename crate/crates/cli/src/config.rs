//! Flat `key = value` run configuration.
//!
//! Blank lines and everything after `#` are ignored. Unknown keys are
//! rejected so that typos do not silently fall back to defaults. Relative
//! paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use fltp_core::selection::AlConfig;
use fltp_core::{FlConfig, GeneratorConfig, ModelDims, SelectionMetric, TrainHyper};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Local,
    Fltp,
    AlfltpNll,
    AlfltpAu,
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "local" => Ok(Mode::Local),
            "fltp" => Ok(Mode::Fltp),
            "alfltp-nll" => Ok(Mode::AlfltpNll),
            "alfltp-au" => Ok(Mode::AlfltpAu),
            other => Err(CliError::Config(format!(
                "unknown mode '{other}' (expected local, fltp, alfltp-nll or alfltp-au)"
            ))),
        }
    }
}

impl Mode {
    pub fn metric(self) -> Option<SelectionMetric> {
        match self {
            Mode::AlfltpNll => Some(SelectionMetric::Nll),
            Mode::AlfltpAu => Some(SelectionMetric::Au),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub dataset: PathBuf,
    pub validation: PathBuf,
    pub output_dir: PathBuf,
    pub generator: GeneratorConfig,
    pub validation_per_regime: usize,
    pub dims: ModelDims,
    pub fl: FlConfig,
    pub f2: Option<f64>,
    pub local_client: usize,
    /// Size of the worker pool; 0 uses the default pool.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Fltp,
            dataset: PathBuf::from("data.ftpd"),
            validation: PathBuf::from("validation.ftpd"),
            output_dir: PathBuf::from("out"),
            generator: GeneratorConfig::default(),
            validation_per_regime: 200,
            dims: ModelDims::default(),
            // Desk scale: 30 rounds, and a larger local step than TrainHyper::default().
            fl: FlConfig {
                rounds: 30,
                f1: 0.2,
                hyper: TrainHyper {
                    eta: 3e-3,
                    ..TrainHyper::default()
                },
                ..FlConfig::default()
            },
            f2: None,
            local_client: 0,
            workers: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("invalid value '{value}' for '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("invalid boolean '{value}' for '{key}'"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse_str(&text, base)
    }

    pub fn parse_str(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let resolve = |v: &str| {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        cfg.dataset = resolve("data.ftpd");
        cfg.validation = resolve("validation.ftpd");
        cfg.output_dir = resolve("out");

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let g = &mut cfg.generator;
            let h = &mut cfg.fl.hyper;
            match key {
                "mode" => cfg.mode = value.parse()?,
                "dataset" => cfg.dataset = resolve(value),
                "validation" => cfg.validation = resolve(value),
                "output_dir" => cfg.output_dir = resolve(value),
                "seed" => {
                    let s = parse(key, value)?;
                    g.seed = s;
                    cfg.fl.seed = s;
                }
                "num_clients" => g.num_clients = parse(key, value)?,
                "scenarios_per_client" => g.scenarios_per_client = parse(key, value)?,
                "agents_min" => g.agents_min = parse(key, value)?,
                "agents_max" => g.agents_max = parse(key, value)?,
                "dt" => g.dt = parse(key, value)?,
                "t_obs" => {
                    g.t_obs = parse(key, value)?;
                    cfg.dims.t_obs = g.t_obs;
                }
                "t_pre" => {
                    g.t_pre = parse(key, value)?;
                    cfg.dims.t_pre = g.t_pre;
                }
                "noise_sigma" => g.noise_sigma = parse(key, value)?,
                "speed_min" => g.speed_min = parse(key, value)?,
                "speed_max" => g.speed_max = parse(key, value)?,
                "max_turn_rate" => g.max_turn_rate = parse(key, value)?,
                "turn_probability" => g.turn_probability = parse(key, value)?,
                "validation_per_regime" => cfg.validation_per_regime = parse(key, value)?,
                "modes" => cfg.dims.modes = parse(key, value)?,
                "hidden" => cfg.dims.hidden = parse(key, value)?,
                "rounds" => cfg.fl.rounds = parse(key, value)?,
                "f1" => cfg.fl.f1 = parse(key, value)?,
                "f2" => cfg.f2 = Some(parse(key, value)?),
                "eval_every" => cfg.fl.eval_every = parse(key, value)?,
                "eta" => h.eta = parse(key, value)?,
                "weight_decay" => h.lambda = parse(key, value)?,
                "beta1" => h.beta1 = parse(key, value)?,
                "beta2" => h.beta2 = parse(key, value)?,
                "epsilon" => h.epsilon = parse(key, value)?,
                "batch_size" => h.batch_size = parse(key, value)?,
                "epochs" => h.epochs = parse(key, value)?,
                "literal_decay" => h.literal_decay = parse_bool(key, value)?,
                "local_client" => cfg.local_client = parse(key, value)?,
                "workers" => cfg.workers = parse(key, value)?,
                other => {
                    return Err(CliError::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn hyper(&self) -> &TrainHyper {
        &self.fl.hyper
    }

    /// Active-selection settings; requires `f2` and an `alfltp-*` mode.
    pub fn al_config(&self) -> Result<AlConfig, CliError> {
        let metric = self
            .mode
            .metric()
            .ok_or_else(|| CliError::Config("mode has no selection metric".into()))?;
        let f2 = self
            .f2
            .ok_or_else(|| CliError::Config("f2 is required for alfltp modes".into()))?;
        Ok(AlConfig {
            f2,
            metric,
            fl: self.fl.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys_comments_and_paths() {
        let text = "# desk run\nmode = alfltp-au\nf2 = 0.3  # candidates\nseed=9\nt_pre = 12\ndataset = d/x.ftpd\noutput_dir=/tmp/o\n\nliteral_decay = true\n";
        let cfg = RunConfig::parse_str(text, Path::new("/base")).unwrap();
        assert_eq!(cfg.mode, Mode::AlfltpAu);
        assert_eq!(cfg.f2, Some(0.3));
        assert_eq!(cfg.generator.seed, 9);
        assert_eq!(cfg.fl.seed, 9);
        assert_eq!(cfg.dims.t_pre, 12);
        assert_eq!(cfg.generator.t_pre, 12);
        assert_eq!(cfg.dataset, PathBuf::from("/base/d/x.ftpd"));
        assert_eq!(cfg.validation, PathBuf::from("/base/validation.ftpd"));
        assert_eq!(cfg.output_dir, PathBuf::from("/tmp/o"));
        assert!(cfg.fl.hyper.literal_decay);
        assert_eq!(cfg.al_config().unwrap().metric, SelectionMetric::Au);
    }

    #[test]
    fn desk_defaults() {
        let cfg = RunConfig::parse_str("", Path::new(".")).unwrap();
        assert_eq!(cfg.generator.num_clients, 20);
        assert_eq!(cfg.generator.scenarios_per_client, 100);
        assert_eq!(cfg.fl.rounds, 30);
        assert_eq!(cfg.fl.f1, 0.2);
        assert_eq!(cfg.dims, ModelDims::default());
        assert_eq!(cfg.fl.hyper.eta, 3e-3);
        assert_eq!(cfg.fl.hyper.batch_size, 32);
        assert_eq!(cfg.fl.hyper.epochs, 4);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::parse_str("roundz = 3", Path::new(".")).is_err());
        assert!(RunConfig::parse_str("rounds = many", Path::new(".")).is_err());
        assert!(RunConfig::parse_str("just text", Path::new(".")).is_err());
        assert!(RunConfig::parse_str("mode = fedprox", Path::new(".")).is_err());
    }

    #[test]
    fn alfltp_requires_f2() {
        let cfg = RunConfig::parse_str("mode = alfltp-nll", Path::new(".")).unwrap();
        assert!(cfg.al_config().is_err());
    }
}
