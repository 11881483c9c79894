use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::agents::{action_mode_name, parse_action_mode, AgentConfig, Algo};
use crate::envs::{make_env, ENV_NAMES};
use crate::targets::ActionMode;

use super::HarnessError;

const SECTIONS: &[&str] = &["experiment", "agent", "ou", "sweep"];

/// Flat `key -> (value, origin line)` view of a config file plus overrides.
/// Keys in the `[ou]` section are stored with an `ou_` prefix; a key may
/// appear at most once per source.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, (String, Option<usize>)>,
}

impl RawConfig {
    /// Parses `key = value` lines with optional `[section]` headers. Blank
    /// lines and lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut entries = BTreeMap::new();
        let mut section = "experiment".to_string();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| HarnessError::ConfigSyntax {
                        line: line_no,
                        message: "unterminated section header".into(),
                    })?
                    .trim()
                    .to_ascii_lowercase();
                if !SECTIONS.contains(&name.as_str()) {
                    return Err(HarnessError::ConfigSyntax {
                        line: line_no,
                        message: format!("unknown section [{name}]"),
                    });
                }
                section = name;
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::ConfigSyntax {
                line: line_no,
                message: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(HarnessError::ConfigSyntax {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            let key = if section == "ou" { format!("ou_{key}") } else { key.to_string() };
            let key = canonical_key(&key);
            if entries.insert(key.clone(), (value.trim().to_string(), Some(line_no))).is_some() {
                return Err(HarnessError::ConfigSyntax {
                    line: line_no,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config {
            field: "config".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Sets `key`, replacing any file value.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(canonical_key(key), (value.into(), None));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn canonical_key(key: &str) -> String {
    let k = key.trim().to_ascii_lowercase().replace('-', "_");
    match k.as_str() {
        "l" | "horizon" => "L".into(),
        "seed" => "seeds".into(),
        "out_dir" | "output" => "out".into(),
        "action_mode" => "mode".into(),
        "batch" => "batch_size".into(),
        _ => k,
    }
}

const KNOWN_KEYS: &[&str] = &[
    "env",
    "algo",
    "mode",
    "L",
    "steps",
    "seeds",
    "out",
    "eval_every",
    "eval_episodes",
    "final_window",
    "gamma",
    "tau",
    "batch_size",
    "lr",
    "alpha",
    "hidden",
    "buffer_capacity",
    "warmup",
    "ou_mu",
    "ou_theta",
    "ou_sigma",
    "ou_dt",
    "horizons",
    "modes",
    "algos",
];

fn field_err(field: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(raw: &RawConfig, key: &str) -> Result<Option<T>, HarnessError> {
    raw.get(key)
        .map(|v| v.parse::<T>().map_err(|_| field_err(key, format!("cannot parse '{v}'"))))
        .transpose()
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, HarnessError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| field_err(key, format!("cannot parse '{s}'"))))
        .collect()
}

/// Everything needed to run one experiment over several seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub agent: AgentConfig,
    pub total_steps: u64,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Number of trailing evaluation episodes averaged into the final score.
    pub final_window: usize,
}

pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

impl ExperimentConfig {
    /// Reads an optional config file and applies `overrides` on top.
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, HarnessError> {
        let mut raw = match file {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        for (k, v) in overrides {
            raw.set(k, v.clone());
        }
        Self::from_raw(&raw)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, HarnessError> {
        if let Some(unknown) = raw.keys().find(|k| !KNOWN_KEYS.contains(k)) {
            return Err(field_err(unknown, "unknown key"));
        }
        let env = raw.get("env").ok_or_else(|| field_err("env", "missing"))?.to_ascii_lowercase();
        if make_env(&env).is_none() {
            return Err(field_err("env", format!("unknown environment '{env}' (known: {})", ENV_NAMES.join(", "))));
        }
        let algo: Algo = raw
            .get("algo")
            .ok_or_else(|| field_err("algo", "missing"))?
            .parse()
            .map_err(|e: crate::agents::AgentError| field_err("algo", e.to_string()))?;
        let mut agent = AgentConfig::new(algo);
        if let Some(m) = raw.get("mode") {
            agent.action_mode = parse_action_mode(m).map_err(|e| field_err("mode", e.to_string()))?;
        }
        if let Some(l) = parse_num::<usize>(raw, "L")? {
            agent.horizon = l;
        }
        macro_rules! set {
            ($key:literal, $ty:ty, $target:expr) => {
                if let Some(v) = parse_num::<$ty>(raw, $key)? {
                    $target = v;
                }
            };
        }
        set!("gamma", f64, agent.gamma);
        set!("tau", f64, agent.tau);
        set!("batch_size", usize, agent.batch_size);
        set!("lr", f64, agent.lr);
        set!("alpha", f64, agent.alpha);
        set!("buffer_capacity", usize, agent.buffer_capacity);
        set!("ou_mu", f64, agent.ou.mu);
        set!("ou_theta", f64, agent.ou.theta);
        set!("ou_sigma", f64, agent.ou.sigma);
        set!("ou_dt", f64, agent.ou.dt);
        agent.warmup = agent.batch_size;
        set!("warmup", usize, agent.warmup);
        if let Some(h) = raw.get("hidden") {
            agent.hidden = parse_list("hidden", h)?;
        }
        let seeds = match raw.get("seeds") {
            Some(s) => parse_list("seeds", s)?,
            None => DEFAULT_SEEDS.to_vec(),
        };
        let mut config = Self {
            env,
            agent,
            total_steps: 30_000,
            seeds,
            out_dir: raw.get("out").map_or_else(|| PathBuf::from("runs"), PathBuf::from),
            eval_every: 1000,
            eval_episodes: 5,
            final_window: 20,
        };
        set!("steps", u64, config.total_steps);
        set!("eval_every", u64, config.eval_every);
        set!("eval_episodes", usize, config.eval_episodes);
        set!("final_window", usize, config.final_window);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seeds.is_empty() {
            return Err(field_err("seeds", "at least one seed required"));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(field_err("seeds", format!("duplicate seeds in {:?}", self.seeds)));
        }
        if self.total_steps == 0 {
            return Err(field_err("steps", "must be positive"));
        }
        if self.final_window == 0 {
            return Err(field_err("final_window", "must be positive"));
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return Err(field_err("eval_episodes", "must be positive when evaluation is enabled"));
        }
        self.agent.validate().map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .strip_prefix("config error: ")
                .and_then(|m| m.split(':').next())
                .unwrap_or("agent")
                .to_string();
            field_err(&field, msg)
        })
    }

    /// Short label such as `msddpg-loaded-L3`.
    pub fn label(&self) -> String {
        let a = &self.agent;
        match a.algo.target_kind() {
            crate::targets::TargetKind::SingleStep => a.algo.to_string(),
            crate::targets::TargetKind::MultiStep => format!("{}-L{}", a.algo, a.horizon),
            crate::targets::TargetKind::MultiState => {
                format!("{}-{}-L{}", a.algo, action_mode_name(a.action_mode), a.horizon)
            }
        }
    }
}

/// The grid enumerated by a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub algos: Vec<Algo>,
    pub horizons: Vec<usize>,
    pub modes: Vec<ActionMode>,
}

impl SweepConfig {
    pub fn resolve(file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, HarnessError> {
        let mut raw = match file {
            Some(p) => RawConfig::load(p)?,
            None => RawConfig::default(),
        };
        for (k, v) in overrides {
            raw.set(k, v.clone());
        }
        let algos: Vec<Algo> = match raw.get("algos") {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|e: crate::agents::AgentError| field_err("algos", e.to_string())))
                .collect::<Result<_, _>>()?,
            None => vec![Algo::Ddpg, Algo::Mpddpg, Algo::Msddpg],
        };
        if algos.is_empty() {
            return Err(field_err("algos", "at least one algorithm required"));
        }
        let horizons = match raw.get("horizons") {
            Some(v) => parse_list("horizons", v)?,
            None => vec![2, 3, 4],
        };
        if horizons.is_empty() || horizons.contains(&0) {
            return Err(field_err("horizons", "need positive window lengths"));
        }
        let modes = match raw.get("modes") {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_action_mode(s).map_err(|e| field_err("modes", e.to_string())))
                .collect::<Result<_, _>>()?,
            None => vec![ActionMode::Loaded, ActionMode::Generated],
        };
        if raw.get("algo").is_none() {
            raw.set("algo", algos[0].name());
        }
        let base = ExperimentConfig::from_raw(&raw)?;
        Ok(Self {
            base,
            algos,
            horizons,
            modes,
        })
    }

    /// One experiment per grid cell, each writing under its own directory.
    /// Plain algorithms appear once; multi-step ones once per horizon; the
    /// multi-state ones once per horizon and mode.
    pub fn cells(&self) -> Result<Vec<ExperimentConfig>, HarnessError> {
        let mut out = Vec::new();
        for &algo in &self.algos {
            let mut agent = AgentConfig::new(algo);
            let base = &self.base.agent;
            agent.gamma = base.gamma;
            agent.tau = base.tau;
            agent.batch_size = base.batch_size;
            agent.warmup = base.warmup;
            agent.hidden = base.hidden.clone();
            agent.buffer_capacity = base.buffer_capacity;
            agent.ou = base.ou;
            agent.alpha = base.alpha;
            if base.algo.family() == algo.family() {
                agent.lr = base.lr;
            }
            let variants: Vec<(usize, ActionMode)> = match algo.target_kind() {
                crate::targets::TargetKind::SingleStep => vec![(1, ActionMode::Loaded)],
                crate::targets::TargetKind::MultiStep => self.horizons.iter().map(|&l| (l, ActionMode::Loaded)).collect(),
                crate::targets::TargetKind::MultiState => self
                    .horizons
                    .iter()
                    .flat_map(|&l| self.modes.iter().map(move |&m| (l, m)))
                    .collect(),
            };
            for (l, mode) in variants {
                let mut cfg = self.base.clone();
                cfg.agent = agent.clone().with_horizon(l).with_mode(mode);
                cfg.out_dir = self.base.out_dir.join(cfg.label());
                cfg.validate()?;
                out.push(cfg);
            }
        }
        Ok(out)
    }
}
