use std::fmt;
use std::str::FromStr;

use crate::buffer::DEFAULT_CAPACITY;
use crate::targets::{ActionMode, Entropy, TargetKind, TargetSpec};

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Ddpg,
    Mpddpg,
    Msddpg,
    Sac,
    Mpsac,
    Mssac,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Ddpg,
    Sac,
}

impl Algo {
    pub const ALL: [Algo; 6] = [Algo::Ddpg, Algo::Mpddpg, Algo::Msddpg, Algo::Sac, Algo::Mpsac, Algo::Mssac];

    pub fn family(self) -> Family {
        match self {
            Algo::Ddpg | Algo::Mpddpg | Algo::Msddpg => Family::Ddpg,
            Algo::Sac | Algo::Mpsac | Algo::Mssac => Family::Sac,
        }
    }

    pub fn target_kind(self) -> TargetKind {
        match self {
            Algo::Ddpg | Algo::Sac => TargetKind::SingleStep,
            Algo::Mpddpg | Algo::Mpsac => TargetKind::MultiStep,
            Algo::Msddpg | Algo::Mssac => TargetKind::MultiState,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algo::Ddpg => "ddpg",
            Algo::Mpddpg => "mpddpg",
            Algo::Msddpg => "msddpg",
            Algo::Sac => "sac",
            Algo::Mpsac => "mpsac",
            Algo::Mssac => "mssac",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = AgentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| AgentError::Config(format!("unknown algorithm '{s}'")))
    }
}

pub fn parse_action_mode(s: &str) -> Result<ActionMode, AgentError> {
    match s.to_ascii_lowercase().as_str() {
        "loaded" | "al" => Ok(ActionMode::Loaded),
        "generated" | "ag" => Ok(ActionMode::Generated),
        _ => Err(AgentError::Config(format!("unknown action mode '{s}'"))),
    }
}

pub fn action_mode_name(mode: ActionMode) -> &'static str {
    match mode {
        ActionMode::Loaded => "loaded",
        ActionMode::Generated => "generated",
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    pub mu: f64,
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        Self {
            mu: 0.0,
            theta: 0.2,
            sigma: 0.3,
            dt: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub algo: Algo,
    /// Only consulted by the multi-state algorithms.
    pub action_mode: ActionMode,
    /// Window length `L`; the plain single-step algorithms always use 1.
    pub horizon: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr: f64,
    /// Fixed entropy coefficient of the SAC family.
    pub alpha: f64,
    pub ou: OuParams,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    /// Minimum buffer size before updates start; never below `batch_size`.
    pub warmup: usize,
}

impl AgentConfig {
    /// Defaults for `algo` with `L = 1`.
    pub fn new(algo: Algo) -> Self {
        let lr = match algo.family() {
            Family::Ddpg => 3e-4,
            Family::Sac => 4e-4,
        };
        Self {
            algo,
            action_mode: ActionMode::Loaded,
            horizon: 1,
            gamma: 0.99,
            tau: 0.005,
            batch_size: 128,
            lr,
            alpha: 0.12,
            ou: OuParams::default(),
            hidden: vec![256, 256],
            buffer_capacity: DEFAULT_CAPACITY,
            warmup: 128,
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_mode(mut self, mode: ActionMode) -> Self {
        self.action_mode = mode;
        self
    }

    pub fn effective_horizon(&self) -> usize {
        match self.algo.target_kind() {
            TargetKind::SingleStep => 1,
            _ => self.horizon,
        }
    }

    pub fn warmup_len(&self) -> usize {
        self.warmup.max(self.batch_size)
    }

    pub fn target_spec(&self) -> Result<TargetSpec, AgentError> {
        let entropy = match self.algo.family() {
            Family::Ddpg => Entropy::None,
            Family::Sac => Entropy::Soft(self.alpha),
        };
        Ok(TargetSpec::new(
            self.algo.target_kind(),
            self.effective_horizon(),
            self.action_mode,
            entropy,
            self.gamma,
        )?)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |field: &str, msg: String| Err(AgentError::Config(format!("{field}: {msg}")));
        if self.horizon == 0 {
            return bad("L", "must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma", format!("{} outside (0, 1)", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau", format!("{} outside (0, 1]", self.tau));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("{} must be positive", self.lr));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha", format!("{} must be non-negative", self.alpha));
        }
        if !(self.ou.theta.is_finite() && self.ou.sigma >= 0.0 && self.ou.dt > 0.0) {
            return bad("ou", format!("invalid parameters {:?}", self.ou));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden", format!("{:?} must be non-empty positive widths", self.hidden));
        }
        if self.buffer_capacity < self.batch_size {
            return bad("buffer_capacity", format!("{} smaller than batch size {}", self.buffer_capacity, self.batch_size));
        }
        self.target_spec().map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_family() {
        let d = AgentConfig::new(Algo::Msddpg);
        assert_eq!((d.lr, d.tau, d.batch_size, d.gamma), (3e-4, 0.005, 128, 0.99));
        assert_eq!(AgentConfig::new(Algo::Mssac).lr, 4e-4);
        assert_eq!(d.hidden, vec![256, 256]);
        d.validate().unwrap();
    }

    #[test]
    fn plain_algorithms_ignore_horizon() {
        let c = AgentConfig::new(Algo::Ddpg).with_horizon(3);
        assert_eq!(c.effective_horizon(), 1);
        assert_eq!(c.target_spec().unwrap().kind, TargetKind::SingleStep);
        c.validate().unwrap();
    }

    #[test]
    fn parse_names() {
        assert_eq!("MSSAC".parse::<Algo>().unwrap(), Algo::Mssac);
        assert!("td3".parse::<Algo>().is_err());
        assert_eq!(parse_action_mode("generated").unwrap(), ActionMode::Generated);
        assert!(parse_action_mode("both").is_err());
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut c = AgentConfig::new(Algo::Msddpg);
        c.horizon = 0;
        assert!(c.validate().unwrap_err().to_string().contains("L"));
        let mut c = AgentConfig::new(Algo::Sac);
        c.tau = 0.0;
        assert!(c.validate().unwrap_err().to_string().contains("tau"));
    }
}
