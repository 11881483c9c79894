//! MDP and environment abstractions shared by the agents and the convergence lab.
//!
//! Continuous-control tasks implement [`Environment`] and exchange real-valued
//! state and action vectors. Finite MDPs are described explicitly by
//! [`FiniteMdp`], with transition and reward tensors indexed `[s][a][s']`.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Observation vector of a continuous environment.
pub type StateVec = Vec<f64>;
/// Action vector of a continuous environment.
pub type ActionVec = Vec<f64>;

/// Tolerance on transition-row sums.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("action dimension {got} does not match environment dimension {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("action[{dim}] = {value} outside bounds [{low}, {high}]")]
    ActionOutOfBounds {
        dim: usize,
        value: f64,
        low: f64,
        high: f64,
    },
    #[error("action index {0} out of range")]
    ActionIndex(usize),
    #[error("environment stepped before reset")]
    NotReset,
    #[error("environment stepped after termination")]
    AlreadyTerminated,
}

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid MDP: {0:?}")]
    Invalid(Vec<MdpViolation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-dimension closed interval of admissible actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        assert_eq!(low.len(), high.len(), "bounds dimension mismatch");
        assert!(
            low.iter().zip(&high).all(|(l, h)| l.is_finite() && h.is_finite() && l < h),
            "bounds must be finite and non-empty"
        );
        Self { low, high }
    }

    pub fn symmetric(dim: usize, bound: f64) -> Self {
        Self::new(vec![-bound; dim], vec![bound; dim])
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn check(&self, action: &[f64]) -> Result<(), EnvError> {
        if action.len() != self.dim() {
            return Err(EnvError::ActionDimension {
                expected: self.dim(),
                got: action.len(),
            });
        }
        for (dim, ((&value, &low), &high)) in action.iter().zip(&self.low).zip(&self.high).enumerate() {
            if !(value >= low && value <= high) {
                return Err(EnvError::ActionOutOfBounds { dim, value, low, high });
            }
        }
        Ok(())
    }

    pub fn clip(&self, action: &mut [f64]) {
        for ((a, &low), &high) in action.iter_mut().zip(&self.low).zip(&self.high) {
            *a = a.clamp(low, high);
        }
    }

    /// Centre and half-width of each dimension.
    pub fn affine(&self) -> (Vec<f64>, Vec<f64>) {
        let center = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect();
        let half = self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (h - l)).collect();
        (center, half)
    }
}

/// One environment step `(s, a, r, s', terminated)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateVec,
    pub action: ActionVec,
    pub reward: f64,
    pub next_state: StateVec,
    pub terminated: bool,
}

/// A continuous-state, continuous-action episodic environment.
///
/// `terminated` in a returned [`Transition`] marks genuine termination only.
/// Time-limit truncation is the caller's business (see
/// [`Environment::max_episode_steps`]).
pub trait Environment {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn action_bounds(&self) -> &ActionBounds;
    /// Largest absolute reward the environment can emit.
    fn reward_bound(&self) -> f64;
    fn max_episode_steps(&self) -> Option<usize>;
    fn reset(&mut self, seed: u64) -> StateVec;
    fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError>;
}

/// Contract breaches reported by [`FiniteMdp::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum MdpViolation {
    EmptySpace { num_states: usize, num_actions: usize },
    TensorShape { expected: usize, trans_prob: usize, reward: usize },
    NegativeProbability { state: usize, action: usize, next: usize, prob: f64 },
    NonFiniteProbability { state: usize, action: usize, next: usize },
    RowSum { state: usize, action: usize, sum: f64 },
    NonFiniteReward { state: usize, action: usize, next: usize },
    RewardExceedsBound { state: usize, action: usize, next: usize, reward: f64, bound: f64 },
    Discount { gamma: f64 },
    TerminalOutOfRange { state: usize },
}

impl fmt::Display for MdpViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MdpViolation::EmptySpace { num_states, num_actions } => {
                write!(f, "empty space: {num_states} states, {num_actions} actions")
            }
            MdpViolation::TensorShape { expected, trans_prob, reward } => write!(
                f,
                "tensor shape: expected {expected} entries, got P={trans_prob} R={reward}"
            ),
            MdpViolation::NegativeProbability { state, action, next, prob } => {
                write!(f, "P[{state}][{action}][{next}] = {prob} < 0")
            }
            MdpViolation::NonFiniteProbability { state, action, next } => {
                write!(f, "P[{state}][{action}][{next}] not finite")
            }
            MdpViolation::RowSum { state, action, sum } => {
                write!(f, "row ({state}, {action}) sums to {sum}")
            }
            MdpViolation::NonFiniteReward { state, action, next } => {
                write!(f, "R[{state}][{action}][{next}] not finite")
            }
            MdpViolation::RewardExceedsBound { state, action, next, reward, bound } => {
                write!(f, "|R[{state}][{action}][{next}]| = {} exceeds {bound}", reward.abs())
            }
            MdpViolation::Discount { gamma } => write!(f, "discount {gamma} outside (0, 1)"),
            MdpViolation::TerminalOutOfRange { state } => {
                write!(f, "terminal state {state} out of range")
            }
        }
    }
}

/// Explicit finite MDP `(S, A, P, R, γ)` with rewards on `(s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMdp {
    pub num_states: usize,
    pub num_actions: usize,
    /// Flattened `P[s][a][s']`.
    pub trans_prob: Vec<f64>,
    /// Flattened `R[s][a][s']`.
    pub reward: Vec<f64>,
    pub discount: f64,
    pub terminal_states: BTreeSet<usize>,
    /// Declared bound on `|R|`, when one is known.
    pub reward_bound: Option<f64>,
}

impl FiniteMdp {
    /// All-zero tensors; rows must be filled before the MDP validates.
    pub fn new(num_states: usize, num_actions: usize, discount: f64) -> Self {
        let n = num_states * num_actions * num_states;
        Self {
            num_states,
            num_actions,
            trans_prob: vec![0.0; n],
            reward: vec![0.0; n],
            discount,
            terminal_states: BTreeSet::new(),
            reward_bound: None,
        }
    }

    #[inline]
    pub fn index(&self, s: usize, a: usize, next: usize) -> usize {
        (s * self.num_actions + a) * self.num_states + next
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.trans_prob[self.index(s, a, next)]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward[self.index(s, a, next)]
    }

    pub fn set(&mut self, s: usize, a: usize, next: usize, prob: f64, reward: f64) {
        let i = self.index(s, a, next);
        self.trans_prob[i] = prob;
        self.reward[i] = reward;
    }

    /// `P[s][a][·]` as a slice.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.index(s, a, 0);
        &self.trans_prob[start..start + self.num_states]
    }

    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.index(s, a, 0);
        &self.reward[start..start + self.num_states]
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_states.contains(&s)
    }

    /// Expected immediate reward `Σ_{s'} P(s'|s,a) R(s,a,s')`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.row(s, a).iter().zip(self.reward_row(s, a)).map(|(p, r)| p * r).sum()
    }

    /// Largest `|R|` over all entries.
    pub fn max_abs_reward(&self) -> f64 {
        self.reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()))
    }

    /// Returns every broken invariant; empty iff the MDP is well formed.
    pub fn validate(&self) -> Vec<MdpViolation> {
        let mut out = Vec::new();
        if self.num_states == 0 || self.num_actions == 0 {
            out.push(MdpViolation::EmptySpace {
                num_states: self.num_states,
                num_actions: self.num_actions,
            });
            return out;
        }
        let expected = self.num_states * self.num_actions * self.num_states;
        if self.trans_prob.len() != expected || self.reward.len() != expected {
            out.push(MdpViolation::TensorShape {
                expected,
                trans_prob: self.trans_prob.len(),
                reward: self.reward.len(),
            });
            return out;
        }
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let mut sum = 0.0;
                for next in 0..self.num_states {
                    let p = self.prob(s, a, next);
                    let r = self.reward(s, a, next);
                    if !p.is_finite() {
                        out.push(MdpViolation::NonFiniteProbability { state: s, action: a, next });
                    } else if p < 0.0 {
                        out.push(MdpViolation::NegativeProbability { state: s, action: a, next, prob: p });
                    }
                    if !r.is_finite() {
                        out.push(MdpViolation::NonFiniteReward { state: s, action: a, next });
                    } else if let Some(bound) = self.reward_bound {
                        if r.abs() > bound {
                            out.push(MdpViolation::RewardExceedsBound {
                                state: s,
                                action: a,
                                next,
                                reward: r,
                                bound,
                            });
                        }
                    }
                    sum += p;
                }
                if !((sum - 1.0).abs() <= PROBABILITY_TOLERANCE) {
                    out.push(MdpViolation::RowSum { state: s, action: a, sum });
                }
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            out.push(MdpViolation::Discount { gamma: self.discount });
        }
        for &t in &self.terminal_states {
            if t >= self.num_states {
                out.push(MdpViolation::TerminalOutOfRange { state: t });
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<(), MdpError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    /// Parses the text format
    ///
    /// ```text
    /// states 2 actions 1 gamma 0.5
    /// 0 0 1 1 1.0
    /// 1 0 1 1 0.0
    /// terminal: 1
    /// ```
    ///
    /// with one `s a s' prob reward` line per nonzero transition. Blank lines
    /// and `#` comments are ignored. The parsed MDP is validated.
    pub fn parse(text: &str) -> Result<Self, MdpError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines.next().ok_or(MdpError::Parse {
            line: 0,
            message: "missing header".into(),
        })?;
        let htok: Vec<&str> = header.split_whitespace().collect();
        if htok.len() != 6 || htok[0] != "states" || htok[2] != "actions" || htok[4] != "gamma" {
            return Err(MdpError::Parse {
                line: hline,
                message: "expected `states A actions B gamma G`".into(),
            });
        }
        let num_states: usize = parse_field(htok[1], hline, "states")?;
        let num_actions: usize = parse_field(htok[3], hline, "actions")?;
        let gamma: f64 = parse_field(htok[5], hline, "gamma")?;
        if num_states == 0 || num_actions == 0 {
            return Err(MdpError::Parse {
                line: hline,
                message: "state and action counts must be positive".into(),
            });
        }
        let mut mdp = FiniteMdp::new(num_states, num_actions, gamma);
        let mut seen = vec![false; mdp.trans_prob.len()];
        let mut saw_terminal = false;
        for (line, content) in lines {
            if saw_terminal {
                return Err(MdpError::Parse {
                    line,
                    message: "content after `terminal:` line".into(),
                });
            }
            if let Some(rest) = content.strip_prefix("terminal:") {
                for tok in rest.split_whitespace() {
                    let t: usize = parse_field(tok, line, "terminal state")?;
                    if t >= num_states {
                        return Err(MdpError::Parse {
                            line,
                            message: format!("terminal state {t} out of range"),
                        });
                    }
                    mdp.terminal_states.insert(t);
                }
                saw_terminal = true;
                continue;
            }
            let tok: Vec<&str> = content.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(MdpError::Parse {
                    line,
                    message: "expected `s a s' prob reward`".into(),
                });
            }
            let s: usize = parse_field(tok[0], line, "s")?;
            let a: usize = parse_field(tok[1], line, "a")?;
            let next: usize = parse_field(tok[2], line, "s'")?;
            let p: f64 = parse_field(tok[3], line, "prob")?;
            let r: f64 = parse_field(tok[4], line, "reward")?;
            if s >= num_states || a >= num_actions || next >= num_states {
                return Err(MdpError::Parse {
                    line,
                    message: format!("index ({s}, {a}, {next}) out of range"),
                });
            }
            let i = mdp.index(s, a, next);
            if seen[i] {
                return Err(MdpError::Parse {
                    line,
                    message: format!("duplicate transition ({s}, {a}, {next})"),
                });
            }
            seen[i] = true;
            mdp.set(s, a, next, p, r);
        }
        mdp.ensure_valid()?;
        Ok(mdp)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Serializes to the text format accepted by [`FiniteMdp::parse`].
    /// Floats use shortest round-trip formatting, so parse(to_text(m)) == m.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "states {} actions {} gamma {}\n",
            self.num_states, self.num_actions, self.discount
        );
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                for next in 0..self.num_states {
                    let p = self.prob(s, a, next);
                    if p != 0.0 {
                        out.push_str(&format!("{s} {a} {next} {p} {}\n", self.reward(s, a, next)));
                    }
                }
            }
        }
        if !self.terminal_states.is_empty() {
            let list: Vec<String> = self.terminal_states.iter().map(|t| t.to_string()).collect();
            out.push_str(&format!("terminal: {}\n", list.join(" ")));
        }
        out
    }
}

fn parse_field<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, MdpError> {
    tok.parse().map_err(|_| MdpError::Parse {
        line,
        message: format!("bad {what}: `{tok}`"),
    })
}

/// `Σ_t γ^t r_t` over an episode, together with the discount it used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeReturn {
    pub value: f64,
    pub discount_used: f64,
}

/// Discounted return with `t` starting at zero; `γ = 1` is allowed here.
pub fn episode_return(rewards: &[f64], gamma: f64) -> EpisodeReturn {
    let mut value = 0.0;
    let mut weight = 1.0;
    for &r in rewards {
        value += weight * r;
        weight *= gamma;
    }
    EpisodeReturn {
        value,
        discount_used: gamma,
    }
}

/// A transition of a finite MDP, with integer state and action indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteTransition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub terminated: bool,
}

/// Sampling interface over a [`FiniteMdp`]. Episodes start in `start_state`.
#[derive(Debug, Clone)]
pub struct FiniteMdpEnv {
    mdp: FiniteMdp,
    start_state: usize,
    state: Option<usize>,
    rng: ChaCha8Rng,
}

impl FiniteMdpEnv {
    pub fn new(mdp: FiniteMdp, start_state: usize) -> Result<Self, MdpError> {
        mdp.ensure_valid()?;
        assert!(start_state < mdp.num_states, "start state out of range");
        Ok(Self {
            mdp,
            start_state,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn mdp(&self) -> &FiniteMdp {
        &self.mdp
    }

    pub fn state(&self) -> Option<usize> {
        self.state
    }

    pub fn reset(&mut self, seed: u64) -> usize {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = Some(self.start_state);
        self.start_state
    }

    pub fn step(&mut self, action: usize) -> Result<FiniteTransition, EnvError> {
        let s = self.state.ok_or(EnvError::NotReset)?;
        if action >= self.mdp.num_actions {
            return Err(EnvError::ActionIndex(action));
        }
        if self.mdp.is_terminal(s) {
            return Err(EnvError::AlreadyTerminated);
        }
        let next = sample_index(self.mdp.row(s, action), &mut self.rng);
        let reward = self.mdp.reward(s, action, next);
        self.state = Some(next);
        Ok(FiniteTransition {
            state: s,
            action,
            reward,
            next_state: next,
            terminated: self.mdp.is_terminal(next),
        })
    }
}

/// Draws an index from a probability row by inversion.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}
