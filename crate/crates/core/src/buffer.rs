//! Multi-state replay buffer.
//!
//! Transitions are folded into fixed-length windows
//! `(S_0, A_0, R_1, ..., S_{L-1}, A_{L-1}, R_L, S_L)` by a sliding
//! [`WindowBuilder`]: every new transition is appended to the window and, once
//! `L` triplets are present, the window is emitted as a [`MultiStateSample`]
//! and its oldest triplet is dropped.
//!
//! When an episode genuinely terminates, [`WindowBuilder::finalize_episode`]
//! keeps appending copies of the termination tuple, flagged as padding, so the
//! last states of the episode still head a sample. A window whose first
//! triplet would be padding is not stored. Time-limit truncation instead
//! discards the incomplete window ([`WindowBuilder::truncate_episode`]).

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::Rng;
use thiserror::Error;

use crate::mdp::{ActionVec, StateVec, Transition};

#[derive(Debug, Error)]
pub enum BufferError {
    #[error("transition pushed after a terminal transition; finalize the episode first")]
    AwaitingFinalize,
    #[error("finalize_episode called but the last transition was not terminal")]
    NotTerminated,
    #[error("requested {requested} samples but the buffer holds {available}")]
    InsufficientData { requested: usize, available: usize },
    #[error("malformed sample: {0}")]
    Malformed(String),
    #[error("dump format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One stored window. `pad_flags[k]` marks triplet `k` as a replicated
/// termination tuple; `terminal` marks `S_L` as a terminal state.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiStateSample {
    pub states: Vec<StateVec>,
    pub actions: Vec<ActionVec>,
    pub rewards: Vec<f64>,
    pub pad_flags: Vec<bool>,
    pub terminal: bool,
}

impl MultiStateSample {
    pub fn horizon(&self) -> usize {
        self.rewards.len()
    }

    /// Number of leading real (unpadded) triplets.
    pub fn real_len(&self) -> usize {
        self.pad_flags.iter().take_while(|p| !**p).count()
    }

    pub fn is_padded(&self) -> bool {
        self.pad_flags.iter().any(|&p| p)
    }

    pub fn check(&self) -> Result<(), BufferError> {
        let l = self.rewards.len();
        if l == 0 {
            return Err(BufferError::Malformed("empty window".into()));
        }
        if self.states.len() != l + 1 || self.actions.len() != l || self.pad_flags.len() != l {
            return Err(BufferError::Malformed(format!(
                "lengths states={} actions={} rewards={} flags={}",
                self.states.len(),
                self.actions.len(),
                l,
                self.pad_flags.len()
            )));
        }
        if self.pad_flags[0] {
            return Err(BufferError::Malformed("first triplet is padding".into()));
        }
        if self.pad_flags.windows(2).any(|w| w[0] && !w[1]) {
            return Err(BufferError::Malformed("padding flags not monotone".into()));
        }
        if self.is_padded() && !self.terminal {
            return Err(BufferError::Malformed("padded window without terminal flag".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Triplet {
    state: StateVec,
    action: ActionVec,
    reward: f64,
    padded: bool,
}

/// Sliding-window assembler for the episode in progress.
#[derive(Debug, Clone)]
pub struct WindowBuilder {
    horizon: usize,
    window: VecDeque<Triplet>,
    next_state: Option<StateVec>,
    termination: Option<Transition>,
    pushed: usize,
}

impl WindowBuilder {
    pub fn new(horizon: usize) -> Self {
        assert!(horizon >= 1, "window length must be positive");
        Self {
            horizon,
            window: VecDeque::with_capacity(horizon),
            next_state: None,
            termination: None,
            pushed: 0,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Triplets currently held for the episode in progress.
    pub fn pending(&self) -> usize {
        self.window.len()
    }

    pub fn awaiting_finalize(&self) -> bool {
        self.termination.is_some()
    }

    /// Appends `t` and emits a sample once `L` triplets are available.
    /// Returns the number of samples stored (0 or 1).
    pub fn push_transition(&mut self, buffer: &mut RingBuffer, t: Transition) -> Result<usize, BufferError> {
        if self.termination.is_some() {
            return Err(BufferError::AwaitingFinalize);
        }
        self.window.push_back(Triplet {
            state: t.state.clone(),
            action: t.action.clone(),
            reward: t.reward,
            padded: false,
        });
        self.next_state = Some(t.next_state.clone());
        self.pushed += 1;
        let emitted = self.emit_if_full(buffer, t.terminated)?;
        if t.terminated {
            self.termination = Some(t);
        }
        Ok(emitted)
    }

    /// Pads the window with copies of the termination tuple until the last
    /// real triplet has headed a sample, then resets the builder.
    /// Returns the number of padded samples stored.
    pub fn finalize_episode(&mut self, buffer: &mut RingBuffer) -> Result<usize, BufferError> {
        let Some(term) = self.termination.take() else {
            if self.pushed == 0 {
                return Ok(0);
            }
            return Err(BufferError::NotTerminated);
        };
        let mut emitted = 0;
        loop {
            self.window.push_back(Triplet {
                state: term.state.clone(),
                action: term.action.clone(),
                reward: term.reward,
                padded: true,
            });
            if self.window.len() < self.horizon {
                continue;
            }
            if self.window[0].padded {
                break;
            }
            emitted += self.emit_if_full(buffer, true)?;
        }
        self.reset();
        Ok(emitted)
    }

    /// Drops the incomplete window after a time-limit cut; nothing is padded.
    pub fn truncate_episode(&mut self) {
        self.reset();
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.next_state = None;
        self.termination = None;
        self.pushed = 0;
    }

    fn emit_if_full(&mut self, buffer: &mut RingBuffer, terminal: bool) -> Result<usize, BufferError> {
        if self.window.len() < self.horizon {
            return Ok(0);
        }
        let next = self.next_state.clone().expect("next state recorded on push");
        let mut states = Vec::with_capacity(self.horizon + 1);
        let mut actions = Vec::with_capacity(self.horizon);
        let mut rewards = Vec::with_capacity(self.horizon);
        let mut pad_flags = Vec::with_capacity(self.horizon);
        for tr in &self.window {
            states.push(tr.state.clone());
            actions.push(tr.action.clone());
            rewards.push(tr.reward);
            pad_flags.push(tr.padded);
        }
        states.push(next);
        buffer.push(MultiStateSample {
            states,
            actions,
            rewards,
            pad_flags,
            terminal,
        })?;
        self.window.pop_front();
        Ok(1)
    }
}

/// Fixed-capacity FIFO store of windows.
#[derive(Debug, Clone)]
pub struct RingBuffer {
    capacity: usize,
    horizon: usize,
    state_dim: usize,
    action_dim: usize,
    storage: Vec<MultiStateSample>,
    cursor: usize,
    inserted: u64,
}

pub const DEFAULT_CAPACITY: usize = 100_000;

impl RingBuffer {
    pub fn new(capacity: usize, horizon: usize, state_dim: usize, action_dim: usize) -> Self {
        assert!(capacity > 0 && horizon > 0, "capacity and horizon must be positive");
        Self {
            capacity,
            horizon,
            state_dim,
            action_dim,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
            inserted: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Total number of samples ever inserted, including evicted ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, sample: MultiStateSample) -> Result<(), BufferError> {
        sample.check()?;
        if sample.horizon() != self.horizon
            || sample.states.iter().any(|s| s.len() != self.state_dim)
            || sample.actions.iter().any(|a| a.len() != self.action_dim)
        {
            return Err(BufferError::Malformed(format!(
                "sample shape does not match buffer (L={}, state_dim={}, action_dim={})",
                self.horizon, self.state_dim, self.action_dim
            )));
        }
        if self.storage.len() < self.capacity {
            self.storage.push(sample);
        } else {
            self.storage[self.cursor] = sample;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.inserted += 1;
        Ok(())
    }

    /// Samples from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &MultiStateSample> {
        let split = if self.storage.len() < self.capacity { 0 } else { self.cursor };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }

    /// `n` distinct samples drawn uniformly at random.
    pub fn sample_minibatch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&MultiStateSample>, BufferError> {
        if n > self.storage.len() {
            return Err(BufferError::InsufficientData {
                requested: n,
                available: self.storage.len(),
            });
        }
        Ok(rand::seq::index::sample(rng, self.storage.len(), n)
            .into_iter()
            .map(|i| &self.storage[i])
            .collect())
    }

    /// Binary dump: magic, `L`, state and action dims, count (little endian),
    /// then one fixed-size record per sample, oldest first, holding states,
    /// actions, rewards, padding flags and the terminal flag.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), BufferError> {
        w.write_all(DUMP_MAGIC)?;
        for v in [self.horizon, self.state_dim, self.action_dim] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&(self.storage.len() as u64).to_le_bytes())?;
        for s in self.iter() {
            for x in s.states.iter().flatten().chain(s.actions.iter().flatten()).chain(&s.rewards) {
                w.write_all(&x.to_le_bytes())?;
            }
            let flags: Vec<u8> = s.pad_flags.iter().chain(std::iter::once(&s.terminal)).map(|&b| b as u8).collect();
            w.write_all(&flags)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, capacity: usize) -> Result<Self, BufferError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(BufferError::Format("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            r.read_exact(&mut u32buf)?;
            *d = u32::from_le_bytes(u32buf) as usize;
        }
        let [horizon, state_dim, action_dim] = dims;
        if horizon == 0 {
            return Err(BufferError::Format("zero horizon".into()));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        if count > capacity {
            return Err(BufferError::Format(format!("{count} samples exceed capacity {capacity}")));
        }
        let mut buffer = RingBuffer::new(capacity, horizon, state_dim, action_dim);
        let mut read_f64 = |r: &mut R| -> Result<f64, BufferError> {
            r.read_exact(&mut u64buf)?;
            Ok(f64::from_le_bytes(u64buf))
        };
        for _ in 0..count {
            let mut states = Vec::with_capacity(horizon + 1);
            for _ in 0..=horizon {
                states.push((0..state_dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?);
            }
            let mut actions = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                actions.push((0..action_dim).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?);
            }
            let rewards = (0..horizon).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>, _>>()?;
            let mut flags = vec![0u8; horizon + 1];
            r.read_exact(&mut flags)?;
            if flags.iter().any(|&f| f > 1) {
                return Err(BufferError::Format("flag byte not 0/1".into()));
            }
            buffer.push(MultiStateSample {
                states,
                actions,
                rewards,
                pad_flags: flags[..horizon].iter().map(|&f| f == 1).collect(),
                terminal: flags[horizon] == 1,
            })?;
        }
        Ok(buffer)
    }
}

const DUMP_MAGIC: &[u8; 8] = b"MSTDBUF1";
