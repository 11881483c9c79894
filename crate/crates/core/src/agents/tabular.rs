use super::AgentError;

/// Dense action-value table indexed `(state, action)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self::filled(num_states, num_actions, 0.0)
    }

    pub fn filled(num_states: usize, num_actions: usize, value: f64) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![value; num_states * num_actions],
        }
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self, AgentError> {
        if values.len() != num_states * num_actions {
            return Err(AgentError::Config(format!(
                "table of {} values for {num_states} states x {num_actions} actions",
                values.len()
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn max_value(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy_action(&self, s: usize) -> usize {
        let row = self.row(s);
        (0..row.len()).fold(0, |best, a| if row[a] > row[best] { a } else { best })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖self − other‖∞`.
    pub fn distance(&self, other: &QTable) -> f64 {
        assert_eq!(self.values.len(), other.values.len(), "table shapes differ");
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.num_actions).map(<[f64]>::to_vec).collect()
    }

    fn check_state(&self, s: usize) -> Result<(), AgentError> {
        if s >= self.num_states {
            return Err(AgentError::Index(format!("state {s} out of range 0..{}", self.num_states)));
        }
        Ok(())
    }
}

/// Trajectory fragment `s_t, a_t, r_{t+1}, s_{t+1}, ..., r_{t+L}, s_{t+L}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularWindow {
    pub states: Vec<usize>,
    pub action: usize,
    pub rewards: Vec<f64>,
}

/// `(1/L) Σ_l [Σ_{i≤l} γ^{i-1} r_{t+i} + γ^l max_b Q(s_{t+l}, b)]`.
pub fn mstd_max_target(q: &QTable, window: &TabularWindow, gamma: f64) -> Result<f64, AgentError> {
    let horizon = window.rewards.len();
    if horizon == 0 || window.states.len() != horizon + 1 {
        return Err(AgentError::Index(format!(
            "window with {} states and {} rewards",
            window.states.len(),
            horizon
        )));
    }
    for &s in &window.states {
        q.check_state(s)?;
    }
    let mut partial = 0.0;
    let mut discount = 1.0;
    let mut total = 0.0;
    for l in 1..=horizon {
        partial += discount * window.rewards[l - 1];
        discount *= gamma;
        total += partial + discount * q.max_value(window.states[l]);
    }
    Ok(total / horizon as f64)
}

/// `Q(s_t, a_t) <- (1 - α) Q(s_t, a_t) + α · target`.
pub fn tabular_mstd_update(q: &mut QTable, window: &TabularWindow, alpha: f64, gamma: f64) -> Result<(), AgentError> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(AgentError::StepSize(alpha));
    }
    if window.action >= q.num_actions {
        return Err(AgentError::Index(format!("action {} out of range 0..{}", window.action, q.num_actions)));
    }
    let target = mstd_max_target(q, window, gamma)?;
    let (s, a) = (window.states[0], window.action);
    let old = q.get(s, a);
    q.set(s, a, (1.0 - alpha) * old + alpha * target);
    Ok(())
}
