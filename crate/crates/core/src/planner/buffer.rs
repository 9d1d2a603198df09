use alloc::vec::Vec;

use super::PlannerError;

/// Ring buffer of `(state, action, next_state)` triples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionBuffer {
    state_dim: usize,
    action_dim: usize,
    capacity: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    next_states: Vec<f64>,
    inserted: u64,
}

impl TransitionBuffer {
    pub fn new(state_dim: usize, action_dim: usize, capacity: usize) -> Self {
        assert!(capacity > 0 && state_dim > 0 && action_dim > 0);
        Self { state_dim, action_dim, capacity, states: Vec::new(), actions: Vec::new(), next_states: Vec::new(), inserted: 0 }
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.actions.len() / self.action_dim
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Total pushes, including overwritten ones.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, state: &[f64], action: &[f64], next_state: &[f64]) -> Result<(), PlannerError> {
        if state.len() != self.state_dim || next_state.len() != self.state_dim || action.len() != self.action_dim {
            return Err(PlannerError::Dimension("transition"));
        }
        if !state.iter().chain(action).chain(next_state).all(|v| v.is_finite()) {
            return Err(PlannerError::NonFinite("transition"));
        }
        if self.len() < self.capacity {
            self.states.extend_from_slice(state);
            self.actions.extend_from_slice(action);
            self.next_states.extend_from_slice(next_state);
        } else {
            let i = (self.inserted % self.capacity as u64) as usize;
            self.states[i * self.state_dim..(i + 1) * self.state_dim].copy_from_slice(state);
            self.actions[i * self.action_dim..(i + 1) * self.action_dim].copy_from_slice(action);
            self.next_states[i * self.state_dim..(i + 1) * self.state_dim].copy_from_slice(next_state);
        }
        self.inserted += 1;
        Ok(())
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn next_state(&self, i: usize) -> &[f64] {
        &self.next_states[i * self.state_dim..(i + 1) * self.state_dim]
    }
}
