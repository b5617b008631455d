//! Temporal ensembling and the 10 Hz action scheduler.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::policy::action::{Action, ActionChunk, PERIOD};
use crate::policy::bundle::ACTION_DIM;

pub const DEFAULT_DECAY: f64 = 0.1;

/// Tick for a time on the action grid.
pub fn tick_at(t: f64) -> Result<u64> {
    let k = (t / PERIOD).round();
    if !t.is_finite() || k < 0.0 || (t - k * PERIOD).abs() > 1e-9 {
        return Err(Error::Scheduling(format!("{t} s is not on the {PERIOD} s action grid")));
    }
    Ok(k as u64)
}

/// Weighted average over every chunk covering `tick`, `w_k ∝ exp(-m k)` with
/// `k = 0` the oldest covering chunk in `history` order.
pub fn ensemble_tick(history: &[ActionChunk], tick: u64, m: f64) -> Result<Action> {
    if !(m.is_finite() && m >= 0.0) {
        return Err(Error::config(format!("ensemble decay {m} must be finite and >= 0")));
    }
    let covering: Vec<&Action> = history.iter().filter_map(|c| c.at(tick)).collect();
    let Some(first) = covering.first() else {
        return Err(Error::Scheduling(format!("no chunk covers tick {tick}")));
    };
    if covering.len() == 1 {
        return Ok((*first).clone());
    }
    let arms = first.arms.len();
    if covering.iter().any(|a| a.arms.len() != arms) {
        return Err(Error::Shape("covering chunks disagree on arm count".into()));
    }
    let weights: Vec<f64> = (0..covering.len()).map(|k| (-m * k as f64).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = vec![0.0; arms * ACTION_DIM];
    for (a, w) in covering.iter().zip(&weights) {
        for (s, v) in acc.iter_mut().zip(a.to_vec()) {
            *s += w / total * v;
        }
    }
    Action::from_slice(&acc, arms)
}

pub fn ensemble_step(history: &[ActionChunk], t: f64, m: f64) -> Result<Action> {
    ensemble_tick(history, tick_at(t)?, m)
}

/// Owns chunk history and hands out exactly one action per tick.
#[derive(Debug, Clone)]
pub struct ChunkScheduler {
    history: VecDeque<ActionChunk>,
    next_tick: u64,
    /// `None` executes the newest covering chunk open-loop.
    decay: Option<f64>,
}

impl ChunkScheduler {
    pub fn new(decay: Option<f64>) -> Result<Self> {
        if let Some(m) = decay {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::config(format!("ensemble decay {m} must be finite and >= 0")));
            }
        }
        Ok(ChunkScheduler { history: VecDeque::new(), next_tick: 0, decay })
    }

    pub fn next_tick(&self) -> u64 {
        self.next_tick
    }

    pub fn next_time(&self) -> f64 {
        self.next_tick as f64 * PERIOD
    }

    pub fn history_len(&self) -> usize {
        self.history.len()
    }

    /// Whether the next tick has a covering chunk.
    pub fn is_covered(&self) -> bool {
        self.history.iter().any(|c| c.covers(self.next_tick))
    }

    pub fn push(&mut self, chunk: ActionChunk) -> Result<()> {
        if let Some(last) = self.history.back() {
            if chunk.start_tick < last.start_tick {
                return Err(Error::Scheduling(format!(
                    "chunk starting at tick {} is older than tick {}",
                    chunk.start_tick, last.start_tick
                )));
            }
        }
        self.history.push_back(chunk);
        Ok(())
    }

    /// Action for the next tick, then advances by one period.
    pub fn pop(&mut self) -> Result<(f64, Action)> {
        let tick = self.next_tick;
        while self.history.front().is_some_and(|c| c.start_tick + c.len() as u64 <= tick) {
            self.history.pop_front();
        }
        let action = match self.decay {
            Some(m) => ensemble_tick(self.history.make_contiguous(), tick, m)?,
            None => self
                .history
                .iter()
                .rev()
                .find_map(|c| c.at(tick))
                .cloned()
                .ok_or_else(|| Error::Scheduling(format!("no chunk covers tick {tick}")))?,
        };
        self.next_tick += 1;
        Ok((tick as f64 * PERIOD, action))
    }
}
