//! Evaluation harness: runs trials of a task from an action source and
//! summarizes them into a table.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controller::PresetName;
use crate::error::{Error, Result};
use crate::policy::model::{Observation, Policy};
use crate::policy::schedule::ChunkScheduler;
use crate::tasks::env::{EnvOptions, TaskEnv, TrialResult};
use crate::tasks::expert::Expert;
use crate::tasks::{Phase, TaskSpec};

/// Where the actions come from.
#[derive(Debug, Clone)]
pub enum Source<'a> {
    /// Scripted expert with the spec's compliance schedule.
    Scripted,
    /// Scripted expert with every phase at one preset.
    Fixed(PresetName),
    /// Learned policy, chunks ensembled with `decay` (`None` runs the newest chunk).
    Policy { policy: &'a Policy, decay: Option<f64> },
    /// Learned policy with the tactile fields zeroed.
    NoField { policy: &'a Policy, decay: Option<f64> },
}

impl Source<'_> {
    pub fn label(&self) -> String {
        match self {
            Source::Scripted => "scripted".into(),
            Source::Fixed(p) => format!("fixed-{}", p.as_str()),
            Source::Policy { .. } => "policy".into(),
            Source::NoField { .. } => "policy-no-field".into(),
        }
    }
}

fn blind(mut obs: Observation) -> Observation {
    for a in obs.arms.iter_mut() {
        a.force.pressures.data.iter_mut().for_each(|v| *v = 0.0);
        a.deformation.displacements.data.iter_mut().for_each(|v| *v = 0.0);
    }
    obs
}

/// Runs one trial.
pub fn run_trial(spec: &TaskSpec, source: &Source<'_>, seed: u64) -> Result<TrialResult> {
    let clock = Instant::now();
    let spec = match source {
        Source::Fixed(p) => spec.frozen(*p),
        _ => spec.clone(),
    };
    let mut env = TaskEnv::new(&spec, seed, EnvOptions::default())?;
    match source {
        Source::Scripted | Source::Fixed(_) => {
            let mut expert = Expert::new(&env);
            while !env.finished() {
                let a = expert.act(&env);
                env.step(&a)?;
            }
        }
        Source::Policy { policy, decay } | Source::NoField { policy, decay } => {
            let arms = policy.architecture().arms;
            if arms != spec.task.arms() {
                return Err(Error::config(format!(
                    "weights drive {arms} arm(s), task {} needs {}",
                    spec.task,
                    spec.task.arms()
                )));
            }
            let zero = matches!(source, Source::NoField { .. });
            let mut sched = ChunkScheduler::new(*decay)?;
            while !env.finished() {
                let obs = if zero { blind(env.observation()) } else { env.observation() };
                sched.push(policy.predict_chunk(&obs, sched.next_tick())?)?;
                let (_, a) = sched.pop()?;
                env.step(&a)?;
            }
        }
    }
    Ok(env.result(clock.elapsed().as_secs_f64()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub task: String,
    pub source: String,
    pub trials: usize,
    pub successes: usize,
    /// Trials that reached each phase, in phase order.
    pub reached: [usize; 5],
    /// Failed trials by the phase they stopped in.
    pub failed_in: [usize; 5],
    pub mean_peak_force: f64,
    pub results: Vec<TrialResult>,
}

impl EvalSummary {
    pub fn success_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.successes as f64 / self.trials as f64
        }
    }
}

/// Runs `trials` trials with seeds `seed0, seed0 + 1, ...`.
pub fn evaluate(spec: &TaskSpec, source: &Source<'_>, trials: usize, seed0: u64) -> Result<EvalSummary> {
    if trials == 0 {
        return Err(Error::config("at least one trial required"));
    }
    let mut results = Vec::with_capacity(trials);
    for k in 0..trials as u64 {
        results.push(run_trial(spec, source, seed0 + k)?);
    }
    let mut reached = [0; 5];
    let mut failed_in = [0; 5];
    for r in &results {
        for p in Phase::ALL.into_iter().filter(|p| *p <= r.phase) {
            reached[p.index()] += 1;
        }
        if !r.success {
            failed_in[r.phase.index()] += 1;
        }
    }
    let n = results.len().max(1) as f64;
    Ok(EvalSummary {
        task: spec.task.to_string(),
        source: source.label(),
        trials,
        successes: results.iter().filter(|r| r.success).count(),
        reached,
        failed_in,
        mean_peak_force: results.iter().map(|r| r.peak_force).sum::<f64>() / n,
        results,
    })
}

/// Fixed-width results table, one row per summary. Wall times are left out
/// so the table is reproducible.
pub fn table(rows: &[EvalSummary]) -> String {
    let mut out = format!(
        "{:<16} {:<16} {:>6} {:>8} {:>9} {:<20} {}\n",
        "task", "source", "trials", "success", "peak [N]", "reached a/c/e/m/r", "failed a/c/e/m/r"
    );
    let join = |v: &[usize; 5]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join("/");
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:<16} {:>6} {:>7.1}% {:>9.2} {:<20} {}",
            r.task,
            r.source,
            r.trials,
            100.0 * r.success_rate(),
            r.mean_peak_force,
            join(&r.reached),
            join(&r.failed_in)
        );
    }
    out
}

/// Success rates with one row per source and one column per task.
pub fn matrix(rows: &[EvalSummary]) -> String {
    let mut tasks: Vec<&str> = Vec::new();
    let mut sources: Vec<&str> = Vec::new();
    for r in rows {
        if !tasks.contains(&r.task.as_str()) {
            tasks.push(&r.task);
        }
        if !sources.contains(&r.source.as_str()) {
            sources.push(&r.source);
        }
    }
    let mut out = format!("{:<16}", "source");
    for t in &tasks {
        let _ = write!(out, " {t:>16}");
    }
    out.push('\n');
    for s in &sources {
        let _ = write!(out, "{s:<16}");
        for t in &tasks {
            match rows.iter().find(|r| r.source == *s && r.task == *t) {
                Some(r) => {
                    let _ = write!(out, " {:>15.1}%", 100.0 * r.success_rate());
                }
                None => {
                    let _ = write!(out, " {:>16}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}
