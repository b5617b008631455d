//! Online identification of [`MaterialParams`] from the recent contact
//! history.
//!
//! For every candidate relaxation time on a log grid the Maxwell state is
//! rebuilt recursively from the deformation history, and
//! `p = k_e phi + k_v phi_dot + sigma_m` is solved for the three densities by
//! linear least squares. One extra column per node absorbs the unknown
//! Maxwell stress at the start of the window. The candidate with the lowest
//! residual wins. Diffusion comes from the free-node creep balance
//! `phi_dot + (k_e/k_v) phi = D ∇²phi` when free nodes are excited.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{laplacian, Field};
use crate::sim::{MaterialParams, SurfaceState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeSample {
    /// m
    pub phi: f64,
    /// m/s
    pub phi_dot: f64,
    /// Pa
    pub pressure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeNodeSample {
    pub phi: f64,
    pub phi_dot: f64,
    /// Discrete Laplacian of phi at the node, 1/m.
    pub laplacian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistorySample {
    pub timestamp: f64,
    pub nodes: Vec<NodeSample>,
    pub free: Vec<FreeNodeSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserverConfig {
    pub capacity: usize,
    pub min_samples: usize,
    /// Residual RMS over mean pressure below which an estimate is trusted.
    pub confidence_ratio: f64,
    pub node_count: usize,
    pub free_node_count: usize,
    pub tau_min: f64,
    pub tau_max: f64,
    pub tau_points: usize,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig {
            capacity: 400,
            min_samples: 50,
            confidence_ratio: 0.02,
            node_count: 5,
            free_node_count: 5,
            tau_min: 0.05,
            tau_max: 5.0,
            tau_points: 25,
        }
    }
}

impl ObserverConfig {
    pub fn tau_grid(&self) -> Vec<f64> {
        let n = self.tau_points.max(2);
        let ratio = self.tau_max / self.tau_min;
        (0..n).map(|i| self.tau_min * ratio.powf(i as f64 / (n - 1) as f64)).collect()
    }
}

/// Fixed-capacity ring of samples taken at a fixed node set.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer {
    capacity: usize,
    samples: VecDeque<HistorySample>,
    nodes: Vec<usize>,
    free_nodes: Vec<usize>,
}

impl HistoryBuffer {
    pub fn new(capacity: usize) -> Self {
        HistoryBuffer {
            capacity: capacity.max(1),
            samples: VecDeque::with_capacity(capacity),
            nodes: Vec::new(),
            free_nodes: Vec::new(),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> impl Iterator<Item = &HistorySample> {
        self.samples.iter()
    }

    pub fn first(&self) -> Option<&HistorySample> {
        self.samples.front()
    }

    pub fn last(&self) -> Option<&HistorySample> {
        self.samples.back()
    }

    /// Grid indices of the tracked contact nodes.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free_nodes
    }

    pub fn clear(&mut self) {
        self.samples.clear();
        self.nodes.clear();
        self.free_nodes.clear();
    }

    pub fn push(&mut self, sample: HistorySample) -> Result<()> {
        if let Some(last) = self.samples.back() {
            if !(sample.timestamp > last.timestamp) {
                return Err(Error::Ordering { last: last.timestamp, got: sample.timestamp });
            }
            if sample.nodes.len() != last.nodes.len() || sample.free.len() != last.free.len() {
                return Err(Error::config("sample node count changed inside a history window"));
            }
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        Ok(())
    }

    /// Samples `state` at the tracked nodes. The node set is chosen on the
    /// first sample after construction or [`clear`](Self::clear): the
    /// `node_count` contact nodes with the highest measured pressure, and
    /// up to `free_node_count` free nodes bordering the contact patch.
    ///
    /// `pressure` is the measured pressure in Pa (e.g. the tactile field).
    /// Returns `Ok(false)` without recording when there is no contact yet.
    pub fn record(
        &mut self,
        state: &SurfaceState,
        pressure: &Field,
        timestamp: f64,
        cfg: &ObserverConfig,
    ) -> Result<bool> {
        let shape = state.shape();
        shape.ensure_same(&pressure.shape, "observer pressure")?;
        if self.nodes.is_empty() {
            let mut contact: Vec<usize> = (0..shape.len()).filter(|&i| state.contact_mask.data[i]).collect();
            if contact.is_empty() {
                return Ok(false);
            }
            // Stable sort keeps index order among equal pressures.
            contact.sort_by(|&a, &b| pressure.data[b].total_cmp(&pressure.data[a]));
            contact.truncate(cfg.node_count.max(1));
            self.nodes = contact;
            self.free_nodes = (0..shape.len())
                .filter(|&i| {
                    !state.contact_mask.data[i]
                        && shape.neighbours(i).into_iter().flatten().any(|n| state.contact_mask.data[n])
                })
                .take(cfg.free_node_count)
                .collect();
        }
        let lap = laplacian(&state.phi, state.h, None);
        let nodes = self
            .nodes
            .iter()
            .map(|&i| NodeSample { phi: state.phi.data[i], phi_dot: state.phi_dot.data[i], pressure: pressure.data[i] })
            .collect();
        let free = self
            .free_nodes
            .iter()
            .map(|&i| FreeNodeSample { phi: state.phi.data[i], phi_dot: state.phi_dot.data[i], laplacian: lap.data[i] })
            .collect();
        self.push(HistorySample { timestamp, nodes, free })?;
        Ok(true)
    }
}

/// Least-squares fit for one relaxation-time candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauFit {
    pub tau: f64,
    pub k_e: f64,
    pub k_v: f64,
    pub k_m: f64,
    /// Pa
    pub residual_rms: f64,
    pub full_rank: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub params: MaterialParams,
    /// Pa; infinite when nothing could be fitted.
    pub residual_rms: f64,
    pub confident: bool,
}

const RANK_TOL: f64 = 1e-9;

/// Fits `(k_e, k_v, k_m)` for a fixed `tau`. `None` when the window has no
/// usable rows.
pub fn fit_tau(buf: &HistoryBuffer, tau: f64) -> Option<TauFit> {
    let n_t = buf.len();
    let n_nodes = buf.first()?.nodes.len();
    if n_t < 2 || n_nodes == 0 {
        return None;
    }
    let rows = n_t * n_nodes;
    let cols = 3 + n_nodes;
    let mut a = DMatrix::<f64>::zeros(rows, cols);
    let mut y = DVector::<f64>::zeros(rows);
    let t0 = buf.first()?.timestamp;
    for node in 0..n_nodes {
        let mut z = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for (k, s) in buf.samples().enumerate() {
            let ns = s.nodes[node];
            if let Some((pt, pphi)) = prev {
                let dt = s.timestamp - pt;
                let decay = (-dt / tau).exp();
                z = z * decay + (ns.phi - pphi) * (tau / dt) * (1.0 - decay);
            }
            prev = Some((s.timestamp, ns.phi));
            let r = k * n_nodes + node;
            a[(r, 0)] = ns.phi;
            a[(r, 1)] = ns.phi_dot;
            a[(r, 2)] = z;
            a[(r, 3 + node)] = (-(s.timestamp - t0) / tau).exp();
            y[r] = ns.pressure;
        }
    }
    let mut scale = vec![0.0; cols];
    for (c, sc) in scale.iter_mut().enumerate() {
        *sc = a.column(c).norm();
    }
    let mut full_rank = scale[..3].iter().all(|&s| s > 0.0);
    for (c, &sc) in scale.iter().enumerate() {
        if sc > 0.0 {
            a.column_mut(c).scale_mut(1.0 / sc);
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= RANK_TOL * smax {
        full_rank = false;
    }
    let coef = svd.solve(&y, RANK_TOL * smax.max(f64::MIN_POSITIVE)).ok()?;
    let resid = &a * &coef - &y;
    let residual_rms = (resid.norm_squared() / rows as f64).sqrt();
    let un = |c: usize| if scale[c] > 0.0 { coef[c] / scale[c] } else { 0.0 };
    Some(TauFit { tau, k_e: un(0), k_v: un(1), k_m: un(2), residual_rms, full_rank })
}

/// Diffusion from the free-node creep balance, given the creep rate `a`.
/// `None` when the free nodes carry no curvature.
pub fn fit_diffusion(buf: &HistoryBuffer, decay_rate: f64) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for s in buf.samples() {
        for f in &s.free {
            let y = f.phi_dot + decay_rate * f.phi;
            num += y * f.laplacian;
            den += f.laplacian * f.laplacian;
        }
    }
    // Curvatures below ~1 µm over a 2 mm pitch are noise.
    if den < 1e-6 || !num.is_finite() {
        return None;
    }
    Some((num / den).clamp(0.0, 1.0))
}

fn mean_abs_pressure(buf: &HistoryBuffer) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for sample in buf.samples() {
        for ns in &sample.nodes {
            s += ns.pressure.abs();
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Turns the winning fit into an estimate. Non-positive densities are
/// replaced by the prior and flagged.
pub fn finalize(
    buf: &HistoryBuffer,
    best: Option<TauFit>,
    prior: &MaterialParams,
    cfg: &ObserverConfig,
) -> ParamEstimate {
    let Some(best) = best else {
        return ParamEstimate { params: *prior, residual_rms: f64::INFINITY, confident: false };
    };
    let mut positive = true;
    let mut pick = |v: f64, fallback: f64| {
        if v > 0.0 && v.is_finite() {
            v
        } else {
            positive = false;
            fallback
        }
    };
    let k_e = pick(best.k_e, prior.k_e);
    let k_v = pick(best.k_v, prior.k_v);
    let k_m = pick(best.k_m, prior.k_m);
    let diffusion = fit_diffusion(buf, k_e / k_v).unwrap_or(prior.diffusion);
    let mean_p = mean_abs_pressure(buf);
    let confident = best.full_rank && positive && mean_p > 0.0 && best.residual_rms <= cfg.confidence_ratio * mean_p;
    ParamEstimate {
        params: MaterialParams { k_e, k_v, k_m, tau: best.tau, diffusion },
        residual_rms: best.residual_rms,
        confident,
    }
}

fn better(candidate: &TauFit, incumbent: &Option<TauFit>) -> bool {
    match incumbent {
        None => true,
        Some(b) => {
            (candidate.full_rank && !b.full_rank)
                || (candidate.full_rank == b.full_rank && candidate.residual_rms < b.residual_rms)
        }
    }
}

/// Full sweep over the relaxation-time grid.
pub fn identify(buf: &HistoryBuffer, prior: &MaterialParams, cfg: &ObserverConfig) -> Result<ParamEstimate> {
    if buf.len() < cfg.min_samples {
        return Err(Error::NotReady(format!("{} samples in history, need {}", buf.len(), cfg.min_samples)));
    }
    let mut best: Option<TauFit> = None;
    for tau in cfg.tau_grid() {
        if let Some(fit) = fit_tau(buf, tau) {
            if better(&fit, &best) {
                best = Some(fit);
            }
        }
    }
    Ok(finalize(buf, best, prior, cfg))
}

/// Spreads a sweep over control cycles: one candidate per call, a fresh
/// snapshot of the history at the start of every sweep.
#[derive(Debug, Clone)]
pub struct AmortizedIdentifier {
    cfg: ObserverConfig,
    grid: Vec<f64>,
    snapshot: Option<HistoryBuffer>,
    cursor: usize,
    best: Option<TauFit>,
}

impl AmortizedIdentifier {
    pub fn new(cfg: ObserverConfig) -> Self {
        AmortizedIdentifier { grid: cfg.tau_grid(), cfg, snapshot: None, cursor: 0, best: None }
    }

    pub fn config(&self) -> &ObserverConfig {
        &self.cfg
    }

    /// Cycles per full sweep.
    pub fn sweep_len(&self) -> usize {
        self.grid.len()
    }

    pub fn reset(&mut self) {
        self.snapshot = None;
        self.cursor = 0;
        self.best = None;
    }

    /// Evaluates one candidate. Returns an estimate when a sweep completes.
    pub fn step(&mut self, buf: &HistoryBuffer, prior: &MaterialParams) -> Option<ParamEstimate> {
        if self.snapshot.is_none() {
            if buf.len() < self.cfg.min_samples {
                return None;
            }
            self.snapshot = Some(buf.clone());
            self.cursor = 0;
            self.best = None;
        }
        let snap = self.snapshot.as_ref().expect("snapshot taken above");
        if let Some(fit) = fit_tau(snap, self.grid[self.cursor]) {
            if better(&fit, &self.best) {
                self.best = Some(fit);
            }
        }
        self.cursor += 1;
        if self.cursor < self.grid.len() {
            return None;
        }
        let snap = self.snapshot.take().expect("snapshot present");
        Some(finalize(&snap, self.best.take(), prior, &self.cfg))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, phi: f64) -> HistorySample {
        HistorySample { timestamp: t, nodes: vec![NodeSample { phi, phi_dot: 0.0, pressure: 0.0 }], free: vec![] }
    }

    #[test]
    fn push_evicts_and_orders() {
        let mut b = HistoryBuffer::new(3);
        b.push(sample(0.0, 0.0)).unwrap();
        assert_eq!(b.len(), 1);
        for k in 1..4 {
            b.push(sample(k as f64, 0.0)).unwrap();
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.first().unwrap().timestamp, 1.0);
        let err = b.push(sample(2.5, 0.0)).unwrap_err();
        assert!(matches!(err, Error::Ordering { .. }));
    }

    #[test]
    fn tau_grid_is_log_spaced() {
        let g = ObserverConfig::default().tau_grid();
        assert_eq!(g.len(), 25);
        assert!((g[0] - 0.05).abs() < 1e-15);
        assert!((g[24] - 5.0).abs() < 1e-12);
        assert!((g[12] - 0.5).abs() < 1e-12);
        let r = g[1] / g[0];
        for w in g.windows(2) {
            assert!((w[1] / w[0] - r).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_history_is_unidentifiable() {
        let mut b = HistoryBuffer::new(400);
        for k in 0..100 {
            b.push(sample(k as f64 * 0.005, 0.0)).unwrap();
        }
        let est = identify(&b, &MaterialParams::default(), &ObserverConfig::default()).unwrap();
        assert!(!est.confident);
    }

    #[test]
    fn too_few_samples_not_ready() {
        let mut b = HistoryBuffer::new(400);
        b.push(sample(0.0, 0.0)).unwrap();
        let err = identify(&b, &MaterialParams::default(), &ObserverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotReady(_)));
    }
}
