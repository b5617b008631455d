//! Transformer forward pass in f32.
//!
//! Every reduction runs in a fixed sequential order and transcendental
//! functions come from `libm`, so outputs are bit-identical across
//! platforms for a given bundle and observation.

use crate::error::{Error, Result};
use crate::grid::GridShape;
use crate::policy::action::{squash_compliance, squash_orientation, Action, ActionChunk, ArmAction, JOINTS};
use crate::policy::bundle::{Architecture, Tensor, WeightBundle, ACTION_DIM, VIEW_LEN};
use crate::tactile::{DeformationField, ForceField, MAX_PRESSURE_KPA};

const LN_EPS: f32 = 1e-5;
/// Deformation token scale, mm.
const DEFORM_SCALE_MM: f32 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ArmObservation {
    /// Position (m) then axis-angle orientation.
    pub pose: [f64; 6],
    pub force: ForceField,
    pub deformation: DeformationField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub arms: Vec<ArmObservation>,
    /// Downsampled rendered views, 12x10 row-major, values in [0, 1].
    pub views: Vec<Vec<f64>>,
}

impl Observation {
    pub fn validate(&self, arch: &Architecture) -> Result<()> {
        if self.arms.len() != arch.arms {
            return Err(Error::Shape(format!("{} arm observations for a {}-arm policy", self.arms.len(), arch.arms)));
        }
        if self.views.len() != arch.views {
            return Err(Error::Shape(format!("{} views for a policy expecting {}", self.views.len(), arch.views)));
        }
        for (k, a) in self.arms.iter().enumerate() {
            a.force.pressures.shape.ensure_same(&GridShape::SENSOR, "force field")?;
            a.deformation.displacements.shape.ensure_same(&GridShape::SENSOR, "deformation field")?;
            let finite = a.pose.iter().all(|v| v.is_finite())
                && a.force.pressures.is_finite()
                && a.deformation.displacements.is_finite();
            if !finite {
                return Err(Error::numeric(format!("arm {k} observation is not finite")));
            }
            if (a.force.timestamp - a.deformation.timestamp).abs() > 0.01 + 1e-9 {
                return Err(Error::config(format!(
                    "arm {k}: force and deformation timestamps differ by more than one control period"
                )));
            }
        }
        for v in &self.views {
            if v.len() != VIEW_LEN {
                return Err(Error::Shape(format!("view has {} values, expected {VIEW_LEN}", v.len())));
            }
        }
        Ok(())
    }
}

struct Linear<'a> {
    w: &'a Tensor,
    b: &'a Tensor,
}

impl Linear<'_> {
    fn apply(&self, x: &[f32], out: &mut [f32]) {
        let (n_in, n_out) = (self.w.dims[0], self.w.dims[1]);
        out.copy_from_slice(&self.b.data);
        for i in 0..n_in {
            let xi = x[i];
            let row = &self.w.data[i * n_out..(i + 1) * n_out];
            for o in 0..n_out {
                out[o] += xi * row[o];
            }
        }
    }

    fn rows(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let (n_in, n_out) = (self.w.dims[0], self.w.dims[1]);
        let mut y = vec![0.0; rows * n_out];
        for r in 0..rows {
            self.apply(&x[r * n_in..(r + 1) * n_in], &mut y[r * n_out..(r + 1) * n_out]);
        }
        y
    }
}

struct Norm<'a> {
    gamma: &'a Tensor,
    beta: &'a Tensor,
}

impl Norm<'_> {
    fn apply_rows(&self, x: &mut [f32], d: usize) {
        for row in x.chunks_exact_mut(d) {
            let mut mean = 0.0f32;
            for v in row.iter() {
                mean += *v;
            }
            mean /= d as f32;
            let mut var = 0.0f32;
            for v in row.iter() {
                let c = *v - mean;
                var += c * c;
            }
            var /= d as f32;
            let inv = 1.0 / libm::sqrtf(var + LN_EPS);
            for (k, v) in row.iter_mut().enumerate() {
                *v = (*v - mean) * inv * self.gamma.data[k] + self.beta.data[k];
            }
        }
    }
}

struct Attention<'a> {
    q: Linear<'a>,
    k: Linear<'a>,
    v: Linear<'a>,
    o: Linear<'a>,
}

impl Attention<'_> {
    fn apply(&self, x: &[f32], nx: usize, mem: &[f32], nm: usize, d: usize, heads: usize) -> Vec<f32> {
        let q = self.q.rows(x, nx);
        let k = self.k.rows(mem, nm);
        let v = self.v.rows(mem, nm);
        let dh = d / heads;
        let scale = 1.0 / libm::sqrtf(dh as f32);
        let mut ctx = vec![0.0f32; nx * d];
        let mut scores = vec![0.0f32; nm];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..nx {
                let qi = &q[i * d + off..i * d + off + dh];
                let mut max = f32::NEG_INFINITY;
                for j in 0..nm {
                    let kj = &k[j * d + off..j * d + off + dh];
                    let mut s = 0.0f32;
                    for c in 0..dh {
                        s += qi[c] * kj[c];
                    }
                    scores[j] = s * scale;
                    max = max.max(scores[j]);
                }
                let mut sum = 0.0f32;
                for s in scores.iter_mut() {
                    *s = libm::expf(*s - max);
                    sum += *s;
                }
                let out = &mut ctx[i * d + off..i * d + off + dh];
                for j in 0..nm {
                    let w = scores[j] / sum;
                    let vj = &v[j * d + off..j * d + off + dh];
                    for c in 0..dh {
                        out[c] += w * vj[c];
                    }
                }
            }
        }
        self.o.rows(&ctx, nx)
    }
}

struct FeedForward<'a> {
    l1: Linear<'a>,
    l2: Linear<'a>,
}

impl FeedForward<'_> {
    fn apply(&self, x: &[f32], rows: usize) -> Vec<f32> {
        let mut hidden = self.l1.rows(x, rows);
        for v in hidden.iter_mut() {
            *v = v.max(0.0);
        }
        self.l2.rows(&hidden, rows)
    }
}

struct EncoderLayer<'a> {
    attn: Attention<'a>,
    ln1: Norm<'a>,
    ff: FeedForward<'a>,
    ln2: Norm<'a>,
}

struct DecoderLayer<'a> {
    self_attn: Attention<'a>,
    ln1: Norm<'a>,
    cross: Attention<'a>,
    ln2: Norm<'a>,
    ff: FeedForward<'a>,
    ln3: Norm<'a>,
}

fn add_into(x: &mut [f32], y: &[f32]) {
    for (a, b) in x.iter_mut().zip(y) {
        *a += *b;
    }
}

fn check(x: &[f32], layer: &str) -> Result<()> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::numeric(format!("non-finite activation in {layer} at element {i}"))),
        None => Ok(()),
    }
}

/// Inference model over a validated bundle. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct Policy {
    bundle: WeightBundle,
}

impl Policy {
    pub fn new(bundle: WeightBundle) -> Self {
        Policy { bundle }
    }

    pub fn bundle(&self) -> &WeightBundle {
        &self.bundle
    }

    pub fn architecture(&self) -> &Architecture {
        self.bundle.architecture()
    }

    fn t(&self, name: &str) -> &Tensor {
        self.bundle.tensor(name).expect("bundle validated against its descriptor")
    }

    fn linear(&self, name: &str) -> Linear<'_> {
        Linear { w: self.t(&format!("{name}.weight")), b: self.t(&format!("{name}.bias")) }
    }

    fn norm(&self, name: &str) -> Norm<'_> {
        Norm { gamma: self.t(&format!("{name}.gamma")), beta: self.t(&format!("{name}.beta")) }
    }

    fn attention(&self, name: &str) -> Attention<'_> {
        let l = |p: &str| Linear { w: self.t(&format!("{name}.w{p}")), b: self.t(&format!("{name}.b{p}")) };
        Attention { q: l("q"), k: l("k"), v: l("v"), o: l("o") }
    }

    /// Token embeddings plus positional embedding, `[memory_len, d]`.
    fn embed(&self, obs: &Observation) -> Vec<f32> {
        let a = self.architecture();
        let d = a.d_model;
        let mut tokens = Vec::with_capacity(a.memory_len() * d);
        let mut buf = vec![0.0f32; d];

        // Latent at its prior mean.
        let z = vec![0.0f32; a.latent_dim];
        self.linear("embed.latent").apply(&z, &mut buf);
        tokens.extend_from_slice(&buf);

        let mean = self.t("norm.pose_mean");
        let std = self.t("norm.pose_std");
        let (pose_l, force_l, deform_l) =
            (self.linear("embed.pose"), self.linear("embed.force"), self.linear("embed.deform"));
        let shape = GridShape::SENSOR;
        for arm in &obs.arms {
            let pose: Vec<f32> = (0..6).map(|k| (arm.pose[k] as f32 - mean.data[k]) / std.data[k]).collect();
            pose_l.apply(&pose, &mut buf);
            tokens.extend_from_slice(&buf);
            for i in 0..shape.nx {
                let col: Vec<f32> =
                    (0..shape.ny).map(|j| arm.force.pressures.get(i, j) as f32 / MAX_PRESSURE_KPA as f32).collect();
                force_l.apply(&col, &mut buf);
                tokens.extend_from_slice(&buf);
            }
            for j in 0..shape.ny {
                let row: Vec<f32> =
                    (0..shape.nx).map(|i| arm.deformation.displacements.get(i, j) as f32 / DEFORM_SCALE_MM).collect();
                deform_l.apply(&row, &mut buf);
                tokens.extend_from_slice(&buf);
            }
        }
        if a.views > 0 {
            let view_l = self.linear("embed.view");
            for v in &obs.views {
                let x: Vec<f32> = v.iter().map(|&p| p as f32).collect();
                view_l.apply(&x, &mut buf);
                tokens.extend_from_slice(&buf);
            }
        }
        add_into(&mut tokens, &self.t("embed.pos").data);
        tokens
    }

    /// Raw head outputs, `[chunk_len, 22 * arms]` row-major, before any
    /// squashing or denormalization.
    pub fn predict_raw(&self, obs: &Observation) -> Result<Vec<f32>> {
        let a = *self.architecture();
        obs.validate(&a)?;
        let d = a.d_model;
        let nm = a.memory_len();
        let mut mem = self.embed(obs);
        check(&mem, "embedding")?;

        for l in 0..a.enc_layers {
            let p = format!("enc.{l}");
            let layer = EncoderLayer {
                attn: self.attention(&format!("{p}.attn")),
                ln1: self.norm(&format!("{p}.ln1")),
                ff: FeedForward { l1: self.linear(&format!("{p}.ff1")), l2: self.linear(&format!("{p}.ff2")) },
                ln2: self.norm(&format!("{p}.ln2")),
            };
            let y = layer.attn.apply(&mem, nm, &mem, nm, d, a.heads);
            add_into(&mut mem, &y);
            layer.ln1.apply_rows(&mut mem, d);
            let y = layer.ff.apply(&mem, nm);
            add_into(&mut mem, &y);
            layer.ln2.apply_rows(&mut mem, d);
            check(&mem, &format!("encoder layer {l}"))?;
        }

        let n = a.chunk_len;
        let mut x = self.t("dec.query").data.clone();
        for l in 0..a.dec_layers {
            let p = format!("dec.{l}");
            let layer = DecoderLayer {
                self_attn: self.attention(&format!("{p}.self")),
                ln1: self.norm(&format!("{p}.ln1")),
                cross: self.attention(&format!("{p}.cross")),
                ln2: self.norm(&format!("{p}.ln2")),
                ff: FeedForward { l1: self.linear(&format!("{p}.ff1")), l2: self.linear(&format!("{p}.ff2")) },
                ln3: self.norm(&format!("{p}.ln3")),
            };
            let y = layer.self_attn.apply(&x, n, &x, n, d, a.heads);
            add_into(&mut x, &y);
            layer.ln1.apply_rows(&mut x, d);
            let y = layer.cross.apply(&x, n, &mem, nm, d, a.heads);
            add_into(&mut x, &y);
            layer.ln2.apply_rows(&mut x, d);
            let y = layer.ff.apply(&x, n);
            add_into(&mut x, &y);
            layer.ln3.apply_rows(&mut x, d);
            check(&x, &format!("decoder layer {l}"))?;
        }

        let out = self.linear("head").rows(&x, n);
        check(&out, "action head")?;
        Ok(out)
    }

    /// Maps one arm's 22 raw outputs to an action.
    pub fn decode_arm(&self, raw: &[f32]) -> ArmAction {
        let mean = &self.t("norm.action_mean").data;
        let std = &self.t("norm.action_std").data;
        let denorm = |k: usize| (raw[k] * std[k] + mean[k]) as f64;
        let mut joints = [0.0; JOINTS];
        for (q, j) in joints.iter_mut().enumerate() {
            *j = denorm(6 + q);
        }
        ArmAction {
            position: [denorm(0), denorm(1), denorm(2)],
            orientation: [squash_orientation(raw[3]), squash_orientation(raw[4]), squash_orientation(raw[5])],
            joints,
            compliance: squash_compliance([raw[19], raw[20], raw[21]]),
        }
    }

    pub fn predict_chunk(&self, obs: &Observation, start_tick: u64) -> Result<ActionChunk> {
        let raw = self.predict_raw(obs)?;
        let width = self.architecture().output_dim();
        let actions = raw
            .chunks_exact(width)
            .map(|row| Action { arms: row.chunks_exact(ACTION_DIM).map(|r| self.decode_arm(r)).collect() })
            .collect();
        ActionChunk::new(start_tick, actions)
    }
}
