//! `CFA1` weight bundle container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      b"CFA1"
//! version    u32
//! n_desc     u32, then n_desc x (u32 len, key utf-8, u32 len, value utf-8)
//! n_tensor   u32, then n_tensor x (u32 len, name utf-8, u32 rank, rank x u32 dim, u64 offset)
//! data       f32 little-endian; offsets are bytes from the start of this block
//! crc        u32, CRC-32 (IEEE) of every preceding byte
//! ```
//!
//! Matrices are stored row-major as `[in, out]` so a layer computes `x W + b`.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CFA1";
pub const FORMAT_VERSION: u32 = 1;

/// Per-arm action width.
pub const ACTION_DIM: usize = 22;
/// Token order the runtime implements; bundles must declare it verbatim.
pub const TOKEN_ORDER: &str = "latent;arm*(pose,force_x0..11,deform_y0..9);view*";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!("dims {dims:?} need {n} values, got {}", data.len())));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor { dims, data: vec![0.0; n] }
    }
}

/// Architecture read from the descriptor block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub d_model: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
    /// Actions per chunk.
    pub chunk_len: usize,
    pub arms: usize,
    pub latent_dim: usize,
    /// Optional rendered views, each a 12x10 grid.
    pub views: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            d_model: 64,
            enc_layers: 2,
            dec_layers: 2,
            heads: 4,
            ff_dim: 256,
            chunk_len: 10,
            arms: 1,
            latent_dim: 32,
            views: 0,
        }
    }
}

pub const VIEW_LEN: usize = 120;
const POSE_LEN: usize = 6;
const FORCE_TOKEN_LEN: usize = 10;
const DEFORM_TOKEN_LEN: usize = 12;
const FORCE_TOKENS: usize = 12;
const DEFORM_TOKENS: usize = 10;

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("chunk_len", self.chunk_len),
            ("arms", self.arms),
            ("latent_dim", self.latent_dim),
        ];
        for (k, v) in pos {
            if v == 0 {
                return Err(Error::Shape(format!("descriptor {k} must be >= 1")));
            }
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Shape(format!("d_model {} not divisible by {} heads", self.d_model, self.heads)));
        }
        if self.arms > 2 {
            return Err(Error::Shape(format!("{} arms; at most 2 supported", self.arms)));
        }
        Ok(())
    }

    pub fn tokens_per_arm(&self) -> usize {
        1 + FORCE_TOKENS + DEFORM_TOKENS
    }

    pub fn memory_len(&self) -> usize {
        1 + self.arms * self.tokens_per_arm() + self.views
    }

    pub fn output_dim(&self) -> usize {
        ACTION_DIM * self.arms
    }

    pub fn to_descriptor(&self) -> Vec<(String, String)> {
        let mut d: Vec<(String, String)> = [
            ("d_model", self.d_model),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("chunk_len", self.chunk_len),
            ("arms", self.arms),
            ("latent_dim", self.latent_dim),
            ("views", self.views),
        ]
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
        d.push(("action_dim".into(), ACTION_DIM.to_string()));
        d.push(("token_order".into(), TOKEN_ORDER.into()));
        d.push(("norm".into(), "post".into()));
        d.push(("activation".into(), "relu".into()));
        d
    }

    pub fn from_descriptor(desc: &[(String, String)]) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            desc.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Format(format!("descriptor lacks '{k}'")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.trim().parse().map_err(|_| Error::Format(format!("descriptor '{k}' is not an integer")))
        };
        for (k, want) in [("token_order", TOKEN_ORDER), ("norm", "post"), ("activation", "relu")] {
            let got = get(k)?;
            if got != want {
                return Err(Error::Format(format!("descriptor {k} = '{got}', runtime implements '{want}'")));
            }
        }
        if num("action_dim")? != ACTION_DIM {
            return Err(Error::Shape(format!("action_dim must be {ACTION_DIM}")));
        }
        let a = Architecture {
            d_model: num("d_model")?,
            enc_layers: num("enc_layers")?,
            dec_layers: num("dec_layers")?,
            heads: num("heads")?,
            ff_dim: num("ff_dim")?,
            chunk_len: num("chunk_len")?,
            arms: num("arms")?,
            latent_dim: num("latent_dim")?,
            views: num("views")?,
        };
        a.validate()?;
        Ok(a)
    }

    /// Every tensor the runtime reads, with its exact shape, in canonical
    /// order.
    pub fn required_tensors(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model;
        let mut t: Vec<(String, Vec<usize>)> = Vec::new();
        let lin = |t: &mut Vec<(String, Vec<usize>)>, name: &str, i: usize, o: usize| {
            t.push((format!("{name}.weight"), vec![i, o]));
            t.push((format!("{name}.bias"), vec![o]));
        };
        let ln = |t: &mut Vec<(String, Vec<usize>)>, name: &str| {
            t.push((format!("{name}.gamma"), vec![d]));
            t.push((format!("{name}.beta"), vec![d]));
        };
        let attn = |t: &mut Vec<(String, Vec<usize>)>, name: &str| {
            for p in ["q", "k", "v", "o"] {
                t.push((format!("{name}.w{p}"), vec![d, d]));
                t.push((format!("{name}.b{p}"), vec![d]));
            }
        };
        t.push(("norm.pose_mean".into(), vec![POSE_LEN]));
        t.push(("norm.pose_std".into(), vec![POSE_LEN]));
        t.push(("norm.action_mean".into(), vec![ACTION_DIM]));
        t.push(("norm.action_std".into(), vec![ACTION_DIM]));
        lin(&mut t, "embed.latent", self.latent_dim, d);
        lin(&mut t, "embed.pose", POSE_LEN, d);
        lin(&mut t, "embed.force", FORCE_TOKEN_LEN, d);
        lin(&mut t, "embed.deform", DEFORM_TOKEN_LEN, d);
        if self.views > 0 {
            lin(&mut t, "embed.view", VIEW_LEN, d);
        }
        t.push(("embed.pos".into(), vec![self.memory_len(), d]));
        for l in 0..self.enc_layers {
            attn(&mut t, &format!("enc.{l}.attn"));
            ln(&mut t, &format!("enc.{l}.ln1"));
            lin(&mut t, &format!("enc.{l}.ff1"), d, self.ff_dim);
            lin(&mut t, &format!("enc.{l}.ff2"), self.ff_dim, d);
            ln(&mut t, &format!("enc.{l}.ln2"));
        }
        t.push(("dec.query".into(), vec![self.chunk_len, d]));
        for l in 0..self.dec_layers {
            attn(&mut t, &format!("dec.{l}.self"));
            ln(&mut t, &format!("dec.{l}.ln1"));
            attn(&mut t, &format!("dec.{l}.cross"));
            ln(&mut t, &format!("dec.{l}.ln2"));
            lin(&mut t, &format!("dec.{l}.ff1"), d, self.ff_dim);
            lin(&mut t, &format!("dec.{l}.ff2"), self.ff_dim, d);
            ln(&mut t, &format!("dec.{l}.ln3"));
        }
        lin(&mut t, "head", d, self.output_dim());
        t
    }
}

/// Validated weights: descriptor plus named tensors in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub version: u32,
    pub descriptor: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor)>,
    arch: Architecture,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(Error::Corruption(format!("unexpected end of bundle at byte {}", self.pos))),
        }
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format("non-utf-8 string in bundle".into()))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl WeightBundle {
    /// Builds a bundle and validates it against its own descriptor.
    pub fn new(descriptor: Vec<(String, String)>, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let arch = Architecture::from_descriptor(&descriptor)?;
        let b = WeightBundle { version: FORMAT_VERSION, descriptor, tensors, arch };
        b.check_tensors()?;
        Ok(b)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn check_tensors(&self) -> Result<()> {
        for (name, dims) in self.arch.required_tensors() {
            let t = self
                .tensor(&name)
                .ok_or_else(|| Error::Shape(format!("tensor '{name}' missing (expected {dims:?})")))?;
            if t.dims != dims {
                return Err(Error::Shape(format!("tensor '{name}' has shape {:?}, expected {dims:?}", t.dims)));
            }
            if t.data.len() != dims.iter().product::<usize>() {
                return Err(Error::Shape(format!("tensor '{name}' storage does not match its shape")));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&(self.descriptor.len() as u32).to_le_bytes());
        for (k, v) in &self.descriptor {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
            offset += 4 * t.data.len() as u64;
        }
        for (_, t) in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses and validates. Nothing is returned unless every check passes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::Format("bad magic; not a CFA1 bundle".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("bundle version {version}, runtime reads {FORMAT_VERSION}")));
        }
        if bytes.len() < 12 {
            return Err(Error::Corruption("bundle too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        let actual = crc32fast::hash(body);
        if stored != actual {
            return Err(Error::Corruption(format!("checksum {actual:08x} does not match stored {stored:08x}")));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let n_desc = r.u32()? as usize;
        let mut descriptor = Vec::with_capacity(n_desc.min(1024));
        for _ in 0..n_desc {
            let k = r.string()?;
            let v = r.string()?;
            descriptor.push((k, v));
        }
        let n_tensor = r.u32()? as usize;
        let mut table = Vec::with_capacity(n_tensor.min(4096));
        for _ in 0..n_tensor {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let offset = r.u64()?;
            table.push((name, dims, offset));
        }
        let data = &body[r.pos..];
        let mut tensors = Vec::with_capacity(table.len());
        for (name, dims, offset) in table {
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let bytes_needed = n.and_then(|n| n.checked_mul(4));
            let start = usize::try_from(offset).ok();
            let range = match (start, bytes_needed) {
                (Some(s), Some(len)) if s % 4 == 0 => s.checked_add(len).filter(|&e| e <= data.len()).map(|e| s..e),
                _ => None,
            };
            let Some(range) = range else {
                return Err(Error::Corruption(format!("tensor '{name}' data lies outside the data block")));
            };
            let values =
                data[range].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            tensors.push((name, Tensor { dims, data: values }));
        }
        let arch = Architecture::from_descriptor(&descriptor)?;
        let b = WeightBundle { version, descriptor, tensors, arch };
        b.check_tensors()?;
        Ok(b)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        WeightBundle::from_bytes(&std::fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Deterministic initialization: uniform weights scaled by fan-in,
    /// small biases, unit layer-norm gains, identity normalization.
    pub fn seeded(arch: Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 24 random bits to [0, 1) exactly, then to [-a, a).
        let mut uniform = |a: f32| -> f32 {
            let u = (rng.next_u32() >> 8) as f32 / 16_777_216.0;
            (2.0 * u - 1.0) * a
        };
        let mut tensors = Vec::new();
        for (name, dims) in arch.required_tensors() {
            let n: usize = dims.iter().product();
            let data: Vec<f32> = if name.ends_with("_std") || name.ends_with(".gamma") {
                vec![1.0; n]
            } else if name.ends_with("_mean") || name.ends_with(".beta") {
                vec![0.0; n]
            } else if dims.len() == 1 {
                (0..n).map(|_| uniform(0.02)).collect()
            } else {
                let a = 1.0 / (dims[0] as f32).sqrt();
                (0..n).map(|_| uniform(a)).collect()
            };
            tensors.push((name, Tensor { dims, data }));
        }
        WeightBundle::new(arch.to_descriptor(), tensors)
    }
}
