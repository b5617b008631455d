//! Regular 2D node grids, the 5-point Laplacian, and a banded Cholesky
//! solver for the screened systems `(alpha I - beta ∇²) x = b` that the
//! simulator, the tactile smoother and the inner control loop all solve.
//!
//! Nodes are stored row-major: node `(i, j)` lives at `j * nx + i`, with
//! `i` running along x (width) and `j` along y (height).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the tactile matrix (x direction).
pub const SENSOR_NX: usize = 12;
/// Height of the tactile matrix (y direction).
pub const SENSOR_NY: usize = 10;
/// Default node spacing in metres.
pub const SENSOR_SPACING: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
}

impl GridShape {
    pub const SENSOR: GridShape = GridShape { nx: SENSOR_NX, ny: SENSOR_NY };

    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::config(format!("grid {nx}x{ny} has no nodes")));
        }
        Ok(GridShape { nx, ny })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Neighbours of node `idx` in the order -x, +x, -y, +y. `None` marks a
    /// neighbour that falls outside the grid.
    #[inline]
    pub fn neighbours(&self, idx: usize) -> [Option<usize>; 4] {
        let (i, j) = self.coords(idx);
        [
            (i > 0).then(|| idx - 1),
            (i + 1 < self.nx).then(|| idx + 1),
            (j > 0).then(|| idx - self.nx),
            (j + 1 < self.ny).then(|| idx + self.nx),
        ]
    }

    pub fn is_edge(&self, idx: usize) -> bool {
        let (i, j) = self.coords(idx);
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    pub fn ensure_same(&self, other: &GridShape, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::config(format!(
                "{what}: grid {}x{} does not match {}x{}",
                other.nx, other.ny, self.nx, self.ny
            )));
        }
        Ok(())
    }
}

/// Scalar field over a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub shape: GridShape,
    pub data: Vec<f64>,
}

impl Field {
    pub fn zeros(shape: GridShape) -> Self {
        Field { shape, data: vec![0.0; shape.len()] }
    }

    pub fn filled(shape: GridShape, value: f64) -> Self {
        Field { shape, data: vec![value; shape.len()] }
    }

    pub fn from_vec(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::config(format!(
                "field has {} values, grid {}x{} needs {}",
                data.len(),
                shape.nx,
                shape.ny,
                shape.len()
            )));
        }
        Ok(Field { shape, data })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.shape.index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.shape.index(i, j);
        self.data[idx] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { shape: self.shape, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Max-norm of `self - other`.
    pub fn max_diff(&self, other: &Field) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub shape: GridShape,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn empty(shape: GridShape) -> Self {
        Mask { shape, data: vec![false; shape.len()] }
    }

    pub fn full(shape: GridShape) -> Self {
        Mask { shape, data: vec![true; shape.len()] }
    }

    /// Axis-aligned rectangle `[i0, i1) x [j0, j1)`, clipped to the grid.
    pub fn rect(shape: GridShape, i0: usize, i1: usize, j0: usize, j1: usize) -> Self {
        let mut m = Mask::empty(shape);
        for j in j0..j1.min(shape.ny) {
            for i in i0..i1.min(shape.nx) {
                m.data[shape.index(i, j)] = true;
            }
        }
        m
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn get(&self, idx: usize) -> bool {
        self.data[idx]
    }
}

/// Condition applied where the grid ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Boundary {
    /// Zero normal flux across the grid edge.
    #[default]
    Neumann,
    /// Non-contact edge nodes pinned at zero.
    DirichletZero,
}

/// Role of a node in a screened solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRole {
    /// Unknown.
    Active,
    /// Known value; couples into the right-hand side of its active neighbours.
    Fixed(f64),
    /// Not part of the domain. Active neighbours see a zero-flux wall.
    Excluded,
}

/// Discrete 5-point Laplacian with zero-flux treatment of missing neighbours,
/// restricted to nodes where `include` is true (all nodes when `None`).
pub fn laplacian(field: &Field, h: f64, include: Option<&Mask>) -> Field {
    let shape = field.shape;
    let inv_h2 = 1.0 / (h * h);
    let mut out = Field::zeros(shape);
    let inside = |idx: usize| include.is_none_or(|m| m.data[idx]);
    for idx in 0..shape.len() {
        if !inside(idx) {
            continue;
        }
        let c = field.data[idx];
        let mut acc = 0.0;
        for n in shape.neighbours(idx).into_iter().flatten() {
            if inside(n) {
                acc += field.data[n] - c;
            }
        }
        out.data[idx] = acc * inv_h2;
    }
    out
}

/// Lower band of a symmetric positive-definite matrix with half-bandwidth
/// `bw`. Row `r` stores entries `(r, r - bw) ..= (r, r)`.
struct BandedSpd {
    n: usize,
    bw: usize,
    band: Vec<f64>,
}

impl BandedSpd {
    fn new(n: usize, bw: usize) -> Self {
        BandedSpd { n, bw, band: vec![0.0; n * (bw + 1)] }
    }

    #[inline]
    fn slot(&self, r: usize, c: usize) -> usize {
        debug_assert!(c <= r && r - c <= self.bw);
        r * (self.bw + 1) + (self.bw - (r - c))
    }

    #[inline]
    fn add(&mut self, r: usize, c: usize, v: f64) {
        let (r, c) = if c > r { (c, r) } else { (r, c) };
        let s = self.slot(r, c);
        self.band[s] += v;
    }

    /// In-place Cholesky factorisation `A = L Lᵀ`.
    fn factor(&mut self) -> Result<()> {
        for r in 0..self.n {
            let r0 = r.saturating_sub(self.bw);
            for c in r0..=r {
                let c0 = c.saturating_sub(self.bw).max(r0);
                let orig = self.band[self.slot(r, c)];
                let mut sum = orig;
                for k in c0..c {
                    sum -= self.band[self.slot(r, k)] * self.band[self.slot(c, k)];
                }
                if r == c {
                    if !(sum > 1e-12 * orig.abs()) || !sum.is_finite() {
                        return Err(Error::numeric(format!("screened system not positive definite at row {r}")));
                    }
                    let s = self.slot(r, r);
                    self.band[s] = sum.sqrt();
                } else {
                    let s = self.slot(r, c);
                    self.band[s] = sum / self.band[self.slot(c, c)];
                }
            }
        }
        Ok(())
    }

    fn solve_in_place(&self, x: &mut [f64]) {
        for r in 0..self.n {
            let r0 = r.saturating_sub(self.bw);
            let mut sum = x[r];
            for k in r0..r {
                sum -= self.band[self.slot(r, k)] * x[k];
            }
            x[r] = sum / self.band[self.slot(r, r)];
        }
        for r in (0..self.n).rev() {
            let mut sum = x[r];
            let r1 = (r + self.bw).min(self.n - 1);
            for k in r + 1..=r1 {
                sum -= self.band[self.slot(k, r)] * x[k];
            }
            x[r] = sum / self.band[self.slot(r, r)];
        }
    }
}

/// Solves `alpha x - beta ∇²x = rhs` over the active nodes of `roles`.
///
/// Fixed nodes return their prescribed value; excluded nodes return the
/// corresponding `rhs` entry untouched. Grid edges follow `edge`:
/// `Neumann` drops the missing neighbour, `DirichletZero` treats it as a
/// zero-valued fixed neighbour.
pub fn solve_screened(
    shape: GridShape,
    h: f64,
    alpha: f64,
    beta: f64,
    roles: &[NodeRole],
    rhs: &[f64],
    edge: Boundary,
) -> Result<Vec<f64>> {
    let n = shape.len();
    if roles.len() != n || rhs.len() != n {
        return Err(Error::config("screened solve: role/rhs length mismatch"));
    }
    if !(alpha.is_finite() && beta.is_finite() && h > 0.0) || alpha < 0.0 || beta < 0.0 {
        return Err(Error::numeric(format!("screened solve: invalid coefficients alpha={alpha} beta={beta} h={h}")));
    }
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("screened solve: non-finite right-hand side"));
    }
    let coupling = beta / (h * h);
    let mut mat = BandedSpd::new(n, shape.nx);
    let mut b = vec![0.0; n];
    for idx in 0..n {
        match roles[idx] {
            NodeRole::Fixed(v) => {
                mat.add(idx, idx, 1.0);
                b[idx] = v;
            }
            NodeRole::Excluded => {
                mat.add(idx, idx, 1.0);
                b[idx] = rhs[idx];
            }
            NodeRole::Active => {
                let mut diag = alpha;
                let mut bi = rhs[idx];
                for nb in shape.neighbours(idx) {
                    match nb {
                        None => {
                            if edge == Boundary::DirichletZero {
                                diag += coupling;
                            }
                        }
                        Some(m) => match roles[m] {
                            NodeRole::Active => {
                                diag += coupling;
                                if m < idx {
                                    mat.add(idx, m, -coupling);
                                }
                            }
                            NodeRole::Fixed(v) => {
                                diag += coupling;
                                bi += coupling * v;
                            }
                            NodeRole::Excluded => {}
                        },
                    }
                }
                mat.add(idx, idx, diag);
                b[idx] = bi;
            }
        }
    }
    mat.factor()?;
    mat.solve_in_place(&mut b);
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("screened solve produced non-finite values"));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn neighbours_respect_edges() {
        let s = GridShape::new(3, 2).unwrap();
        assert_eq!(s.neighbours(0), [None, Some(1), None, Some(3)]);
        assert_eq!(s.neighbours(5), [Some(4), None, Some(2), None]);
    }

    #[test]
    fn laplacian_of_constant_is_zero() {
        let s = GridShape::SENSOR;
        let f = Field::filled(s, 3.5);
        assert_eq!(laplacian(&f, 2e-3, None).max_abs(), 0.0);
    }

    #[test]
    fn screened_identity_when_beta_zero() {
        let s = GridShape::new(4, 3).unwrap();
        let rhs: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let roles = vec![NodeRole::Active; 12];
        let x = solve_screened(s, 1.0, 1.0, 0.0, &roles, &rhs, Boundary::Neumann).unwrap();
        assert_eq!(x, rhs);
    }

    #[test]
    fn screened_residual_is_small() {
        let s = GridShape::new(5, 4).unwrap();
        let h = 0.1;
        let mut roles = vec![NodeRole::Active; s.len()];
        roles[7] = NodeRole::Fixed(2.0);
        roles[12] = NodeRole::Excluded;
        let rhs: Vec<f64> = (0..s.len()).map(|v| (v as f64 * 0.37).sin()).collect();
        let (alpha, beta) = (1.3, 0.02);
        let x = solve_screened(s, h, alpha, beta, &roles, &rhs, Boundary::DirichletZero).unwrap();
        for idx in 0..s.len() {
            if roles[idx] != NodeRole::Active {
                continue;
            }
            let mut lap = 0.0;
            for nb in s.neighbours(idx) {
                match nb {
                    None => lap += 0.0 - x[idx],
                    Some(m) if roles[m] == NodeRole::Excluded => {}
                    Some(m) => lap += x[m] - x[idx],
                }
            }
            let r = alpha * x[idx] - beta * lap / (h * h) - rhs[idx];
            assert!(r.abs() < 1e-12, "residual {r} at {idx}");
        }
        assert_eq!(x[7], 2.0);
        assert_eq!(x[12], rhs[12]);
    }

    #[test]
    fn singular_system_reported() {
        let s = GridShape::new(3, 3).unwrap();
        let roles = vec![NodeRole::Active; 9];
        let err = solve_screened(s, 1.0, 0.0, 1.0, &roles, &[0.0; 9], Boundary::Neumann);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
