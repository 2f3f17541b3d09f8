//! LPV system data: matrix families affine in the scheduling variable.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rowmajor;
use crate::Real;

/// Continuous-time LPV system with scalar output,
///
/// ```text
/// x' = A(p) x + B(p) u + b(p),   x(0) = 0,
/// y  = C(p) x,
/// ```
///
/// where every family is affine in `p`: `A(p) = A_0 + sum_i p_i A_i`.
/// Index 0 of each sequence is the constant term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRecord<T>", into = "SystemRecord<T>", bound = "T: Real")]
pub struct LpvSystem<T: Real> {
    n_x: usize,
    n_in: usize,
    n_p: usize,
    a: Vec<DMatrix<T>>,
    b: Vec<DMatrix<T>>,
    c: Vec<DMatrix<T>>,
    bias: Vec<DVector<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct SystemRecord<T: Real> {
    n_x: usize,
    n_in: usize,
    n_p: usize,
    #[serde(rename = "A", with = "rowmajor::matrix_seq")]
    a: Vec<DMatrix<T>>,
    #[serde(rename = "B", with = "rowmajor::matrix_seq")]
    b: Vec<DMatrix<T>>,
    #[serde(rename = "C", with = "rowmajor::matrix_seq")]
    c: Vec<DMatrix<T>>,
    #[serde(rename = "b", with = "rowmajor::vector_seq")]
    bias: Vec<DVector<T>>,
}

impl<T: Real> TryFrom<SystemRecord<T>> for LpvSystem<T> {
    type Error = Error;

    fn try_from(r: SystemRecord<T>) -> Result<Self> {
        let sys = LpvSystem::new(r.a, r.b, r.c, r.bias)?;
        if (sys.n_x, sys.n_in, sys.n_p) != (r.n_x, r.n_in, r.n_p) {
            return Err(Error::Dimension(format!(
                "declared (n_x, n_in, n_p) = ({}, {}, {}) but matrices imply ({}, {}, {})",
                r.n_x, r.n_in, r.n_p, sys.n_x, sys.n_in, sys.n_p
            )));
        }
        Ok(sys)
    }
}

impl<T: Real> From<LpvSystem<T>> for SystemRecord<T> {
    fn from(s: LpvSystem<T>) -> Self {
        SystemRecord {
            n_x: s.n_x,
            n_in: s.n_in,
            n_p: s.n_p,
            a: s.a,
            b: s.b,
            c: s.c,
            bias: s.bias,
        }
    }
}

impl<T: Real> LpvSystem<T> {
    /// Builds a system from its matrix families, inferring the dimensions
    /// from `a[0]` and `b[0]`.
    pub fn new(
        a: Vec<DMatrix<T>>,
        b: Vec<DMatrix<T>>,
        c: Vec<DMatrix<T>>,
        bias: Vec<DVector<T>>,
    ) -> Result<Self> {
        let first = a
            .first()
            .ok_or_else(|| Error::Dimension("A must contain at least A_0".into()))?;
        let n_x = first.nrows();
        let n_p = a.len() - 1;
        let n_in = b.first().map(|m| m.ncols()).unwrap_or(0);
        if n_x == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        for (name, len) in [("B", b.len()), ("C", c.len()), ("b", bias.len())] {
            if len != n_p + 1 {
                return Err(Error::Dimension(format!(
                    "{name} has {len} entries, expected n_p + 1 = {}",
                    n_p + 1
                )));
            }
        }
        for (i, m) in a.iter().enumerate() {
            check_shape(m, n_x, n_x, &format!("A[{i}]"))?;
        }
        for (i, m) in b.iter().enumerate() {
            check_shape(m, n_x, n_in, &format!("B[{i}]"))?;
        }
        for (i, m) in c.iter().enumerate() {
            check_shape(m, 1, n_x, &format!("C[{i}]"))?;
        }
        for (i, v) in bias.iter().enumerate() {
            if v.len() != n_x {
                return Err(Error::Dimension(format!(
                    "b[{i}] has length {}, expected {n_x}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("b[{i}]")));
            }
        }
        Ok(LpvSystem {
            n_x,
            n_in,
            n_p,
            a,
            b,
            c,
            bias,
        })
    }

    /// System with every block zero.
    pub fn zeros(n_x: usize, n_in: usize, n_p: usize) -> Self {
        LpvSystem {
            n_x,
            n_in,
            n_p,
            a: vec![DMatrix::zeros(n_x, n_x); n_p + 1],
            b: vec![DMatrix::zeros(n_x, n_in); n_p + 1],
            c: vec![DMatrix::zeros(1, n_x); n_p + 1],
            bias: vec![DVector::zeros(n_x); n_p + 1],
        }
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_p(&self) -> usize {
        self.n_p
    }

    pub fn a(&self) -> &[DMatrix<T>] {
        &self.a
    }

    pub fn b(&self) -> &[DMatrix<T>] {
        &self.b
    }

    pub fn c(&self) -> &[DMatrix<T>] {
        &self.c
    }

    pub fn bias(&self) -> &[DVector<T>] {
        &self.bias
    }

    /// Replaces one block, keeping the shape checks.
    pub fn set_a(&mut self, i: usize, m: DMatrix<T>) -> Result<()> {
        check_shape(&m, self.n_x, self.n_x, &format!("A[{i}]"))?;
        self.check_index(i, "A")?;
        self.a[i] = m;
        Ok(())
    }

    pub fn set_b(&mut self, i: usize, m: DMatrix<T>) -> Result<()> {
        check_shape(&m, self.n_x, self.n_in, &format!("B[{i}]"))?;
        self.check_index(i, "B")?;
        self.b[i] = m;
        Ok(())
    }

    pub fn set_c(&mut self, i: usize, m: DMatrix<T>) -> Result<()> {
        check_shape(&m, 1, self.n_x, &format!("C[{i}]"))?;
        self.check_index(i, "C")?;
        self.c[i] = m;
        Ok(())
    }

    pub fn set_bias(&mut self, i: usize, v: DVector<T>) -> Result<()> {
        if v.len() != self.n_x {
            return Err(Error::Dimension(format!("b[{i}] must have length {}", self.n_x)));
        }
        self.check_index(i, "b")?;
        self.bias[i] = v;
        Ok(())
    }

    fn check_index(&self, i: usize, name: &str) -> Result<()> {
        if i > self.n_p {
            return Err(Error::Dimension(format!(
                "{name}[{i}] out of range for n_p = {}",
                self.n_p
            )));
        }
        Ok(())
    }

    /// `true` when every affine term `b_i` is zero.
    pub fn is_bias_free(&self) -> bool {
        self.bias.iter().all(|v| v.iter().all(|x| *x == T::zero()))
    }

    /// Removes the affine terms by appending `b_i` as an extra input column
    /// of `B_i`. Driving the result with `(u, 1)` reproduces the original.
    pub fn normalize_affine(&self) -> Self {
        let b = self
            .b
            .iter()
            .zip(&self.bias)
            .map(|(bi, bias)| {
                let mut ext = bi.clone().resize_horizontally(self.n_in + 1, T::zero());
                ext.set_column(self.n_in, bias);
                ext
            })
            .collect();
        LpvSystem {
            n_x: self.n_x,
            n_in: self.n_in + 1,
            n_p: self.n_p,
            a: self.a.clone(),
            b,
            c: self.c.clone(),
            bias: vec![DVector::zeros(self.n_x); self.n_p + 1],
        }
    }

    /// `A(p) = A_0 + sum_i p_i A_i`, written into `out`.
    pub fn a_at(&self, p: &[T], out: &mut DMatrix<T>) {
        affine_combination(&self.a, p, out);
    }

    pub fn b_at(&self, p: &[T], out: &mut DMatrix<T>) {
        affine_combination(&self.b, p, out);
    }

    pub fn c_at(&self, p: &[T], out: &mut DMatrix<T>) {
        affine_combination(&self.c, p, out);
    }

    pub fn bias_at(&self, p: &[T], out: &mut DVector<T>) {
        out.copy_from(&self.bias[0]);
        for (pi, v) in p.iter().zip(&self.bias[1..]) {
            out.axpy(*pi, v, T::one());
        }
    }

    /// Frozen-scheduling LTI matrices `(A(p), B(p), C(p))`.
    pub fn frozen(&self, p: &[T]) -> (DMatrix<T>, DMatrix<T>, DMatrix<T>) {
        let mut a = DMatrix::zeros(self.n_x, self.n_x);
        let mut b = DMatrix::zeros(self.n_x, self.n_in);
        let mut c = DMatrix::zeros(1, self.n_x);
        self.a_at(p, &mut a);
        self.b_at(p, &mut b);
        self.c_at(p, &mut c);
        (a, b, c)
    }

    /// Largest spectral norm over `B_0..B_{n_p}`.
    pub fn max_b_norm(&self) -> T {
        self.b.iter().map(spectral_norm).fold(T::zero(), T::max)
    }

    /// Largest Euclidean norm over the output rows `C_0..C_{n_p}`.
    pub fn max_c_norm(&self) -> T {
        self.c.iter().map(spectral_norm).fold(T::zero(), T::max)
    }

    /// Returns a copy with every output row multiplied by `alpha`.
    pub fn scale_output(&self, alpha: T) -> Self {
        let mut s = self.clone();
        for c in &mut s.c {
            *c *= alpha;
        }
        s
    }
}

fn affine_combination<T: Real>(family: &[DMatrix<T>], p: &[T], out: &mut DMatrix<T>) {
    out.copy_from(&family[0]);
    for (pi, m) in p.iter().zip(&family[1..]) {
        if *pi != T::zero() {
            out.zip_apply(m, |o, v| *o += *pi * v);
        }
    }
}

fn check_shape<T: Real>(m: &DMatrix<T>, rows: usize, cols: usize, name: &str) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(Error::Dimension(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

/// Largest singular value; zero for empty matrices.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone()
        .singular_values()
        .iter()
        .copied()
        .fold(T::zero(), T::max)
}
