//! Stability certificates for LPV systems: the LMI matrix, the generalized
//! Lyapunov equality, the weighted H2 trace formula, and the spectral decay
//! check with its closed-form bound on the weighted H2 norm.

use nalgebra::{DMatrix, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::{spectral_norm, LpvSystem};
use crate::{rowmajor, Real};

/// Witness `(Q, lambda)` of the LMI
/// `A_0'Q + QA_0 + sum A_i'QA_i + sum C_i'C_i + lambda Q < 0`, `Q > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct StabilityCertificate<T: Real> {
    pub lambda: T,
    #[serde(rename = "Q", with = "rowmajor::matrix")]
    pub q: DMatrix<T>,
    /// Largest eigenvalue of the LMI matrix; negative when certified.
    pub margin: T,
    /// `sum_i trace(B_i' Q B_i)`.
    pub h2_sq: T,
}

/// `||exp(A_0 t)|| <= exp(-gamma t / 2)` with `gamma >= Gamma + n_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SpectralDecayCert<T: Real> {
    pub gamma: T,
    #[serde(rename = "Gamma")]
    pub big_gamma: T,
    pub mu2: T,
}

/// Which denominator to use in the closed-form weighted H2 bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KOmegaVariant {
    /// `1/lambda + 1/(gamma - lambda + Gamma)`.
    Printed,
    /// `1/lambda + 1/(gamma - lambda - Gamma)`.
    Corrected,
}

/// Result of the generalized Lyapunov equality solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovSolution<T: Real> {
    pub q: DMatrix<T>,
    /// Max-abs entry of `L(Q) + sum C_i'C_i`.
    pub residual: T,
    pub min_eig: T,
    pub positive_definite: bool,
}

fn check_square<T: Real>(sys: &LpvSystem<T>, q: &DMatrix<T>) -> Result<()> {
    let n = sys.n_x();
    if q.nrows() != n || q.ncols() != n {
        return Err(Error::Dimension(format!(
            "Q is {}x{}, expected {n}x{n}",
            q.nrows(),
            q.ncols()
        )));
    }
    Ok(())
}

/// `sum_{i=0}^{n_p} C_i' C_i`.
pub fn output_gramian_rhs<T: Real>(sys: &LpvSystem<T>) -> DMatrix<T> {
    let n = sys.n_x();
    let mut acc = DMatrix::zeros(n, n);
    for c in sys.c() {
        acc += c.transpose() * c;
    }
    acc
}

/// `A_0'Q + QA_0 + lambda Q + sum_{i>=1} A_i'QA_i`.
pub fn apply_operator<T: Real>(sys: &LpvSystem<T>, q: &DMatrix<T>, lambda: T) -> DMatrix<T> {
    let a0 = &sys.a()[0];
    let mut s = a0.transpose() * q + q * a0 + q * lambda;
    for ai in &sys.a()[1..] {
        s += ai.transpose() * q * ai;
    }
    s
}

/// The LMI matrix `S = A_0'Q + QA_0 + sum A_i'QA_i + sum C_i'C_i + lambda Q`.
pub fn lmi_matrix<T: Real>(sys: &LpvSystem<T>, q: &DMatrix<T>, lambda: T) -> Result<DMatrix<T>> {
    check_square(sys, q)?;
    Ok(apply_operator(sys, q, lambda) + output_gramian_rhs(sys))
}

fn symmetrize<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

fn max_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::min_value().unwrap_or(-T::one() / T::zero()), T::max)
}

fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    symmetrize(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or(T::one() / T::zero()), T::min)
}

/// Positive definiteness threshold: `min_eig > 1e-12 * max(1, ||Q||)`.
fn pd_threshold<T: Real>(q: &DMatrix<T>) -> T {
    T::lit(1e-12) * T::one().max(spectral_norm(q))
}

pub fn is_positive_definite<T: Real>(q: &DMatrix<T>) -> bool {
    min_eigenvalue(q) > pd_threshold(q)
}

/// Largest eigenvalue of the LMI matrix; the stability assumption holds
/// with this `(Q, lambda)` iff the result is negative.
pub fn check_stability<T: Real>(sys: &LpvSystem<T>, q: &DMatrix<T>, lambda: T) -> Result<T> {
    check_square(sys, q)?;
    if lambda < T::from_count(sys.n_p()) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {} must be at least n_p = {}",
            lambda.to_f64_lossy(),
            sys.n_p()
        )));
    }
    if !is_positive_definite(q) {
        return Err(Error::NotPositiveDefinite {
            min_eig: min_eigenvalue(q).to_f64_lossy(),
        });
    }
    Ok(max_eigenvalue(&lmi_matrix(sys, q, lambda)?))
}

/// The generalized Lyapunov operator `Q -> A_0'Q + QA_0 + lambda Q + sum A_i'QA_i`
/// as an `n^2 x n^2` matrix acting on column-major `vec(Q)`, factored once.
pub struct GeneralizedLyapunov<'a, T: Real> {
    sys: &'a LpvSystem<T>,
    lambda: T,
    lu: LU<T, Dyn, Dyn>,
}

impl<'a, T: Real> GeneralizedLyapunov<'a, T> {
    pub fn new(sys: &'a LpvSystem<T>, lambda: T) -> Result<Self> {
        let n = sys.n_x();
        let eye = DMatrix::<T>::identity(n, n);
        let a0t = sys.a()[0].transpose();
        // vec(A'Q) = (I (x) A') vec(Q), vec(QA) = (A' (x) I) vec(Q)
        let mut op = eye.kronecker(&a0t) + a0t.kronecker(&eye);
        for i in 0..n * n {
            op[(i, i)] += lambda;
        }
        for ai in &sys.a()[1..] {
            let ait = ai.transpose();
            op += ait.kronecker(&ait);
        }
        let lu = op.lu();
        let diag = lu.u().diagonal();
        let scale = diag.iter().fold(T::zero(), |m, d| m.max(d.abs()));
        let tiny = diag.iter().fold(scale, |m, d| m.min(d.abs()));
        let tol = T::from_count(n * n) * T::default_epsilon() * scale;
        if !(scale > T::zero()) || tiny <= tol {
            return Err(Error::SingularOperator {
                lambda: lambda.to_f64_lossy(),
            });
        }
        Ok(GeneralizedLyapunov { sys, lambda, lu })
    }

    pub fn apply(&self, q: &DMatrix<T>) -> DMatrix<T> {
        apply_operator(self.sys, q, self.lambda)
    }

    /// Solves `L(Q) = rhs` with one step of iterative refinement.
    pub fn solve(&self, rhs: &DMatrix<T>) -> Result<DMatrix<T>> {
        let n = self.sys.n_x();
        let singular = || Error::SingularOperator {
            lambda: self.lambda.to_f64_lossy(),
        };
        let b = nalgebra::DVector::from_column_slice(rhs.as_slice());
        let x = self.lu.solve(&b).ok_or_else(singular)?;
        let mut q = DMatrix::from_column_slice(n, n, x.as_slice());
        let r = rhs - self.apply(&q);
        let rv = nalgebra::DVector::from_column_slice(r.as_slice());
        if let Some(dx) = self.lu.solve(&rv) {
            q += DMatrix::from_column_slice(n, n, dx.as_slice());
        }
        let q = symmetrize(&q);
        if q.iter().any(|v| !v.is_finite()) {
            return Err(singular());
        }
        Ok(q)
    }
}

/// Max-abs entry of `L(Q) + sum C_i'C_i`.
pub fn lyapunov_residual<T: Real>(sys: &LpvSystem<T>, q: &DMatrix<T>, lambda: T) -> T {
    (apply_operator(sys, q, lambda) + output_gramian_rhs(sys))
        .iter()
        .fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Solves `A_0'Q + QA_0 + lambda Q + sum A_i'QA_i = -(sum C_i'C_i)` by
/// Kronecker vectorization. A singular operator or an indefinite solution
/// is an error; a semidefinite but singular `Q` is returned with
/// `positive_definite = false`.
pub fn solve_generalized_lyapunov<T: Real>(
    sys: &LpvSystem<T>,
    lambda: T,
) -> Result<LyapunovSolution<T>> {
    if lambda < T::from_count(sys.n_p()) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {} must be at least n_p = {}",
            lambda.to_f64_lossy(),
            sys.n_p()
        )));
    }
    let op = GeneralizedLyapunov::new(sys, lambda)?;
    let q = op.solve(&-output_gramian_rhs(sys))?;
    let min_eig = min_eigenvalue(&q);
    let tol = pd_threshold(&q);
    if min_eig < -tol {
        return Err(Error::NotPositiveDefinite {
            min_eig: min_eig.to_f64_lossy(),
        });
    }
    Ok(LyapunovSolution {
        residual: lyapunov_residual(sys, &q, lambda),
        positive_definite: min_eig > tol,
        min_eig,
        q,
    })
}

/// `sum_{i=0}^{n_p} trace(B_i' Q B_i)`, the squared weighted H2 norm when
/// `Q` solves the generalized Lyapunov equality.
pub fn h2_norm_sq<T: Real>(sys: &LpvSystem<T>, q: &DMatrix<T>) -> Result<T> {
    check_square(sys, q)?;
    Ok(sys
        .b()
        .iter()
        .map(|b| (b.transpose() * q * b).trace())
        .fold(T::zero(), |a, v| a + v))
}

/// Builds a strict certificate at `lambda`.
///
/// The equality solution `Q_eq` makes the LMI matrix exactly zero, so the
/// stored witness is `Q_eq + eps * Q_I` with `L(Q_I) = -I`, which gives
/// `S = -eps I`. `eps` is small enough that `h2_sq` differs from the exact
/// weighted norm only in the ninth significant digit.
pub fn certify<T: Real>(sys: &LpvSystem<T>, lambda: T) -> Result<StabilityCertificate<T>> {
    let eq = solve_generalized_lyapunov(sys, lambda)?;
    if !eq.positive_definite {
        return Err(Error::NotPositiveDefinite {
            min_eig: eq.min_eig.to_f64_lossy(),
        });
    }
    let op = GeneralizedLyapunov::new(sys, lambda)?;
    let n = sys.n_x();
    let q_unit = op.solve(&-DMatrix::<T>::identity(n, n))?;
    let rhs_norm = spectral_norm(&output_gramian_rhs(sys));
    let rel = T::lit(1e-9).max(T::lit(100.0) * T::default_epsilon());
    let eps = rel * rhs_norm;
    let q = &eq.q + q_unit * eps;
    let margin = check_stability(sys, &q, lambda)?;
    if !(margin < T::zero()) {
        return Err(Error::Assumption(format!(
            "LMI margin {:e} is not negative at lambda = {}",
            margin.to_f64_lossy(),
            lambda.to_f64_lossy()
        )));
    }
    Ok(StabilityCertificate {
        lambda,
        h2_sq: h2_norm_sq(sys, &q)?,
        margin,
        q,
    })
}

/// `(mu2, gamma, Gamma)` without checking the assumption: `mu2` is the
/// logarithmic 2-norm of `A_0`, `gamma = -2 mu2`, and
/// `Gamma = n_p * max_{i>=1} ||A_i||^2`.
pub fn decay_rates<T: Real>(sys: &LpvSystem<T>) -> (T, T, T) {
    let mu2 = max_eigenvalue(&sys.a()[0]);
    let max_sq = sys.a()[1..]
        .iter()
        .map(|a| {
            let s = spectral_norm(a);
            s * s
        })
        .fold(T::zero(), T::max);
    (mu2, -mu2 * T::lit(2.0), T::from_count(sys.n_p()) * max_sq)
}

/// Certifies `||exp(A_0 t)|| <= exp(-gamma t/2)` through the logarithmic
/// norm and checks `gamma >= Gamma + n_p`.
pub fn check_spectral_decay<T: Real>(sys: &LpvSystem<T>) -> Result<SpectralDecayCert<T>> {
    let (mu2, gamma, big_gamma) = decay_rates(sys);
    if mu2 >= T::zero() {
        return Err(Error::Assumption(format!(
            "logarithmic norm of A_0 is {:e} >= 0; no exponential decay certified",
            mu2.to_f64_lossy()
        )));
    }
    let need = big_gamma + T::from_count(sys.n_p());
    if gamma < need {
        return Err(Error::Assumption(format!(
            "gamma = {} < Gamma + n_p = {}",
            gamma.to_f64_lossy(),
            need.to_f64_lossy()
        )));
    }
    Ok(SpectralDecayCert {
        gamma,
        big_gamma,
        mu2,
    })
}

/// Closed-form bound `K_omega^2 = (n_p+1)^2 K_C^2 K_B^2 (1/lambda + 1/den)`
/// with `den = gamma - lambda +/- Gamma` depending on `variant`.
pub fn k_omega_sq<T: Real>(
    cert: &SpectralDecayCert<T>,
    lambda: T,
    k_b: T,
    k_c: T,
    n_p: usize,
    variant: KOmegaVariant,
) -> Result<T> {
    let upper = cert.gamma - cert.big_gamma;
    if lambda < T::from_count(n_p) || lambda > upper || !(lambda > T::zero()) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {} outside [max(n_p, 0+), gamma - Gamma] = [{}, {}]",
            lambda.to_f64_lossy(),
            n_p,
            upper.to_f64_lossy()
        )));
    }
    let den = match variant {
        KOmegaVariant::Printed => cert.gamma - lambda + cert.big_gamma,
        KOmegaVariant::Corrected => cert.gamma - lambda - cert.big_gamma,
    };
    let np1 = T::from_count(n_p + 1);
    Ok(np1 * np1 * k_c * k_c * k_b * k_b * (T::one() / lambda + T::one() / den))
}
