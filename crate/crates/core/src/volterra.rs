//! Volterra kernels of LPV systems, the truncated weighted H2 series, and
//! the truncated Volterra expansion of the output.
//!
//! The kernel of order `k` for input block `i_u`, output block `i_y` and
//! path `(i_1, ..., i_k)` is
//!
//! ```text
//! w(t, tau_1..tau_k) = C_{i_y} e^{A_0 (t - tau_k)} A_{i_k} ... A_{i_1} e^{A_0 tau_1} B_{i_u}
//! ```
//!
//! on the ordered simplex `0 <= tau_1 <= ... <= tau_k <= t`, and zero
//! outside it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::signal::{SampledSignal, SchedulingSignal};
use crate::simulate::{simulate, step_count};
use crate::stability::{self, StabilityCertificate};
use crate::system::{spectral_norm, LpvSystem};
use crate::Real;

/// Largest scheduling dimension accepted by explicit path enumeration.
pub const MAX_ENUMERATED_NP: usize = 4;
/// Largest order accepted by explicit path enumeration.
pub const MAX_ENUMERATED_ORDER: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelIndex {
    pub i_u: usize,
    pub i_y: usize,
    /// `(i_1, ..., i_k)`, entries in `1..=n_p`.
    pub path: Vec<usize>,
}

impl KernelIndex {
    pub fn order(&self) -> usize {
        self.path.len()
    }

    pub fn validate(&self, n_p: usize) -> Result<()> {
        if self.i_u > n_p || self.i_y > n_p {
            return Err(Error::Dimension(format!(
                "kernel index (i_u, i_y) = ({}, {}) out of range for n_p = {n_p}",
                self.i_u, self.i_y
            )));
        }
        if let Some(bad) = self.path.iter().find(|&&i| i == 0 || i > n_p) {
            return Err(Error::Dimension(format!(
                "path entry {bad} outside 1..={n_p}"
            )));
        }
        Ok(())
    }
}

/// Truncation of the infinite weighted H2 series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TruncationSpec<T: Real> {
    /// Highest kernel order `K` kept.
    pub max_order: usize,
    /// Cutoff applied to every gap between consecutive kernel times.
    pub horizon: T,
    /// Gauss-Legendre points per panel.
    pub quad_points: usize,
}

impl<T: Real> TruncationSpec<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > T::zero()) || !self.horizon.is_finite() {
            return Err(Error::InvalidArgument("truncation horizon must be positive".into()));
        }
        if self.quad_points < 2 {
            return Err(Error::InvalidArgument("quad_points must be at least 2".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for TruncationSpec<T> {
    fn default() -> Self {
        TruncationSpec {
            max_order: 8,
            horizon: T::lit(40.0),
            quad_points: 12,
        }
    }
}

/// Evaluates one kernel at `(t, tau_1, ..., tau_k)`; returns the
/// `1 x n_in` row. Points outside the ordered simplex give zero.
pub fn kernel_eval<T: Real>(
    sys: &LpvSystem<T>,
    idx: &KernelIndex,
    t: T,
    taus: &[T],
) -> Result<DMatrix<T>> {
    idx.validate(sys.n_p())?;
    if taus.len() != idx.order() {
        return Err(Error::Dimension(format!(
            "kernel of order {} evaluated at {} interior times",
            idx.order(),
            taus.len()
        )));
    }
    let mut times = Vec::with_capacity(taus.len() + 2);
    times.push(T::zero());
    times.extend_from_slice(taus);
    times.push(t);
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Ok(DMatrix::zeros(1, sys.n_in()));
    }
    let a0 = &sys.a()[0];
    // row = C e^{A0 (t - tau_k)}, then walk the path backwards
    let mut row = &sys.c()[idx.i_y] * (a0 * (t - times[times.len() - 2])).exp();
    for (j, &i) in idx.path.iter().enumerate().rev() {
        let gap = times[j + 1] - times[j];
        row = row * &sys.a()[i] * (a0 * gap).exp();
    }
    Ok(row * &sys.b()[idx.i_u])
}

/// Tensor-product Gauss-Legendre rule over one gap variable, with the
/// shifted exponentials `exp((A_0 + lambda/2 I) s)` cached at every node.
struct GapRule<T: Real> {
    weights: Vec<T>,
    exps: Vec<DMatrix<T>>,
}

impl<T: Real> GapRule<T> {
    fn new(sys: &LpvSystem<T>, lambda: T, spec: &TruncationSpec<T>) -> Self {
        let n = sys.n_x();
        let shifted = &sys.a()[0] + DMatrix::<T>::identity(n, n) * (lambda / T::lit(2.0));
        // panels short enough that ||A|| * width <= 1
        let scale = T::one().max(spectral_norm(&shifted));
        let panels = (spec.horizon * scale)
            .ceil()
            .to_usize()
            .unwrap_or(1)
            .clamp(1, 20_000);
        let (nodes, weights) = quadrature::composite(T::zero(), spec.horizon, panels, spec.quad_points);
        let exps = nodes.iter().map(|&s| (&shifted * s).exp()).collect();
        GapRule { weights, exps }
    }

    /// `sum_q w_q E_q' H E_q`, i.e. `int_0^horizon e^{A's} H e^{As} ds`.
    fn integrate(&self, h: &DMatrix<T>) -> DMatrix<T> {
        let n = h.nrows();
        let mut acc = DMatrix::zeros(n, n);
        for (w, e) in self.weights.iter().zip(&self.exps) {
            acc += (e.transpose() * h * e) * *w;
        }
        (&acc + acc.transpose()) * T::lit(0.5)
    }
}

fn input_trace<T: Real>(sys: &LpvSystem<T>, g: &DMatrix<T>) -> T {
    sys.b()
        .iter()
        .map(|b| (b.transpose() * g * b).trace())
        .fold(T::zero(), |a, v| a + v)
}

/// Truncated weighted H2 series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct WeightedH2<T: Real> {
    pub total: T,
    /// Contribution of each order `k = 0..=K`, summed over paths and blocks.
    pub per_order: Vec<T>,
    /// Bound on everything the truncation dropped, when the decay rates allow one.
    pub tail_bound: Option<T>,
    pub mu2: T,
    pub gamma: T,
    pub big_gamma: T,
    /// `lambda >= n_p`, the threshold of the stability assumption.
    pub lambda_ge_np: bool,
    /// `lambda > n_p + 1`, the threshold under which the input-side series
    /// bound holds uniformly in the horizon.
    pub lambda_gt_np_plus_one: bool,
    pub warnings: Vec<String>,
}

impl<T: Real> WeightedH2<T> {
    /// Running totals `sum_{j<=k} per_order[j]`.
    pub fn running_totals(&self) -> Vec<T> {
        self.per_order
            .iter()
            .scan(T::zero(), |acc, v| {
                *acc += *v;
                Some(*acc)
            })
            .collect()
    }

    /// Tail bound after truncating at every order `k <= K` (same horizon).
    pub fn tail_after(&self, k: usize, sys: &LpvSystem<T>, lambda: T, horizon: T) -> Option<T> {
        analytic_tail(sys, lambda, k, horizon, self.mu2, self.gamma, self.big_gamma)
    }
}

/// Geometric tail from `||exp(A_0 t)|| <= exp(-gamma t/2)`: with
/// `D = gamma - lambda`, `r = Gamma / D < 1` and
/// `M = (sum ||C_i||^2)(sum ||B_i||^2)`, the order-`k` term is at most
/// `(M/D) r^k`, and the part of it beyond the gap cutoff `H` at most
/// `(k+1) (M/D) r^k e^{-D H}`.
fn analytic_tail<T: Real>(
    sys: &LpvSystem<T>,
    lambda: T,
    max_order: usize,
    horizon: T,
    mu2: T,
    gamma: T,
    big_gamma: T,
) -> Option<T> {
    let d = gamma - lambda;
    if !(mu2 < T::zero()) || !(d > big_gamma) || !(d > T::zero()) {
        return None;
    }
    let sq = |m: &DMatrix<T>| {
        let s = spectral_norm(m);
        s * s
    };
    let mc = sys.c().iter().map(sq).fold(T::zero(), |a, v| a + v);
    let mb = sys.b().iter().map(sq).fold(T::zero(), |a, v| a + v);
    let scale = mc * mb / d;
    let r = big_gamma / d;
    let order_tail = r.powi(max_order as i32 + 1) / (T::one() - r);
    let mut horizon_tail = T::zero();
    let mut rk = T::one();
    for k in 0..=max_order {
        horizon_tail += T::from_count(k + 1) * rk;
        rk *= r;
    }
    Some(scale * (order_tail + horizon_tail * (-d * horizon).exp()))
}

/// Computes the weighted H2 series up to order `K`.
///
/// Writing every kernel in terms of its gaps `s_0, ..., s_k` (from
/// `tau_1` back to 0, ..., from `t` to `tau_k`) turns the ordered simplex into
/// the positive orthant and `e^{lambda t}` into `prod_j e^{lambda s_j}`. The
/// tensor-product Gauss-Legendre sum over the gaps, added over all paths and
/// output blocks, then factorizes into nested one-dimensional rules:
///
/// ```text
/// G_0 = int e^{A~'s} (sum C_i'C_i) e^{A~ s} ds,
/// G_k = int e^{A~'s} (sum_i A_i' G_{k-1} A_i) e^{A~ s} ds,
/// term_k = sum_i trace(B_i' G_k B_i),      A~ = A_0 + lambda/2 I.
/// ```
pub fn weighted_h2_truncated<T: Real>(
    sys: &LpvSystem<T>,
    lambda: T,
    spec: &TruncationSpec<T>,
) -> Result<WeightedH2<T>> {
    spec.validate()?;
    stability::certify(sys, lambda)?;
    let rule = GapRule::new(sys, lambda, spec);
    let mut g = rule.integrate(&stability::output_gramian_rhs(sys));
    let mut per_order = Vec::with_capacity(spec.max_order + 1);
    per_order.push(input_trace(sys, &g));
    for _ in 0..spec.max_order {
        let n = sys.n_x();
        let mut h = DMatrix::zeros(n, n);
        for ai in &sys.a()[1..] {
            h += ai.transpose() * &g * ai;
        }
        g = rule.integrate(&h);
        per_order.push(input_trace(sys, &g));
    }
    let total = per_order.iter().fold(T::zero(), |a, v| a + *v);
    let (mu2, gamma, big_gamma) = stability::decay_rates(sys);
    let tail_bound = analytic_tail(
        sys,
        lambda,
        spec.max_order,
        spec.horizon,
        mu2,
        gamma,
        big_gamma,
    );
    let np = T::from_count(sys.n_p());
    let mut warnings = Vec::new();
    if tail_bound.is_none() {
        warnings.push(
            "no analytic tail bound: requires mu2 < 0 and gamma - lambda > Gamma".to_string(),
        );
    }
    let lambda_gt_np_plus_one = lambda > np + T::one();
    if !lambda_gt_np_plus_one {
        warnings.push(format!(
            "lambda = {} <= n_p + 1; the horizon-uniform input-side bound needs lambda > n_p + 1",
            lambda.to_f64_lossy()
        ));
    }
    Ok(WeightedH2 {
        total,
        per_order,
        tail_bound,
        mu2,
        gamma,
        big_gamma,
        lambda_ge_np: lambda >= np,
        lambda_gt_np_plus_one,
        warnings,
    })
}

/// Contribution of a single path `(i_1, ..., i_k)`, summed over the
/// input and output blocks.
pub fn path_contribution<T: Real>(
    sys: &LpvSystem<T>,
    lambda: T,
    spec: &TruncationSpec<T>,
    path: &[usize],
) -> Result<T> {
    spec.validate()?;
    let rule = GapRule::new(sys, lambda, spec);
    path_contribution_with(sys, &rule, path)
}

fn path_contribution_with<T: Real>(
    sys: &LpvSystem<T>,
    rule: &GapRule<T>,
    path: &[usize],
) -> Result<T> {
    KernelIndex {
        i_u: 0,
        i_y: 0,
        path: path.to_vec(),
    }
    .validate(sys.n_p())?;
    let mut g = rule.integrate(&stability::output_gramian_rhs(sys));
    for &i in path.iter().rev() {
        let a = &sys.a()[i];
        g = rule.integrate(&(a.transpose() * &g * a));
    }
    Ok(input_trace(sys, &g))
}

/// Order-`k` term by explicit enumeration of the `n_p^k` paths, evaluated in
/// parallel and reduced in lexicographic path order.
pub fn order_term_by_paths<T: Real>(
    sys: &LpvSystem<T>,
    lambda: T,
    spec: &TruncationSpec<T>,
    order: usize,
) -> Result<T> {
    spec.validate()?;
    let n_p = sys.n_p();
    if n_p > MAX_ENUMERATED_NP || order > MAX_ENUMERATED_ORDER {
        return Err(Error::InvalidArgument(format!(
            "path enumeration limited to n_p <= {MAX_ENUMERATED_NP}, order <= {MAX_ENUMERATED_ORDER}"
        )));
    }
    if order > 0 && n_p == 0 {
        return Ok(T::zero());
    }
    let rule = GapRule::new(sys, lambda, spec);
    let count = n_p.pow(order as u32);
    let terms: Vec<T> = (0..count)
        .into_par_iter()
        .map(|code| {
            let mut path = vec![0; order];
            let mut c = code;
            for slot in path.iter_mut().rev() {
                *slot = c % n_p + 1;
                c /= n_p;
            }
            path_contribution_with(sys, &rule, &path)
        })
        .collect::<Result<_>>()?;
    Ok(terms.into_iter().fold(T::zero(), |a, v| a + v))
}

/// Both sides of the output bound `|y(t)| <= ||Sigma||_{lambda,H2} ||u||_{L2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct OutputBound<T: Real> {
    pub lhs: T,
    pub rhs: T,
    pub ok: bool,
}

/// Simulates the system and compares the peak output on the grid with
/// `sqrt(h2_sq) * ||u||_{L2([0,T])}`.
pub fn output_bound_check<T: Real>(
    sys: &LpvSystem<T>,
    cert: &StabilityCertificate<T>,
    u: &SampledSignal<T>,
    p: &SchedulingSignal<T>,
    t_end: T,
    dt: T,
) -> Result<OutputBound<T>> {
    let traj = simulate(sys, u, p, t_end, dt)?;
    let lhs = traj.peak_output();
    let rhs = cert.h2_sq.max(T::zero()).sqrt() * u.l2_norm(t_end);
    Ok(OutputBound {
        lhs,
        rhs,
        ok: lhs <= rhs + T::lit(1e-9),
    })
}

/// Truncated Volterra expansion of `y(T)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct VolterraOutput<T: Real> {
    /// `sum_{k<=K}` of the per-order outputs.
    pub value: T,
    pub per_order: Vec<T>,
}

/// Evaluates the Volterra series of the output at `T` up to order `K`.
///
/// The order-`k` state term
/// `z_k(t) = int_0^t e^{A_0 (t-s)} (sum_i p_i(s) A_i) z_{k-1}(s) ds`,
/// with `z_0(t) = int_0^t e^{A_0 (t-s)} B(p(s)) u(s) ds`, is exactly the sum
/// over all order-`k` paths of the iterated kernel integrals; each
/// convolution is advanced with the exact propagator `e^{A_0 h}` and the
/// trapezoidal rule on the grid of step `dt`. The output of order `k` is
/// `C(p(T)) z_k(T)`.
pub fn volterra_output<T: Real>(
    sys: &LpvSystem<T>,
    u: &SampledSignal<T>,
    p: &SchedulingSignal<T>,
    t_end: T,
    max_order: usize,
    dt: T,
) -> Result<VolterraOutput<T>> {
    if !sys.is_bias_free() {
        return Err(Error::InvalidArgument(
            "volterra_output needs b = 0; apply normalize_affine first".into(),
        ));
    }
    if u.dim() != sys.n_in() || p.dim() != sys.n_p() {
        return Err(Error::Dimension("signal dimensions do not match the system".into()));
    }
    let steps = step_count(t_end, dt)?;
    let n = sys.n_x();
    let prop = (&sys.a()[0] * dt).exp();
    let half = dt / T::lit(2.0);
    let times: Vec<T> = (0..=steps).map(|j| T::from_count(j) * dt).collect();
    let sched: Vec<Vec<T>> = times
        .iter()
        .map(|&t| {
            let mut v = vec![T::zero(); sys.n_p()];
            p.eval_into(t, &mut v);
            v
        })
        .collect();
    let mut b_p = DMatrix::zeros(n, sys.n_in());
    let mut forcing: Vec<DVector<T>> = times
        .iter()
        .zip(&sched)
        .map(|(&t, pv)| {
            sys.b_at(pv, &mut b_p);
            &b_p * u.eval(t)
        })
        .collect();
    let mut c_t = DMatrix::zeros(1, n);
    sys.c_at(&sched[steps], &mut c_t);
    let mut per_order = Vec::with_capacity(max_order + 1);
    let mut a_p = DMatrix::zeros(n, n);
    for order in 0..=max_order {
        let mut z = Vec::with_capacity(steps + 1);
        z.push(DVector::zeros(n));
        for j in 0..steps {
            let next = &prop * (&z[j] + &forcing[j] * half) + &forcing[j + 1] * half;
            z.push(next);
        }
        per_order.push((&c_t * &z[steps])[(0, 0)]);
        if order == max_order {
            break;
        }
        for (j, pv) in sched.iter().enumerate() {
            // A(p) - A_0
            a_p.fill(T::zero());
            for (pi, ai) in pv.iter().zip(&sys.a()[1..]) {
                a_p += ai * *pi;
            }
            forcing[j] = &a_p * &z[j];
        }
    }
    let value = per_order.iter().fold(T::zero(), |a, v| a + *v);
    if !value.is_finite() {
        return Err(Error::NonFinite("Volterra series".into()));
    }
    Ok(VolterraOutput { value, per_order })
}
