//! Uniform-grid sampled signals for inputs and scheduling trajectories.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rowmajor;
use crate::Real;

/// Interpolation between grid samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hold {
    #[serde(rename = "zoh", alias = "zero-order-hold")]
    ZeroOrder,
    #[serde(rename = "linear")]
    Linear,
}

/// Vector signal sampled on `t0 + j * dt`. Past the last sample the last
/// value is held; before `t0` the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SignalRecord<T>", into = "SignalRecord<T>", bound = "T: Real")]
pub struct SampledSignal<T: Real> {
    t0: T,
    dt: T,
    hold: Hold,
    dim: usize,
    values: Vec<DVector<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct SignalRecord<T: Real> {
    #[serde(default = "T::zero")]
    t0: T,
    dt: T,
    hold: Hold,
    #[serde(with = "rowmajor::vector_seq")]
    values: Vec<DVector<T>>,
}

impl<T: Real> TryFrom<SignalRecord<T>> for SampledSignal<T> {
    type Error = Error;

    fn try_from(r: SignalRecord<T>) -> Result<Self> {
        SampledSignal::with_origin(r.t0, r.dt, r.hold, r.values)
    }
}

impl<T: Real> From<SampledSignal<T>> for SignalRecord<T> {
    fn from(s: SampledSignal<T>) -> Self {
        SignalRecord {
            t0: s.t0,
            dt: s.dt,
            hold: s.hold,
            values: s.values,
        }
    }
}

/// Tolerance used to snap evaluation times onto grid points.
fn snap<T: Real>() -> T {
    T::lit(1e-9)
}

impl<T: Real> SampledSignal<T> {
    pub fn new(dt: T, hold: Hold, values: Vec<DVector<T>>) -> Result<Self> {
        Self::with_origin(T::zero(), dt, hold, values)
    }

    pub fn with_origin(t0: T, dt: T, hold: Hold, values: Vec<DVector<T>>) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() || !t0.is_finite() {
            return Err(Error::InvalidArgument("signal step dt must be positive and finite".into()));
        }
        let dim = values
            .first()
            .map(|v| v.len())
            .ok_or_else(|| Error::InvalidArgument("signal has no samples".into()))?;
        for (j, v) in values.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::Dimension(format!(
                    "sample {j} has dimension {}, expected {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("signal sample {j}")));
            }
        }
        Ok(SampledSignal {
            t0,
            dt,
            hold,
            dim,
            values,
        })
    }

    /// Constant signal covering `[0, t_end]`.
    pub fn constant(value: DVector<T>, dt: T, t_end: T) -> Result<Self> {
        let n = grid_len(t_end, dt);
        Self::new(dt, Hold::ZeroOrder, vec![value; n])
    }

    /// Samples `f(t)` on the grid `0, dt, ..., t_end`.
    pub fn from_fn(dt: T, t_end: T, hold: Hold, f: impl Fn(T) -> DVector<T>) -> Result<Self> {
        let n = grid_len(t_end, dt);
        let values = (0..n).map(|j| f(T::from_count(j) * dt)).collect();
        Self::new(dt, hold, values)
    }

    /// Scalar convenience wrapper around [`SampledSignal::from_fn`].
    pub fn scalar_fn(dt: T, t_end: T, hold: Hold, f: impl Fn(T) -> T) -> Result<Self> {
        Self::from_fn(dt, t_end, hold, |t| DVector::from_element(1, f(t)))
    }

    pub fn t0(&self) -> T {
        self.t0
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn hold(&self) -> Hold {
        self.hold
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[DVector<T>] {
        &self.values
    }

    /// Time of the last sample.
    pub fn end_time(&self) -> T {
        self.t0 + T::from_count(self.values.len() - 1) * self.dt
    }

    /// Writes the signal value at `t` into `out` (length `dim`).
    pub fn eval_into(&self, t: T, out: &mut [T]) {
        let s = (t - self.t0) / self.dt;
        let last = self.values.len() - 1;
        if s <= T::zero() {
            out.copy_from_slice(self.values[0].as_slice());
            return;
        }
        let k = (s + snap()).floor();
        let idx = k.to_usize().unwrap_or(usize::MAX);
        if idx >= last {
            out.copy_from_slice(self.values[last].as_slice());
            return;
        }
        let lo = self.values[idx].as_slice();
        match self.hold {
            Hold::ZeroOrder => out.copy_from_slice(lo),
            Hold::Linear => {
                let w = s - k;
                if w <= snap() {
                    out.copy_from_slice(lo);
                } else {
                    let hi = self.values[idx + 1].as_slice();
                    for ((o, a), b) in out.iter_mut().zip(lo).zip(hi) {
                        *o = *a + w * (*b - *a);
                    }
                }
            }
        }
    }

    pub fn eval(&self, t: T) -> DVector<T> {
        let mut out = DVector::zeros(self.dim);
        self.eval_into(t, out.as_mut_slice());
        out
    }

    /// Breakpoints of the held signal inside `[0, t_end]`, including both ends.
    fn breakpoints(&self, t_end: T) -> Vec<T> {
        let mut ts = vec![T::zero()];
        for j in 0..self.values.len() {
            let t = self.t0 + T::from_count(j) * self.dt;
            if t > T::zero() && t < t_end {
                ts.push(t);
            }
        }
        if t_end > T::zero() {
            ts.push(t_end);
        }
        ts
    }

    /// `||u||_{L2([0, t_end])}` of the held signal. Each segment is
    /// integrated exactly: the held signal is constant (zoh) or affine
    /// (linear) between breakpoints.
    pub fn l2_norm(&self, t_end: T) -> T {
        let ts = self.breakpoints(t_end);
        let three = T::lit(3.0);
        let mut acc = T::zero();
        for w in ts.windows(2) {
            let (ta, tb) = (w[0], w[1]);
            let h = tb - ta;
            match self.hold {
                Hold::ZeroOrder => {
                    let mid = self.eval(ta + h / T::lit(2.0));
                    acc += h * mid.norm_squared();
                }
                Hold::Linear => {
                    let a = self.eval(ta);
                    let b = self.eval(tb);
                    acc += h * (a.norm_squared() + a.dot(&b) + b.norm_squared()) / three;
                }
            }
        }
        acc.sqrt()
    }

    /// `sup_{t in [0, t_end]} ||u(t)||_2`; attained at a breakpoint because
    /// the norm is convex along each held segment.
    pub fn sup_norm(&self, t_end: T) -> T {
        let ts = self.breakpoints(t_end);
        let mut best = T::zero();
        for &t in &ts {
            best = best.max(self.eval(t).norm());
        }
        best
    }

    /// Returns the signal with every sample multiplied by `alpha`.
    pub fn scaled(&self, alpha: T) -> Self {
        let mut s = self.clone();
        for v in &mut s.values {
            *v *= alpha;
        }
        s
    }

    /// Appends a constant channel equal to `value` (used with
    /// [`crate::LpvSystem::normalize_affine`]).
    pub fn augmented(&self, value: T) -> Self {
        let mut s = self.clone();
        s.dim += 1;
        for v in &mut s.values {
            *v = v.clone().push(value);
        }
        s
    }

    /// Pointwise linear combination `alpha * self + beta * other`; both
    /// signals must share grid and hold.
    pub fn combine(&self, alpha: T, other: &Self, beta: T) -> Result<Self> {
        if self.dim != other.dim
            || self.len() != other.len()
            || self.dt != other.dt
            || self.t0 != other.t0
            || self.hold != other.hold
        {
            return Err(Error::Dimension("signals do not share a grid".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * alpha + b * beta)
            .collect();
        Self::with_origin(self.t0, self.dt, self.hold, values)
    }
}

/// Number of grid samples needed to reach `t_end` from 0 with step `dt`.
pub fn grid_len<T: Real>(t_end: T, dt: T) -> usize {
    let steps = (t_end / dt - snap()).ceil().max(T::zero());
    steps.to_usize().unwrap_or(0) + 1
}

/// Scheduling trajectory whose components all stay in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampledSignal<T>", into = "SampledSignal<T>", bound = "T: Real")]
pub struct SchedulingSignal<T: Real>(SampledSignal<T>);

impl<T: Real> TryFrom<SampledSignal<T>> for SchedulingSignal<T> {
    type Error = Error;

    fn try_from(s: SampledSignal<T>) -> Result<Self> {
        SchedulingSignal::new(s)
    }
}

impl<T: Real> From<SchedulingSignal<T>> for SampledSignal<T> {
    fn from(s: SchedulingSignal<T>) -> Self {
        s.0
    }
}

impl<T: Real> SchedulingSignal<T> {
    pub fn new(signal: SampledSignal<T>) -> Result<Self> {
        for (j, v) in signal.values.iter().enumerate() {
            if let Some(x) = v.iter().find(|x| x.abs() > T::one()) {
                return Err(Error::InvalidArgument(format!(
                    "scheduling sample {j} has component {} outside [-1, 1]",
                    x.to_f64_lossy()
                )));
            }
        }
        Ok(SchedulingSignal(signal))
    }

    /// Zero-dimensional scheduling, for systems with `n_p = 0`.
    pub fn empty() -> Self {
        SchedulingSignal(
            SampledSignal::new(T::one(), Hold::ZeroOrder, vec![DVector::zeros(0)])
                .expect("valid empty signal"),
        )
    }

    /// Scheduling frozen at `value`.
    pub fn constant(value: DVector<T>, dt: T, t_end: T) -> Result<Self> {
        Self::new(SampledSignal::constant(value, dt, t_end)?)
    }

    pub fn signal(&self) -> &SampledSignal<T> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }
}

impl<T: Real> std::ops::Deref for SchedulingSignal<T> {
    type Target = SampledSignal<T>;

    fn deref(&self) -> &SampledSignal<T> {
        &self.0
    }
}
