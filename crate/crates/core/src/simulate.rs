//! Fixed-step classical Runge-Kutta simulation of LPV systems.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SampledSignal, SchedulingSignal};
use crate::system::LpvSystem;
use crate::Real;

/// Solution on the uniform grid `0, dt, ..., T`, starting from `x(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    #[serde(with = "crate::rowmajor::vector_seq")]
    pub states: Vec<DVector<T>>,
    pub outputs: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn final_output(&self) -> T {
        *self.outputs.last().expect("trajectory has at least one sample")
    }

    /// `max_j |y_j|`.
    pub fn peak_output(&self) -> T {
        self.outputs.iter().fold(T::zero(), |m, y| m.max(y.abs()))
    }
}

/// Number of steps `T / dt`, requiring `T` to be an integer multiple of `dt`.
pub fn step_count<T: Real>(t_end: T, dt: T) -> Result<usize> {
    if !(dt > T::zero()) || !dt.is_finite() {
        return Err(Error::InvalidArgument("step dt must be positive".into()));
    }
    if t_end < T::zero() || !t_end.is_finite() {
        return Err(Error::InvalidArgument("horizon T must be finite and nonnegative".into()));
    }
    let ratio = t_end / dt;
    let n = ratio.round();
    if (ratio - n).abs() > T::lit(1e-6) {
        return Err(Error::InvalidArgument(format!(
            "horizon {} is not an integer multiple of dt = {}",
            t_end.to_f64_lossy(),
            dt.to_f64_lossy()
        )));
    }
    Ok(n.to_usize().unwrap_or(0))
}

/// Right-hand side `A(p(t)) x + B(p(t)) u(t) + b(p(t))` with reusable buffers.
pub(crate) struct LpvField<'a, T: Real> {
    sys: &'a LpvSystem<T>,
    u: &'a SampledSignal<T>,
    p: &'a SchedulingSignal<T>,
    a_p: DMatrix<T>,
    b_p: DMatrix<T>,
    c_p: DMatrix<T>,
    bias_p: DVector<T>,
    u_buf: DVector<T>,
    p_buf: Vec<T>,
}

impl<'a, T: Real> LpvField<'a, T> {
    pub(crate) fn new(
        sys: &'a LpvSystem<T>,
        u: &'a SampledSignal<T>,
        p: &'a SchedulingSignal<T>,
    ) -> Result<Self> {
        if u.dim() != sys.n_in() {
            return Err(Error::Dimension(format!(
                "input signal has dimension {}, system expects n_in = {}",
                u.dim(),
                sys.n_in()
            )));
        }
        if p.dim() != sys.n_p() {
            return Err(Error::Dimension(format!(
                "scheduling signal has dimension {}, system expects n_p = {}",
                p.dim(),
                sys.n_p()
            )));
        }
        let (n, m) = (sys.n_x(), sys.n_in());
        Ok(LpvField {
            sys,
            u,
            p,
            a_p: DMatrix::zeros(n, n),
            b_p: DMatrix::zeros(n, m),
            c_p: DMatrix::zeros(1, n),
            bias_p: DVector::zeros(n),
            u_buf: DVector::zeros(m),
            p_buf: vec![T::zero(); sys.n_p()],
        })
    }

    fn schedule(&mut self, t: T) {
        self.p.eval_into(t, &mut self.p_buf);
    }

    pub(crate) fn eval(&mut self, t: T, x: &DVector<T>, out: &mut DVector<T>) {
        self.schedule(t);
        self.u.eval_into(t, self.u_buf.as_mut_slice());
        self.sys.a_at(&self.p_buf, &mut self.a_p);
        self.sys.b_at(&self.p_buf, &mut self.b_p);
        self.sys.bias_at(&self.p_buf, &mut self.bias_p);
        out.gemv(T::one(), &self.a_p, x, T::zero());
        if self.sys.n_in() > 0 {
            out.gemv(T::one(), &self.b_p, &self.u_buf, T::one());
        }
        *out += &self.bias_p;
    }

    pub(crate) fn output(&mut self, t: T, x: &DVector<T>) -> T {
        self.schedule(t);
        self.sys.c_at(&self.p_buf, &mut self.c_p);
        self.c_p.row(0).transpose().dot(x)
    }
}

/// Classical RK4 stepper over a field `f(t, x, out)`; calls `visit(j, t_j, x_j)`
/// on every grid point including `t = 0`.
pub(crate) fn rk4<T: Real>(
    n_x: usize,
    steps: usize,
    dt: T,
    mut f: impl FnMut(T, &DVector<T>, &mut DVector<T>),
    mut visit: impl FnMut(usize, T, &DVector<T>),
) -> Result<()> {
    let half = dt / T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let mut x = DVector::zeros(n_x);
    let mut k1 = DVector::zeros(n_x);
    let mut k2 = DVector::zeros(n_x);
    let mut k3 = DVector::zeros(n_x);
    let mut k4 = DVector::zeros(n_x);
    let mut tmp = DVector::zeros(n_x);
    visit(0, T::zero(), &x);
    for j in 0..steps {
        let t = T::from_count(j) * dt;
        let t_mid = t + half;
        let t_next = T::from_count(j + 1) * dt;
        f(t, &x, &mut k1);
        tmp.copy_from(&x);
        tmp.axpy(half, &k1, T::one());
        f(t_mid, &tmp, &mut k2);
        tmp.copy_from(&x);
        tmp.axpy(half, &k2, T::one());
        f(t_mid, &tmp, &mut k3);
        tmp.copy_from(&x);
        tmp.axpy(dt, &k3, T::one());
        f(t_next, &tmp, &mut k4);
        // x += dt/6 (k1 + 2 k2 + 2 k3 + k4)
        k2.axpy(T::one(), &k3, T::one());
        k1.axpy(two, &k2, T::one());
        k1 += &k4;
        x.axpy(sixth, &k1, T::one());
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                time: t_next.to_f64_lossy(),
            });
        }
        visit(j + 1, t_next, &x);
    }
    Ok(())
}

/// Simulates the system from `x(0) = 0` on `[0, t_end]` with step `dt`,
/// evaluating `u` and `p` at the Runge-Kutta stage times.
pub fn simulate<T: Real>(
    sys: &LpvSystem<T>,
    u: &SampledSignal<T>,
    p: &SchedulingSignal<T>,
    t_end: T,
    dt: T,
) -> Result<Trajectory<T>> {
    let steps = step_count(t_end, dt)?;
    let mut field = LpvField::new(sys, u, p)?;
    let mut out_field = LpvField::new(sys, u, p)?;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        outputs: Vec::with_capacity(steps + 1),
    };
    rk4(
        sys.n_x(),
        steps,
        dt,
        |t, x, out| field.eval(t, x, out),
        |_, t, x| {
            traj.times.push(t);
            traj.outputs.push(out_field.output(t, x));
            traj.states.push(x.clone());
        },
    )?;
    Ok(traj)
}

/// `y(T)` only; avoids storing the trajectory.
pub fn final_output<T: Real>(
    sys: &LpvSystem<T>,
    u: &SampledSignal<T>,
    p: &SchedulingSignal<T>,
    t_end: T,
    dt: T,
) -> Result<T> {
    let steps = step_count(t_end, dt)?;
    let mut field = LpvField::new(sys, u, p)?;
    let mut last = DVector::zeros(sys.n_x());
    rk4(
        sys.n_x(),
        steps,
        dt,
        |t, x, out| field.eval(t, x, out),
        |j, _, x| {
            if j == steps {
                last.copy_from(x);
            }
        },
    )?;
    let t_final = T::from_count(steps) * dt;
    Ok(field.output(t_final, &last))
}
