//! Embedding of one-layer neural ODEs `x' = sigma(A x + B u + b)`, `y = C x`
//! into LPV form, with the scheduling extracted along trajectories.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Hold, SampledSignal, SchedulingSignal};
use crate::simulate::{rk4, simulate, step_count, Trajectory};
use crate::system::LpvSystem;
use crate::{rowmajor, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => z.max(T::zero()),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Scheduling value `p` with `p * z = sigma(z)`: the region indicator
    /// `[z >= 0]` for ReLU, `tanh(z)/z` for tanh (1 at `z = 0`).
    pub fn scheduling<T: Real>(self, z: T) -> T {
        match self {
            Activation::Relu => {
                if z >= T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Tanh => {
                if z == T::zero() {
                    T::one()
                } else {
                    z.tanh() / z
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRecord<T>", into = "SpecRecord<T>", bound = "T: Real")]
pub struct NeuralOdeSpec<T: Real> {
    pub activation: Activation,
    a: DMatrix<T>,
    b: DMatrix<T>,
    bias: DVector<T>,
    c: DMatrix<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
struct SpecRecord<T: Real> {
    activation: Activation,
    #[serde(rename = "A", with = "rowmajor::matrix")]
    a: DMatrix<T>,
    #[serde(rename = "B", with = "rowmajor::matrix")]
    b: DMatrix<T>,
    #[serde(rename = "b", with = "rowmajor::vector")]
    bias: DVector<T>,
    #[serde(rename = "C", with = "rowmajor::matrix")]
    c: DMatrix<T>,
}

impl<T: Real> TryFrom<SpecRecord<T>> for NeuralOdeSpec<T> {
    type Error = Error;

    fn try_from(r: SpecRecord<T>) -> Result<Self> {
        NeuralOdeSpec::new(r.activation, r.a, r.b, r.bias, r.c)
    }
}

impl<T: Real> From<NeuralOdeSpec<T>> for SpecRecord<T> {
    fn from(s: NeuralOdeSpec<T>) -> Self {
        SpecRecord {
            activation: s.activation,
            a: s.a,
            b: s.b,
            bias: s.bias,
            c: s.c,
        }
    }
}

impl<T: Real> NeuralOdeSpec<T> {
    pub fn new(
        activation: Activation,
        a: DMatrix<T>,
        b: DMatrix<T>,
        bias: DVector<T>,
        c: DMatrix<T>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension("A must be square and non-empty".into()));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B must have {n} rows")));
        }
        if bias.len() != n {
            return Err(Error::Dimension(format!("b must have length {n}")));
        }
        if c.nrows() != 1 || c.ncols() != n {
            return Err(Error::Dimension(format!("C must be 1x{n}")));
        }
        let finite = |m: &DMatrix<T>| m.iter().all(|v| v.is_finite());
        if !finite(&a) || !finite(&b) || !finite(&c) || !bias.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("neural ODE parameters".into()));
        }
        Ok(NeuralOdeSpec {
            activation,
            a,
            b,
            bias,
            c,
        })
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.b.ncols()
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<T> {
        &self.b
    }

    pub fn bias(&self) -> &DVector<T> {
        &self.bias
    }

    pub fn c(&self) -> &DMatrix<T> {
        &self.c
    }

    /// Pre-activation `z = A x + B u + b`.
    fn preactivation(&self, x: &DVector<T>, u: &DVector<T>, out: &mut DVector<T>) {
        out.copy_from(&self.bias);
        out.gemv(T::one(), &self.a, x, T::one());
        if self.n_in() > 0 {
            out.gemv(T::one(), &self.b, u, T::one());
        }
    }
}

/// LPV form of a neural ODE: `n_p = n_x`, zero constant blocks except
/// `C_0 = C`, and `A_i`, `B_i`, `b_i` holding row `i` of `A`, `B`, `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct EmbeddingResult<T: Real> {
    pub lpv: LpvSystem<T>,
}

pub fn embed<T: Real>(spec: &NeuralOdeSpec<T>) -> EmbeddingResult<T> {
    let (n, m) = (spec.n_x(), spec.n_in());
    let mut a = vec![DMatrix::zeros(n, n)];
    let mut b = vec![DMatrix::zeros(n, m)];
    let mut c = vec![spec.c.clone()];
    let mut bias = vec![DVector::zeros(n)];
    for i in 0..n {
        let mut ai = DMatrix::zeros(n, n);
        ai.set_row(i, &spec.a.row(i));
        let mut bi = DMatrix::zeros(n, m);
        bi.set_row(i, &spec.b.row(i));
        let mut vi = DVector::zeros(n);
        vi[i] = spec.bias[i];
        a.push(ai);
        b.push(bi);
        c.push(DMatrix::zeros(1, n));
        bias.push(vi);
    }
    EmbeddingResult {
        lpv: LpvSystem::new(a, b, c, bias).expect("embedding preserves dimensions"),
    }
}

/// Scheduling extracted along a neural ODE trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedScheduling<T: Real> {
    /// Sampled on a half-step grid (`dt / 2`, linear hold) so that every
    /// Runge-Kutta stage time of a step-`dt` simulation is a sample.
    pub scheduling: SchedulingSignal<T>,
    /// Nonlinear solution on the `dt` grid.
    pub trajectory: Trajectory<T>,
}

/// Integrates the neural ODE from `x(0) = 0` with RK4 at step `dt` and
/// extracts `p_i = sigma(z_i)/z_i` (tanh) or `[z_i >= 0]` (ReLU) from the
/// pre-activation `z`. Midpoint samples use the cubic Hermite interpolant of
/// the step, which is fourth-order accurate like the step itself.
pub fn extract_scheduling<T: Real>(
    spec: &NeuralOdeSpec<T>,
    u: &SampledSignal<T>,
    t_end: T,
    dt: T,
) -> Result<ExtractedScheduling<T>> {
    if u.dim() != spec.n_in() {
        return Err(Error::Dimension(format!(
            "input signal has dimension {}, neural ODE expects {}",
            u.dim(),
            spec.n_in()
        )));
    }
    let steps = step_count(t_end, dt)?;
    let n = spec.n_x();
    let mut z = DVector::zeros(n);
    let mut u_buf = DVector::zeros(spec.n_in());
    let act = spec.activation;
    let mut field = |t: T, x: &DVector<T>, out: &mut DVector<T>| {
        u.eval_into(t, u_buf.as_mut_slice());
        spec.preactivation(x, &u_buf, &mut z);
        for (o, zi) in out.iter_mut().zip(z.iter()) {
            *o = act.apply(*zi);
        }
    };
    let mut states: Vec<DVector<T>> = Vec::with_capacity(steps + 1);
    rk4(n, steps, dt, &mut field, |_, _, x| states.push(x.clone()))?;

    let times: Vec<T> = (0..=steps).map(|j| T::from_count(j) * dt).collect();
    let mut derivs = Vec::with_capacity(steps + 1);
    for (t, x) in times.iter().zip(&states) {
        let mut d = DVector::zeros(n);
        field(*t, x, &mut d);
        derivs.push(d);
    }
    let half = dt / T::lit(2.0);
    let eighth = dt / T::lit(8.0);
    let mut pre = DVector::zeros(n);
    let mut u_val = DVector::zeros(spec.n_in());
    let mut sched = |t: T, x: &DVector<T>| -> DVector<T> {
        u.eval_into(t, u_val.as_mut_slice());
        spec.preactivation(x, &u_val, &mut pre);
        pre.map(|zi| act.scheduling(zi))
    };
    let mut values = Vec::with_capacity(2 * steps + 1);
    for j in 0..=steps {
        values.push(sched(times[j], &states[j]));
        if j < steps {
            let mid = (&states[j] + &states[j + 1]) * T::lit(0.5)
                + (&derivs[j] - &derivs[j + 1]) * eighth;
            values.push(sched(times[j] + half, &mid));
        }
    }
    let scheduling = SchedulingSignal::new(SampledSignal::new(half, Hold::Linear, values)?)?;
    let outputs = states.iter().map(|x| (&spec.c * x)[(0, 0)]).collect();
    Ok(ExtractedScheduling {
        scheduling,
        trajectory: Trajectory {
            times,
            states,
            outputs,
        },
    })
}

/// `max_j |y_LPV(t_j) - y_NODE(t_j)|` with the LPV driven by the extracted
/// scheduling and the same input and step.
pub fn verify_embedding<T: Real>(
    spec: &NeuralOdeSpec<T>,
    u: &SampledSignal<T>,
    t_end: T,
    dt: T,
) -> Result<T> {
    let extracted = extract_scheduling(spec, u, t_end, dt)?;
    let lpv = embed(spec).lpv;
    let traj = simulate(&lpv, u, &extracted.scheduling, t_end, dt)?;
    Ok(traj
        .outputs
        .iter()
        .zip(&extracted.trajectory.outputs)
        .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())))
}

/// Activation patterns visited by one ReLU trajectory.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RegionSequence {
    /// Consecutive distinct sign patterns, `true` where `z_i >= 0`.
    pub patterns: Vec<Vec<bool>>,
    /// Grid indices at which the pattern changes (one per pattern after the first).
    pub switch_steps: Vec<usize>,
}

impl RegionSequence {
    pub fn switch_times<T: Real>(&self, dt: T) -> Vec<T> {
        self.switch_steps
            .iter()
            .map(|&j| T::from_count(j) * dt)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionCount {
    pub sequences: Vec<RegionSequence>,
    /// Number of distinct full pattern sequences across all inputs.
    pub distinct_total: usize,
}

/// Records the ReLU activation regions visited on the `dt` grid for every
/// input; inputs are processed in parallel and merged in input order.
pub fn count_regions<T: Real>(
    spec: &NeuralOdeSpec<T>,
    inputs: &[SampledSignal<T>],
    t_end: T,
    dt: T,
) -> Result<RegionCount> {
    if spec.activation != Activation::Relu {
        return Err(Error::InvalidArgument(
            "activation regions are only defined for ReLU".into(),
        ));
    }
    let sequences: Vec<RegionSequence> = inputs
        .par_iter()
        .map(|u| {
            let ex = extract_scheduling(spec, u, t_end, dt)?;
            let sched = &ex.scheduling;
            let mut seq = RegionSequence {
                patterns: Vec::new(),
                switch_steps: Vec::new(),
            };
            // grid points sit at even indices of the half-step signal
            for (j, v) in sched.values().iter().step_by(2).enumerate() {
                let pat: Vec<bool> = v.iter().map(|p| *p > T::lit(0.5)).collect();
                if seq.patterns.last() != Some(&pat) {
                    if !seq.patterns.is_empty() {
                        seq.switch_steps.push(j);
                    }
                    seq.patterns.push(pat);
                }
            }
            Ok(seq)
        })
        .collect::<Result<_>>()?;
    let distinct_total = sequences.iter().collect::<BTreeSet<_>>().len();
    Ok(RegionCount {
        sequences,
        distinct_total,
    })
}
