//! Monte-Carlo generalization-gap experiments over a finite grid of
//! certified hypotheses with noise-free teacher labels.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rademacher::{empirical_rademacher_with, substream};
use super::{bound_main, bound_vc, rademacher_bound, BoundInputs, LossSpec, PhiCapacity};
use crate::error::{Error, Result};
use crate::signal::{Hold, SampledSignal, SchedulingSignal};
use crate::simulate::{final_output, step_count};
use crate::stability::certify;
use crate::system::LpvSystem;

/// Random band-limited inputs: per channel a sum of `harmonics` sinusoids
/// with frequencies below `max_freq` (Hz), rescaled by a random factor in
/// `[min_scale, 1]` of the largest gain that keeps
/// `sup ||u|| <= k_u` and `||u||_{L2} <= l_u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSampler {
    pub harmonics: usize,
    pub max_freq: f64,
    #[serde(rename = "K_u")]
    pub k_u: f64,
    #[serde(rename = "L_u")]
    pub l_u: f64,
    #[serde(default = "default_min_scale")]
    pub min_scale: f64,
}

fn default_min_scale() -> f64 {
    0.25
}

/// Random band-limited scheduling with every component in
/// `[-amplitude, amplitude]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulingSampler {
    pub harmonics: usize,
    pub max_freq: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapExperimentConfig {
    pub teacher: LpvSystem<f64>,
    pub hypotheses: Vec<LpvSystem<f64>>,
    pub input_sampler: InputSampler,
    pub scheduling_sampler: SchedulingSampler,
    #[serde(rename = "N")]
    pub n_train: usize,
    /// Held-out samples per trial; `100 N` when absent.
    #[serde(rename = "M", default)]
    pub n_holdout: Option<usize>,
    pub trials: usize,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub lambda: f64,
    pub delta: f64,
    #[serde(default = "default_draws")]
    pub rademacher_draws: usize,
    #[serde(default = "LossSpec::absolute")]
    pub loss: LossSpec<f64>,
}

fn default_draws() -> usize {
    1000
}

impl GapExperimentConfig {
    pub fn holdout(&self) -> usize {
        self.n_holdout.unwrap_or(100 * self.n_train)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.hypotheses.is_empty() {
            return bad("hypothesis grid is empty");
        }
        for (k, h) in self.hypotheses.iter().enumerate() {
            if h.n_in() != self.teacher.n_in() || h.n_p() != self.teacher.n_p() {
                return Err(Error::Dimension(format!(
                    "hypothesis {k} has (n_in, n_p) = ({}, {}), teacher has ({}, {})",
                    h.n_in(),
                    h.n_p(),
                    self.teacher.n_in(),
                    self.teacher.n_p()
                )));
            }
        }
        if self.n_train == 0 || self.holdout() == 0 || self.trials == 0 {
            return bad("N, M and trials must all be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta must lie in (0, 1)");
        }
        let inp = &self.input_sampler;
        if !(inp.k_u > 0.0 && inp.l_u > 0.0) || !inp.k_u.is_finite() || !inp.l_u.is_finite() {
            return bad("input caps K_u and L_u must be positive and finite");
        }
        if !(inp.min_scale > 0.0 && inp.min_scale <= 1.0) {
            return bad("input min_scale must lie in (0, 1]");
        }
        let sch = &self.scheduling_sampler;
        if !(sch.amplitude > 0.0 && sch.amplitude <= 1.0) {
            return bad("scheduling amplitude must lie in (0, 1]");
        }
        if inp.harmonics == 0 || sch.harmonics == 0 {
            return bad("samplers need at least one harmonic");
        }
        if !(inp.max_freq >= 0.0 && sch.max_freq >= 0.0) {
            return bad("sampler frequencies must be nonnegative");
        }
        if self.rademacher_draws == 0 {
            return bad("rademacher_draws must be positive");
        }
        step_count(self.horizon, self.dt)?;
        Ok(())
    }
}

fn band_limited<R: Rng>(rng: &mut R, harmonics: usize, max_freq: f64) -> impl Fn(f64) -> f64 {
    let terms: Vec<(f64, f64, f64)> = (0..harmonics)
        .map(|_| {
            let amp = rng.random_range(-1.0..=1.0);
            let freq = rng.random::<f64>() * max_freq;
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            (amp, freq, phase)
        })
        .collect();
    move |t| {
        terms
            .iter()
            .map(|(a, f, ph)| a * (std::f64::consts::TAU * f * t + ph).sin())
            .sum()
    }
}

impl InputSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R, dim: usize, horizon: f64, dt: f64) -> Result<SampledSignal<f64>> {
        let channels: Vec<_> = (0..dim)
            .map(|_| band_limited(rng, self.harmonics, self.max_freq))
            .collect();
        let raw = SampledSignal::from_fn(dt, horizon, Hold::Linear, |t| {
            DVector::from_iterator(dim, channels.iter().map(|f| f(t)))
        })?;
        let sup = raw.sup_norm(horizon);
        let l2 = raw.l2_norm(horizon);
        let factor = rng.random_range(self.min_scale..=1.0);
        if sup == 0.0 || l2 == 0.0 {
            return Ok(raw);
        }
        let gain = (self.k_u / sup).min(self.l_u / l2) * factor;
        Ok(raw.scaled(gain))
    }
}

impl SchedulingSampler {
    pub fn sample<R: Rng>(&self, rng: &mut R, dim: usize, horizon: f64, dt: f64) -> Result<SchedulingSignal<f64>> {
        let channels: Vec<(Box<dyn Fn(f64) -> f64>, f64)> = (0..dim)
            .map(|_| {
                let terms: Vec<(f64, f64, f64)> = (0..self.harmonics)
                    .map(|_| {
                        (
                            rng.random_range(-1.0..=1.0),
                            rng.random::<f64>() * self.max_freq,
                            rng.random::<f64>() * std::f64::consts::TAU,
                        )
                    })
                    .collect();
                let norm: f64 = terms.iter().map(|t| t.0.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
                let f: Box<dyn Fn(f64) -> f64> = Box::new(move |t| {
                    terms
                        .iter()
                        .map(|(a, f, ph)| a * (std::f64::consts::TAU * f * t + ph).sin())
                        .sum()
                });
                (f, self.amplitude / norm)
            })
            .collect();
        let sig = SampledSignal::from_fn(dt, horizon, Hold::Linear, |t| {
            DVector::from_iterator(dim, channels.iter().map(|(f, s)| (f(t) * s).clamp(-1.0, 1.0)))
        })?;
        SchedulingSignal::new(sig)
    }
}

/// One row of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    /// `max_h (L(h) - L_N(h))` with `L` estimated on the held-out set.
    pub sup_gap: f64,
    pub r_main: f64,
    pub r_vc: f64,
    pub emp_rademacher: f64,
    pub emp_rademacher_stderr: f64,
    /// Same sign draws applied to the hypothesis outputs instead of losses.
    pub emp_rademacher_outputs: f64,
    pub rademacher_bound: f64,
    pub violated_main: bool,
    pub violated_vc: bool,
}

pub const TRIAL_CSV_HEADER: &str =
    "trial,sup_gap,R_main,R_vc,emp_rademacher,rademacher_bound,violated_main,violated_vc";

/// Fixed 17-significant-digit formatting used by every CSV report.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(TRIAL_CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.trial,
            fmt_f64(r.sup_gap),
            fmt_f64(r.r_main),
            fmt_f64(r.r_vc),
            fmt_f64(r.emp_rademacher),
            fmt_f64(r.rademacher_bound),
            r.violated_main,
            r.violated_vc
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub constants: BoundInputs<f64>,
    #[serde(rename = "N")]
    pub n_train: usize,
    #[serde(rename = "M")]
    pub n_holdout: usize,
    pub delta: f64,
    pub hypothesis_h2_sq: Vec<f64>,
    pub teacher_h2_sq: f64,
    pub trials: Vec<TrialRecord>,
    pub violations_main: usize,
    pub violations_vc: usize,
    /// Trials whose empirical Rademacher estimate exceeded `c4/sqrt N`.
    pub rademacher_exceedances: usize,
}

impl GapReport {
    pub fn csv(&self) -> String {
        trials_csv(&self.trials)
    }
}

/// Losses of every hypothesis on one sample, plus the hypothesis outputs.
fn sample_row(
    cfg: &GapExperimentConfig,
    u: &SampledSignal<f64>,
    p: &SchedulingSignal<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let y = final_output(&cfg.teacher, u, p, cfg.horizon, cfg.dt)?;
    let mut losses = Vec::with_capacity(cfg.hypotheses.len());
    let mut outputs = Vec::with_capacity(cfg.hypotheses.len());
    for h in &cfg.hypotheses {
        let yh = final_output(h, u, p, cfg.horizon, cfg.dt)?;
        losses.push(cfg.loss.eval(yh, y));
        outputs.push(yh);
    }
    Ok((losses, outputs))
}

struct Setup {
    inputs: BoundInputs<f64>,
    r_main: f64,
    r_vc: f64,
    rad_bound: f64,
}

fn run_trial(cfg: &GapExperimentConfig, setup: &Setup, trial: usize) -> Result<TrialRecord> {
    let mut rng = substream(cfg.seed, 2 * trial as u64);
    let total = cfg.n_train + cfg.holdout();
    let (n_in, n_p) = (cfg.teacher.n_in(), cfg.teacher.n_p());
    let mut samples = Vec::with_capacity(total);
    for _ in 0..total {
        let u = cfg.input_sampler.sample(&mut rng, n_in, cfg.horizon, cfg.dt)?;
        let p = cfg.scheduling_sampler.sample(&mut rng, n_p, cfg.horizon, cfg.dt)?;
        samples.push((u, p));
    }
    let rows: Vec<(Vec<f64>, Vec<f64>)> = samples
        .par_iter()
        .map(|(u, p)| sample_row(cfg, u, p))
        .collect::<Result<_>>()?;
    let h = cfg.hypotheses.len();
    let (train, held) = rows.split_at(cfg.n_train);
    let mean_loss = |set: &[(Vec<f64>, Vec<f64>)], k: usize| {
        set.iter().map(|r| r.0[k]).sum::<f64>() / set.len() as f64
    };
    let sup_gap = (0..h)
        .map(|k| mean_loss(held, k) - mean_loss(train, k))
        .fold(f64::NEG_INFINITY, f64::max);
    let losses = DMatrix::from_fn(cfg.n_train, h, |i, k| train[i].0[k]);
    let outputs = DMatrix::from_fn(cfg.n_train, h, |i, k| train[i].1[k]);
    let stream = 2 * trial as u64 + 1;
    let rad = empirical_rademacher_with(&losses, cfg.rademacher_draws, &mut substream(cfg.seed, stream))?;
    let rad_out =
        empirical_rademacher_with(&outputs, cfg.rademacher_draws, &mut substream(cfg.seed, stream))?;
    Ok(TrialRecord {
        trial,
        sup_gap,
        r_main: setup.r_main,
        r_vc: setup.r_vc,
        emp_rademacher: rad.mean,
        emp_rademacher_stderr: rad.stderr,
        emp_rademacher_outputs: rad_out.mean,
        rademacher_bound: setup.rad_bound,
        violated_main: sup_gap > setup.r_main,
        violated_vc: sup_gap > setup.r_vc,
    })
}

/// Runs the experiment. Trial `k` draws its samples from stream `2k` and its
/// Rademacher signs from stream `2k + 1` of the master seed, so the report
/// does not depend on how trials are scheduled across threads.
pub fn gap_experiment(cfg: &GapExperimentConfig) -> Result<GapReport> {
    cfg.validate()?;
    let teacher_cert = certify(&cfg.teacher, cfg.lambda)
        .map_err(|e| Error::Assumption(format!("teacher not certified: {e}")))?;
    let hyp_h2: Vec<f64> = cfg
        .hypotheses
        .iter()
        .enumerate()
        .map(|(k, h)| {
            certify(h, cfg.lambda)
                .map(|c| c.h2_sq)
                .map_err(|e| Error::Assumption(format!("hypothesis {k} not certified: {e}")))
        })
        .collect::<Result<_>>()?;
    let c1 = hyp_h2.iter().fold(0.0f64, |m, v| m.max(v.sqrt()));
    let l_u = cfg.input_sampler.l_u;
    let inputs = BoundInputs {
        c1,
        c2: teacher_cert.h2_sq.sqrt() * l_u,
        l_u,
        k_u: cfg.input_sampler.k_u,
        n_p: cfg.teacher.n_p(),
        k_ell: cfg.loss.k_ell,
        horizon: cfg.horizon,
    };
    inputs.validate()?;
    let (_, r_main) = bound_main(&inputs, cfg.n_train, cfg.delta)?;
    let r_vc = bound_vc(
        &inputs,
        cfg.n_train,
        cfg.delta,
        PhiCapacity::Finite(cfg.hypotheses.len()),
    )?
    .value;
    let setup = Setup {
        inputs,
        r_main,
        r_vc,
        rad_bound: rademacher_bound(&inputs, cfg.n_train)?,
    };
    let trials: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|k| run_trial(cfg, &setup, k))
        .collect::<Result<_>>()?;
    Ok(GapReport {
        constants: setup.inputs,
        n_train: cfg.n_train,
        n_holdout: cfg.holdout(),
        delta: cfg.delta,
        hypothesis_h2_sq: hyp_h2,
        teacher_h2_sq: teacher_cert.h2_sq,
        violations_main: trials.iter().filter(|t| t.violated_main).count(),
        violations_vc: trials.iter().filter(|t| t.violated_vc).count(),
        rademacher_exceedances: trials
            .iter()
            .filter(|t| t.emp_rademacher > t.rademacher_bound)
            .count(),
        trials,
    })
}
