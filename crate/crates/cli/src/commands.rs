use std::path::PathBuf;

use lpvgen::embed::{embed, extract_scheduling, count_regions, NeuralOdeSpec};
use lpvgen::pac::experiment::{InputSampler, TRIAL_CSV_HEADER};
use lpvgen::pac::rademacher::substream;
use lpvgen::pac::{bound_report, bound_vc, empirical_rademacher, gap_experiment, BoundInputs, GapExperimentConfig, PhiCapacity};
use lpvgen::stability::{
    certify, check_spectral_decay, check_stability, h2_norm_sq, k_omega_sq, solve_generalized_lyapunov,
    KOmegaVariant,
};
use lpvgen::system::spectral_norm;
use lpvgen::volterra::{weighted_h2_truncated, TruncationSpec};
use lpvgen::{simulate, LpvSystem, SampledSignal};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{scheduling_or_empty, RawConfig, SignalSpec};
use crate::failure::{CliResult, Failure};
use crate::output::{fmt_f64, Csv, Outputs};

/// What a command hands back to `main`: files to write, a report body and
/// lines for stdout.
pub struct Run {
    pub outputs: Outputs,
    pub result: Value,
    pub seed: Option<u64>,
    pub summary: Vec<String>,
}

impl Run {
    fn new(outputs: Outputs) -> Self {
        Run { outputs, result: Value::Null, seed: None, summary: Vec::new() }
    }
}

fn require_seed(seed: Option<u64>) -> CliResult<u64> {
    seed.ok_or_else(|| Failure::config("this command is stochastic: give `seed` in the config or --seed"))
}

#[derive(Deserialize)]
struct SystemFields {
    system: Option<LpvSystem<f64>>,
    system_file: Option<PathBuf>,
}

fn load_system(raw: &RawConfig, f: SystemFields) -> CliResult<LpvSystem<f64>> {
    raw.inline_or_file(f.system, f.system_file.as_deref(), "system")
}

#[derive(Deserialize)]
struct SimulateConfig {
    #[serde(flatten)]
    system: SystemFields,
    input: SignalSpec,
    scheduling: Option<SignalSpec>,
    #[serde(rename = "T")]
    t_end: f64,
    dt: f64,
}

pub fn simulate_cmd(raw: &RawConfig, out: Outputs) -> CliResult<Run> {
    let cfg: SimulateConfig = raw.parse()?;
    let sys = load_system(raw, cfg.system)?;
    let u = cfg.input.build(cfg.dt, cfg.t_end)?;
    let p = scheduling_or_empty(cfg.scheduling.as_ref(), sys.n_p(), cfg.dt, cfg.t_end)?;
    let traj = simulate(&sys, &u, &p, cfg.t_end, cfg.dt)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=sys.n_x()).map(|i| format!("x{i}")));
    header.push("y".into());
    let mut csv = Csv::new(&header);
    for ((t, x), y) in traj.times.iter().zip(&traj.states).zip(&traj.outputs) {
        csv.row_f64(std::iter::once(*t).chain(x.iter().copied()).chain(std::iter::once(*y)));
    }
    let mut run = Run::new(out);
    run.outputs.add_text("trajectory.csv", csv.finish());
    run.summary.push(format!("y(T) = {}", fmt_f64(traj.final_output())));
    run.result = json!({
        "steps": traj.times.len() - 1,
        "final_output": traj.final_output(),
        "peak_output": traj.peak_output(),
    });
    Ok(run)
}

#[derive(Deserialize)]
struct CertifyConfig {
    #[serde(flatten)]
    system: SystemFields,
    lambda: f64,
}

pub fn certify_cmd(raw: &RawConfig, out: Outputs) -> CliResult<Run> {
    let cfg: CertifyConfig = raw.parse()?;
    let sys = load_system(raw, cfg.system)?;
    let cert = match certify(&sys, cfg.lambda) {
        Ok(c) => c,
        Err(e) => {
            let fail = Failure::from(e);
            if fail.code != crate::failure::EXIT_ASSUMPTION {
                return Err(fail);
            }
            let n = sys.n_x();
            let margin = check_stability(&sys, &DMatrix::identity(n, n), cfg.lambda)?;
            return Err(Failure::assumption(format!(
                "{}\nmargin (Q = I) = {}",
                fail.message,
                fmt_f64(margin)
            )));
        }
    };
    let mut run = Run::new(out);
    run.summary.push(format!("margin = {}", fmt_f64(cert.margin)));
    run.summary.push(format!("h2_sq = {}", fmt_f64(cert.h2_sq)));
    let mut result = json!({
        "lambda": cert.lambda,
        "margin": cert.margin,
        "h2_sq": cert.h2_sq,
    });
    match check_spectral_decay(&sys) {
        Ok(sd) => {
            let k_b = sys.b().iter().map(spectral_norm).fold(0.0, f64::max);
            let k_c = sys.c().iter().map(spectral_norm).fold(0.0, f64::max);
            let kw = |v| k_omega_sq(&sd, cfg.lambda, k_b, k_c, sys.n_p(), v).ok();
            let (printed, corrected) = (kw(KOmegaVariant::Printed), kw(KOmegaVariant::Corrected));
            if let Some(k) = printed {
                run.summary.push(format!("K_omega^2 (printed) = {}", fmt_f64(k)));
            }
            result["spectral_decay"] = serde_json::to_value(sd).expect("serializable");
            result["K_omega_sq"] = json!({ "printed": printed, "corrected": corrected, "K_B": k_b, "K_C": k_c });
        }
        Err(e) => {
            result["spectral_decay"] = json!({ "certified": false, "reason": e.to_string() });
        }
    }
    run.outputs.add_json("certificate.json", &cert);
    run.result = result;
    Ok(run)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum H2Method {
    Trace,
    Volterra,
    Both,
}

#[derive(Deserialize)]
struct H2Config {
    #[serde(flatten)]
    system: SystemFields,
    lambda: f64,
    #[serde(default)]
    truncation: TruncationSpec<f64>,
}

pub fn h2norm_cmd(raw: &RawConfig, out: Outputs, method: H2Method) -> CliResult<Run> {
    let cfg: H2Config = raw.parse()?;
    let sys = load_system(raw, cfg.system)?;
    // certification first: the norm is only defined for certified systems
    certify(&sys, cfg.lambda)?;
    let mut run = Run::new(out);
    let mut result = json!({ "lambda": cfg.lambda });
    let mut trace = None;
    if method != H2Method::Volterra {
        let q = solve_generalized_lyapunov(&sys, cfg.lambda)?.q;
        let v = h2_norm_sq(&sys, &q)?;
        run.summary.push(format!("h2_sq (trace) = {}", fmt_f64(v)));
        result["trace_h2_sq"] = json!(v);
        trace = Some(v);
    }
    if method != H2Method::Trace {
        let series = weighted_h2_truncated(&sys, cfg.lambda, &cfg.truncation)?;
        let mut csv = Csv::new(&["order".into(), "term".into(), "running_total".into()]);
        for (k, (term, total)) in series.per_order.iter().zip(series.running_totals()).enumerate() {
            csv.row(&[k.to_string(), fmt_f64(*term), fmt_f64(total)]);
        }
        run.outputs.add_text("h2_series.csv", csv.finish());
        run.summary.push(format!(
            "h2_sq (volterra, K = {}) = {}",
            cfg.truncation.max_order,
            fmt_f64(series.total)
        ));
        if let Some(t) = trace {
            run.summary.push(format!("|trace - volterra| = {}", fmt_f64((t - series.total).abs())));
            result["abs_difference"] = json!((t - series.total).abs());
        }
        for w in &series.warnings {
            run.summary.push(format!("warning: {w}"));
        }
        result["volterra"] = serde_json::to_value(&series).expect("serializable");
        result["truncation"] = serde_json::to_value(cfg.truncation).expect("serializable");
    }
    run.result = result;
    Ok(run)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbedConfig {
    spec: Option<NeuralOdeSpec<f64>>,
    spec_file: Option<PathBuf>,
    input: SignalSpec,
    #[serde(rename = "T")]
    t_end: f64,
    dt: f64,
}

pub fn embed_cmd(raw: &RawConfig, out: Outputs) -> CliResult<Run> {
    let cfg: EmbedConfig = raw.parse()?;
    let spec = raw.inline_or_file(cfg.spec, cfg.spec_file.as_deref(), "spec")?;
    let u = cfg.input.build(cfg.dt, cfg.t_end)?;
    let lpv = embed(&spec).lpv;
    let ex = extract_scheduling(&spec, &u, cfg.t_end, cfg.dt)?;
    let traj = simulate(&lpv, &u, &ex.scheduling, cfg.t_end, cfg.dt)?;

    let n = spec.n_x();
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("p{i}")));
    let mut sched = Csv::new(&header);
    let half = ex.scheduling.signal().dt();
    for (j, v) in ex.scheduling.signal().values().iter().enumerate() {
        sched.row_f64(std::iter::once(j as f64 * half).chain(v.iter().copied()));
    }
    let mut cmp = Csv::new(&["t".into(), "y_node".into(), "y_lpv".into(), "abs_dev".into()]);
    let mut max_dev = 0.0f64;
    for ((t, a), b) in ex.trajectory.times.iter().zip(&ex.trajectory.outputs).zip(&traj.outputs) {
        let d = (a - b).abs();
        max_dev = max_dev.max(d);
        cmp.row_f64([*t, *a, *b, d]);
    }
    let mut run = Run::new(out);
    run.outputs.add_json("lpv_system.json", &lpv);
    run.outputs.add_text("scheduling.csv", sched.finish());
    run.outputs.add_text("embedding.csv", cmp.finish());
    run.summary.push(format!("max |y_lpv - y_node| = {}", fmt_f64(max_dev)));
    run.result = json!({ "max_dev": max_dev, "n_p": lpv.n_p() });
    Ok(run)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomInputs {
    count: usize,
    sampler: InputSampler,
}

#[derive(Deserialize)]
struct RegionBound {
    #[serde(flatten)]
    inputs: BoundInputs<f64>,
    #[serde(rename = "N")]
    n: usize,
    delta: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionsConfig {
    spec: Option<NeuralOdeSpec<f64>>,
    spec_file: Option<PathBuf>,
    #[serde(default)]
    inputs: Vec<SignalSpec>,
    random_inputs: Option<RandomInputs>,
    #[serde(rename = "T")]
    t_end: f64,
    dt: f64,
    seed: Option<u64>,
    /// When present, the distinct count is fed to the finite-class bound.
    bound: Option<RegionBound>,
}

pub fn regions_cmd(raw: &RawConfig, out: Outputs, seed: Option<u64>) -> CliResult<Run> {
    let cfg: RegionsConfig = raw.parse()?;
    let spec = raw.inline_or_file(cfg.spec, cfg.spec_file.as_deref(), "spec")?;
    let mut inputs: Vec<SampledSignal<f64>> = cfg
        .inputs
        .iter()
        .map(|s| s.build(cfg.dt, cfg.t_end))
        .collect::<CliResult<_>>()?;
    let mut used_seed = None;
    if let Some(rnd) = &cfg.random_inputs {
        let s = require_seed(seed.or(cfg.seed))?;
        used_seed = Some(s);
        let mut rng = substream(s, 0);
        for _ in 0..rnd.count {
            inputs.push(rnd.sampler.sample(&mut rng, spec.n_in(), cfg.t_end, cfg.dt)?);
        }
    }
    if inputs.is_empty() {
        return Err(Failure::config("no inputs: give `inputs` and/or `random_inputs`"));
    }
    let count = count_regions(&spec, &inputs, cfg.t_end, cfg.dt)?;
    let mut csv = Csv::new(&["input".into(), "n_patterns".into(), "patterns".into(), "switch_times".into()]);
    for (i, s) in count.sequences.iter().enumerate() {
        let pats: Vec<String> = s
            .patterns
            .iter()
            .map(|p| p.iter().map(|b| if *b { '1' } else { '0' }).collect())
            .collect();
        let times: Vec<String> = s.switch_times(cfg.dt).into_iter().map(fmt_f64).collect();
        csv.row(&[i.to_string(), s.patterns.len().to_string(), pats.join(";"), times.join(";")]);
    }
    let mut run = Run::new(out);
    run.seed = used_seed;
    run.outputs.add_text("regions.csv", csv.finish());
    run.summary.push(format!("distinct pattern sequences = {}", count.distinct_total));
    let mut result = json!({ "inputs": inputs.len(), "distinct_total": count.distinct_total });
    if let Some(b) = cfg.bound {
        b.inputs.validate()?;
        let v = bound_vc(&b.inputs, b.n, b.delta, PhiCapacity::Finite(count.distinct_total))?;
        run.summary.push(format!("finite-class bound with card = {}: {}", count.distinct_total, fmt_f64(v.value)));
        result["R_phi_finite"] = json!(v.value);
    }
    run.result = result;
    Ok(run)
}

#[derive(Deserialize)]
struct BoundConfig {
    #[serde(flatten)]
    inputs: BoundInputs<f64>,
    #[serde(rename = "N")]
    n: usize,
    delta: f64,
    card_phi: Option<usize>,
    vc_dim: Option<usize>,
}

pub fn bound_cmd(raw: &RawConfig, out: Outputs) -> CliResult<Run> {
    let cfg: BoundConfig = raw.parse()?;
    let rep = bound_report(&cfg.inputs, cfg.n, cfg.delta, cfg.card_phi, cfg.vc_dim)?;
    let mut run = Run::new(out);
    run.summary.push(format!("R_main = {}", fmt_f64(rep.r_main)));
    run.summary.push(format!("R_rademacher = {}", fmt_f64(rep.r_rademacher)));
    if let Some(v) = rep.r_phi_finite {
        run.summary.push(format!("R_phi_finite = {}", fmt_f64(v)));
    }
    if let Some(v) = rep.r_phi_vc {
        run.summary.push(format!("R_phi_vc = {}", fmt_f64(v)));
    }
    for w in &rep.warnings {
        run.summary.push(format!("warning: {w}"));
    }
    run.outputs.add_json("bound.json", &rep);
    run.result = serde_json::to_value(&rep).expect("serializable");
    Ok(run)
}

pub fn gap_experiment_cmd(raw: &RawConfig, out: Outputs, seed: Option<u64>) -> CliResult<Run> {
    let cfg: GapExperimentConfig = raw.parse_with_seed(seed)?;
    let rep = gap_experiment(&cfg)?;
    debug_assert!(rep.csv().starts_with(TRIAL_CSV_HEADER));
    let mut run = Run::new(out);
    run.seed = Some(cfg.seed);
    run.outputs.add_text("trials.csv", rep.csv());
    run.outputs.add_json("gap_report.json", &rep);
    run.summary.push(format!(
        "violations of R_main: {}/{}; of the finite-class bound: {}/{}",
        rep.violations_main,
        rep.trials.len(),
        rep.violations_vc,
        rep.trials.len()
    ));
    run.summary.push(format!(
        "trials with Rademacher estimate above c4/sqrt(N): {}",
        rep.rademacher_exceedances
    ));
    run.result = json!({
        "violations_main": rep.violations_main,
        "violations_vc": rep.violations_vc,
        "rademacher_exceedances": rep.rademacher_exceedances,
        "trials": rep.trials.len(),
        "R_main": rep.trials.first().map(|t| t.r_main),
    });
    Ok(run)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RademacherConfig {
    /// `N x H` matrix, one row per sample.
    losses: Vec<Vec<f64>>,
    draws: usize,
    seed: Option<u64>,
}

pub fn rademacher_cmd(raw: &RawConfig, out: Outputs, seed: Option<u64>) -> CliResult<Run> {
    let cfg: RademacherConfig = raw.parse()?;
    let s = require_seed(seed.or(cfg.seed))?;
    let h = cfg.losses.first().map(|r| r.len()).unwrap_or(0);
    if cfg.losses.iter().any(|r| r.len() != h) {
        return Err(Failure::config("loss matrix rows have different lengths"));
    }
    let m = DMatrix::from_fn(cfg.losses.len(), h, |i, j| cfg.losses[i][j]);
    let est = empirical_rademacher(&m, cfg.draws, s)?;
    let mut csv = Csv::new(&["mean".into(), "stderr".into(), "draws".into()]);
    csv.row(&[fmt_f64(est.mean), fmt_f64(est.stderr), est.draws.to_string()]);
    let mut run = Run::new(out);
    run.seed = Some(s);
    run.outputs.add_text("rademacher.csv", csv.finish());
    run.summary.push(format!("estimate = {} +/- {}", fmt_f64(est.mean), fmt_f64(est.stderr)));
    run.result = serde_json::to_value(est).expect("serializable");
    Ok(run)
}

