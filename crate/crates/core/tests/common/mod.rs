#![allow(dead_code)]

use lpvgen::signal::{Hold, SampledSignal, SchedulingSignal};
use lpvgen::stability::{certify, StabilityCertificate};
use lpvgen::LpvSystem;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows.len(), rows[0].len(), &rows.concat())
}

pub fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}

/// `A0 = -2, A1 = 0.5, B0 = 1, C0 = 1`, everything else zero.
pub fn scalar_example() -> LpvSystem<f64> {
    LpvSystem::new(
        vec![scalar(-2.0), scalar(0.5)],
        vec![scalar(1.0), scalar(0.0)],
        vec![scalar(1.0), scalar(0.0)],
        vec![DVector::zeros(1); 2],
    )
    .unwrap()
}

pub fn scalar_lti(a: f64, b: f64, c: f64) -> LpvSystem<f64> {
    LpvSystem::new(
        vec![scalar(a)],
        vec![scalar(b)],
        vec![scalar(c)],
        vec![DVector::zeros(1)],
    )
    .unwrap()
}

pub fn gauss<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn gauss_matrix<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| gauss(rng) * scale)
}

/// Random system with the given sizes; not necessarily certified.
pub fn random_system<R: Rng>(rng: &mut R, n_x: usize, n_in: usize, n_p: usize, lambda: f64) -> LpvSystem<f64> {
    let nf = n_x as f64;
    let shift = lambda / 2.0 + 0.5 + rng.random::<f64>() * 2.0;
    let a0 = gauss_matrix(rng, n_x, n_x, 0.6 / nf.sqrt()) - DMatrix::identity(n_x, n_x) * shift;
    let mut a = vec![a0];
    let mut b = vec![gauss_matrix(rng, n_x, n_in, 1.0)];
    let mut c = vec![gauss_matrix(rng, 1, n_x, 1.0)];
    for _ in 0..n_p {
        let g = rng.random::<f64>() * 0.6;
        a.push(gauss_matrix(rng, n_x, n_x, g / nf.sqrt()));
        b.push(gauss_matrix(rng, n_x, n_in, 0.5));
        c.push(gauss_matrix(rng, 1, n_x, 0.5));
    }
    LpvSystem::new(a, b, c, vec![DVector::zeros(n_x); n_p + 1]).unwrap()
}

/// Draws random systems until one certifies at `lambda`.
pub fn random_certified<R: Rng>(
    rng: &mut R,
    n_x: usize,
    n_in: usize,
    n_p: usize,
    lambda: f64,
) -> (LpvSystem<f64>, StabilityCertificate<f64>) {
    for _ in 0..1000 {
        let sys = random_system(rng, n_x, n_in, n_p, lambda);
        if let Ok(cert) = certify(&sys, lambda) {
            return (sys, cert);
        }
    }
    panic!("no certified system found for n_x = {n_x}, n_p = {n_p}");
}

/// Smooth random input: a few sinusoids per channel, linear hold.
pub fn random_input<R: Rng>(rng: &mut R, dim: usize, t_end: f64, dt: f64) -> SampledSignal<f64> {
    let terms: Vec<Vec<(f64, f64, f64)>> = (0..dim)
        .map(|_| {
            (0..3)
                .map(|_| (gauss(rng), rng.random::<f64>() * 3.0, rng.random::<f64>() * 6.3))
                .collect()
        })
        .collect();
    SampledSignal::from_fn(dt, t_end, Hold::Linear, |t| {
        DVector::from_iterator(
            dim,
            terms
                .iter()
                .map(|ch| ch.iter().map(|(a, f, ph)| a * (f * t + ph).sin()).sum::<f64>()),
        )
    })
    .unwrap()
}

/// Random scheduling in `[-1, 1]`; piecewise-constant or smooth.
pub fn random_scheduling<R: Rng>(rng: &mut R, dim: usize, t_end: f64, dt: f64) -> SchedulingSignal<f64> {
    if dim == 0 {
        return SchedulingSignal::empty();
    }
    let freqs: Vec<(f64, f64)> = (0..dim)
        .map(|_| (rng.random::<f64>() * 4.0, rng.random::<f64>() * 6.3))
        .collect();
    let sig = if rng.random::<bool>() {
        SampledSignal::from_fn(dt, t_end, Hold::Linear, |t| {
            DVector::from_iterator(dim, freqs.iter().map(|(f, ph)| (f * t + ph).sin()))
        })
        .unwrap()
    } else {
        let n = lpvgen::signal::grid_len(t_end, dt);
        let mut values = Vec::with_capacity(n);
        let mut cur = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
        for _ in 0..n {
            if rng.random::<f64>() < 0.02 {
                cur = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..=1.0));
            }
            values.push(cur.clone());
        }
        SampledSignal::new(dt, Hold::ZeroOrder, values).unwrap()
    };
    SchedulingSignal::new(sig).unwrap()
}
