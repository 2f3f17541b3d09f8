use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub draws: usize,
}

/// Deterministic stream `stream` of the generator seeded by `seed`.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Monte-Carlo estimate of `E_sigma[max_h (1/N) sum_i sigma_i L[i, h]]` for an
/// `N x H` matrix, with i.i.d. uniform signs.
pub fn empirical_rademacher(values: &DMatrix<f64>, draws: usize, seed: u64) -> Result<RademacherEstimate> {
    empirical_rademacher_with(values, draws, &mut substream(seed, 0))
}

pub fn empirical_rademacher_with<R: Rng>(
    values: &DMatrix<f64>,
    draws: usize,
    rng: &mut R,
) -> Result<RademacherEstimate> {
    let (n, h) = values.shape();
    if n == 0 || h == 0 {
        return Err(Error::InvalidArgument("empty loss matrix".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidArgument("draws must be at least 1".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut sigma = vec![0.0; n];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        for s in sigma.iter_mut() {
            *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        let best = (0..h)
            .map(|col| {
                values
                    .column(col)
                    .iter()
                    .zip(&sigma)
                    .map(|(v, s)| v * s)
                    .sum::<f64>()
                    * inv_n
            })
            .fold(f64::NEG_INFINITY, f64::max);
        sum += best;
        sum_sq += best * best;
    }
    let d = draws as f64;
    let mean = sum / d;
    let var = if draws > 1 {
        ((sum_sq - d * mean * mean) / (d - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(RademacherEstimate {
        mean,
        stderr: (var / d).sqrt(),
        draws,
    })
}
