//! Small numerical helpers shared across modules.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    correction: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.correction += (self.sum - t) + x;
        } else {
            self.correction += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.correction
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// Deterministic random stream `stream` derived from a master seed.
///
/// Streams with distinct indices are disjoint ChaCha8 keystreams, so the
/// draws assigned to a given index never depend on how work is scheduled.
pub fn substream(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// A 64-bit seed drawn from the given substream.
pub fn derive_seed(master_seed: u64, stream: u64) -> u64 {
    use rand::RngCore;
    substream(master_seed, stream).next_u64()
}

/// Solve the symmetric positive-definite system `a x = b` by Cholesky.
///
/// Returns `Err(pivot)` with the offending pivot when a diagonal pivot falls
/// to `min_pivot` or below.
pub fn cholesky_solve(a: &[Vec<f64>], b: &[f64], min_pivot: f64) -> std::result::Result<Vec<f64>, f64> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > min_pivot) {
                    return Err(s);
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Ok(x)
}
