//! Seeded random state families: Hilbert-Schmidt full-rank states, rank-`r`
//! states, Haar-random pure states, and pure states mixed with noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{derive_seed, substream};
use crate::qcore::{c, CMatrix, DensityMatrix};

/// Purity tolerance for the pure component of a noise mixture.
pub const PURITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    FullrankHs,
    RankR,
    HaarPure,
    NoiseMixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    MaximallyMixed,
    #[default]
    RandomFullrank,
}

/// Declarative description of a random state draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub dim: usize,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub noise_kind: NoiseKind,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::InvalidArgument(format!("ensemble dimension {} < 2", self.dim)));
        }
        if let Some(r) = self.rank {
            if r == 0 || r > self.dim {
                return Err(Error::InvalidArgument(format!("rank {r} outside 1..={}", self.dim)));
            }
        }
        match self.kind {
            EnsembleKind::RankR if self.rank.is_none() => {
                Err(Error::InvalidArgument("rank_r ensemble needs a rank".into()))
            }
            EnsembleKind::NoiseMixture => match self.epsilon {
                Some(e) if (0.0..=1.0).contains(&e) => Ok(()),
                Some(e) => Err(Error::InvalidArgument(format!("epsilon {e} outside [0, 1]"))),
                None => Err(Error::InvalidArgument("noise_mixture ensemble needs epsilon".into())),
            },
            _ => Ok(()),
        }
    }

    /// Draw the state described by this spec.
    pub fn sample(&self) -> Result<DensityMatrix> {
        self.validate()?;
        match self.kind {
            EnsembleKind::FullrankHs => random_fullrank(self.dim, self.seed),
            EnsembleKind::RankR => random_rank_r(self.dim, self.rank.unwrap_or(self.dim), self.seed),
            EnsembleKind::HaarPure => random_pure(self.dim, self.seed),
            EnsembleKind::NoiseMixture => {
                let psi = random_pure(self.dim, derive_seed(self.seed, 0))?;
                let sigma = match self.noise_kind {
                    NoiseKind::MaximallyMixed => DensityMatrix::maximally_mixed(self.dim)?,
                    NoiseKind::RandomFullrank => random_fullrank(self.dim, derive_seed(self.seed, 1))?,
                };
                noise_mixture(&psi, &sigma, self.epsilon.unwrap_or(0.0))
            }
        }
    }
}

/// `rows x cols` complex Ginibre matrix with `E|G_ij|^2 = 1`.
fn ginibre(rows: usize, cols: usize, seed: u64) -> CMatrix {
    let mut rng = substream(seed, 0);
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    let mut g = CMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            g[(i, j)] = c(re * scale, im * scale);
        }
    }
    g
}

/// Hilbert-Schmidt random state `G G^H / tr(G G^H)` with square Ginibre `G`.
pub fn random_fullrank(dim: usize, seed: u64) -> Result<DensityMatrix> {
    random_rank_r(dim, dim, seed)
}

/// Rank-`r` state `G G^H / tr(G G^H)` with `G` of shape `dim x r`.
pub fn random_rank_r(dim: usize, r: usize, seed: u64) -> Result<DensityMatrix> {
    if dim < 1 || r < 1 || r > dim {
        return Err(Error::InvalidArgument(format!("rank {r} outside 1..={dim}")));
    }
    let g = ginibre(dim, r, seed);
    DensityMatrix::from_unnormalized(&(&g * g.adjoint()))
}

/// Haar-random pure state from a normalized complex Gaussian vector.
pub fn random_pure(dim: usize, seed: u64) -> Result<DensityMatrix> {
    if dim < 1 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    let g = ginibre(dim, 1, seed);
    DensityMatrix::pure(g.column(0).as_slice())
}

/// `(1 - epsilon) |psi><psi| + epsilon sigma`.
pub fn noise_mixture(psi: &DensityMatrix, sigma: &DensityMatrix, epsilon: f64) -> Result<DensityMatrix> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if psi.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: psi.dim(),
            found: sigma.dim(),
        });
    }
    let purity = psi.purity();
    if (purity - 1.0).abs() > PURITY_TOL {
        return Err(Error::NotPure(purity));
    }
    if epsilon == 0.0 {
        return Ok(psi.clone());
    }
    if epsilon == 1.0 {
        return Ok(sigma.clone());
    }
    let m = psi.matrix() * c(1.0 - epsilon, 0.0) + sigma.matrix() * c(epsilon, 0.0);
    DensityMatrix::from_unnormalized(&m)
}
