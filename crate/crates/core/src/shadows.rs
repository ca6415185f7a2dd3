//! Randomized-Pauli classical shadows and U-statistic estimators of the
//! Krylov and Taylor bounds.
//!
//! Each shadow measures every qubit in a uniformly random Pauli basis and
//! records the outcome bit. Its snapshot `(x)_i (3|s_i><s_i| - 1)` is an
//! unbiased estimate of `rho`. Shadows are dealt round-robin into `B`
//! batches; the batch means feed U-statistics, i.e. sums over ordered tuples
//! of distinct batches, which are unbiased for polynomials in `rho`.
//!
//! Qubit 0 is the most significant bit of a computational-basis index and
//! the leftmost tensor factor. A basis combination is stored as a base-3
//! number (`X = 0`, `Y = 1`, `Z = 2`) with qubit 0 as the leading digit.
//!
//! The shadow stream is a function of `(rho, seed)` alone: shadow `i` is
//! drawn from substream `i / CHUNK` of the seed. Resampling with a different
//! batch count therefore re-partitions the same shadows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{cholesky_solve, substream, CompensatedSum};
use crate::qcore::{c, i_commutator, qubit_dim, trace_product, CMatrix, DensityMatrix, Observable, C64, DEFAULT_MAX_QUBITS};

/// Shadows drawn from one random substream.
pub const CHUNK: u64 = 1 << 14;
/// Largest qubit count for which the full Born table is precomputed.
pub const DEFAULT_TABLE_MAX_QUBITS: usize = 10;
/// Relative eigenvalue cutoff of the truncated fallback solve.
pub const TRUNCATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliBasis {
    X,
    Y,
    Z,
}

impl PauliBasis {
    pub const ALL: [PauliBasis; 3] = [PauliBasis::X, PauliBasis::Y, PauliBasis::Z];

    fn digit(self) -> u32 {
        self as u32
    }

    fn from_digit(d: u32) -> Self {
        Self::ALL[d as usize]
    }

    pub fn from_char(ch: char) -> Result<Self> {
        match ch {
            'X' | 'x' => Ok(PauliBasis::X),
            'Y' | 'y' => Ok(PauliBasis::Y),
            'Z' | 'z' => Ok(PauliBasis::Z),
            _ => Err(Error::Parse(format!("unknown Pauli basis '{ch}'"))),
        }
    }

    /// Rows are `<s_0|` and `<s_1|`: projecting onto the eigenstate measured as outcome 0 or 1.
    fn bra_rows(self) -> [[C64; 2]; 2] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            PauliBasis::Z => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            PauliBasis::X => [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]],
            PauliBasis::Y => [[c(h, 0.0), c(0.0, -h)], [c(h, 0.0), c(0.0, h)]],
        }
    }

    /// `3 |s><s| - 1` for the eigenstate with the given outcome bit.
    pub fn snapshot_factor(self, outcome: u8) -> [[C64; 2]; 2] {
        let bra = self.bra_rows()[outcome as usize & 1];
        let ket = [bra[0].conj(), bra[1].conj()];
        let mut f = [[c(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                f[i][j] = ket[i] * bra[j] * 3.0;
                if i == j {
                    f[i][j] -= c(1.0, 0.0);
                }
            }
        }
        f
    }
}

impl fmt::Display for PauliBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ch = match self {
            PauliBasis::X => 'X',
            PauliBasis::Y => 'Y',
            PauliBasis::Z => 'Z',
        };
        write!(f, "{ch}")
    }
}

/// One measurement record: a basis combination and an outcome bitstring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ShadowKey {
    /// Base-3 basis index, qubit 0 leading.
    pub basis: u32,
    /// Outcome bits, qubit 0 most significant.
    pub outcome: u32,
}

impl ShadowKey {
    pub fn bases(&self, num_qubits: usize) -> Vec<PauliBasis> {
        let mut digits = vec![PauliBasis::X; num_qubits];
        let mut b = self.basis;
        for q in (0..num_qubits).rev() {
            digits[q] = PauliBasis::from_digit(b % 3);
            b /= 3;
        }
        digits
    }

    pub fn outcome_bits(&self, num_qubits: usize) -> Vec<u8> {
        (0..num_qubits)
            .map(|q| ((self.outcome >> (num_qubits - 1 - q)) & 1) as u8)
            .collect()
    }

    pub fn from_parts(bases: &[PauliBasis], bits: &[u8]) -> Result<Self> {
        if bases.len() != bits.len() {
            return Err(Error::DimensionMismatch {
                expected: bases.len(),
                found: bits.len(),
            });
        }
        let mut basis = 0u32;
        let mut outcome = 0u32;
        for (b, &bit) in bases.iter().zip(bits) {
            if bit > 1 {
                return Err(Error::Parse(format!("outcome bit {bit} is not 0 or 1")));
            }
            basis = basis * 3 + b.digit();
            outcome = (outcome << 1) | bit as u32;
        }
        Ok(ShadowKey { basis, outcome })
    }

    /// `XYZ`-style basis string.
    pub fn basis_string(&self, num_qubits: usize) -> String {
        self.bases(num_qubits).iter().map(|b| b.to_string()).collect()
    }

    /// `0101`-style outcome string.
    pub fn outcome_string(&self, num_qubits: usize) -> String {
        self.outcome_bits(num_qubits).iter().map(|b| char::from(b'0' + b)).collect()
    }
}

/// Aggregated shadow records, split into batches.
#[derive(Debug, Clone, PartialEq)]
pub struct ShadowCounts {
    pub num_qubits: usize,
    pub total_shadows: u64,
    pub seed: u64,
    pub batches: Vec<BTreeMap<ShadowKey, u64>>,
}

impl ShadowCounts {
    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn batch_size(&self, i: usize) -> u64 {
        self.batches[i].values().sum()
    }

    /// Check the count total and the equal-size invariant.
    pub fn validate(&self) -> Result<()> {
        let sizes: Vec<u64> = (0..self.num_batches()).map(|i| self.batch_size(i)).collect();
        let total: u64 = sizes.iter().sum();
        if total != self.total_shadows {
            return Err(Error::InvalidArgument(format!(
                "batch counts sum to {total}, header says {}",
                self.total_shadows
            )));
        }
        if let (Some(lo), Some(hi)) = (sizes.iter().min(), sizes.iter().max()) {
            if hi - lo > 1 {
                return Err(Error::InvalidArgument(format!("batch sizes range from {lo} to {hi}")));
            }
        }
        Ok(())
    }
}

/// Mean snapshot of one batch.
#[derive(Debug, Clone)]
pub struct ShadowBatch {
    pub mean: CMatrix,
    pub size: u64,
}

impl ShadowBatch {
    /// Plug-in batch holding the exact state, for noiseless checks.
    pub fn exact(rho: &DensityMatrix) -> Self {
        ShadowBatch {
            mean: rho.matrix().clone(),
            size: 1,
        }
    }
}

fn kron_factors(factors: &[[[C64; 2]; 2]]) -> CMatrix {
    let mut out = CMatrix::from_element(1, 1, c(1.0, 0.0));
    for f in factors {
        let d = out.nrows();
        let mut next = CMatrix::zeros(2 * d, 2 * d);
        for i in 0..d {
            for j in 0..d {
                let v = out[(i, j)];
                if v == c(0.0, 0.0) {
                    continue;
                }
                for a in 0..2 {
                    for b in 0..2 {
                        next[(2 * i + a, 2 * j + b)] = v * f[a][b];
                    }
                }
            }
        }
        out = next;
    }
    out
}

/// The snapshot `(x)_i (3 |s_i><s_i| - 1)` for one measurement record.
pub fn snapshot_matrix(bases: &[PauliBasis], outcome: &[u8]) -> Result<CMatrix> {
    if bases.len() != outcome.len() {
        return Err(Error::DimensionMismatch {
            expected: bases.len(),
            found: outcome.len(),
        });
    }
    if let Some(&bit) = outcome.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidArgument(format!("outcome bit {bit} is not 0 or 1")));
    }
    let factors: Vec<_> = bases.iter().zip(outcome).map(|(b, &o)| b.snapshot_factor(o)).collect();
    Ok(kron_factors(&factors))
}

fn key_snapshot(key: ShadowKey, num_qubits: usize) -> CMatrix {
    let bases = key.bases(num_qubits);
    let bits = key.outcome_bits(num_qubits);
    let factors: Vec<_> = bases.iter().zip(&bits).map(|(b, &o)| b.snapshot_factor(o)).collect();
    kron_factors(&factors)
}

/// Rotate the leading qubit of `m` into `basis` and keep the two diagonal
/// blocks: the unnormalized states conditioned on outcomes 0 and 1.
fn measure_leading_qubit(m: &CMatrix, basis: PauliBasis) -> [CMatrix; 2] {
    let half = m.nrows() / 2;
    let u = basis.bra_rows();
    let block = |r: usize, col: usize| m.view((r * half, col * half), (half, half));
    let mut out = [CMatrix::zeros(half, half), CMatrix::zeros(half, half)];
    for (o, target) in out.iter_mut().enumerate() {
        for a in 0..2 {
            for b in 0..2 {
                let w = u[o][a] * u[o][b].conj();
                if w == c(0.0, 0.0) {
                    continue;
                }
                *target += block(a, b) * w;
            }
        }
    }
    out
}

/// Born probabilities of every outcome for every basis combination,
/// `table[basis][outcome]`.
fn born_table(rho: &CMatrix, num_qubits: usize) -> Vec<Vec<f64>> {
    fn recurse(level: usize, n: usize, blocks: Vec<CMatrix>, prefix: usize, out: &mut Vec<Vec<f64>>) {
        if level == n {
            let mut probs: Vec<f64> = blocks.iter().map(|b| b[(0, 0)].re.max(0.0)).collect();
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            out[prefix] = probs;
            return;
        }
        for basis in PauliBasis::ALL {
            let next: Vec<CMatrix> = blocks
                .iter()
                .flat_map(|m| measure_leading_qubit(m, basis))
                .collect();
            recurse(level + 1, n, next, prefix * 3 + basis.digit() as usize, out);
        }
    }
    let mut out = vec![Vec::new(); 3usize.pow(num_qubits as u32)];
    recurse(0, num_qubits, vec![rho.clone()], 0, &mut out);
    out
}

#[derive(Debug, Clone, Copy)]
pub struct SamplerOptions {
    pub max_qubits: usize,
    /// Above this qubit count, outcomes are drawn qubit by qubit per shadow
    /// instead of from a precomputed Born table.
    pub table_max_qubits: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            max_qubits: DEFAULT_MAX_QUBITS,
            table_max_qubits: DEFAULT_TABLE_MAX_QUBITS,
        }
    }
}

/// Largest `6^N B` for which draws are tallied in a dense array.
const DENSE_TALLY_MAX: usize = 1 << 22;

enum Tally {
    Dense(Vec<u64>),
    Sparse(Vec<HashMap<ShadowKey, u64>>),
}

impl Tally {
    fn merge(self, other: Tally) -> Tally {
        match (self, other) {
            (Tally::Dense(mut a), Tally::Dense(b)) => {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Tally::Dense(a)
            }
            (Tally::Sparse(mut a), Tally::Sparse(b)) => {
                for (dst, src) in a.iter_mut().zip(b) {
                    for (k, v) in src {
                        *dst.entry(k).or_insert(0) += v;
                    }
                }
                Tally::Sparse(a)
            }
            _ => unreachable!("tallies of one run share a layout"),
        }
    }
}

enum OutcomeSampler {
    Table(Vec<Vec<f64>>),
    Sequential(CMatrix),
}

impl OutcomeSampler {
    fn draw<R: Rng>(&self, rng: &mut R, num_qubits: usize, basis: u32) -> u32 {
        match self {
            OutcomeSampler::Table(cdfs) => {
                let cdf = &cdfs[basis as usize];
                let u: f64 = rng.random();
                let idx = cdf.partition_point(|&v| v <= u);
                idx.min(cdf.len() - 1) as u32
            }
            OutcomeSampler::Sequential(rho) => {
                let bases = ShadowKey { basis, outcome: 0 }.bases(num_qubits);
                let mut m = rho.clone();
                let mut outcome = 0u32;
                for b in bases {
                    let [m0, m1] = measure_leading_qubit(&m, b);
                    let p0 = m0.trace().re;
                    let p1 = m1.trace().re;
                    let u: f64 = rng.random();
                    let bit = if u * (p0 + p1) < p0 { 0 } else { 1 };
                    outcome = (outcome << 1) | bit;
                    m = if bit == 0 { m0 } else { m1 };
                }
                outcome
            }
        }
    }
}

fn num_qubits_of(rho: &DensityMatrix, max_qubits: usize) -> Result<usize> {
    let d = rho.dim();
    if !d.is_power_of_two() || d < 2 {
        return Err(Error::InvalidArgument(format!("dimension {d} is not a qubit register")));
    }
    let n = d.trailing_zeros() as usize;
    qubit_dim(n, max_qubits)?;
    Ok(n)
}

/// Draw `total` shadows of `rho` and deal them round-robin into `num_batches` batches.
pub fn sample_shadows(rho: &DensityMatrix, total: u64, num_batches: usize, seed: u64) -> Result<ShadowCounts> {
    sample_shadows_with(rho, total, num_batches, seed, &SamplerOptions::default())
}

pub fn sample_shadows_with(
    rho: &DensityMatrix,
    total: u64,
    num_batches: usize,
    seed: u64,
    opts: &SamplerOptions,
) -> Result<ShadowCounts> {
    let n = num_qubits_of(rho, opts.max_qubits)?;
    if num_batches == 0 || total < num_batches as u64 {
        return Err(Error::InvalidArgument(format!(
            "need shots >= batches >= 1 (shots {total}, batches {num_batches})"
        )));
    }
    let sampler = if n <= opts.table_max_qubits {
        let table = born_table(rho.matrix(), n);
        let cdfs = table
            .into_iter()
            .map(|probs| {
                let mut acc = 0.0;
                probs
                    .into_iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        OutcomeSampler::Table(cdfs)
    } else {
        OutcomeSampler::Sequential(rho.matrix().clone())
    };
    let num_bases = 3u32.pow(n as u32);
    let chunks = total.div_ceil(CHUNK);
    let b = num_batches as u64;

    let cells = (num_bases as usize) << n;
    let dense = cells.saturating_mul(num_batches) <= DENSE_TALLY_MAX;
    let draw_chunk = |chunk: u64, tally: &mut Tally| {
        let mut rng = substream(seed, chunk);
        let start = chunk * CHUNK;
        let end = (start + CHUNK).min(total);
        for i in start..end {
            let basis = rng.random_range(0..num_bases);
            let outcome = sampler.draw(&mut rng, n, basis);
            let batch = (i % b) as usize;
            match tally {
                Tally::Dense(v) => v[batch * cells + ((basis as usize) << n) + outcome as usize] += 1,
                Tally::Sparse(maps) => *maps[batch].entry(ShadowKey { basis, outcome }).or_insert(0) += 1,
            }
        }
    };
    let empty = || {
        if dense {
            Tally::Dense(vec![0; cells * num_batches])
        } else {
            Tally::Sparse(vec![HashMap::new(); num_batches])
        }
    };
    // Integer counts merge exactly, so the reduction order does not matter.
    let tally = (0..chunks)
        .into_par_iter()
        .fold(empty, |mut t, chunk| {
            draw_chunk(chunk, &mut t);
            t
        })
        .reduce(empty, Tally::merge);

    let batches = match tally {
        Tally::Dense(v) => v
            .chunks(cells)
            .map(|batch| {
                batch
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0)
                    .map(|(idx, &c)| {
                        let key = ShadowKey {
                            basis: (idx >> n) as u32,
                            outcome: (idx & ((1 << n) - 1)) as u32,
                        };
                        (key, c)
                    })
                    .collect()
            })
            .collect(),
        Tally::Sparse(maps) => maps.into_iter().map(|m| m.into_iter().collect()).collect(),
    };
    Ok(ShadowCounts {
        num_qubits: n,
        total_shadows: total,
        seed,
        batches,
    })
}

/// Mean snapshot per batch, assembled from the distinct records.
pub fn batch_means(counts: &ShadowCounts) -> Result<Vec<ShadowBatch>> {
    let n = counts.num_qubits;
    let d = 1usize << n;
    counts
        .batches
        .par_iter()
        .enumerate()
        .map(|(i, batch)| {
            let size: u64 = batch.values().sum();
            if size == 0 {
                return Err(Error::EmptyBatch(i));
            }
            let mut mean = CMatrix::zeros(d, d);
            for (&key, &count) in batch {
                mean += key_snapshot(key, n) * c(count as f64 / size as f64, 0.0);
            }
            Ok(ShadowBatch { mean, size })
        })
        .collect()
}

fn check_batches(batches: &[ShadowBatch], h: &Observable, needed: usize) -> Result<()> {
    if batches.len() < needed {
        return Err(Error::InsufficientBatches {
            needed,
            available: batches.len(),
        });
    }
    for b in batches {
        if b.mean.nrows() != h.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                found: b.mean.nrows(),
            });
        }
    }
    Ok(())
}

/// Number of ordered tuples of `k` distinct items out of `n`.
fn falling_factorial(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// U-statistic estimates of `T_0, ..., T_{k_max}` from batch means.
///
/// `T_k` averages `tr(i[r_1, H] R_{r_2} ... R_{r_{k+1}}(i[r_{k+2}, H]))`
/// over all ordered tuples of `k + 2` distinct batches.
///
/// For each innermost batch `j`, `G(M, j)`, the sum of the nested `R`
/// applications over every ordering of the set `M`, satisfies
/// `G(M, j) = sum_{m in M} R_m(G(M - m, j))`. The outermost index then only
/// enters through the sum of the remaining commutators, so one trace per
/// `(M, j)` covers all its tuples. When the subset table would not fit in
/// [`SUBSET_TABLE_MAX_ENTRIES`] the tuples are walked one by one instead.
pub fn u_stat_moments(batches: &[ShadowBatch], h: &Observable, k_max: usize) -> Result<Vec<f64>> {
    check_batches(batches, h, k_max + 2)?;
    let count = batches.len();
    let d = h.dim();
    if count >= usize::BITS as usize || (1usize << (count - 1)).saturating_mul(d * d) > SUBSET_TABLE_MAX_ENTRIES {
        return u_stat_moments_by_tuples(batches, h, k_max);
    }
    let comms: Vec<CMatrix> = batches.iter().map(|b| i_commutator(&b.mean, h.matrix())).collect();
    let mut comm_total = CMatrix::zeros(d, d);
    comms.iter().for_each(|c| comm_total += c);
    let popcount = |m: usize| m.count_ones() as usize;

    let per_inner: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|j| {
            // Subsets of the other batches, smallest first.
            let others: Vec<usize> = (0..count).filter(|&i| i != j).collect();
            let full = (1usize << others.len()) - 1;
            let mut masks: Vec<usize> = (0..=full).filter(|&m| popcount(m) <= k_max).collect();
            masks.sort_by_key(|&m| (popcount(m), m));
            let mut nested: Vec<Option<CMatrix>> = vec![None; full + 1];
            let mut sums = vec![CompensatedSum::new(); k_max + 1];
            for &m in &masks {
                let g = if m == 0 {
                    comms[j].clone()
                } else {
                    let mut acc = CMatrix::zeros(d, d);
                    for (bit, &r) in others.iter().enumerate() {
                        if m & (1 << bit) != 0 {
                            let prev = nested[m ^ (1 << bit)].as_ref().expect("smaller sets first");
                            acc += crate::qcore::apply_r_matrix(&batches[r].mean, prev);
                        }
                    }
                    acc
                };
                let mut outer = &comm_total - &comms[j];
                for (bit, &r) in others.iter().enumerate() {
                    if m & (1 << bit) != 0 {
                        outer -= &comms[r];
                    }
                }
                sums[popcount(m)].add(trace_product(&outer, &g).re);
                nested[m] = Some(g);
            }
            sums.iter().map(CompensatedSum::value).collect()
        })
        .collect();

    Ok((0..=k_max)
        .map(|k| {
            let total: CompensatedSum = per_inner.iter().map(|s| s[k]).collect();
            total.value() / falling_factorial(count, k + 2)
        })
        .collect())
}

/// [`u_stat_moments`] by a depth-first walk over ordered tuples, sharing
/// the nested `R` applications between orders.
pub fn u_stat_moments_by_tuples(batches: &[ShadowBatch], h: &Observable, k_max: usize) -> Result<Vec<f64>> {
    check_batches(batches, h, k_max + 2)?;
    let count = batches.len();
    let comms: Vec<CMatrix> = batches.iter().map(|b| i_commutator(&b.mean, h.matrix())).collect();

    fn walk(
        v: &CMatrix,
        depth: usize,
        used: &mut Vec<bool>,
        batches: &[ShadowBatch],
        comms: &[CMatrix],
        k_max: usize,
        sums: &mut [CompensatedSum],
    ) {
        for (i, comm) in comms.iter().enumerate() {
            if !used[i] {
                sums[depth].add(trace_product(comm, v).re);
            }
        }
        if depth == k_max {
            return;
        }
        for r in 0..batches.len() {
            if used[r] {
                continue;
            }
            used[r] = true;
            let next = crate::qcore::apply_r_matrix(&batches[r].mean, v);
            walk(&next, depth + 1, used, batches, comms, k_max, sums);
            used[r] = false;
        }
    }

    let per_inner: Vec<Vec<f64>> = (0..count)
        .into_par_iter()
        .map(|j| {
            let mut used = vec![false; count];
            used[j] = true;
            let mut sums = vec![CompensatedSum::new(); k_max + 1];
            walk(&comms[j], 0, &mut used, batches, &comms, k_max, &mut sums);
            sums.iter().map(CompensatedSum::value).collect()
        })
        .collect();

    Ok((0..=k_max)
        .map(|k| {
            let total: CompensatedSum = per_inner.iter().map(|s| s[k]).collect();
            total.value() / falling_factorial(count, k + 2)
        })
        .collect())
}

/// U-statistic estimate of the single moment `T_k`.
pub fn u_stat_tk(batches: &[ShadowBatch], h: &Observable, k: usize) -> Result<f64> {
    Ok(u_stat_moments(batches, h, k)?[k])
}

/// How `b^T A^{-1} b` was solved for an estimated Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SolveStrategy {
    Cholesky,
    /// Symmetric eigendecomposition, dropping eigenvalues below
    /// `TRUNCATION_TOL * max|lambda|`.
    TruncatedEigen { dropped: usize },
}

impl fmt::Display for SolveStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStrategy::Cholesky => write!(f, "cholesky"),
            SolveStrategy::TruncatedEigen { dropped } => write!(f, "truncated_eigen({dropped})"),
        }
    }
}

/// `b^T A^{-1} b` for a possibly indefinite estimated Gram system.
pub fn solve_gram(a: &[Vec<f64>], b: &[f64], order: usize) -> Result<(f64, SolveStrategy)> {
    if let Ok(x) = cholesky_solve(a, b, 0.0) {
        let value = b.iter().zip(&x).map(|(bi, xi)| bi * xi).collect::<CompensatedSum>().value();
        return Ok((value, SolveStrategy::Cholesky));
    }
    let n = b.len();
    let eig = SymmetricEigen::new(DMatrix::from_fn(n, n, |i, j| a[i][j]));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    let cutoff = TRUNCATION_TOL * scale;
    let mut value = 0.0;
    let mut dropped = 0;
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        if !(lambda.abs() > cutoff) || scale == 0.0 {
            dropped += 1;
            continue;
        }
        let v = eig.eigenvectors.column(idx);
        let proj: f64 = v.iter().zip(b).map(|(vi, bi)| vi * bi).sum();
        value += proj * proj / lambda;
    }
    if dropped == n {
        return Err(Error::SingularEstimate { order });
    }
    Ok((value, SolveStrategy::TruncatedEigen { dropped }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateKind {
    #[serde(rename = "T_k")]
    Moment,
    #[serde(rename = "W_ab")]
    TraceProduct,
    KrylovBound,
    TaylorBound,
}

/// One estimated quantity together with the data it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub kind: EstimateKind,
    pub indices: Vec<usize>,
    pub value: f64,
    pub shots: u64,
    pub seed: u64,
    pub order: usize,
    #[serde(default)]
    pub solve: Option<SolveStrategy>,
}

/// Krylov-bound estimate from batch means; also returns the estimated moments.
pub fn estimate_krylov_from_batches(
    batches: &[ShadowBatch],
    h: &Observable,
    n: usize,
) -> Result<(f64, SolveStrategy, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("Krylov order must be at least 1".into()));
    }
    check_batches(batches, h, 2 * n + 1)?;
    let moments = u_stat_moments(batches, h, 2 * n - 1)?;
    let a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| moments[i + j + 1]).collect()).collect();
    let b: Vec<f64> = moments[..n].to_vec();
    let (value, strategy) = solve_gram(&a, &b, n)?;
    Ok((value, strategy, moments))
}

/// Estimate `B_n` from shadow counts holding at least `2n + 1` batches.
pub fn estimate_krylov(counts: &ShadowCounts, h: &Observable, n: usize) -> Result<EstimateRecord> {
    if counts.num_batches() < 2 * n + 1 {
        return Err(Error::InsufficientBatches {
            needed: 2 * n + 1,
            available: counts.num_batches(),
        });
    }
    let batches = batch_means(counts)?;
    let (value, strategy, _) = estimate_krylov_from_batches(&batches, h, n)?;
    Ok(EstimateRecord {
        kind: EstimateKind::KrylovBound,
        indices: vec![],
        value,
        shots: counts.total_shadows,
        seed: counts.seed,
        order: n,
        solve: Some(strategy),
    })
}

/// Estimates of `T_0 ..= T_{k_max}` as records.
pub fn estimate_moments(counts: &ShadowCounts, h: &Observable, k_max: usize) -> Result<Vec<EstimateRecord>> {
    let batches = batch_means(counts)?;
    let moments = u_stat_moments(&batches, h, k_max)?;
    Ok(moments
        .into_iter()
        .enumerate()
        .map(|(k, value)| EstimateRecord {
            kind: EstimateKind::Moment,
            indices: vec![k],
            value,
            shots: counts.total_shadows,
            seed: counts.seed,
            order: k,
            solve: None,
        })
        .collect())
}

/// Coefficients `c[a][b]` with `sum_{j<=n} (X - Y)^2 (1 - X - Y)^j = sum c[a][b] X^a Y^b`
/// for commuting `X`, `Y`.
pub fn taylor_coefficients(n: usize) -> Vec<Vec<f64>> {
    let size = n + 3;
    let mul = |p: &Vec<Vec<f64>>, q: &[(usize, usize, f64)]| {
        let mut out = vec![vec![0.0; size]; size];
        for a in 0..size {
            for b in 0..size {
                if p[a][b] == 0.0 {
                    continue;
                }
                for &(da, db, coef) in q {
                    if a + da < size && b + db < size {
                        out[a + da][b + db] += p[a][b] * coef;
                    }
                }
            }
        }
        out
    };
    let shift = [(0, 0, 1.0), (1, 0, -1.0), (0, 1, -1.0)];
    let square = [(2, 0, 1.0), (1, 1, -2.0), (0, 2, 1.0)];
    let mut power = vec![vec![0.0; size]; size];
    power[0][0] = 1.0;
    let mut series = vec![vec![0.0; size]; size];
    for j in 0..=n {
        if j > 0 {
            power = mul(&power, &shift);
        }
        for a in 0..size {
            for b in 0..size {
                series[a][b] += power[a][b];
            }
        }
    }
    mul(&series, &square)
}

/// U-statistic estimate of `W_{a,b} = tr(rho^a H rho^b H)` over ordered
/// tuples of `a + b` distinct batches.
pub fn u_stat_trace_product(batches: &[ShadowBatch], h: &Observable, a: usize, b: usize) -> Result<f64> {
    check_batches(batches, h, a + b)?;
    let count = batches.len();
    let d = h.dim();
    let hm = h.matrix();
    let identity = CMatrix::identity(d, d);

    fn right_walk(
        q: &CMatrix,
        remaining: usize,
        used: &mut Vec<bool>,
        batches: &[ShadowBatch],
        left_h: &CMatrix,
        hm: &CMatrix,
        acc: &mut CompensatedSum,
    ) {
        if remaining == 0 {
            let right_h = q * hm;
            acc.add(trace_product(left_h, &right_h).re);
            return;
        }
        for r in 0..batches.len() {
            if used[r] {
                continue;
            }
            used[r] = true;
            let next = q * &batches[r].mean;
            right_walk(&next, remaining - 1, used, batches, left_h, hm, acc);
            used[r] = false;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn left_walk(
        p: &CMatrix,
        remaining: usize,
        right_len: usize,
        used: &mut Vec<bool>,
        batches: &[ShadowBatch],
        identity: &CMatrix,
        hm: &CMatrix,
        acc: &mut CompensatedSum,
    ) {
        if remaining == 0 {
            let left_h = p * hm;
            right_walk(identity, right_len, used, batches, &left_h, hm, acc);
            return;
        }
        for r in 0..batches.len() {
            if used[r] {
                continue;
            }
            used[r] = true;
            let next = p * &batches[r].mean;
            left_walk(&next, remaining - 1, right_len, used, batches, identity, hm, acc);
            used[r] = false;
        }
    }

    let (outer, inner) = if a > 0 { (a, b) } else { (b, 0) };
    if outer == 0 {
        return Ok(trace_product(hm, hm).re);
    }
    let partials: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|first| {
            let mut used = vec![false; count];
            used[first] = true;
            let mut acc = CompensatedSum::new();
            left_walk(&batches[first].mean, outer - 1, inner, &mut used, batches, &identity, hm, &mut acc);
            acc.value()
        })
        .collect();
    let total: CompensatedSum = partials.into_iter().collect();
    Ok(total.value() / falling_factorial(count, a + b))
}

/// Largest `2^B d^2` for which [`trace_product_table`] keeps every subset product in memory.
pub const SUBSET_TABLE_MAX_ENTRIES: usize = 1 << 22;

/// All U-statistics `W_{a,b}` with `a + b <= max_degree`, indexed `[a][b]`.
///
/// With `L(A)` the sum of `prod_{i in A}` over every ordering of the batch
/// set `A`, the ordered-tuple sum of `W_{a,b}` equals the sum of
/// `tr(L(A) H L(T) H)` over disjoint sets with `|A| = a`, `|T| = b`. This
/// needs `2^B` products and `3^B` traces instead of one product per tuple.
pub fn trace_product_table(batches: &[ShadowBatch], h: &Observable, max_degree: usize) -> Result<Vec<Vec<f64>>> {
    check_batches(batches, h, max_degree)?;
    let count = batches.len();
    let d = h.dim();
    if count >= usize::BITS as usize - 1 || (1usize << count).saturating_mul(d * d) > SUBSET_TABLE_MAX_ENTRIES {
        let mut table = vec![vec![0.0; max_degree + 1]; max_degree + 1];
        for a in 0..=max_degree {
            for b in a..=max_degree - a {
                let w = u_stat_trace_product(batches, h, a, b)?;
                table[a][b] = w;
                table[b][a] = w;
            }
        }
        return Ok(table);
    }

    let full = (1usize << count) - 1;
    let popcount = |m: usize| m.count_ones() as usize;
    let mut masks: Vec<usize> = (0..=full).filter(|&m| popcount(m) <= max_degree).collect();
    masks.sort_by_key(|&m| (popcount(m), m));
    let mut sums: Vec<Option<CMatrix>> = vec![None; full + 1];
    sums[0] = Some(CMatrix::identity(d, d));
    for &m in &masks[1..] {
        let mut acc = CMatrix::zeros(d, d);
        for j in 0..count {
            if m & (1 << j) != 0 {
                let prev = sums[m ^ (1 << j)].as_ref().expect("smaller sets first");
                acc += prev * &batches[j].mean;
            }
        }
        sums[m] = Some(acc);
    }
    let with_h: Vec<Option<CMatrix>> = sums.into_iter().map(|m| m.map(|m| m * h.matrix())).collect();

    let partials: Vec<(usize, Vec<f64>)> = masks
        .par_iter()
        .map(|&left| {
            let a = popcount(left);
            let lh = with_h[left].as_ref().expect("computed");
            let mut acc = vec![CompensatedSum::new(); max_degree + 1 - a];
            let rest = full & !left;
            let mut right = rest;
            loop {
                let b = popcount(right);
                if a + b <= max_degree {
                    let rh = with_h[right].as_ref().expect("computed");
                    acc[b].add(trace_product(lh, rh).re);
                }
                if right == 0 {
                    break;
                }
                right = (right - 1) & rest;
            }
            (a, acc.iter().map(CompensatedSum::value).collect())
        })
        .collect();

    let mut totals = vec![vec![CompensatedSum::new(); max_degree + 1]; max_degree + 1];
    for (a, row) in &partials {
        for (b, &v) in row.iter().enumerate() {
            totals[*a][b].add(v);
        }
    }
    Ok(totals
        .iter()
        .enumerate()
        .map(|(a, row)| {
            row.iter()
                .enumerate()
                .map(|(b, s)| if a + b <= max_degree { s.value() / falling_factorial(count, a + b) } else { 0.0 })
                .collect()
        })
        .collect())
}

/// Taylor-bound estimate from batch means: the multinomial expansion of the
/// bound into `W_{a,b}` terms, each estimated by a U-statistic.
pub fn estimate_taylor_from_batches(batches: &[ShadowBatch], h: &Observable, n: usize) -> Result<f64> {
    check_batches(batches, h, n + 2)?;
    let coeffs = taylor_coefficients(n);
    let w = trace_product_table(batches, h, n + 2)?;
    let mut total = CompensatedSum::new();
    for a in 0..coeffs.len() {
        for b in 0..coeffs.len() {
            if coeffs[a][b] != 0.0 {
                total.add(2.0 * coeffs[a][b] * w[a][b]);
            }
        }
    }
    Ok(total.value())
}

/// Estimate the Taylor bound of order `n` from counts with at least `n + 2` batches.
pub fn estimate_taylor(counts: &ShadowCounts, h: &Observable, n: usize) -> Result<EstimateRecord> {
    if counts.num_batches() < n + 2 {
        return Err(Error::InsufficientBatches {
            needed: n + 2,
            available: counts.num_batches(),
        });
    }
    let batches = batch_means(counts)?;
    let value = estimate_taylor_from_batches(&batches, h, n)?;
    Ok(EstimateRecord {
        kind: EstimateKind::TaylorBound,
        indices: vec![],
        value,
        shots: counts.total_shadows,
        seed: counts.seed,
        order: n,
        solve: None,
    })
}

/// Exact `sum_{basis, outcome} P(outcome | basis) snapshot / 3^N`, the
/// expectation of a snapshot under the measurement channel.
pub fn expected_snapshot(rho: &DensityMatrix) -> Result<CMatrix> {
    let n = num_qubits_of(rho, DEFAULT_MAX_QUBITS)?;
    let table = born_table(rho.matrix(), n);
    let d = rho.dim();
    let weight = 1.0 / table.len() as f64;
    let mut acc = CMatrix::zeros(d, d);
    for (basis, probs) in table.iter().enumerate() {
        for (outcome, &p) in probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let key = ShadowKey {
                basis: basis as u32,
                outcome: outcome as u32,
            };
            acc += key_snapshot(key, n) * c(p * weight, 0.0);
        }
    }
    Ok(acc)
}

/// Born probability of one record given its basis, computed directly.
pub fn born_probability(rho: &DensityMatrix, key: ShadowKey) -> Result<f64> {
    let n = num_qubits_of(rho, DEFAULT_MAX_QUBITS)?;
    let mut m = rho.matrix().clone();
    for (b, bit) in key.bases(n).into_iter().zip(key.outcome_bits(n)) {
        let [m0, m1] = measure_leading_qubit(&m, b);
        m = if bit == 0 { m0 } else { m1 };
    }
    Ok(m[(0, 0)].re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{krylov_bound, moments_spectral, taylor_bound};
    use crate::qcore::{pauli_x, TransitionTable};

    fn max_abs(m: &CMatrix) -> f64 {
        m.iter().fold(0.0f64, |a, z| a.max(z.norm()))
    }

    #[test]
    fn snapshot_examples() {
        let z0 = snapshot_matrix(&[PauliBasis::Z], &[0]).unwrap();
        assert!(max_abs(&(z0 - CMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]))) < 1e-15);
        let x0 = snapshot_matrix(&[PauliBasis::X], &[0]).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(1.5, 0.0), c(1.5, 0.0), c(0.5, 0.0)]);
        assert!(max_abs(&(x0 - expected)) < 1e-15);
        for bases in [[PauliBasis::X, PauliBasis::Y], [PauliBasis::Z, PauliBasis::Y]] {
            for bits in [[0u8, 1u8], [1, 1]] {
                let s = snapshot_matrix(&bases, &bits).unwrap();
                assert!((s.trace() - c(1.0, 0.0)).norm() < 1e-14);
                assert!(crate::qcore::hermiticity_deviation(&s) < 1e-15);
            }
        }
        assert!(snapshot_matrix(&[PauliBasis::X], &[2]).is_err());
    }

    #[test]
    fn key_round_trip() {
        let bases = [PauliBasis::Y, PauliBasis::Z, PauliBasis::X];
        let key = ShadowKey::from_parts(&bases, &[1, 0, 1]).unwrap();
        assert_eq!(key.basis_string(3), "YZX");
        assert_eq!(key.outcome_string(3), "101");
        assert_eq!(key.bases(3), bases.to_vec());
    }

    #[test]
    fn born_table_matches_direct_probabilities() {
        let rho = crate::ensembles::random_fullrank(8, 3).unwrap();
        let table = born_table(rho.matrix(), 3);
        for basis in 0..27u32 {
            for outcome in 0..8u32 {
                let p = born_probability(&rho, ShadowKey { basis, outcome }).unwrap();
                assert!((table[basis as usize][outcome as usize] - p).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pure_zero_state_in_z_basis_always_reads_zero() {
        let rho = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let counts = sample_shadows(&rho, 3000, 1, 5).unwrap();
        let z = PauliBasis::Z.digit();
        for (key, _) in &counts.batches[0] {
            if key.basis == z {
                assert_eq!(key.outcome, 0);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_balanced() {
        let rho = crate::ensembles::random_fullrank(4, 1).unwrap();
        let a = sample_shadows(&rho, 10_001, 3, 17).unwrap();
        let b = sample_shadows(&rho, 10_001, 3, 17).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        let sizes: Vec<u64> = (0..3).map(|i| a.batch_size(i)).collect();
        assert_eq!(sizes, vec![3334, 3334, 3333]);
        assert_ne!(a, sample_shadows(&rho, 10_001, 3, 18).unwrap());
    }

    #[test]
    fn resampling_with_other_batch_count_reuses_the_stream() {
        let rho = crate::ensembles::random_fullrank(4, 2).unwrap();
        let merge = |c: &ShadowCounts| {
            let mut all = BTreeMap::new();
            for batch in &c.batches {
                for (k, v) in batch {
                    *all.entry(*k).or_insert(0u64) += v;
                }
            }
            all
        };
        let three = sample_shadows(&rho, 50_000, 3, 9).unwrap();
        let seven = sample_shadows(&rho, 50_000, 7, 9).unwrap();
        assert_eq!(merge(&three), merge(&seven));
    }

    #[test]
    fn sparse_and_dense_tallies_agree() {
        let rho = crate::ensembles::random_rank_r(128, 3, 8).unwrap();
        let merged = |c: &ShadowCounts| {
            let mut all = BTreeMap::new();
            for batch in &c.batches {
                for (k, v) in batch {
                    *all.entry(*k).or_insert(0u64) += v;
                }
            }
            all
        };
        // 6^7 * 15 cells exceed the dense limit; a single batch does not.
        assert!(6usize.pow(7) * 15 > DENSE_TALLY_MAX && 6usize.pow(7) <= DENSE_TALLY_MAX);
        let sparse = sample_shadows(&rho, 40_000, 15, 1).unwrap();
        let dense = sample_shadows(&rho, 40_000, 1, 1).unwrap();
        sparse.validate().unwrap();
        assert_eq!(merged(&sparse), merged(&dense));
    }

    #[test]
    fn sequential_sampler_agrees_in_distribution() {
        let rho = crate::ensembles::random_fullrank(4, 4).unwrap();
        let opts = SamplerOptions {
            table_max_qubits: 0,
            ..SamplerOptions::default()
        };
        let m = 200_000u64;
        let counts = sample_shadows_with(&rho, m, 1, 3, &opts).unwrap();
        // Pearson chi-square over the 36 (basis, outcome) cells.
        let mut chi2 = 0.0;
        for basis in 0..9u32 {
            for outcome in 0..4u32 {
                let key = ShadowKey { basis, outcome };
                let p = born_probability(&rho, key).unwrap() / 9.0;
                let observed = *counts.batches[0].get(&key).unwrap_or(&0) as f64;
                let expected = p * m as f64;
                chi2 += (observed - expected).powi(2) / expected;
            }
        }
        // 35 degrees of freedom; 99.99% quantile is about 75.
        assert!(chi2 < 75.0, "chi2 = {chi2}");
    }

    #[test]
    fn single_qubit_maximally_mixed_frequencies() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let m = 100_000u64;
        let counts = sample_shadows(&rho, m, 1, 23).unwrap();
        let mut chi2 = 0.0;
        for basis in 0..3u32 {
            for outcome in 0..2u32 {
                let observed = *counts.batches[0].get(&ShadowKey { basis, outcome }).unwrap_or(&0) as f64;
                let expected = m as f64 / 6.0;
                chi2 += (observed - expected).powi(2) / expected;
            }
        }
        // 5 degrees of freedom; 99.99% quantile is about 25.7.
        assert!(chi2 < 25.7, "chi2 = {chi2}");
    }

    #[test]
    fn batch_means_examples() {
        let key = ShadowKey::from_parts(&[PauliBasis::Z], &[0]).unwrap();
        let mut batch = BTreeMap::new();
        batch.insert(key, 5u64);
        let counts = ShadowCounts {
            num_qubits: 1,
            total_shadows: 5,
            seed: 0,
            batches: vec![batch.clone()],
        };
        let means = batch_means(&counts).unwrap();
        assert!(max_abs(&(&means[0].mean - snapshot_matrix(&[PauliBasis::Z], &[0]).unwrap())) < 1e-15);

        let empty = ShadowCounts {
            num_qubits: 1,
            total_shadows: 5,
            seed: 0,
            batches: vec![batch, BTreeMap::new()],
        };
        assert!(matches!(batch_means(&empty), Err(Error::EmptyBatch(1))));

        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let counts = sample_shadows(&rho, 1_000_000, 1, 99).unwrap();
        let mean = &batch_means(&counts).unwrap()[0];
        assert!((mean.mean.trace() - c(1.0, 0.0)).norm() < 1e-9);
        assert!(max_abs(&(&mean.mean - rho.matrix())) <= 0.02);
    }

    #[test]
    fn expected_snapshot_is_the_state() {
        for seed in 0..5 {
            let rho = crate::ensembles::random_fullrank(4, seed).unwrap();
            assert!(max_abs(&(expected_snapshot(&rho).unwrap() - rho.matrix())) < 1e-12);
        }
    }

    #[test]
    fn plug_in_u_statistics_reproduce_exact_moments() {
        let rho = crate::ensembles::random_fullrank(4, 7).unwrap();
        let h = crate::qcore::collective_z(2).unwrap();
        let batches = vec![ShadowBatch::exact(&rho); 5];
        let est = u_stat_moments(&batches, &h, 3).unwrap();
        let exact = moments_spectral(&TransitionTable::from_state(&rho, &h).unwrap(), 3);
        for k in 0..=3 {
            assert!((est[k] - exact.get(k)).abs() <= 1e-12 * exact.get(k).abs().max(1e-3));
        }
        assert!(matches!(
            u_stat_moments(&batches, &h, 4),
            Err(Error::InsufficientBatches { needed: 6, available: 5 })
        ));
    }

    #[test]
    fn smallest_u_statistic_is_pair_average() {
        let rho1 = crate::ensembles::random_fullrank(2, 1).unwrap();
        let rho2 = crate::ensembles::random_fullrank(2, 2).unwrap();
        let h = Observable::new(pauli_x()).unwrap();
        let batches = vec![ShadowBatch::exact(&rho1), ShadowBatch::exact(&rho2)];
        let c1 = i_commutator(rho1.matrix(), h.matrix());
        let c2 = i_commutator(rho2.matrix(), h.matrix());
        let expected = 0.5 * (trace_product(&c1, &c2).re + trace_product(&c2, &c1).re);
        assert!((u_stat_tk(&batches, &h, 0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn plug_in_krylov_and_taylor_estimates() {
        let rho = crate::ensembles::random_rank_r(8, 2, 3).unwrap();
        let h = crate::qcore::collective_z(3).unwrap();
        let table = TransitionTable::from_state(&rho, &h).unwrap();
        for n in 1..=3 {
            let batches = vec![ShadowBatch::exact(&rho); 2 * n + 1];
            let (value, strategy, _) = estimate_krylov_from_batches(&batches, &h, n).unwrap();
            let exact = krylov_bound(&moments_spectral(&table, 2 * n - 1), n).unwrap().value;
            assert!((value - exact).abs() <= 1e-10 * exact, "n={n}: {value} vs {exact} ({strategy})");
        }
        for n in 0..=5 {
            let batches = vec![ShadowBatch::exact(&rho); n + 2];
            let value = estimate_taylor_from_batches(&batches, &h, n).unwrap();
            let exact = taylor_bound(&table, n).value;
            assert!((value - exact).abs() <= 1e-10 * exact.abs().max(1.0), "n={n}: {value} vs {exact}");
        }
    }

    #[test]
    fn plug_in_taylor_on_qutrit() {
        let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2]).unwrap();
        let mut hm = CMatrix::zeros(3, 3);
        hm[(0, 1)] = c(1.0, 0.0);
        hm[(1, 0)] = c(1.0, 0.0);
        let h = Observable::new(hm).unwrap();
        let batches = vec![ShadowBatch::exact(&rho); 3];
        assert!((estimate_taylor_from_batches(&batches, &h, 1).unwrap() - 0.192).abs() < 1e-10);
    }

    #[test]
    fn u_statistics_ignore_batch_order() {
        let rho = crate::ensembles::random_fullrank(4, 12).unwrap();
        let h = crate::qcore::collective_z(2).unwrap();
        let counts = sample_shadows(&rho, 2000, 6, 4).unwrap();
        let batches = batch_means(&counts).unwrap();
        let mut shuffled = batches.clone();
        shuffled.reverse();
        shuffled.swap(0, 3);
        let a = u_stat_moments(&batches, &h, 3).unwrap();
        let b = u_stat_moments(&shuffled, &h, 3).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-6), "{x} vs {y}");
        }
        let ta = u_stat_trace_product(&batches, &h, 2, 3).unwrap();
        let tb = u_stat_trace_product(&shuffled, &h, 2, 3).unwrap();
        assert!((ta - tb).abs() <= 1e-12 * ta.abs().max(1e-6));
    }

    #[test]
    fn batch_means_have_unit_trace() {
        let rho = crate::ensembles::random_fullrank(8, 2).unwrap();
        let counts = sample_shadows(&rho, 999, 4, 1).unwrap();
        for b in batch_means(&counts).unwrap() {
            assert!((b.mean.trace() - c(1.0, 0.0)).norm() < 1e-9);
            assert!(crate::qcore::hermiticity_deviation(&b.mean) < 1e-12);
        }
    }

    #[test]
    fn subset_table_matches_tuple_sums() {
        let rho = crate::ensembles::random_fullrank(4, 6).unwrap();
        let h = crate::qcore::collective_z(2).unwrap();
        let counts = sample_shadows(&rho, 700, 6, 2).unwrap();
        let batches = batch_means(&counts).unwrap();
        let table = trace_product_table(&batches, &h, 5).unwrap();
        for a in 0..=5 {
            for b in 0..=5 - a {
                let direct = u_stat_trace_product(&batches, &h, a, b).unwrap();
                assert!((table[a][b] - direct).abs() <= 1e-12 * direct.abs().max(1.0), "({a},{b})");
            }
        }
    }

    #[test]
    fn subset_moments_match_tuple_walk() {
        let rho = crate::ensembles::random_fullrank(4, 16).unwrap();
        let h = crate::qcore::collective_z(2).unwrap();
        let counts = sample_shadows(&rho, 900, 7, 5).unwrap();
        let batches = batch_means(&counts).unwrap();
        let a = u_stat_moments(&batches, &h, 5).unwrap();
        let b = u_stat_moments_by_tuples(&batches, &h, 5).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1e-6), "{x} vs {y}");
        }
    }

    #[test]
    fn taylor_coefficients_order_zero() {
        let c0 = taylor_coefficients(0);
        assert_eq!(c0[2][0], 1.0);
        assert_eq!(c0[1][1], -2.0);
        assert_eq!(c0[0][2], 1.0);
        let total: f64 = c0.iter().flatten().map(|v| v.abs()).sum();
        assert_eq!(total, 4.0);
    }

    #[test]
    fn indefinite_gram_uses_truncated_solve() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        let (value, strategy) = solve_gram(&a, &[1.0, 0.0], 2).unwrap();
        assert!(matches!(strategy, SolveStrategy::TruncatedEigen { dropped: 0 }));
        // A^{-1} = [[-1, 2], [2, -1]] / 3
        assert!((value + 1.0 / 3.0).abs() < 1e-14);
        assert!(matches!(solve_gram(&[vec![0.0]], &[1.0], 1), Err(Error::SingularEstimate { order: 1 })));
    }

    #[test]
    fn estimators_check_batch_counts() {
        let rho = crate::ensembles::random_fullrank(4, 0).unwrap();
        let h = crate::qcore::collective_z(2).unwrap();
        let counts = sample_shadows(&rho, 100, 3, 0).unwrap();
        assert!(matches!(estimate_krylov(&counts, &h, 2), Err(Error::InsufficientBatches { .. })));
        assert!(matches!(estimate_taylor(&counts, &h, 2), Err(Error::InsufficientBatches { .. })));
        let rec = estimate_krylov(&counts, &h, 1).unwrap();
        assert_eq!(rec.shots, 100);
        assert_eq!(rec.order, 1);
    }
}
