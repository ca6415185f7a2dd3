//! Krylov and Taylor lower bounds on the quantum Fisher information.
//!
//! Every quantity here is a functional of the spectral measure that puts
//! mass `m = |<k|H|l>|^2 (p_k - p_l)^2` at the node `s = (p_k + p_l) / 2`
//! for each eigen-pair. `R_rho` acts on the `(k, l)` component of an
//! operator as multiplication by `s`, so
//!
//! * the moments are `T_k = sum m s^k`,
//! * the QFI is `F_Q = sum m / s`,
//! * the Krylov bound `B_n = b^T A^{-1} b` (with `A_ij = T_{i+j-1}`,
//!   `b_i = T_{i-1}`) is the `n`-point Gauss quadrature of `1/s`,
//! * the Taylor bound truncates `1/(2s) = sum_l (1 - 2s)^l` after `n` terms.
//!
//! Two evaluation routes are provided for the exact Krylov bounds: the Gram
//! solve on moments ([`krylov_bound`]), which is what the shadow estimator
//! uses, and a Lanczos recurrence on the spectral measure
//! ([`krylov_ladder`]), which stays accurate up to the termination order.
//! Literal operator-space oracles ([`moments_operator`],
//! [`taylor_bound_tensor_oracle`]) cross-check the closed forms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{n_star, qfi_exact, NStarReport, DEFAULT_GROUP_TOL};
use crate::numeric::{cholesky_solve, CompensatedSum};
use crate::qcore::{
    apply_r_matrix, c, i_commutator, trace_product, CMatrix, DensityMatrix, Observable, Spectrum,
    TransitionTable, C64,
};

/// Relative Gram pivot threshold; a smaller Cholesky pivot means the order
/// exceeds the termination order.
pub const PD_TOL: f64 = 1e-13;
/// QFI values at or below this make the relative gap undefined.
pub const GAP_TOL: f64 = 1e-12;
/// Largest dimension accepted by the doubled-space Taylor oracle.
pub const TENSOR_ORACLE_MAX_DIM: usize = 16;

/// Moments `T_0, ..., T_{k_max}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    values: Vec<f64>,
}

impl MomentVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k_max(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Gram matrix `A_ij = T_{i+j-1}` and vector `b_i = T_{i-1}` (1-based) of order `n`.
    pub fn gram_system(&self, n: usize) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if n == 0 || 2 * n - 1 > self.k_max() {
            return Err(Error::InvalidArgument(format!(
                "order {n} needs moments up to T_{}, have T_{}",
                2 * n.max(1) - 1,
                self.k_max()
            )));
        }
        let a = (0..n)
            .map(|i| (0..n).map(|j| self.values[i + j + 1]).collect())
            .collect();
        let b = (0..n).map(|i| self.values[i]).collect();
        Ok((a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Krylov,
    Taylor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub order: usize,
    pub value: f64,
    pub kind: BoundKind,
    /// Relative gap to the QFI, when known.
    pub gap: Option<f64>,
    /// False for even-order Taylor truncations, which may overshoot the QFI.
    pub guaranteed_lower_bound: bool,
}

impl BoundValue {
    fn krylov(order: usize, value: f64) -> Self {
        Self {
            order,
            value,
            kind: BoundKind::Krylov,
            gap: None,
            guaranteed_lower_bound: true,
        }
    }

    /// Attach the relative gap to `fq` (skipped when `fq` is too small).
    pub fn with_gap(mut self, fq: f64) -> Self {
        self.gap = relative_gap(self.value, fq).ok();
        self
    }
}

/// `T_k = sum_rows w (p_k - p_l)^2 ((p_k + p_l) / 2)^k` for `k = 0..=k_max`.
pub fn moments_spectral(table: &TransitionTable, k_max: usize) -> MomentVector {
    let mut sums = vec![CompensatedSum::new(); k_max + 1];
    for r in table.rows() {
        let m = r.commutator_weight();
        if m == 0.0 {
            continue;
        }
        let s = 0.5 * r.pair_sum();
        let mut term = m;
        for acc in sums.iter_mut() {
            acc.add(term);
            term *= s;
        }
    }
    MomentVector::new(sums.iter().map(CompensatedSum::value).collect())
}

/// `T_k = tr(C R_rho^k(C))` with `C = i[rho, H]`, by repeated application of `R_rho`.
pub fn moments_operator(rho: &DensityMatrix, h: &Observable, k_max: usize) -> Result<MomentVector> {
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: h.dim(),
        });
    }
    let comm = i_commutator(rho.matrix(), h.matrix());
    let mut v = comm.clone();
    let mut values = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        if k > 0 {
            v = apply_r_matrix(rho.matrix(), &v);
        }
        values.push(trace_product(&comm, &v).re);
    }
    Ok(MomentVector::new(values))
}

/// `B_n = b^T A^{-1} b` by Cholesky on the moment Gram matrix.
///
/// Returns zero when `T_0 = 0` (`rho` commutes with `H`), and
/// `OrderExceedsNStar` when a pivot drops below `PD_TOL * T_1`.
pub fn krylov_bound(moments: &MomentVector, n: usize) -> Result<BoundValue> {
    let (a, b) = moments.gram_system(n)?;
    if moments.get(0) <= 0.0 {
        return Ok(BoundValue::krylov(n, 0.0));
    }
    let coeffs = cholesky_solve(&a, &b, PD_TOL * moments.get(1))
        .map_err(|pivot| Error::OrderExceedsNStar { order: n, pivot })?;
    let value = b
        .iter()
        .zip(&coeffs)
        .map(|(bi, xi)| bi * xi)
        .collect::<CompensatedSum>()
        .value();
    Ok(BoundValue::krylov(n, value))
}

/// Exact Krylov bounds `B_1, B_2, ...` of one `(rho, H)` pair together with
/// the termination order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KrylovLadder {
    pub qfi: f64,
    pub n_star: usize,
    /// `B_1 ..= B_m` with `m = min(n*, requested order)`.
    pub values: Vec<f64>,
}

impl KrylovLadder {
    /// `B_n`, saturating at `B_{n*} = F_Q` because `K_n = K_{n*}` beyond `n*`.
    ///
    /// Panics if `n` exceeds the computed range while still below `n*`.
    pub fn bound(&self, n: usize) -> f64 {
        assert!(n >= 1, "Krylov orders start at 1");
        if self.n_star == 0 {
            return 0.0;
        }
        if n >= self.n_star {
            return *self.values.get(self.n_star - 1).unwrap_or(&self.qfi);
        }
        self.values[n - 1]
    }

    pub fn chain(&self) -> Vec<BoundValue> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| BoundValue::krylov(i + 1, v).with_gap(self.qfi))
            .collect()
    }
}

/// Nodes `s`, masses `m` of the spectral measure, one entry per unordered pair.
fn spectral_measure(table: &TransitionTable) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = Vec::new();
    let mut masses = Vec::new();
    for r in table.rows() {
        if r.k < r.l {
            let m = 2.0 * r.commutator_weight();
            if m > 0.0 {
                nodes.push(0.5 * r.pair_sum());
                masses.push(m);
            }
        }
    }
    (nodes, masses)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Krylov bounds `B_1, ..., B_{min(n*, max_order)}` by Lanczos on the spectral measure.
///
/// With `u = sqrt(s m)` as the starting vector of `diag(s)` and
/// `g = sqrt(m / s)`, the orthonormal Lanczos vectors `q_i` give
/// `B_n = sum_{i<n} (q_i . g)^2` and `F_Q = |g|^2`. Full
/// reorthogonalization keeps the `q_i` orthonormal through `n*`.
pub fn krylov_ladder(table: &TransitionTable, spec: &Spectrum, max_order: usize) -> KrylovLadder {
    let report = n_star(table, spec, DEFAULT_GROUP_TOL);
    krylov_ladder_with(table, &report, max_order)
}

pub fn krylov_ladder_with(table: &TransitionTable, report: &NStarReport, max_order: usize) -> KrylovLadder {
    let qfi = qfi_exact(table);
    let (nodes, masses) = spectral_measure(table);
    let steps = report.n_star.min(max_order).min(nodes.len());
    let mut values = Vec::with_capacity(steps);
    if steps == 0 {
        return KrylovLadder {
            qfi,
            n_star: report.n_star,
            values,
        };
    }

    let g: Vec<f64> = nodes.iter().zip(&masses).map(|(s, m)| (m / s).sqrt()).collect();
    let mut q: Vec<f64> = nodes.iter().zip(&masses).map(|(s, m)| (s * m).sqrt()).collect();
    let norm = dot(&q, &q).sqrt();
    q.iter_mut().for_each(|x| *x /= norm);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut captured = CompensatedSum::new();
    for step in 1..=steps {
        let proj = dot(&q, &g);
        captured.add(proj * proj);
        values.push(captured.value());
        basis.push(q.clone());
        if step == steps {
            break;
        }
        let mut w: Vec<f64> = q.iter().zip(&nodes).map(|(x, s)| x * s).collect();
        for _ in 0..2 {
            for b in &basis {
                let h = dot(b, &w);
                w.iter_mut().zip(b).for_each(|(wi, bi)| *wi -= h * bi);
            }
        }
        let beta = dot(&w, &w).sqrt();
        if !(beta > f64::MIN_POSITIVE) {
            break;
        }
        q = w.into_iter().map(|x| x / beta).collect();
    }

    KrylovLadder {
        qfi,
        n_star: report.n_star,
        values,
    }
}

/// The full chain `B_1 < ... < B_{n*} = F_Q`.
pub fn krylov_chain(table: &TransitionTable, spec: &Spectrum) -> Vec<BoundValue> {
    krylov_ladder(table, spec, usize::MAX).chain()
}

/// The optimal `L_n = sum_i c_i R^{i-1}(i[rho, H])` in the `n`-th Krylov
/// subspace, with `c = A^{-1} b`, in the computational basis.
pub fn build_l_n(table: &TransitionTable, spec: &Spectrum, n: usize) -> Result<CMatrix> {
    let d = spec.dim();
    let report = n_star(table, spec, DEFAULT_GROUP_TOL);
    if report.n_star == 0 {
        return Ok(CMatrix::zeros(d, d));
    }
    if n == 0 || n > report.n_star {
        return Err(Error::OrderExceedsNStar { order: n, pivot: 0.0 });
    }
    let moments = moments_spectral(table, 2 * n - 1);
    let (a, b) = moments.gram_system(n)?;
    let coeffs = cholesky_solve(&a, &b, PD_TOL * moments.get(1))
        .map_err(|pivot| Error::OrderExceedsNStar { order: n, pivot })?;
    let mut l_eig = CMatrix::zeros(d, d);
    for r in table.rows() {
        let s = 0.5 * r.pair_sum();
        let poly = coeffs.iter().rev().fold(0.0, |acc, ci| acc * s + ci);
        l_eig[(r.k, r.l)] = C64::new(0.0, r.pair_diff() * poly) * r.element;
    }
    Ok(spec.from_eigenbasis(&l_eig))
}

/// `B_n^Tay = 2 sum_rows w (p_k - p_l)^2 sum_{j=0}^{n} (1 - p_k - p_l)^j`.
pub fn taylor_bound(table: &TransitionTable, n: usize) -> BoundValue {
    let value = table
        .rows()
        .iter()
        .map(|r| {
            let x = 1.0 - r.pair_sum();
            let partial = (0..n).fold(1.0, |acc, _| 1.0 + x * acc);
            2.0 * r.commutator_weight() * partial
        })
        .collect::<CompensatedSum>()
        .value();
    BoundValue {
        order: n,
        value,
        kind: BoundKind::Taylor,
        gap: None,
        guaranteed_lower_bound: n % 2 == 1,
    }
}

/// Swap operator on `C^d (x) C^d`.
pub fn swap_operator(d: usize) -> CMatrix {
    let mut s = CMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for b in 0..d {
            s[(b * d + a, a * d + b)] = c(1.0, 0.0);
        }
    }
    s
}

/// The Taylor bound evaluated literally on the doubled space:
/// `2 tr( sum_{j<=n} (rho(x)1 - 1(x)rho)^2 (1(x)1 - rho(x)1 - 1(x)rho)^j S (H(x)H) )`.
pub fn taylor_bound_tensor_oracle(rho: &DensityMatrix, h: &Observable, n: usize) -> Result<f64> {
    let d = rho.dim();
    if d > TENSOR_ORACLE_MAX_DIM {
        return Err(Error::DimensionOverflow {
            dim: d,
            max: TENSOR_ORACLE_MAX_DIM,
        });
    }
    if h.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: h.dim(),
        });
    }
    let id = CMatrix::identity(d, d);
    let id2 = CMatrix::identity(d * d, d * d);
    let left = rho.matrix().kronecker(&id);
    let right = id.kronecker(rho.matrix());
    let diff = &left - &right;
    let diff2 = &diff * &diff;
    let shift = &id2 - &left - &right;
    let target = swap_operator(d) * h.matrix().kronecker(h.matrix());

    let mut term = diff2.clone();
    let mut total = diff2;
    for _ in 0..n {
        term = &term * &shift;
        total += &term;
    }
    Ok(2.0 * trace_product(&total, &target).re)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaReport {
    pub kappa: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub full_rank: bool,
}

/// Condition number of `R_rho` on the operator space: `p_max / p_min` for
/// full rank, `2 p_max / p_min` otherwise.
pub fn kappa(spec: &Spectrum) -> KappaReport {
    let p_max = spec.p_max();
    let p_min = spec.p_min();
    let full_rank = spec.is_full_rank();
    let ratio = p_max / p_min;
    KappaReport {
        kappa: if full_rank { ratio } else { 2.0 * ratio },
        p_max,
        p_min,
        full_rank,
    }
}

/// `4 [(sqrt(kappa) - 1) / (sqrt(kappa) + 1)]^{2n}`. Values above one are returned as-is.
pub fn theorem1_envelope(kappa: f64, n: usize) -> f64 {
    let r = kappa.sqrt();
    let q = (r - 1.0) / (r + 1.0);
    4.0 * q.powi(2 * n as i32)
}

/// `|bound - fq| / fq`.
pub fn relative_gap(bound: f64, fq: f64) -> Result<f64> {
    if !(fq > GAP_TOL) {
        return Err(Error::ZeroQfi(fq));
    }
    Ok((bound - fq).abs() / fq)
}

/// Everything the `bounds` command prints for one state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsReport {
    #[serde(rename = "F_Q")]
    pub qfi: f64,
    pub n_star: NStarReport,
    pub krylov: Vec<BoundValue>,
    pub taylor: Vec<BoundValue>,
    pub kappa: KappaReport,
    pub envelopes: Vec<f64>,
}

/// Krylov bounds up to `min(n*, max_order)`, Taylor bounds of orders
/// `0..=taylor_max`, and the exponential envelope per Krylov order.
pub fn bounds_report(rho: &DensityMatrix, h: &Observable, max_order: usize, taylor_max: usize) -> Result<BoundsReport> {
    let spec = rho.spectrum();
    let table = TransitionTable::from_state(rho, h)?;
    let report = n_star(&table, spec, DEFAULT_GROUP_TOL);
    let ladder = krylov_ladder_with(&table, &report, max_order);
    let qfi = ladder.qfi;
    let kappa = kappa(spec);
    let krylov = ladder.chain();
    let envelopes = krylov.iter().map(|b| theorem1_envelope(kappa.kappa, b.order)).collect();
    let taylor = (0..=taylor_max)
        .map(|n| taylor_bound(&table, n).with_gap(qfi))
        .collect();
    Ok(BoundsReport {
        qfi,
        n_star: report,
        krylov,
        taylor,
        kappa,
        envelopes,
    })
}

/// Gram matrix as an nalgebra matrix, for eigenvalue checks.
pub fn gram_matrix(moments: &MomentVector, n: usize) -> Result<DMatrix<f64>> {
    let (a, _) = moments.gram_system(n)?;
    Ok(DMatrix::from_fn(n, n, |i, j| a[i][j]))
}
