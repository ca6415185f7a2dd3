//! Dense Hermitian linear algebra, state and observable types, and the
//! weighted operator geometry on which every bound is built.
//!
//! A [`DensityMatrix`] is validated on construction and caches its
//! eigendecomposition ([`Spectrum`]). A [`TransitionTable`] lists, for every
//! ordered pair of eigenvectors `(k, l)` with `p_k + p_l` above the pair
//! tolerance, the eigenvalues and the matrix element `<k|H|l>` of the
//! observable. All spectral functionals in [`crate::exact`] and
//! [`crate::bounds`] are sums over its rows.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Entry-wise Hermiticity tolerance for states and observables.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Allowed deviation of `tr(rho)` from one.
pub const TRACE_TOL: f64 = 1e-10;
/// Most negative eigenvalue accepted (and clamped to zero) for a state.
pub const PSD_TOL: f64 = 1e-10;
/// Default cap on the qubit count of generated operators.
pub const DEFAULT_MAX_QUBITS: usize = 12;

const EIGEN_MAX_ITERATIONS: usize = 10_000;

/// Default rank tolerance: eigenvalues at or below `1e-10 * dim` count as zero.
pub fn default_rank_tol(dim: usize) -> f64 {
    1e-10 * dim as f64
}

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Largest entry-wise deviation `max |A_ij - conj(A_ji)|`.
pub fn hermiticity_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// `(m + m^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * c(0.5, 0.0)
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `tr(a b)` without forming the product.
pub fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `i [a, b]`.
pub fn i_commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let ab = a * b;
    let ba = b * a;
    (ab - ba) * c(0.0, 1.0)
}

/// Eigendecomposition of a density matrix with eigenvalues sorted in
/// descending order.
#[derive(Debug, Clone)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    eigenvectors: CMatrix,
    rank: usize,
    rank_tol: f64,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues in descending order; those at or below the rank tolerance are exactly zero.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Columns are the eigenvectors `|k>`, matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.dim()
    }

    pub fn p_max(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Smallest nonzero eigenvalue.
    pub fn p_min(&self) -> f64 {
        self.eigenvalues[self.rank - 1]
    }

    /// `U diag(p) U^H`.
    pub fn reconstruct(&self) -> CMatrix {
        let d = self.dim();
        let mut scaled = self.eigenvectors.clone();
        for k in 0..d {
            let p = self.eigenvalues[k];
            for i in 0..d {
                scaled[(i, k)] *= p;
            }
        }
        scaled * self.eigenvectors.adjoint()
    }

    /// `U^H m U`: the matrix elements of `m` in the eigenbasis.
    pub fn to_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        self.eigenvectors.adjoint() * m * &self.eigenvectors
    }

    /// `U m U^H`: back to the computational basis.
    pub fn from_eigenbasis(&self, m: &CMatrix) -> CMatrix {
        &self.eigenvectors * m * self.eigenvectors.adjoint()
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    matrix: CMatrix,
    spectrum: OnceLock<Spectrum>,
}

impl DensityMatrix {
    /// Validate `matrix` as a state. The eigendecomposition computed for the
    /// positivity check is cached.
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let d = check_square(&matrix)?;
        if d == 0 {
            return Err(Error::InvalidArgument("empty matrix".into()));
        }
        let deviation = hermiticity_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let trace = matrix.trace().re;
        if (trace - 1.0).abs() > TRACE_TOL {
            return Err(Error::NotUnitTrace(trace));
        }
        let rho = DensityMatrix {
            matrix,
            spectrum: OnceLock::new(),
        };
        let spectrum = eigh(&rho, default_rank_tol(d))?;
        let _ = rho.spectrum.set(spectrum);
        Ok(rho)
    }

    /// Build from a matrix that is Hermitian up to roundoff: symmetrizes and
    /// rescales to unit trace before validating.
    pub fn from_unnormalized(matrix: &CMatrix) -> Result<Self> {
        check_square(matrix)?;
        let h = hermitian_part(matrix);
        let t = h.trace().re;
        if !(t > 0.0) {
            return Err(Error::NotUnitTrace(t));
        }
        Self::new(h * c(1.0 / t, 0.0))
    }

    /// `|psi><psi|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2 > 0.0) {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let d = psi.len();
        let m = CMatrix::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / norm2);
        Self::from_unnormalized(&m)
    }

    /// `diag(p)`.
    pub fn diagonal(p: &[f64]) -> Result<Self> {
        let d = p.len();
        Self::new(CMatrix::from_fn(d, d, |i, j| {
            if i == j {
                c(p[i], 0.0)
            } else {
                c(0.0, 0.0)
            }
        }))
    }

    /// `I / d`.
    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        Self::diagonal(&vec![1.0 / dim as f64; dim])
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Spectrum at the default rank tolerance (cached).
    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum.get_or_init(|| {
            eigh(self, default_rank_tol(self.dim())).expect("validated density matrix decomposes")
        })
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        trace_product(&self.matrix, &self.matrix).re
    }
}

/// Hermitian operator, typically the generator `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let deviation = hermiticity_deviation(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        Ok(Observable { matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `max |H_ij|`.
    pub fn max_abs_entry(&self) -> f64 {
        self.matrix.iter().fold(0.0f64, |m, z| m.max(z.norm()))
    }

    /// `a H + b I`.
    pub fn affine(&self, a: f64, b: f64) -> Observable {
        let d = self.dim();
        Observable {
            matrix: &self.matrix * c(a, 0.0) + CMatrix::identity(d, d) * c(b, 0.0),
        }
    }
}

/// Pauli matrices.
pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// `2^num_qubits`, or `DimensionOverflow` above `max_qubits`.
pub fn qubit_dim(num_qubits: usize, max_qubits: usize) -> Result<usize> {
    if num_qubits > max_qubits || num_qubits >= usize::BITS as usize {
        return Err(Error::DimensionOverflow {
            dim: 1usize.checked_shl(num_qubits as u32).unwrap_or(usize::MAX),
            max: 1usize << max_qubits.min(usize::BITS as usize - 1),
        });
    }
    Ok(1 << num_qubits)
}

/// Collective spin `H = 1/2 sum_i Z_i`, diagonal with entries `(N - 2 popcount(j)) / 2`.
pub fn collective_z(num_qubits: usize) -> Result<Observable> {
    collective_z_capped(num_qubits, DEFAULT_MAX_QUBITS)
}

pub fn collective_z_capped(num_qubits: usize, max_qubits: usize) -> Result<Observable> {
    if num_qubits == 0 {
        return Err(Error::InvalidArgument("need at least one qubit".into()));
    }
    let d = qubit_dim(num_qubits, max_qubits)?;
    let mut m = CMatrix::zeros(d, d);
    for j in 0..d {
        let ones = j.count_ones() as f64;
        m[(j, j)] = c(0.5 * (num_qubits as f64 - 2.0 * ones), 0.0);
    }
    Ok(Observable { matrix: m })
}

/// Eigendecomposition of a state.
///
/// Eigenvalues at or below `rank_tol` (including roundoff negatives down to
/// `-PSD_TOL`) are set to zero and the rest renormalized to unit sum. Each
/// eigenvector is rotated so its largest-magnitude component is real and
/// positive.
pub fn eigh(rho: &DensityMatrix, rank_tol: f64) -> Result<Spectrum> {
    let m = rho.matrix();
    let d = m.nrows();
    let deviation = hermiticity_deviation(m);
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let eig = SymmetricEigen::try_new(m.clone(), f64::EPSILON, EIGEN_MAX_ITERATIONS)
        .ok_or(Error::DecompositionFailure)?;

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let min_eig = eig.eigenvalues[order[d - 1]];
    if min_eig < -PSD_TOL {
        return Err(Error::NotPsd(min_eig));
    }

    let mut eigenvalues: Vec<f64> = order
        .iter()
        .map(|&k| {
            let p = eig.eigenvalues[k];
            if p <= rank_tol {
                0.0
            } else {
                p
            }
        })
        .collect();
    let rank = eigenvalues.iter().filter(|&&p| p > 0.0).count();
    if rank == 0 {
        return Err(Error::NotUnitTrace(0.0));
    }
    let total: f64 = eigenvalues.iter().sum();
    for p in &mut eigenvalues {
        *p /= total;
    }

    let mut vectors = CMatrix::zeros(d, d);
    for (col, &k) in order.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        let mut best = 0;
        for i in 1..d {
            if v[i].norm() > v[best].norm() {
                best = i;
            }
        }
        let phase = v[best].conj() / v[best].norm();
        for i in 0..d {
            vectors[(i, col)] = v[i] * phase;
        }
    }

    Ok(Spectrum {
        eigenvalues,
        eigenvectors: vectors,
        rank,
        rank_tol,
    })
}

/// One ordered eigen-pair `(k, l)` of a [`TransitionTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRow {
    pub k: usize,
    pub l: usize,
    pub p_k: f64,
    pub p_l: f64,
    /// `<k|H|l>`.
    #[serde(skip)]
    pub element: C64,
    /// `|<k|H|l>|^2`.
    pub weight: f64,
}

impl TransitionRow {
    pub fn pair_sum(&self) -> f64 {
        self.p_k + self.p_l
    }

    pub fn pair_diff(&self) -> f64 {
        self.p_k - self.p_l
    }

    /// `w (p_k - p_l)^2`, the squared modulus of `i[rho, H]` on this pair.
    pub fn commutator_weight(&self) -> f64 {
        let delta = self.pair_diff();
        self.weight * delta * delta
    }
}

/// Per-eigenpair data `(p_k, p_l, |<k|H|l>|^2)` of a state and an observable.
#[derive(Debug, Clone)]
pub struct TransitionTable {
    dim: usize,
    pair_tol: f64,
    h_max_abs: f64,
    rows: Vec<TransitionRow>,
}

impl TransitionTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[TransitionRow] {
        &self.rows
    }

    pub fn pair_tol(&self) -> f64 {
        self.pair_tol
    }

    /// `max |H_ij|` of the observable the table was built from.
    pub fn h_max_abs(&self) -> f64 {
        self.h_max_abs
    }

    /// Convenience: decompose `rho` and tabulate against `h` with default tolerances.
    pub fn from_state(rho: &DensityMatrix, h: &Observable) -> Result<Self> {
        let spec = rho.spectrum();
        build_transition_table(spec, h, spec.rank_tol())
    }
}

/// Tabulate `|<k|H|l>|^2` in the eigenbasis for every ordered pair with `p_k + p_l > pair_tol`.
pub fn build_transition_table(spec: &Spectrum, h: &Observable, pair_tol: f64) -> Result<TransitionTable> {
    let d = spec.dim();
    check_dims(d, h.dim())?;
    let h_eig = spec.to_eigenbasis(h.matrix());
    let p = spec.eigenvalues();
    let mut rows = Vec::with_capacity(d * d);
    for k in 0..d {
        for l in 0..d {
            if p[k] + p[l] > pair_tol {
                let element = h_eig[(k, l)];
                rows.push(TransitionRow {
                    k,
                    l,
                    p_k: p[k],
                    p_l: p[l],
                    element,
                    weight: element.norm_sqr(),
                });
            }
        }
    }
    Ok(TransitionTable {
        dim: d,
        pair_tol,
        h_max_abs: h.max_abs_entry(),
        rows,
    })
}

/// `<X, Y>_rho = tr[rho (XY + YX) / 2]`.
pub fn weighted_inner(x: &CMatrix, y: &CMatrix, rho: &DensityMatrix) -> Result<f64> {
    let d = rho.dim();
    check_dims(d, x.nrows())?;
    check_dims(d, y.nrows())?;
    let rx = rho.matrix() * x;
    let ry = rho.matrix() * y;
    Ok(0.5 * (trace_product(&rx, y).re + trace_product(&ry, x).re))
}

/// `R_rho(X) = (rho X + X rho) / 2`.
pub fn apply_r(rho: &DensityMatrix, x: &CMatrix) -> Result<CMatrix> {
    check_dims(rho.dim(), x.nrows())?;
    Ok(apply_r_matrix(rho.matrix(), x))
}

/// `R` for an arbitrary Hermitian `m` in place of a state (noisy batch means).
/// The result is exactly Hermitian when `x` is.
pub fn apply_r_matrix(m: &CMatrix, x: &CMatrix) -> CMatrix {
    let mx = m * x;
    let xm = x * m;
    (mx + xm) * c(0.5, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_sigma_x() -> Observable {
        Observable::new(pauli_x() * c(0.5, 0.0)).unwrap()
    }

    #[test]
    fn eigh_of_diagonal_inputs() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let s = rho.spectrum();
        assert_eq!(s.eigenvalues(), &[0.5, 0.5]);
        assert_eq!(s.rank(), 2);

        let rho = DensityMatrix::diagonal(&[0.25, 0.75]).unwrap();
        let s = rho.spectrum();
        assert!((s.eigenvalues()[0] - 0.75).abs() < 1e-15);
        assert!((s.eigenvalues()[1] - 0.25).abs() < 1e-15);
        assert!((s.p_max() / s.p_min() - 3.0).abs() < 1e-12);

        let rho = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let s = rho.spectrum();
        assert_eq!(s.eigenvalues(), &[1.0, 0.0]);
        assert_eq!(s.rank(), 1);
        assert!(!s.is_full_rank());
    }

    #[test]
    fn eigenvector_phase_convention() {
        let rho = DensityMatrix::from_unnormalized(&CMatrix::from_row_slice(
            2,
            2,
            &[c(0.6, 0.0), c(0.1, 0.2), c(0.1, -0.2), c(0.4, 0.0)],
        ))
        .unwrap();
        let s = rho.spectrum();
        for k in 0..2 {
            let v = s.eigenvectors().column(k);
            let best = if v[0].norm() >= v[1].norm() { v[0] } else { v[1] };
            assert!(best.im.abs() < 1e-15 && best.re > 0.0);
        }
        let err = (s.reconstruct() - rho.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        assert!(err < 1e-12);
    }

    #[test]
    fn rejects_invalid_states() {
        let not_herm = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.2, 0.0), c(0.5, 0.0)]);
        assert!(matches!(DensityMatrix::new(not_herm), Err(Error::NotHermitian { .. })));
        let bad_trace = CMatrix::identity(2, 2);
        assert!(matches!(DensityMatrix::new(bad_trace), Err(Error::NotUnitTrace(_))));
        let not_psd = CMatrix::from_row_slice(2, 2, &[c(1.2, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.2, 0.0)]);
        assert!(matches!(DensityMatrix::new(not_psd), Err(Error::NotPsd(_))));
        let rect = CMatrix::zeros(2, 3);
        assert!(matches!(DensityMatrix::new(rect), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn tiny_negative_eigenvalues_are_clamped() {
        let rho = DensityMatrix::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(1.0 + 5e-11, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-5e-11, 0.0)],
        ))
        .unwrap();
        assert_eq!(rho.spectrum().eigenvalues(), &[1.0, 0.0]);
    }

    #[test]
    fn collective_z_entries() {
        let h1 = collective_z(1).unwrap();
        assert_eq!(h1.matrix()[(0, 0)], c(0.5, 0.0));
        assert_eq!(h1.matrix()[(1, 1)], c(-0.5, 0.0));
        let h2 = collective_z(2).unwrap();
        let diag: Vec<f64> = (0..4).map(|i| h2.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 0.0, 0.0, -1.0]);
        let h6 = collective_z(6).unwrap();
        let diag: Vec<f64> = (0..64).map(|i| h6.matrix()[(i, i)].re).collect();
        assert_eq!(diag.iter().cloned().fold(f64::MIN, f64::max), 3.0);
        assert_eq!(diag.iter().cloned().fold(f64::MAX, f64::min), -3.0);
        assert!(matches!(collective_z(13), Err(Error::DimensionOverflow { .. })));
        assert!(matches!(collective_z_capped(5, 4), Err(Error::DimensionOverflow { .. })));
    }

    #[test]
    fn transition_table_single_qubit_example() {
        let rho = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        let t = TransitionTable::from_state(&rho, &half_sigma_x()).unwrap();
        assert_eq!(t.rows().len(), 4);
        for row in t.rows() {
            if row.k != row.l {
                assert!((row.pair_diff().abs() - 0.5).abs() < 1e-15);
                assert!((row.pair_sum() - 1.0).abs() < 1e-15);
                assert!((row.weight - 0.25).abs() < 1e-15);
            } else {
                assert_eq!(row.pair_diff(), 0.0);
                assert!(row.weight < 1e-30);
            }
        }
    }

    #[test]
    fn transition_table_excludes_kernel_pairs() {
        let rho = DensityMatrix::diagonal(&[1.0, 0.0]).unwrap();
        let t = TransitionTable::from_state(&rho, &half_sigma_x()).unwrap();
        assert_eq!(t.rows().len(), 3);
        assert!(t.rows().iter().all(|r| !(r.k == 1 && r.l == 1)));
        let cross = t.rows().iter().find(|r| r.k == 0 && r.l == 1).unwrap();
        assert!((cross.weight - 0.25).abs() < 1e-15);
    }

    #[test]
    fn commuting_diagonal_pair_has_no_off_diagonal_weight() {
        let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.15, 0.05]).unwrap();
        let t = TransitionTable::from_state(&rho, &collective_z(2).unwrap()).unwrap();
        assert!(t.rows().iter().filter(|r| r.k != r.l).all(|r| r.weight == 0.0));
    }

    #[test]
    fn weighted_inner_examples() {
        let rho = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        let id = CMatrix::identity(2, 2);
        assert!((weighted_inner(&id, &id, &rho).unwrap() - 1.0).abs() < 1e-15);
        assert!((weighted_inner(&pauli_x(), &pauli_x(), &rho).unwrap() - 1.0).abs() < 1e-15);
        let bad = CMatrix::identity(3, 3);
        assert!(matches!(weighted_inner(&bad, &id, &rho), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn apply_r_examples() {
        let rho = DensityMatrix::diagonal(&[0.75, 0.25]).unwrap();
        let r = apply_r(&rho, &CMatrix::identity(2, 2)).unwrap();
        assert!((r - rho.matrix()).iter().all(|z| z.norm() < 1e-15));

        let x = pauli_x();
        let r = apply_r(&rho, &x).unwrap();
        assert!((r[(0, 1)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((r[(1, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!(r[(0, 0)].norm() < 1e-15);

        let mixed = DensityMatrix::maximally_mixed(4).unwrap();
        let y = CMatrix::from_fn(4, 4, |i, j| c((i + 2 * j) as f64, i as f64 - j as f64));
        let y = hermitian_part(&y);
        let r = apply_r(&mixed, &y).unwrap();
        assert!((r - &y * c(0.25, 0.0)).iter().all(|z| z.norm() < 1e-14));
    }
}
