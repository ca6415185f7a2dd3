//! Exact quantum Fisher information, the symmetric logarithmic derivative,
//! and the Krylov termination order `n*` for a known state.

use serde::{Deserialize, Serialize};

use crate::numeric::CompensatedSum;
use crate::qcore::{CMatrix, DensityMatrix, Observable, Spectrum, TransitionTable, C64};

/// Default tolerance for treating two eigenvalues (or two pair sums) as equal.
pub const DEFAULT_GROUP_TOL: f64 = 1e-9;

/// `F_Q = 2 sum_{k,l} (p_k - p_l)^2 / (p_k + p_l) |<k|H|l>|^2` over the table rows.
pub fn qfi_exact(table: &TransitionTable) -> f64 {
    table
        .rows()
        .iter()
        .map(|r| 2.0 * r.commutator_weight() / r.pair_sum())
        .collect::<CompensatedSum>()
        .value()
}

/// The symmetric logarithmic derivative `L`, solving `R_rho(L) = i[rho, H]`
/// on the support of the operator space, in the computational basis.
pub fn sld(table: &TransitionTable, spec: &Spectrum) -> CMatrix {
    let d = spec.dim();
    let mut l_eig = CMatrix::zeros(d, d);
    for r in table.rows() {
        let factor = 2.0 * r.pair_diff() / r.pair_sum();
        l_eig[(r.k, r.l)] = C64::new(0.0, factor) * r.element;
    }
    spec.from_eigenbasis(&l_eig)
}

/// Breakdown of `n* = |S| - |J|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NStarReport {
    pub n_star: usize,
    /// `|S|`: distinct sums `p_i + p_j` over pairs with `p_i != p_j`.
    pub card_s: usize,
    /// `|J|`: sums whose contributing matrix elements of `H` all vanish.
    pub card_j: usize,
    pub distinct_sums: Vec<f64>,
    /// Which entries of `distinct_sums` belong to `J`.
    pub in_j: Vec<bool>,
    pub group_tol: f64,
    pub rank: usize,
    /// `r (r + 1) / 2`.
    pub rank_bound: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct NStarOptions {
    pub group_tol: f64,
    /// Absolute threshold on `|<i|H|j>|^2`; `None` means `1e-12 * max|H_ij|^2`.
    pub weight_tol: Option<f64>,
}

impl Default for NStarOptions {
    fn default() -> Self {
        Self {
            group_tol: DEFAULT_GROUP_TOL,
            weight_tol: None,
        }
    }
}

/// A group of pair sums merged by single linkage, with the largest
/// coupling weight seen among its members.
#[derive(Debug, Clone, Copy)]
struct SumGroup {
    representative: f64,
    max_weight: f64,
}

/// Sort `(sum, weight)` entries and merge every entry within `tol` of the
/// current group's representative (its smallest member).
fn group_sums(mut entries: Vec<(f64, f64)>, tol: f64) -> Vec<SumGroup> {
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<SumGroup> = Vec::new();
    for (sum, weight) in entries {
        match groups.last_mut() {
            Some(g) if sum - g.representative <= tol => g.max_weight = g.max_weight.max(weight),
            _ => groups.push(SumGroup {
                representative: sum,
                max_weight: weight,
            }),
        }
    }
    groups
}

/// Distinct eigenvalues (grouped with `tol`), largest first.
fn distinct_eigenvalues(spec: &Spectrum, tol: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    for &p in spec.eigenvalues() {
        match out.last() {
            Some(&q) if q - p <= tol => {}
            _ => out.push(p),
        }
    }
    out
}

/// `n* = |S| - |J|` with default tolerances.
pub fn n_star(table: &TransitionTable, spec: &Spectrum, group_tol: f64) -> NStarReport {
    n_star_with(
        table,
        spec,
        NStarOptions {
            group_tol,
            weight_tol: None,
        },
    )
}

pub fn n_star_with(table: &TransitionTable, spec: &Spectrum, opts: NStarOptions) -> NStarReport {
    let weight_tol = opts
        .weight_tol
        .unwrap_or_else(|| 1e-12 * table.h_max_abs() * table.h_max_abs());
    let entries: Vec<(f64, f64)> = table
        .rows()
        .iter()
        .filter(|r| r.k < r.l && r.pair_diff().abs() > opts.group_tol)
        .map(|r| (r.pair_sum(), r.weight))
        .collect();
    let groups = group_sums(entries, opts.group_tol);
    let in_j: Vec<bool> = groups.iter().map(|g| g.max_weight <= weight_tol).collect();
    let card_s = groups.len();
    let card_j = in_j.iter().filter(|&&j| j).count();
    let rank = spec.rank();
    NStarReport {
        n_star: card_s - card_j,
        card_s,
        card_j,
        distinct_sums: groups.iter().map(|g| g.representative).collect(),
        in_j,
        group_tol: opts.group_tol,
        rank,
        rank_bound: rank * (rank + 1) / 2,
    }
}

/// `|S|`, the `H`-independent upper bound on `n*`.
pub fn n_star_upper_bound(spec: &Spectrum, group_tol: f64) -> usize {
    let values = distinct_eigenvalues(spec, group_tol);
    let mut entries = Vec::with_capacity(values.len() * values.len() / 2);
    for i in 0..values.len() {
        for j in i + 1..values.len() {
            entries.push((values[i] + values[j], 0.0));
        }
    }
    group_sums(entries, group_tol).len()
}

/// `4 (<H^2> - <H>^2)` for a pure state; the QFI of pure states.
pub fn pure_state_variance_qfi(rho: &DensityMatrix, h: &Observable) -> f64 {
    let m = rho.matrix();
    let hm = h.matrix();
    let mean = crate::qcore::trace_product(m, hm).re;
    let h2 = hm * hm;
    let second = crate::qcore::trace_product(m, &h2).re;
    4.0 * (second - mean * mean)
}
