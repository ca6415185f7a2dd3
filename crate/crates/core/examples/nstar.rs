//! Termination order n* = |S| - |J|: a worked qutrit, then random low-rank states
//! where the chain reaches the QFI exactly at n*.

use krylov_qfi::bounds::krylov_ladder;
use krylov_qfi::ensembles::random_rank_r;
use krylov_qfi::exact::{n_star, DEFAULT_GROUP_TOL};
use krylov_qfi::qcore::{c, collective_z, CMatrix, DensityMatrix, Observable, TransitionTable};

fn main() -> krylov_qfi::Result<()> {
    // H couples only |0> and |1>, so the sums 0.7 and 0.5 carry no weight.
    let rho = DensityMatrix::diagonal(&[0.5, 0.3, 0.2])?;
    let mut hm = CMatrix::zeros(3, 3);
    hm[(0, 1)] = c(1.0, 0.0);
    hm[(1, 0)] = c(1.0, 0.0);
    let h = Observable::new(hm)?;
    let report = n_star(&TransitionTable::from_state(&rho, &h)?, rho.spectrum(), DEFAULT_GROUP_TOL);
    println!("qutrit: S = {:?}, |J| = {}, n* = {}", report.distinct_sums, report.card_j, report.n_star);

    let h = collective_z(4)?;
    for rank in 1..=4 {
        let rho = random_rank_r(16, rank, 100 + rank as u64)?;
        let table = TransitionTable::from_state(&rho, &h)?;
        let report = n_star(&table, rho.spectrum(), DEFAULT_GROUP_TOL);
        let ladder = krylov_ladder(&table, rho.spectrum(), usize::MAX);
        let gaps: Vec<String> = ladder.chain().iter().map(|b| format!("{:.1e}", b.gap.unwrap_or(f64::NAN))).collect();
        println!("rank {rank}: n* = {} (bound {}), gaps {}", report.n_star, report.rank_bound, gaps.join(" "));
    }
    Ok(())
}
