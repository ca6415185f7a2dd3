//! Krylov order n against Taylor order 2n-1: both use moments up to the same
//! degree, and the Krylov bound is never looser.

use krylov_qfi::bounds::{krylov_ladder, relative_gap, taylor_bound};
use krylov_qfi::ensembles::random_rank_r;
use krylov_qfi::qcore::{collective_z, TransitionTable};

fn main() -> krylov_qfi::Result<()> {
    let h = collective_z(4)?;
    for (label, rank) in [("full rank", 16), ("rank 2", 2)] {
        let rho = random_rank_r(16, rank, 5)?;
        let table = TransitionTable::from_state(&rho, &h)?;
        let ladder = krylov_ladder(&table, rho.spectrum(), 4);
        println!("{label}: F_Q = {:.6}", ladder.qfi);
        for n in 1..=4 {
            let kry = relative_gap(ladder.bound(n), ladder.qfi)?;
            let tay = relative_gap(taylor_bound(&table, 2 * n - 1).value, ladder.qfi)?;
            println!("  n={n}: Krylov gap {kry:.3e}   Taylor(2n-1={}) gap {tay:.3e}", 2 * n - 1);
        }
    }
    Ok(())
}
