//! The Krylov hierarchy B_1 <= B_2 <= ... for a random full-rank state,
//! with the relative gap and the condition-number envelope at each order.
//!
//! Usage: cargo run --example krylov_chain [qubits] [seed]

use krylov_qfi::bounds::{kappa, krylov_ladder, theorem1_envelope};
use krylov_qfi::ensembles::random_fullrank;
use krylov_qfi::qcore::{collective_z, TransitionTable};

fn main() -> krylov_qfi::Result<()> {
    let mut args = std::env::args().skip(1);
    let qubits: usize = args.next().map(|s| s.parse().expect("qubits")).unwrap_or(4);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(1);

    let rho = random_fullrank(1 << qubits, seed)?;
    let h = collective_z(qubits)?;
    let table = TransitionTable::from_state(&rho, &h)?;
    let ladder = krylov_ladder(&table, rho.spectrum(), 10);
    let k = kappa(rho.spectrum()).kappa;
    println!("F_Q = {:.8}, kappa = {k:.2}, n* = {}", ladder.qfi, ladder.n_star);
    for b in ladder.chain() {
        let gap = b.gap.unwrap_or(f64::NAN);
        println!("n={:2}  B_n = {:.8}  gap {gap:.3e}  envelope {:.3e}", b.order, b.value, theorem1_envelope(k, b.order));
    }
    Ok(())
}
