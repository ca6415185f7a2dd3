//! Estimate Krylov and Taylor bounds of a rank-2 four-qubit state from
//! simulated classical shadows and compare them with the exact values.
//!
//! Usage: cargo run --release --example shadow_estimation [shots] [seed]

use krylov_qfi::bounds::{krylov_ladder, taylor_bound};
use krylov_qfi::ensembles::random_rank_r;
use krylov_qfi::exact::qfi_exact;
use krylov_qfi::qcore::{collective_z, TransitionTable};
use krylov_qfi::shadows::{estimate_krylov, estimate_taylor, sample_shadows};

fn main() -> krylov_qfi::Result<()> {
    let mut args = std::env::args().skip(1);
    let shots: u64 = args.next().map(|s| s.parse().expect("shots")).unwrap_or(1_000_000);
    let seed: u64 = args.next().map(|s| s.parse().expect("seed")).unwrap_or(7);

    let rho = random_rank_r(16, 2, 2024)?;
    let h = collective_z(4)?;
    let table = TransitionTable::from_state(&rho, &h)?;
    let fq = qfi_exact(&table);
    let ladder = krylov_ladder(&table, rho.spectrum(), 3);
    println!("F_Q = {fq:.6}, shots = {shots}, seed = {seed}");

    for n in 1..=3 {
        // Each order gets its own 2n+1 batches cut from the same shadow stream.
        let counts = sample_shadows(&rho, shots, 2 * n + 1, seed)?;
        let est = estimate_krylov(&counts, &h, n)?;
        println!(
            "Krylov n={n}: estimate {:.6}  exact {:.6}  rel. dev. from F_Q {:+.4}  ({})",
            est.value,
            ladder.bound(n),
            (est.value - fq) / fq,
            est.solve.map(|s| s.to_string()).unwrap_or_default()
        );
    }
    let counts = sample_shadows(&rho, shots, 7, seed)?;
    let est = estimate_taylor(&counts, &h, 5)?;
    println!(
        "Taylor n=5: estimate {:.6}  exact {:.6}  rel. dev. from F_Q {:+.4}",
        est.value,
        taylor_bound(&table, 5).value,
        (est.value - fq) / fq
    );
    Ok(())
}
