//! Witness entanglement of noisy GHZ-like states: a QFI above N for the
//! collective spin certifies entanglement, and any lower bound above N does too.

use krylov_qfi::bounds::{krylov_ladder, taylor_bound};
use krylov_qfi::ensembles::{noise_mixture, random_fullrank};
use krylov_qfi::qcore::{c, collective_z, CMatrix, DensityMatrix, TransitionTable};

fn main() -> krylov_qfi::Result<()> {
    let n = 4;
    let d = 1 << n;
    let mut psi = CMatrix::zeros(d, d);
    for (i, j) in [(0, 0), (0, d - 1), (d - 1, 0), (d - 1, d - 1)] {
        psi[(i, j)] = c(0.5, 0.0);
    }
    let ghz = DensityMatrix::new(psi)?;
    let h = collective_z(n)?;
    let sigma = random_fullrank(d, 3)?;
    println!("separable limit F_Q <= {n}");
    for eps in [0.0, 0.1, 0.2, 0.3, 0.5, 0.7] {
        let rho = noise_mixture(&ghz, &sigma, eps)?;
        let table = TransitionTable::from_state(&rho, &h)?;
        let ladder = krylov_ladder(&table, rho.spectrum(), 3);
        let b3 = ladder.bound(3);
        let t5 = taylor_bound(&table, 5).value;
        let mark = |v: f64| if v > n as f64 { "entangled" } else { "-" };
        println!(
            "eps {eps:.1}: F_Q {:.3} {:9}  B3 {b3:.3} {:9}  Taylor5 {t5:.3} {}",
            ladder.qfi,
            mark(ladder.qfi),
            mark(b3),
            mark(t5)
        );
    }
    Ok(())
}
