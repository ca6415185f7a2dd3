//! Exact QFI of a thermal-like qubit state and of a random four-qubit state,
//! checked against the SLD norm and, for a pure state, the variance formula.

use krylov_qfi::ensembles::{random_fullrank, random_pure};
use krylov_qfi::exact::{pure_state_variance_qfi, qfi_exact, sld};
use krylov_qfi::qcore::{c, collective_z, pauli_x, weighted_inner, DensityMatrix, Observable, TransitionTable};

fn main() -> krylov_qfi::Result<()> {
    let rho = DensityMatrix::diagonal(&[0.75, 0.25])?;
    let h = Observable::new(pauli_x() * c(0.5, 0.0))?;
    let fq = qfi_exact(&TransitionTable::from_state(&rho, &h)?);
    println!("qubit diag(0.75, 0.25), H = X/2: F_Q = {fq}");

    let rho = random_fullrank(16, 11)?;
    let h = collective_z(4)?;
    let table = TransitionTable::from_state(&rho, &h)?;
    let fq = qfi_exact(&table);
    let l = sld(&table, rho.spectrum());
    println!("random full-rank N=4: F_Q = {fq:.10}, tr(rho L^2) = {:.10}", weighted_inner(&l, &l, &rho)?);

    let psi = random_pure(16, 11)?;
    let fq = qfi_exact(&TransitionTable::from_state(&psi, &h)?);
    println!("random pure N=4: F_Q = {fq:.10}, 4 Var(H) = {:.10}", pure_state_variance_qfi(&psi, &h));
    Ok(())
}
