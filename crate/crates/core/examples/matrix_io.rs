//! Save a state in the text, binary and JSON matrix formats and read each back.

use krylov_qfi::ensembles::random_fullrank;
use krylov_qfi::io::{load_state, save_matrix};

fn main() -> krylov_qfi::Result<()> {
    let rho = random_fullrank(4, 9)?;
    let dir = std::env::temp_dir().join("krylov-qfi-matrix-io");
    std::fs::create_dir_all(&dir)?;
    for name in ["rho.txt", "rho.bin", "rho.json"] {
        let path = dir.join(name);
        save_matrix(&path, rho.matrix())?;
        let back = load_state(&path)?;
        let err = (back.matrix() - rho.matrix()).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        println!("{name}: {} bytes, max round-trip error {err:e}", std::fs::metadata(&path)?.len());
    }
    println!("{}", std::fs::read_to_string(dir.join("rho.txt"))?.lines().next().unwrap_or(""));
    Ok(())
}
