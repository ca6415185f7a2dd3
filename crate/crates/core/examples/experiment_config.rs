//! Run a small experiment from an inline TOML config and print its CSV.

use krylov_qfi::experiments::{run_experiment, ExperimentConfig};

const CONFIG: &str = r#"
experiment = "compare_taylor"
num_qubits = 3
trials = 2
orders = [1, 2, 3]
ensemble = "rank_r"
rank = 3
seed = 42
"#;

fn main() -> krylov_qfi::Result<()> {
    let config = ExperimentConfig::from_toml(CONFIG)?;
    println!("config hash {}", config.config_hash());
    print!("{}", run_experiment(&config)?.to_csv());
    Ok(())
}
