//! Grid over the primal stepsize and exponent. Artifacts go to a temp directory.

use dadast::harness::commands::{sweep, sweep_csv};
use dadast::harness::FlatConfig;

fn main() -> dadast::Result<()> {
    let flat = FlatConfig::from_toml_str(
        r#"
        experiment = "synthetic"
        n = 16
        topology = "ring"
        K = 2000
        algos = ["d-tiada", "d-adast"]
        gamma_x = [0.02, 0.05, 0.1]
        alpha = [0.6, 0.7]
        "#,
    )?;
    let dir = std::env::temp_dir().join("dadast-sweep-example");
    let rows = sweep(&flat, Some(&dir))?;
    print!("{}", sweep_csv(&rows));
    eprintln!("cell artifacts in {}", dir.display());
    Ok(())
}
