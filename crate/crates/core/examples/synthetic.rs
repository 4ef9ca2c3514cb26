//! Noisy synthetic problem on a 50-node exponential graph.

use dadast::harness::{execute, FlatConfig, RunConfig};

fn main() -> dadast::Result<()> {
    let flat = FlatConfig::from_toml_str(
        r#"
        experiment = "synthetic"
        n = 50
        topology = "exponential"
        K = 5000
        stride = 50
        seed = 1
        gamma_x = 0.02
        "#,
    )?;
    let cfg = RunConfig::resolve(&flat)?;
    let outcome = execute(&cfg)?;
    println!("||W - J|| = {:.4}", outcome.weights.w_minus_j_norm());
    for r in &outcome.runs {
        let last = r.trace().last().expect("non-empty trace");
        println!(
            "{:<8} k = {:>5}  |grad Phi|^2 = {:.3e}  consensus_x = {:.3e}  zeta_v sup = {:.3}",
            r.config.algo.name(),
            last.k,
            last.grad_phi_sq.unwrap_or(f64::NAN),
            last.consensus_x,
            last.zeta_v_sup
        );
    }
    Ok(())
}
