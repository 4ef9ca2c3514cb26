//! Scalar vs coordinate-wise stepsizes on a problem with badly scaled coordinates.

use dadast::algorithms::{run, AlgoConfig, Algorithm, Init, RunSetup};
use dadast::problems::make_random;
use dadast::topology::{weights_for, GraphKind, GraphSpec};
use dadast::NoiseModel;

fn main() -> dadast::Result<()> {
    let problem = make_random(8, 4, 4, 0, Some(0.1))?;
    let w = weights_for(&GraphSpec::new(8, GraphKind::Ring))?;
    let setup = RunSetup {
        noise: NoiseModel::Gaussian { sigma: 0.1f64.sqrt() },
        seed: 3,
        init: Init::uniform(vec![0.0; 4], vec![0.0; 4]),
        trace_stride: 1000,
    };
    for algo in [Algorithm::DAdast, Algorithm::DAdastCoordinate] {
        let cfg = AlgoConfig::new(algo).with_iterations(20_000);
        let trace = run(&problem, &w, &cfg, &setup).map_err(|a| a.source)?;
        let last = trace.last().expect("non-empty trace");
        println!(
            "{:<14} |grad Phi|^2 = {:.3e}  zeta_v = {:.3e}  zeta_v_hat = {:.3e}",
            algo.name(),
            last.grad_phi_sq.unwrap_or(f64::NAN),
            last.zeta_v_inst,
            last.zeta_v_hat_inst
        );
    }
    Ok(())
}
