//! Two nodes, scalar variables: only D-AdaST reaches the stationary line.

use dadast::algorithms::{run, AlgoConfig, Algorithm, Init, RunSetup};
use dadast::metrics::{distance_to_line, Line};
use dadast::problems::make_two_node_case_study;
use dadast::topology::{weights_for, GraphKind, GraphSpec};
use dadast::NoiseModel;

fn main() -> dadast::Result<()> {
    let problem = make_two_node_case_study();
    let w = weights_for(&GraphSpec::new(2, GraphKind::Complete))?;
    let setup = RunSetup {
        noise: NoiseModel::None,
        seed: 0,
        init: Init::PerNode { x: vec![vec![1.005], vec![0.995]], y: vec![vec![1.005], vec![0.995]] },
        trace_stride: 1000,
    };

    for algo in [Algorithm::DSgda, Algorithm::DTiada, Algorithm::DAdast] {
        let cfg = AlgoConfig::new(algo).with_iterations(100_000);
        let (trace, note) = match run(&problem, &w, &cfg, &setup) {
            Ok(t) => (t, String::new()),
            Err(abort) => (abort.partial.clone(), format!(" (stopped: {})", abort.source)),
        };
        let last = trace.last().expect("k = 0 is always recorded");
        let dist = distance_to_line(last.xbar[0], last.ybar[0], Line::CASE_STUDY)?;
        println!(
            "{:<8} k = {:>6}  distance to 3y = 5x + 2: {:.3e}  zeta_v: {:.3e}{note}",
            algo.name(),
            last.k,
            dist,
            last.zeta_v_inst
        );
    }
    Ok(())
}
