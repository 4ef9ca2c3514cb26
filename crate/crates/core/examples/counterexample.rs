//! D-TiAda stays frozen on the invariant line; D-AdaST moves off it.

use dadast::harness::commands::{counterexample_report, CounterexampleRequest};

fn main() -> dadast::Result<()> {
    for (alpha, beta) in [(0.6, 0.4), (0.75, 0.25), (0.9, 0.1)] {
        let req = CounterexampleRequest { alpha, beta, iterations: 10_000, ..CounterexampleRequest::default() };
        let rep = counterexample_report(&req)?;
        println!(
            "alpha {alpha:.2} beta {beta:.2}: D-TiAda drift {:.1e}, D-AdaST |grad_x| ratio {:.3}, distance {:.3} -> {:.3}",
            rep.d_tiada.max_rel_drift_x.max(rep.d_tiada.max_rel_drift_y),
            rep.d_adast.grad_x_ratio,
            rep.d_adast.initial_distance,
            rep.d_adast.final_distance
        );
    }
    Ok(())
}
