//! Connectivity of the built-in networks as the node count grows.

use dadast::topology::{weights_for, GraphKind, GraphSpec};

fn main() -> dadast::Result<()> {
    let kinds = [GraphKind::Ring, GraphKind::DirectedRing, GraphKind::Exponential, GraphKind::Dense, GraphKind::Complete];
    println!("{:<14} {:>5} {:>10} {:>10}", "topology", "n", "rho_w", "||W-J||");
    for kind in kinds {
        for n in [4, 10, 50, 100] {
            let w = weights_for(&GraphSpec::new(n, kind.clone()))?;
            println!("{:<14} {:>5} {:>10.6} {:>10.6}", kind.name(), n, w.rho_w(), w.w_minus_j_norm());
        }
    }

    // a path graph given as a custom edge list
    let path = GraphKind::Custom((0..5).map(|i| (i, i + 1)).collect());
    let w = weights_for(&GraphSpec::new(6, path))?;
    println!("path-6 rho_w = {:.6}, doubly stochastic: {}", w.rho_w(), w.validate(1e-12).passed);
    Ok(())
}
