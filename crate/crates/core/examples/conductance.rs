//! Maximal conductance of local invariant chains on a few graph families.
use localmix::conductance::{phi_max, phi_of};
use localmix::graph::Graph;
use localmix::prob::{Dist, StochMatrix};

fn main() -> localmix::Result<()> {
    for (name, g) in [
        ("path:6", Graph::path(6)?),
        ("cycle:6", Graph::cycle(6)?),
        ("complete:6", Graph::complete(6)?),
        ("dumbbell:6", Graph::dumbbell(6)?),
    ] {
        let pi = Dist::uniform(g.node_count());
        let best = phi_max(&g, &pi)?;
        let lazy = phi_of(&StochMatrix::lazy_walk(&g), &pi, &g)?;
        println!(
            "{name:<12} phi_max {:.4}  lazy walk {:.4}  bound 1/(8 phi) {:.2}",
            best.phi,
            lazy.phi,
            1.0 / (8.0 * best.phi)
        );
    }
    Ok(())
}
