//! Clocked lifted chain of a lazy walk, checked against restarted runs.
use std::sync::Arc;

use localmix::graph::Graph;
use localmix::lift::{build_m, lifted_convergence_time, verify_simulation};
use localmix::prob::{Dist, StochMatrix};
use localmix::systems::{make_homogeneous, mixing_time, EvolutionSystem};

fn main() -> localmix::Result<()> {
    let g = Graph::cycle(5)?;
    let sys: Arc<dyn EvolutionSystem> =
        Arc::new(make_homogeneous(&g, StochMatrix::lazy_walk(&g), Dist::uniform(5))?);
    let tau = mixing_time(sys.as_ref(), 1000)?.tau.unwrap_or(1).max(1);
    let lc = build_m(sys.as_ref(), tau, &g)?;
    println!("tau {tau}, lifted states {}, transitions {}", lc.dim(), lc.to_json().m.len());
    let x0 = Dist::new(vec![0.7, 0.1, 0.1, 0.1, 0.0])?;
    let check = verify_simulation(&lc, Arc::clone(&sys), &x0, 3 * tau)?;
    println!("simulation passed {} (max deviation {:.1e})", check.passed, check.max_deviation);
    let r = lifted_convergence_time(&lc, 8 * tau)?;
    println!(
        "tau_M {:?}, at most {} ({}), at least {:.2} ({})",
        r.tau_m, r.upper_bound, r.upper_holds, r.lower_bound, r.lower_holds
    );
    Ok(())
}
