//! Hadamard walk on a cycle: position marginals, which never settle.
use localmix::graph::Graph;
use localmix::prob::Dist;
use localmix::quantum::{hadamard, make_coined_walk, marginals};
use localmix::systems::mixing_time;

fn main() -> localmix::Result<()> {
    let m = 8;
    let sys = make_coined_walk(&Graph::cycle(m)?, hadamard())?;
    let traj = sys.density_trajectory(&Dist::dirac(m, 0), 6)?;
    for (t, rho) in traj.iter().enumerate() {
        let x = marginals(rho, sys.walk().partition(), m)?;
        println!("t={t} {:.3?}", x.as_slice());
    }
    let r = mixing_time(&sys, 2000)?;
    println!("tau {:?}, time-averaged tau {:?}", r.tau, r.cesaro_tau);
    Ok(())
}
