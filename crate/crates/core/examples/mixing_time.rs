//! Mixing times of homogeneous, periodic and averaged systems on a cycle.
use localmix::graph::Graph;
use localmix::prob::{Dist, StochMatrix};
use localmix::spec::MatrixSpec;
use localmix::systems::{make_cesaro, make_homogeneous, make_inhomogeneous, mixing_time, EvolutionSystem};

fn main() -> localmix::Result<()> {
    let g = Graph::cycle(8)?;
    let pi = Dist::uniform(8);
    let named = |s: &str| -> localmix::Result<StochMatrix> {
        MatrixSpec::Named(s.into()).build(&g, &pi)
    };
    let systems: Vec<Box<dyn EvolutionSystem>> = vec![
        Box::new(make_homogeneous(&g, StochMatrix::lazy_walk(&g), pi.clone())?),
        Box::new(make_inhomogeneous(&g, vec![named("even_matching")?, named("odd_matching")?], 2, pi.clone())?),
        Box::new(make_cesaro(&g, StochMatrix::lazy_walk(&g), pi.clone())?),
    ];
    for sys in &systems {
        let r = mixing_time(sys.as_ref(), 10_000)?;
        println!(
            "{:<14} tau {:?}  cesaro tau {:?}  certified {}",
            sys.kind(),
            r.tau,
            r.cesaro_tau,
            r.certified
        );
    }
    Ok(())
}
