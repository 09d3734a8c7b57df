//! Persistent walks: a direction bit on the cycle, and a tour through the dumbbell.
use localmix::bench::dumbbell_tour;
use localmix::graph::Graph;
use localmix::prob::{Dist, StochMatrix};
use localmix::systems::{make_dhn_with, make_homogeneous, mixing_time, DhnSwitch};

fn main() -> localmix::Result<()> {
    for m in [16, 32, 64] {
        let g = Graph::cycle(m)?;
        let lazy = make_homogeneous(&g, StochMatrix::lazy_walk(&g), Dist::uniform(m))?;
        let dhn = make_dhn_with(m, 1.0 / m as f64, DhnSwitch::InPlace)?;
        println!(
            "cycle {m:>3}: lazy walk {:?}, persistent walk {:?}",
            mixing_time(&lazy, 100_000)?.tau,
            mixing_time(&dhn, 100_000)?.tau
        );
    }
    for n in [4, 6, 8] {
        let lift = dumbbell_tour(n, None)?.build(None, None)?;
        println!("dumbbell {n}: tour lift {:?}", mixing_time(lift.system.as_ref(), 100_000)?.tau);
    }
    Ok(())
}
