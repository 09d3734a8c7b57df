//! Recover a local transition from one step, or a subset proving none exists.
use localmix::flow::{extract_transition, Extraction};
use localmix::graph::Graph;
use localmix::prob::Dist;

fn main() -> localmix::Result<()> {
    let g = Graph::path(4)?;
    let y = Dist::new(vec![0.4, 0.3, 0.2, 0.1])?;
    for z in [
        Dist::new(vec![0.25, 0.25, 0.25, 0.25])?,
        Dist::new(vec![0.0, 0.1, 0.2, 0.7])?,
    ] {
        match extract_transition(&y, &z, &g)? {
            Extraction::Feasible { matrix, flow_value } => {
                println!("feasible, flow {flow_value:.3}");
                for row in matrix.rows() {
                    println!("  {row:.3?}");
                }
            }
            Extraction::Infeasible { flow_value, witness } => {
                println!("infeasible, flow {flow_value:.3}, subset {:?} receives too much", witness.to_vec());
            }
        }
    }
    Ok(())
}
