//! Exact averaging in finitely many steps, and a random search for counterexamples.
use localmix::finite_time::{finite_time_check, gossip_matrix, random_search};
use localmix::graph::Graph;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> localmix::Result<()> {
    let g = Graph::cycle(4)?;
    let seq = [
        gossip_matrix(4, &[(0, 1), (2, 3)], 0.5)?,
        gossip_matrix(4, &[(1, 2), (3, 0)], 0.5)?,
    ];
    let r = finite_time_check(&seq, &g)?;
    println!("{}", r.message);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = random_search(&g, 500, 4, &mut rng)?;
    println!(
        "search: {} rank-one products, shortest {:?}, violations {}",
        s.rank_one_found, s.shortest_rank_one, s.violations
    );
    Ok(())
}
