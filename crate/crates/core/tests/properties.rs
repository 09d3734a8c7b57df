use std::sync::Arc;

use localmix::conductance::{phi_max, phi_of};
use localmix::flow::{extract_transition, locality_holds_enum, locality_holds_flow, Extraction};
use localmix::graph::Graph;
use localmix::lift::{build_m, verify_simulation};
use localmix::prob::{apply, is_local, l1_distance, Dist, StochMatrix};
use localmix::quantum::{make_coined_walk, Coin};
use localmix::systems::{evolve, make_homogeneous, mixing_time, EvolutionSystem};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: usize, rng: &mut ChaCha8Rng) -> Graph {
    let density: f64 = rng.gen_range(0.2..0.9);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Moves a chunk of `z` from one node to a node at distance at least 2
/// from it, when such a pair exists.
fn perturb(z: &Dist, g: &Graph, rng: &mut ChaCha8Rng) -> Dist {
    let n = z.len();
    let mut w = z.as_slice().to_vec();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| !g.has_edge(i, j))
        .collect();
    let (from, to) = if pairs.is_empty() {
        (rng.gen_range(0..n), rng.gen_range(0..n))
    } else {
        pairs[rng.gen_range(0..pairs.len())]
    };
    let delta = w[from] * rng.gen_range(0.05..1.0);
    w[from] -= delta;
    w[to] += delta;
    Dist::normalized(w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn l1_is_a_metric(n in 1usize..10, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, y, z) = (Dist::random(n, &mut rng), Dist::random(n, &mut rng), Dist::random(n, &mut rng));
        let d = |a: &Dist, b: &Dist| l1_distance(a, b).unwrap();
        prop_assert_eq!(d(&x, &x), 0.0);
        prop_assert!((d(&x, &y) - d(&y, &x)).abs() < 1e-15);
        prop_assert!(d(&x, &z) <= d(&x, &y) + d(&y, &z) + 1e-12);
        prop_assert!(d(&x, &y) <= 2.0 + 1e-12);
    }

    #[test]
    fn stochastic_matrices_contract(n in 2usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, &mut rng);
        let p = StochMatrix::random_local(&g, &mut rng);
        let (x, y) = (Dist::random(n, &mut rng), Dist::random(n, &mut rng));
        let before = l1_distance(&x, &y).unwrap();
        let after = l1_distance(&apply(&p, &x).unwrap(), &apply(&p, &y).unwrap()).unwrap();
        prop_assert!(after <= before + 1e-12);
    }

    #[test]
    fn flow_and_enumeration_agree(n in 2usize..9, seed: u64, adversarial: bool) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, &mut rng);
        let y = Dist::random(n, &mut rng);
        let p = StochMatrix::random_local(&g, &mut rng);
        let mut z = apply(&p, &y).unwrap();
        if adversarial {
            z = perturb(&z, &g, &mut rng);
        }
        prop_assert_eq!(
            locality_holds_flow(&y, &z, &g).unwrap(),
            locality_holds_enum(&y, &z, &g).unwrap()
        );
    }

    #[test]
    fn extraction_is_sound_and_complete(n in 2usize..9, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, &mut rng);
        let y = Dist::random(n, &mut rng);
        let z = apply(&StochMatrix::random_local(&g, &mut rng), &y).unwrap();
        match extract_transition(&y, &z, &g).unwrap() {
            Extraction::Feasible { matrix, .. } => {
                prop_assert!(is_local(&g, &matrix).unwrap());
                prop_assert!(l1_distance(&apply(&matrix, &y).unwrap(), &z).unwrap() <= 1e-8);
            }
            Extraction::Infeasible { .. } => prop_assert!(false, "reachable target reported infeasible"),
        }
    }

    #[test]
    fn linear_worst_case_is_attained_at_diracs(n in 2usize..8, seed: u64, t in 0usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, &mut rng);
        let pi = Dist::random(n, &mut rng);
        let p = StochMatrix::random_invariant(&g, &pi, &mut rng).unwrap();
        let sys = make_homogeneous(&g, p, pi.clone()).unwrap();
        let worst = (0..n)
            .map(|i| l1_distance(&evolve(&sys, &Dist::dirac(n, i), t).unwrap(), &pi).unwrap())
            .fold(0.0, f64::max);
        let x0 = Dist::random(n, &mut rng);
        let d = l1_distance(&evolve(&sys, &x0, t).unwrap(), &pi).unwrap();
        prop_assert!(d <= worst + 1e-12);
    }

    #[test]
    fn mixing_time_is_a_settling_time(n in 2usize..7, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, &mut rng);
        let pi = Dist::random(n, &mut rng);
        let p = StochMatrix::random_invariant(&g, &pi, &mut rng).unwrap();
        let sys = make_homogeneous(&g, p, pi).unwrap();
        let r = mixing_time(&sys, 400).unwrap();
        prop_assert!(r.distances.iter().all(|&d| d >= 0.0));
        if let Some(tau) = r.tau {
            prop_assert!(r.distances[tau..].iter().all(|&d| d <= 0.5));
            if tau > 0 {
                prop_assert!(r.distances[tau - 1] > 0.5);
            }
        }
    }

    #[test]
    fn coined_walks_preserve_trace(m in 3usize..9, theta in 0.0f64..6.3, phase in 0.0f64..6.3) {
        let (c, s) = (theta.cos(), theta.sin());
        let e = Complex64::from_polar(1.0, phase);
        let coin: Coin = [
            [Complex64::new(c, 0.0), Complex64::new(-s, 0.0) * e],
            [Complex64::new(s, 0.0), Complex64::new(c, 0.0) * e],
        ];
        let sys = make_coined_walk(&Graph::cycle(m).unwrap(), coin).unwrap();
        let traj = sys.density_trajectory(&Dist::dirac(m, 0), 40).unwrap();
        for rho in &traj {
            prop_assert!((rho.trace() - 1.0).abs() < 1e-10);
            prop_assert!(rho.hermiticity_error() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn every_chain_is_dominated_by_phi_max(n in 2usize..7, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, &mut rng);
        let pi = Dist::random(n, &mut rng);
        let best = phi_max(&g, &pi).unwrap().phi;
        for _ in 0..4 {
            let p = StochMatrix::random_invariant(&g, &pi, &mut rng).unwrap();
            prop_assert!(phi_of(&p, &pi, &g).unwrap().phi <= best + 1e-7);
        }
    }

    #[test]
    fn lifted_chain_simulates_restarted_system(n in 2usize..6, seed: u64, tau in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(n, &mut rng);
        let pi = Dist::random(n, &mut rng);
        let p = StochMatrix::random_invariant(&g, &pi, &mut rng).unwrap();
        let sys: Arc<dyn EvolutionSystem> = Arc::new(make_homogeneous(&g, p, pi).unwrap());
        let lc = build_m(sys.as_ref(), tau, &g).unwrap();
        lc.check_structure().unwrap();
        let chk = verify_simulation(&lc, sys, &Dist::random(n, &mut rng), 3 * tau).unwrap();
        prop_assert!(chk.passed, "{:?}", chk);
    }
}
