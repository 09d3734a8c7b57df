//! The restarted system and its clocked lifted Markov chain.
//!
//! [`squiggle`] runs a system for `tau` steps, then restarts it from the
//! marginal it reached. [`build_m`] turns that into a Markov chain on
//! `(start node, clock, current node)` triples, stored sparsely with flat
//! index `((start * tau) + clock) * n + current`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conductance::phi_max;
use crate::error::{invalid, Error, Result};
use crate::flow::{extract_transition, Extraction};
use crate::graph::Graph;
use crate::prob::{l1, Dist, SparseStoch};
use crate::systems::{settle_time, trajectory, EvolutionSystem};

pub const INDEX_ORDER: &str = "((start * tau) + clock) * n + current";
/// Allowed deviation between the lifted chain and the restarted system.
pub const SIMULATION_TOL: f64 = 1e-8;

/// `sys` restarted from its own marginal every `tau` steps.
#[derive(Clone)]
pub struct Squiggle {
    inner: Arc<dyn EvolutionSystem>,
    tau: usize,
}

impl std::fmt::Debug for Squiggle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Squiggle")
            .field("inner", &self.inner.kind())
            .field("tau", &self.tau)
            .finish()
    }
}

pub fn squiggle(sys: Arc<dyn EvolutionSystem>, tau: usize) -> Result<Squiggle> {
    if tau == 0 {
        return Err(invalid("tau must be at least 1"));
    }
    Ok(Squiggle { inner: sys, tau })
}

impl EvolutionSystem for Squiggle {
    fn kind(&self) -> &'static str {
        "restarted"
    }

    fn graph(&self) -> &Graph {
        self.inner.graph()
    }

    fn limit(&self) -> &Dist {
        self.inner.limit()
    }

    fn is_linear(&self) -> bool {
        self.inner.is_linear()
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        visit(0, x0);
        let mut start = x0.clone();
        let mut done = 0;
        while done < steps {
            let len = self.tau.min(steps - done);
            let mut last = None;
            self.inner.run(&start, len, &mut |s, x| {
                if s > 0 {
                    visit(done + s, x);
                }
                if s == len {
                    last = Some(x.clone());
                }
            })?;
            start = last.ok_or_else(|| Error::Internal("inner system stopped early".into()))?;
            done += len;
        }
        Ok(())
    }
}

/// Clocked lifted chain over `n * tau * n` states.
#[derive(Clone, Debug)]
pub struct LiftedChain {
    pub tau: usize,
    pub n: usize,
    pub m: SparseStoch,
    pub pi: Dist,
    pub graph: Graph,
}

impl LiftedChain {
    pub fn index(&self, start: usize, clock: usize, current: usize) -> usize {
        (start * self.tau + clock) * self.n + current
    }

    /// `(start, clock, current)` of a flat index.
    pub fn coords(&self, a: usize) -> (usize, usize, usize) {
        let current = a % self.n;
        let rest = a / self.n;
        (rest / self.tau, rest % self.tau, current)
    }

    pub fn dim(&self) -> usize {
        self.n * self.tau * self.n
    }

    pub fn to_json(&self) -> LiftedChainJson {
        LiftedChainJson {
            tau: self.tau,
            n: self.n,
            index_order: INDEX_ORDER.into(),
            pi: self.pi.as_slice().to_vec(),
            m: self.m.triplets(),
        }
    }

    /// Every transition changes the current node along an edge of the base
    /// graph and follows the clock schedule.
    pub fn check_structure(&self) -> Result<()> {
        for (to, from, _) in self.m.triplets() {
            let (i, t, k) = self.coords(from);
            let (i2, t2, j) = self.coords(to);
            if !self.graph.has_edge(k, j) {
                return Err(Error::AxiomViolation(format!(
                    "lifted transition {from} -> {to} moves {k} -> {j} over a non-edge"
                )));
            }
            let ok = if t + 1 < self.tau {
                i2 == i && t2 == t + 1
            } else {
                i2 == j && t2 == 0
            };
            if !ok {
                return Err(Error::AxiomViolation(format!(
                    "lifted transition {from} -> {to} breaks the clock schedule"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedChainJson {
    pub tau: usize,
    pub n: usize,
    pub index_order: String,
    pub pi: Vec<f64>,
    /// `(to, from, weight)` triplets.
    #[serde(rename = "M")]
    pub m: Vec<(usize, usize, f64)>,
}

impl LiftedChainJson {
    pub fn build(&self, graph: &Graph) -> Result<LiftedChain> {
        let dim = self.n * self.tau * self.n;
        if graph.node_count() != self.n || self.tau == 0 {
            return Err(invalid("lifted chain header does not match the graph"));
        }
        let mut cols = vec![Vec::new(); dim];
        for &(to, from, w) in &self.m {
            if to >= dim || from >= dim {
                return Err(invalid(format!("triplet ({to}, {from}) out of range")));
            }
            cols[from].push((to, w));
        }
        let lc = LiftedChain {
            tau: self.tau,
            n: self.n,
            m: SparseStoch::new(cols)?,
            pi: Dist::new(self.pi.clone())?,
            graph: graph.clone(),
        };
        lc.check_structure()?;
        Ok(lc)
    }
}

/// Builds the lifted chain from the transitions extracted between
/// consecutive marginals of `sys` started at each Dirac.
pub fn build_m(sys: &dyn EvolutionSystem, tau: usize, g: &Graph) -> Result<LiftedChain> {
    let n = g.node_count();
    if tau == 0 {
        return Err(invalid("tau must be at least 1"));
    }
    if sys.node_count() != n {
        return Err(invalid("graph does not match the system"));
    }
    let blocks: Vec<Vec<Vec<(usize, f64)>>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<Vec<(usize, f64)>>> {
            let traj = trajectory(sys, &Dist::dirac(n, i), tau)?;
            let mut cols = Vec::with_capacity(tau * n);
            for t in 0..tau {
                let p = match extract_transition(&traj[t], &traj[t + 1], g)? {
                    Extraction::Feasible { matrix, .. } => matrix,
                    Extraction::Infeasible { flow_value, witness } => {
                        return Err(Error::AxiomViolation(format!(
                            "step {t} from node {i} is not local (flow {flow_value:.6}, violated set {:?})",
                            witness.to_vec()
                        )))
                    }
                };
                for k in 0..n {
                    let mut col = Vec::new();
                    for j in 0..n {
                        let w = p.get(j, k);
                        if w > 0.0 {
                            let to = if t + 1 < tau {
                                (i * tau + t + 1) * n + j
                            } else {
                                j * tau * n + j
                            };
                            col.push((to, w));
                        }
                    }
                    cols.push(col);
                }
            }
            Ok(cols)
        })
        .collect::<Result<_>>()?;
    let m = SparseStoch::new(blocks.into_iter().flatten().collect())?;
    Ok(LiftedChain {
        tau,
        n,
        m,
        pi: sys.limit().clone(),
        graph: g.clone(),
    })
}

/// Weight `X0(i)` on `(i, 0, i)`.
pub fn v_init(x0: &Dist, lc: &LiftedChain) -> Result<Vec<f64>> {
    if x0.len() != lc.n {
        return Err(invalid("initial distribution does not match the lifted chain"));
    }
    let mut v = vec![0.0; lc.dim()];
    for i in 0..lc.n {
        v[lc.index(i, 0, i)] = x0.get(i);
    }
    Ok(v)
}

/// Lifted weight summed by current node.
pub fn project_lifted(state: &[f64], lc: &LiftedChain) -> Result<Dist> {
    if state.len() != lc.dim() {
        return Err(invalid("lifted state has the wrong length"));
    }
    let mut out = vec![0.0; lc.n];
    for (a, &w) in state.iter().enumerate() {
        out[a % lc.n] += w;
    }
    Dist::new(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationCheck {
    pub passed: bool,
    pub max_deviation: f64,
    /// First step whose deviation exceeds the tolerance.
    pub first_failure: Option<usize>,
}

/// Compares `project(M^t v[X0])` with the restarted system for `t = 0..=steps`.
pub fn verify_simulation(
    lc: &LiftedChain,
    sys: Arc<dyn EvolutionSystem>,
    x0: &Dist,
    steps: usize,
) -> Result<SimulationCheck> {
    let expected = trajectory(&squiggle(sys, lc.tau)?, x0, steps)?;
    let mut state = v_init(x0, lc)?;
    let mut max_deviation: f64 = 0.0;
    let mut first_failure = None;
    for (t, want) in expected.iter().enumerate() {
        if t > 0 {
            state = lc.m.apply_raw(&state);
        }
        let got = project_lifted(&state, lc)?;
        let dev = l1(got.as_slice(), want.as_slice());
        max_deviation = max_deviation.max(dev);
        if dev > SIMULATION_TOL && first_failure.is_none() {
            first_failure = Some(t);
        }
    }
    Ok(SimulationCheck {
        passed: first_failure.is_none(),
        max_deviation,
        first_failure,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct LiftedMixingReport {
    pub tau: usize,
    /// Settle time of the projected distance over all lifted Dirac starts.
    pub tau_m: Option<usize>,
    pub horizon: usize,
    pub distances: Vec<f64>,
    /// Lifted index attaining each `d(t)`.
    pub worst_start: Vec<usize>,
    pub phi: f64,
    pub upper_bound: usize,
    pub upper_holds: bool,
    pub lower_bound: f64,
    pub lower_holds: bool,
}

/// Convergence time of the lifted chain over every lifted Dirac start,
/// compared with `2 tau` above and `1 / (4 phi)` below.
pub fn lifted_convergence_time(lc: &LiftedChain, horizon: usize) -> Result<LiftedMixingReport> {
    if horizon < 2 * lc.tau {
        return Err(invalid(format!("horizon must be at least 2 * tau = {}", 2 * lc.tau)));
    }
    let pi = lc.pi.as_slice();
    let traces: Vec<Vec<f64>> = (0..lc.dim())
        .into_par_iter()
        .map(|a| {
            let mut state = vec![0.0; lc.dim()];
            state[a] = 1.0;
            let mut d = Vec::with_capacity(horizon + 1);
            let mut proj = vec![0.0; lc.n];
            for t in 0..=horizon {
                if t > 0 {
                    state = lc.m.apply_raw(&state);
                }
                proj.fill(0.0);
                for (b, &w) in state.iter().enumerate() {
                    proj[b % lc.n] += w;
                }
                d.push(l1(&proj, pi));
            }
            d
        })
        .collect();
    let mut distances = vec![0.0; horizon + 1];
    let mut worst_start = vec![0; horizon + 1];
    for (a, d) in traces.iter().enumerate() {
        for t in 0..=horizon {
            if d[t] > distances[t] {
                distances[t] = d[t];
                worst_start[t] = a;
            }
        }
    }
    let tau_m = settle_time(&distances);
    let phi = phi_max(&lc.graph, &lc.pi)?.phi;
    let lower_bound = 1.0 / (4.0 * phi);
    let upper_bound = 2 * lc.tau;
    Ok(LiftedMixingReport {
        tau: lc.tau,
        tau_m,
        horizon,
        distances,
        worst_start,
        phi,
        upper_bound,
        upper_holds: tau_m.is_some_and(|t| t <= upper_bound),
        lower_bound,
        lower_holds: tau_m.is_none_or(|t| t as f64 >= lower_bound - 1.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{apply, StochMatrix};
    use crate::systems::{evolve, make_cesaro, make_homogeneous, mixing_time};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lazy(g: &Graph) -> Arc<dyn EvolutionSystem> {
        let n = g.node_count();
        Arc::new(make_homogeneous(g, StochMatrix::lazy_walk(g), Dist::uniform(n)).unwrap())
    }

    #[test]
    fn squiggle_of_homogeneous_is_itself() {
        let g = Graph::dumbbell(3).unwrap();
        let sys = lazy(&g);
        let sq = squiggle(sys.clone(), 4).unwrap();
        let x0 = Dist::dirac(6, 1);
        for t in [0, 3, 4, 9, 13] {
            let a = evolve(&sq, &x0, t).unwrap();
            let b = evolve(sys.as_ref(), &x0, t).unwrap();
            assert!(l1(a.as_slice(), b.as_slice()) < 1e-14);
        }
        assert!(squiggle(sys, 0).is_err());
    }

    #[test]
    fn squiggle_of_cesaro_restarts() {
        let g = Graph::cycle(5).unwrap();
        let p = StochMatrix::lazy_walk(&g);
        let ces: Arc<dyn EvolutionSystem> = Arc::new(make_cesaro(&g, p.clone(), Dist::uniform(5)).unwrap());
        let tau = 3;
        let x0 = Dist::new(vec![0.6, 0.1, 0.0, 0.3, 0.0]).unwrap();
        let once = |x: &Dist| {
            let mut sum = x.as_slice().to_vec();
            let mut pw = x.clone();
            for _ in 0..tau {
                pw = apply(&p, &pw).unwrap();
                for (s, v) in sum.iter_mut().zip(pw.as_slice()) {
                    *s += v;
                }
            }
            Dist::normalized(sum).unwrap()
        };
        let want = once(&once(&x0));
        let got = evolve(&squiggle(ces.clone(), tau).unwrap(), &x0, 2 * tau).unwrap();
        assert!(l1(got.as_slice(), want.as_slice()) < 1e-14);
        for t in 0..=tau {
            let a = evolve(&squiggle(ces.clone(), tau).unwrap(), &x0, t).unwrap();
            assert_eq!(a, evolve(ces.as_ref(), &x0, t).unwrap());
        }
    }

    #[test]
    fn index_round_trip() {
        let g = Graph::complete(3).unwrap();
        let lc = build_m(lazy(&g).as_ref(), 2, &g).unwrap();
        for a in 0..lc.dim() {
            let (i, t, j) = lc.coords(a);
            assert_eq!(lc.index(i, t, j), a);
        }
    }

    #[test]
    fn tau_one_uses_only_wrap_blocks() {
        let g = Graph::complete(2).unwrap();
        let lc = build_m(lazy(&g).as_ref(), 1, &g).unwrap();
        assert_eq!(lc.dim(), 4);
        lc.check_structure().unwrap();
        for (to, _, _) in lc.m.triplets() {
            let (i, t, j) = lc.coords(to);
            assert_eq!((i, t), (j, 0));
        }
    }

    #[test]
    fn dumbbell_lift_simulates() {
        let g = Graph::dumbbell(3).unwrap();
        let sys = lazy(&g);
        let tau = mixing_time(sys.as_ref(), 2000).unwrap().tau.unwrap();
        let lc = build_m(sys.as_ref(), tau, &g).unwrap();
        lc.check_structure().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x0 = Dist::random(6, &mut rng);
            let chk = verify_simulation(&lc, sys.clone(), &x0, 3 * tau).unwrap();
            assert!(chk.passed, "{chk:?}");
        }
        let rep = lifted_convergence_time(&lc, 4 * tau).unwrap();
        assert!(rep.upper_holds, "tau_m {:?} vs 2 tau {}", rep.tau_m, 2 * tau);
        assert!(rep.lower_holds);
    }

    #[test]
    fn corrupted_chain_fails_simulation() {
        let g = Graph::complete(3).unwrap();
        let sys = lazy(&g);
        let mut lc = build_m(sys.as_ref(), 2, &g).unwrap();
        let from = lc.index(0, 0, 0);
        let col: Vec<(usize, f64)> = lc.m.column(from).to_vec();
        lc.m.set_entry(col[0].0, from, 0.0);
        lc.m.set_entry(col[1].0, from, col[0].1 + col[1].1);
        let chk = verify_simulation(&lc, sys, &Dist::dirac(3, 0), 4).unwrap();
        assert!(!chk.passed);
        assert_eq!(chk.first_failure, Some(1));
    }

    #[test]
    fn v_init_and_projection() {
        let g = Graph::complete(3).unwrap();
        let lc = build_m(lazy(&g).as_ref(), 2, &g).unwrap();
        let v = v_init(&Dist::dirac(3, 2), &lc).unwrap();
        assert_eq!(v[lc.index(2, 0, 2)], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        let x = Dist::new(vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(project_lifted(&v_init(&x, &lc).unwrap(), &lc).unwrap(), x);
        let uni = vec![1.0 / lc.dim() as f64; lc.dim()];
        let p = project_lifted(&uni, &lc).unwrap();
        assert!(l1(p.as_slice(), Dist::uniform(3).as_slice()) < 1e-15);
    }

    #[test]
    fn uniform_chain_meets_both_bounds() {
        let g = Graph::complete(4).unwrap();
        let sys = make_homogeneous(&g, StochMatrix::uniform(4), Dist::uniform(4)).unwrap();
        let lc = build_m(&sys, 1, &g).unwrap();
        let rep = lifted_convergence_time(&lc, 10).unwrap();
        assert!(rep.tau_m.unwrap() <= 2);
        assert!(lifted_convergence_time(&lc, 1).is_err());
    }

    #[test]
    fn nonlocal_system_is_rejected() {
        let k3 = Graph::complete(3).unwrap();
        let path = Graph::path(3).unwrap();
        let swap = StochMatrix::permutation(&[2, 1, 0]).unwrap();
        let sys = make_homogeneous(&k3, swap, Dist::uniform(3)).unwrap();
        let err = build_m(&sys, 2, &path).unwrap_err();
        assert!(matches!(err, Error::AxiomViolation(ref m) if m.contains("step 0")));
    }

    #[test]
    fn json_round_trip() {
        let g = Graph::cycle(4).unwrap();
        let lc = build_m(lazy(&g).as_ref(), 3, &g).unwrap();
        let text = serde_json::to_string(&lc.to_json()).unwrap();
        let back: LiftedChainJson = serde_json::from_str(&text).unwrap();
        let lc2 = back.build(&g).unwrap();
        assert_eq!(lc2.m.triplets(), lc.m.triplets());
    }
}
