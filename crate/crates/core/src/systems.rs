//! Evolution systems: anything that maps an initial node distribution to a
//! sequence of node marginals, possibly through hidden state.
//!
//! The zoo covers homogeneous and periodic time-inhomogeneous chains, Cesaro
//! averaging, the Diaconis-Holmes-Neal persistent cycle walk, general lifted
//! chains, and a nonlinear state-dependent rule. The quantum coined walk lives
//! in [`crate::quantum`] and the restarted system used by the lifting
//! construction in [`crate::lift`].
//!
//! Three probes test the properties the convergence bound needs (linearity
//! in the initial distribution, one-step locality of the marginals,
//! invariance of the declared limit), and [`mixing_time`] measures the first
//! time after which every Dirac start stays within L1 distance 1/2 of the
//! limit.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::flow::locality_holds_flow;
use crate::graph::Graph;
use crate::prob::{
    apply, is_local, l1, l1_distance, leaves_invariant, Dist, SparseStoch, StochMatrix,
    MIXING_THRESHOLD,
};

/// Longest run [`evolve`] accepts.
pub const MAX_HORIZON: usize = 1_000_000;
/// Default horizon for mixing-time measurements.
pub const DEFAULT_HORIZON: usize = 100_000;
/// Tolerance for the linearity and invariance probes.
pub const PROBE_TOL: f64 = 1e-8;
/// Longest time probed by the linearity and locality probes.
pub const PROBE_MAX_T: usize = 50;

/// A discrete-time evolution of node distributions.
pub trait EvolutionSystem: Send + Sync {
    /// Short identifier used in reports.
    fn kind(&self) -> &'static str;

    /// The locality graph on base nodes.
    fn graph(&self) -> &Graph;

    /// Declared limit distribution.
    fn limit(&self) -> &Dist;

    /// Calls `visit(t, X_t)` for `t = 0..=steps`, starting from the
    /// system's own initialization of `x0`.
    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()>;

    /// Whether the system is linear in its initial distribution by
    /// construction. Mixing times of nonlinear systems carry a caveat.
    fn is_linear(&self) -> bool {
        true
    }

    /// The transition matrix, for time-invariant memoryless chains.
    fn homogeneous_matrix(&self) -> Option<&StochMatrix> {
        None
    }

    fn node_count(&self) -> usize {
        self.graph().node_count()
    }
}

impl fmt::Debug for dyn EvolutionSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(n={})", self.kind(), self.node_count())
    }
}

fn check_start(sys: &dyn EvolutionSystem, x0: &Dist) -> Result<()> {
    if x0.len() != sys.node_count() {
        return Err(invalid(format!(
            "initial distribution has {} entries for {} nodes",
            x0.len(),
            sys.node_count()
        )));
    }
    Ok(())
}

/// Node marginal after `t` steps.
pub fn evolve(sys: &dyn EvolutionSystem, x0: &Dist, t: usize) -> Result<Dist> {
    if t > MAX_HORIZON {
        return Err(Error::CapacityExceeded {
            what: "evolution horizon",
            got: t,
            limit: MAX_HORIZON,
        });
    }
    let mut last = None;
    sys.run(x0, t, &mut |s, x| {
        if s == t {
            last = Some(x.clone());
        }
    })?;
    last.ok_or_else(|| Error::Internal("system did not reach the requested step".into()))
}

/// Node marginals `X_0..=X_steps`.
pub fn trajectory(sys: &dyn EvolutionSystem, x0: &Dist, steps: usize) -> Result<Vec<Dist>> {
    if steps > MAX_HORIZON {
        return Err(Error::CapacityExceeded {
            what: "evolution horizon",
            got: steps,
            limit: MAX_HORIZON,
        });
    }
    let mut out = Vec::with_capacity(steps + 1);
    sys.run(x0, steps, &mut |_, x| out.push(x.clone()))?;
    Ok(out)
}

fn validate_chain(g: &Graph, p: &StochMatrix, pi: &Dist, label: &str) -> Result<()> {
    if p.dim() != g.node_count() || pi.len() != g.node_count() {
        return Err(invalid(format!("{label}: dimension differs from graph")));
    }
    if !is_local(g, p)? {
        return Err(Error::AxiomViolation(format!("{label} is not local on the graph")));
    }
    if !leaves_invariant(p, pi)? {
        return Err(Error::AxiomViolation(format!("{label} does not leave pi invariant")));
    }
    Ok(())
}

/// `X_t = P^t X_0`.
#[derive(Clone, Debug)]
pub struct Homogeneous {
    graph: Graph,
    p: StochMatrix,
    sparse: SparseStoch,
    pi: Dist,
}

pub fn make_homogeneous(g: &Graph, p: StochMatrix, pi: Dist) -> Result<Homogeneous> {
    validate_chain(g, &p, &pi, "transition matrix")?;
    Ok(Homogeneous {
        graph: g.clone(),
        sparse: SparseStoch::from_dense(&p),
        p,
        pi,
    })
}

impl EvolutionSystem for Homogeneous {
    fn kind(&self) -> &'static str {
        "homogeneous"
    }

    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn limit(&self) -> &Dist {
        &self.pi
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        check_start(self, x0)?;
        let mut x = x0.clone();
        visit(0, &x);
        for t in 1..=steps {
            x = Dist::from_raw(self.sparse.apply_raw(x.as_slice()));
            visit(t, &x);
        }
        Ok(())
    }

    fn homogeneous_matrix(&self) -> Option<&StochMatrix> {
        Some(&self.p)
    }
}

/// `X_{t+1} = P_{t mod period} X_t`.
#[derive(Clone, Debug)]
pub struct Inhomogeneous {
    graph: Graph,
    mats: Vec<SparseStoch>,
    period: usize,
    pi: Dist,
}

pub fn make_inhomogeneous(
    g: &Graph,
    mats: Vec<StochMatrix>,
    period: usize,
    pi: Dist,
) -> Result<Inhomogeneous> {
    if period == 0 || period > mats.len() {
        return Err(invalid(format!(
            "period {period} must be between 1 and the sequence length {}",
            mats.len()
        )));
    }
    for (k, p) in mats.iter().enumerate() {
        validate_chain(g, p, &pi, &format!("matrix {k} of the sequence"))?;
    }
    Ok(Inhomogeneous {
        graph: g.clone(),
        mats: mats.iter().map(SparseStoch::from_dense).collect(),
        period,
        pi,
    })
}

impl EvolutionSystem for Inhomogeneous {
    fn kind(&self) -> &'static str {
        "inhomogeneous"
    }

    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn limit(&self) -> &Dist {
        &self.pi
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        check_start(self, x0)?;
        let mut x = x0.clone();
        visit(0, &x);
        for t in 1..=steps {
            x = Dist::from_raw(self.mats[(t - 1) % self.period].apply_raw(x.as_slice()));
            visit(t, &x);
        }
        Ok(())
    }
}

/// `X_t = (1 / (t + 1)) sum_{k=0}^{t} P^k X_0`.
#[derive(Clone, Debug)]
pub struct Cesaro {
    graph: Graph,
    p: SparseStoch,
    pi: Dist,
}

pub fn make_cesaro(g: &Graph, p: StochMatrix, pi: Dist) -> Result<Cesaro> {
    validate_chain(g, &p, &pi, "transition matrix")?;
    Ok(Cesaro {
        graph: g.clone(),
        p: SparseStoch::from_dense(&p),
        pi,
    })
}

impl EvolutionSystem for Cesaro {
    fn kind(&self) -> &'static str {
        "cesaro"
    }

    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn limit(&self) -> &Dist {
        &self.pi
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        check_start(self, x0)?;
        let mut power = x0.clone();
        let mut sum: Vec<f64> = x0.as_slice().to_vec();
        visit(0, x0);
        for t in 1..=steps {
            power = Dist::from_raw(self.p.apply_raw(power.as_slice()));
            for (s, v) in sum.iter_mut().zip(power.as_slice()) {
                *s += v;
            }
            let scale = 1.0 / (t + 1) as f64;
            visit(t, &Dist::from_raw(sum.iter().map(|s| s * scale).collect()));
        }
        Ok(())
    }
}

/// What the persistent cycle walk does when it switches direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DhnSwitch {
    /// Reverse and take the step in the new direction.
    Move,
    /// Reverse and stay put for this step.
    InPlace,
}

/// Diaconis-Holmes-Neal walk on the cycle `0..m`: keep going in the current
/// direction with probability `1 - p_switch`, otherwise reverse. Hidden
/// state is the direction; a node's mass starts split evenly over both.
#[derive(Clone, Debug)]
pub struct Dhn {
    graph: Graph,
    m: usize,
    p_switch: f64,
    switch: DhnSwitch,
    pi: Dist,
}

pub fn make_dhn(m: usize, p_switch: f64) -> Result<Dhn> {
    make_dhn_with(m, p_switch, DhnSwitch::Move)
}

pub fn make_dhn_with(m: usize, p_switch: f64, switch: DhnSwitch) -> Result<Dhn> {
    if m < 3 {
        return Err(invalid("cycle walk needs m >= 3"));
    }
    if !(p_switch > 0.0 && p_switch < 1.0) {
        return Err(invalid(format!("switch probability {p_switch} not in (0, 1)")));
    }
    Ok(Dhn {
        graph: Graph::cycle(m)?,
        m,
        p_switch,
        switch,
        pi: Dist::uniform(m),
    })
}

impl Dhn {
    /// Lifted state index: `2 * position + direction`, direction 0 moving
    /// towards `position + 1`.
    fn step(&self, state: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut next = vec![0.0; 2 * m];
        let (keep, flip) = (1.0 - self.p_switch, self.p_switch);
        for x in 0..m {
            let fwd = (x + 1) % m;
            let back = (x + m - 1) % m;
            let up = state[2 * x];
            let down = state[2 * x + 1];
            next[2 * fwd] += keep * up;
            next[2 * back + 1] += keep * down;
            match self.switch {
                DhnSwitch::Move => {
                    next[2 * back + 1] += flip * up;
                    next[2 * fwd] += flip * down;
                }
                DhnSwitch::InPlace => {
                    next[2 * x + 1] += flip * up;
                    next[2 * x] += flip * down;
                }
            }
        }
        next
    }

    fn marginal(&self, state: &[f64]) -> Dist {
        Dist::from_raw((0..self.m).map(|x| state[2 * x] + state[2 * x + 1]).collect())
    }
}

impl EvolutionSystem for Dhn {
    fn kind(&self) -> &'static str {
        "dhn"
    }

    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn limit(&self) -> &Dist {
        &self.pi
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        check_start(self, x0)?;
        let mut state: Vec<f64> = x0.as_slice().iter().flat_map(|&w| [w / 2.0, w / 2.0]).collect();
        visit(0, x0);
        for t in 1..=steps {
            state = self.step(&state);
            visit(t, &self.marginal(&state));
        }
        Ok(())
    }
}

/// A Markov chain on lifted states whose marginal, grouped by a projection
/// onto base nodes, is the observed evolution.
#[derive(Clone, Debug)]
pub struct Lifted {
    graph: Graph,
    lift_graph: Graph,
    m: SparseStoch,
    projection: Vec<usize>,
    init: Vec<Dist>,
    pi: Dist,
}

/// `init[i]` is the lifted distribution a unit of mass at base node `i`
/// starts in; it must sit on states projecting to `i`.
pub fn make_lifted(
    base: &Graph,
    lift_graph: Graph,
    m: SparseStoch,
    projection: Vec<usize>,
    init: Vec<Dist>,
    pi: Dist,
) -> Result<Lifted> {
    let nb = base.node_count();
    let nl = m.dim();
    if lift_graph.node_count() != nl || projection.len() != nl {
        return Err(invalid("lifted matrix, lift graph and projection sizes differ"));
    }
    if init.len() != nb || pi.len() != nb {
        return Err(invalid("initializer or limit does not match the base graph"));
    }
    let mut hit = vec![false; nb];
    for &b in &projection {
        if b >= nb {
            return Err(invalid(format!("projection target {b} out of range")));
        }
        hit[b] = true;
    }
    if let Some(i) = hit.iter().position(|h| !h) {
        return Err(invalid(format!("projection misses base node {i}")));
    }
    if !m.is_local(&lift_graph)? {
        return Err(Error::AxiomViolation("lifted matrix is not local on the lift graph".into()));
    }
    for (to, from, _) in m.triplets() {
        if !base.has_edge(projection[from], projection[to]) {
            return Err(Error::AxiomViolation(format!(
                "lifted transition {from} -> {to} crosses a non-edge of the base graph"
            )));
        }
    }
    for (i, d) in init.iter().enumerate() {
        if d.len() != nl {
            return Err(invalid(format!("initializer for node {i} has wrong length")));
        }
        if (0..nl).any(|a| d.get(a) > 0.0 && projection[a] != i) {
            return Err(invalid(format!("initializer for node {i} leaves its fiber")));
        }
    }
    let sys = Lifted {
        graph: base.clone(),
        lift_graph,
        m,
        projection,
        init,
        pi,
    };
    let v = sys.initialize(&sys.pi);
    if l1(&sys.m.apply_raw(&v), &v) > crate::prob::SUM_TOL {
        return Err(Error::AxiomViolation(
            "lifted chain does not leave the initialized limit invariant".into(),
        ));
    }
    Ok(sys)
}

impl Lifted {
    pub fn initialize(&self, x0: &Dist) -> Vec<f64> {
        let mut v = vec![0.0; self.m.dim()];
        for (i, d) in self.init.iter().enumerate() {
            let w = x0.get(i);
            if w != 0.0 {
                for (a, slot) in v.iter_mut().enumerate() {
                    *slot += w * d.get(a);
                }
            }
        }
        v
    }

    pub fn project(&self, state: &[f64]) -> Dist {
        let mut out = vec![0.0; self.graph.node_count()];
        for (a, &w) in state.iter().enumerate() {
            out[self.projection[a]] += w;
        }
        Dist::from_raw(out)
    }

    pub fn lifted_matrix(&self) -> &SparseStoch {
        &self.m
    }

    pub fn lift_graph(&self) -> &Graph {
        &self.lift_graph
    }
}

impl EvolutionSystem for Lifted {
    fn kind(&self) -> &'static str {
        "lifted"
    }

    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn limit(&self) -> &Dist {
        &self.pi
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        check_start(self, x0)?;
        let mut state = self.initialize(x0);
        visit(0, &self.project(&state));
        for t in 1..=steps {
            state = self.m.apply_raw(&state);
            visit(t, &self.project(&state));
        }
        Ok(())
    }
}

/// Persistent walk along a closed tour `tour[0] -> tour[1] -> ... -> tour[0]`
/// of base nodes. Lifted states are `(position on tour, direction)`; a base
/// node's mass starts spread evenly over all its tour positions and both
/// directions. The limit is the visit frequency of each node on the tour.
pub fn tour_lift(base: &Graph, tour: &[usize], p_switch: f64, switch: DhnSwitch) -> Result<Lifted> {
    let len = tour.len();
    let nb = base.node_count();
    if len < 3 {
        return Err(invalid("tour must have at least three positions"));
    }
    if !(p_switch > 0.0 && p_switch < 1.0) {
        return Err(invalid(format!("switch probability {p_switch} not in (0, 1)")));
    }
    for k in 0..len {
        let (a, b) = (tour[k], tour[(k + 1) % len]);
        if a >= nb || b >= nb {
            return Err(invalid(format!("tour visits node {} out of range", a.max(b))));
        }
        if !base.has_edge(a, b) {
            return Err(invalid(format!("tour step {a} -> {b} is not an edge")));
        }
    }
    let (keep, flip) = (1.0 - p_switch, p_switch);
    let mut cols = vec![Vec::new(); 2 * len];
    for k in 0..len {
        let fwd = (k + 1) % len;
        let back = (k + len - 1) % len;
        cols[2 * k].push((2 * fwd, keep));
        cols[2 * k + 1].push((2 * back + 1, keep));
        match switch {
            DhnSwitch::Move => {
                cols[2 * k].push((2 * back + 1, flip));
                cols[2 * k + 1].push((2 * fwd, flip));
            }
            DhnSwitch::InPlace => {
                cols[2 * k].push((2 * k + 1, flip));
                cols[2 * k + 1].push((2 * k, flip));
            }
        }
    }
    let m = SparseStoch::new(cols)?;
    let projection: Vec<usize> = (0..2 * len).map(|a| tour[a / 2]).collect();
    let mut visits = vec![0usize; nb];
    for &i in tour {
        visits[i] += 1;
    }
    if let Some(i) = visits.iter().position(|&c| c == 0) {
        return Err(invalid(format!("tour never visits node {i}")));
    }
    let init = (0..nb)
        .map(|i| {
            let share = 1.0 / (2 * visits[i]) as f64;
            Dist::from_raw((0..2 * len).map(|a| if projection[a] == i { share } else { 0.0 }).collect())
        })
        .collect();
    let pi = Dist::new(visits.iter().map(|&c| c as f64 / len as f64).collect())?;
    let lift_graph = Graph::lifted(base, &projection)?;
    make_lifted(base, lift_graph, m, projection, init, pi)
}

/// The persistent cycle walk expressed through the general lifted wrapper.
pub fn dhn_lifted(m: usize, p_switch: f64, switch: DhnSwitch) -> Result<Lifted> {
    let tour: Vec<usize> = (0..m).collect();
    tour_lift(&Graph::cycle(m)?, &tour, p_switch, switch)
}

type Rule = dyn Fn(&Dist) -> StochMatrix + Send + Sync;

/// `X_{t+1} = P(X_t) X_t` for a rule returning a local matrix that leaves
/// the limit invariant. The rule is checked at every step.
#[derive(Clone)]
pub struct StateDependent {
    graph: Graph,
    pi: Dist,
    rule: Arc<Rule>,
}

impl fmt::Debug for StateDependent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StateDependent")
            .field("n", &self.graph.node_count())
            .finish_non_exhaustive()
    }
}

pub fn make_state_dependent(
    g: &Graph,
    pi: Dist,
    rule: impl Fn(&Dist) -> StochMatrix + Send + Sync + 'static,
) -> Result<StateDependent> {
    if pi.len() != g.node_count() {
        return Err(invalid("limit does not match the graph"));
    }
    Ok(StateDependent {
        graph: g.clone(),
        pi,
        rule: Arc::new(rule),
    })
}

/// The rule `P(X) = w A + (1 - w) B` with `w = X(probe_node)`. The probe
/// node may be anywhere in the graph: the decision is nonlocal even though
/// every step moves mass locally.
pub fn mixture_rule(
    g: &Graph,
    pi: Dist,
    a: StochMatrix,
    b: StochMatrix,
    probe_node: usize,
) -> Result<StateDependent> {
    if probe_node >= g.node_count() {
        return Err(invalid("probe node out of range"));
    }
    validate_chain(g, &a, &pi, "first mixture matrix")?;
    validate_chain(g, &b, &pi, "second mixture matrix")?;
    make_state_dependent(g, pi, move |x| {
        let w = x.get(probe_node).clamp(0.0, 1.0);
        StochMatrix::convex_combination(&[&a, &b], &[w, 1.0 - w]).expect("same dimensions")
    })
}

impl EvolutionSystem for StateDependent {
    fn kind(&self) -> &'static str {
        "state_dependent"
    }

    fn graph(&self) -> &Graph {
        &self.graph
    }

    fn limit(&self) -> &Dist {
        &self.pi
    }

    fn is_linear(&self) -> bool {
        false
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        check_start(self, x0)?;
        let mut x = x0.clone();
        visit(0, &x);
        for t in 1..=steps {
            let p = (self.rule)(&x);
            if p.dim() != self.graph.node_count() || !is_local(&self.graph, &p)? {
                return Err(Error::AxiomViolation(format!("step {t}: rule emitted a non-local matrix")));
            }
            if !leaves_invariant(&p, &self.pi)? {
                return Err(Error::AxiomViolation(format!(
                    "step {t}: rule emitted a matrix that does not leave pi invariant"
                )));
            }
            x = apply(&p, &x)?;
            visit(t, &x);
        }
        Ok(())
    }
}

/// Counterexample found by a probe.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeWitness {
    pub x0: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0_alt: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    pub t: usize,
    pub deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeOutcome {
    pub passed: bool,
    pub trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<ProbeWitness>,
    /// Set when the probe could not run, e.g. the system rejected a step.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ProbeOutcome {
    fn pass(trials: usize) -> Self {
        Self {
            passed: true,
            trials,
            witness: None,
            error: None,
        }
    }

    fn fail(trials: usize, witness: ProbeWitness) -> Self {
        Self {
            passed: false,
            trials,
            witness: Some(witness),
            error: None,
        }
    }

    fn errored(trials: usize, e: Error) -> Self {
        Self {
            passed: false,
            trials,
            witness: None,
            error: Some(e.to_string()),
        }
    }
}

/// Checks that mixing initial distributions mixes the marginals, on random
/// `(X0, X0', p, t <= 50)` samples.
pub fn probe_linearity<R: Rng + ?Sized>(
    sys: &dyn EvolutionSystem,
    trials: usize,
    rng: &mut R,
) -> ProbeOutcome {
    let n = sys.node_count();
    for trial in 1..=trials {
        let x = Dist::random(n, rng);
        let y = Dist::random(n, rng);
        let p: f64 = rng.gen_range(0.05..0.95);
        let t = rng.gen_range(1..=PROBE_MAX_T);
        let res = (|| -> Result<f64> {
            let mixed = evolve(sys, &x.mix(&y, p)?, t)?;
            let want = evolve(sys, &x, t)?.mix(&evolve(sys, &y, t)?, p)?;
            l1_distance(&mixed, &want)
        })();
        match res {
            Ok(dev) if dev > PROBE_TOL => {
                return ProbeOutcome::fail(
                    trial,
                    ProbeWitness {
                        x0: x.as_slice().to_vec(),
                        x0_alt: Some(y.as_slice().to_vec()),
                        p: Some(p),
                        t,
                        deviation: dev,
                    },
                )
            }
            Ok(_) => {}
            Err(e) => return ProbeOutcome::errored(trial, e),
        }
    }
    ProbeOutcome::pass(trials)
}

/// Certifies by max-flow that every step of sampled Dirac runs (up to a
/// random `t <= 50`) moves mass only along edges of `g`.
pub fn probe_locality<R: Rng + ?Sized>(
    sys: &dyn EvolutionSystem,
    g: &Graph,
    trials: usize,
    rng: &mut R,
) -> ProbeOutcome {
    let n = sys.node_count();
    if g.node_count() != n {
        return ProbeOutcome::errored(0, invalid("probe graph does not match the system"));
    }
    for trial in 1..=trials {
        let i = rng.gen_range(0..n);
        let t = rng.gen_range(1..=PROBE_MAX_T);
        let x0 = Dist::dirac(n, i);
        let traj = match trajectory(sys, &x0, t) {
            Ok(tr) => tr,
            Err(e) => return ProbeOutcome::errored(trial, e),
        };
        for s in 1..=t {
            match locality_holds_flow(&traj[s - 1], &traj[s], g) {
                Ok(true) => {}
                Ok(false) => {
                    let dev = crate::flow::max_flow(
                        &crate::flow::build_step_network(&traj[s - 1], &traj[s], g)
                            .expect("validated"),
                    )
                    .value;
                    return ProbeOutcome::fail(
                        trial,
                        ProbeWitness {
                            x0: x0.as_slice().to_vec(),
                            x0_alt: None,
                            p: None,
                            t: s,
                            deviation: 1.0 - dev,
                        },
                    );
                }
                Err(e) => return ProbeOutcome::errored(trial, e),
            }
        }
    }
    ProbeOutcome::pass(trials)
}

/// Checks that the declared limit stays put for `horizon` steps.
pub fn probe_invariance(sys: &dyn EvolutionSystem, horizon: usize) -> ProbeOutcome {
    let pi = sys.limit().clone();
    let mut worst: Option<ProbeWitness> = None;
    let res = sys.run(&pi, horizon, &mut |t, x| {
        let dev = l1(x.as_slice(), pi.as_slice());
        if dev > PROBE_TOL && worst.is_none() {
            worst = Some(ProbeWitness {
                x0: pi.as_slice().to_vec(),
                x0_alt: None,
                p: None,
                t,
                deviation: dev,
            });
        }
    });
    match (res, worst) {
        (Err(e), _) => ProbeOutcome::errored(horizon, e),
        (Ok(()), Some(w)) => ProbeOutcome::fail(horizon, w),
        (Ok(()), None) => ProbeOutcome::pass(horizon),
    }
}

/// Outcome of a mixing-time measurement.
#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    /// Least `t0` with `d(t) <= 1/2` on `[t0, horizon]`; `None` if `d(horizon) > 1/2`.
    pub tau: Option<usize>,
    pub horizon: usize,
    /// `d(t)` for `t = 0..=horizon`: worst distance to the limit over the
    /// initializations.
    pub distances: Vec<f64>,
    /// Initialization index attaining `d(t)`.
    pub worst_start: Vec<usize>,
    /// `d(t) > 1/2` somewhere in the last tenth of the horizon.
    pub horizon_fragile: bool,
    /// Homogeneous chain whose second-largest eigenvalue modulus is below
    /// one: the worst-case distance is nonincreasing, so `tau` holds for all
    /// later times.
    pub certified: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub second_eigenvalue_modulus: Option<f64>,
    /// Same measurement on the running average of the marginals.
    pub cesaro_tau: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

impl MixingReport {
    pub fn converged(&self) -> bool {
        self.tau.is_some()
    }

    /// `t,d` lines with a header, for plotting.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("t,d\n");
        for (t, d) in self.distances.iter().enumerate() {
            out.push_str(&format!("{t},{d:?}\n"));
        }
        out
    }
}

/// Least `t0` with every `d(t)`, `t >= t0`, at most the threshold.
pub(crate) fn settle_time(d: &[f64]) -> Option<usize> {
    match d.iter().rposition(|&v| v > MIXING_THRESHOLD) {
        None => Some(0),
        Some(last) if last + 1 < d.len() => Some(last + 1),
        Some(_) => None,
    }
}

/// Mixing time over all Dirac initializations.
pub fn mixing_time(sys: &dyn EvolutionSystem, horizon: usize) -> Result<MixingReport> {
    let n = sys.node_count();
    let starts: Vec<Dist> = (0..n).map(|i| Dist::dirac(n, i)).collect();
    let mut report = mixing_time_from(sys, horizon, &starts)?;
    if !sys.is_linear() {
        report.caveat = Some(
            "nonlinear system: worst case over Dirac starts need not bound other starts".into(),
        );
    }
    Ok(report)
}

/// Mixing time over a caller-supplied set of initial distributions.
pub fn mixing_time_from(
    sys: &dyn EvolutionSystem,
    horizon: usize,
    starts: &[Dist],
) -> Result<MixingReport> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if horizon > MAX_HORIZON {
        return Err(Error::CapacityExceeded {
            what: "evolution horizon",
            got: horizon,
            limit: MAX_HORIZON,
        });
    }
    if starts.is_empty() {
        return Err(invalid("no initial distributions"));
    }
    let pi = sys.limit().as_slice().to_vec();
    let per_start: Vec<(Vec<f64>, Vec<f64>)> = starts
        .par_iter()
        .map(|x0| -> Result<(Vec<f64>, Vec<f64>)> {
            let mut d = Vec::with_capacity(horizon + 1);
            let mut dc = Vec::with_capacity(horizon + 1);
            let mut running = vec![0.0; pi.len()];
            sys.run(x0, horizon, &mut |t, x| {
                d.push(l1(x.as_slice(), &pi));
                for (r, v) in running.iter_mut().zip(x.as_slice()) {
                    *r += v;
                }
                let scale = 1.0 / (t + 1) as f64;
                dc.push(running.iter().zip(&pi).map(|(r, p)| (r * scale - p).abs()).sum());
            })?;
            Ok((d, dc))
        })
        .collect::<Result<_>>()?;

    let mut distances = vec![0.0; horizon + 1];
    let mut worst_start = vec![0; horizon + 1];
    let mut cesaro = vec![0.0f64; horizon + 1];
    for (s, (d, dc)) in per_start.iter().enumerate() {
        for t in 0..=horizon {
            if d[t] > distances[t] {
                distances[t] = d[t];
                worst_start[t] = s;
            }
            cesaro[t] = cesaro[t].max(dc[t]);
        }
    }
    let tau = settle_time(&distances);
    let tail_start = horizon - horizon / 10;
    let horizon_fragile = distances[tail_start..].iter().any(|&v| v > MIXING_THRESHOLD);
    let slem = sys.homogeneous_matrix().map(second_eigenvalue_modulus);
    let certified = tau.is_some() && slem.is_some_and(|s| s < 1.0 - 1e-12);
    Ok(MixingReport {
        tau,
        horizon,
        distances,
        worst_start,
        horizon_fragile,
        certified,
        second_eigenvalue_modulus: slem,
        cesaro_tau: settle_time(&cesaro),
        caveat: None,
    })
}

/// Largest eigenvalue modulus after removing one eigenvalue closest to 1.
pub fn second_eigenvalue_modulus(p: &StochMatrix) -> f64 {
    let ev = eigenvalues(p.as_matrix());
    let Some(k) = (0..ev.len()).min_by(|&a, &b| {
        let da = (ev[a].re - 1.0).hypot(ev[a].im);
        let db = (ev[b].re - 1.0).hypot(ev[b].im);
        da.total_cmp(&db)
    }) else {
        return 0.0;
    };
    ev.iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, z)| z.norm())
        .fold(0.0, f64::max)
}

pub(crate) fn eigenvalues(m: &DMatrix<f64>) -> Vec<num_complex::Complex64> {
    m.clone().complex_eigenvalues().iter().copied().collect()
}
