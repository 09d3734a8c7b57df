//! Max-flow certification of one-step locality.
//!
//! A pair of consecutive distributions `(Y, Z)` can be produced by a local
//! stochastic matrix exactly when the layered network
//!
//! ```text
//! s --Y(i)--> i --1 if (i,j) in E--> j' --Z(j)--> t
//! ```
//!
//! carries a flow of value one. The flow itself gives the matrix:
//! `P[j][i] = flow(i -> j') / Y(i)`.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, NodeSet, MAX_ENUM_NODES};
use crate::prob::{l1_distance, Dist, StochMatrix};

/// Residual capacities at or below this are treated as saturated.
pub const AUGMENT_CUTOFF: f64 = 1e-12;
/// Slack on the unit flow value that decides feasibility.
pub const FEASIBILITY_SLACK: f64 = 1e-9;
/// Columns for nodes with less mass than this are unconstrained by the flow.
pub const ZERO_MASS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

/// Role of a network node in the two-layer construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Source,
    Sink,
    /// Copy of graph node `i` on the source side.
    Left(usize),
    /// Copy of graph node `j` on the sink side.
    Right(usize),
}

#[derive(Clone, Debug)]
pub struct FlowNetwork {
    node_count: usize,
    source: usize,
    sink: usize,
    arcs: Vec<Arc>,
    /// Number of graph nodes when built by [`build_step_network`], else 0.
    layer_size: usize,
}

impl FlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize, arcs: Vec<Arc>) -> Result<Self> {
        if source >= node_count || sink >= node_count {
            return Err(invalid("source or sink out of range"));
        }
        if source == sink {
            return Err(invalid("source and sink coincide"));
        }
        for a in &arcs {
            if a.from >= node_count || a.to >= node_count {
                return Err(invalid(format!("dangling arc {} -> {}", a.from, a.to)));
            }
            if !(a.capacity >= 0.0) || !a.capacity.is_finite() {
                return Err(invalid(format!("arc {} -> {} has capacity {}", a.from, a.to, a.capacity)));
            }
        }
        Ok(Self {
            node_count,
            source,
            sink,
            arcs,
            layer_size: 0,
        })
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Classifies a node of a network built by [`build_step_network`].
    pub fn layer(&self, v: usize) -> Option<Layer> {
        let n = self.layer_size;
        if n == 0 {
            return None;
        }
        Some(match v {
            0 => Layer::Source,
            v if v <= n => Layer::Left(v - 1),
            v if v <= 2 * n => Layer::Right(v - n - 1),
            _ => Layer::Sink,
        })
    }
}

#[derive(Clone, Debug)]
pub struct FlowResult {
    pub value: f64,
    /// Flow on each arc, in the order of [`FlowNetwork::arcs`].
    pub flows: Vec<f64>,
    /// Nodes reachable from the source in the final residual network; the
    /// arcs leaving this set form a minimum cut.
    pub source_side: Vec<bool>,
}

impl FlowResult {
    /// Capacity of the cut induced by `source_side`.
    pub fn cut_value(&self, net: &FlowNetwork) -> f64 {
        net.arcs
            .iter()
            .filter(|a| self.source_side[a.from] && !self.source_side[a.to])
            .map(|a| a.capacity)
            .sum()
    }
}

/// Shortest-augmenting-path maximum flow. Breadth-first search scans arcs
/// in order of increasing head node, so the result is deterministic.
pub fn max_flow(net: &FlowNetwork) -> FlowResult {
    let nv = net.node_count;
    // Residual arc 2k is arc k forward, 2k+1 its reverse.
    let mut residual: Vec<f64> = Vec::with_capacity(2 * net.arcs.len());
    let mut head: Vec<usize> = Vec::with_capacity(2 * net.arcs.len());
    let mut out: Vec<Vec<usize>> = vec![Vec::new(); nv];
    for (k, a) in net.arcs.iter().enumerate() {
        residual.push(a.capacity);
        head.push(a.to);
        residual.push(0.0);
        head.push(a.from);
        out[a.from].push(2 * k);
        out[a.to].push(2 * k + 1);
    }
    for list in &mut out {
        list.sort_by_key(|&r| (head[r], r));
    }

    let mut value = 0.0;
    let mut parent = vec![usize::MAX; nv];
    loop {
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        let mut seen = vec![false; nv];
        seen[net.source] = true;
        let mut queue = VecDeque::from([net.source]);
        while let Some(u) = queue.pop_front() {
            if u == net.sink {
                break;
            }
            for &r in &out[u] {
                let v = head[r];
                if !seen[v] && residual[r] > AUGMENT_CUTOFF {
                    seen[v] = true;
                    parent[v] = r;
                    queue.push_back(v);
                }
            }
        }
        if !seen[net.sink] {
            let flows = net
                .arcs
                .iter()
                .enumerate()
                .map(|(k, a)| (a.capacity - residual[2 * k]).max(0.0))
                .collect();
            return FlowResult {
                value,
                flows,
                source_side: seen,
            };
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = net.sink;
        while v != net.source {
            let r = parent[v];
            bottleneck = bottleneck.min(residual[r]);
            v = head[r ^ 1];
        }
        let mut v = net.sink;
        while v != net.source {
            let r = parent[v];
            residual[r] -= bottleneck;
            residual[r ^ 1] += bottleneck;
            v = head[r ^ 1];
        }
        value += bottleneck;
    }
}

fn check_pair(y: &Dist, z: &Dist, g: &Graph) -> Result<usize> {
    let n = g.node_count();
    if y.len() != n || z.len() != n {
        return Err(invalid(format!(
            "distributions of length {} and {} on a graph of {n} nodes",
            y.len(),
            z.len()
        )));
    }
    Ok(n)
}

/// The two-layer network for the step `Y -> Z` on `g`. Node numbering:
/// source 0, left layer `1..=n`, right layer `n+1..=2n`, sink `2n+1`.
/// Arcs are listed source arcs first, then middle arcs in `(i, j)` order,
/// then sink arcs.
pub fn build_step_network(y: &Dist, z: &Dist, g: &Graph) -> Result<FlowNetwork> {
    let n = check_pair(y, z, g)?;
    let mut arcs = Vec::with_capacity(2 * n + n * n);
    for i in 0..n {
        arcs.push(Arc {
            from: 0,
            to: 1 + i,
            capacity: y.get(i),
        });
    }
    for i in 0..n {
        for &j in g.neighbors(i) {
            arcs.push(Arc {
                from: 1 + i,
                to: 1 + n + j,
                capacity: 1.0,
            });
        }
    }
    for j in 0..n {
        arcs.push(Arc {
            from: 1 + n + j,
            to: 2 * n + 1,
            capacity: z.get(j),
        });
    }
    let mut net = FlowNetwork::new(2 * n + 2, 0, 2 * n + 1, arcs)?;
    net.layer_size = n;
    Ok(net)
}

/// Outcome of [`extract_transition`].
#[derive(Clone, Debug)]
pub enum Extraction {
    Feasible {
        matrix: StochMatrix,
        flow_value: f64,
    },
    /// No local matrix maps `Y` to `Z`. `witness` is a set `W` with
    /// `Z(W) > Y(W) + Y(N(W))`.
    Infeasible { flow_value: f64, witness: NodeSet },
}

impl Extraction {
    pub fn matrix(&self) -> Option<&StochMatrix> {
        match self {
            Extraction::Feasible { matrix, .. } => Some(matrix),
            Extraction::Infeasible { .. } => None,
        }
    }

    pub fn flow_value(&self) -> f64 {
        match self {
            Extraction::Feasible { flow_value, .. } | Extraction::Infeasible { flow_value, .. } => {
                *flow_value
            }
        }
    }

    pub fn is_feasible(&self) -> bool {
        matches!(self, Extraction::Feasible { .. })
    }
}

/// A local stochastic matrix `P` with `P Y = Z`, read off a maximum flow.
pub fn extract_transition(y: &Dist, z: &Dist, g: &Graph) -> Result<Extraction> {
    let n = check_pair(y, z, g)?;
    let net = build_step_network(y, z, g)?;
    let flow = max_flow(&net);
    if flow.value < 1.0 - FEASIBILITY_SLACK {
        let witness = NodeSet::from_indices(
            n,
            &(0..n).filter(|&j| !flow.source_side[1 + n + j]).collect::<Vec<_>>(),
        )?;
        return Ok(Extraction::Infeasible {
            flow_value: flow.value,
            witness,
        });
    }

    let mut m = DMatrix::zeros(n, n);
    let mut k = n;
    for i in 0..n {
        for &j in g.neighbors(i) {
            m[(j, i)] = flow.flows[k];
            k += 1;
        }
    }
    for i in 0..n {
        let routed: f64 = m.column(i).sum();
        if y.get(i) <= ZERO_MASS || routed <= 0.0 {
            m.column_mut(i).fill(0.0);
            m[(i, i)] = 1.0;
        } else {
            // Divide by the routed amount rather than Y(i): equal up to the
            // feasibility slack, and it keeps the column exactly stochastic.
            m.column_mut(i).unscale_mut(routed);
        }
    }
    let matrix = StochMatrix::new(m)?;
    debug_assert!(
        l1_distance(&crate::prob::apply(&matrix, y)?, z)? <= 1e-8,
        "extracted matrix does not reproduce the target"
    );
    Ok(Extraction::Feasible {
        matrix,
        flow_value: flow.value,
    })
}

/// Locality of the step `Y -> Z`, decided by max-flow.
pub fn locality_holds_flow(y: &Dist, z: &Dist, g: &Graph) -> Result<bool> {
    let net = build_step_network(y, z, g)?;
    Ok(max_flow(&net).value >= 1.0 - FEASIBILITY_SLACK)
}

/// Locality of the step `Y -> Z`, decided by checking
/// `Z(W) <= Y(W) + Y(N(W))` on every subset.
pub fn locality_holds_enum(y: &Dist, z: &Dist, g: &Graph) -> Result<bool> {
    Ok(locality_violation_enum(y, z, g)?.is_none())
}

/// First subset (in mask order) violating the locality inequality.
pub fn locality_violation_enum(y: &Dist, z: &Dist, g: &Graph) -> Result<Option<NodeSet>> {
    let n = check_pair(y, z, g)?;
    if n > MAX_ENUM_NODES {
        return Err(Error::CapacityExceeded {
            what: "node count for subset enumeration",
            got: n,
            limit: MAX_ENUM_NODES,
        });
    }
    let sum_over = |d: &Dist, mask: u64| -> f64 {
        (0..n).filter(|&i| mask >> i & 1 == 1).map(|i| d.get(i)).sum()
    };
    for w in 1u64..(1 << n) {
        let closed = w | g.neighborhood_mask(w);
        if sum_over(z, w) > sum_over(y, closed) + FEASIBILITY_SLACK {
            return Ok(Some(NodeSet::from_mask(n, w)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{apply, is_local};
    use approx::assert_abs_diff_eq;

    fn arc(from: usize, to: usize, capacity: f64) -> Arc {
        Arc { from, to, capacity }
    }

    #[test]
    fn single_arc() {
        let net = FlowNetwork::new(2, 0, 1, vec![arc(0, 1, 1.0)]).unwrap();
        assert_abs_diff_eq!(max_flow(&net).value, 1.0);
    }

    #[test]
    fn two_parallel_paths() {
        let net = FlowNetwork::new(
            4,
            0,
            3,
            vec![arc(0, 1, 0.5), arc(1, 3, 0.5), arc(0, 2, 0.5), arc(2, 3, 0.5)],
        )
        .unwrap();
        let f = max_flow(&net);
        assert_abs_diff_eq!(f.value, 1.0);
        assert_abs_diff_eq!(f.cut_value(&net), 1.0);
    }

    #[test]
    fn flow_needs_reverse_arcs() {
        // Classic instance where the first shortest path must be partly undone.
        let net = FlowNetwork::new(
            6,
            0,
            5,
            vec![
                arc(0, 1, 1.0),
                arc(0, 2, 1.0),
                arc(1, 3, 1.0),
                arc(1, 4, 1.0),
                arc(2, 3, 1.0),
                arc(3, 5, 1.0),
                arc(4, 5, 1.0),
            ],
        )
        .unwrap();
        assert_abs_diff_eq!(max_flow(&net).value, 2.0);
    }

    #[test]
    fn malformed_networks() {
        assert!(FlowNetwork::new(2, 0, 1, vec![arc(0, 2, 1.0)]).is_err());
        assert!(FlowNetwork::new(2, 0, 0, vec![]).is_err());
        assert!(FlowNetwork::new(2, 0, 1, vec![arc(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn step_network_shapes() {
        let g = Graph::complete(2).unwrap();
        let u = Dist::uniform(2);
        let net = build_step_network(&u, &u, &g).unwrap();
        let middle = net
            .arcs()
            .iter()
            .filter(|a| matches!(net.layer(a.from), Some(Layer::Left(_))))
            .count();
        assert_eq!(net.node_count(), 6);
        assert_eq!(middle, 4);
        assert_abs_diff_eq!(max_flow(&net).value, 1.0);

        let p = Graph::path(2).unwrap();
        let net = build_step_network(&Dist::dirac(2, 0), &Dist::dirac(2, 1), &p).unwrap();
        let mids: Vec<(usize, usize)> = net
            .arcs()
            .iter()
            .filter_map(|a| match (net.layer(a.from), net.layer(a.to)) {
                (Some(Layer::Left(i)), Some(Layer::Right(j))) => Some((i, j)),
                _ => None,
            })
            .collect();
        assert_eq!(mids, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
        let src: Vec<f64> = net.arcs().iter().filter(|a| a.from == 0).map(|a| a.capacity).collect();
        assert_eq!(src, vec![1.0, 0.0]);
    }

    #[test]
    fn identity_routing_on_complete_graph() {
        let g = Graph::complete(3).unwrap();
        let u = Dist::uniform(3);
        assert_abs_diff_eq!(max_flow(&build_step_network(&u, &u, &g).unwrap()).value, 1.0);
    }

    #[test]
    fn extraction_examples() {
        let g = Graph::dumbbell(3).unwrap();
        let e0 = Dist::dirac(6, 0);
        let x = extract_transition(&e0, &e0, &g).unwrap();
        let p = x.matrix().unwrap();
        assert_eq!(p.get(0, 0), 1.0);

        let g2 = Graph::path(2).unwrap();
        let x = extract_transition(&Dist::dirac(2, 0), &Dist::uniform(2), &g2).unwrap();
        let p = x.matrix().unwrap();
        assert_abs_diff_eq!(p.get(0, 0), 0.5);
        assert_abs_diff_eq!(p.get(1, 0), 0.5);

        let g3 = Graph::path(3).unwrap();
        let x = extract_transition(&Dist::dirac(3, 0), &Dist::dirac(3, 2), &g3).unwrap();
        match x {
            Extraction::Infeasible { witness, flow_value } => {
                assert_eq!(flow_value, 0.0);
                assert!(witness.contains(2));
            }
            Extraction::Feasible { .. } => panic!("non-local step accepted"),
        }
    }

    #[test]
    fn zero_mass_columns_stay_put() {
        let g = Graph::path(3).unwrap();
        let y = Dist::new(vec![0.5, 0.5, 0.0]).unwrap();
        let z = Dist::new(vec![0.25, 0.5, 0.25]).unwrap();
        let p = extract_transition(&y, &z, &g).unwrap();
        let p = p.matrix().unwrap();
        assert_eq!(p.get(2, 2), 1.0);
        assert!(is_local(&g, p).unwrap());
        assert!(l1_distance(&apply(p, &y).unwrap(), &z).unwrap() <= 1e-12);
    }

    #[test]
    fn enum_and_flow_examples() {
        let g3 = Graph::path(3).unwrap();
        let (e0, e2) = (Dist::dirac(3, 0), Dist::dirac(3, 2));
        assert!(!locality_holds_flow(&e0, &e2, &g3).unwrap());
        assert_eq!(
            locality_violation_enum(&e0, &e2, &g3).unwrap().unwrap().to_vec(),
            vec![2]
        );
        let u = Dist::uniform(3);
        assert!(locality_holds_flow(&u, &u, &g3).unwrap());
        assert!(locality_holds_enum(&u, &u, &g3).unwrap());
        assert!(locality_holds_enum(&u, &u, &Graph::path(17).unwrap()).is_err());
    }

    #[test]
    fn dumbbell_clique_to_uniform_is_not_local() {
        // Nodes 4 and 5 need 1/3 of the mass but have no neighbor carrying
        // any: the cut for W = {4, 5} has value 1 - 1/3 = 2/3.
        let g = Graph::dumbbell(3).unwrap();
        let y = Dist::uniform_on(&NodeSet::range(6, 0..3).unwrap()).unwrap();
        let z = Dist::uniform(6);
        assert!(!locality_holds_flow(&y, &z, &g).unwrap());
        let w = locality_violation_enum(&y, &z, &g).unwrap().unwrap();
        assert!(w.iter().all(|i| i >= 3));
        match extract_transition(&y, &z, &g).unwrap() {
            Extraction::Infeasible { flow_value, witness } => {
                assert_abs_diff_eq!(flow_value, 2.0 / 3.0, epsilon = 1e-12);
                let closed = witness.union(&g.neighborhood(&witness).unwrap());
                assert!(
                    crate::prob::mass(&z, &witness).unwrap()
                        > crate::prob::mass(&y, &closed).unwrap()
                );
            }
            _ => panic!("expected infeasible"),
        }
    }
}
