//! Conductance of a chain, and the best conductance any local chain with a
//! prescribed invariant distribution can reach.
//!
//! `phi_of(P)` is the smallest fraction of `pi|W` that one step of `P` moves
//! out of `W`, over nonempty `W` with `pi(W) <= 1/2`. `phi_max` maximizes it
//! over local chains leaving `pi` invariant, which is a linear program with
//! one constraint per subset. Subset constraints are added lazily: each round
//! solves the program, enumerates every subset against the optimal matrix,
//! and adds the violated ones. The loop stops when no subset is violated, so
//! the result is the optimum of the full program. For graphs too large to
//! enumerate, [`phi_max_upper`] separates over a fixed subset family and
//! returns an upper bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, NodeSet, MAX_ENUM_NODES};
use crate::lp::{lp_solve, LinearProgram, LpStatus};
use crate::prob::{is_local, leaves_invariant, Dist, StochMatrix};

/// Subsets with `pi(W) <= 1/2 + HALF_TOL` take part in the minimum.
const HALF_TOL: f64 = 1e-12;
/// A subset constraint is violated when the chain's outflow is below the
/// program's `phi` by more than this.
const CUT_TOL: f64 = 1e-9;
/// Violated subsets added per round.
const CUTS_PER_ROUND: usize = 24;
const MAX_ROUNDS: usize = 500;

#[derive(Clone, Debug, Serialize)]
pub struct ConductanceReport {
    pub phi: f64,
    /// Minimizing subset for the reported (or maximizing) matrix.
    pub argmin_subset: Vec<usize>,
    /// The maximizing chain, for `phi_max`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub argmax_matrix: Option<StochMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp_status: Option<LpStatus>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lp_rounds: Option<usize>,
    /// False when `phi` is only an upper bound on the maximum.
    pub exact: bool,
}

fn check_enum_size(n: usize, limit: usize) -> Result<()> {
    if n > limit {
        return Err(Error::CapacityExceeded {
            what: "node count for subset enumeration",
            got: n,
            limit,
        });
    }
    if n < 2 {
        return Err(invalid("conductance needs at least two nodes"));
    }
    Ok(())
}

fn check_pi(pi: &Dist, n: usize) -> Result<()> {
    if pi.len() != n {
        return Err(invalid(format!("pi has {} entries for {n} nodes", pi.len())));
    }
    if let Some(i) = (0..n).find(|&i| pi.get(i) <= 0.0) {
        return Err(invalid(format!("pi must be strictly positive; pi({i}) = {}", pi.get(i))));
    }
    Ok(())
}

/// Outflow fraction for every admissible subset, as `(mask, value)`.
/// Returns the minimizing pair (lowest mask on ties).
fn min_outflow(p: &StochMatrix, pi: &Dist) -> (u64, f64) {
    let n = p.dim();
    let pis: Vec<f64> = pi.as_slice().to_vec();
    (1u64..(1 << n))
        .into_par_iter()
        .filter_map(|w| {
            let mass: f64 = (0..n).filter(|&i| w >> i & 1 == 1).map(|i| pis[i]).sum();
            (mass <= 0.5 + HALF_TOL).then(|| (w, outflow(p, &pis, w, mass)))
        })
        .reduce(
            || (u64::MAX, f64::INFINITY),
            |a, b| {
                if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        )
}

fn outflow(p: &StochMatrix, pi: &[f64], w: u64, mass: f64) -> f64 {
    let n = p.dim();
    let mut out = 0.0;
    for i in (0..n).filter(|&i| w >> i & 1 == 1) {
        let stay: f64 = (0..n).filter(|&j| w >> j & 1 == 1).map(|j| p.get(j, i)).sum();
        out += pi[i] * (1.0 - stay).max(0.0);
    }
    out / mass
}

/// Conductance of a single local chain that leaves `pi` invariant.
pub fn phi_of(p: &StochMatrix, pi: &Dist, g: &Graph) -> Result<ConductanceReport> {
    let n = g.node_count();
    check_enum_size(n, MAX_ENUM_NODES)?;
    check_pi(pi, n)?;
    if p.dim() != n {
        return Err(invalid("matrix dimension differs from graph"));
    }
    if !is_local(g, p)? {
        return Err(invalid("locality: matrix moves weight along a non-edge"));
    }
    if !leaves_invariant(p, pi)? {
        return Err(invalid("invariance: P pi != pi"));
    }
    let (w, phi) = min_outflow(p, pi);
    Ok(ConductanceReport {
        phi,
        argmin_subset: NodeSet::from_mask(n, w).to_vec(),
        argmax_matrix: None,
        lp_status: None,
        lp_rounds: None,
        exact: true,
    })
}

/// Maximum of [`phi_of`] over all local chains leaving `pi` invariant.
pub fn phi_max(g: &Graph, pi: &Dist) -> Result<ConductanceReport> {
    let n = g.node_count();
    check_enum_size(n, MAX_ENUM_NODES)?;
    check_pi(pi, n)?;
    let pis = pi.as_slice().to_vec();
    solve_cut_program(g, pi, true, |p, phi| {
        (1u64..(1 << n))
            .into_par_iter()
            .filter_map(|w| {
                let mass: f64 = (0..n).filter(|&i| w >> i & 1 == 1).map(|i| pis[i]).sum();
                if mass > 0.5 + HALF_TOL {
                    return None;
                }
                let v = outflow(p, &pis, w, mass);
                (v < phi - CUT_TOL).then(|| (NodeSet::from_mask(n, w), v))
            })
            .collect()
    })
}

/// An upper bound on [`phi_max`] for graphs of any size: the same program
/// with subset constraints restricted to prefixes of breadth-first orders
/// from every node. Exact (and delegated to [`phi_max`]) up to 16 nodes.
pub fn phi_max_upper(g: &Graph, pi: &Dist) -> Result<ConductanceReport> {
    let n = g.node_count();
    if n <= MAX_ENUM_NODES {
        return phi_max(g, pi);
    }
    check_pi(pi, n)?;
    let pis = pi.as_slice().to_vec();
    let mut family: Vec<NodeSet> = Vec::new();
    for v in 0..n {
        let mut set = NodeSet::empty(n);
        let mut mass = 0.0;
        for u in bfs_order(g, v) {
            mass += pis[u];
            if mass > 0.5 + HALF_TOL {
                break;
            }
            set.insert(u);
            if !family.contains(&set) {
                family.push(set.clone());
            }
        }
    }
    solve_cut_program(g, pi, false, |p, phi| {
        family
            .par_iter()
            .filter_map(|w| {
                let v = outflow_set(p, &pis, w);
                (v < phi - CUT_TOL).then(|| (w.clone(), v))
            })
            .collect()
    })
}

fn bfs_order(g: &Graph, root: usize) -> Vec<usize> {
    let mut seen = vec![false; g.node_count()];
    let mut order = vec![root];
    seen[root] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for &v in g.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                order.push(v);
            }
        }
    }
    order
}

fn outflow_set(p: &StochMatrix, pi: &[f64], w: &NodeSet) -> f64 {
    let mass: f64 = w.iter().map(|i| pi[i]).sum();
    let mut out = 0.0;
    for i in w.iter() {
        let stay: f64 = w.iter().map(|j| p.get(j, i)).sum();
        out += pi[i] * (1.0 - stay).max(0.0);
    }
    out / mass
}

/// Cutting-plane loop. `separate(P, phi)` returns subsets whose outflow
/// under `P` falls below `phi`.
fn solve_cut_program<F>(g: &Graph, pi: &Dist, exact: bool, separate: F) -> Result<ConductanceReport>
where
    F: Fn(&StochMatrix, f64) -> Vec<(NodeSet, f64)>,
{
    let n = g.node_count();
    // One variable per directed edge (self-loops included), then phi.
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| g.neighbors(i).iter().map(move |&j| (i, j)))
        .collect();
    let nv = arcs.len() + 1;
    let phi_var = arcs.len();

    let mut base = LinearProgram::new(nv);
    base.objective[phi_var] = 1.0;
    base.upper[phi_var] = Some(1.0);
    for col in 0..n {
        let row = (0..nv)
            .map(|k| if k < phi_var && arcs[k].0 == col { 1.0 } else { 0.0 })
            .collect();
        base.add_eq(row, 1.0);
    }
    for target in 0..n {
        let row = (0..nv)
            .map(|k| if k < phi_var && arcs[k].1 == target { pi.get(arcs[k].0) } else { 0.0 })
            .collect();
        base.add_eq(row, pi.get(target));
    }

    let subset_row = |w: &NodeSet| -> Vec<f64> {
        let mass: f64 = w.iter().map(|i| pi.get(i)).sum();
        let mut row = vec![0.0; nv];
        for (k, &(i, j)) in arcs.iter().enumerate() {
            if w.contains(i) && !w.contains(j) {
                row[k] = -pi.get(i) / mass;
            }
        }
        row[phi_var] = 1.0;
        row
    };

    let mut cuts: Vec<NodeSet> = (0..n)
        .filter(|&i| pi.get(i) <= 0.5 + HALF_TOL)
        .map(|i| NodeSet::from_indices(n, &[i]).expect("in range"))
        .collect();

    for round in 1..=MAX_ROUNDS {
        let mut lp = base.clone();
        for w in &cuts {
            lp.add_le(subset_row(w), 0.0);
        }
        let sol = lp_solve(&lp)?;
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible | LpStatus::Unbounded => {
                return Err(Error::Internal(format!(
                    "conductance program reported {:?}; the identity chain is always feasible",
                    sol.status
                )))
            }
            LpStatus::IterationCapped => {
                return Ok(ConductanceReport {
                    phi: sol.x[phi_var],
                    argmin_subset: vec![],
                    argmax_matrix: None,
                    lp_status: Some(LpStatus::IterationCapped),
                    lp_rounds: Some(round),
                    exact: false,
                })
            }
        }
        let phi = sol.x[phi_var];
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (k, &(i, j)) in arcs.iter().enumerate() {
            m[(j, i)] = sol.x[k];
        }
        for i in 0..n {
            let s = m.column(i).sum();
            m.column_mut(i).unscale_mut(s);
        }
        let p = StochMatrix::new(m)?;

        let mut violated = separate(&p, phi);
        if violated.is_empty() {
            let (phi, argmin_subset) = if exact {
                let (w, achieved) = min_outflow(&p, pi);
                (phi.min(achieved.max(phi - CUT_TOL)), NodeSet::from_mask(n, w).to_vec())
            } else {
                (phi, vec![])
            };
            return Ok(ConductanceReport {
                phi,
                argmin_subset,
                argmax_matrix: Some(p),
                lp_status: Some(LpStatus::Optimal),
                lp_rounds: Some(round),
                exact,
            });
        }
        violated.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.to_vec().cmp(&b.0.to_vec())));
        let before = cuts.len();
        for (w, _) in violated.into_iter().take(CUTS_PER_ROUND) {
            if !cuts.contains(&w) {
                cuts.push(w);
            }
        }
        if cuts.len() == before {
            return Err(Error::Internal(
                "cut generation stalled on an already-present constraint".into(),
            ));
        }
    }
    Err(Error::Internal(format!(
        "conductance program did not converge in {MAX_ROUNDS} rounds"
    )))
}

/// Smallest ratio of cut edges to subset size over `|W| <= n/2`. An upper
/// bound on `phi_max` for uniform `pi`.
pub fn edge_expansion(g: &Graph) -> Result<f64> {
    let n = g.node_count();
    check_enum_size(n, MAX_ENUM_NODES)?;
    let best = (1u64..(1 << n))
        .filter(|w| 2 * w.count_ones() as usize <= n)
        .map(|w| {
            let cut: u32 = (0..n)
                .filter(|&i| w >> i & 1 == 1)
                .map(|i| (g.neighbor_mask(i) & !w).count_ones())
                .sum();
            cut as f64 / w.count_ones() as f64
        })
        .fold(f64::INFINITY, f64::min);
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_has_zero_conductance() {
        let g = Graph::dumbbell(3).unwrap();
        let r = phi_of(&StochMatrix::identity(6), &Dist::uniform(6), &g).unwrap();
        assert_eq!(r.phi, 0.0);
    }

    #[test]
    fn swap_on_two_nodes() {
        let g = Graph::complete(2).unwrap();
        let swap = StochMatrix::permutation(&[1, 0]).unwrap();
        let r = phi_of(&swap, &Dist::uniform(2), &g).unwrap();
        assert_abs_diff_eq!(r.phi, 1.0);
        let m = phi_max(&g, &Dist::uniform(2)).unwrap();
        assert_abs_diff_eq!(m.phi, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn preconditions_are_enforced() {
        let g = Graph::path(3).unwrap();
        let swap = StochMatrix::permutation(&[2, 1, 0]).unwrap();
        let err = phi_of(&swap, &Dist::uniform(3), &g).unwrap_err();
        assert!(err.to_string().contains("locality"));
        let pi = Dist::new(vec![0.5, 0.25, 0.25]).unwrap();
        let err = phi_of(&StochMatrix::lazy_walk(&g), &pi, &g).unwrap_err();
        assert!(err.to_string().contains("invariance"));
        let pi0 = Dist::new(vec![0.5, 0.5, 0.0]).unwrap();
        assert!(phi_max(&g, &pi0).is_err());
        assert!(matches!(
            phi_max(&Graph::path(17).unwrap(), &Dist::uniform(17)),
            Err(Error::CapacityExceeded { .. })
        ));
    }

    #[test]
    fn edge_expansion_families() {
        for n in 2..=8 {
            assert_abs_diff_eq!(edge_expansion(&Graph::dumbbell(n).unwrap()).unwrap(), 1.0 / n as f64);
        }
        for n in 2..=10 {
            let want = (n - n / 2) as f64;
            assert_abs_diff_eq!(edge_expansion(&Graph::complete(n).unwrap()).unwrap(), want);
        }
        for m in 3..=12 {
            let want = 2.0 / (m / 2) as f64;
            assert_abs_diff_eq!(edge_expansion(&Graph::cycle(m).unwrap()).unwrap(), want);
        }
    }

    #[test]
    fn cycle4_optimum_is_one_half() {
        // Summing the four arc-cut constraints bounds 8 phi by the total
        // off-diagonal mass, at most 4; the rotation attains 1/2.
        let g = Graph::cycle(4).unwrap();
        let r = phi_max(&g, &Dist::uniform(4)).unwrap();
        assert_abs_diff_eq!(r.phi, 0.5, epsilon = 1e-9);
        let shift = phi_of(&StochMatrix::shift(4), &Dist::uniform(4), &g).unwrap();
        assert_abs_diff_eq!(shift.phi, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn relaxation_bounds_the_optimum() {
        let g = Graph::cycle(12).unwrap();
        let pi = Dist::uniform(12);
        let exact = phi_max(&g, &pi).unwrap();
        assert!(exact.exact);
        let big = Graph::cycle(24).unwrap();
        let upper = phi_max_upper(&big, &Dist::uniform(24)).unwrap();
        assert!(!upper.exact);
        // Halving a cycle cuts two edges, so the bound scales like 1/m.
        assert!(upper.phi <= 4.0 / 24.0 + 1e-9, "{}", upper.phi);
        assert!(upper.phi > 0.0);
        assert!(exact.phi <= 4.0 / 12.0 + 1e-9);
    }
}
