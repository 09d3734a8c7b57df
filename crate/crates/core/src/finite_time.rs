//! Finite-time averaging: sequences of symmetric local stochastic matrices
//! whose ordered product is the rank-one averaging matrix.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use crate::conductance::phi_max;
use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::prob::{is_local, Dist, StochMatrix};
use crate::systems::eigenvalues;

/// Eigenvalues at most this large in modulus count as zero.
pub const RANK_ONE_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiniteTimeReport {
    pub length: usize,
    pub rank_one: bool,
    /// Eigenvalue moduli of the product, largest first.
    pub eigenvalue_moduli: Vec<f64>,
    pub phi: f64,
    pub bound: f64,
    /// `length >= 1 / (8 phi)`; only meaningful for rank-one products.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub satisfies_bound: Option<bool>,
    pub message: String,
}

fn check_sequence(mats: &[StochMatrix], g: &Graph) -> Result<()> {
    if mats.is_empty() {
        return Err(invalid("empty matrix sequence"));
    }
    for (k, p) in mats.iter().enumerate() {
        if p.dim() != g.node_count() {
            return Err(invalid(format!("matrix {k} has the wrong dimension")));
        }
        if !p.is_symmetric(1e-12) {
            return Err(Error::AxiomViolation(format!("matrix {k} is not symmetric")));
        }
        if !is_local(g, p)? {
            return Err(Error::AxiomViolation(format!("matrix {k} is not local")));
        }
    }
    Ok(())
}

/// `P_L ... P_1` for the sequence `[P_1, ..., P_L]`.
pub fn ordered_product(mats: &[StochMatrix]) -> Result<StochMatrix> {
    let (first, rest) = mats.split_first().ok_or_else(|| invalid("empty matrix sequence"))?;
    rest.iter().try_fold(first.clone(), |acc, p| p.compose(&acc))
}

fn product_moduli(prod: &StochMatrix) -> Vec<f64> {
    let mut moduli: Vec<f64> = eigenvalues(prod.as_matrix()).iter().map(|z| z.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    moduli
}

/// Whether all but one eigenvalue vanish and the survivor is 1 with the
/// all-ones eigenvector.
fn is_rank_one(prod: &StochMatrix, moduli: &[f64]) -> bool {
    let n = prod.dim();
    let small = moduli.iter().skip(1).all(|&m| m <= RANK_ONE_TOL);
    let ones = vec![1.0; n];
    let fixed = prod.mul_vec(&ones).iter().all(|v| (v - 1.0).abs() <= 1e-9);
    small && (moduli[0] - 1.0).abs() <= 1e-9 && fixed
}

/// Checks whether the product of `mats` reaches the averaging matrix and,
/// if so, compares the length with `1 / (8 phi)` for the uniform limit.
pub fn finite_time_check(mats: &[StochMatrix], g: &Graph) -> Result<FiniteTimeReport> {
    check_sequence(mats, g)?;
    let phi = phi_max(g, &Dist::uniform(g.node_count()))?.phi;
    Ok(report_with_phi(mats, phi))
}

fn report_with_phi(mats: &[StochMatrix], phi: f64) -> FiniteTimeReport {
    let prod = ordered_product(mats).expect("validated sequence");
    let moduli = product_moduli(&prod);
    let rank_one = is_rank_one(&prod, &moduli);
    let bound = 1.0 / (8.0 * phi);
    let length = mats.len();
    let satisfies_bound = rank_one.then_some(length as f64 >= bound);
    let message = match satisfies_bound {
        None => "no finite-time certificate".to_string(),
        Some(true) => format!("rank-one product of length {length} >= bound {bound:.4}"),
        Some(false) => format!("rank-one product of length {length} < bound {bound:.4}"),
    };
    FiniteTimeReport {
        length,
        rank_one,
        eigenvalue_moduli: moduli,
        phi,
        bound,
        satisfies_bound,
        message,
    }
}

/// Averages the endpoints of every edge in `pairs` with weight `a`, leaving
/// other nodes alone. Pairs must be disjoint.
pub fn gossip_matrix(n: usize, pairs: &[(usize, usize)], a: f64) -> Result<StochMatrix> {
    let mut m = nalgebra::DMatrix::identity(n, n);
    let mut used = vec![false; n];
    for &(i, j) in pairs {
        if i == j || i >= n || j >= n || used[i] || used[j] {
            return Err(invalid(format!("pair ({i}, {j}) is not part of a matching")));
        }
        used[i] = true;
        used[j] = true;
        m[(i, i)] = 1.0 - a;
        m[(j, j)] = 1.0 - a;
        m[(i, j)] = a;
        m[(j, i)] = a;
    }
    StochMatrix::new(m)
}

/// A random matching of non-loop edges, each kept with probability 3/4.
fn random_matching<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = g.edge_list().into_iter().filter(|(i, j)| i != j).collect();
    edges.shuffle(rng);
    let mut used = vec![false; g.node_count()];
    let mut out = Vec::new();
    for (i, j) in edges {
        if !used[i] && !used[j] && rng.gen_bool(0.75) {
            used[i] = true;
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchReport {
    pub trials: usize,
    pub max_len: usize,
    pub phi: f64,
    pub bound: f64,
    pub rank_one_found: usize,
    pub shortest_rank_one: Option<usize>,
    /// Rank-one sequences shorter than the bound. Expected to stay zero.
    pub violations: usize,
}

/// Samples `trials` sequences of random matching-gossip matrices with
/// lengths in `1..=max_len`. Half the matrices use the exact weight 1/2,
/// which is what finite-time averaging needs.
pub fn random_search<R: Rng + ?Sized>(
    g: &Graph,
    trials: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<SearchReport> {
    if max_len == 0 {
        return Err(invalid("max_len must be at least 1"));
    }
    let n = g.node_count();
    let phi = phi_max(g, &Dist::uniform(n))?.phi;
    let bound = 1.0 / (8.0 * phi);
    let mut rank_one_found = 0;
    let mut shortest: Option<usize> = None;
    let mut violations = 0;
    for _ in 0..trials {
        let len = rng.gen_range(1..=max_len);
        let mats = (0..len)
            .map(|_| {
                let a = if rng.gen_bool(0.5) { 0.5 } else { rng.gen_range(0.05..0.5) };
                gossip_matrix(n, &random_matching(g, rng), a)
            })
            .collect::<Result<Vec<_>>>()?;
        check_sequence(&mats, g)?;
        let rep = report_with_phi(&mats, phi);
        if rep.rank_one {
            rank_one_found += 1;
            shortest = Some(shortest.map_or(len, |s| s.min(len)));
            if rep.satisfies_bound == Some(false) {
                violations += 1;
            }
        }
    }
    Ok(SearchReport {
        trials,
        max_len,
        phi,
        bound,
        rank_one_found,
        shortest_rank_one: shortest,
        violations,
    })
}
