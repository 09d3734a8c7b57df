//! Distributions over nodes and column-stochastic matrices.
//!
//! Orientation: entry `(j, i)` of a [`StochMatrix`] is the weight moved from
//! node `i` to node `j`, so matrices act on column vectors and every column
//! sums to one.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, NodeSet};

/// Allowed deviation of a total mass from one.
pub const SUM_TOL: f64 = 1e-9;
/// Negative entries above `-ENTRY_TOL` are treated as roundoff and clamped.
pub const ENTRY_TOL: f64 = 1e-12;
/// Threshold on the plain L1 distance that defines convergence.
pub const MIXING_THRESHOLD: f64 = 0.5;

/// A probability distribution over nodes `0..n`.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Dist(Vec<f64>);

impl fmt::Debug for Dist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Dist").field(&self.0).finish()
    }
}

impl TryFrom<Vec<f64>> for Dist {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Dist::new(v)
    }
}

impl From<Dist> for Vec<f64> {
    fn from(d: Dist) -> Self {
        d.0
    }
}

impl Dist {
    pub fn new(mut weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("distribution over zero nodes"));
        }
        for (i, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() || *w < -ENTRY_TOL {
                return Err(invalid(format!("weight {w} at node {i} is not a probability")));
            }
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(invalid(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    /// Builds a distribution from raw weights after clamping roundoff, without
    /// the unit-sum check. Used for lifted marginals assembled from
    /// already-valid pieces.
    pub(crate) fn from_raw(mut weights: Vec<f64>) -> Self {
        for w in &mut weights {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        Self(weights)
    }

    /// Scales nonnegative weights to unit sum.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(invalid("cannot normalize weights"));
        }
        Dist::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn dirac(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Uniform over the members of `w`.
    pub fn uniform_on(w: &NodeSet) -> Result<Self> {
        let k = w.len();
        if k == 0 {
            return Err(Error::DegenerateConditioning);
        }
        Ok(Self(
            (0..w.universe())
                .map(|i| if w.contains(i) { 1.0 / k as f64 } else { 0.0 })
                .collect(),
        ))
    }

    /// A random distribution with i.i.d. exponential weights (uniform on the simplex).
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let w: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let s: f64 = w.iter().sum();
        Self(w.into_iter().map(|x| x / s).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `p * self + (1 - p) * other`.
    pub fn mix(&self, other: &Dist, p: f64) -> Result<Dist> {
        same_len(self.len(), other.len())?;
        Ok(Dist(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| p * a + (1.0 - p) * b)
                .collect(),
        ))
    }

    pub fn support(&self) -> NodeSet {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.0[i] > 0.0).collect();
        NodeSet::from_indices(self.len(), &idx).expect("indices in range")
    }
}

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(invalid(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Plain (not halved) L1 distance.
pub fn l1_distance(x: &Dist, y: &Dist) -> Result<f64> {
    same_len(x.len(), y.len())?;
    Ok(l1(x.as_slice(), y.as_slice()))
}

pub(crate) fn l1(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

/// Probability of `w` under `x`.
pub fn mass(x: &Dist, w: &NodeSet) -> Result<f64> {
    same_len(x.len(), w.universe())?;
    Ok(w.iter().map(|i| x.0[i]).sum())
}

/// `x` conditioned on lying in `w`.
pub fn condition(x: &Dist, w: &NodeSet) -> Result<Dist> {
    let m = mass(x, w)?;
    if m <= 0.0 {
        return Err(Error::DegenerateConditioning);
    }
    Ok(Dist(
        (0..x.len())
            .map(|i| if w.contains(i) { x.0[i] / m } else { 0.0 })
            .collect(),
    ))
}

/// One step `P x`.
pub fn apply(p: &StochMatrix, x: &Dist) -> Result<Dist> {
    same_len(p.dim(), x.len())?;
    Ok(Dist::from_raw(p.mul_vec(x.as_slice())))
}

/// Whether `P pi = pi` within `SUM_TOL` in L1.
pub fn leaves_invariant(p: &StochMatrix, pi: &Dist) -> Result<bool> {
    Ok(l1_distance(&apply(p, pi)?, pi)? <= SUM_TOL)
}

/// Whether `P` only moves weight along edges of `g`.
pub fn is_local(g: &Graph, p: &StochMatrix) -> Result<bool> {
    same_len(g.node_count(), p.dim())?;
    let n = p.dim();
    Ok((0..n).all(|i| (0..n).all(|j| g.has_edge(i, j) || p.get(j, i) <= ENTRY_TOL)))
}

/// A square column-stochastic matrix.
#[derive(Clone, PartialEq)]
pub struct StochMatrix {
    m: DMatrix<f64>,
}

impl fmt::Debug for StochMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StochMatrix")
            .field("rows", &self.rows())
            .finish()
    }
}

impl StochMatrix {
    /// Validates columns of `m`: entries nonnegative up to roundoff, columns
    /// summing to one within `SUM_TOL`.
    pub fn new(mut m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(invalid(format!(
                "stochastic matrix must be square and nonempty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for i in 0..m.ncols() {
            let mut sum = 0.0;
            for j in 0..m.nrows() {
                let v = m[(j, i)];
                if !v.is_finite() || v < -ENTRY_TOL {
                    return Err(invalid(format!("entry ({j},{i}) = {v} is negative")));
                }
                if v < 0.0 {
                    m[(j, i)] = 0.0;
                }
                sum += m[(j, i)];
            }
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(invalid(format!("column {i} sums to {sum}")));
            }
        }
        Ok(Self { m })
    }

    /// Row-major input: `rows[j][i]` is the weight moved from `i` to `j`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(invalid("matrix rows have inconsistent lengths"));
        }
        Self::new(DMatrix::from_fn(n, n, |j, i| rows[j][i]))
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|j| (0..self.dim()).map(|i| self.m[(j, i)]).collect())
            .collect()
    }

    pub fn identity(n: usize) -> Self {
        Self {
            m: DMatrix::identity(n, n),
        }
    }

    /// Every column equal to the uniform distribution.
    pub fn uniform(n: usize) -> Self {
        Self {
            m: DMatrix::from_element(n, n, 1.0 / n as f64),
        }
    }

    /// Moves node `i` to `(i + 1) mod n`.
    pub fn shift(n: usize) -> Self {
        Self::permutation(&(0..n).map(|i| (i + 1) % n).collect::<Vec<_>>())
            .expect("shift is a permutation")
    }

    /// Moves node `i` to `target[i]`.
    pub fn permutation(target: &[usize]) -> Result<Self> {
        let n = target.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, &j) in target.iter().enumerate() {
            if j >= n {
                return Err(invalid("permutation target out of range"));
            }
            m[(j, i)] = 1.0;
        }
        Self::new(m)
    }

    /// Lazy Metropolis walk towards the uniform distribution: each neighbor
    /// `j != i` receives `1 / (2 max(deg i, deg j))`, the rest stays. The
    /// matrix is symmetric, hence doubly stochastic.
    pub fn lazy_walk(g: &Graph) -> Self {
        let n = g.node_count();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut out = 0.0;
            for &j in g.neighbors(i) {
                if j != i {
                    let w = 0.5 / g.degree(i).max(g.degree(j)) as f64;
                    m[(j, i)] = w;
                    out += w;
                }
            }
            m[(i, i)] = 1.0 - out;
        }
        Self { m }
    }

    /// Metropolis-Hastings chain for target `pi` with symmetric proposal
    /// weights `weight(i, j)` on edges. `laziness` of the mass always stays.
    pub fn metropolis(
        g: &Graph,
        pi: &Dist,
        laziness: f64,
        mut weight: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let n = g.node_count();
        same_len(n, pi.len())?;
        let dmax = (0..n).map(|i| g.degree(i)).max().unwrap_or(0).max(1) as f64;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut out = 0.0;
            for &j in g.neighbors(i) {
                if j == i {
                    continue;
                }
                let q = (1.0 - laziness) * weight(i.min(j), i.max(j)) / dmax;
                let w = q * (pi.get(j) / pi.get(i)).min(1.0);
                m[(j, i)] = w;
                out += w;
            }
            m[(i, i)] = 1.0 - out;
        }
        Self::new(m)
    }

    /// A random local chain leaving `pi` invariant (random symmetric
    /// Metropolis proposal weights in `[0, 1)`).
    pub fn random_invariant<R: Rng + ?Sized>(g: &Graph, pi: &Dist, rng: &mut R) -> Result<Self> {
        let n = g.node_count();
        let w: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        let lazy = rng.gen::<f64>() * 0.5;
        Self::metropolis(g, pi, lazy, |i, j| w[i * n + j])
    }

    /// A random local column-stochastic matrix, not tied to any invariant
    /// distribution.
    pub fn random_local<R: Rng + ?Sized>(g: &Graph, rng: &mut R) -> Self {
        let n = g.node_count();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let nb = g.neighbors(i);
            let col = Dist::random(nb.len(), rng);
            for (k, &j) in nb.iter().enumerate() {
                m[(j, i)] = col.get(k);
            }
        }
        Self { m }
    }

    /// `sum_k weights[k] * mats[k]`; weights must be a probability vector.
    pub fn convex_combination(mats: &[&StochMatrix], weights: &[f64]) -> Result<Self> {
        let first = mats.first().ok_or_else(|| invalid("empty combination"))?;
        same_len(mats.len(), weights.len())?;
        let mut m = DMatrix::zeros(first.dim(), first.dim());
        for (p, &w) in mats.iter().zip(weights) {
            same_len(first.dim(), p.dim())?;
            m += &p.m * w;
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    /// Weight moved from `from` to `to`.
    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.m[(to, from)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `self * other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &StochMatrix) -> Result<StochMatrix> {
        same_len(self.dim(), other.dim())?;
        Ok(Self {
            m: &self.m * &other.m,
        })
    }

    pub fn transpose(&self) -> DMatrix<f64> {
        self.m.transpose()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..i).all(|j| (self.m[(i, j)] - self.m[(j, i)]).abs() <= tol))
    }

    pub(crate) fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let v = &self.m * DVector::from_column_slice(x);
        v.iter().copied().collect()
    }

    /// Row-major CSV: first line `n`, then `n` comma-separated rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", self.dim());
        for row in self.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let n: usize = lines
            .next()
            .ok_or_else(|| invalid("empty matrix CSV"))?
            .parse()
            .map_err(|_| invalid("matrix CSV header must be the dimension"))?;
        let rows = lines
            .map(|l| {
                l.split(',')
                    .map(|c| c.trim().parse::<f64>().map_err(|_| invalid(format!("bad cell {c:?}"))))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != n {
            return Err(invalid(format!("expected {n} rows, found {}", rows.len())));
        }
        Self::from_rows(&rows)
    }
}

impl Serialize for StochMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for StochMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        StochMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Column-stochastic matrix stored by columns, for lifted state spaces where
/// each column has only a handful of nonzeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseStoch {
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseStoch {
    /// `cols[i]` lists `(j, weight moved from i to j)`; duplicates are summed.
    pub fn new(cols: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = cols.len();
        if n == 0 {
            return Err(invalid("empty sparse matrix"));
        }
        let mut out = Vec::with_capacity(n);
        for (i, col) in cols.into_iter().enumerate() {
            let mut col: Vec<(usize, f64)> = col;
            col.sort_by_key(|e| e.0);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for (j, v) in col {
                if j >= n {
                    return Err(invalid(format!("entry ({j},{i}) out of range")));
                }
                if !v.is_finite() || v < -ENTRY_TOL {
                    return Err(invalid(format!("entry ({j},{i}) = {v} is negative")));
                }
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v.max(0.0),
                    _ => merged.push((j, v.max(0.0))),
                }
            }
            merged.retain(|e| e.1 != 0.0);
            let sum: f64 = merged.iter().map(|e| e.1).sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(invalid(format!("column {i} sums to {sum}")));
            }
            out.push(merged);
        }
        Ok(Self { cols: out })
    }

    pub fn from_dense(p: &StochMatrix) -> Self {
        let n = p.dim();
        Self {
            cols: (0..n)
                .map(|i| {
                    (0..n)
                        .filter(|&j| p.get(j, i) != 0.0)
                        .map(|j| (j, p.get(j, i)))
                        .collect()
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, i: usize) -> &[(usize, f64)] {
        &self.cols[i]
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn get(&self, to: usize, from: usize) -> f64 {
        self.cols[from]
            .iter()
            .find(|e| e.0 == to)
            .map_or(0.0, |e| e.1)
    }

    /// `M x` on a raw weight vector.
    pub fn apply_raw(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (i, col) in self.cols.iter().enumerate() {
            let xi = x[i];
            if xi != 0.0 {
                for &(j, v) in col {
                    out[j] += v * xi;
                }
            }
        }
        out
    }

    pub fn apply(&self, x: &Dist) -> Result<Dist> {
        same_len(self.dim(), x.len())?;
        Ok(Dist::from_raw(self.apply_raw(x.as_slice())))
    }

    pub fn is_local(&self, g: &Graph) -> Result<bool> {
        same_len(g.node_count(), self.dim())?;
        Ok(self
            .cols
            .iter()
            .enumerate()
            .all(|(i, col)| col.iter().all(|&(j, v)| g.has_edge(i, j) || v <= ENTRY_TOL)))
    }

    /// `(to, from, weight)` triplets in column order.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.cols
            .iter()
            .enumerate()
            .flat_map(|(i, col)| col.iter().map(move |&(j, v)| (j, i, v)))
            .collect()
    }

    pub fn to_dense(&self) -> StochMatrix {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (j, i, v) in self.triplets() {
            m[(j, i)] = v;
        }
        StochMatrix { m }
    }

    #[cfg(test)]
    pub(crate) fn set_entry(&mut self, to: usize, from: usize, v: f64) {
        let col = &mut self.cols[from];
        match col.iter_mut().find(|e| e.0 == to) {
            Some(e) => e.1 = v,
            None => col.push((to, v)),
        }
    }
}
