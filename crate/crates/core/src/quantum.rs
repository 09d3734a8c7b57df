//! Discrete-time coined quantum walks on the cycle, simulated on density
//! matrices over the `(node, coin)` basis.
//!
//! Basis index is `2 * node + coin`. Coin 0 moves towards `node + 1`,
//! coin 1 towards `node - 1`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::Graph;
use crate::prob::Dist;
use crate::systems::EvolutionSystem;

pub const HERMITIAN_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-9;
pub const PSD_TOL: f64 = 1e-9;
pub const UNITARY_TOL: f64 = 1e-10;

type CMat = DMatrix<Complex64>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// A 2x2 coin, `coin[row][col]`.
pub type Coin = [[Complex64; 2]; 2];

pub fn hadamard() -> Coin {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]
}

pub fn identity_coin() -> Coin {
    [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]]
}

/// Coin state every node starts in: `(|0> + i|1>) / sqrt 2`.
pub fn initial_coin() -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    [c(h, 0.0), c(0.0, h)]
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    rho: CMat,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positive semidefiniteness.
    pub fn new(rho: CMat) -> Result<Self> {
        if !rho.is_square() || rho.nrows() == 0 {
            return Err(invalid("density matrix must be square and nonempty"));
        }
        let d = DensityMatrix { rho };
        if d.hermiticity_error() > HERMITIAN_TOL {
            return Err(invalid("density matrix is not Hermitian"));
        }
        if (d.trace() - 1.0).abs() > TRACE_TOL {
            return Err(invalid(format!("density matrix has trace {}", d.trace())));
        }
        let min_ev = d.min_eigenvalue();
        if min_ev < -PSD_TOL {
            return Err(invalid(format!("density matrix has eigenvalue {min_ev}")));
        }
        Ok(d)
    }

    /// `|psi><psi|` for a normalized amplitude vector.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let v = nalgebra::DVector::from_column_slice(psi);
        Self::new(&v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest entry of `rho - rho^dagger`.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.rho + self.rho.adjoint()).scale(0.5);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Rank up to `tol` on the eigenvalues.
    pub fn rank(&self, tol: f64) -> usize {
        let h = (&self.rho + self.rho.adjoint()).scale(0.5);
        h.symmetric_eigenvalues().iter().filter(|&&v| v > tol).count()
    }
}

/// A unitary on the lifted basis whose nonzero entries only connect basis
/// states over adjacent base nodes.
#[derive(Clone, Debug)]
pub struct UnitaryWalk {
    u: CMat,
    partition: Vec<usize>,
    graph: Graph,
}

impl UnitaryWalk {
    pub fn new(u: CMat, partition: Vec<usize>, graph: &Graph) -> Result<Self> {
        let d = partition.len();
        if u.nrows() != d || u.ncols() != d {
            return Err(invalid("unitary does not match the partition"));
        }
        if let Some(&b) = partition.iter().find(|&&b| b >= graph.node_count()) {
            return Err(invalid(format!("partition target {b} out of range")));
        }
        let err = (u.adjoint() * &u - CMat::identity(d, d))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if err > UNITARY_TOL {
            return Err(invalid(format!("matrix is not unitary (deviation {err:e})")));
        }
        for a in 0..d {
            for b in 0..d {
                if u[(a, b)].norm() > 1e-12 && !graph.has_edge(partition[b], partition[a]) {
                    return Err(Error::AxiomViolation(format!(
                        "unitary couples basis states {b} -> {a} over a non-edge"
                    )));
                }
            }
        }
        Ok(Self {
            u,
            partition,
            graph: graph.clone(),
        })
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn as_matrix(&self) -> &CMat {
        &self.u
    }

    pub fn partition(&self) -> &[usize] {
        &self.partition
    }
}

/// `U rho U^dagger`, re-Hermitized.
pub fn qw_step(rho: &DensityMatrix, walk: &UnitaryWalk) -> Result<DensityMatrix> {
    if rho.dim() != walk.dim() {
        return Err(invalid("density matrix and unitary dimensions differ"));
    }
    Ok(DensityMatrix {
        rho: step_raw(&rho.rho, &walk.u),
    })
}

fn step_raw(rho: &CMat, u: &CMat) -> CMat {
    let next = u * rho * u.adjoint();
    (&next + next.adjoint()).scale(0.5)
}

/// Diagonal of `rho` summed over each node's basis states.
pub fn marginals(rho: &DensityMatrix, partition: &[usize], n: usize) -> Result<Dist> {
    if partition.len() != rho.dim() {
        return Err(invalid("partition does not match the density matrix"));
    }
    let mut out = vec![0.0; n];
    for (a, &b) in partition.iter().enumerate() {
        if b >= n {
            return Err(invalid(format!("partition target {b} out of range")));
        }
        out[b] += rho.rho[(a, a)].re;
    }
    Dist::new(out)
}

/// The coined walk as an evolution system. Node `i` initializes to the
/// pure state `|i> (|0> + i|1>) / sqrt 2`, and a node distribution to the
/// matching mixture of those pure states.
#[derive(Clone, Debug)]
pub struct CoinedWalk {
    walk: UnitaryWalk,
    coin: Coin,
    pi: Dist,
}

pub fn make_coined_walk(g: &Graph, coin: Coin) -> Result<CoinedWalk> {
    if !g.is_canonical_cycle() {
        return Err(Error::Unsupported(
            "coined walks are only implemented on cycle graphs".into(),
        ));
    }
    let m = g.node_count();
    let mut u = CMat::zeros(2 * m, 2 * m);
    for i in 0..m {
        let up = (i + 1) % m;
        let down = (i + m - 1) % m;
        for z in 0..2 {
            u[(2 * up, 2 * i + z)] += coin[0][z];
            u[(2 * down + 1, 2 * i + z)] += coin[1][z];
        }
    }
    let partition = (0..2 * m).map(|a| a / 2).collect();
    let walk = UnitaryWalk::new(u, partition, g)
        .map_err(|e| invalid(format!("coin rejected: {e}")))?;
    Ok(CoinedWalk {
        walk,
        coin,
        pi: Dist::uniform(m),
    })
}

impl CoinedWalk {
    pub fn walk(&self) -> &UnitaryWalk {
        &self.walk
    }

    pub fn coin(&self) -> Coin {
        self.coin
    }

    pub fn initialize(&self, x0: &Dist) -> Result<DensityMatrix> {
        let m = self.pi.len();
        if x0.len() != m {
            return Err(invalid("initial distribution does not match the cycle"));
        }
        let psi = initial_coin();
        let mut rho = CMat::zeros(2 * m, 2 * m);
        for i in 0..m {
            let w = x0.get(i);
            for a in 0..2 {
                for b in 0..2 {
                    rho[(2 * i + a, 2 * i + b)] = psi[a] * psi[b].conj() * w;
                }
            }
        }
        Ok(DensityMatrix { rho })
    }

    /// Density matrices `rho_0..=rho_steps` from `x0`.
    pub fn density_trajectory(&self, x0: &Dist, steps: usize) -> Result<Vec<DensityMatrix>> {
        let mut rho = self.initialize(x0)?;
        let mut out = Vec::with_capacity(steps + 1);
        out.push(rho.clone());
        for _ in 0..steps {
            rho = qw_step(&rho, &self.walk)?;
            out.push(rho.clone());
        }
        Ok(out)
    }
}

impl EvolutionSystem for CoinedWalk {
    fn kind(&self) -> &'static str {
        "coined_cycle"
    }

    fn graph(&self) -> &Graph {
        &self.walk.graph
    }

    fn limit(&self) -> &Dist {
        &self.pi
    }

    fn run(&self, x0: &Dist, steps: usize, visit: &mut dyn FnMut(usize, &Dist)) -> Result<()> {
        let m = self.pi.len();
        let mut rho = self.initialize(x0)?;
        visit(0, x0);
        for t in 1..=steps {
            rho = qw_step(&rho, &self.walk)?;
            visit(t, &marginals(&rho, &self.walk.partition, m)?);
        }
        Ok(())
    }
}

/// Coin as written in walk specs: four `[re, im]` pairs in row-major order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoinJson(pub [[f64; 2]; 4]);

impl From<CoinJson> for Coin {
    fn from(j: CoinJson) -> Coin {
        let z = |k: usize| c(j.0[k][0], j.0[k][1]);
        [[z(0), z(1)], [z(2), z(3)]]
    }
}

impl From<Coin> for CoinJson {
    fn from(coin: Coin) -> CoinJson {
        let flat = [coin[0][0], coin[0][1], coin[1][0], coin[1][1]];
        CoinJson(flat.map(|z| [z.re, z.im]))
    }
}
