//! JSON descriptions of graphs, distributions and systems.
//!
//! ```json
//! {"kind": "homogeneous", "graph": {"family": "dumbbell", "size": 6}, "matrix": "lazy_walk"}
//! {"kind": "dhn", "m": 32, "p_switch": 0.03125, "switch": "in_place"}
//! {"kind": "coined_cycle", "m": 4}
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::finite_time::gossip_matrix;
use crate::graph::{Family, Graph, GraphJson};
use crate::prob::{Dist, StochMatrix};
use crate::quantum::{hadamard, make_coined_walk, CoinJson};
use crate::systems::{
    make_cesaro, make_dhn_with, make_homogeneous, make_inhomogeneous, mixture_rule, tour_lift,
    DhnSwitch, EvolutionSystem,
};

/// A matrix given by name or by rows (`rows[j][i]` is the weight moved
/// from `i` to `j`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

impl MatrixSpec {
    /// Names: `lazy_walk`, `identity`, `uniform`, `shift`, `even_matching`,
    /// `odd_matching` (averaging across edges `(2k, 2k+1)` or
    /// `(2k+1, 2k+2)` of the node order, weight 1/2) and `metropolis`
    /// (lazy Metropolis chain for `pi`).
    pub fn build(&self, g: &Graph, pi: &Dist) -> Result<StochMatrix> {
        let n = g.node_count();
        match self {
            MatrixSpec::Rows(rows) => StochMatrix::from_rows(rows),
            MatrixSpec::Named(name) => match name.as_str() {
                "lazy_walk" => Ok(StochMatrix::lazy_walk(g)),
                "identity" => Ok(StochMatrix::identity(n)),
                "uniform" => Ok(StochMatrix::uniform(n)),
                "shift" => Ok(StochMatrix::shift(n)),
                "metropolis" => StochMatrix::metropolis(g, pi, 0.5, |_, _| 1.0),
                "even_matching" | "odd_matching" => {
                    let first = usize::from(name == "odd_matching");
                    let pairs: Vec<(usize, usize)> = (first..n)
                        .step_by(2)
                        .map(|i| (i, (i + 1) % n))
                        .filter(|&(i, j)| i != j && g.has_edge(i, j) && (j != 0 || n % 2 == 0))
                        .collect();
                    gossip_matrix(n, &pairs, 0.5)
                }
                other => Err(invalid(format!("unknown matrix name '{other}'"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemKind {
    Homogeneous {
        matrix: MatrixSpec,
    },
    Inhomogeneous {
        matrices: Vec<MatrixSpec>,
        period: Option<usize>,
    },
    Cesaro {
        matrix: MatrixSpec,
    },
    Dhn {
        m: usize,
        p_switch: f64,
        #[serde(default = "default_switch")]
        switch: DhnSwitch,
    },
    /// Persistent walk along a closed tour of base nodes.
    Lifted {
        tour: Vec<usize>,
        p_switch: f64,
        #[serde(default = "default_switch")]
        switch: DhnSwitch,
    },
    StateDependent {
        a: MatrixSpec,
        b: MatrixSpec,
        probe_node: usize,
    },
    CoinedCycle {
        m: usize,
        coin: Option<CoinJson>,
    },
}

fn default_switch() -> DhnSwitch {
    DhnSwitch::Move
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(flatten)]
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi: Option<Vec<f64>>,
}

/// A constructed system together with the graph and limit it was built on.
#[derive(Clone)]
pub struct BuiltSystem {
    pub system: Arc<dyn EvolutionSystem>,
    pub graph: Graph,
    pub pi: Dist,
}

impl SystemSpec {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SystemKind::Homogeneous { .. } => "homogeneous",
            SystemKind::Inhomogeneous { .. } => "inhomogeneous",
            SystemKind::Cesaro { .. } => "cesaro",
            SystemKind::Dhn { .. } => "dhn",
            SystemKind::Lifted { .. } => "lifted",
            SystemKind::StateDependent { .. } => "state_dependent",
            SystemKind::CoinedCycle { .. } => "coined_cycle",
        }
    }

    /// Builds the system. `graph` and `pi` override the spec's own fields;
    /// cycle-based kinds derive their graph from `m`.
    pub fn build(&self, graph: Option<&Graph>, pi: Option<&Dist>) -> Result<BuiltSystem> {
        let pi_override_given = pi.is_some();
        let own = match (&self.kind, graph, &self.graph) {
            (_, Some(g), _) => g.clone(),
            (_, None, Some(gj)) => gj.build()?,
            (SystemKind::Dhn { m, .. } | SystemKind::CoinedCycle { m, .. }, None, None) => {
                Graph::cycle(*m)?
            }
            _ => return Err(invalid(format!("{} system needs a graph", self.kind_name()))),
        };
        let n = own.node_count();
        let pi = match (pi, &self.pi) {
            (Some(p), _) => p.clone(),
            (None, Some(v)) => Dist::new(v.clone())?,
            (None, None) => Dist::uniform(n),
        };
        let system: Arc<dyn EvolutionSystem> = match &self.kind {
            SystemKind::Homogeneous { matrix } => {
                Arc::new(make_homogeneous(&own, matrix.build(&own, &pi)?, pi.clone())?)
            }
            SystemKind::Cesaro { matrix } => {
                Arc::new(make_cesaro(&own, matrix.build(&own, &pi)?, pi.clone())?)
            }
            SystemKind::Inhomogeneous { matrices, period } => {
                let mats = matrices
                    .iter()
                    .map(|m| m.build(&own, &pi))
                    .collect::<Result<Vec<_>>>()?;
                let period = period.unwrap_or(mats.len());
                Arc::new(make_inhomogeneous(&own, mats, period, pi.clone())?)
            }
            SystemKind::Dhn { m, p_switch, switch } => {
                let sys = make_dhn_with(*m, *p_switch, *switch)?;
                require_same_graph(&own, sys.graph())?;
                Arc::new(sys)
            }
            SystemKind::Lifted {
                tour,
                p_switch,
                switch,
            } => Arc::new(tour_lift(&own, tour, *p_switch, *switch)?),
            SystemKind::StateDependent { a, b, probe_node } => Arc::new(mixture_rule(
                &own,
                pi.clone(),
                a.build(&own, &pi)?,
                b.build(&own, &pi)?,
                *probe_node,
            )?),
            SystemKind::CoinedCycle { m, coin } => {
                let coin = coin.clone().map_or_else(hadamard, Into::into);
                let sys = make_coined_walk(&own, coin)?;
                if sys.graph().node_count() != *m {
                    return Err(invalid("coined walk size differs from the graph"));
                }
                Arc::new(sys)
            }
        };
        let declared = pi_override_given || self.pi.is_some();
        if declared && l1_gap(system.limit(), &pi) > 1e-12 {
            return Err(invalid("declared pi differs from the system's limit"));
        }
        let pi = system.limit().clone();
        Ok(BuiltSystem {
            system,
            graph: own,
            pi,
        })
    }
}

fn l1_gap(a: &Dist, b: &Dist) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    crate::prob::l1(a.as_slice(), b.as_slice())
}

fn require_same_graph(given: &Graph, own: &Graph) -> Result<()> {
    if given != own {
        return Err(invalid("system is defined on a different graph than the one given"));
    }
    Ok(())
}

/// `family:size` shorthand, inline JSON, or a path to a JSON file.
pub fn parse_graph_arg(arg: &str) -> Result<Graph> {
    if let Some((fam, size)) = arg.split_once(':') {
        let family = match fam {
            "dumbbell" => Family::Dumbbell,
            "cycle" => Family::Cycle,
            "complete" => Family::Complete,
            "path" => Family::Path,
            _ => return read_json::<GraphJson>(arg)?.build(),
        };
        let size = size
            .parse()
            .map_err(|_| invalid(format!("bad graph size in '{arg}'")))?;
        return Graph::family(family, size);
    }
    read_json::<GraphJson>(arg)?.build()
}

/// Inline JSON array or a path to one.
pub fn parse_dist_arg(arg: &str) -> Result<Dist> {
    Dist::new(read_json::<Vec<f64>>(arg)?)
}

/// Inline JSON rows, a `.csv` file, or a JSON file of rows.
pub fn parse_matrix_arg(arg: &str) -> Result<StochMatrix> {
    if arg.ends_with(".csv") {
        return StochMatrix::from_csv(&std::fs::read_to_string(arg)?);
    }
    StochMatrix::from_rows(&read_json::<Vec<Vec<f64>>>(arg)?)
}

pub fn parse_system_arg(arg: &str) -> Result<SystemSpec> {
    read_json(arg)
}

/// Parses `arg` as JSON if it looks like JSON, otherwise reads it as a file.
pub fn read_json<T: serde::de::DeserializeOwned>(arg: &str) -> Result<T> {
    let trimmed = arg.trim_start();
    if trimmed.starts_with('{') || trimmed.starts_with('[') {
        return Ok(serde_json::from_str(arg)?);
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::{is_local, leaves_invariant};

    #[test]
    fn named_matrices() {
        let g = Graph::cycle(6).unwrap();
        let pi = Dist::uniform(6);
        for name in ["lazy_walk", "identity", "shift", "metropolis", "even_matching", "odd_matching"] {
            let p = MatrixSpec::Named(name.into()).build(&g, &pi).unwrap();
            assert!(is_local(&g, &p).unwrap(), "{name}");
            assert!(leaves_invariant(&p, &pi).unwrap(), "{name}");
        }
        let odd = MatrixSpec::Named("odd_matching".into()).build(&g, &pi).unwrap();
        assert_eq!(odd.get(0, 5), 0.5);
        let path = Graph::path(5).unwrap();
        let odd = MatrixSpec::Named("odd_matching".into()).build(&path, &Dist::uniform(5)).unwrap();
        assert!(is_local(&path, &odd).unwrap());
        assert!(MatrixSpec::Named("nope".into()).build(&g, &pi).is_err());
    }

    #[test]
    fn parses_and_builds_every_kind() {
        let cases = [
            r#"{"kind":"homogeneous","graph":{"family":"dumbbell","size":3},"matrix":"lazy_walk"}"#,
            r#"{"kind":"inhomogeneous","graph":{"family":"cycle","size":6},"matrices":["even_matching","odd_matching"]}"#,
            r#"{"kind":"cesaro","graph":{"n":3,"edges":[[0,1],[1,2]]},"matrix":"lazy_walk"}"#,
            r#"{"kind":"dhn","m":8,"p_switch":0.125}"#,
            r#"{"kind":"lifted","graph":{"family":"cycle","size":4},"tour":[0,1,2,3],"p_switch":0.25,"switch":"in_place"}"#,
            r#"{"kind":"state_dependent","graph":{"family":"cycle","size":5},"a":"lazy_walk","b":"identity","probe_node":2}"#,
            r#"{"kind":"coined_cycle","m":4}"#,
            r#"{"kind":"coined_cycle","m":5,"coin":[[0.7071067811865476,0],[0.7071067811865476,0],[0.7071067811865476,0],[-0.7071067811865476,0]]}"#,
        ];
        for text in cases {
            let spec: SystemSpec = serde_json::from_str(text).unwrap();
            let built = spec.build(None, None).unwrap();
            assert_eq!(built.system.kind(), spec.kind_name(), "{text}");
            let back: SystemSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn rejects_mismatches() {
        let spec: SystemSpec = serde_json::from_str(r#"{"kind":"dhn","m":8,"p_switch":0.1}"#).unwrap();
        assert!(spec.build(Some(&Graph::cycle(6).unwrap()), None).is_err());
        let spec: SystemSpec =
            serde_json::from_str(r#"{"kind":"homogeneous","matrix":"lazy_walk"}"#).unwrap();
        assert!(spec.build(None, None).is_err());
        let spec: SystemSpec = serde_json::from_str(
            r#"{"kind":"homogeneous","graph":{"family":"path","size":3},"matrix":"lazy_walk","pi":[0.5,0.25,0.25]}"#,
        )
        .unwrap();
        assert!(matches!(spec.build(None, None), Err(Error::AxiomViolation(_))));
    }

    #[test]
    fn graph_arguments() {
        assert_eq!(parse_graph_arg("dumbbell:4").unwrap(), Graph::dumbbell(4).unwrap());
        assert_eq!(
            parse_graph_arg(r#"{"family":"cycle","size":5}"#).unwrap(),
            Graph::cycle(5).unwrap()
        );
        assert!(parse_graph_arg("cycle:x").is_err());
        assert!(parse_graph_arg("/nonexistent/graph.json").is_err());
        assert_eq!(parse_dist_arg("[0.5,0.5]").unwrap(), Dist::uniform(2));
    }
}
