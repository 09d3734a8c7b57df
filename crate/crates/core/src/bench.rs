//! Experiment runners behind the command-line tool: bound verification,
//! dumbbell scaling and the persistent cycle walk comparison.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conductance::phi_max_upper;
use crate::error::{invalid, Error, Result};
use crate::graph::{Graph, GraphJson};
use crate::prob::{Dist, StochMatrix};
use crate::spec::{read_json, SystemSpec};
use crate::systems::{
    make_dhn_with, make_homogeneous, mixing_time, probe_invariance, probe_linearity,
    probe_locality, DhnSwitch, MixingReport, ProbeOutcome,
};

pub const LINEARITY_TRIALS: usize = 20;
pub const LOCALITY_TRIALS: usize = 20;
pub const INVARIANCE_STEPS: usize = 200;

/// Bundled dumbbell tour specs, keyed by clique size.
pub const BUNDLED_TOURS: [(usize, &str); 3] = [
    (4, include_str!("../data/dumbbell_tour_4.json")),
    (6, include_str!("../data/dumbbell_tour_6.json")),
    (8, include_str!("../data/dumbbell_tour_8.json")),
];

/// Bundled example systems, by file stem.
pub const BUNDLED_SYSTEMS: [(&str, &str); 9] = [
    ("lazy_walk_dumbbell6", include_str!("../data/systems/lazy_walk_dumbbell6.json")),
    ("periodic_matchings_cycle6", include_str!("../data/systems/periodic_matchings_cycle6.json")),
    ("cesaro_path5", include_str!("../data/systems/cesaro_path5.json")),
    ("metropolis_path4", include_str!("../data/systems/metropolis_path4.json")),
    ("dhn_cycle12", include_str!("../data/systems/dhn_cycle12.json")),
    ("dhn_cycle32", include_str!("../data/systems/dhn_cycle32.json")),
    ("tour_lift_dumbbell6", include_str!("../data/systems/tour_lift_dumbbell6.json")),
    ("coined_cycle4", include_str!("../data/systems/coined_cycle4.json")),
    ("state_dependent_cycle6", include_str!("../data/systems/state_dependent_cycle6.json")),
];

pub fn bundled_system(name: &str) -> Result<SystemSpec> {
    let (_, text) = BUNDLED_SYSTEMS
        .iter()
        .find(|(k, _)| *k == name)
        .ok_or_else(|| invalid(format!("no bundled system named '{name}'")))?;
    Ok(serde_json::from_str(text)?)
}

#[derive(Clone, Debug, Serialize)]
pub struct Probes {
    pub linearity: ProbeOutcome,
    pub locality: ProbeOutcome,
    pub invariance: ProbeOutcome,
}

impl Probes {
    pub fn all_pass(&self) -> bool {
        self.linearity.passed && self.locality.passed && self.invariance.passed
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub system: SystemSpec,
    pub graph: GraphJson,
    pub n: usize,
    pub seed: u64,
    pub horizon: usize,
    pub tau: Option<usize>,
    pub horizon_fragile: bool,
    pub certified: bool,
    pub cesaro_tau: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
    pub phi: f64,
    /// False when `phi` is an upper bound from a restricted cut family;
    /// the bound below is then weaker but still valid.
    pub phi_exact: bool,
    pub bound: f64,
    pub probes: Probes,
    pub applicable: bool,
    /// `tau >= bound - 1`; `None` when the probes fail or the horizon is
    /// too short to decide.
    pub holds: Option<bool>,
    pub verdict: String,
}

pub struct BoundOutcome {
    pub report: BoundReport,
    pub mixing: MixingReport,
}

/// Runs the probes, the conductance program and the mixing-time
/// measurement, and compares `tau` with `1 / (8 phi)`.
pub fn verify_bound(
    spec: &SystemSpec,
    graph: Option<&Graph>,
    pi: Option<&Dist>,
    horizon: usize,
    seed: u64,
) -> Result<BoundOutcome> {
    let built = spec.build(graph, pi)?;
    let sys = built.system.as_ref();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes = Probes {
        linearity: probe_linearity(sys, LINEARITY_TRIALS, &mut rng),
        locality: probe_locality(sys, &built.graph, LOCALITY_TRIALS, &mut rng),
        invariance: probe_invariance(sys, INVARIANCE_STEPS.min(horizon)),
    };
    let cond = phi_max_upper(&built.graph, &built.pi)?;
    let bound = 1.0 / (8.0 * cond.phi);
    let mixing = mixing_time(sys, horizon)?;
    let applicable = probes.all_pass();
    let holds = if !applicable {
        None
    } else {
        match mixing.tau {
            Some(t) => Some(t as f64 >= bound - 1.0),
            None if horizon as f64 >= bound - 1.0 => Some(true),
            None => None,
        }
    };
    let verdict = match (applicable, holds) {
        (false, _) => {
            let failed: Vec<&str> = [
                ("linearity", &probes.linearity),
                ("locality", &probes.locality),
                ("invariance", &probes.invariance),
            ]
            .iter()
            .filter(|(_, p)| !p.passed)
            .map(|(name, _)| *name)
            .collect();
            format!("not applicable: {} probe failed", failed.join(", "))
        }
        (true, Some(true)) if mixing.tau.is_none() => {
            "holds: not converged within the horizon, which already exceeds the bound".into()
        }
        (true, Some(true)) => "holds".into(),
        (true, Some(false)) => "violated".into(),
        (true, None) => "inconclusive: horizon shorter than the bound".into(),
    };
    let report = BoundReport {
        system: spec.clone(),
        graph: match (graph, &spec.graph) {
            (None, Some(gj)) => gj.clone(),
            _ if built.graph.is_canonical_cycle() => GraphJson::Family {
                family: crate::graph::Family::Cycle,
                size: built.graph.node_count(),
            },
            _ => built.graph.to_json(),
        },
        n: built.graph.node_count(),
        seed,
        horizon,
        tau: mixing.tau,
        horizon_fragile: mixing.horizon_fragile,
        certified: mixing.certified,
        cesaro_tau: mixing.cesaro_tau,
        caveat: mixing.caveat.clone(),
        phi: cond.phi,
        phi_exact: cond.exact,
        bound,
        probes,
        applicable,
        holds,
        verdict,
    };
    Ok(BoundOutcome { report, mixing })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 || xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn exponent_of(xs: &[usize], taus: &[Option<usize>]) -> Option<f64> {
    let ys: Option<Vec<f64>> = taus.iter().map(|t| t.map(|v| v as f64)).collect();
    fit_exponent(&xs.iter().map(|&x| x as f64).collect::<Vec<_>>(), &ys?)
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingRow {
    pub n: usize,
    pub tau_rw: Option<usize>,
    pub tau_lifted: Option<usize>,
    pub phi: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub horizon: usize,
    pub rows: Vec<ScalingRow>,
    pub rw_exponent: Option<f64>,
    pub lifted_exponent: Option<f64>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,tau_rw,tau_lifted,phi,bound\n");
        let opt = |t: Option<usize>| t.map_or("NA".to_string(), |v| v.to_string());
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:?},{:?}\n",
                r.n,
                opt(r.tau_rw),
                opt(r.tau_lifted),
                r.phi,
                r.bound
            ));
        }
        let fmt = |e: Option<f64>| e.map_or("NA".to_string(), |v| format!("{v:.4}"));
        out.push_str(&format!(
            "# exponent rw={} lifted={}\n",
            fmt(self.rw_exponent),
            fmt(self.lifted_exponent)
        ));
        out
    }
}

/// Tour spec for `dumbbell(n)`: `tour_dir/dumbbell_tour_{n}.json` when a
/// directory is given, otherwise the bundled file.
pub fn dumbbell_tour(n: usize, tour_dir: Option<&Path>) -> Result<SystemSpec> {
    if let Some(dir) = tour_dir {
        let path = dir.join(format!("dumbbell_tour_{n}.json"));
        return read_json(&path.to_string_lossy());
    }
    let (_, text) = BUNDLED_TOURS.iter().find(|(k, _)| *k == n).ok_or_else(|| {
        Error::Unsupported(format!(
            "no bundled tour for dumbbell({n}); bundled sizes are 4, 6, 8"
        ))
    })?;
    Ok(serde_json::from_str(text)?)
}

/// Lazy random walk against the tour lift on `dumbbell(n)` for each `n`.
pub fn dumbbell_scaling(ns: &[usize], horizon: usize, tour_dir: Option<&Path>) -> Result<ScalingReport> {
    let rows = ns
        .par_iter()
        .map(|&n| -> Result<ScalingRow> {
            let g = Graph::dumbbell(n)?;
            let pi = Dist::uniform(2 * n);
            let rw = make_homogeneous(&g, StochMatrix::lazy_walk(&g), pi.clone())?;
            let tau_rw = mixing_time(&rw, horizon)?.tau;
            let lifted = dumbbell_tour(n, tour_dir)?.build(Some(&g), None)?;
            let tau_lifted = mixing_time(lifted.system.as_ref(), horizon)?.tau;
            let phi = phi_max_upper(&g, &pi)?.phi;
            let bound = 1.0 / (8.0 * phi);
            let ok = |t: Option<usize>| t.map_or(horizon as f64 >= bound - 1.0, |t| t as f64 >= bound - 1.0);
            Ok(ScalingRow {
                n,
                tau_rw,
                tau_lifted,
                phi,
                bound,
                holds: ok(tau_rw) && ok(tau_lifted),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let taus_rw: Vec<_> = rows.iter().map(|r| r.tau_rw).collect();
    let taus_lifted: Vec<_> = rows.iter().map(|r| r.tau_lifted).collect();
    Ok(ScalingReport {
        horizon,
        rw_exponent: exponent_of(ns, &taus_rw),
        lifted_exponent: exponent_of(ns, &taus_lifted),
        rows,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DhnRow {
    pub m: usize,
    pub p_switch: f64,
    pub tau_dhn: Option<usize>,
    pub tau_rw: Option<usize>,
    pub phi: f64,
    pub phi_exact: bool,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DhnReport {
    pub horizon: usize,
    pub switch: DhnSwitch,
    pub rows: Vec<DhnRow>,
    pub dhn_exponent: Option<f64>,
    pub rw_exponent: Option<f64>,
}

impl DhnReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,p_switch,tau_dhn,tau_rw,phi,bound\n");
        let opt = |t: Option<usize>| t.map_or("NA".to_string(), |v| v.to_string());
        for r in &self.rows {
            out.push_str(&format!(
                "{},{:?},{},{},{:?},{:?}\n",
                r.m,
                r.p_switch,
                opt(r.tau_dhn),
                opt(r.tau_rw),
                r.phi,
                r.bound
            ));
        }
        out
    }
}

/// The persistent walk with switch probability `1/m` against the lazy
/// walk on `cycle(m)`.
pub fn dhn_demo(ms: &[usize], horizon: usize, switch: DhnSwitch) -> Result<DhnReport> {
    let rows = ms
        .par_iter()
        .map(|&m| -> Result<DhnRow> {
            let p_switch = 1.0 / m as f64;
            let dhn = make_dhn_with(m, p_switch, switch)?;
            let g = Graph::cycle(m)?;
            let rw = make_homogeneous(&g, StochMatrix::lazy_walk(&g), Dist::uniform(m))?;
            let cond = phi_max_upper(&g, &Dist::uniform(m))?;
            Ok(DhnRow {
                m,
                p_switch,
                tau_dhn: mixing_time(&dhn, horizon)?.tau,
                tau_rw: mixing_time(&rw, horizon)?.tau,
                phi: cond.phi,
                phi_exact: cond.exact,
                bound: 1.0 / (8.0 * cond.phi),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let taus_dhn: Vec<_> = rows.iter().map(|r| r.tau_dhn).collect();
    let taus_rw: Vec<_> = rows.iter().map(|r| r.tau_rw).collect();
    Ok(DhnReport {
        horizon,
        switch,
        dhn_exponent: exponent_of(ms, &taus_dhn),
        rw_exponent: exponent_of(ms, &taus_rw),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exponent_fit() {
        let xs = [2.0, 4.0, 8.0];
        assert_abs_diff_eq!(fit_exponent(&xs, &[12.0, 48.0, 192.0]).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit_exponent(&xs, &[3.0, 6.0, 12.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert!(fit_exponent(&xs, &[1.0, 2.0]).is_none());
        assert!(fit_exponent(&[2.0, 2.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn bundled_files_parse() {
        for (name, _) in BUNDLED_SYSTEMS {
            bundled_system(name).unwrap().build(None, None).unwrap();
        }
        for (n, _) in BUNDLED_TOURS {
            let spec = dumbbell_tour(n, None).unwrap();
            let built = spec.build(None, None).unwrap();
            assert_eq!(built.graph, Graph::dumbbell(n).unwrap());
        }
        assert!(matches!(dumbbell_tour(5, None), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gating_on_state_dependent_rule() {
        let out = verify_bound(&bundled_system("state_dependent_cycle6").unwrap(), None, None, 500, 1).unwrap();
        assert!(!out.report.probes.linearity.passed);
        assert!(out.report.probes.locality.passed);
        assert!(!out.report.applicable);
        assert_eq!(out.report.holds, None);
        assert!(out.report.verdict.contains("linearity"));
    }

    #[test]
    fn lazy_walk_on_dumbbell6_holds() {
        let out = verify_bound(&bundled_system("lazy_walk_dumbbell6").unwrap(), None, None, 5000, 7).unwrap();
        let r = &out.report;
        assert!(r.applicable);
        assert_eq!(r.holds, Some(true));
        assert!(r.phi <= 1.0 / 6.0 + 1e-7);
        assert!(r.tau.unwrap() as f64 >= 6.0 / 8.0);
        assert!(r.certified);
    }
}
