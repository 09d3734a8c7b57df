use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use localmix::bench::{dhn_demo, dumbbell_scaling, verify_bound};
use localmix::conductance::{phi_max_upper, phi_of};
use localmix::finite_time::{finite_time_check, random_search};
use localmix::flow::{extract_transition, Extraction};
use localmix::lift::{build_m, lifted_convergence_time, verify_simulation, LiftedChainJson};
use localmix::prob::{Dist, StochMatrix};
use localmix::spec::{parse_dist_arg, parse_graph_arg, parse_matrix_arg, parse_system_arg, read_json};
use localmix::systems::{mixing_time, DhnSwitch, DEFAULT_HORIZON};

#[derive(Parser)]
#[command(name = "localmix", version, about = "Local mixing-time bounds for evolution systems on graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Probe a system, measure its mixing time and compare with 1/(8 phi).
    VerifyBound {
        #[arg(long)]
        system: String,
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        pi: Option<String>,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the distance trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Maximal conductance over local invariant chains, or the conductance of one matrix.
    Conductance {
        #[arg(long)]
        graph: String,
        #[arg(long)]
        pi: Option<String>,
        #[arg(long)]
        matrix: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract a local transition matrix carrying Y to Z, or a violated subset.
    Extract {
        #[arg(long)]
        graph: String,
        /// JSON object {"y": [...], "z": [...]} or a file holding one.
        #[arg(long)]
        pair: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the clocked lifted chain of a system.
    LiftBuild {
        #[arg(long)]
        system: String,
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        pi: Option<String>,
        /// Defaults to the measured mixing time.
        #[arg(long)]
        tau: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Random walk against the tour lift on dumbbell graphs.
    DumbbellScaling {
        #[arg(long, value_delimiter = ',', default_values_t = [4, 6, 8])]
        n: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        /// Directory holding dumbbell_tour_<n>.json files.
        #[arg(long)]
        tours: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Persistent cycle walk against the lazy walk on cycles.
    DhnDemo {
        #[arg(long, value_delimiter = ',', default_values_t = [16, 32, 64])]
        m: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
        #[arg(long, value_enum, default_value_t = SwitchArg::InPlace)]
        switch: SwitchArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a matrix sequence for finite-time averaging, or search randomly.
    FiniteTime {
        #[arg(long)]
        graph: String,
        /// JSON list of matrices given by rows, or a file holding one.
        #[arg(long)]
        matrix: Option<String>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 4)]
        max_len: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SwitchArg {
    Move,
    InPlace,
}

impl From<SwitchArg> for DhnSwitch {
    fn from(s: SwitchArg) -> Self {
        match s {
            SwitchArg::Move => DhnSwitch::Move,
            SwitchArg::InPlace => DhnSwitch::InPlace,
        }
    }
}

#[derive(Deserialize)]
struct Pair {
    y: Vec<f64>,
    z: Vec<f64>,
}

#[derive(Serialize)]
struct ExtractReport {
    feasible: bool,
    flow_value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    matrix: Option<StochMatrix>,
    #[serde(skip_serializing_if = "Option::is_none")]
    violated_subset: Option<Vec<usize>>,
}

#[derive(Serialize)]
struct LiftReport {
    chain: LiftedChainJson,
    tau_source: &'static str,
    seed: u64,
    simulation: Vec<localmix::lift::SimulationCheck>,
    tau_m: Option<usize>,
    upper_bound: usize,
    upper_holds: bool,
    lower_bound: f64,
    lower_holds: bool,
}

fn emit<T: Serialize>(value: &T, out: Option<&PathBuf>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_text(path: Option<&PathBuf>, text: &str) -> Result<()> {
    if let Some(p) = path {
        std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::VerifyBound {
            system,
            graph,
            pi,
            horizon,
            seed,
            out,
            trace,
        } => {
            let spec = parse_system_arg(&system)?;
            let graph = graph.as_deref().map(parse_graph_arg).transpose()?;
            let pi = pi.as_deref().map(parse_dist_arg).transpose()?;
            let res = verify_bound(&spec, graph.as_ref(), pi.as_ref(), horizon, seed)?;
            emit(&res.report, out.as_ref())?;
            write_text(trace.as_ref(), &res.mixing.trace_csv())?;
            if res.report.holds == Some(false) {
                eprintln!("bound violated: {}", res.report.verdict);
                return Ok(ExitCode::from(2));
            }
        }
        Cmd::Conductance {
            graph,
            pi,
            matrix,
            out,
        } => {
            let g = parse_graph_arg(&graph)?;
            let pi = match pi {
                Some(p) => parse_dist_arg(&p)?,
                None => Dist::uniform(g.node_count()),
            };
            let report = match matrix {
                Some(m) => phi_of(&parse_matrix_arg(&m)?, &pi, &g)?,
                None => phi_max_upper(&g, &pi)?,
            };
            emit(&report, out.as_ref())?;
        }
        Cmd::Extract { graph, pair, out } => {
            let g = parse_graph_arg(&graph)?;
            let pair: Pair = read_json(&pair)?;
            let (y, z) = (Dist::new(pair.y)?, Dist::new(pair.z)?);
            let report = match extract_transition(&y, &z, &g)? {
                Extraction::Feasible { matrix, flow_value } => ExtractReport {
                    feasible: true,
                    flow_value,
                    matrix: Some(matrix),
                    violated_subset: None,
                },
                Extraction::Infeasible { flow_value, witness } => ExtractReport {
                    feasible: false,
                    flow_value,
                    matrix: None,
                    violated_subset: Some(witness.to_vec()),
                },
            };
            emit(&report, out.as_ref())?;
        }
        Cmd::LiftBuild {
            system,
            graph,
            pi,
            tau,
            horizon,
            seed,
            out,
        } => {
            let spec = parse_system_arg(&system)?;
            let graph = graph.as_deref().map(parse_graph_arg).transpose()?;
            let pi = pi.as_deref().map(parse_dist_arg).transpose()?;
            let built = spec.build(graph.as_ref(), pi.as_ref())?;
            let (tau, tau_source) = match tau {
                Some(t) => (t, "given"),
                None => match mixing_time(built.system.as_ref(), horizon)?.tau {
                    Some(t) => (t.max(1), "measured"),
                    None => bail!("system did not mix within {horizon} steps; pass --tau"),
                },
            };
            let lc = build_m(built.system.as_ref(), tau, &built.graph)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = built.graph.node_count();
            let simulation = (0..5)
                .map(|_| {
                    verify_simulation(&lc, Arc::clone(&built.system), &Dist::random(n, &mut rng), 3 * tau)
                })
                .collect::<localmix::Result<Vec<_>>>()?;
            let conv = lifted_convergence_time(&lc, (4 * tau).max(horizon.min(8 * tau)))?;
            emit(
                &LiftReport {
                    chain: lc.to_json(),
                    tau_source,
                    seed,
                    simulation,
                    tau_m: conv.tau_m,
                    upper_bound: conv.upper_bound,
                    upper_holds: conv.upper_holds,
                    lower_bound: conv.lower_bound,
                    lower_holds: conv.lower_holds,
                },
                out.as_ref(),
            )?;
        }
        Cmd::DumbbellScaling {
            n,
            horizon,
            tours,
            out,
            csv,
        } => {
            let report = dumbbell_scaling(&n, horizon, tours.as_deref())?;
            emit(&report, out.as_ref())?;
            write_text(csv.as_ref(), &report.to_csv())?;
        }
        Cmd::DhnDemo {
            m,
            horizon,
            switch,
            out,
            csv,
        } => {
            let report = dhn_demo(&m, horizon, switch.into())?;
            emit(&report, out.as_ref())?;
            write_text(csv.as_ref(), &report.to_csv())?;
        }
        Cmd::FiniteTime {
            graph,
            matrix,
            trials,
            max_len,
            seed,
            out,
        } => {
            let g = parse_graph_arg(&graph)?;
            match matrix {
                Some(m) => {
                    let rows: Vec<Vec<Vec<f64>>> = read_json(&m)?;
                    let mats = rows
                        .iter()
                        .map(|r| StochMatrix::from_rows(r))
                        .collect::<localmix::Result<Vec<_>>>()?;
                    emit(&finite_time_check(&mats, &g)?, out.as_ref())?;
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    emit(&random_search(&g, trials, max_len, &mut rng)?, out.as_ref())?;
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
