//! Batch front-end: JSON in, CSV or JSON out.
//!
//! Exit codes: 0 on success, 1 when the input is refused (the JSON report is
//! written to standard output), 2 on usage errors.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use deltatree::couplings::{check_self_adjoint, general_eigenvalues, log_tau_grid, sufficient_condition_scan, CouplingSpec};
use deltatree::determinant::{appendix_a_checks, strip_scan, zero_order_at_origin};
use deltatree::fdm::{compare_with_propagator, evolve_cn_times, DiscreteTree};
use deltatree::io::{function_to_json, graph_to_json, parse_couplings, parse_function, spectral_to_json, GraphDocument};
use deltatree::propagator::{decay_scan, edge_grid, evolve, window_end, DecayOptions, EvolutionRequest, QuadratureSpec};
use deltatree::random::{random_tree, rng, Shape, TreeParams};
use deltatree::spectral::{default_omega_max, find_eigenvalues_below};
use deltatree::{Error, GraphFunction, MetricTree, Packet};
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "deltatree", version, about = "Schrödinger operators on metric trees with vertex couplings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Structural checks of a graph file.
    Validate(GraphArgs),
    /// Eigenvalues and normalized eigenfunctions.
    Spectrum {
        #[command(flatten)]
        graph: GraphArgs,
        /// Upper end of the ω bracket searched for eigenvalues.
        #[arg(long, value_parser = positive)]
        omega_max: Option<f64>,
    },
    /// Order of the zero of the determinant at ω = 0.
    Resonance(GraphArgs),
    /// Scan of |det D| and the external ratios near the imaginary axis.
    StripScan {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value_t = 0.1, value_parser = positive)]
        delta: f64,
        /// Half-width of the strip in Re ω.
        #[arg(long, default_value_t = 0.0, value_parser = nonnegative)]
        eps: f64,
        #[arg(long, default_value_t = 10.0, value_parser = positive)]
        tau_max: f64,
        /// Values of |τ| per sign.
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
        nodes: u64,
        /// Values of Re ω across the strip.
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
        s_nodes: u64,
    },
    /// Ratio and zero-order properties at every construction stage.
    AppendixA(GraphArgs),
    /// Time evolution sampled on every edge, as CSV.
    Evolve {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        quad: QuadArgs,
        /// Sample points per edge.
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
        points: u64,
        /// Add the bound-state part to the dispersive part.
        #[arg(long)]
        bound: bool,
    },
    /// Sup-norm decay table and fitted exponent.
    Decay {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long, default_value_t = 600, value_parser = clap::value_parser!(u64).range(2..))]
        points: u64,
    },
    /// Relative L² discrepancy against Crank–Nicolson.
    OracleCompare {
        #[command(flatten)]
        graph: GraphArgs,
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        quad: QuadArgs,
        #[arg(long, default_value_t = 1.0 / 64.0, value_parser = positive)]
        h: f64,
        #[arg(long, default_value_t = 1.0 / 128.0, value_parser = positive)]
        dt: f64,
        /// Truncation length of infinite edges (default from the data and times).
        #[arg(long, value_parser = positive)]
        trunc: Option<f64>,
        /// Write the Crank–Nicolson samples as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Self-adjointness of each vertex coupling.
    CouplingsCheck {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        coupling: PathBuf,
    },
    /// Grid scan of |det D(iτ)| for general couplings.
    CouplingsScan {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        coupling: PathBuf,
        /// Smallest |τ| of the log grid.
        #[arg(long, default_value_t = 1e-6, value_parser = positive)]
        delta: f64,
        #[arg(long, default_value_t = 10.0, value_parser = positive)]
        tau_max: f64,
        #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
        nodes: u64,
        #[arg(long, default_value_t = 10.0, value_parser = positive)]
        omega_max: f64,
    },
}

#[derive(Args, Debug)]
struct GraphArgs {
    /// Graph JSON file.
    #[arg(long, required_unless_present = "seed")]
    graph: Option<PathBuf>,
    /// Use a random positive-strength tree generated from this seed.
    #[arg(long, conflicts_with = "graph")]
    seed: Option<u64>,
    /// Output file (standard output when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Initial data JSON (default: a Gaussian on the first external edge).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated times.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    times: Vec<f64>,
}

#[derive(Args, Debug)]
struct QuadArgs {
    #[arg(long, value_parser = positive)]
    tau_max: Option<f64>,
    /// Minimum number of τ nodes.
    #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u64).range(64..))]
    nodes: u64,
}

impl QuadArgs {
    fn spec(&self, check: bool) -> QuadratureSpec {
        QuadratureSpec {
            tau_max: self.tau_max,
            min_nodes: self.nodes as usize,
            check,
        }
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        Ok(_) => Err("must be finite and positive".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x >= 0.0 => Ok(x),
        Ok(_) => Err("must be finite and nonnegative".into()),
        Err(e) => Err(e.to_string()),
    }
}

enum Failure {
    /// Exit 1 with a JSON report on standard output.
    Refused(Value),
    /// Exit 2 with a message on standard error.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut report = json!({"error": error_kind(&e), "message": e.to_string()});
        match &e {
            Error::Schema { pointer, .. } => report["pointer"] = json!(pointer),
            Error::ResonanceCondition { zero_order, expected } => {
                report["zero_order"] = json!(zero_order);
                report["p"] = json!(expected + 1);
                report["condition_holds"] = json!(false);
            }
            _ => {}
        }
        Failure::Refused(report)
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Schema { .. } | Error::Json(_) => "schema",
        Error::InvalidTree(_) | Error::EdgeNotInfinite(_) | Error::BadLength(_) | Error::BadDegree(_) => "invalid_tree",
        Error::Unknown { .. } | Error::NotIncident { .. } => "unknown_id",
        Error::ResonanceCondition { .. } => "resonance",
        Error::NonPositiveStrength(_) | Error::ZeroStrength(_) => "strength",
        Error::InvalidCoupling { .. } | Error::SizeMismatch(_) => "coupling",
        Error::Quadrature(_) => "quadrature",
        Error::DegenerateRoot(..) => "degenerate_root",
        Error::Inconclusive(_) => "inconclusive",
        _ => "numerical",
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            stdout(text);
            Ok(())
        }
    }
}

/// Writes to standard output, ignoring a closed pipe.
fn stdout(text: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn emit(out: Option<&Path>, v: &Value) -> Outcome {
    let mut text = serde_json::to_string_pretty(v).expect("JSON values serialize");
    text.push('\n');
    write(out, &text)
}

struct Loaded {
    tree: MetricTree,
    seeded: bool,
}

impl Loaded {
    /// Adds the generated graph to a report so a seeded run can be replayed from files.
    fn annotate(&self, mut v: Value) -> Value {
        if self.seeded {
            v["graph"] = graph_to_json(&self.tree);
        }
        v
    }
}

fn load(g: &GraphArgs) -> Result<Loaded, Failure> {
    match (&g.graph, g.seed) {
        (Some(path), _) => Ok(Loaded {
            tree: GraphDocument::parse(&read(path)?)?.into_tree()?,
            seeded: false,
        }),
        (None, Some(seed)) => Ok(Loaded {
            tree: random_tree(&mut rng(seed), &TreeParams::positive(3, Shape::Bushy)),
            seeded: true,
        }),
        (None, None) => Err(Failure::Usage("either --graph or --seed is required".into())),
    }
}

fn load_data(d: &DataArgs, tree: &MetricTree) -> Result<GraphFunction, Failure> {
    match &d.data {
        Some(path) => Ok(parse_function(&read(path)?, tree)?),
        None => {
            let e = tree.external_edges().next().expect("trees have external edges");
            Ok(GraphFunction::zero(tree).with_packet(e, Packet::unit_mass(6.0, 1.0, 0.0)))
        }
    }
}

fn times(d: &DataArgs, default: &[f64]) -> Vec<f64> {
    if d.times.is_empty() {
        default.to_vec()
    } else {
        d.times.clone()
    }
}

fn to_json<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("reports serialize")
}

fn validate(g: &GraphArgs) -> Outcome {
    let (text, seeded) = match (&g.graph, g.seed) {
        (Some(path), _) => (read(path)?, false),
        _ => {
            let l = load(g)?;
            (graph_to_json(&l.tree).to_string(), true)
        }
    };
    let doc = GraphDocument::parse(&text)?;
    let report = doc.validation();
    if !report.is_valid() {
        return Err(Failure::Refused(
            json!({"error": "invalid_tree", "valid": false, "report": to_json(&report)}),
        ));
    }
    let tree = doc.into_tree()?;
    let mut out = json!({
        "valid": true,
        "report": to_json(&report),
        "vertices": tree.vertex_count(),
        "edges": tree.edges().len(),
        "unknowns": tree.unknown_count(),
    });
    if seeded {
        out["graph"] = graph_to_json(&tree);
    }
    emit(g.out.as_deref(), &out)
}

fn couplings(path: &Path, tree: &MetricTree) -> Result<CouplingSpec, Failure> {
    Ok(parse_couplings(&read(path)?, tree)?)
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate(g) => validate(&g),
        Command::Spectrum { graph, omega_max } => {
            let l = load(&graph)?;
            let spec = find_eigenvalues_below(&l.tree, omega_max.unwrap_or_else(|| default_omega_max(&l.tree)))?;
            emit(graph.out.as_deref(), &l.annotate(spectral_to_json(&spec, &l.tree)))
        }
        Command::Resonance(graph) => {
            let l = load(&graph)?;
            let report = l.annotate(to_json(&zero_order_at_origin(&l.tree)?));
            if report["condition_holds"] == json!(false) {
                return Err(Failure::Refused(report));
            }
            emit(graph.out.as_deref(), &report)
        }
        Command::StripScan {
            graph,
            delta,
            eps,
            tau_max,
            nodes,
            s_nodes,
        } => {
            let l = load(&graph)?;
            let report = strip_scan(&l.tree, delta, eps, tau_max, nodes as usize, s_nodes as usize)?;
            emit(graph.out.as_deref(), &l.annotate(to_json(&report)))
        }
        Command::AppendixA(graph) => {
            let l = load(&graph)?;
            emit(graph.out.as_deref(), &l.annotate(to_json(&appendix_a_checks(&l.tree)?)))
        }
        Command::Evolve {
            graph,
            data,
            quad,
            points,
            bound,
        } => {
            let l = load(&graph)?;
            let u0 = load_data(&data, &l.tree)?;
            let ts = times(&data, &[0.5, 1.0, 2.0]);
            let t_max = ts.iter().fold(0.0f64, |m, t| m.max(*t));
            let samples = edge_grid(&l.tree, window_end(&u0, t_max, 4.0), f64::INFINITY, points as usize);
            let mut req = EvolutionRequest::new(&l.tree, u0, ts, samples);
            req.quadrature = quad.spec(true);
            req.include_bound_part = bound;
            let ev = evolve(&req)?;
            write(graph.out.as_deref(), &ev.to_csv(&l.tree))?;
            if graph.out.is_some() {
                let summary = json!({"quadrature": to_json(&ev.quadrature), "resonance": to_json(&ev.resonance)});
                emit(None, &l.annotate(summary))?;
            }
            Ok(())
        }
        Command::Decay { graph, data, quad, points } => {
            let l = load(&graph)?;
            let u0 = load_data(&data, &l.tree)?;
            let default: Vec<f64> = (0..12).map(|i| 10f64.powf(2.0 * i as f64 / 11.0)).collect();
            let opts = DecayOptions {
                points_per_edge: points as usize,
                quadrature: quad.spec(false),
            };
            let report = decay_scan(&l.tree, &u0, &times(&data, &default), opts)?;
            emit(graph.out.as_deref(), &l.annotate(to_json(&report)))
        }
        Command::OracleCompare {
            graph,
            data,
            quad,
            h,
            dt,
            trunc,
            csv,
        } => {
            let l = load(&graph)?;
            let u0 = load_data(&data, &l.tree)?;
            let ts = times(&data, &[0.5, 1.0, 2.0]);
            let report = compare_with_propagator(&l.tree, &u0, &ts, h, dt, trunc, quad.spec(false))?;
            if let Some(path) = csv {
                write(Some(&path), &cn_csv(&l.tree, &u0, &ts, h, dt, report.truncation)?)?;
            }
            let mut v = to_json(&report);
            v["data"] = function_to_json(&u0, &l.tree);
            emit(graph.out.as_deref(), &l.annotate(v))
        }
        Command::CouplingsCheck { graph, coupling } => {
            let l = load(&graph)?;
            let spec = couplings(&coupling, &l.tree)?;
            let mut vertices = serde_json::Map::new();
            let mut all = true;
            for (v, vertex) in l.tree.vertices().iter().enumerate() {
                let (a, b) = spec.matrices(&l.tree, v)?;
                let r = check_self_adjoint(&a, &b)?;
                all &= r.self_adjoint;
                vertices.insert(vertex.id.clone(), to_json(&r));
            }
            let report = l.annotate(json!({"self_adjoint": all, "vertices": vertices}));
            if !all {
                return Err(Failure::Refused(report));
            }
            emit(graph.out.as_deref(), &report)
        }
        Command::CouplingsScan {
            graph,
            coupling,
            delta,
            tau_max,
            nodes,
            omega_max,
        } => {
            let l = load(&graph)?;
            if delta >= tau_max {
                return Err(Failure::Usage("--delta must be below --tau-max".into()));
            }
            let spec = couplings(&coupling, &l.tree)?;
            spec.validate(&l.tree)?;
            let report = sufficient_condition_scan(&l.tree, &spec, &log_tau_grid(delta, tau_max, nodes as usize))?;
            let mut v = to_json(&report);
            v["eigenvalues"] = json!(general_eigenvalues(&l.tree, &spec, omega_max)?);
            emit(graph.out.as_deref(), &l.annotate(v))
        }
    }
}

/// Crank–Nicolson samples at the grid nodes in the same CSV layout as `evolve`.
fn cn_csv(tree: &MetricTree, u0: &GraphFunction, ts: &[f64], h: f64, dt: f64, truncation: f64) -> Result<String, Failure> {
    let grid = DiscreteTree::new(tree, h, truncation)?;
    let start = grid.sample(|e, x| u0.eval(e, x));
    let states = evolve_cn_times(&grid, &start, ts, dt)?;
    let nodes = grid.nodes(truncation / 4.0, 1);
    let mut out = String::from("t,edge,x,re,im,abs\n");
    for (t, state) in ts.iter().zip(&states) {
        for &(e, x) in &nodes {
            let z = grid.interpolate(state, e, x);
            out.push_str(&format!("{t},{},{x},{:e},{:e},{:e}\n", tree.edges()[e].id, z.re, z.im, z.norm()));
        }
    }
    Ok(out)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Refused(report)) => {
            stdout(&format!(
                "{}\n",
                serde_json::to_string_pretty(&report).expect("JSON values serialize")
            ));
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
