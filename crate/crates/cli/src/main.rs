//! `grapheur`: command-line access to random quotients, densities, edge
//! sampling, hub testing, distance brackets and consistency checks.
//!
//! Every command prints JSON on stdout (except `converge`, which prints
//! CSV) and takes `--seed`. Exit codes: 0 ok, 2 parse or validation error,
//! 3 budget exceeded, 4 internal invariant violation.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use grapheur_core::combinatorics::{
    hom_number_with_cap, inj_number_with_cap, quotient_density_exact_with_cap, quotient_density_mc, tq_from_inj,
    DEFAULT_ENUMERATION_CAP,
};
use grapheur_core::edge_sampling::{discrepancy_experiment, sample_edges_from_graph, sample_edges_from_grapheur};
use grapheur_core::eqp::{check_model_consistency, GrapheurModel, IndependentRowsModel};
use grapheur_core::io::{self, Cell, EdgeListOptions};
use grapheur_core::metrics::{w_square_bracket, w_square_upper_coupled};
use grapheur_core::numeric::{rng_from_seed, substream, Rng};
use grapheur_core::property_testing::{hub_parameter, hub_statistic, test_parameter_by_edge_sampling, HUB_LIPSCHITZ};
use grapheur_core::{
    equipartition_map, estimate_grapheur, normalize, random_equipartition_map, random_partition_map, Error, Estimate,
    Grapheur, Multigraph, NormalizedGraph, Result,
};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "grapheur", version, about = "Random quotients of weighted digraphs and their limits")]
struct Cli {
    /// Seed for every random choice; equal seeds give identical output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quotient a graph by a random or canonical partition map.
    Quotient(QuotientArgs),
    /// Quotient densities t_Q(H; G) of patterns in a graph or grapheur.
    Densities(DensitiesArgs),
    /// hom, inj and t_Q numbers of patterns in a graph.
    Hom(HomArgs),
    /// Sample edges from a graph or grapheur.
    SampleEdges(SampleEdgesArgs),
    /// Estimate the hub statistic from sampled edges.
    Hubs(HubsArgs),
    /// Bracket the distance between two grapheurs.
    Dist(DistArgs),
    /// Pattern densities along the approximating sequence of a grapheur (CSV).
    Converge(ConvergeArgs),
    /// Check that quotients of larger samples match smaller samples.
    EqpCheck(EqpCheckArgs),
    /// Fit a grapheur to a graph by thresholding.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct GraphInput {
    /// Edge list with `src dst [weight]` lines.
    #[arg(long)]
    input: PathBuf,
    /// Field separator (default: any whitespace).
    #[arg(long)]
    delimiter: Option<char>,
    /// Smallest vertex id in the file.
    #[arg(long, default_value_t = 1)]
    id_base: usize,
    /// Read every edge in both directions.
    #[arg(long)]
    undirected: bool,
}

impl GraphInput {
    fn load(&self) -> Result<NormalizedGraph> {
        let opts = EdgeListOptions {
            delimiter: self.delimiter,
            id_base: self.id_base,
            undirected: self.undirected,
            ..EdgeListOptions::default()
        };
        normalize(&io::read_edge_list(&self.input, &opts)?)
    }
}

/// A graph file or a grapheur file, exactly one of them.
#[derive(Args)]
struct Source {
    #[arg(long, conflicts_with = "grapheur")]
    input: Option<PathBuf>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long, default_value_t = 1)]
    id_base: usize,
    #[arg(long)]
    undirected: bool,
    /// Grapheur JSON.
    #[arg(long)]
    grapheur: Option<PathBuf>,
}

enum Loaded {
    Graph(NormalizedGraph),
    Grapheur(Grapheur),
}

impl Source {
    fn load(&self) -> Result<Loaded> {
        match (&self.input, &self.grapheur) {
            (Some(input), None) => GraphInput {
                input: input.clone(),
                delimiter: self.delimiter,
                id_base: self.id_base,
                undirected: self.undirected,
            }
            .load()
            .map(Loaded::Graph),
            (None, Some(path)) => io::read_grapheur(path).map(Loaded::Grapheur),
            _ => Err(Error::InvalidInput("give exactly one of --input and --grapheur".into())),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MapKind {
    /// Every vertex goes to an independent uniform part.
    Random,
    /// Contiguous blocks of equal size.
    Equipartition,
    /// A uniformly relabeled equipartition.
    RandomEquipartition,
}

#[derive(Args)]
struct QuotientArgs {
    #[command(flatten)]
    graph: GraphInput,
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value_t = MapKind::Random)]
    map: MapKind,
    /// Write the quotient as an edge list.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the quotient as a DOT drawing.
    #[arg(long)]
    dot: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    /// Exact when within the enumeration cap, Monte Carlo otherwise.
    Auto,
    Exact,
    Mc,
}

#[derive(Args)]
struct DensityOpts {
    /// Pattern: `edge`, `loop`, `K2`, `star-out:m`, `star-in:m`, `path:m`
    /// or `{"k": 2, "counts": [[0,1],[0,0]]}`. Repeatable.
    #[arg(long = "pattern", required = true)]
    patterns: Vec<String>,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    method: Method,
    /// Monte Carlo samples.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Largest number of maps enumerated by the exact method.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: f64,
}

#[derive(Args)]
struct DensitiesArgs {
    #[command(flatten)]
    source: Source,
    #[command(flatten)]
    opts: DensityOpts,
}

#[derive(Args)]
struct HomArgs {
    #[command(flatten)]
    graph: GraphInput,
    #[arg(long = "pattern", required = true)]
    patterns: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: f64,
}

#[derive(Args)]
struct SampleEdgesArgs {
    #[command(flatten)]
    source: Source,
    /// Number of edges.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Write the sampled graph as an edge list.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Instead of sampling once, run the coupled discrepancy experiment at
    /// these sizes and print CSV `n,mean,std,bound` (grapheur input only).
    #[arg(long, value_delimiter = ',')]
    experiment_ns: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Discretize continuous components on a grid of this size.
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct HubsArgs {
    #[command(flatten)]
    graph: GraphInput,
    #[arg(long, default_value_t = 1000)]
    edges: usize,
    /// Accuracy for the certificate.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Also compute the value on the full graph.
    #[arg(long)]
    full: bool,
}

#[derive(Args)]
struct DistArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    ks: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    samples: usize,
    /// Trials of the coupled upper estimate; 0 skips it.
    #[arg(long, default_value_t = 0)]
    coupled_trials: usize,
    #[arg(long)]
    grid: Option<usize>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    grapheur: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "10,20,40")]
    ns: Vec<usize>,
    #[command(flatten)]
    opts: DensityOpts,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelKind {
    Grapheur,
    /// Independent Dirichlet rows; fails the check.
    IndependentRows,
}

#[derive(Args)]
struct EqpCheckArgs {
    #[arg(long)]
    grapheur: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModelKind::Grapheur)]
    model: ModelKind,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 2)]
    n: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Largest z-score accepted as consistent.
    #[arg(long, default_value_t = 4.0)]
    z_threshold: f64,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    graph: GraphInput,
    /// Entries at least this large become atoms.
    #[arg(long, default_value_t = 0.01)]
    tau_e: f64,
    /// Residual degrees at least this large become row or column hubs.
    #[arg(long, default_value_t = 0.01)]
    tau_d: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: cannot start {t} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } => 3,
        Error::InvariantViolation(_) => 4,
        _ => 2,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::Quotient(a) => quotient(a, seed),
        Command::Densities(a) => densities(a, seed),
        Command::Hom(a) => hom(a),
        Command::SampleEdges(a) => sample_edges(a, seed),
        Command::Hubs(a) => hubs(a, seed),
        Command::Dist(a) => dist(a, seed),
        Command::Converge(a) => converge(a, seed),
        Command::EqpCheck(a) => eqp_check(a, seed),
        Command::Estimate(a) => estimate(a),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_file(path: &Path, f: impl FnOnce(&mut std::fs::File) -> Result<()>) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    f(&mut file)
}

fn quotient(a: &QuotientArgs, seed: u64) -> Result<()> {
    let g = a.graph.load()?;
    let mut rng = rng_from_seed(seed);
    let f = match a.map {
        MapKind::Random => random_partition_map(g.n(), a.k, &mut rng)?,
        MapKind::Equipartition => equipartition_map(a.k, g.n())?,
        MapKind::RandomEquipartition => random_equipartition_map(a.k, g.n(), &mut rng)?,
    };
    let q = g.quotient(&f)?;
    if let Some(path) = &a.out {
        write_file(path, |file| io::write_edge_list(q.as_digraph(), a.graph.id_base, file))?;
    }
    if let Some(path) = &a.dot {
        io::export_quotient_dot(q.as_digraph(), path)?;
    }
    print_json(&json!({
        "n": g.n(),
        "k": a.k,
        "map": f.images(),
        "quotient": q.as_digraph().to_rows(),
    }))
}

#[derive(Serialize)]
struct DensityRow {
    pattern: String,
    method: &'static str,
    value: f64,
    std_error: f64,
}

fn density_of(loaded: &Loaded, h: &Multigraph, opts: &DensityOpts, rng: &mut Rng) -> Result<(&'static str, Estimate)> {
    if opts.method != Method::Mc {
        let exact = match loaded {
            Loaded::Graph(g) => quotient_density_exact_with_cap(h, g.as_digraph(), opts.cap),
            Loaded::Grapheur(m) => m.density_exact(h),
        };
        match exact {
            Ok(v) => return Ok(("exact", Estimate { mean: v, std_error: 0.0 })),
            Err(Error::BudgetExceeded { .. }) if opts.method == Method::Auto => {}
            Err(e) => return Err(e),
        }
    }
    let est = match loaded {
        Loaded::Graph(g) => quotient_density_mc(h, g.as_digraph(), opts.samples, rng)?,
        Loaded::Grapheur(m) => m.density_mc(h, opts.samples, rng)?,
    };
    Ok(("mc", est))
}

fn parse_patterns(specs: &[String]) -> Result<Vec<Multigraph>> {
    specs.iter().map(|s| Multigraph::parse(s)).collect()
}

fn densities(a: &DensitiesArgs, seed: u64) -> Result<()> {
    let loaded = a.source.load()?;
    let patterns = parse_patterns(&a.opts.patterns)?;
    let rows = patterns
        .iter()
        .zip(&a.opts.patterns)
        .enumerate()
        .map(|(i, (h, spec))| {
            let (method, est) = density_of(&loaded, h, &a.opts, &mut substream(seed, i as u64))?;
            Ok(DensityRow {
                pattern: spec.clone(),
                method,
                value: est.mean,
                std_error: est.std_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    print_json(&json!({ "densities": rows }))
}

fn hom(a: &HomArgs) -> Result<()> {
    let g = a.graph.load()?;
    let g = g.as_digraph();
    let rows = parse_patterns(&a.patterns)?
        .iter()
        .zip(&a.patterns)
        .map(|(h, spec)| {
            Ok(json!({
                "pattern": spec,
                "hom": hom_number_with_cap(h, g, a.cap)?,
                "inj": inj_number_with_cap(h, g, a.cap)?,
                "t_q": tq_from_inj(h, g)?,
            }))
        })
        .collect::<Result<Vec<Value>>>()?;
    print_json(&json!({ "patterns": rows }))
}

fn sample_edges(a: &SampleEdgesArgs, seed: u64) -> Result<()> {
    let loaded = a.source.load()?;
    if !a.experiment_ns.is_empty() {
        let Loaded::Grapheur(m) = &loaded else {
            return Err(Error::InvalidInput("the discrepancy experiment needs --grapheur".into()));
        };
        let rows: Vec<Vec<Cell>> = discrepancy_experiment(m, &a.experiment_ns, a.trials, a.grid, seed)?
            .into_iter()
            .map(|r| vec![r.n.into(), r.mean.into(), r.std.into(), r.bound.into()])
            .collect();
        return io::emit_csv(std::io::stdout().lock(), &["n", "mean", "std", "bound"], &rows);
    }
    let mut rng = rng_from_seed(seed);
    let sample = match &loaded {
        Loaded::Graph(g) => sample_edges_from_graph(g.as_digraph(), a.n, &mut rng)?,
        Loaded::Grapheur(m) => sample_edges_from_grapheur(m, a.n, &mut rng)?,
    };
    if let Some(path) = &a.out {
        write_file(path, |file| io::write_edge_list(sample.graph.as_digraph(), a.source.id_base, file))?;
    }
    let mut components: BTreeMap<&str, usize> = BTreeMap::new();
    if matches!(loaded, Loaded::Grapheur(_)) {
        for c in &sample.provenance {
            let name = match c {
                grapheur_core::Component::Atom(..) => "atom",
                grapheur_core::Component::Row(_) => "row",
                grapheur_core::Component::Col(_) => "col",
                grapheur_core::Component::Uniform => "uniform",
                grapheur_core::Component::Diagonal => "diagonal",
            };
            *components.entry(name).or_default() += 1;
        }
    }
    print_json(&json!({
        "edges": a.n,
        "vertices": sample.vertex_count(),
        "max_multiplicity": sample.max_multiplicity(),
        "components": components,
    }))
}

fn hubs(a: &HubsArgs, seed: u64) -> Result<()> {
    let g = a.graph.load()?;
    let (estimate, certificate) = test_parameter_by_edge_sampling(g.as_digraph(), &hub_parameter(), a.edges, a.epsilon, seed)?;
    let mut out = json!({
        "estimate": estimate,
        "lower_bound_Wsq": estimate / HUB_LIPSCHITZ,
        "certificate": certificate,
    });
    if a.full {
        out["full_value"] = json!(hub_statistic(g.as_digraph())?);
    }
    print_json(&out)
}

fn dist(a: &DistArgs, seed: u64) -> Result<()> {
    let (m1, m2) = (io::read_grapheur(&a.a)?, io::read_grapheur(&a.b)?);
    let bracket = w_square_bracket(&m1, &m2, &a.ks, a.samples, &mut substream(seed, 0))?;
    let coupled = match a.coupled_trials {
        0 => None,
        t => Some(w_square_upper_coupled(&m1, &m2, t, a.grid, &mut substream(seed, 1))?),
    };
    if let Some(c) = &coupled {
        // The coupling is a valid transport plan, so it cannot beat the lower bound.
        if c.mean + 6.0 * c.std_error + 1e-9 < bracket.lower {
            return Err(Error::InvariantViolation(format!(
                "coupled estimate {} is below the lower bound {}",
                c.mean, bracket.lower
            )));
        }
    }
    print_json(&json!({
        "bracket": bracket,
        "coupled_upper": coupled,
        "hub_free": [m1.hub_free(), m2.hub_free()],
    }))
}

fn converge(a: &ConvergeArgs, seed: u64) -> Result<()> {
    let m = io::read_grapheur(&a.grapheur)?;
    let patterns = parse_patterns(&a.opts.patterns)?;
    let mut rows = Vec::new();
    for (i, &n) in a.ns.iter().enumerate() {
        let g = Loaded::Graph(m.approx_sequence(n)?);
        for (j, (h, spec)) in patterns.iter().zip(&a.opts.patterns).enumerate() {
            let (_, est) = density_of(&g, h, &a.opts, &mut substream(seed, (i * patterns.len() + j) as u64))?;
            rows.push(vec![Cell::from(n), Cell::from(spec.as_str()), est.mean.into(), est.std_error.into()]);
        }
    }
    io::emit_csv(std::io::stdout().lock(), &["n", "param", "estimate", "se"], &rows)
}

fn eqp_check(a: &EqpCheckArgs, seed: u64) -> Result<()> {
    let report = match (a.model, &a.grapheur) {
        (ModelKind::Grapheur, Some(path)) => {
            let m = io::read_grapheur(path)?;
            check_model_consistency(&GrapheurModel(&m), a.k, a.n, a.samples, seed)?
        }
        (ModelKind::Grapheur, None) => {
            return Err(Error::InvalidInput("--model grapheur needs --grapheur".into()));
        }
        (ModelKind::IndependentRows, _) => check_model_consistency(&IndependentRowsModel, a.k, a.n, a.samples, seed)?,
    };
    let consistent = report.max_z <= a.z_threshold;
    let mut out = serde_json::to_value(&report)?;
    out["z_threshold"] = json!(a.z_threshold);
    out["consistent"] = json!(consistent);
    print_json(&out)
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let g = a.graph.load()?;
    let m = estimate_grapheur(&g, a.tau_e, a.tau_d)?;
    let text = io::serialize_grapheur(&m)?;
    match &a.out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_exit_codes() {
        let budget = Error::BudgetExceeded { what: "maps", required: 2.0, cap: 1.0 };
        assert_eq!(exit_code(&budget), 3);
        assert_eq!(exit_code(&Error::InvariantViolation("x".into())), 4);
        assert_eq!(exit_code(&Error::Parse { line: 1, msg: "x".into() }), 2);
        assert_eq!(exit_code(&Error::EmptyInput), 2);
        assert_eq!(exit_code(&Error::InvalidEpsilon(2.0)), 2);
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
