//! Command-line front end: argument and config-file handling, sweeps, and
//! single-scenario debugging.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::analysis::{analyze, AnalysisResult, DEFAULT_BUDGET};
use crate::error::{Error, Result};
use crate::eval::{estimate, placement, Estimate, ExperimentConfig, Method, Network, PairMode};
use crate::nodeset::NodeSet;
use crate::sim::{default_scripts, run_with, SimConfig};
use crate::topology::{Coord, NodeId, Topology, TopologyKind};
use crate::zones::ZoneSet;

/// Largest network for which `--trace` simulations are run.
pub const TRACE_MAX_NODES: usize = 4096;

#[derive(Debug, Parser)]
#[command(name = "zonecast", version, about = "Control-zone Byzantine-tolerant broadcast toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate reliable-pair probabilities over a grid of orders and Byzantine counts.
    Sweep(SweepArgs),
    /// Analyze one Byzantine placement and print its node map.
    Debug(DebugArgs),
    /// Print the adjacency list, or the zone family when an order is given.
    Dump(DumpArgs),
}

#[derive(Debug, Default, Args)]
pub struct SweepArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub topology: Option<TopologyKind>,
    /// Side length N of the N x N network.
    #[arg(long = "n")]
    pub side: Option<u32>,
    /// Comma-separated orders; `explorer` selects the path baseline.
    #[arg(long)]
    pub order: Option<String>,
    /// Byzantine counts: `0,5,10`, `0..=20`, `0..=20:5`, or a mix.
    #[arg(long)]
    pub byz: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a simulation trace of trial 0 of every row.
    #[arg(long)]
    pub trace: bool,
    /// Fraction of trials replayed through the simulator.
    #[arg(long)]
    pub crosscheck: Option<f64>,
    #[arg(long)]
    pub pair_mode: Option<PairMode>,
    /// Search steps allowed to the cover heuristic per trial.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DebugArgs {
    #[arg(long)]
    pub topology: TopologyKind,
    #[arg(long = "n")]
    pub side: u32,
    #[arg(long)]
    pub order: u32,
    /// File with one `i,j` Byzantine position per line.
    #[arg(long)]
    pub placement: Option<PathBuf>,
    /// Node the communicating set is grown from (`i,j`).
    #[arg(long)]
    pub origin: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Simulate the scenario and write its trace to `--out`.
    #[arg(long)]
    pub trace: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    pub budget: u64,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long)]
    pub topology: TopologyKind,
    #[arg(long = "n")]
    pub side: u32,
    #[arg(long)]
    pub order: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ListValue {
    Text(String),
    Numbers(Vec<u64>),
    Words(Vec<String>),
}

impl ListValue {
    fn into_text(self) -> String {
        match self {
            ListValue::Text(s) => s,
            ListValue::Numbers(v) => v.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            ListValue::Words(v) => v.join(","),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SweepFile {
    topology: Option<TopologyKind>,
    n: Option<u32>,
    order: Option<ListValue>,
    byz: Option<ListValue>,
    trials: Option<u64>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    trace: Option<bool>,
    crosscheck: Option<f64>,
    pair_mode: Option<PairMode>,
    budget: Option<u64>,
}

/// Fully resolved sweep request.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub topology: TopologyKind,
    pub side: u32,
    pub methods: Vec<Method>,
    pub byz: Vec<usize>,
    pub trials: u64,
    pub seed: u64,
    pub out: PathBuf,
    pub trace: bool,
    pub crosscheck: f64,
    pub pair_mode: PairMode,
    pub budget: u64,
}

pub fn parse_orders(s: &str) -> Result<Vec<Method>> {
    let methods = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Method>>>()?;
    if methods.is_empty() {
        return Err(Error::Config("no order given".into()));
    }
    Ok(methods)
}

/// Parses `0,5,10`, `a..b`, `a..=b` and `a..=b:step` items.
pub fn parse_byz_list(s: &str) -> Result<Vec<usize>> {
    let bad = |t: &str| Error::Config(format!("invalid Byzantine count or range {t:?}"));
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad(t));
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let Some((lo, rest)) = item.split_once("..") else {
            out.push(num(item)?);
            continue;
        };
        let (hi, step) = match rest.split_once(':') {
            Some((h, st)) => (h, num(st)?),
            None => (rest, 1),
        };
        let (hi, inclusive) = match hi.strip_prefix('=') {
            Some(h) => (h, true),
            None => (hi, false),
        };
        let (lo, hi) = (num(lo)?, num(hi)?);
        let end = if inclusive { hi + 1 } else { hi };
        if step == 0 || lo >= end {
            return Err(bad(item));
        }
        out.extend((lo..end).step_by(step));
    }
    if out.is_empty() {
        return Err(Error::Config("no Byzantine count given".into()));
    }
    Ok(out)
}

impl SweepSpec {
    /// Merges the optional config file with the flags; flags win.
    pub fn resolve(args: &SweepArgs) -> Result<Self> {
        let file = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str::<SweepFile>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => SweepFile::default(),
        };
        let missing = |key: &str| Error::Config(format!("missing required setting --{key}"));
        let order = match &args.order {
            Some(s) => s.clone(),
            None => file.order.ok_or_else(|| missing("order"))?.into_text(),
        };
        let byz = match &args.byz {
            Some(s) => s.clone(),
            None => file.byz.ok_or_else(|| missing("byz"))?.into_text(),
        };
        let spec = SweepSpec {
            topology: args.topology.or(file.topology).ok_or_else(|| missing("topology"))?,
            side: args.side.or(file.n).ok_or_else(|| missing("n"))?,
            methods: parse_orders(&order)?,
            byz: parse_byz_list(&byz)?,
            trials: args.trials.or(file.trials).ok_or_else(|| missing("trials"))?,
            seed: args.seed.or(file.seed).unwrap_or(0),
            out: args.out.clone().or(file.out).ok_or_else(|| missing("out"))?,
            trace: args.trace || file.trace.unwrap_or(false),
            crosscheck: args.crosscheck.or(file.crosscheck).unwrap_or(0.0),
            pair_mode: args.pair_mode.or(file.pair_mode).unwrap_or_default(),
            budget: args.budget.or(file.budget).unwrap_or(DEFAULT_BUDGET),
        };
        if spec.topology == TopologyKind::Custom {
            return Err(Error::Config("sweeps run on torus or grid topologies".into()));
        }
        Ok(spec)
    }

    fn config(&self, method: Method, n_byz: usize) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(self.topology, self.side, method, n_byz, self.trials, self.seed);
        cfg.crosscheck = self.crosscheck;
        cfg.pair_mode = self.pair_mode;
        cfg.budget = self.budget;
        cfg
    }
}

fn output_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    }
}

/// Writes through a temporary file in the target directory, so a
/// failed run never leaves a partial file behind.
fn write_atomic(path: &Path, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(output_dir(path))?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        write(&mut w)?;
        w.flush()?;
    }
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Runs every (order, Byzantine count) row, reporting progress through
/// `progress`, and writes the CSV.
pub fn run_sweep(spec: &SweepSpec, mut progress: impl FnMut(&Estimate)) -> Result<Vec<Estimate>> {
    // validate everything before the first expensive row
    for &m in &spec.methods {
        for &b in &spec.byz {
            let cfg = spec.config(m, b);
            if b >= (spec.side as usize).pow(2) {
                return Err(Error::Config(format!(
                    "{b} Byzantine nodes leave no correct node on a {}x{} network",
                    spec.side, spec.side
                )));
            }
            if !(0.0..=1.0).contains(&cfg.crosscheck) {
                return Err(Error::Config(format!(
                    "crosscheck fraction {} is outside [0, 1]",
                    cfg.crosscheck
                )));
            }
        }
    }
    if spec.trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    // fail on an unwritable destination before the expensive part
    if !fs::metadata(output_dir(&spec.out))?.is_dir() {
        return Err(Error::Config(format!("{} is not in a directory", spec.out.display())));
    }
    let mut rows = Vec::new();
    for &m in &spec.methods {
        let net = Network::build(spec.topology, spec.side, m)?;
        for &b in &spec.byz {
            let e = estimate(&net, &spec.config(m, b))?;
            progress(&e);
            rows.push(e);
            if spec.trace {
                write_row_trace(spec, &net, m, b)?;
            }
        }
    }
    write_atomic(&spec.out, |w| crate::eval::write_csv(&rows, w))?;
    Ok(rows)
}

fn trace_path(spec: &SweepSpec, m: Method, b: usize) -> PathBuf {
    let mut name = spec.out.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".{}-{}-{}-{}.trace.jsonl", spec.topology, spec.side, m, b));
    spec.out.with_file_name(name)
}

fn write_row_trace(spec: &SweepSpec, net: &Network, m: Method, b: usize) -> Result<()> {
    let Some(zs) = &net.zones else {
        return Ok(());
    };
    if net.topo.len() > TRACE_MAX_NODES {
        return Err(Error::Config(format!(
            "trace export is limited to networks of at most {TRACE_MAX_NODES} nodes"
        )));
    }
    let byz = placement(net.topo.len(), b, spec.seed, 0);
    write_trace(&net.topo, zs, &byz, spec.seed, &trace_path(spec, m, b))
}

fn write_trace(topo: &Topology, zs: &ZoneSet, byz: &NodeSet, seed: u64, path: &Path) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scripts = default_scripts(topo, zs, byz, &mut rng);
    let trace = run_with(topo, zs, byz, &scripts, &SimConfig::new(seed))?;
    write_atomic(path, |w| trace.write_ndjson(topo, zs, w))
}

fn parse_coord(text: &str) -> Option<Coord> {
    let mut it = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty());
    let i = it.next()?.parse().ok()?;
    let j = it.next()?.parse().ok()?;
    it.next().is_none().then_some(Coord { i, j })
}

/// Reads Byzantine positions, one `i,j` (or `i j`) per line; `#` starts a
/// comment.
pub fn read_placement(topo: &Topology, path: &Path) -> Result<NodeSet> {
    let text = fs::read_to_string(path)?;
    parse_placement(topo, &text, &path.display().to_string())
}

pub fn parse_placement(topo: &Topology, text: &str, source_name: &str) -> Result<NodeSet> {
    let mut byz = NodeSet::new(topo.len());
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            source_name: source_name.to_string(),
            line: k + 1,
            msg,
        };
        let c = parse_coord(line).ok_or_else(|| err(format!("expected `i,j`, found {line:?}")))?;
        let p = topo
            .node(c)
            .map_err(|_| err(format!("position {c} is outside the {0}x{0} network", topo.side())))?;
        byz.insert(p);
    }
    Ok(byz)
}

pub struct DebugReport {
    pub byz: NodeSet,
    pub origin: Option<NodeId>,
    pub analysis: Option<AnalysisResult>,
    pub map: String,
    pub summary: String,
}

/// Correct node closest to the center that lies outside the cover's cores.
fn default_origin(topo: &Topology, byz: &NodeSet, cores: Option<&NodeSet>) -> Option<NodeId> {
    let c = (topo.side() as i64 + 1) / 2;
    topo.nodes()
        .filter(|&p| !byz.contains(p) && cores.is_none_or(|k| !k.contains(p)))
        .min_by_key(|&p| {
            let q = topo.coord(p);
            ((q.i as i64 - c).abs() + (q.j as i64 - c).abs(), p)
        })
}

/// Map legend: `C` core of the chosen cover, `B` Byzantine outside any core,
/// `R` reliable, `x` correct but not certified reliable.
pub fn render_map(topo: &Topology, byz: &NodeSet, result: Option<&AnalysisResult>) -> String {
    let n = topo.side();
    let mut out = String::with_capacity((n as usize + 1) * n as usize);
    for i in 1..=n {
        for j in 1..=n {
            let p = topo.node_at(i, j).expect("coordinate in range");
            let cover = result.and_then(|r| r.cover.as_ref());
            let ch = if cover.is_some_and(|c| c.cores.contains(p)) {
                'C'
            } else if byz.contains(p) {
                'B'
            } else if result.is_some_and(|r| r.reliable.contains(p)) {
                'R'
            } else {
                'x'
            };
            out.push(ch);
        }
        out.push('\n');
    }
    out
}

pub fn debug_scenario(
    topo: &Topology,
    zs: &ZoneSet,
    byz: &NodeSet,
    origin: Option<NodeId>,
    budget: u64,
) -> Result<DebugReport> {
    if byz.capacity() != topo.len() {
        return Err(Error::Config("placement does not match the topology".into()));
    }
    let cover = crate::analysis::find_safe_cover(topo, zs, byz, budget);
    let origin = match origin {
        Some(p) if byz.contains(p) => {
            return Err(Error::Config(format!("origin {} is Byzantine", topo.coord(p))))
        }
        Some(p) => Some(p),
        None => default_origin(topo, byz, cover.as_ref().map(|c| &c.cores)),
    };
    let analysis = match origin {
        Some(o) => Some(analyze(topo, zs, byz, o, budget)?),
        None => None,
    };
    let map = render_map(topo, byz, analysis.as_ref());
    let correct = topo.len() - byz.len();
    let mut summary = String::new();
    match analysis.as_ref().and_then(|a| a.cover.as_ref().map(|c| (a, c))) {
        None => {
            let _ = writeln!(summary, "no safe cover found; no node is certified safe");
        }
        Some((a, c)) => {
            let _ = writeln!(summary, "cover: {} zones, {} core nodes", c.zones.len(), c.cores.len());
            let _ = writeln!(
                summary,
                "safe {} / communicating {} / reliable {} of {} correct nodes",
                a.safe.difference(byz).len(),
                a.communicating.len(),
                a.reliable.len(),
                correct
            );
        }
    }
    if let Some(o) = origin {
        let _ = writeln!(summary, "origin: {}", topo.coord(o));
    }
    Ok(DebugReport {
        byz: byz.clone(),
        origin,
        analysis,
        map,
        summary,
    })
}

fn run_debug(args: &DebugArgs, stdout: &mut dyn Write) -> Result<()> {
    let topo = Topology::build(args.topology, args.side)?;
    let zs = ZoneSet::order(&topo, args.order)?;
    let byz = match &args.placement {
        Some(path) => read_placement(&topo, path)?,
        None => NodeSet::new(topo.len()),
    };
    let origin = match &args.origin {
        Some(text) => {
            let c = parse_coord(text).ok_or_else(|| Error::Config(format!("invalid origin {text:?}")))?;
            Some(topo.node(c).map_err(|e| Error::Config(e.to_string()))?)
        }
        None => None,
    };
    if args.trace && args.out.is_none() {
        return Err(Error::Config("--trace needs --out <path>".into()));
    }
    if args.trace && topo.len() > TRACE_MAX_NODES {
        return Err(Error::Config(format!(
            "trace export is limited to networks of at most {TRACE_MAX_NODES} nodes"
        )));
    }
    let report = debug_scenario(&topo, &zs, &byz, origin, args.budget)?;
    write!(stdout, "{}{}", report.map, report.summary)?;
    if args.trace {
        let out = args.out.as_deref().expect("checked above");
        write_trace(&topo, &zs, &byz, args.seed, out)?;
    }
    Ok(())
}

fn run_dump(args: &DumpArgs, stdout: &mut dyn Write) -> Result<()> {
    let topo = Topology::build(args.topology, args.side)?;
    match args.order {
        None => write!(stdout, "{}", topo.adjacency_dump())?,
        Some(w) => write!(stdout, "{}", ZoneSet::order(&topo, w)?.dump(&topo))?,
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Sweep(args) => {
            let spec = SweepSpec::resolve(args)?;
            run_sweep(&spec, |e| {
                let _ = writeln!(
                    stderr,
                    "{} N={} W={} n_B={}: p_hat={:.4} ± {:.4}",
                    e.topology, e.side, e.method, e.n_byz, e.p_hat, e.ci95
                );
            })?;
            writeln!(stdout, "wrote {}", spec.out.display())?;
            Ok(())
        }
        Command::Debug(args) => run_debug(args, stdout),
        Command::Dump(args) => run_dump(args, stdout),
    }
}

/// Process exit status for an error: 2 for I/O failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Io(_) => 2,
        _ => 1,
    }
}
