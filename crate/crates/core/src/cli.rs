//! The `ordopt` command line. Kept in the library so it can be driven from
//! tests with captured output.
//!
//! Exit status: 0 on success, 1 on usage and validation errors, 2 when an
//! oracle or exhaustive-search guard refuses the input.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::catalog::{BlockConfig, Catalog};
use crate::cost::CostParams;
use crate::error::{Error, Result};
use crate::expr::{parse_query, QueryTree};
use crate::extsort::{gen_segmented_input, sort_mrs, sort_srs, SortMetrics, SortSpec};
use crate::favorable::FavorableOrders;
use crate::optimizer::{Heuristic, Optimizer, PlanDocument};
use crate::refine::refine_plan;

#[derive(Debug, Parser)]
#[command(name = "ordopt", version, about = "Sort-order-aware query optimizer and partial-sort simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a query and print its plan.
    Optimize(OptimizeArgs),
    /// Rework the merge-join orders of a saved plan document.
    Refine(RefineArgs),
    /// Print the approximate favorable orders of every subexpression.
    ExplainAfm(QueryArgs),
    /// Run the simulated external sort on generated input.
    Sort(SortArgs),
    /// Experiment sweeps, emitted as CSV.
    #[command(subcommand)]
    Bench(Bench),
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    /// JSON file with a `cost_params` object.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub query: QueryArgs,
    #[arg(long, value_enum, default_value_t = Heuristic::Favorable)]
    pub heuristic: Heuristic,
    /// Follow optimization with merge-join order refinement.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Plan document written by `optimize --json`.
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SortAlgo {
    Srs,
    Mrs,
}

#[derive(Debug, Args)]
pub struct SortArgs {
    #[arg(long)]
    pub rows: u64,
    #[arg(long)]
    pub segment_rows: u64,
    /// Key positions per tuple; the sort uses all of them.
    #[arg(long, default_value_t = 2)]
    pub keys: usize,
    /// Payload bytes per tuple.
    #[arg(long, default_value_t = 100)]
    pub payload: u32,
    #[arg(long)]
    pub mem_blocks: u64,
    #[arg(long, default_value_t = 4096)]
    pub block_bytes: u64,
    #[arg(long, value_enum)]
    pub algo: SortAlgo,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum Bench {
    /// Sweep segment sizes by powers of ten and compare both sort algorithms.
    A3(A3Args),
    /// Plan cost of every heuristic on every fixture, normalized to exhaustive = 100.
    B3(B3Args),
}

#[derive(Debug, Args)]
pub struct A3Args {
    #[arg(long, default_value_t = 64)]
    pub mem_blocks: u64,
    #[arg(long, default_value_t = 100_000)]
    pub rows: u64,
    #[arg(long, default_value_t = 2)]
    pub keys: usize,
    #[arg(long, default_value_t = 100)]
    pub payload: u32,
    #[arg(long, default_value_t = 4096)]
    pub block_bytes: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct B3Args {
    /// Directory holding `<name>.json` catalogs and `<name>_query.json` queries.
    #[arg(long)]
    pub fixtures: PathBuf,
}

/// Parse `args` (program name first) and run, writing to `out` and `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(text) => {
            let _ = out.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_guard_violation() {
                2
            } else {
                1
            }
        }
    }
}

pub fn execute(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Optimize(a) => optimize_cmd(a),
        Command::Refine(a) => refine_cmd(a),
        Command::ExplainAfm(a) => explain_afm_cmd(a),
        Command::Sort(a) => sort_cmd(a),
        Command::Bench(Bench::A3(a)) => bench_a3(a),
        Command::Bench(Bench::B3(a)) => bench_b3(a),
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load(a: &QueryArgs) -> Result<(QueryTree, CostParams)> {
    let catalog = Catalog::from_json(&read(&a.catalog)?)?;
    let query = parse_query(read(&a.query)?.as_bytes(), &catalog)?;
    let params = match &a.config {
        Some(p) => CostParams::from_config_json(&read(p)?)?,
        None => CostParams::default(),
    };
    Ok((QueryTree::build(&catalog, &query)?, params))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn optimize_cmd(a: &OptimizeArgs) -> Result<String> {
    let (tree, params) = load(&a.query)?;
    let mut plan = Optimizer::new(&tree, &params, a.heuristic)?.optimize()?;
    if a.refine {
        plan = refine_plan(&tree, &params, a.heuristic, &plan)?.plan;
    }
    if a.query.json {
        let mut s = PlanDocument::new(&tree, &params, a.heuristic, a.refine, &plan).to_json();
        s.push('\n');
        return Ok(s);
    }
    Ok(format!("heuristic: {}\ncost: {:.3}\n{}", a.heuristic.name(), plan.cost, plan.explain()))
}

fn refine_cmd(a: &RefineArgs) -> Result<String> {
    let doc = PlanDocument::from_json(&read(&a.plan)?)?;
    let tree = doc.tree()?;
    let r = refine_plan(&tree, &doc.cost_params, doc.heuristic, &Arc::new(doc.plan.clone()))?;
    if a.json {
        let mut s = PlanDocument::new(&tree, &doc.cost_params, doc.heuristic, true, &r.plan).to_json();
        s.push('\n');
        return Ok(s);
    }
    let mut s = String::new();
    let _ = writeln!(s, "accepted: {}", r.accepted);
    let _ = writeln!(s, "cost: {:.3} -> {:.3}", doc.plan.cost, r.plan.cost);
    let _ = writeln!(s, "common prefix total: {} -> {}", r.benefit_before, r.benefit_after);
    for (j, o) in &r.orders_after {
        let _ = writeln!(s, "  {}: {} -> {}", tree.node(*j).label(), r.orders_before[j], o);
    }
    s.push_str(&r.plan.explain());
    Ok(s)
}

#[derive(Serialize)]
struct AfmEntry {
    node: usize,
    label: String,
    orders: Vec<String>,
}

fn explain_afm_cmd(a: &QueryArgs) -> Result<String> {
    let (tree, _) = load(a)?;
    let afm = FavorableOrders::afm(&tree)?;
    let entries: Vec<AfmEntry> = tree
        .nodes
        .iter()
        .map(|n| AfmEntry {
            node: n.id,
            label: n.label(),
            orders: afm.of(n.id).iter().map(|o| o.to_string()).collect(),
        })
        .collect();
    if a.json {
        return Ok(to_json(&entries));
    }
    let mut s = String::new();
    afm_tree(&tree, &afm, tree.root, 0, &mut s);
    Ok(s)
}

fn afm_tree(tree: &QueryTree, afm: &FavorableOrders, id: usize, depth: usize, s: &mut String) {
    let pad = "  ".repeat(depth);
    let _ = writeln!(s, "{pad}{}", tree.node(id).label());
    for o in afm.of(id) {
        let attrs: Vec<&str> = o.attrs().iter().map(|a| a.as_str()).collect();
        let _ = writeln!(s, "{pad}  - {}", attrs.join(","));
    }
    for c in tree.node(id).children() {
        afm_tree(tree, afm, c, depth + 1, s);
    }
}

fn run_sort(algo: SortAlgo, rows: u64, segment_rows: u64, keys: usize, payload: u32, cfg: BlockConfig, seed: u64) -> Result<SortMetrics> {
    let input = gen_segmented_input(rows, segment_rows, keys, payload, seed);
    let spec = SortSpec {
        target_order_len: keys,
        known_prefix_len: match algo {
            SortAlgo::Srs => 0,
            SortAlgo::Mrs => 1,
        },
        cfg,
    };
    let mut stream = match algo {
        SortAlgo::Srs => sort_srs(input, spec)?,
        SortAlgo::Mrs => sort_mrs(input, spec)?,
    };
    for t in stream.by_ref() {
        t?;
    }
    Ok(stream.metrics())
}

fn sort_cmd(a: &SortArgs) -> Result<String> {
    if a.keys < 2 {
        return Err(Error::Config("--keys must be at least 2: one prefix key and one key to sort".into()));
    }
    let cfg = BlockConfig {
        block_bytes: a.block_bytes,
        memory_blocks: a.mem_blocks,
    };
    let m = run_sort(a.algo, a.rows, a.segment_rows, a.keys, a.payload, cfg, a.seed)?;
    if a.json {
        return Ok(to_json(&m));
    }
    let v = serde_json::to_value(&m).expect("metrics serialize");
    let mut s = String::new();
    for (k, x) in v.as_object().expect("metrics are an object") {
        let _ = writeln!(s, "{k}: {x}");
    }
    Ok(s)
}

fn bench_a3(a: &A3Args) -> Result<String> {
    let cfg = BlockConfig {
        block_bytes: a.block_bytes,
        memory_blocks: a.mem_blocks,
    };
    let mut s = String::from(
        "segment_rows,srs_blocks_written,srs_blocks_read,srs_comparisons,srs_first_out,\
         mrs_blocks_written,mrs_blocks_read,mrs_comparisons,mrs_first_out\n",
    );
    let mut seg = 1u64;
    loop {
        let srs = run_sort(SortAlgo::Srs, a.rows, seg, a.keys, a.payload, cfg, a.seed)?;
        let mrs = run_sort(SortAlgo::Mrs, a.rows, seg, a.keys, a.payload, cfg, a.seed)?;
        let _ = writeln!(
            s,
            "{seg},{},{},{},{},{},{},{},{}",
            srs.run_blocks_written,
            srs.run_blocks_read,
            srs.comparisons,
            srs.tuples_in_before_first_out,
            mrs.run_blocks_written,
            mrs.run_blocks_read,
            mrs.comparisons,
            mrs.tuples_in_before_first_out
        );
        if seg >= a.rows {
            break;
        }
        seg = (seg * 10).min(a.rows);
    }
    Ok(s)
}

/// Fixture names in `dir`: every `<name>_query.json` with a `<name>.json` beside it.
pub fn fixture_names(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let file = entry?.file_name().to_string_lossy().into_owned();
        if let Some(name) = file.strip_suffix("_query.json") {
            if dir.join(format!("{name}.json")).exists() {
                names.push(name.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Load fixture `name`; `<name>_params.json`, when present, supplies cost parameters.
pub fn load_fixture(dir: &Path, name: &str) -> Result<(QueryTree, CostParams)> {
    let params = dir.join(format!("{name}_params.json"));
    load(&QueryArgs {
        catalog: dir.join(format!("{name}.json")),
        query: dir.join(format!("{name}_query.json")),
        config: params.exists().then_some(params),
        json: false,
    })
}

fn bench_b3(a: &B3Args) -> Result<String> {
    let mut s = String::from("fixture,heuristic,cost,normalized\n");
    for name in fixture_names(&a.fixtures)? {
        let (tree, params) = load_fixture(&a.fixtures, &name)?;
        let mut costs = Vec::new();
        for h in Heuristic::ALL {
            let c = match Optimizer::new(&tree, &params, h).and_then(|mut o| o.optimize()) {
                Ok(p) if h == Heuristic::Favorable => Some(refine_plan(&tree, &params, h, &p)?.plan.cost),
                Ok(p) => Some(p.cost),
                Err(e) if e.is_guard_violation() => None,
                Err(e) => return Err(e),
            };
            costs.push((h, c));
        }
        let base = costs.iter().find(|(h, _)| *h == Heuristic::Exhaustive).and_then(|(_, c)| *c);
        for (h, c) in costs {
            let cost = c.map_or("NA".to_string(), |c| format!("{c:.3}"));
            let norm = match (c, base) {
                (Some(c), Some(b)) if b > 0.0 => format!("{:.2}", 100.0 * c / b),
                _ => "NA".to_string(),
            };
            let _ = writeln!(s, "{name},{},{cost},{norm}", h.name());
        }
    }
    Ok(s)
}
