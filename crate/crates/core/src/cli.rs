//! Command-line front end: `gen`, `run`, `bench` and `bounds`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bounds::{BoundReport, Shape};
use crate::error::{Error, Result};
use crate::experiment::{run_experiment, Algo, RunConfig, CSV_HEADER};
use crate::model::{gen_instance, parse_instance, GenParams};
use crate::ple_special::DEFAULT_NODE_BUDGET;
use crate::ram::PriceTriple;

pub const NODE_BUDGET_ENV: &str = "DAMLAB_NODE_BUDGET";

#[derive(Parser, Debug)]
#[command(name = "damlab", version, about = "Two-sized sorting under a block-transfer cost model")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an instance file.
    Gen(GenArgs),
    /// Run one algorithm on an instance and print its checked CSV row.
    Run(RunArgs),
    /// Run algorithms over a parameter grid.
    Bench(BenchArgs),
    /// Evaluate the cost formulas for one parameter set.
    Bounds(BoundsArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long)]
    small: usize,
    #[arg(long)]
    large_count: usize,
    #[arg(long)]
    width: usize,
    #[arg(long)]
    stripes: usize,
    /// Stripe sizes, comma separated; must sum to the large count.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct Machine {
    #[arg(long = "B")]
    b: usize,
    #[arg(long = "M")]
    m: usize,
    /// Comparison prices a,b,c for `ram`.
    #[arg(long, value_delimiter = ',', num_args = 1, default_value = "1,2,4")]
    prices: Vec<f64>,
    /// Levels per phase for `2btree`; the validity formula when omitted.
    #[arg(long)]
    j: Option<usize>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    algo: String,
    #[command(flatten)]
    machine: Machine,
    #[arg(long = "in")]
    input: PathBuf,
    /// Print a CSV header and row instead of key=value lines.
    #[arg(long)]
    csv: bool,
    /// Print the transfer trace to standard error.
    #[arg(long)]
    trace: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Algorithms, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sort-dam")]
    algo: Vec<String>,
    #[command(flatten)]
    machine: Machine,
    #[arg(long, default_value_t = 1024)]
    small: usize,
    #[arg(long, default_value_t = 128)]
    large_count: usize,
    #[arg(long, default_value_t = 8)]
    width: usize,
    #[arg(long, default_value_t = 4)]
    stripes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid axis `name=v1,v2,...` over small, large-count, w, k, B, M or seed.
    #[arg(long)]
    sweep: Vec<String>,
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long = "S")]
    s: usize,
    /// Total large volume.
    #[arg(long = "L")]
    l: usize,
    #[arg(long)]
    w: usize,
    #[arg(long)]
    k: usize,
    #[arg(long = "B")]
    b: usize,
    #[arg(long = "M")]
    m: usize,
    /// Stripe record counts; an even split of L/w when omitted.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    prices: Option<Vec<f64>>,
}

fn prices(v: &[f64]) -> Result<PriceTriple> {
    match v {
        [a, b, c] => PriceTriple::new(*a, *b, *c),
        _ => Err(Error::param(format!("--prices needs three values, got {}", v.len()))),
    }
}

fn node_budget() -> Result<usize> {
    match std::env::var(NODE_BUDGET_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| Error::param(format!("{NODE_BUDGET_ENV}={v:?} is not a count"))),
        Err(_) => Ok(DEFAULT_NODE_BUDGET),
    }
}

fn config(algo: Algo, m: &Machine, trace: bool) -> Result<RunConfig> {
    Ok(RunConfig { prices: prices(&m.prices)?, j: m.j, node_budget: node_budget()?, trace, ..RunConfig::new(algo, m.b, m.m) })
}

fn io_err(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

fn cmd_gen(a: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let inst = gen_instance(&GenParams {
        small: a.small,
        large_count: a.large_count,
        width: a.width,
        stripes: a.stripes,
        sizes: a.sizes.clone(),
        seed: a.seed,
    })?;
    let text = inst.to_text();
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(io_err),
        None => out.write_all(text.as_bytes()).map_err(io_err),
    }
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let algo: Algo = a.algo.parse()?;
    let text = std::fs::read_to_string(&a.input).map_err(io_err)?;
    let (_, inst) = parse_instance(&text)?;
    let res = run_experiment(&inst, &config(algo, &a.machine, a.trace)?)?;
    if a.csv {
        writeln!(out, "{CSV_HEADER}\n{}", res.row.to_csv()).map_err(io_err)?;
    } else {
        let names = CSV_HEADER.split(',');
        for (k, v) in names.zip(res.row.to_csv().split(',')) {
            writeln!(out, "{k}={v}").map_err(io_err)?;
        }
        write!(out, "{}", res.details_text()).map_err(io_err)?;
    }
    if let Some(t) = res.trace {
        write!(err, "{t}").map_err(io_err)?;
    }
    Ok(())
}

/// Parses `name=v1,v2` into a grid axis.
fn axis(spec: &str) -> Result<(String, Vec<u64>)> {
    let (name, vals) = spec.split_once('=').ok_or_else(|| Error::param(format!("sweep {spec:?} is not name=values")))?;
    let name = match name {
        "small" | "S" => "small",
        "large-count" | "L" => "large-count",
        "w" | "width" => "w",
        "k" | "stripes" => "k",
        "B" => "B",
        "M" => "M",
        "seed" => "seed",
        other => return Err(Error::param(format!("unknown sweep axis {other:?}"))),
    };
    let vals = vals
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| v.trim().parse::<u64>().map_err(|_| Error::param(format!("bad sweep value {v:?}"))))
        .collect::<Result<Vec<_>>>()?;
    Ok((name.to_string(), vals))
}

fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let algos = a.algo.iter().map(|s| s.parse()).collect::<Result<Vec<Algo>>>()?;
    let axes = a.sweep.iter().map(|s| axis(s)).collect::<Result<Vec<_>>>()?;
    let mut grid: Vec<Vec<(String, u64)>> = vec![vec![]];
    for (name, vals) in &axes {
        grid = grid.into_iter().flat_map(|pt| vals.iter().map(move |&v| [pt.clone(), vec![(name.clone(), v)]].concat())).collect();
    }
    writeln!(out, "{CSV_HEADER}").map_err(io_err)?;
    for pt in grid {
        let mut gp =
            GenParams { small: a.small, large_count: a.large_count, width: a.width, stripes: a.stripes, sizes: None, seed: a.seed };
        let mut machine = a.machine.clone();
        for (name, v) in &pt {
            let v = *v;
            match name.as_str() {
                "small" => gp.small = v as usize,
                "large-count" => gp.large_count = v as usize,
                "w" => gp.width = v as usize,
                "k" => gp.stripes = v as usize,
                "B" => machine.b = v as usize,
                "M" => machine.m = v as usize,
                _ => gp.seed = v,
            }
        }
        let inst = gen_instance(&gp)?;
        for &algo in &algos {
            let res = run_experiment(&inst, &config(algo, &machine, false)?)?;
            writeln!(out, "{}", res.row.to_csv()).map_err(io_err)?;
        }
    }
    Ok(())
}

fn cmd_bounds(a: &BoundsArgs, out: &mut dyn Write) -> Result<()> {
    let shape = Shape::new(a.s, a.l, a.w, a.k, a.b, a.m);
    let sizes = match &a.sizes {
        Some(s) => s.clone(),
        None => {
            let n = a.l / a.w.max(1);
            if a.k == 0 {
                return Err(Error::param("k must be at least 1"));
            }
            (0..a.k).map(|i| n / a.k + usize::from(i < n % a.k)).collect()
        }
    };
    if sizes.len() != a.k {
        return Err(Error::param(format!("{} stripe sizes for k = {}", sizes.len(), a.k)));
    }
    let p = a.prices.as_deref().map(prices).transpose()?.map(|p| (p.a, p.b, p.c));
    let rep = BoundReport::evaluate(&shape, &sizes, p)?;
    write!(out, "{}{}", rep.to_key_values(), rep.to_csv()).map_err(io_err)
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    let res = match &cli.cmd {
        Command::Gen(a) => cmd_gen(a, out),
        Command::Run(a) => cmd_run(a, out, err),
        Command::Bench(a) => cmd_bench(a, out),
        Command::Bounds(a) => cmd_bounds(a, out),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "damlab: {e}");
            e.exit_code()
        }
    }
}
