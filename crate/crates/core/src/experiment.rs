//! One algorithm run on one instance, checked against its oracle and
//! reported as a CSV row. Shared by the command line and the C interface.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::bounds::{fmt_num, lg, log_base, ple_lower_terms, ple_upper_terms, ram_bound, sort_bound, Shape};
use crate::dam::{Dam, IoCount};
use crate::error::{Error, Result};
use crate::full_sort::{sort_instance, SortOptions};
use crate::model::{brute_force_predecessors, Instance, Key};
use crate::ple::{choose_algo, run_ple, BorderMode, PleAlgo, PleOutcome};
use crate::ple_special::{build_sampled_index, kk_sort_2b, query_sampled, KkOptions, DEFAULT_NODE_BUDGET};
use crate::ram::{priced_sort, PriceTriple, RamLedger};

pub const CSV_HEADER: &str = "algo,S,L,w,k,B,M,seed,reads,writes,total_ios,bound_lower,bound_upper,ratio_upper";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algo {
    Ram,
    SortDam,
    PleDfs,
    PleBfs,
    PleAuto,
    Sampled,
    TwoB,
}

impl Algo {
    pub const ALL: [Algo; 7] = [Algo::Ram, Algo::SortDam, Algo::PleDfs, Algo::PleBfs, Algo::PleAuto, Algo::Sampled, Algo::TwoB];

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Ram => "ram",
            Algo::SortDam => "sort-dam",
            Algo::PleDfs => "ple-dfs",
            Algo::PleBfs => "ple-bfs",
            Algo::PleAuto => "ple-auto",
            Algo::Sampled => "sampled",
            Algo::TwoB => "2btree",
        }
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| Error::param(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunConfig {
    pub algo: Algo,
    pub b: usize,
    pub m: usize,
    pub prices: PriceTriple,
    /// Phase length for the 2^B-tree sort; `None` uses the validity formula.
    pub j: Option<usize>,
    pub node_budget: usize,
    pub trace: bool,
}

impl RunConfig {
    pub fn new(algo: Algo, b: usize, m: usize) -> Self {
        RunConfig { algo, b, m, prices: PriceTriple { a: 1.0, b: 2.0, c: 4.0 }, j: None, node_budget: DEFAULT_NODE_BUDGET, trace: false }
    }
}

/// One CSV row. For `ram` the transfer columns are zero, the bounds are the
/// comparison-cost formula and the ratio compares total comparison cost.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRow {
    pub algo: String,
    pub s: usize,
    pub l: usize,
    pub w: usize,
    pub k: usize,
    pub b: usize,
    pub m: usize,
    pub seed: u64,
    pub reads: u64,
    pub writes: u64,
    pub total_ios: u64,
    pub bound_lower: f64,
    pub bound_upper: f64,
    pub ratio_upper: f64,
}

impl ExperimentRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algo,
            self.s,
            self.l,
            self.w,
            self.k,
            self.b,
            self.m,
            self.seed,
            self.reads,
            self.writes,
            self.total_ios,
            fmt_num(self.bound_lower),
            fmt_num(self.bound_upper),
            fmt_num(self.ratio_upper)
        )
    }
}

/// A checked run: the row, named detail counters and the optional trace.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub row: ExperimentRow,
    pub details: Vec<(String, String)>,
    pub trace: Option<String>,
}

impl RunResult {
    pub fn details_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.details {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

fn oracle(msg: impl Into<String>) -> Error {
    Error::Oracle(msg.into())
}

fn check_placement(dam: &Dam, inst: &Instance, out: &PleOutcome) -> Result<()> {
    let smalls: Vec<Key> = inst.sorted_small_keys();
    let want = brute_force_predecessors(&smalls, &out.assignment.keys)?;
    if want.pred != out.assignment.pred {
        return Err(oracle("predecessor assignment differs from the scan"));
    }
    let mut placed = 0;
    for (seg, &p) in out.stripes.iter().zip(&out.stripe_preds) {
        let slots = dam.peek_run(&seg.run);
        let part = slots.get(seg.skip..seg.skip + seg.len).ok_or_else(|| oracle("stripe outside its run"))?;
        for s in part {
            if smalls.partition_point(|&x| x < s.rec.key) != p {
                return Err(oracle(format!("record {} placed in stripe after {p} smalls", s.rec.key)));
            }
        }
        placed += part.len();
    }
    if placed != inst.large_count() || out.stripe_sizes != inst.stripe_sizes {
        return Err(oracle("stripe sizes differ from the instance profile"));
    }
    Ok(())
}

fn ratio(total: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        total / bound
    } else {
        f64::NAN
    }
}

/// Runs `cfg.algo` on `inst` under a fresh simulator and verifies the result.
pub fn run_experiment(inst: &Instance, cfg: &RunConfig) -> Result<RunResult> {
    let (s, n, w, k, b, m) = (inst.small_count(), inst.large_count(), inst.w, inst.k, cfg.b, cfg.m);
    let mut row = ExperimentRow {
        algo: cfg.algo.name().to_string(),
        s,
        l: n,
        w,
        k,
        b,
        m,
        seed: inst.seed,
        reads: 0,
        writes: 0,
        total_ios: 0,
        bound_lower: 0.0,
        bound_upper: 0.0,
        ratio_upper: 0.0,
    };
    let mut details = Vec::new();
    if cfg.algo == Algo::Ram {
        cfg.prices.check()?;
        let (out, led) = priced_sort(&inst.small_keys(), &inst.large_keys(), cfg.prices)?;
        let got: Vec<Key> = out.iter().map(|p| p.0).collect();
        let want: Vec<Key> = inst.sorted_records().iter().map(|r| r.key).collect();
        if got != want {
            return Err(oracle("priced sort output differs from the trusted sort"));
        }
        let bound = ram_bound(s.max(n), k, &inst.stripe_sizes, cfg.prices.a, cfg.prices.b, cfg.prices.c);
        row.bound_lower = bound;
        row.bound_upper = bound;
        row.ratio_upper = ratio(led.total_cost, bound);
        details.extend(ram_details(&led));
        return Ok(RunResult { row, details, trace: None });
    }

    let mut dam = Dam::new(b, m)?;
    if cfg.trace {
        dam.enable_trace();
    }
    let shape = Shape::new(s, n * w, w, k.max(1), b, m);
    let (lower, upper) = match cfg.algo {
        Algo::Ram => unreachable!(),
        Algo::SortDam => {
            let out = sort_instance(&mut dam, inst, SortOptions::default())?;
            let got: Vec<_> = dam.peek_run(&out.output).into_iter().map(|s| s.rec).collect();
            if got != inst.sorted_records() {
                return Err(oracle("sorted output differs from the trusted sort"));
            }
            if out.total() != dam.io() {
                return Err(oracle("phase ledgers do not add up to the session total"));
            }
            let vols: Vec<f64> = inst.stripe_sizes.iter().map(|&c| (c * w) as f64).collect();
            let lo = ple_lower_terms(&shape)?.value();
            let hi = ple_upper_terms(&shape)?.value();
            details.push(("ple".into(), out.plan.algo.name().into()));
            for (name, io) in [("small_sort", out.small_sort), ("ple", out.ple), ("stripes", out.stripes), ("emission", out.emission)] {
                details.push((format!("{name}_ios"), io.total().to_string()));
            }
            (sort_bound(&shape, &vols, lo)?, sort_bound(&shape, &vols, hi)?)
        }
        Algo::PleDfs | Algo::PleBfs | Algo::PleAuto => {
            let smalls = dam.place_records(&inst.sorted_smalls())?;
            let larges = dam.place_records(&inst.larges)?;
            let t = ple_upper_terms(&shape)?;
            let algo = match cfg.algo {
                Algo::PleDfs => PleAlgo::Dfs,
                Algo::PleBfs => PleAlgo::Bfs,
                _ => choose_algo(s, n, w, k, b, m)?,
            };
            let out = run_ple(&mut dam, &smalls, &larges, algo, BorderMode::Auto)?;
            check_placement(&dam, inst, &out)?;
            if cfg.algo == Algo::PleAuto {
                row.algo = format!("ple-auto:{}", algo.name());
            }
            details.push(("descents".into(), out.stats.descents.to_string()));
            details.push(("duplicate_node_loads".into(), out.stats.duplicate_node_loads().to_string()));
            let hi = match algo {
                PleAlgo::Dfs => t.second,
                PleAlgo::Bfs => t.first,
            };
            (ple_lower_terms(&shape)?.value(), hi)
        }
        Algo::Sampled => {
            let smalls = dam.place_records(&inst.sorted_smalls())?;
            let idx = build_sampled_index(&mut dam, &smalls)?;
            let build = dam.io();
            let sorted = inst.sorted_small_keys();
            let mut worst = 0;
            for key in inst.large_keys() {
                let before = dam.io().reads;
                let got = query_sampled(&mut dam, &idx, key)?;
                worst = worst.max(dam.io().reads - before);
                if got != sorted.partition_point(|&x| x < key) {
                    return Err(oracle(format!("sampled query for {key} returned {got}")));
                }
            }
            details.push(("beta".into(), idx.beta.to_string()));
            details.push(("extra_blocks".into(), idx.extra_blocks().to_string()));
            details.push(("build_ios".into(), build.total().to_string()));
            details.push(("max_query_reads".into(), worst.to_string()));
            let per = log_base(b as f64, s as f64);
            let scan = (s as f64 / b as f64).ceil();
            (n as f64 * per, 2.0 * scan + n as f64 * (3.0 * per + 3.0))
        }
        Algo::TwoB => {
            let smalls = dam.place_records(&inst.sorted_smalls())?;
            let larges = dam.place_records(&inst.larges)?;
            let rep = kk_sort_2b(&mut dam, &smalls, &larges, KkOptions { j: cfg.j, node_budget: cfg.node_budget })?;
            let got: Vec<_> = dam.peek_run(&rep.output).into_iter().map(|s| s.rec).collect();
            if got != inst.sorted_records() {
                return Err(oracle("2^B-tree output differs from the trusted sort"));
            }
            for (name, v) in [
                ("j", rep.j as u64),
                ("g", rep.g as u64),
                ("swipes", rep.swipes as u64),
                ("preprocessing_ios", rep.preprocessing.total()),
                ("query_short_ios", rep.query_short.total()),
                ("query_large_ios", rep.query_large.total()),
                ("emission_ios", rep.emission.total()),
                ("halving_failures", rep.audit.failures as u64),
            ] {
                details.push((name.into(), v.to_string()));
            }
            let (kf, bf) = (n as f64, b as f64);
            let parts = (w as f64 / bf).ceil();
            let hi = kf / bf * lg(kf) + kf * parts;
            (ple_lower_terms(&shape)?.value(), hi)
        }
    };
    let io: IoCount = dam.io();
    row.reads = io.reads;
    row.writes = io.writes;
    row.total_ios = io.total();
    row.bound_lower = lower;
    row.bound_upper = upper;
    row.ratio_upper = ratio(io.total() as f64, upper);
    let trace = cfg.trace.then(|| dam.ledger().trace_text());
    Ok(RunResult { row, details, trace })
}

fn ram_details(led: &RamLedger) -> Vec<(String, String)> {
    vec![
        ("count_a".into(), led.count_a.to_string()),
        ("count_b".into(), led.count_b.to_string()),
        ("count_c".into(), led.count_c.to_string()),
        ("total_cost".into(), fmt_num(led.total_cost)),
        ("red_descents".into(), led.red_descents.to_string()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gen_instance, gen_subproblem, GenParams, Subproblem};

    fn inst(k: usize, seed: u64) -> Instance {
        gen_instance(&GenParams { small: 256, large_count: 64, width: 8, stripes: k, sizes: None, seed }).unwrap()
    }

    #[test]
    fn algo_names_round_trip() {
        for a in Algo::ALL {
            assert_eq!(a.name().parse::<Algo>().unwrap(), a);
        }
        assert!("quick".parse::<Algo>().is_err());
    }

    #[test]
    fn every_algorithm_passes_its_oracle() {
        let i = inst(4, 1);
        for a in [Algo::Ram, Algo::SortDam, Algo::PleDfs, Algo::PleBfs, Algo::PleAuto, Algo::Sampled] {
            let r = run_experiment(&i, &RunConfig::new(a, 4, 64)).unwrap();
            assert!(r.row.ratio_upper > 0.0, "{a:?}");
            assert_eq!(r.row.to_csv().split(',').count(), CSV_HEADER.split(',').count());
        }
        let kk = gen_subproblem(Subproblem::KK { k: 64 }, 2, 3).unwrap();
        let cfg = RunConfig { j: Some(1), ..RunConfig::new(Algo::TwoB, 2, 32) };
        let r = run_experiment(&kk, &cfg).unwrap();
        assert!(r.details.contains(&("g".to_string(), "5".to_string())));
    }

    #[test]
    fn ram_on_interleaved_reports_no_blue_comparisons() {
        let kk = gen_subproblem(Subproblem::KK { k: 32 }, 1, 2).unwrap();
        let r = run_experiment(&kk, &RunConfig::new(Algo::Ram, 4, 64)).unwrap();
        assert!(r.details.contains(&("count_c".to_string(), "0".to_string())));
        assert_eq!(r.row.total_ios, 0);
    }

    #[test]
    fn rows_are_deterministic() {
        let i = inst(3, 7);
        let cfg = RunConfig::new(Algo::SortDam, 4, 64);
        assert_eq!(run_experiment(&i, &cfg).unwrap().row, run_experiment(&i, &cfg).unwrap().row);
    }

    #[test]
    fn trace_replays_to_the_row() {
        let i = inst(2, 9);
        let cfg = RunConfig { trace: true, ..RunConfig::new(Algo::PleDfs, 4, 64) };
        let r = run_experiment(&i, &cfg).unwrap();
        let io = crate::dam::replay_trace(r.trace.as_deref().unwrap()).unwrap();
        assert_eq!((io.reads, io.writes), (r.row.reads, r.row.writes));
    }

    #[test]
    fn error_exit_codes() {
        let i = inst(2, 9);
        let e = run_experiment(&i, &RunConfig::new(Algo::SortDam, 4, 4)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert_eq!(oracle("x").exit_code(), 3);
        assert_eq!(Error::Io("x".into()).exit_code(), 4);
    }
}
