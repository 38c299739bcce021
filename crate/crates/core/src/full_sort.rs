//! Two-sized sorting: sort the smalls, place the larges into stripes, sort
//! each stripe, then interleave everything into one contiguous output run.

use crate::bounds::{av_bound, ple_upper_terms, Shape};
use crate::dam::{Dam, IoCount, Run, RunReader, RunWriter};
use crate::em_sort::{fanout, merge_sort_small, sort_stripes};
use crate::error::Result;
use crate::model::{format_records, Instance};
use crate::ple::{bfs_fanout, choose_algo, run_ple, BorderMode, PleAlgo, PleStats};

/// Which placement algorithm the pipeline runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PleChoice {
    #[default]
    Auto,
    Dfs,
    Bfs,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SortOptions {
    pub ple: PleChoice,
    /// Stripe count assumed when choosing the placement algorithm; defaults
    /// to the worst case `min(L, S+1)`.
    pub k_hint: Option<usize>,
    pub border: BorderMode,
}

/// Chosen placement and the predicted cost of each phase.
#[derive(Clone, Debug, PartialEq)]
pub struct SortPlan {
    pub algo: PleAlgo,
    pub small_sort: f64,
    pub ple: f64,
    pub stripes: f64,
    pub emission: f64,
    pub total: f64,
    pub small_fanout: usize,
    pub large_fanout: usize,
    pub ple_fanout: usize,
}

impl SortPlan {
    pub fn new(s: usize, l: usize, w: usize, b: usize, m: usize, opts: &SortOptions) -> Result<Self> {
        let k_hint = opts.k_hint.unwrap_or(l.min(s + 1)).max(1);
        let algo = match opts.ple {
            PleChoice::Auto => choose_algo(s, l, w, k_hint, b, m)?,
            PleChoice::Dfs => PleAlgo::Dfs,
            PleChoice::Bfs => PleAlgo::Bfs,
        };
        let vol = (l * w) as f64;
        let terms = ple_upper_terms(&Shape::new(s, l * w, w, k_hint, b, m))?;
        let ple = match algo {
            PleAlgo::Bfs => terms.first,
            PleAlgo::Dfs => terms.second,
        };
        let small_sort = av_bound(s as f64, 1.0, b as f64, m as f64)?;
        let stripes = av_bound(vol, w as f64, b as f64, m as f64)?;
        let emission = (s as f64 + vol) / b as f64;
        let probe = Dam::new(b, m)?;
        Ok(SortPlan {
            algo,
            small_sort,
            ple,
            stripes,
            emission,
            total: small_sort + ple + stripes + emission,
            small_fanout: fanout(&probe, 1),
            large_fanout: fanout(&probe, w),
            ple_fanout: match algo {
                PleAlgo::Bfs => bfs_fanout(b, m, w),
                PleAlgo::Dfs => b.max(2),
            },
        })
    }
}

/// Sorted output and the cost of every phase.
#[derive(Clone, Debug)]
pub struct SortOutcome {
    pub output: Run,
    pub plan: SortPlan,
    pub small_sort: IoCount,
    pub ple: IoCount,
    pub stripes: IoCount,
    pub emission: IoCount,
    pub stripe_sizes: Vec<usize>,
    pub stripe_costs: Vec<IoCount>,
    pub ple_stats: PleStats,
}

impl SortOutcome {
    pub fn total(&self) -> IoCount {
        self.small_sort + self.ple + self.stripes + self.emission
    }
}

/// Sorts smalls (width 1, any order unless `smalls_sorted`) and larges
/// (one width) into a single ascending run.
pub fn two_sized_sort(dam: &mut Dam, smalls: &Run, smalls_sorted: bool, larges: &Run, opts: SortOptions) -> Result<SortOutcome> {
    let plan = SortPlan::new(smalls.len, larges.len, larges.w, dam.b(), dam.m(), &opts)?;

    let before = dam.io();
    let sorted = if smalls_sorted || smalls.len <= 1 { smalls.clone() } else { merge_sort_small(dam, smalls.clone())? };
    let small_sort = dam.io() - before;

    let before = dam.io();
    let placed = run_ple(dam, &sorted, larges, plan.algo, opts.border)?;
    let ple = dam.io() - before;

    let before = dam.io();
    let (runs, stripe_costs) = sort_stripes(dam, &placed.stripes)?;
    let stripes = dam.io() - before;

    let before = dam.io();
    let mut order: Vec<(usize, Run)> = placed.stripe_preds.iter().copied().zip(runs).collect();
    order.sort_by_key(|p| p.0);
    let mut small_reader = RunReader::new(sorted);
    let mut out = RunWriter::mixed();
    let mut emitted = 0;
    for (pred, run) in order {
        while emitted < pred {
            if let Some(h) = small_reader.next(dam)? {
                out.push(dam, h)?;
            }
            emitted += 1;
        }
        let mut r = RunReader::new(run);
        while let Some(h) = r.next(dam)? {
            out.push(dam, h)?;
        }
    }
    while let Some(h) = small_reader.next(dam)? {
        out.push(dam, h)?;
    }
    let output = out.finish(dam)?;
    let emission = dam.io() - before;

    Ok(SortOutcome {
        output,
        plan,
        small_sort,
        ple,
        stripes,
        emission,
        stripe_sizes: placed.stripe_sizes,
        stripe_costs,
        ple_stats: placed.stats,
    })
}

/// Stages `inst` on a fresh region of `dam` and sorts it.
pub fn sort_instance(dam: &mut Dam, inst: &Instance, opts: SortOptions) -> Result<SortOutcome> {
    let smalls = dam.place_records(&inst.smalls)?;
    let larges = dam.place_records(&inst.larges)?;
    two_sized_sort(dam, &smalls, inst.smalls_sorted, &larges, opts)
}

/// The output run in the instance text format, flagged `SORTED`.
pub fn dump_sorted(dam: &Dam, inst: &Instance, output: &Run) -> String {
    let recs: Vec<_> = dam.peek_run(output).into_iter().map(|s| s.rec).collect();
    format_records(&inst.header(true), &recs)
}
