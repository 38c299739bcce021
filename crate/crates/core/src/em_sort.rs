//! Multiway external mergesort for unit and wide records.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::dam::{Dam, Handle, IoCount, Run, RunReader, RunWriter, Segment};
use crate::error::{Error, Result};
use crate::model::Key;

/// Merge fanout: `⌊M/w⌋` when records are at least a block wide, otherwise
/// `⌊M/B⌋ - 1` input buffers plus one output buffer.
pub fn fanout(dam: &Dam, w: usize) -> usize {
    if w >= dam.b() {
        dam.m() / w
    } else {
        (dam.m() / dam.b()).saturating_sub(1)
    }
}

/// Number of merge passes after run formation, for `n` records.
pub fn merge_passes(dam: &Dam, w: usize, n: usize) -> usize {
    let f = fanout(dam, w);
    let per_run = if w >= dam.b() { dam.m() / w } else { (dam.m() / dam.b()) * dam.per_block(w) };
    let mut runs = n.div_ceil(per_run.max(1));
    let mut passes = 0;
    while runs > 1 {
        runs = runs.div_ceil(f);
        passes += 1;
    }
    passes
}

fn check(dam: &Dam, w: usize) -> Result<()> {
    if w < dam.b() {
        if dam.m() < 3 * dam.b() {
            return Err(Error::param(format!("mergesort needs M >= 3B (M={}, B={})", dam.m(), dam.b())));
        }
    } else if 2 * w > dam.m() {
        return Err(Error::param(format!("record width {w} exceeds M/2 = {}", dam.m() / 2)));
    }
    Ok(())
}

/// Sorts a run of unit records.
pub fn merge_sort_small(dam: &mut Dam, run: Run) -> Result<Run> {
    if run.w != 1 {
        return Err(Error::contract(format!("merge_sort_small given records of width {}", run.w)));
    }
    merge_sort(dam, run)
}

/// Sorts a run of width-`w` records.
pub fn merge_sort_large(dam: &mut Dam, run: Run) -> Result<Run> {
    merge_sort(dam, run)
}

/// Sorts a run of any single width.
pub fn merge_sort(dam: &mut Dam, run: Run) -> Result<Run> {
    let len = run.len;
    sort_range(dam, run, 0, len)
}

/// Sorts records `skip..skip + len` of `run` into a new run.
pub fn sort_range(dam: &mut Dam, run: Run, skip: usize, len: usize) -> Result<Run> {
    let w = run.w;
    check(dam, w)?;
    let mut runs = form_runs(dam, RunReader::range(run, skip, len), w)?;
    let f = fanout(dam, w);
    while runs.len() > 1 {
        let mut next = Vec::with_capacity(runs.len().div_ceil(f));
        let mut it = runs.into_iter().peekable();
        while it.peek().is_some() {
            let group: Vec<Run> = it.by_ref().take(f).collect();
            next.push(merge_runs(dam, group, w)?);
        }
        runs = next;
    }
    Ok(runs.pop().unwrap_or_else(|| Run::empty(w)))
}

/// Fills memory, sorts it and writes it out, until the input is exhausted.
fn form_runs(dam: &mut Dam, mut reader: RunReader, w: usize) -> Result<Vec<Run>> {
    let mut runs = Vec::new();
    while reader.remaining() > 0 {
        let mut chunk: Vec<(Key, Handle)> = Vec::new();
        loop {
            if let Some(vol) = reader.needs_load(dam) {
                if dam.free() < vol {
                    break;
                }
            }
            match reader.next(dam)? {
                Some(h) => chunk.push((dam.key(h)?, h)),
                None => break,
            }
        }
        if chunk.is_empty() {
            return Err(Error::residency("no room to form a run"));
        }
        chunk.sort_unstable_by_key(|p| p.0);
        let mut out = RunWriter::new(w);
        for (_, h) in chunk {
            out.push(dam, h)?;
        }
        runs.push(out.finish(dam)?);
    }
    Ok(runs)
}

fn merge_runs(dam: &mut Dam, group: Vec<Run>, w: usize) -> Result<Run> {
    let mut readers: Vec<RunReader> = group.into_iter().map(RunReader::new).collect();
    let mut heap = BinaryHeap::with_capacity(readers.len());
    for (i, r) in readers.iter_mut().enumerate() {
        if let Some(h) = r.next(dam)? {
            heap.push(Reverse((dam.key(h)?, i, h)));
        }
    }
    let mut out = RunWriter::new(w);
    while let Some(Reverse((_, i, h))) = heap.pop() {
        out.push(dam, h)?;
        if let Some(h) = readers[i].next(dam)? {
            heap.push(Reverse((dam.key(h)?, i, h)));
        }
    }
    out.finish(dam)
}

/// Sorts each stripe independently, in stripe order. Returns one run per
/// stripe and the cost of each stripe's sort.
pub fn sort_stripes(dam: &mut Dam, stripes: &[Segment]) -> Result<(Vec<Run>, Vec<IoCount>)> {
    let mut runs = Vec::with_capacity(stripes.len());
    let mut costs = Vec::with_capacity(stripes.len());
    for seg in stripes {
        let before = dam.io();
        runs.push(sort_range(dam, seg.run.clone(), seg.skip, seg.len)?);
        costs.push(dam.io() - before);
    }
    Ok((runs, costs))
}

/// Consecutive segments of `sizes` records over one run.
pub fn split_segments(run: &Run, sizes: &[usize]) -> Vec<Segment> {
    let mut skip = 0;
    sizes
        .iter()
        .map(|&len| {
            let seg = Segment { run: run.clone(), skip, len };
            skip += len;
            seg
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Record;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shuffled(n: u64, seed: u64) -> Vec<u64> {
        let mut v: Vec<u64> = (1..=n).map(|x| x * 3).collect();
        v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        v
    }

    fn keys(dam: &Dam, run: &Run) -> Vec<u64> {
        dam.peek_run(run).iter().map(|s| s.rec.key.0).collect()
    }

    #[test]
    fn single_load_costs_two_passes_over_data() {
        let mut dam = Dam::new(4, 64).unwrap();
        let recs: Vec<Record> = shuffled(50, 1).into_iter().map(Record::small).collect();
        let run = dam.place_records(&recs).unwrap();
        let out = merge_sort_small(&mut dam, run).unwrap();
        assert_eq!(dam.io().total(), 2 * 50usize.div_ceil(4) as u64);
        let mut want: Vec<u64> = recs.iter().map(|r| r.key.0).collect();
        want.sort_unstable();
        assert_eq!(keys(&dam, &out), want);
        assert_eq!(dam.used(), 0);
    }

    #[test]
    fn hand_traced_three_pass_sort() {
        // 8 runs of 8, fanout 3: 8 -> 3 -> 1, three passes of 64 block transfers
        let mut dam = Dam::new(2, 8).unwrap();
        let recs: Vec<Record> = shuffled(64, 2).into_iter().map(Record::small).collect();
        let run = dam.place_records(&recs).unwrap();
        assert_eq!(merge_passes(&dam, 1, 64), 2);
        let out = merge_sort_small(&mut dam, run).unwrap();
        assert_eq!(dam.io().total(), 192);
        assert!(keys(&dam, &out).windows(2).all(|p| p[0] < p[1]));
        assert!(dam.peak() <= 8);
    }

    #[test]
    fn memory_preconditions() {
        let mut dam = Dam::new(4, 8).unwrap();
        let run = dam.place_records(&[Record::small(1)]).unwrap();
        assert!(matches!(merge_sort_small(&mut dam, run), Err(Error::Parameter(_))));
        let mut dam = Dam::new(4, 16).unwrap();
        let run = dam.place_records(&[Record::large(1, 9)]).unwrap();
        assert!(matches!(merge_sort_large(&mut dam, run), Err(Error::Parameter(_))));
    }

    #[test]
    fn large_single_load_and_single_record() {
        let mut dam = Dam::new(4, 32).unwrap();
        let recs: Vec<Record> = shuffled(4, 3).into_iter().map(|k| Record::large(k, 8)).collect();
        let run = dam.place_records(&recs).unwrap();
        merge_sort_large(&mut dam, run).unwrap();
        assert_eq!(dam.io().total(), 2 * 4 * 2);

        let mut dam = Dam::new(4, 32).unwrap();
        let run = dam.place_records(&[Record::large(5, 10)]).unwrap();
        merge_sort_large(&mut dam, run).unwrap();
        assert_eq!(dam.io().total(), 6);
    }

    #[test]
    fn large_multi_pass() {
        // 16 records of width 4, fanout 4: 4 runs of 4, one merge pass
        let mut dam = Dam::new(4, 16).unwrap();
        let recs: Vec<Record> = shuffled(16, 4).into_iter().map(|k| Record::large(k, 4)).collect();
        let run = dam.place_records(&recs).unwrap();
        let out = merge_sort_large(&mut dam, run).unwrap();
        assert_eq!(dam.io().total(), 64);
        assert!(keys(&dam, &out).windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn sub_block_large_records_pack() {
        let mut dam = Dam::new(8, 32).unwrap();
        let recs: Vec<Record> = shuffled(40, 5).into_iter().map(|k| Record::large(k, 2)).collect();
        let run = dam.place_records(&recs).unwrap();
        assert_eq!(run.blocks(), 10);
        let out = merge_sort_large(&mut dam, run).unwrap();
        assert_eq!(out.blocks(), 10);
        assert!(keys(&dam, &out).windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn stripes_sort_independently() {
        let mut dam = Dam::new(4, 16).unwrap();
        let mut recs: Vec<Record> = shuffled(8, 6).into_iter().map(|k| Record::large(k, 4)).collect();
        recs.extend(shuffled(8, 7).into_iter().map(|k| Record::large(k + 1000, 4)));
        let run = dam.place_records(&recs).unwrap();
        let (runs, costs) = sort_stripes(&mut dam, &split_segments(&run, &[8, 8])).unwrap();
        assert_eq!(costs.iter().copied().fold(IoCount::default(), |a, b| a + b), dam.io());
        for (i, half) in recs.chunks(8).enumerate() {
            let mut solo = Dam::new(4, 16).unwrap();
            let r = solo.place_records(half).unwrap();
            merge_sort_large(&mut solo, r).unwrap();
            assert_eq!(solo.io(), costs[i]);
            let mut want: Vec<u64> = half.iter().map(|r| r.key.0).collect();
            want.sort_unstable();
            assert_eq!(keys(&dam, &runs[i]), want);
        }
    }

    #[test]
    fn singleton_stripes_cost_one_round_trip_each() {
        let mut dam = Dam::new(4, 32).unwrap();
        let recs: Vec<Record> = (0..5).map(|k| Record::large(k, 8)).collect();
        let run = dam.place_records(&recs).unwrap();
        sort_stripes(&mut dam, &split_segments(&run, &[1; 5])).unwrap();
        assert_eq!(dam.io().total(), 5 * 2 * 2);
    }
}
