//! Sampled predecessor index and the 2^B-tree for perfectly interleaved
//! instances.

use std::collections::{BTreeMap, BTreeSet};

use crate::dam::{Dam, Handle, IoCount, NodeBlock, Run, RunReader, RunWriter};
use crate::error::{Error, Result};
use crate::model::{Key, Record};
use crate::ple::StaticBTree;

/// Default cap on the node count of one 2^B-tree.
pub const DEFAULT_NODE_BUDGET: usize = 1 << 20;

/// Smallest `β` with `β^{log₂B} ≥ n`.
pub fn sample_stride(n: usize, b: usize) -> usize {
    let e = (b as f64).log2();
    let covers = |beta: usize| (beta as f64).powf(e) >= n as f64;
    let mut beta = ((n.max(1) as f64).powf(1.0 / e).ceil() as usize).max(1);
    while beta > 1 && covers(beta - 1) {
        beta -= 1;
    }
    while !covers(beta) {
        beta += 1;
    }
    beta
}

/// Predecessor index over a sorted run: every `β`-th key is copied into a
/// sample run indexed by a static B-tree.
#[derive(Clone, Debug)]
pub struct SampledIndex {
    pub n: usize,
    pub beta: usize,
    base: Run,
    samples: Run,
    tree: StaticBTree,
}

impl SampledIndex {
    pub fn sample_count(&self) -> usize {
        self.samples.len
    }

    pub fn sample_blocks(&self) -> u64 {
        self.samples.blocks()
    }

    /// Blocks beyond the base array: the samples and their index nodes.
    pub fn extra_blocks(&self) -> u64 {
        self.samples.blocks() + self.tree.nodes as u64
    }

    pub fn tree_height(&self) -> usize {
        self.tree.height
    }
}

/// One scan over `base` writing out every `β`-th key, then a B-tree over them.
pub fn build_sampled_index(dam: &mut Dam, base: &Run) -> Result<SampledIndex> {
    let b = dam.b();
    if b < 4 {
        return Err(Error::param(format!("sampled index needs B >= 4, got {b}")));
    }
    if base.w != 1 {
        return Err(Error::contract(format!("sampled index over records of width {}", base.w)));
    }
    let n = base.len;
    let beta = sample_stride(n, b);
    let mut reader = RunReader::new(base.clone());
    let mut out = RunWriter::new(1);
    let mut i = 0;
    while let Some(h) = reader.next(dam)? {
        if i % beta == 0 {
            let k = dam.key(h)?;
            let s = dam.admit(Record::small(k.0))?;
            out.push(dam, s)?;
        }
        dam.release(&[h])?;
        i += 1;
    }
    let samples = out.finish(dam)?;
    let tree = StaticBTree::build(dam, &samples)?;
    Ok(SampledIndex { n, beta, base: base.clone(), samples, tree })
}

/// Number of base keys smaller than `x`.
pub fn query_sampled(dam: &mut Dam, idx: &SampledIndex, x: Key) -> Result<usize> {
    let p = idx.tree.descend(dam, x)?.pred;
    if p == 0 {
        return Ok(0);
    }
    // base[(p-1)β] < x, and x < base[pβ] when that exists
    let first = (p - 1) * idx.beta;
    let (mut lo, mut hi) = (first + 1, idx.n.min(p * idx.beta));
    let b = dam.b();
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        let bi = mid / b;
        let addr = idx.base.block_at(bi as u64).ok_or_else(|| Error::contract("base run truncated"))?;
        let hs = dam.load_block(addr)?;
        let (from, to) = (lo.max(bi * b), hi.min(bi * b + hs.len()));
        let mut below = 0;
        for &h in &hs[from - bi * b..to - bi * b] {
            let k = dam.key(h)?;
            if k == x {
                dam.release(&hs)?;
                return Err(Error::contract(format!("query key {x} is present in the base array")));
            }
            if k < x {
                below += 1;
            }
        }
        dam.release(&hs)?;
        if below == to - from {
            lo = to;
        } else if below == 0 {
            hi = from;
        } else {
            return Ok(from + below);
        }
    }
    Ok(lo)
}

/// Candidate predecessor counts `lo..hi` for one tracked query.
pub type Span = (usize, usize);

/// Index of the lower median of a span.
fn pivot(s: Span) -> usize {
    s.0 + (s.1 - s.0).div_ceil(2) - 1
}

fn halve(s: Span, right: bool) -> Span {
    if s.1 - s.0 <= 1 {
        return s;
    }
    let p = pivot(s);
    if right {
        (p + 1, s.1)
    } else {
        (s.0, p + 1)
    }
}

fn child_spans(spans: &[Span], mask: usize) -> Vec<Span> {
    spans.iter().enumerate().map(|(t, &s)| halve(s, mask >> t & 1 == 1)).collect()
}

fn encode(spans: &[Span]) -> Vec<u64> {
    spans.iter().flat_map(|&(lo, hi)| [lo as u64, hi as u64]).collect()
}

fn decode(aux: &[u64]) -> Vec<Span> {
    aux.chunks(2).map(|c| (c[0] as usize, c[1] as usize)).collect()
}

/// Block tree over a sorted array `A` for `B` simultaneous searches. A node
/// holds the medians of `B` tracked spans; its `2^B` children correspond to
/// the comparison outcomes. Levels are stored contiguously, child
/// `idx·2^B + mask`.
#[derive(Clone, Debug)]
pub struct TwoToBTree {
    pub alpha: usize,
    pub arity: usize,
    pub nodes: usize,
    pub root_spans: Vec<Span>,
    level_base: Vec<u64>,
    partition: Option<u64>,
    a_len: usize,
}

/// Per-query record of what one descent did to the tracked spans.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HalvingAudit {
    pub reads: usize,
    pub checks: usize,
    pub failures: usize,
}

impl HalvingAudit {
    fn absorb(&mut self, o: &HalvingAudit) {
        self.reads += o.reads;
        self.checks += o.checks;
        self.failures += o.failures;
    }
}

fn a_key(dam: &mut Dam, a: &Run, cache: &mut BTreeMap<usize, Key>, idx: &BTreeSet<usize>) -> Result<()> {
    let b = dam.b();
    let blocks: BTreeSet<usize> = idx.iter().map(|i| i / b).collect();
    for bi in blocks {
        let addr = a.block_at(bi as u64).ok_or_else(|| Error::contract("pivot outside the array"))?;
        let hs = dam.load_block(addr)?;
        for (o, &h) in hs.iter().enumerate() {
            if idx.contains(&(bi * b + o)) {
                cache.insert(bi * b + o, dam.key(h)?);
            }
        }
        dam.release(&hs)?;
    }
    Ok(())
}

/// Pivot keys for `spans`, reading each needed block of `A` once.
fn pivot_keys(dam: &mut Dam, a: &Run, spans: &[Span]) -> Result<Vec<Key>> {
    let want: BTreeSet<usize> = spans.iter().filter(|s| s.1 - s.0 > 1).map(|&s| pivot(s)).collect();
    let mut cache = BTreeMap::new();
    a_key(dam, a, &mut cache, &want)?;
    Ok(spans.iter().map(|&s| if s.1 - s.0 > 1 { cache[&pivot(s)] } else { Key::default() }).collect())
}

/// Builds `alpha` levels of the 2^B-tree on `a` for the given root spans
/// (one per tracked query). With `partition_root`, a separator node splitting
/// `A` into `B` equal parts is placed above it and the root spans are the parts.
pub fn build_2b_tree(
    dam: &mut Dam,
    a: &Run,
    alpha: usize,
    spans: Option<Vec<Span>>,
    partition_root: bool,
    budget: usize,
) -> Result<TwoToBTree> {
    let b = dam.b();
    let n = a.len;
    if alpha == 0 {
        return Err(Error::param("2^B-tree needs at least one level"));
    }
    if a.w != 1 {
        return Err(Error::contract(format!("2^B-tree over records of width {}", a.w)));
    }
    if b >= usize::BITS as usize || alpha * b >= 63 || 1usize << (alpha * b) > budget {
        return Err(Error::param(format!("2^B-tree with B={b}, alpha={alpha} exceeds the node budget {budget}")));
    }
    let mut partition = None;
    let spans = match (spans, partition_root) {
        (Some(s), false) => s,
        (None, false) => vec![(0, n + 1); b],
        (_, true) => {
            if !n.is_multiple_of(b) || n < b {
                return Err(Error::param(format!("partition root needs B | |A| (|A|={n}, B={b})")));
            }
            let part = n / b;
            let seps: BTreeSet<usize> = (1..b).map(|i| i * part).collect();
            let mut cache = BTreeMap::new();
            a_key(dam, a, &mut cache, &seps)?;
            let addr = dam.alloc(1);
            dam.store_node(addr, NodeBlock { keys: seps.iter().map(|i| cache[i]).collect(), links: vec![], aux: vec![] })?;
            partition = Some(addr);
            (0..b).map(|i| (if i == 0 { 0 } else { i * part + 1 }, (i + 1) * part + 1)).collect()
        }
    };
    if spans.len() != b {
        return Err(Error::contract(format!("{} root spans for B={b}", spans.len())));
    }
    if spans.iter().any(|s| s.0 >= s.1 || s.1 > n + 1) {
        return Err(Error::contract("root span outside the array"));
    }
    let fan = 1usize << b;
    let mut level_base = Vec::with_capacity(alpha);
    let mut count = 1usize;
    let mut nodes = 0;
    for _ in 0..alpha {
        level_base.push(dam.alloc(count as u64));
        nodes += count;
        count *= fan;
    }
    let scratch = dam.reserve(b)?;
    let keys = pivot_keys(dam, a, &spans)?;
    dam.store_node(level_base[0], NodeBlock { keys, links: vec![], aux: encode(&spans) })?;
    let mut width = 1usize;
    for l in 1..alpha {
        for idx in 0..width {
            let h = dam.load_node(level_base[l - 1] + idx as u64)?;
            let parent = decode(&dam.node(h)?.aux);
            for mask in 0..fan {
                let kids = child_spans(&parent, mask);
                let keys = pivot_keys(dam, a, &kids)?;
                dam.store_node(level_base[l] + (idx * fan + mask) as u64, NodeBlock { keys, links: vec![], aux: encode(&kids) })?;
            }
            dam.release(&[h])?;
        }
        width *= fan;
    }
    dam.release(&[scratch])?;
    Ok(TwoToBTree { alpha, arity: b, nodes: nodes + partition.is_some() as usize, root_spans: spans, level_base, partition, a_len: n })
}

impl TwoToBTree {
    /// Descends with `B` resident queries, slot `t` tracking `spans[t]`.
    /// Returns the spans after `alpha` halvings. Query handles must be resident.
    pub fn descend(&self, dam: &mut Dam, queries: &[Handle], spans: &mut [Span]) -> Result<HalvingAudit> {
        let b = self.arity;
        if queries.len() != b || spans.len() != b {
            return Err(Error::contract(format!("{} queries for a tree of arity {b}", queries.len())));
        }
        let mut xs = Vec::with_capacity(b);
        for &q in queries {
            xs.push(dam.key(q)?);
        }
        let mut audit = HalvingAudit::default();
        if let Some(addr) = self.partition {
            let h = dam.load_node(addr)?;
            audit.reads += 1;
            let seps = dam.node(h)?.keys.clone();
            dam.release(&[h])?;
            let part = self.a_len / b;
            for (t, &x) in xs.iter().enumerate() {
                let i = seps.partition_point(|&s| s < x);
                if i != t {
                    return Err(Error::contract(format!("query in slot {t} falls in part {i}; queries must cover the parts in order")));
                }
                spans[t] = (if i == 0 { 0 } else { i * part + 1 }, (i + 1) * part + 1);
            }
        }
        let mut idx = 0usize;
        for l in 0..self.alpha {
            let h = dam.load_node(self.level_base[l] + idx as u64)?;
            audit.reads += 1;
            let (keys, stored) = {
                let n = dam.node(h)?;
                (n.keys.clone(), decode(&n.aux))
            };
            dam.release(&[h])?;
            if stored != spans {
                audit.failures += 1;
            }
            let mut mask = 0;
            for t in 0..b {
                let s = spans[t];
                let w = s.1 - s.0;
                if w <= 1 {
                    continue;
                }
                if xs[t] == keys[t] {
                    return Err(Error::contract(format!("query key {} equals a pivot", xs[t])));
                }
                let right = xs[t] > keys[t];
                mask |= (right as usize) << t;
                let next = halve(s, right);
                let nw = next.1 - next.0;
                audit.checks += 1;
                if nw != w / 2 && nw != w.div_ceil(2) {
                    audit.failures += 1;
                }
                spans[t] = next;
            }
            idx = idx * (1 << b) + mask;
        }
        Ok(audit)
    }
}

/// Knobs for [`kk_sort_2b`].
#[derive(Clone, Copy, Debug)]
pub struct KkOptions {
    /// Levels per phase; `None` evaluates the validity formula.
    pub j: Option<usize>,
    pub node_budget: usize,
}

impl Default for KkOptions {
    fn default() -> Self {
        KkOptions { j: None, node_budget: DEFAULT_NODE_BUDGET }
    }
}

/// Outcome of [`kk_sort_2b`]: the sorted mixed-width run and its costs.
#[derive(Clone, Debug)]
pub struct KkReport {
    pub output: Run,
    pub j: usize,
    pub g: usize,
    /// Passes over the larges after the first phase.
    pub swipes: usize,
    pub trees: usize,
    pub tree_nodes: usize,
    pub preprocessing: IoCount,
    pub query_short: IoCount,
    pub query_large: IoCount,
    pub emission: IoCount,
    pub audit: HalvingAudit,
}

impl KkReport {
    pub fn total(&self) -> IoCount {
        self.preprocessing + self.query_short + self.query_large + self.emission
    }
}

/// Levels per phase from the validity formula, as a real number.
pub fn kk_phase_levels(k: usize, b: usize, m: usize) -> f64 {
    let base = (m as f64 / b as f64).log2();
    let inner = (k as f64 / b as f64).log2() / base;
    (inner.log2() - (b as f64).log2()) / (b as f64 - 1.0)
}

/// One group of search-tree nodes at a phase boundary and its tree.
struct Group {
    /// Node of the binary search tree tracked by each slot.
    slot_node: Vec<usize>,
    /// Distinct nodes in order, with the larges each contributes per batch.
    nodes: Vec<usize>,
    per_batch: usize,
    tree: TwoToBTree,
}

/// Sorts a perfectly interleaved instance: `k+1` sorted smalls and `k`
/// larges, one in every gap, with `w ≥ B`.
pub fn kk_sort_2b(dam: &mut Dam, smalls: &Run, larges: &Run, opts: KkOptions) -> Result<KkReport> {
    let (b, m) = (dam.b(), dam.m());
    let k = larges.len;
    let w = larges.w;
    if smalls.w != 1 {
        return Err(Error::contract("smalls must have width 1"));
    }
    if w < b {
        return Err(Error::param(format!("2^B-tree sort needs w >= B (w={w}, B={b})")));
    }
    if !k.is_power_of_two() || !b.is_power_of_two() || k < b || b < 2 {
        return Err(Error::param(format!("2^B-tree sort needs k, B powers of two with k >= B >= 2 (k={k}, B={b})")));
    }
    if smalls.len != k + 1 {
        return Err(Error::param(format!("perfect interleaving needs k+1 smalls, got {} for k={k}", smalls.len)));
    }
    let depth = k.trailing_zeros() as usize;
    let j = match opts.j {
        Some(0) => return Err(Error::param("phase length j must be at least 1")),
        Some(j) => j.min(depth),
        None => {
            let jf = kk_phase_levels(k, b, m);
            if jf.is_nan() || jf < 1.0 {
                return Err(Error::BelowK0(format!(
                    "j = (lg log_(M/B)(k/B) - lg B)/(B-1) = {jf:.3} < 1 for k={k}, B={b}, M={m}; \
                     need lg log_(M/B)(k/B) >= lg B + B - 1"
                )));
            }
            (jf.floor() as usize).min(depth)
        }
    };
    let need = b * w + b + (b << j);
    if m < need.max(3 * b + b) {
        return Err(Error::param(format!("2^B-tree sort needs M >= Bw + B + B*2^j = {need} (M={m})")));
    }
    let mut depths = vec![0];
    while *depths.last().unwrap() < depth {
        let d = *depths.last().unwrap();
        depths.push((d + j).min(depth));
    }
    let phases = depths.len() - 1;
    let g = phases - 1;
    let width_at = |d: usize| k >> d;
    let span_of = |d: usize, v: usize| (1 + v * width_at(d), 1 + (v + 1) * width_at(d));

    // preprocessing
    let before = dam.io();
    let mut plan: Vec<Vec<Group>> = Vec::with_capacity(phases);
    let mut tree_nodes = 0;
    for i in 0..phases {
        let (d, alpha) = (depths[i], depths[i + 1] - depths[i]);
        let u = 1usize << d;
        let mut groups = Vec::new();
        let layouts: Vec<Vec<usize>> =
            if u >= b { (0..u / b).map(|r| (r * b..(r + 1) * b).collect()).collect() } else { vec![(0..b).map(|t| t * u / b).collect()] };
        for slot_node in layouts {
            let spans: Vec<Span> = slot_node.iter().map(|&v| span_of(d, v)).collect();
            let tree = build_2b_tree(dam, smalls, alpha, Some(spans), false, opts.node_budget)?;
            tree_nodes += tree.nodes;
            let nodes: Vec<usize> = slot_node.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let per_batch = b / nodes.len();
            groups.push(Group { slot_node, nodes, per_batch, tree });
        }
        plan.push(groups);
    }
    let preprocessing = dam.io() - before;

    // querying
    let before = dam.io();
    let parts = dam.parts(w) as u64;
    let mut short_reads = 0u64;
    let mut audit = HalvingAudit::default();
    let mut region = larges.clone();
    for i in 0..phases {
        let (d, d_next) = (depths[i], depths[i + 1]);
        let per_node = width_at(d);
        let per_next = width_at(d_next);
        let next_base = dam.alloc(k as u64 * parts);
        for group in &plan[i] {
            let fill_words = group.nodes.len() << (d_next - d);
            let fill_mem = dam.reserve(fill_words)?;
            let mut fill: BTreeMap<usize, usize> = BTreeMap::new();
            let batches = group.nodes.len() * per_node / b;
            for q in 0..batches {
                let mut hs = Vec::with_capacity(b);
                let mut spans = Vec::with_capacity(b);
                for (t, &v) in group.slot_node.iter().enumerate() {
                    let pos = if i == 0 {
                        q * b + t
                    } else {
                        let local = t - group.slot_node.iter().position(|&x| x == v).unwrap();
                        v * per_node + q * group.per_batch + local
                    };
                    let addr = region.block_at(pos as u64 * parts).ok_or_else(|| Error::contract("large region truncated"))?;
                    hs.push(dam.load_record(addr)?);
                    spans.push(span_of(d, v));
                }
                let a = group.tree.descend(dam, &hs, &mut spans)?;
                short_reads += a.reads as u64;
                audit.absorb(&a);
                for (t, &h) in hs.iter().enumerate() {
                    let s = spans[t];
                    if s.1 - s.0 != per_next {
                        audit.failures += 1;
                    }
                    let node = (s.0 - 1) / per_next;
                    let f = fill.entry(node).or_insert(0);
                    if *f >= per_next {
                        return Err(Error::contract("instance is not perfectly interleaved"));
                    }
                    let pos = node * per_next + *f;
                    *f += 1;
                    dam.set_tag(h, node as u64)?;
                    dam.store_record(next_base + pos as u64 * parts, h)?;
                }
            }
            dam.release(&[fill_mem])?;
        }
        region = Run { extents: vec![crate::dam::Extent { start: next_base, blocks: k as u64 * parts }], len: k, w };
    }
    let query = dam.io() - before;
    let query_short = IoCount { reads: short_reads, writes: 0 };
    let query_large = query - query_short;

    // emission: smalls and the gap-ordered larges interleaved
    let before = dam.io();
    let mut reader = RunReader::new(smalls.clone());
    let mut out = RunWriter::mixed();
    for p in 0..=k {
        let s = reader.next(dam)?.ok_or_else(|| Error::contract("smalls run truncated"))?;
        out.push(dam, s)?;
        if p < k {
            let addr = region.block_at(p as u64 * parts).ok_or_else(|| Error::contract("large region truncated"))?;
            let h = dam.load_record(addr)?;
            out.push(dam, h)?;
        }
    }
    reader.close(dam)?;
    let output = out.finish(dam)?;
    let emission = dam.io() - before;
    let trees = plan.iter().map(Vec::len).sum();
    Ok(KkReport { output, j, g, swipes: g, trees, tree_nodes, preprocessing, query_short, query_large, emission, audit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{brute_force_predecessors, gen_subproblem, Subproblem};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sorted_keys(n: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut k = 0u64;
        (0..n)
            .map(|_| {
                k += rng.gen_range(2..=8);
                k
            })
            .collect()
    }

    fn place(dam: &mut Dam, keys: &[u64]) -> Run {
        let recs: Vec<Record> = keys.iter().map(|&k| Record::small(k)).collect();
        dam.place_records(&recs).unwrap()
    }

    #[test]
    fn stride_examples() {
        assert_eq!(sample_stride(1 << 16, 16), 16);
        assert_eq!(sample_stride(1 << 12, 8), 16);
        assert_eq!(sample_stride(16, 16), 2);
    }

    #[test]
    fn sampled_index_sizes() {
        let mut dam = Dam::new(16, 64).unwrap();
        let base = place(&mut dam, &sorted_keys(1 << 16, 1));
        let idx = build_sampled_index(&mut dam, &base).unwrap();
        assert_eq!((idx.beta, idx.sample_count(), idx.sample_blocks()), (16, 4096, 256));

        let mut dam = Dam::new(8, 32).unwrap();
        let base = place(&mut dam, &sorted_keys(1 << 12, 2));
        let idx = build_sampled_index(&mut dam, &base).unwrap();
        assert_eq!((idx.beta, idx.sample_count(), idx.sample_blocks()), (16, 256, 32));

        let mut dam = Dam::new(16, 64).unwrap();
        let base = place(&mut dam, &sorted_keys(16, 3));
        let idx = build_sampled_index(&mut dam, &base).unwrap();
        assert!(idx.sample_count() <= 16 && idx.sample_blocks() <= 1);
    }

    #[test]
    fn sampled_index_build_cost() {
        let mut dam = Dam::new(16, 64).unwrap();
        let base = place(&mut dam, &sorted_keys(1 << 16, 4));
        let idx = build_sampled_index(&mut dam, &base).unwrap();
        let io = dam.io();
        assert!(io.reads <= 2 * (1 << 16) / 16);
        assert!(io.writes <= 2 * idx.extra_blocks());
    }

    #[test]
    fn sampled_index_rejects_tiny_blocks() {
        let mut dam = Dam::new(2, 16).unwrap();
        let base = place(&mut dam, &[1, 2, 3]);
        assert!(matches!(build_sampled_index(&mut dam, &base), Err(Error::Parameter(_))));
    }

    #[test]
    fn sampled_queries_match_scan_within_bound() {
        let keys = sorted_keys(1 << 16, 5);
        let mut dam = Dam::new(16, 64).unwrap();
        let base = place(&mut dam, &keys);
        let idx = build_sampled_index(&mut dam, &base).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut qs: Vec<u64> = (0..300).map(|_| rng.gen_range(0..keys[keys.len() - 1] + 10) | 1).collect();
        qs.push(0);
        qs.retain(|q| keys.binary_search(q).is_err());
        let small: Vec<Key> = keys.iter().map(|&k| Key(k)).collect();
        let larges: Vec<Key> = qs.iter().map(|&q| Key(q)).collect();
        let want = brute_force_predecessors(&small, &larges).unwrap();
        for (q, &p) in qs.iter().zip(&want.pred) {
            let before = dam.io().reads;
            assert_eq!(query_sampled(&mut dam, &idx, Key(*q)).unwrap(), p);
            assert!(dam.io().reads - before <= 12 + 3);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sampled_queries_equal_scan(n in 1usize..600, b in prop::sample::select(vec![4usize, 8, 16]), seed in 0u64..1000) {
            let keys = sorted_keys(n, seed);
            let mut dam = Dam::new(b, 4 * b).unwrap();
            let base = place(&mut dam, &keys);
            let idx = build_sampled_index(&mut dam, &base).unwrap();
            let bound = 3.0 * (n.max(2) as f64).ln() / (b as f64).ln() + 3.0;
            let small: Vec<Key> = keys.iter().map(|&k| Key(k)).collect();
            for q in (0..keys[n - 1] + 3).step_by(3).filter(|q| keys.binary_search(q).is_err()) {
                let want = brute_force_predecessors(&small, &[Key(q)]).unwrap().pred[0];
                let before = dam.io().reads;
                prop_assert_eq!(query_sampled(&mut dam, &idx, Key(q)).unwrap(), want);
                prop_assert!((dam.io().reads - before) as f64 <= bound);
            }
        }
    }

    #[test]
    fn single_level_is_median_block() {
        let mut dam = Dam::new(4, 32).unwrap();
        let keys: Vec<u64> = (1..=16).map(|k| k * 10).collect();
        let a = place(&mut dam, &keys);
        let t = build_2b_tree(&mut dam, &a, 1, None, false, DEFAULT_NODE_BUDGET).unwrap();
        assert_eq!(t.nodes, 1);
        assert_eq!(dam.io().writes, 1);
        // span 0..17, lower median at index 8
        let root = t.level_base[0];
        let Some(crate::dam::Block::Node(n)) = dam.peek_block(root) else { panic!() };
        assert_eq!(n.keys, vec![Key(90); 4]);
    }

    #[test]
    fn two_level_tree_pivots_follow_hand_halving() {
        let mut dam = Dam::new(2, 16).unwrap();
        let keys: Vec<u64> = (0..64).map(|k| 2 * k + 2).collect();
        let a = place(&mut dam, &keys);
        let before = dam.io();
        let t = build_2b_tree(&mut dam, &a, 2, Some(vec![(0, 32), (32, 64)]), false, DEFAULT_NODE_BUDGET).unwrap();
        assert!(t.nodes <= 1 + 4 + 16);
        assert_eq!(t.nodes, 5);
        let cost = dam.io() - before;
        assert!(cost.total() <= 2 * 2 * 16);
        // outcome (right, left): (16, 32) pivot 23, (32, 48) pivot 39
        let Some(crate::dam::Block::Node(n)) = dam.peek_block(t.level_base[1] + 1) else { panic!() };
        assert_eq!(decode(&n.aux), vec![(16, 32), (32, 48)]);
        assert_eq!(n.keys, vec![Key(keys[23]), Key(keys[39])]);
    }

    #[test]
    fn partitioned_query_reads_three_blocks_and_shrinks_by_four() {
        let mut dam = Dam::new(4, 64).unwrap();
        let keys: Vec<u64> = (0..1024).map(|k| 2 * k + 2).collect();
        let a = place(&mut dam, &keys);
        let t = build_2b_tree(&mut dam, &a, 2, None, true, DEFAULT_NODE_BUDGET).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let hs: Vec<Handle> =
                (0..4).map(|part| dam.admit(Record::large(2 * rng.gen_range(part * 256 + 1..=(part + 1) * 256) + 1, 1)).unwrap()).collect();
            let mut spans = vec![(0, 0); 4];
            let audit = t.descend(&mut dam, &hs, &mut spans).unwrap();
            assert_eq!(audit.reads, 3);
            assert_eq!(audit.failures, 0);
            for (part, s) in spans.iter().enumerate() {
                let w0 = if part == 0 { 257 } else { 256 };
                assert!(s.1 - s.0 == w0 / 4 || s.1 - s.0 == w0.div_ceil(4));
            }
            let truth: Vec<usize> = hs.iter().map(|&h| dam.key(h).unwrap()).map(|x| keys.partition_point(|&k| k < x.0)).collect();
            for (s, p) in spans.iter().zip(truth) {
                assert!(s.0 <= p && p < s.1);
            }
            dam.release(&hs).unwrap();
        }
    }

    #[test]
    fn node_budget_is_enforced() {
        let mut dam = Dam::new(8, 64).unwrap();
        let a = place(&mut dam, &(1..=64).collect::<Vec<_>>());
        assert!(matches!(build_2b_tree(&mut dam, &a, 3, None, false, 1 << 20), Err(Error::Parameter(_))));
    }

    fn kk_run(k: usize, w: usize, b: usize, m: usize, opts: KkOptions, seed: u64) -> (Dam, Result<KkReport>, Vec<u64>) {
        let inst = gen_subproblem(Subproblem::KK { k }, w, seed).unwrap();
        let mut dam = Dam::new(b, m).unwrap();
        let smalls = dam.place_records(&inst.sorted_smalls()).unwrap();
        let larges = dam.place_records(&inst.larges).unwrap();
        let mut want: Vec<u64> = inst.sorted_records().iter().map(|r| r.key.0).collect();
        want.sort_unstable();
        let rep = kk_sort_2b(&mut dam, &smalls, &larges, opts);
        (dam, rep, want)
    }

    #[test]
    fn kk_small_k_is_below_threshold() {
        let (_, rep, _) = kk_run(4, 4, 2, 32, KkOptions::default(), 1);
        assert!(matches!(rep, Err(Error::BelowK0(_))));
    }

    #[test]
    fn kk_override_sorts_with_five_swipes() {
        let opts = KkOptions { j: Some(1), ..KkOptions::default() };
        let (dam, rep, want) = kk_run(64, 2, 2, 32, opts, 2);
        let rep = rep.unwrap();
        assert_eq!(rep.g, 5);
        assert_eq!(rep.swipes, 5);
        let got: Vec<u64> = dam.peek_run(&rep.output).iter().map(|s| s.rec.key.0).collect();
        assert_eq!(got, want);
        assert_eq!(rep.audit.failures, 0);
        assert_eq!(rep.query_short.reads, (64 / 2) * 6);
        assert!(rep.query_large.total() <= 8 * 5 * 64);
        assert_eq!(dam.used(), 0);
    }

    #[test]
    fn kk_every_read_node_halves_every_interval() {
        for (k, w, b, m, j) in [(64, 4, 4, 64, 2), (256, 4, 4, 64, 3), (128, 8, 2, 64, 2), (16, 2, 2, 64, 4)] {
            let opts = KkOptions { j: Some(j), ..KkOptions::default() };
            let (dam, rep, want) = kk_run(k, w, b, m, opts, k as u64);
            let rep = rep.unwrap();
            let got: Vec<u64> = dam.peek_run(&rep.output).iter().map(|s| s.rec.key.0).collect();
            assert_eq!(got, want);
            assert_eq!(rep.audit.failures, 0);
            assert_eq!(rep.audit.checks, k * k.trailing_zeros() as usize);
            assert_eq!(rep.query_short.reads as usize, k / b * k.trailing_zeros() as usize);
            let depth = k.trailing_zeros() as usize;
            assert_eq!(rep.g, depth.div_ceil(j) - 1);
        }
    }

    #[test]
    fn kk_checks_memory() {
        let opts = KkOptions { j: Some(4), ..KkOptions::default() };
        assert!(matches!(kk_run(16, 2, 2, 16, opts, 3).1, Err(Error::Parameter(_))));
    }

    #[test]
    fn kk_rejects_invalid_shapes() {
        let opts = KkOptions { j: Some(1), ..KkOptions::default() };
        assert!(matches!(kk_run(64, 1, 2, 32, opts, 3).1, Err(Error::Parameter(_))));
        assert!(matches!(kk_run(48, 2, 2, 32, opts, 3).1, Err(Error::Parameter(_))));
    }
}
