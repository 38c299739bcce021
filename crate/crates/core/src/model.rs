//! Records, two-sized instances, the stripe profile and the predecessor oracle.
//!
//! An instance holds `S` unit-width small records and `L/w` large records of
//! width `w`. Its interleaving is described by the *stripes*: the maximal runs
//! of large records in the final sorted order.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A totally ordered, dimensionless key. Keys within one instance are distinct.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Key(pub u64);

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Class {
    Small,
    Large,
}

/// An atomic keyed element. Small records have width 1; large records have
/// the instance width `w` (which may itself be 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Record {
    pub key: Key,
    pub width: usize,
    pub class: Class,
}

impl Record {
    pub fn small(key: u64) -> Self {
        Record { key: Key(key), width: 1, class: Class::Small }
    }

    pub fn large(key: u64, width: usize) -> Self {
        Record { key: Key(key), width, class: Class::Large }
    }

    pub fn is_large(&self) -> bool {
        self.class == Class::Large
    }
}

/// A two-sized input together with its generation metadata.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    /// Small records in input order (ascending when `smalls_sorted`).
    pub smalls: Vec<Record>,
    /// Large records in input order.
    pub larges: Vec<Record>,
    pub w: usize,
    pub k: usize,
    pub stripe_sizes: Vec<usize>,
    pub seed: u64,
    /// Set for the PLE subproblem shapes, whose small side arrives sorted.
    pub smalls_sorted: bool,
}

impl Instance {
    pub fn small_count(&self) -> usize {
        self.smalls.len()
    }

    pub fn large_count(&self) -> usize {
        self.larges.len()
    }

    /// Total large volume `L`.
    pub fn large_volume(&self) -> usize {
        self.larges.len() * self.w
    }

    pub fn small_keys(&self) -> Vec<Key> {
        self.smalls.iter().map(|r| r.key).collect()
    }

    pub fn large_keys(&self) -> Vec<Key> {
        self.larges.iter().map(|r| r.key).collect()
    }

    pub fn sorted_small_keys(&self) -> Vec<Key> {
        let mut keys = self.small_keys();
        keys.sort_unstable();
        keys
    }

    /// Smalls as records in ascending order.
    pub fn sorted_smalls(&self) -> Vec<Record> {
        let mut v = self.smalls.clone();
        v.sort_unstable_by_key(|r| r.key);
        v
    }

    /// All records in ascending key order (trusted in-memory sort).
    pub fn sorted_records(&self) -> Vec<Record> {
        let mut all: Vec<Record> = self.smalls.iter().chain(self.larges.iter()).copied().collect();
        all.sort_unstable_by_key(|r| r.key);
        all
    }

    /// Stripe volumes `L_i = stripe_sizes[i] * w`.
    pub fn stripe_volumes(&self) -> Vec<usize> {
        self.stripe_sizes.iter().map(|&n| n * self.w).collect()
    }

    pub fn header(&self, sorted: bool) -> Header {
        Header { small: self.smalls.len(), large_count: self.larges.len(), w: self.w, k: self.k, seed: self.seed, sorted }
    }

    /// Input text: header, then smalls, then larges, each in input order.
    pub fn to_text(&self) -> String {
        let recs: Vec<Record> = self.smalls.iter().chain(self.larges.iter()).copied().collect();
        format_records(&self.header(false), &recs)
    }
}

/// Parameters for [`gen_instance`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenParams {
    pub small: usize,
    pub large_count: usize,
    pub width: usize,
    pub stripes: usize,
    pub sizes: Option<Vec<usize>>,
    pub seed: u64,
}

/// Builds an instance whose sorted order has exactly `stripes` maximal runs
/// of large records with the requested (or a near-uniform random) size
/// composition. Deterministic in the seed.
///
/// Runs are placed in interior gaps (strictly between two smalls) whenever
/// `stripes <= S - 1`; otherwise the gaps before the first and after the last
/// small are used as well, which allows perfect interleaving with `S = k`.
pub fn gen_instance(p: &GenParams) -> Result<Instance> {
    let (s, n, k) = (p.small, p.large_count, p.stripes);
    if p.width == 0 {
        return Err(Error::param("width must be at least 1"));
    }
    if k == 0 {
        return Err(Error::param("stripe count must be at least 1"));
    }
    if k > n {
        return Err(Error::param(format!("{k} stripes need at least {k} large records, got {n}")));
    }
    if k > s + 1 {
        return Err(Error::param(format!("{k} stripes do not fit around {s} small records")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let sizes = match &p.sizes {
        Some(sz) => {
            check_sizes(sz, k, n)?;
            sz.clone()
        }
        None => near_uniform_composition(n, k, &mut rng),
    };
    let gaps: Vec<usize> = if s >= 1 && k < s {
        // interior gaps 1..=s-1
        let mut g: Vec<usize> = index::sample(&mut rng, s - 1, k).into_iter().map(|i| i + 1).collect();
        g.sort_unstable();
        g
    } else {
        let mut g = index::sample(&mut rng, s + 1, k).into_vec();
        g.sort_unstable();
        g
    };
    let layout = layout_from_gaps(s, &gaps, &sizes);
    let keys = assign_keys(&layout, &mut rng, false);
    Ok(finish_instance(layout, keys, p.width, sizes, p.seed, &mut rng, false))
}

/// The PLE subproblem shapes. All of them reserve the minimum and maximum key
/// for the first and last small record, which act as the -inf/+inf sentinels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subproblem {
    /// One large record per stripe among `small` sorted smalls.
    SK { small: usize, k: usize },
    /// `k + 1` smalls, every interior gap holds a non-empty stripe.
    KTilde { k: usize, large_count: usize },
    /// `k + 1` smalls and `k` larges, perfectly interleaved.
    KK { k: usize },
}

impl Subproblem {
    pub fn name(&self) -> &'static str {
        match self {
            Subproblem::SK { .. } => "S-k",
            Subproblem::KTilde { .. } => "k-k~",
            Subproblem::KK { .. } => "k-k",
        }
    }
}

pub fn gen_subproblem(kind: Subproblem, w: usize, seed: u64) -> Result<Instance> {
    if w == 0 {
        return Err(Error::param("width must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (s, gaps, sizes) = match kind {
        Subproblem::SK { small, k } => {
            if k == 0 || small < k + 1 {
                return Err(Error::param(format!("S-k needs S >= k + 1 and k >= 1 (S={small}, k={k})")));
            }
            let mut g: Vec<usize> = index::sample(&mut rng, small - 1, k).into_iter().map(|i| i + 1).collect();
            g.sort_unstable();
            (small, g, vec![1; k])
        }
        Subproblem::KTilde { k, large_count } => {
            if k == 0 || large_count < k {
                return Err(Error::param(format!("k-k~ needs 1 <= k <= large_count (k={k}, large_count={large_count})")));
            }
            let sizes = near_uniform_composition(large_count, k, &mut rng);
            (k + 1, (1..=k).collect(), sizes)
        }
        Subproblem::KK { k } => {
            if k == 0 {
                return Err(Error::param("k-k needs k >= 1"));
            }
            (k + 1, (1..=k).collect(), vec![1; k])
        }
    };
    let layout = layout_from_gaps(s, &gaps, &sizes);
    let keys = assign_keys(&layout, &mut rng, true);
    Ok(finish_instance(layout, keys, w, sizes, seed, &mut rng, true))
}

fn check_sizes(sizes: &[usize], k: usize, n: usize) -> Result<()> {
    if sizes.len() != k {
        return Err(Error::param(format!("expected {k} stripe sizes, got {}", sizes.len())));
    }
    if sizes.contains(&0) {
        return Err(Error::param("stripe sizes must be positive"));
    }
    let total: usize = sizes.iter().sum();
    if total != n {
        return Err(Error::param(format!("stripe sizes sum to {total}, expected {n}")));
    }
    Ok(())
}

/// Splits `n` into `k` positive parts differing by at most one.
fn near_uniform_composition(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut sizes = vec![n / k; k];
    for i in index::sample(rng, k, n % k) {
        sizes[i] += 1;
    }
    sizes
}

/// Sorted-order class layout: gap `g` holds the large run placed after `g` smalls.
fn layout_from_gaps(s: usize, gaps: &[usize], sizes: &[usize]) -> Vec<Class> {
    let mut layout = Vec::with_capacity(s + sizes.iter().sum::<usize>());
    let mut next = 0;
    for g in 0..=s {
        if next < gaps.len() && gaps[next] == g {
            layout.extend(std::iter::repeat_n(Class::Large, sizes[next]));
            next += 1;
        }
        if g < s {
            layout.push(Class::Small);
        }
    }
    layout
}

fn assign_keys(layout: &[Class], rng: &mut ChaCha8Rng, sentinels: bool) -> Vec<Key> {
    let n = layout.len();
    let mut keys = Vec::with_capacity(n);
    let mut cur: u64 = if sentinels { 0 } else { rng.gen_range(1..=64) };
    for i in 0..n {
        if sentinels && i == 0 {
            keys.push(Key(0));
            continue;
        }
        if sentinels && i + 1 == n {
            keys.push(Key(u64::MAX));
            continue;
        }
        cur += rng.gen_range(1..=16);
        keys.push(Key(cur));
    }
    keys
}

fn finish_instance(
    layout: Vec<Class>,
    keys: Vec<Key>,
    w: usize,
    sizes: Vec<usize>,
    seed: u64,
    rng: &mut ChaCha8Rng,
    smalls_sorted: bool,
) -> Instance {
    let mut smalls = Vec::new();
    let mut larges = Vec::new();
    for (class, key) in layout.into_iter().zip(keys) {
        match class {
            Class::Small => smalls.push(Record::small(key.0)),
            Class::Large => larges.push(Record::large(key.0, w)),
        }
    }
    if !smalls_sorted {
        smalls.shuffle(rng);
    }
    larges.shuffle(rng);
    Instance { smalls, larges, w, k: sizes.len(), stripe_sizes: sizes, seed, smalls_sorted }
}

/// Number of maximal runs of large records and their lengths, for records in
/// strictly ascending key order.
pub fn stripe_profile(sorted: &[Record]) -> Result<(usize, Vec<usize>)> {
    if let Some(i) = sorted.windows(2).position(|p| p[0].key >= p[1].key) {
        return Err(Error::contract(format!("records not strictly ascending at position {}", i + 1)));
    }
    let mut sizes = Vec::new();
    let mut run = 0usize;
    for r in sorted {
        if r.is_large() {
            run += 1;
        } else if run > 0 {
            sizes.push(run);
            run = 0;
        }
    }
    if run > 0 {
        sizes.push(run);
    }
    Ok((sizes.len(), sizes))
}

/// Per-large placement: predecessor index into the sorted smalls (the count of
/// smalls below the key, so 0 means "before all") and the 1-based stripe id.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct StripeAssignment {
    pub keys: Vec<Key>,
    pub pred: Vec<usize>,
    pub stripe: Vec<usize>,
}

impl StripeAssignment {
    /// Groups equal predecessor indices into stripes numbered in ascending order.
    pub fn from_preds(keys: Vec<Key>, pred: Vec<usize>) -> Self {
        debug_assert_eq!(keys.len(), pred.len());
        let mut distinct = pred.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let stripe = pred.iter().map(|p| distinct.binary_search(p).unwrap() + 1).collect();
        StripeAssignment { keys, pred, stripe }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Number of stripes.
    pub fn k(&self) -> usize {
        self.stripe.iter().copied().max().unwrap_or(0)
    }

    /// Stripe sizes in stripe-id order.
    pub fn stripe_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &s in &self.stripe {
            sizes[s - 1] += 1;
        }
        sizes
    }

    /// Distinct predecessor indices in stripe order.
    pub fn stripe_preds(&self) -> Vec<usize> {
        let mut preds = vec![0; self.k()];
        for (&s, &p) in self.stripe.iter().zip(&self.pred) {
            preds[s - 1] = p;
        }
        preds
    }

    /// Same assignment reordered to follow `order` (a permutation of `keys`).
    pub fn reordered(&self, order: &[Key]) -> Result<Self> {
        let mut idx: Vec<usize> = (0..self.keys.len()).collect();
        idx.sort_unstable_by_key(|&i| self.keys[i]);
        let mut out = StripeAssignment::default();
        for key in order {
            let pos = idx
                .binary_search_by_key(key, |&i| self.keys[i])
                .map_err(|_| Error::contract(format!("key {key} missing from assignment")))?;
            let i = idx[pos];
            out.keys.push(self.keys[i]);
            out.pred.push(self.pred[i]);
            out.stripe.push(self.stripe[i]);
        }
        Ok(out)
    }
}

/// Reference predecessor search by binary search over the sorted smalls.
pub fn brute_force_predecessors(sorted_smalls: &[Key], larges: &[Key]) -> Result<StripeAssignment> {
    if let Some(i) = sorted_smalls.windows(2).position(|p| p[0] >= p[1]) {
        return Err(Error::contract(format!("smalls not strictly ascending at position {}", i + 1)));
    }
    let mut seen = HashSet::with_capacity(larges.len());
    let mut pred = Vec::with_capacity(larges.len());
    for &key in larges {
        if !seen.insert(key) {
            return Err(Error::contract(format!("duplicate large key {key}")));
        }
        let p = sorted_smalls.partition_point(|&s| s < key);
        if p < sorted_smalls.len() && sorted_smalls[p] == key {
            return Err(Error::contract(format!("large key {key} equals a small key")));
        }
        pred.push(p);
    }
    Ok(StripeAssignment::from_preds(larges.to_vec(), pred))
}

/// Instance file header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub small: usize,
    pub large_count: usize,
    pub w: usize,
    pub k: usize,
    pub seed: u64,
    pub sorted: bool,
}

impl fmt::Display for Header {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DAMLAB1 S={} LCOUNT={} W={} K={} SEED={}", self.small, self.large_count, self.w, self.k, self.seed)?;
        if self.sorted {
            write!(f, " SORTED")?;
        }
        Ok(())
    }
}

/// Renders a header and one `S <key>` / `L <key>` line per record.
pub fn format_records(header: &Header, records: &[Record]) -> String {
    let mut out = String::with_capacity(16 * (records.len() + 1));
    let _ = writeln!(out, "{header}");
    for r in records {
        let tag = if r.is_large() { 'L' } else { 'S' };
        let _ = writeln!(out, "{tag} {}", r.key);
    }
    out
}

fn parse_header(line: &str) -> Result<Header> {
    let err = |msg: String| Error::Parse { line: 1, msg };
    let mut toks = line.split_whitespace();
    if toks.next() != Some("DAMLAB1") {
        return Err(err("missing DAMLAB1 magic".into()));
    }
    let mut fields = [None::<u64>; 5];
    let names = ["S", "LCOUNT", "W", "K", "SEED"];
    let mut sorted = false;
    for tok in toks {
        if tok == "SORTED" {
            sorted = true;
            continue;
        }
        let (name, value) = tok.split_once('=').ok_or_else(|| err(format!("bad header field {tok:?}")))?;
        let slot = names.iter().position(|n| *n == name).ok_or_else(|| err(format!("unknown header field {name:?}")))?;
        let v = value.parse::<u64>().map_err(|e| err(format!("field {name}: {e}")))?;
        fields[slot] = Some(v);
    }
    let get = |i: usize| fields[i].ok_or_else(|| err(format!("missing header field {}", names[i])));
    Ok(Header { small: get(0)? as usize, large_count: get(1)? as usize, w: get(2)? as usize, k: get(3)? as usize, seed: get(4)?, sorted })
}

/// Parses the instance text format. Stripe sizes are recomputed from the keys
/// and must agree with the header's `K`.
pub fn parse_instance(text: &str) -> Result<(Header, Instance)> {
    let mut lines = text.lines();
    let header = parse_header(lines.next().ok_or(Error::Parse { line: 1, msg: "empty input".into() })?)?;
    if header.w == 0 {
        return Err(Error::Parse { line: 1, msg: "W must be positive".into() });
    }
    let mut smalls = Vec::with_capacity(header.small);
    let mut larges = Vec::with_capacity(header.large_count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (tag, key) = line.split_once(' ').ok_or_else(|| Error::Parse { line: lineno, msg: format!("bad record line {line:?}") })?;
        let key: u64 = key.trim().parse().map_err(|e| Error::Parse { line: lineno, msg: format!("bad key: {e}") })?;
        match tag {
            "S" => smalls.push(Record::small(key)),
            "L" => larges.push(Record::large(key, header.w)),
            other => return Err(Error::Parse { line: lineno, msg: format!("unknown record tag {other:?}") }),
        }
    }
    if smalls.len() != header.small || larges.len() != header.large_count {
        return Err(Error::Parse {
            line: 1,
            msg: format!("header declares S={} LCOUNT={}, found {} and {}", header.small, header.large_count, smalls.len(), larges.len()),
        });
    }
    let mut inst = Instance { smalls, larges, w: header.w, k: 0, stripe_sizes: Vec::new(), seed: header.seed, smalls_sorted: false };
    inst.smalls_sorted = inst.smalls.windows(2).all(|p| p[0].key < p[1].key);
    let (k, sizes) = stripe_profile(&inst.sorted_records()).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
    if k != header.k {
        return Err(Error::Parse { line: 1, msg: format!("header declares K={}, keys give {k} stripes", header.k) });
    }
    inst.k = k;
    inst.stripe_sizes = sizes;
    Ok((header, inst))
}
