//! Placement of large elements: given sorted smalls and unsorted larges on
//! disk, group the larges by the gap between consecutive smalls they fall in.
//!
//! Two strategies are provided. The depth-first one searches larges one at a
//! time, first in a small tree of already discovered stripe borders and only
//! on a miss in a static B-tree over all smalls. The breadth-first one routes
//! every large through a tree of fanout `Θ(M)` one level at a time.

use std::collections::{BTreeMap, HashSet};

use crate::bounds::{ple_upper_terms, Shape};
use crate::dam::{Dam, Handle, IoCount, NodeBlock, Run, RunReader, RunWriter, Segment};
use crate::error::{Error, Result};
use crate::model::{Key, StripeAssignment};

/// Static B-tree over a sorted run of smalls. The leaves are the run's own
/// blocks; internal nodes store the minimum key of each child.
#[derive(Clone, Debug)]
pub struct StaticBTree {
    leaves: Run,
    root: Option<u64>,
    /// Block reads per root-to-leaf descent.
    pub height: usize,
    pub nodes: usize,
}

/// Result of one descent: the predecessor count and the bordering smalls.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Placement {
    pub pred: usize,
    pub lo: Option<Key>,
    pub hi: Option<Key>,
}

impl StaticBTree {
    pub fn build(dam: &mut Dam, smalls: &Run) -> Result<Self> {
        let b = dam.b();
        let leaves = smalls.clone();
        let leaf_count = smalls.blocks();
        if leaf_count <= 1 {
            return Ok(StaticBTree { leaves, root: None, height: 1, nodes: 0 });
        }
        // bottom level: one key per leaf block
        let buf = dam.reserve(b)?;
        let mut level_count = leaf_count.div_ceil(b as u64);
        let mut base = dam.alloc(level_count);
        let mut node = NodeBlock::default();
        let mut written = 0u64;
        for (i, addr) in smalls.block_addrs().enumerate() {
            let hs = dam.load_block(addr)?;
            node.keys.push(dam.key(hs[0])?);
            dam.release(&hs)?;
            node.links.push(addr);
            node.aux.push((i * b) as u64);
            if node.keys.len() == b {
                dam.store_node(base + written, std::mem::take(&mut node))?;
                written += 1;
            }
        }
        if !node.keys.is_empty() {
            dam.store_node(base + written, std::mem::take(&mut node))?;
        }
        let mut nodes = level_count as usize;
        let mut height = 2;
        while level_count > 1 {
            let next_count = level_count.div_ceil(b as u64);
            let next_base = dam.alloc(next_count);
            let mut written = 0u64;
            for child in base..base + level_count {
                let h = dam.load_node(child)?;
                let (k0, a0) = {
                    let n = dam.node(h)?;
                    (n.keys[0], n.aux[0])
                };
                dam.release(&[h])?;
                node.keys.push(k0);
                node.links.push(child);
                node.aux.push(a0);
                if node.keys.len() == b {
                    dam.store_node(next_base + written, std::mem::take(&mut node))?;
                    written += 1;
                }
            }
            if !node.keys.is_empty() {
                dam.store_node(next_base + written, std::mem::take(&mut node))?;
            }
            nodes += next_count as usize;
            height += 1;
            base = next_base;
            level_count = next_count;
        }
        dam.release(&[buf])?;
        Ok(StaticBTree { leaves, root: Some(base), height, nodes })
    }

    /// Root-to-leaf search for `x`, one block resident at a time.
    pub fn descend(&self, dam: &mut Dam, x: Key) -> Result<Placement> {
        let Some(first_leaf) = self.leaves.block_at(0) else {
            return Ok(Placement { pred: 0, lo: None, hi: None });
        };
        let mut hi = None;
        let (mut addr, mut base) = (first_leaf, 0usize);
        if let Some(root) = self.root {
            addr = root;
            for _ in 1..self.height {
                let h = dam.load_node(addr)?;
                let n = dam.node(h)?;
                let c = n.keys.partition_point(|&k| k < x).max(1) - 1;
                if c + 1 < n.keys.len() {
                    hi = Some(n.keys[c + 1]);
                }
                let (next, first) = (n.links[c], n.aux[c] as usize);
                dam.release(&[h])?;
                addr = next;
                base = first;
            }
        }
        let hs = dam.load_block(addr)?;
        let mut keys = Vec::with_capacity(hs.len());
        for &h in &hs {
            keys.push(dam.key(h)?);
        }
        dam.release(&hs)?;
        let cnt = keys.partition_point(|&k| k < x);
        if cnt < keys.len() && keys[cnt] == x {
            return Err(Error::contract(format!("large key {x} equals a small key")));
        }
        let pred = base + cnt;
        if cnt == 0 && pred != 0 {
            return Err(Error::contract("descent reached a leaf whose minimum exceeds the query"));
        }
        let lo = if cnt > 0 { Some(keys[cnt - 1]) } else { None };
        if cnt < keys.len() {
            hi = Some(keys[cnt]);
        }
        Ok(Placement { pred, lo, hi })
    }
}

/// One discovered stripe: the gap after `pred` smalls and its borders.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Interval {
    pub pred: usize,
    pub lo: Option<Key>,
    pub hi: Option<Key>,
    pub count: usize,
    pub cursor: usize,
    pub stripe: usize,
}

impl Interval {
    fn contains(&self, x: Key) -> bool {
        self.lo.is_none_or(|l| l < x) && self.hi.is_none_or(|h| x < h)
    }

    fn lo_below(&self, x: Key) -> bool {
        self.lo.is_none_or(|l| l < x)
    }
}

const AUX_WORDS: usize = 5;

fn encode_leaf(ivs: &[Interval]) -> NodeBlock {
    let mut n = NodeBlock::default();
    for iv in ivs {
        n.keys.push(iv.lo.unwrap_or_default());
        n.keys.push(iv.hi.unwrap_or_default());
        let flags = u64::from(iv.lo.is_none()) | (u64::from(iv.hi.is_none()) << 1);
        n.aux.extend([iv.pred as u64, flags, iv.count as u64, iv.cursor as u64, iv.stripe as u64]);
    }
    n
}

fn decode_leaf(n: &NodeBlock) -> Vec<Interval> {
    n.aux
        .chunks(AUX_WORDS)
        .enumerate()
        .map(|(i, a)| Interval {
            pred: a[0] as usize,
            lo: (a[1] & 1 == 0).then_some(n.keys[2 * i]),
            hi: (a[1] & 2 == 0).then_some(n.keys[2 * i + 1]),
            count: a[2] as usize,
            cursor: a[3] as usize,
            stripe: a[4] as usize,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BorderMode {
    /// Memory-resident while it fits next to the working set, then on disk.
    #[default]
    Auto,
    /// On disk from the start.
    Disk,
}

#[derive(Debug)]
enum BorderState {
    Resident { ivs: Vec<Interval>, res: Handle },
    Disk { root: u64, depth: usize, len: usize },
}

/// Dynamic search structure over the borders of discovered stripes. On disk
/// it is a B+tree whose leaves hold `max(1, B/2)` intervals (two border keys
/// each) and whose internal nodes have fanout `B`.
#[derive(Debug)]
pub struct BorderTree {
    state: BorderState,
    budget: usize,
    leaf_cap: usize,
    fanout: usize,
    pub spilled: bool,
}

impl BorderTree {
    pub fn new(dam: &mut Dam, mode: BorderMode, w: usize) -> Result<Self> {
        let b = dam.b();
        let leaf_cap = (b / 2).max(1);
        let fanout = b.max(2);
        let budget = dam.m().saturating_sub(w.max(b) + 2 * b);
        let state = match mode {
            BorderMode::Auto => BorderState::Resident { ivs: Vec::new(), res: dam.reserve(0)? },
            BorderMode::Disk => {
                let root = dam.alloc(1);
                dam.store_node(root, NodeBlock::default())?;
                BorderState::Disk { root, depth: 0, len: 0 }
            }
        };
        Ok(BorderTree { state, budget, leaf_cap, fanout, spilled: matches!(mode, BorderMode::Disk) })
    }

    pub fn len(&self) -> usize {
        match &self.state {
            BorderState::Resident { ivs, .. } => ivs.len(),
            BorderState::Disk { len, .. } => *len,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn on_disk(&self) -> bool {
        matches!(self.state, BorderState::Disk { .. })
    }

    /// Finds the interval containing `x` and applies `f` to it.
    pub fn search_mut(&mut self, dam: &mut Dam, x: Key, f: impl FnOnce(&mut Interval)) -> Result<Option<Interval>> {
        match &mut self.state {
            BorderState::Resident { ivs, .. } => {
                let i = ivs.partition_point(|iv| iv.lo_below(x));
                if i > 0 && ivs[i - 1].contains(x) {
                    f(&mut ivs[i - 1]);
                    return Ok(Some(ivs[i - 1]));
                }
                Ok(None)
            }
            BorderState::Disk { root, depth, .. } => {
                let (_, leaf) = descend_border(dam, *root, *depth, x)?;
                let mut ivs = decode_leaf(dam.node(leaf)?);
                let i = ivs.partition_point(|iv| iv.lo_below(x));
                if i > 0 && ivs[i - 1].contains(x) {
                    f(&mut ivs[i - 1]);
                    let hit = ivs[i - 1];
                    *dam.node_mut(leaf)? = encode_leaf(&ivs);
                    dam.evict(&[leaf], true)?;
                    return Ok(Some(hit));
                }
                dam.release(&[leaf])?;
                Ok(None)
            }
        }
    }

    /// Adds a newly discovered interval; `x` is any key inside it.
    pub fn insert(&mut self, dam: &mut Dam, x: Key, iv: Interval) -> Result<()> {
        if let BorderState::Resident { ivs, res } = &mut self.state {
            if 2 * (ivs.len() + 1) <= self.budget {
                let i = ivs.partition_point(|e| e.pred < iv.pred);
                ivs.insert(i, iv);
                dam.resize_reservation(*res, 2 * ivs.len())?;
                return Ok(());
            }
            self.spill(dam)?;
        }
        let BorderState::Disk { root, depth, len } = &mut self.state else { unreachable!() };
        let (path, leaf) = descend_border(dam, *root, *depth, x)?;
        let mut ivs = decode_leaf(dam.node(leaf)?);
        let i = ivs.partition_point(|e| e.pred < iv.pred);
        ivs.insert(i, iv);
        *len += 1;
        if ivs.len() <= self.leaf_cap {
            *dam.node_mut(leaf)? = encode_leaf(&ivs);
            return dam.evict(&[leaf], true);
        }
        let right = ivs.split_off(ivs.len().div_ceil(2));
        let sep = right[0].lo.ok_or_else(|| Error::contract("open lower border in a right split"))?;
        let res = dam.reserve(dam.b())?;
        let right_addr = dam.alloc(1);
        dam.store_node(right_addr, encode_leaf(&right))?;
        dam.release(&[res])?;
        *dam.node_mut(leaf)? = encode_leaf(&ivs);
        dam.evict(&[leaf], true)?;
        let mut carry = Some((sep, right_addr));
        let mut child = path.last().map_or(*root, |p| p.1);
        for &(parent, _) in path.iter().rev() {
            let Some((sep, new_addr)) = carry else { break };
            let h = dam.load_node(parent)?;
            let mut n = dam.node(h)?.clone();
            let j = n.links.iter().position(|&a| a == child).ok_or_else(|| Error::contract("broken border path"))?;
            n.keys.insert(j, sep);
            n.links.insert(j + 1, new_addr);
            if n.links.len() <= self.fanout {
                *dam.node_mut(h)? = n;
                dam.evict(&[h], true)?;
                carry = None;
            } else {
                let mid = n.links.len().div_ceil(2);
                let right = NodeBlock { keys: n.keys.split_off(mid), links: n.links.split_off(mid), aux: Vec::new() };
                let up = n.keys.pop().expect("separator");
                let res = dam.reserve(dam.b())?;
                let addr = dam.alloc(1);
                dam.store_node(addr, right)?;
                dam.release(&[res])?;
                *dam.node_mut(h)? = n;
                dam.evict(&[h], true)?;
                carry = Some((up, addr));
            }
            child = parent;
        }
        if let Some((sep, new_addr)) = carry {
            let addr = dam.alloc(1);
            dam.store_node(addr, NodeBlock { keys: vec![sep], links: vec![*root, new_addr], aux: Vec::new() })?;
            *root = addr;
            *depth += 1;
        }
        Ok(())
    }

    /// Moves a resident tree to disk by bulk loading.
    fn spill(&mut self, dam: &mut Dam) -> Result<()> {
        let BorderState::Resident { ivs, res } = &mut self.state else { return Ok(()) };
        let ivs = std::mem::take(ivs);
        let res = *res;
        let fill = self.leaf_cap.div_ceil(2).max(1);
        let mut level: Vec<(Option<Key>, u64)> = Vec::new();
        for chunk in ivs.chunks(fill) {
            let addr = dam.alloc(1);
            dam.store_node(addr, encode_leaf(chunk))?;
            level.push((chunk[0].lo, addr));
        }
        if level.is_empty() {
            let addr = dam.alloc(1);
            dam.store_node(addr, NodeBlock::default())?;
            level.push((None, addr));
        }
        let mut depth = 0;
        let per = self.fanout.div_ceil(2).max(2);
        while level.len() > 1 {
            let mut next = Vec::new();
            for chunk in level.chunks(per) {
                let node = NodeBlock {
                    keys: chunk[1..].iter().map(|c| c.0.unwrap_or_default()).collect(),
                    links: chunk.iter().map(|c| c.1).collect(),
                    aux: Vec::new(),
                };
                let addr = dam.alloc(1);
                dam.store_node(addr, node)?;
                next.push((chunk[0].0, addr));
            }
            level = next;
            depth += 1;
        }
        dam.release(&[res])?;
        self.state = BorderState::Disk { root: level[0].1, depth, len: ivs.len() };
        self.spilled = true;
        Ok(())
    }

    /// Visits intervals in ascending order, persisting any changes.
    pub fn for_each_mut(&mut self, dam: &mut Dam, mut f: impl FnMut(&mut Interval)) -> Result<()> {
        match &mut self.state {
            BorderState::Resident { ivs, .. } => {
                ivs.iter_mut().for_each(f);
                Ok(())
            }
            BorderState::Disk { root, depth, .. } => {
                let mut stack = vec![(*root, *depth)];
                while let Some((addr, d)) = stack.pop() {
                    let h = dam.load_node(addr)?;
                    if d == 0 {
                        let mut ivs = decode_leaf(dam.node(h)?);
                        ivs.iter_mut().for_each(&mut f);
                        *dam.node_mut(h)? = encode_leaf(&ivs);
                        dam.evict(&[h], true)?;
                    } else {
                        let links = dam.node(h)?.links.clone();
                        dam.release(&[h])?;
                        stack.extend(links.into_iter().rev().map(|a| (a, d - 1)));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn close(self, dam: &mut Dam) -> Result<()> {
        if let BorderState::Resident { res, .. } = self.state {
            dam.release(&[res])?;
        }
        Ok(())
    }
}

/// Descends to the leaf for `x`, returning the (node, chosen link) path and
/// the resident leaf.
fn descend_border(dam: &mut Dam, root: u64, depth: usize, x: Key) -> Result<(Vec<(u64, u64)>, Handle)> {
    let mut path = Vec::with_capacity(depth);
    let mut addr = root;
    for _ in 0..depth {
        let h = dam.load_node(addr)?;
        let n = dam.node(h)?;
        let c = n.keys.partition_point(|&k| k < x);
        let next = n.links[c];
        dam.release(&[h])?;
        path.push((addr, next));
        addr = next;
    }
    Ok((path, dam.load_node(addr)?))
}

/// Which placement algorithm ran.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PleAlgo {
    Dfs,
    Bfs,
}

impl PleAlgo {
    pub fn name(&self) -> &'static str {
        match self {
            PleAlgo::Dfs => "dfs",
            PleAlgo::Bfs => "bfs",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PleStats {
    /// Full static-tree descents (depth-first).
    pub descents: usize,
    pub tree_height: usize,
    pub border_spilled: bool,
    /// `(level, node)` of every tree node load (breadth-first).
    pub node_loads: Vec<(usize, usize)>,
    /// Transfer cost of each routing level, top first (breadth-first).
    pub level_costs: Vec<IoCount>,
    pub fanout: usize,
    pub build: IoCount,
}

impl PleStats {
    pub fn duplicate_node_loads(&self) -> usize {
        let mut seen = HashSet::new();
        self.node_loads.iter().filter(|n| !seen.insert(**n)).count()
    }
}

/// Larges grouped by stripe. `stripes[i]` holds the records of stripe `i+1`.
#[derive(Clone, Debug)]
pub struct PleOutcome {
    pub algo: PleAlgo,
    pub assignment: StripeAssignment,
    pub stripes: Vec<Segment>,
    pub stripe_sizes: Vec<usize>,
    pub stripe_preds: Vec<usize>,
    pub stats: PleStats,
}

fn trivial_outcome(algo: PleAlgo, dam: &Dam, larges: &Run) -> PleOutcome {
    let slots = dam.peek_run(larges);
    let keys: Vec<Key> = slots.iter().map(|s| s.rec.key).collect();
    let n = keys.len();
    let assignment = StripeAssignment::from_preds(keys, vec![0; n]);
    let (stripes, sizes, preds) = if n == 0 { (vec![], vec![], vec![]) } else { (vec![Segment::whole(larges.clone())], vec![n], vec![0]) };
    PleOutcome { algo, assignment, stripes, stripe_sizes: sizes, stripe_preds: preds, stats: PleStats::default() }
}

/// Depth-first placement. Needs `M >= max(w, B) + 2B`.
pub fn ple_dfs(dam: &mut Dam, smalls: &Run, larges: &Run, mode: BorderMode) -> Result<PleOutcome> {
    let (b, w) = (dam.b(), larges.w);
    if b < 2 {
        return Err(Error::param("placement needs B >= 2"));
    }
    if dam.m() < w.max(b) + 2 * b {
        return Err(Error::param(format!("depth-first placement needs M >= max(w,B) + 2B (M={}, w={w}, B={b})", dam.m())));
    }
    if smalls.len == 0 || larges.len == 0 {
        // everything lands in the single gap; the larges already form it
        return Ok(trivial_outcome(PleAlgo::Dfs, dam, larges));
    }
    let start = dam.io();
    let tree = StaticBTree::build(dam, smalls)?;
    let mut stats = PleStats { tree_height: tree.height, build: dam.io() - start, ..Default::default() };
    let mut border = BorderTree::new(dam, mode, w)?;

    let mut keys = Vec::with_capacity(larges.len);
    let mut preds = Vec::with_capacity(larges.len);
    let mut reader = RunReader::new(larges.clone());
    while let Some(h) = reader.next(dam)? {
        let x = dam.key(h)?;
        let hit = border.search_mut(dam, x, |iv| iv.count += 1)?;
        let pred = match hit {
            Some(iv) => iv.pred,
            None => {
                let p = tree.descend(dam, x)?;
                stats.descents += 1;
                border.insert(dam, x, Interval { pred: p.pred, lo: p.lo, hi: p.hi, count: 1, ..Default::default() })?;
                p.pred
            }
        };
        keys.push(x);
        preds.push(pred);
        dam.release(&[h])?;
    }

    let mut sizes = Vec::new();
    let mut stripe_preds = Vec::new();
    let mut offset = 0;
    border.for_each_mut(dam, |iv| {
        sizes.push(iv.count);
        stripe_preds.push(iv.pred);
        iv.stripe = sizes.len();
        iv.cursor = offset;
        offset += iv.count;
    })?;

    let n = larges.len;
    let per = if w > b { 0 } else { dam.per_block(w) };
    let parts = dam.parts(w) as u64;
    let region_blocks = if w > b { n as u64 * parts } else { n.div_ceil(per) as u64 };
    let region = dam.alloc(region_blocks);
    let mut reader = RunReader::new(larges.clone());
    while let Some(h) = reader.next(dam)? {
        let x = dam.key(h)?;
        let iv = border.search_mut(dam, x, |iv| iv.cursor += 1)?.ok_or_else(|| Error::contract(format!("large {x} lost its stripe")))?;
        let pos = iv.cursor - 1;
        dam.set_tag(h, iv.stripe as u64)?;
        if w > b {
            dam.store_record(region + pos as u64 * parts, h)?;
        } else if per == 1 {
            dam.store_block(region + pos as u64, &[h])?;
        } else {
            let addr = region + (pos / per) as u64;
            let mut hs = dam.load_block(addr)?;
            hs.push(h);
            let mut tagged = Vec::with_capacity(hs.len());
            for &x in &hs {
                tagged.push((dam.tag(x)?, x));
            }
            tagged.sort_by_key(|t| t.0);
            let ordered: Vec<Handle> = tagged.into_iter().map(|t| t.1).collect();
            dam.store_block(addr, &ordered)?;
        }
    }
    stats.border_spilled = border.spilled;
    border.close(dam)?;

    let run = Run { extents: vec![crate::dam::Extent { start: region, blocks: region_blocks }], len: n, w };
    let stripes = crate::em_sort::split_segments(&run, &sizes);
    let assignment = StripeAssignment::from_preds(keys, preds);
    Ok(PleOutcome { algo: PleAlgo::Dfs, assignment, stripes, stripe_sizes: sizes, stripe_preds, stats })
}

/// Fanout and leaf size of the breadth-first tree.
pub fn bfs_fanout(b: usize, m: usize, w: usize) -> usize {
    if w >= b {
        (m.saturating_sub(w) / b) * b
    } else {
        m.saturating_sub(2 * b) / (b + 1)
    }
}

/// Breadth-first placement over a tree of fanout `Θ(M)`.
pub fn ple_bfs(dam: &mut Dam, smalls: &Run, larges: &Run) -> Result<PleOutcome> {
    let (b, m, w) = (dam.b(), dam.m(), larges.w);
    let f = bfs_fanout(b, m, w);
    if f < 2 {
        return Err(Error::param(format!("breadth-first placement fanout {f} below 2 (M={m}, w={w}, B={b})")));
    }
    if smalls.len == 0 || larges.len == 0 {
        return Ok(trivial_outcome(PleAlgo::Bfs, dam, larges));
    }
    let s = smalls.len;
    let leaf = f;
    let leaf_count = s.div_ceil(leaf);
    let nb = f.div_ceil(b);
    let start = dam.io();

    // levels[0] is the level directly above the leaves
    let mut levels: Vec<(u64, usize)> = Vec::new();
    let mut child_count = leaf_count;
    let res = dam.reserve(nb * b)?;
    while child_count > 1 {
        let count = child_count.div_ceil(f);
        let base = dam.alloc((count * nb) as u64);
        let mut child_keys = Vec::with_capacity(f);
        for j in 0..count {
            child_keys.clear();
            for c in j * f..((j + 1) * f).min(child_count) {
                let key = match levels.last() {
                    None => {
                        let blk = smalls.block_at((c * leaf / b) as u64).ok_or_else(|| Error::contract("short run"))?;
                        let hs = dam.load_block(blk)?;
                        let k = dam.key(hs[(c * leaf) % b])?;
                        dam.release(&hs)?;
                        k
                    }
                    Some(&(cb, _)) => {
                        let h = dam.load_node(cb + (c * nb) as u64)?;
                        let k = dam.node(h)?.keys[0];
                        dam.release(&[h])?;
                        k
                    }
                };
                child_keys.push(key);
            }
            for (i, chunk) in child_keys.chunks(b).enumerate() {
                dam.store_node(base + (j * nb + i) as u64, NodeBlock { keys: chunk.to_vec(), ..Default::default() })?;
            }
        }
        levels.push((base, count));
        child_count = count;
    }
    dam.release(&[res])?;
    let mut stats = PleStats { fanout: f, build: dam.io() - start, tree_height: levels.len() + 1, ..Default::default() };

    // route top-down; buckets[j] holds the larges bound for node j of the level
    let mut input_order = Vec::with_capacity(larges.len);
    let mut buckets: Vec<Option<Run>> = vec![Some(larges.clone())];
    for (depth, &(base, count)) in levels.iter().rev().enumerate() {
        let before = dam.io();
        let children = if depth + 1 < levels.len() { levels[levels.len() - depth - 2].1 } else { leaf_count };
        let mut next: Vec<Option<Run>> = vec![None; children];
        for (j, bucket) in buckets.into_iter().enumerate().take(count) {
            let Some(bucket) = bucket else { continue };
            stats.node_loads.push((depth, j));
            let used_blocks = f.min(children - j * f).div_ceil(b);
            let mut node_hs = Vec::with_capacity(used_blocks);
            let mut keys = Vec::with_capacity(f);
            for i in 0..used_blocks {
                let h = dam.load_node(base + (j * nb + i) as u64)?;
                keys.extend_from_slice(&dam.node(h)?.keys);
                node_hs.push(h);
            }
            let seen = if depth == 0 { Some(&mut input_order) } else { None };
            let routed = route(dam, bucket, &keys, w, |c| (j * f + c) as u64, seen)?;
            dam.release(&node_hs)?;
            for (c, run) in routed {
                next[j * f + c] = Some(run);
            }
        }
        buckets = next;
        stats.level_costs.push(dam.io() - before);
    }

    // leaves route to individual gaps
    let before = dam.io();
    let depth = levels.len();
    let mut keys_out = Vec::with_capacity(larges.len);
    let mut preds_out = Vec::with_capacity(larges.len);
    let mut stripes = Vec::new();
    let mut sizes = Vec::new();
    let mut stripe_preds = Vec::new();
    for (i, bucket) in buckets.into_iter().enumerate() {
        let Some(bucket) = bucket else { continue };
        stats.node_loads.push((depth, i));
        let lo = i * leaf;
        let len = leaf.min(s - lo);
        let mut rd = RunReader::range(smalls.clone(), lo, len);
        let mut small_hs = Vec::with_capacity(len);
        let mut keys = Vec::with_capacity(len);
        while let Some(h) = rd.next(dam)? {
            keys.push(dam.key(h)?);
            small_hs.push(h);
        }
        // first child key never applies at a leaf: the gap index is the count itself
        let routed = route_gaps(dam, bucket, &keys, w, lo, &mut keys_out, &mut preds_out)?;
        dam.release(&small_hs)?;
        for (c, run) in routed {
            sizes.push(run.len);
            stripe_preds.push(lo + c);
            stripes.push(Segment::whole(run));
        }
    }
    stats.level_costs.push(dam.io() - before);
    let mut assignment = StripeAssignment::from_preds(keys_out, preds_out);
    if !levels.is_empty() {
        assignment = assignment.reordered(&input_order)?;
    }
    Ok(PleOutcome { algo: PleAlgo::Bfs, assignment, stripes, stripe_sizes: sizes, stripe_preds, stats })
}

/// Routes a bucket of larges through one internal node into per-child runs.
fn route(
    dam: &mut Dam,
    bucket: Run,
    keys: &[Key],
    w: usize,
    tag: impl Fn(usize) -> u64,
    mut seen: Option<&mut Vec<Key>>,
) -> Result<BTreeMap<usize, Run>> {
    let mut writers: BTreeMap<usize, RunWriter> = BTreeMap::new();
    let mut rd = RunReader::new(bucket);
    while let Some(h) = rd.next(dam)? {
        let x = dam.key(h)?;
        if let Some(seen) = seen.as_deref_mut() {
            seen.push(x);
        }
        let c = keys.partition_point(|&k| k < x).max(1) - 1;
        dam.set_tag(h, tag(c))?;
        writers.entry(c).or_insert_with(|| RunWriter::new(w)).push(dam, h)?;
    }
    let mut out = BTreeMap::new();
    for (c, wr) in writers {
        out.insert(c, wr.finish(dam)?);
    }
    Ok(out)
}

/// Routes a bucket of larges against the resident smalls of one leaf. Child
/// `c` is the gap after `c` smalls of the leaf.
fn route_gaps(
    dam: &mut Dam,
    bucket: Run,
    keys: &[Key],
    w: usize,
    lo: usize,
    keys_out: &mut Vec<Key>,
    preds_out: &mut Vec<usize>,
) -> Result<BTreeMap<usize, Run>> {
    let mut writers: BTreeMap<usize, RunWriter> = BTreeMap::new();
    let mut rd = RunReader::new(bucket);
    while let Some(h) = rd.next(dam)? {
        let x = dam.key(h)?;
        let c = keys.partition_point(|&k| k < x);
        if c < keys.len() && keys[c] == x {
            return Err(Error::contract(format!("large key {x} equals a small key")));
        }
        dam.set_tag(h, (lo + c) as u64)?;
        keys_out.push(x);
        preds_out.push(lo + c);
        writers.entry(c).or_insert_with(|| RunWriter::new(w)).push(dam, h)?;
    }
    let mut out = BTreeMap::new();
    for (c, wr) in writers {
        out.insert(c, wr.finish(dam)?);
    }
    Ok(out)
}

/// Picks the placement whose upper-bound term is smaller, using `k_hint` as
/// the stripe count in the formula.
pub fn choose_algo(s: usize, n: usize, w: usize, k_hint: usize, b: usize, m: usize) -> Result<PleAlgo> {
    if bfs_fanout(b, m, w) < 2 {
        return Ok(PleAlgo::Dfs);
    }
    let t = ple_upper_terms(&Shape::new(s, n * w, w, k_hint.max(1), b, m))?;
    Ok(if t.second_wins() { PleAlgo::Dfs } else { PleAlgo::Bfs })
}

pub fn ple_auto(dam: &mut Dam, smalls: &Run, larges: &Run, k_hint: usize) -> Result<PleOutcome> {
    match choose_algo(smalls.len, larges.len, larges.w, k_hint, dam.b(), dam.m())? {
        PleAlgo::Dfs => ple_dfs(dam, smalls, larges, BorderMode::Auto),
        PleAlgo::Bfs => ple_bfs(dam, smalls, larges),
    }
}

pub fn run_ple(dam: &mut Dam, smalls: &Run, larges: &Run, algo: PleAlgo, mode: BorderMode) -> Result<PleOutcome> {
    match algo {
        PleAlgo::Dfs => ple_dfs(dam, smalls, larges, mode),
        PleAlgo::Bfs => ple_bfs(dam, smalls, larges),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{brute_force_predecessors, gen_instance, gen_subproblem, GenParams, Instance, Subproblem};

    fn stage(dam: &mut Dam, inst: &Instance) -> (Run, Run) {
        let smalls = dam.place_records(&inst.sorted_smalls()).unwrap();
        let larges = dam.place_records(&inst.larges).unwrap();
        (smalls, larges)
    }

    fn oracle(inst: &Instance) -> StripeAssignment {
        brute_force_predecessors(&inst.sorted_small_keys(), &inst.large_keys()).unwrap()
    }

    /// Checks the assignment and that each stripe segment holds exactly its larges.
    fn verify(dam: &Dam, inst: &Instance, out: &PleOutcome) {
        let want = oracle(inst);
        assert_eq!(out.assignment, want);
        assert_eq!(out.stripe_sizes, want.stripe_sizes());
        assert_eq!(out.stripe_preds, want.stripe_preds());
        for (i, seg) in out.stripes.iter().enumerate() {
            let slots = dam.peek_run(&seg.run);
            for s in &slots[seg.skip..seg.skip + seg.len] {
                let j = want.keys.iter().position(|k| *k == s.rec.key).unwrap();
                assert_eq!(want.stripe[j], i + 1);
            }
        }
        assert_eq!(dam.used(), 0, "memory leaked");
    }

    fn gen(s: usize, n: usize, w: usize, k: usize, seed: u64) -> Instance {
        gen_instance(&GenParams { small: s, large_count: n, width: w, stripes: k, sizes: None, seed }).unwrap()
    }

    #[test]
    fn static_tree_descends_correctly() {
        let inst = gen(300, 40, 4, 13, 3);
        let mut dam = Dam::new(4, 64).unwrap();
        let (smalls, _) = stage(&mut dam, &inst);
        let tree = StaticBTree::build(&mut dam, &smalls).unwrap();
        assert_eq!(tree.height, 5); // 75 leaves -> 19 -> 5 -> 2 -> 1
        let sorted = inst.sorted_small_keys();
        for key in inst.large_keys() {
            let before = dam.io();
            let p = tree.descend(&mut dam, key).unwrap();
            assert_eq!(dam.io().reads - before.reads, tree.height as u64);
            let pred = sorted.partition_point(|&k| k < key);
            assert_eq!(p.pred, pred);
            assert_eq!(p.lo, pred.checked_sub(1).map(|i| sorted[i]));
            assert_eq!(p.hi, sorted.get(pred).copied());
        }
    }

    #[test]
    fn dfs_single_stripe_descends_once() {
        let inst = gen(64, 20, 8, 1, 1);
        let mut dam = Dam::new(4, 32).unwrap();
        let (s, l) = stage(&mut dam, &inst);
        let out = ple_dfs(&mut dam, &s, &l, BorderMode::Auto).unwrap();
        assert_eq!(out.stats.descents, 1);
        verify(&dam, &inst, &out);
    }

    #[test]
    fn dfs_kk_both_border_modes() {
        let inst = gen_subproblem(Subproblem::KK { k: 16 }, 4, 2).unwrap();
        for mode in [BorderMode::Auto, BorderMode::Disk] {
            let mut dam = Dam::new(4, 64).unwrap();
            let (s, l) = stage(&mut dam, &inst);
            let out = ple_dfs(&mut dam, &s, &l, mode).unwrap();
            assert_eq!(out.stats.descents, 16);
            verify(&dam, &inst, &out);
        }
    }

    #[test]
    fn dfs_spills_border_tree_when_memory_is_tight() {
        let inst = gen(2000, 300, 8, 150, 9);
        let mut dam = Dam::new(8, 64).unwrap();
        let (s, l) = stage(&mut dam, &inst);
        let out = ple_dfs(&mut dam, &s, &l, BorderMode::Auto).unwrap();
        assert!(out.stats.border_spilled);
        assert_eq!(out.stats.descents, 150);
        verify(&dam, &inst, &out);
    }

    #[test]
    fn dfs_sub_block_larges() {
        let inst = gen(500, 90, 2, 30, 4);
        for mode in [BorderMode::Auto, BorderMode::Disk] {
            let mut dam = Dam::new(8, 64).unwrap();
            let (s, l) = stage(&mut dam, &inst);
            let out = ple_dfs(&mut dam, &s, &l, mode).unwrap();
            verify(&dam, &inst, &out);
            assert!(dam.peak() <= 64);
        }
    }

    #[test]
    fn dfs_rejects_small_memory() {
        let inst = gen(64, 8, 8, 2, 1);
        let mut dam = Dam::new(4, 15).unwrap();
        let (s, l) = stage(&mut dam, &inst);
        assert!(matches!(ple_dfs(&mut dam, &s, &l, BorderMode::Auto), Err(Error::Parameter(_))));
    }

    #[test]
    fn bfs_single_leaf() {
        let inst = gen(20, 16, 4, 5, 2);
        let mut dam = Dam::new(4, 64).unwrap();
        let (s, l) = stage(&mut dam, &inst);
        let out = ple_bfs(&mut dam, &s, &l).unwrap();
        verify(&dam, &inst, &out);
        // smalls once, larges read and written once
        assert_eq!(dam.io().reads, 5 + 16);
        assert_eq!(dam.io().writes, 16);
    }

    #[test]
    fn bfs_ktilde_example() {
        let inst = gen_subproblem(Subproblem::KTilde { k: 8, large_count: 64 }, 4, 5).unwrap();
        let mut dam = Dam::new(4, 32).unwrap();
        let (s, l) = stage(&mut dam, &inst);
        let out = ple_bfs(&mut dam, &s, &l).unwrap();
        verify(&dam, &inst, &out);
        assert_eq!(out.stats.duplicate_node_loads(), 0);
    }

    #[test]
    fn bfs_multi_level_node_once() {
        for (w, b, m) in [(8, 8, 32), (4, 8, 64), (16, 8, 64), (1, 4, 32)] {
            let inst = gen(3000, 200, w, 40, 7);
            let mut dam = Dam::new(b, m).unwrap();
            let (s, l) = stage(&mut dam, &inst);
            let out = ple_bfs(&mut dam, &s, &l).unwrap();
            verify(&dam, &inst, &out);
            assert!(out.stats.tree_height >= 3, "w={w}");
            assert_eq!(out.stats.duplicate_node_loads(), 0);
            assert!(dam.peak() <= m);
        }
    }

    #[test]
    fn bfs_rejects_tiny_fanout() {
        let inst = gen(64, 8, 1, 2, 1);
        let mut dam = Dam::new(8, 24).unwrap();
        let (s, l) = stage(&mut dam, &inst);
        assert!(matches!(ple_bfs(&mut dam, &s, &l), Err(Error::Parameter(_))));
    }

    #[test]
    fn auto_choice_follows_formula() {
        // worked example: second term (216) beats first (234.67)
        assert_eq!(choose_algo(1 << 10, 1 << 4, 1 << 5, 4, 8, 64).unwrap(), PleAlgo::Dfs);
        // w = M/2: fanout collapses, depth-first wins
        assert_eq!(choose_algo(4096, 64, 32, 8, 8, 64).unwrap(), PleAlgo::Dfs);
        // tiny records, many stripes: batched routing wins
        assert_eq!(choose_algo(4096, 4096, 8, 1024, 8, 1024).unwrap(), PleAlgo::Bfs);
    }

    #[test]
    fn empty_sides() {
        let mut dam = Dam::new(4, 64).unwrap();
        let smalls = dam.place_records(&[]).unwrap();
        let larges = dam.place_records(&[crate::model::Record::large(3, 4)]).unwrap();
        let out = ple_dfs(&mut dam, &smalls, &larges, BorderMode::Auto).unwrap();
        assert_eq!(out.stripe_sizes, vec![1]);
        let out = ple_bfs(&mut dam, &smalls, &larges).unwrap();
        assert_eq!(out.assignment.pred, vec![0]);
    }
}
