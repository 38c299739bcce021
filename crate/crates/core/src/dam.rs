//! Disk-access-machine session: a block-addressed disk, a volume-bounded
//! memory and an exact transfer ledger.
//!
//! Records are only reachable through resident [`Handle`]s. Every key read and
//! every comparison checks residency, so an algorithm that peeks at disk
//! contents without paying for the transfer fails loudly. The `peek_*`
//! functions are the single exception and exist for oracles and output dumps.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::ops::{Add, Sub};

use crate::error::{Error, Result};
use crate::model::{Key, Record};

/// A record on disk together with an algorithm-owned annotation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Slot {
    pub rec: Record,
    pub tag: u64,
}

impl Slot {
    pub fn new(rec: Record) -> Self {
        Slot { rec, tag: 0 }
    }
}

/// Index node: up to `B` keys, child links and per-child auxiliary words.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeBlock {
    pub keys: Vec<Key>,
    pub links: Vec<u64>,
    pub aux: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Block {
    Empty,
    Packed(Vec<Slot>),
    /// First block of a record wider than `B`.
    SpanHead {
        slot: Slot,
        parts: usize,
    },
    SpanTail,
    Node(NodeBlock),
}

/// Coarse block classification for layout inspection.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Empty,
    Packed(usize),
    SpanHead(usize),
    SpanTail,
    Node,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Handle(u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Origin {
    Block { addr: u64, idx: usize },
    Span(u64),
    Fresh,
}

#[derive(Clone, Debug)]
enum Resident {
    Rec { slot: Slot, origin: Origin },
    Node { node: NodeBlock, addr: u64 },
    Reserve(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IoKind {
    Read,
    Write,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IoEvent {
    pub kind: IoKind,
    pub addr: u64,
    pub vol: usize,
}

/// Read and write counts at one instant. Subtracting two snapshots gives the
/// cost of the work in between.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IoCount {
    pub reads: u64,
    pub writes: u64,
}

impl IoCount {
    pub fn total(&self) -> u64 {
        self.reads + self.writes
    }
}

impl Sub for IoCount {
    type Output = IoCount;
    fn sub(self, rhs: IoCount) -> IoCount {
        IoCount { reads: self.reads - rhs.reads, writes: self.writes - rhs.writes }
    }
}

impl Add for IoCount {
    type Output = IoCount;
    fn add(self, rhs: IoCount) -> IoCount {
        IoCount { reads: self.reads + rhs.reads, writes: self.writes + rhs.writes }
    }
}

#[derive(Clone, Debug, Default)]
pub struct CostLedger {
    pub reads: u64,
    pub writes: u64,
    pub trace: Option<Vec<IoEvent>>,
}

impl CostLedger {
    pub fn total_ios(&self) -> u64 {
        self.reads + self.writes
    }

    pub fn snapshot(&self) -> IoCount {
        IoCount { reads: self.reads, writes: self.writes }
    }

    fn charge(&mut self, kind: IoKind, addr: u64, vol: usize) {
        match kind {
            IoKind::Read => self.reads += 1,
            IoKind::Write => self.writes += 1,
        }
        if let Some(t) = &mut self.trace {
            t.push(IoEvent { kind, addr, vol });
        }
    }

    /// Trace as `R <addr> <vol>` / `W <addr> <vol>` lines.
    pub fn trace_text(&self) -> String {
        let mut out = String::new();
        for e in self.trace.iter().flatten() {
            let c = if e.kind == IoKind::Read { 'R' } else { 'W' };
            let _ = writeln!(out, "{c} {} {}", e.addr, e.vol);
        }
        out
    }
}

/// Recomputes `(reads, writes)` from a trace dump.
pub fn replay_trace(text: &str) -> Result<IoCount> {
    let mut count = IoCount::default();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let bad = || Error::Parse { line: i + 1, msg: format!("bad trace line {line:?}") };
        match parts.next() {
            Some("R") => count.reads += 1,
            Some("W") => count.writes += 1,
            None => continue,
            _ => return Err(bad()),
        }
        for _ in 0..2 {
            parts.next().ok_or_else(bad)?.parse::<u64>().map_err(|_| bad())?;
        }
    }
    Ok(count)
}

/// Residency audit counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AuditStats {
    pub key_accesses: u64,
    pub comparisons: u64,
    pub rejections: u64,
}

/// One simulation session.
#[derive(Debug)]
pub struct Dam {
    b: usize,
    m: usize,
    disk: Vec<Block>,
    mem: HashMap<Handle, Resident>,
    used: usize,
    peak: usize,
    next: u64,
    ledger: CostLedger,
    audit: AuditStats,
}

impl Dam {
    pub fn new(b: usize, m: usize) -> Result<Self> {
        if b == 0 {
            return Err(Error::param("block size must be positive"));
        }
        if m < b {
            return Err(Error::param(format!("memory {m} smaller than one block {b}")));
        }
        Ok(Dam {
            b,
            m,
            disk: Vec::new(),
            mem: HashMap::new(),
            used: 0,
            peak: 0,
            next: 0,
            ledger: CostLedger::default(),
            audit: AuditStats::default(),
        })
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn used(&self) -> usize {
        self.used
    }

    pub fn free(&self) -> usize {
        self.m - self.used
    }

    pub fn peak(&self) -> usize {
        self.peak
    }

    pub fn resident_count(&self) -> usize {
        self.mem.len()
    }

    pub fn ledger(&self) -> &CostLedger {
        &self.ledger
    }

    pub fn io(&self) -> IoCount {
        self.ledger.snapshot()
    }

    pub fn audit(&self) -> AuditStats {
        self.audit
    }

    pub fn enable_trace(&mut self) {
        if self.ledger.trace.is_none() {
            self.ledger.trace = Some(Vec::new());
        }
    }

    pub fn disk_len(&self) -> u64 {
        self.disk.len() as u64
    }

    /// Blocks a record of width `w` spans on disk.
    pub fn parts(&self, w: usize) -> usize {
        w.div_ceil(self.b)
    }

    /// Records per block when `w <= B`.
    pub fn per_block(&self, w: usize) -> usize {
        (self.b / w).max(1)
    }

    /// Reserves `blocks` fresh contiguous empty blocks at the end of the disk.
    pub fn alloc(&mut self, blocks: u64) -> u64 {
        let start = self.disk.len() as u64;
        self.disk.resize(self.disk.len() + blocks as usize, Block::Empty);
        start
    }

    fn check_addr(&self, addr: u64, blocks: usize) -> Result<()> {
        if (addr as usize).saturating_add(blocks) > self.disk.len() {
            return Err(Error::contract(format!("block address {addr} out of range")));
        }
        Ok(())
    }

    fn insert(&mut self, r: Resident) -> Handle {
        let vol = self.vol_of(&r);
        self.used += vol;
        self.peak = self.peak.max(self.used);
        let h = Handle(self.next);
        self.next += 1;
        self.mem.insert(h, r);
        h
    }

    fn vol_of(&self, r: &Resident) -> usize {
        match r {
            Resident::Rec { slot, .. } => slot.rec.width,
            Resident::Node { .. } => self.b,
            Resident::Reserve(v) => *v,
        }
    }

    fn need(&self, vol: usize) -> Result<()> {
        if self.free() < vol {
            return Err(Error::residency(format!("need {vol} free volume, {} of {} in use", self.used, self.m)));
        }
        Ok(())
    }

    fn remove(&mut self, h: Handle) -> Result<Resident> {
        let r = self.mem.remove(&h).ok_or_else(|| Error::contract(format!("{h:?} is not resident")))?;
        self.used -= self.vol_of(&r);
        Ok(r)
    }

    /// Reads one block of packed records into memory. Requires `B` free volume;
    /// the resident volume is the block's content volume.
    pub fn load_block(&mut self, addr: u64) -> Result<Vec<Handle>> {
        self.check_addr(addr, 1)?;
        self.need(self.b)?;
        let slots = match &self.disk[addr as usize] {
            Block::Empty => Vec::new(),
            Block::Packed(s) => s.clone(),
            other => return Err(Error::contract(format!("block {addr} holds {:?}, not packed records", kind(other)))),
        };
        let vol = slots.iter().map(|s| s.rec.width).sum();
        self.ledger.charge(IoKind::Read, addr, vol);
        Ok(slots
            .into_iter()
            .enumerate()
            .map(|(idx, slot)| self.insert(Resident::Rec { slot, origin: Origin::Block { addr, idx } }))
            .collect())
    }

    /// Reads one whole record starting at `addr`: `⌈w/B⌉` reads.
    pub fn load_record(&mut self, addr: u64) -> Result<Handle> {
        self.check_addr(addr, 1)?;
        match self.disk[addr as usize].clone() {
            Block::SpanHead { slot, parts } => {
                self.need(slot.rec.width)?;
                for p in 0..parts {
                    let vol = (slot.rec.width - p * self.b).min(self.b);
                    self.ledger.charge(IoKind::Read, addr + p as u64, vol);
                }
                Ok(self.insert(Resident::Rec { slot, origin: Origin::Span(addr) }))
            }
            Block::Packed(s) if s.len() == 1 => {
                self.need(s[0].rec.width.max(self.b))?;
                self.ledger.charge(IoKind::Read, addr, s[0].rec.width);
                Ok(self.insert(Resident::Rec { slot: s[0], origin: Origin::Block { addr, idx: 0 } }))
            }
            other => Err(Error::contract(format!("block {addr} holds {:?}, not a single record", kind(&other)))),
        }
    }

    pub fn load_node(&mut self, addr: u64) -> Result<Handle> {
        self.check_addr(addr, 1)?;
        self.need(self.b)?;
        let node = match &self.disk[addr as usize] {
            Block::Node(n) => n.clone(),
            other => return Err(Error::contract(format!("block {addr} holds {:?}, not a node", kind(other)))),
        };
        self.ledger.charge(IoKind::Read, addr, self.b);
        Ok(self.insert(Resident::Node { node, addr }))
    }

    /// Releases residency. With `write_back`, records go back to their origin
    /// blocks: one write per distinct packed block, `⌈w/B⌉` per wide record,
    /// one per node.
    pub fn evict(&mut self, handles: &[Handle], write_back: bool) -> Result<()> {
        let mut seen = BTreeSet::new();
        for h in handles {
            if !self.mem.contains_key(h) || !seen.insert(*h) {
                return Err(Error::contract(format!("{h:?} is not resident")));
            }
        }
        let mut dirty_blocks = BTreeSet::new();
        for &h in handles {
            let r = self.remove(h)?;
            if !write_back {
                continue;
            }
            match r {
                Resident::Rec { slot, origin: Origin::Block { addr, idx } } => {
                    if let Block::Packed(s) = &mut self.disk[addr as usize] {
                        if idx < s.len() {
                            s[idx] = slot;
                        }
                    }
                    dirty_blocks.insert(addr);
                }
                Resident::Rec { slot, origin: Origin::Span(addr) } => {
                    let parts = self.parts(slot.rec.width);
                    self.disk[addr as usize] = Block::SpanHead { slot, parts };
                    for p in 0..parts {
                        let vol = (slot.rec.width - p * self.b).min(self.b);
                        self.ledger.charge(IoKind::Write, addr + p as u64, vol);
                    }
                }
                Resident::Node { node, addr } => {
                    self.disk[addr as usize] = Block::Node(node);
                    self.ledger.charge(IoKind::Write, addr, self.b);
                }
                _ => return Err(Error::contract("write-back of data without an origin block")),
            }
        }
        for addr in dirty_blocks {
            let vol = match &self.disk[addr as usize] {
                Block::Packed(s) => s.iter().map(|s| s.rec.width).sum(),
                _ => 0,
            };
            self.ledger.charge(IoKind::Write, addr, vol);
        }
        Ok(())
    }

    pub fn release(&mut self, handles: &[Handle]) -> Result<()> {
        self.evict(handles, false)
    }

    /// Writes resident records, in the given order, as the new content of
    /// block `addr` (one write) and releases them.
    pub fn store_block(&mut self, addr: u64, handles: &[Handle]) -> Result<()> {
        self.check_addr(addr, 1)?;
        let mut slots = Vec::with_capacity(handles.len());
        for &h in handles {
            slots.push(self.slot(h)?);
        }
        let vol: usize = slots.iter().map(|s| s.rec.width).sum();
        if vol > self.b {
            return Err(Error::contract(format!("volume {vol} does not fit a block of {}", self.b)));
        }
        self.release(handles)?;
        self.disk[addr as usize] = Block::Packed(slots);
        self.ledger.charge(IoKind::Write, addr, vol);
        Ok(())
    }

    /// Writes one resident record at `addr` (`⌈w/B⌉` writes) and releases it.
    pub fn store_record(&mut self, addr: u64, h: Handle) -> Result<()> {
        let slot = self.slot(h)?;
        let w = slot.rec.width;
        if w <= self.b {
            return self.store_block(addr, &[h]);
        }
        let parts = self.parts(w);
        self.check_addr(addr, parts)?;
        self.release(&[h])?;
        self.disk[addr as usize] = Block::SpanHead { slot, parts };
        self.ledger.charge(IoKind::Write, addr, self.b);
        for p in 1..parts {
            self.disk[addr as usize + p] = Block::SpanTail;
            self.ledger.charge(IoKind::Write, addr + p as u64, (w - p * self.b).min(self.b));
        }
        Ok(())
    }

    /// Writes an index node assembled in memory (one write).
    pub fn store_node(&mut self, addr: u64, node: NodeBlock) -> Result<()> {
        self.check_addr(addr, 1)?;
        if node.keys.len() > self.b {
            return Err(Error::contract(format!("node with {} keys exceeds block size {}", node.keys.len(), self.b)));
        }
        self.disk[addr as usize] = Block::Node(node);
        self.ledger.charge(IoKind::Write, addr, self.b);
        Ok(())
    }

    /// Brings an externally supplied record (for example a query key) into
    /// memory without a transfer.
    pub fn admit(&mut self, rec: Record) -> Result<Handle> {
        self.need(rec.width)?;
        Ok(self.insert(Resident::Rec { slot: Slot::new(rec), origin: Origin::Fresh }))
    }

    /// Claims `vol` units of memory for algorithm working state.
    pub fn reserve(&mut self, vol: usize) -> Result<Handle> {
        self.need(vol)?;
        Ok(self.insert(Resident::Reserve(vol)))
    }

    pub fn resize_reservation(&mut self, h: Handle, vol: usize) -> Result<()> {
        let cur = match self.mem.get(&h) {
            Some(Resident::Reserve(v)) => *v,
            _ => return Err(Error::contract(format!("{h:?} is not a reservation"))),
        };
        if vol > cur {
            self.need(vol - cur)?;
        }
        self.used = self.used - cur + vol;
        self.peak = self.peak.max(self.used);
        self.mem.insert(h, Resident::Reserve(vol));
        Ok(())
    }

    fn resident_slot(&mut self, h: Handle) -> Result<&mut Slot> {
        match self.mem.get_mut(&h) {
            Some(Resident::Rec { slot, .. }) => Ok(slot),
            _ => {
                self.audit.rejections += 1;
                Err(Error::residency(format!("{h:?} is not a resident record")))
            }
        }
    }

    pub fn slot(&mut self, h: Handle) -> Result<Slot> {
        self.audit.key_accesses += 1;
        self.resident_slot(h).map(|s| *s)
    }

    pub fn key(&mut self, h: Handle) -> Result<Key> {
        self.slot(h).map(|s| s.rec.key)
    }

    pub fn width(&mut self, h: Handle) -> Result<usize> {
        self.slot(h).map(|s| s.rec.width)
    }

    pub fn tag(&mut self, h: Handle) -> Result<u64> {
        self.slot(h).map(|s| s.tag)
    }

    pub fn set_tag(&mut self, h: Handle, tag: u64) -> Result<()> {
        self.resident_slot(h)?.tag = tag;
        Ok(())
    }

    pub fn node(&mut self, h: Handle) -> Result<&NodeBlock> {
        self.audit.key_accesses += 1;
        match self.mem.get(&h) {
            Some(Resident::Node { node, .. }) => Ok(node),
            _ => {
                self.audit.rejections += 1;
                Err(Error::residency(format!("{h:?} is not a resident node")))
            }
        }
    }

    pub fn node_mut(&mut self, h: Handle) -> Result<&mut NodeBlock> {
        match self.mem.get_mut(&h) {
            Some(Resident::Node { node, .. }) => Ok(node),
            _ => {
                self.audit.rejections += 1;
                Err(Error::residency(format!("{h:?} is not a resident node")))
            }
        }
    }

    /// Key order of two resident records. Equal keys break the distinctness
    /// contract and are reported as an error.
    pub fn compare(&mut self, x: Handle, y: Handle) -> Result<Ordering> {
        let kx = self.key(x)?;
        let ky = self.key(y)?;
        self.audit.comparisons += 1;
        match kx.cmp(&ky) {
            Ordering::Equal => Err(Error::contract(format!("equal keys {kx} compared"))),
            o => Ok(o),
        }
    }

    /// Writes records into fresh blocks without charge (input staging).
    pub fn place_records(&mut self, recs: &[Record]) -> Result<Run> {
        let slots: Vec<Slot> = recs.iter().copied().map(Slot::new).collect();
        self.place_slots(&slots)
    }

    pub fn place_slots(&mut self, slots: &[Slot]) -> Result<Run> {
        let w = match slots.first() {
            Some(s) => s.rec.width,
            None => return Ok(Run::empty(1)),
        };
        if slots.iter().any(|s| s.rec.width != w) {
            return Err(Error::contract("mixed widths in one run"));
        }
        let (blocks, start) = if w > self.b {
            let parts = self.parts(w);
            let start = self.alloc((slots.len() * parts) as u64);
            for (i, s) in slots.iter().enumerate() {
                let a = start as usize + i * parts;
                self.disk[a] = Block::SpanHead { slot: *s, parts };
                for p in 1..parts {
                    self.disk[a + p] = Block::SpanTail;
                }
            }
            (slots.len() * parts, start)
        } else {
            let per = self.per_block(w);
            let n = slots.len().div_ceil(per);
            let start = self.alloc(n as u64);
            for (i, chunk) in slots.chunks(per).enumerate() {
                self.disk[start as usize + i] = Block::Packed(chunk.to_vec());
            }
            (n, start)
        };
        Ok(Run { extents: vec![Extent { start, blocks: blocks as u64 }], len: slots.len(), w })
    }

    /// Uncharged view of a block, for oracles and tests only.
    pub fn peek_block(&self, addr: u64) -> Option<&Block> {
        self.disk.get(addr as usize)
    }

    pub fn block_kind(&self, addr: u64) -> Option<BlockKind> {
        self.peek_block(addr).map(kind)
    }

    /// Uncharged copy of a run's records in order, for oracles and dumps.
    pub fn peek_run(&self, run: &Run) -> Vec<Slot> {
        let mut out = Vec::with_capacity(run.len);
        for addr in run.block_addrs() {
            match &self.disk[addr as usize] {
                Block::Packed(s) => out.extend_from_slice(s),
                Block::SpanHead { slot, .. } => out.push(*slot),
                _ => {}
            }
        }
        out.truncate(run.len);
        out
    }
}

fn kind(b: &Block) -> BlockKind {
    match b {
        Block::Empty => BlockKind::Empty,
        Block::Packed(s) => BlockKind::Packed(s.len()),
        Block::SpanHead { parts, .. } => BlockKind::SpanHead(*parts),
        Block::SpanTail => BlockKind::SpanTail,
        Block::Node(_) => BlockKind::Node,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Extent {
    pub start: u64,
    pub blocks: u64,
}

/// Records of one width stored densely across extents: every block but the
/// last is full (`⌊B/w⌋` records), or each record spans `⌈w/B⌉` blocks.
/// `w == 0` marks a mixed-width output run, which is only ever inspected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Run {
    pub extents: Vec<Extent>,
    pub len: usize,
    pub w: usize,
}

impl Run {
    pub fn empty(w: usize) -> Self {
        Run { extents: Vec::new(), len: 0, w }
    }

    pub fn blocks(&self) -> u64 {
        self.extents.iter().map(|e| e.blocks).sum()
    }

    pub fn block_addrs(&self) -> impl Iterator<Item = u64> + '_ {
        self.extents.iter().flat_map(|e| e.start..e.start + e.blocks)
    }

    /// Address of the `i`-th block of the run.
    pub fn block_at(&self, mut i: u64) -> Option<u64> {
        for e in &self.extents {
            if i < e.blocks {
                return Some(e.start + i);
            }
            i -= e.blocks;
        }
        None
    }

    fn push_extent(&mut self, start: u64, blocks: u64) {
        if let Some(last) = self.extents.last_mut() {
            if last.start + last.blocks == start {
                last.blocks += blocks;
                return;
            }
        }
        self.extents.push(Extent { start, blocks });
    }
}

/// A record range of a run, used for stripes that share a region.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segment {
    pub run: Run,
    pub skip: usize,
    pub len: usize,
}

impl Segment {
    pub fn whole(run: Run) -> Self {
        let len = run.len;
        Segment { run, skip: 0, len }
    }

    pub fn reader(&self) -> RunReader {
        RunReader::range(self.run.clone(), self.skip, self.len)
    }
}

/// Sequential reader over a run or a record range of it. Holds at most one
/// block (or one wide record) of unconsumed records in memory.
#[derive(Debug)]
pub struct RunReader {
    run: Run,
    next: usize,
    end: usize,
    buf: VecDeque<Handle>,
}

impl RunReader {
    pub fn new(run: Run) -> Self {
        let end = run.len;
        RunReader { run, next: 0, end, buf: VecDeque::new() }
    }

    /// Reader over records `skip..skip + len`.
    pub fn range(run: Run, skip: usize, len: usize) -> Self {
        let end = (skip + len).min(run.len);
        RunReader { run, next: skip.min(end), end, buf: VecDeque::new() }
    }

    pub fn remaining(&self) -> usize {
        self.end - self.next + self.buf.len()
    }

    /// Volume the next call to `next` has to load, if it loads anything.
    pub fn needs_load(&self, dam: &Dam) -> Option<usize> {
        if !self.buf.is_empty() || self.next >= self.end {
            return None;
        }
        Some(if self.run.w > dam.b() { self.run.w } else { dam.b() })
    }

    pub fn next(&mut self, dam: &mut Dam) -> Result<Option<Handle>> {
        if let Some(h) = self.buf.pop_front() {
            return Ok(Some(h));
        }
        if self.next >= self.end {
            return Ok(None);
        }
        let w = self.run.w;
        if w > dam.b() {
            let parts = dam.parts(w) as u64;
            let addr = self.run.block_at(self.next as u64 * parts).ok_or_else(|| Error::contract("run truncated"))?;
            self.next += 1;
            return dam.load_record(addr).map(Some);
        }
        let per = dam.per_block(w);
        let bi = self.next / per;
        let addr = self.run.block_at(bi as u64).ok_or_else(|| Error::contract("run truncated"))?;
        let hs = dam.load_block(addr)?;
        let base = bi * per;
        let mut drop = Vec::new();
        for (i, h) in hs.into_iter().enumerate() {
            let pos = base + i;
            if pos >= self.next && pos < self.end {
                self.buf.push_back(h);
            } else {
                drop.push(h);
            }
        }
        dam.release(&drop)?;
        self.next = (base + per).min(self.end);
        Ok(self.buf.pop_front())
    }

    /// Releases buffered records that were never consumed.
    pub fn close(mut self, dam: &mut Dam) -> Result<()> {
        let left: Vec<Handle> = self.buf.drain(..).collect();
        dam.release(&left)
    }
}

/// Appends resident records to a new run, flushing full blocks as they fill.
/// A writer created with [`RunWriter::mixed`] accepts any width: records up to
/// `B` wide share blocks, wider records start on a fresh block.
#[derive(Debug)]
pub struct RunWriter {
    buf: Vec<Handle>,
    vol: usize,
    run: Run,
}

impl RunWriter {
    pub fn new(w: usize) -> Self {
        RunWriter { buf: Vec::new(), vol: 0, run: Run::empty(w) }
    }

    /// Writer for a run of mixed widths (`Run::w == 0`).
    pub fn mixed() -> Self {
        Self::new(0)
    }

    pub fn len(&self) -> usize {
        self.run.len
    }

    pub fn is_empty(&self) -> bool {
        self.run.len == 0
    }

    pub fn buffered_volume(&self) -> usize {
        self.vol
    }

    pub fn push(&mut self, dam: &mut Dam, h: Handle) -> Result<()> {
        let w = dam.width(h)?;
        let mixed = self.run.w == 0;
        if !mixed && w != self.run.w {
            return Err(Error::contract(format!("width {w} pushed to a run of width {}", self.run.w)));
        }
        self.run.len += 1;
        if w > dam.b() {
            self.flush(dam)?;
            let parts = dam.parts(w) as u64;
            let addr = dam.alloc(parts);
            dam.store_record(addr, h)?;
            self.run.push_extent(addr, parts);
            return Ok(());
        }
        if self.vol + w > dam.b() {
            self.flush(dam)?;
        }
        self.buf.push(h);
        self.vol += w;
        let full = if mixed { self.vol == dam.b() } else { self.buf.len() == dam.per_block(w) };
        if full {
            self.flush(dam)?;
        }
        Ok(())
    }

    fn flush(&mut self, dam: &mut Dam) -> Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let addr = dam.alloc(1);
        let hs = std::mem::take(&mut self.buf);
        self.vol = 0;
        dam.store_block(addr, &hs)?;
        self.run.push_extent(addr, 1);
        Ok(())
    }

    pub fn finish(mut self, dam: &mut Dam) -> Result<Run> {
        self.flush(dam)?;
        Ok(self.run)
    }
}
