//! Sorting two colors of keys when comparisons are priced by the colors of
//! their operands.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::model::Key;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriceTriple {
    /// Red against red.
    pub a: f64,
    /// Red against blue.
    pub b: f64,
    /// Blue against blue.
    pub c: f64,
}

impl PriceTriple {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self> {
        let p = PriceTriple { a, b, c };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let finite = [self.a, self.b, self.c].iter().all(|x| x.is_finite() && *x >= 0.0);
        if !finite || self.a > self.b || self.b > self.c {
            return Err(Error::param(format!("prices must satisfy 0 <= a <= b <= c, got ({}, {}, {})", self.a, self.b, self.c)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RamLedger {
    pub count_a: u64,
    pub count_b: u64,
    pub count_c: u64,
    pub total_cost: f64,
    /// Blues that searched the red tree.
    pub red_descents: u64,
}

impl RamLedger {
    pub fn recompute(&self, p: &PriceTriple) -> f64 {
        p.a * self.count_a as f64 + p.b * self.count_b as f64 + p.c * self.count_c as f64
    }

    pub fn comparisons(&self) -> u64 {
        self.count_a + self.count_b + self.count_c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Color {
    Red,
    Blue,
}

/// Comparison oracle that charges by operand colors.
struct Meter<'a> {
    prices: &'a PriceTriple,
    ledger: RamLedger,
}

impl Meter<'_> {
    fn cmp(&mut self, x: (Key, Color), y: (Key, Color)) -> Result<Ordering> {
        match (x.1, y.1) {
            (Color::Red, Color::Red) => self.ledger.count_a += 1,
            (Color::Blue, Color::Blue) => self.ledger.count_c += 1,
            _ => self.ledger.count_b += 1,
        }
        match x.0.cmp(&y.0) {
            Ordering::Equal => Err(Error::contract(format!("duplicate key {}", x.0))),
            o => Ok(o),
        }
    }

    fn finish(mut self) -> RamLedger {
        self.ledger.total_cost = self.ledger.recompute(self.prices);
        self.ledger
    }
}

fn merge_sort(v: Vec<(Key, Color)>, m: &mut Meter) -> Result<Vec<(Key, Color)>> {
    if v.len() <= 1 {
        return Ok(v);
    }
    let mut left = v;
    let right = left.split_off(left.len() / 2);
    let left = merge_sort(left, m)?;
    let right = merge_sort(right, m)?;
    let mut out = Vec::with_capacity(left.len() + right.len());
    let (mut i, mut j) = (0, 0);
    while i < left.len() && j < right.len() {
        if m.cmp(left[i], right[j])? == Ordering::Less {
            out.push(left[i]);
            i += 1;
        } else {
            out.push(right[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&left[i..]);
    out.extend_from_slice(&right[j..]);
    Ok(out)
}

/// Discovered stripe: predecessor count and its bordering reds.
#[derive(Clone, Copy, Debug)]
struct Border {
    pred: usize,
    lo: Option<Key>,
    hi: Option<Key>,
}

/// Sorts reds, routes each blue to its stripe (checking already discovered
/// stripes first), then sorts each stripe. Returns the sorted keys with
/// their colors.
pub fn priced_sort(reds: &[Key], blues: &[Key], prices: PriceTriple) -> Result<(Vec<(Key, Color)>, RamLedger)> {
    prices.check()?;
    let mut m = Meter { prices: &prices, ledger: RamLedger::default() };
    let reds: Vec<Key> = merge_sort(reds.iter().map(|&k| (k, Color::Red)).collect(), &mut m)?.into_iter().map(|p| p.0).collect();
    let mut borders: Vec<Border> = Vec::new();
    let mut buckets: Vec<Vec<(Key, Color)>> = vec![Vec::new(); reds.len() + 1];
    for &x in blues {
        let xb = (x, Color::Blue);
        // last border whose lower red is below x
        let (mut lo, mut hi) = (0, borders.len());
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let below = match borders[mid].lo {
                None => true,
                Some(r) => m.cmp((r, Color::Red), xb)? == Ordering::Less,
            };
            if below {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        let hit = match lo.checked_sub(1).map(|i| borders[i]) {
            Some(bd) => match bd.hi {
                None => Some(bd.pred),
                Some(r) => (m.cmp(xb, (r, Color::Red))? == Ordering::Less).then_some(bd.pred),
            },
            None => None,
        };
        let pred = match hit {
            Some(p) => p,
            None => {
                m.ledger.red_descents += 1;
                let (mut a, mut b) = (0, reds.len());
                while a < b {
                    let mid = a + (b - a) / 2;
                    if m.cmp((reds[mid], Color::Red), xb)? == Ordering::Less {
                        a = mid + 1;
                    } else {
                        b = mid;
                    }
                }
                let bd = Border { pred: a, lo: a.checked_sub(1).map(|i| reds[i]), hi: reds.get(a).copied() };
                let at = borders.partition_point(|e| e.pred < a);
                borders.insert(at, bd);
                a
            }
        };
        buckets[pred].push(xb);
    }
    let mut out = Vec::with_capacity(reds.len() + blues.len());
    for (p, bucket) in buckets.into_iter().enumerate() {
        if p > 0 {
            out.push((reds[p - 1], Color::Red));
        }
        out.extend(merge_sort(bucket, &mut m)?);
    }
    Ok((out, m.finish()))
}

/// Baseline: one mergesort over the union, colors alternating in the input
/// order until one side runs out.
pub fn naive_priced_sort(reds: &[Key], blues: &[Key], prices: PriceTriple) -> Result<(Vec<(Key, Color)>, RamLedger)> {
    let mut m = Meter { prices: &prices, ledger: RamLedger::default() };
    let mut all: Vec<(Key, Color)> = Vec::with_capacity(reds.len() + blues.len());
    for i in 0..reds.len().max(blues.len()) {
        all.extend(reds.get(i).map(|&k| (k, Color::Red)));
        all.extend(blues.get(i).map(|&k| (k, Color::Blue)));
    }
    let out = merge_sort(all, &mut m)?;
    Ok((out, m.finish()))
}
