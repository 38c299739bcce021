//! Closed-form cost evaluators.
//!
//! Logarithms are base 2. `log_x y` is `log2 y / log2 max(x, 2)`, and any
//! logarithm of an argument at most 1 is 0, so every evaluator is total over
//! positive inputs. No hidden constants: envelopes live with their callers.

use std::fmt::Write as _;

use crate::error::{Error, Result};

pub fn lg(x: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else {
        x.log2()
    }
}

pub fn log_base(base: f64, x: f64) -> f64 {
    lg(x) / base.max(2.0).log2()
}

/// A two-term minimum, keeping both terms for inspection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinTerms {
    pub first: f64,
    pub second: f64,
}

impl MinTerms {
    pub fn value(&self) -> f64 {
        self.first.min(self.second)
    }

    /// True when the second term is strictly smaller.
    pub fn second_wins(&self) -> bool {
        self.second < self.first
    }
}

/// Instance shape shared by the PLE and sorting evaluators.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Shape {
    pub s: f64,
    pub l: f64,
    pub w: f64,
    pub k: f64,
    pub b: f64,
    pub m: f64,
}

impl Shape {
    pub fn new(s: usize, l: usize, w: usize, k: usize, b: usize, m: usize) -> Self {
        Shape { s: s as f64, l: l as f64, w: w as f64, k: k as f64, b: b as f64, m: m as f64 }
    }

    fn check(&self) -> Result<()> {
        if self.m <= 1.0 {
            return Err(Error::param(format!("M must exceed 1, got {}", self.m)));
        }
        if self.b < 1.0 || self.w < 1.0 {
            return Err(Error::param("B and w must be at least 1"));
        }
        if self.s < 0.0 || self.l < 0.0 || self.k < 0.0 {
            return Err(Error::param("S, L and k must be nonnegative"));
        }
        Ok(())
    }
}

/// Priced-comparison sorting cost:
/// `a n lg n + b (k lg n + n lg k) + c Σ ℓ_i lg ℓ_i`.
pub fn ram_bound(n: usize, k: usize, sizes: &[usize], a: f64, b: f64, c: f64) -> f64 {
    let n = n as f64;
    let k = k as f64;
    let stripes: f64 = sizes.iter().map(|&l| l as f64 * lg(l as f64)).sum();
    a * n * lg(n) + b * (k * lg(n) + n * lg(k)) + c * stripes
}

/// Lower bound on large-element placement. The first term charges every
/// large record `log_M` progress per input; the second lets one input of a
/// large record resolve many comparisons.
pub fn ple_lower_terms(p: &Shape) -> Result<MinTerms> {
    p.check()?;
    let first = p.k * p.w / p.b * log_base(p.m, p.s) + p.l / p.b * log_base(p.m, p.k);
    let second = p.k / p.b * lg(p.s) + p.l / (p.w * p.b) * lg(p.k) + p.l / p.b;
    Ok(MinTerms { first, second })
}

pub fn ple_lower(p: &Shape) -> Result<f64> {
    ple_lower_terms(p).map(|t| t.value())
}

/// Upper bound on large-element placement: first term is the batched
/// `Θ(M)`-fanout routing, second the one-at-a-time B-tree search.
pub fn ple_upper_terms(p: &Shape) -> Result<MinTerms> {
    p.check()?;
    let first = p.l / p.b * log_base(p.m, p.s) + p.s / p.b;
    let second = p.l / p.w * log_base(p.b, p.k) + p.k * log_base(p.b, p.s) + p.l / p.b + p.s / p.b;
    Ok(MinTerms { first, second })
}

pub fn ple_upper(p: &Shape) -> Result<f64> {
    ple_upper_terms(p).map(|t| t.value())
}

/// Same-size sorting of volume `v` made of width-`w` records.
pub fn av_bound(v: f64, w: f64, b: f64, m: f64) -> Result<f64> {
    if v < 0.0 || w < 1.0 || b < 1.0 || m <= 1.0 {
        return Err(Error::param("av_bound needs v >= 0, w >= 1, B >= 1, M > 1"));
    }
    if w < b {
        Ok(v / b * log_base(m / b, v / b))
    } else {
        if m / w < 2.0 {
            return Err(Error::param(format!("M/w = {} is below 2", m / w)));
        }
        Ok(v / b * log_base(m / w, v / w))
    }
}

/// Two-sized sorting cost with a supplied placement term.
pub fn sort_bound(p: &Shape, stripe_volumes: &[f64], ple_value: f64) -> Result<f64> {
    p.check()?;
    if stripe_volumes.len() as f64 != p.k {
        return Err(Error::param(format!("{} stripe volumes for k = {}", stripe_volumes.len(), p.k)));
    }
    let total: f64 = stripe_volumes.iter().sum();
    if (total - p.l).abs() > 1e-9 * p.l.max(1.0) {
        return Err(Error::param(format!("stripe volumes sum to {total}, expected L = {}", p.l)));
    }
    let smalls = p.s / p.b * log_base(p.m / p.b, p.s / p.b);
    let stripes: f64 = stripe_volumes.iter().map(|&li| li / p.b * log_base(p.m / p.w, li / p.w)).sum();
    Ok(smalls + ple_value + stripes + p.l / p.b)
}

/// Locates sign changes of `first - second` of the lower-bound minimum along
/// an ascending sweep of `w`. Each crossover is reported as the pair of
/// adjacent sweep values that bracket it.
pub fn lower_crossovers(base: &Shape, ws: &[f64]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    let mut prev: Option<(f64, bool)> = None;
    for &w in ws {
        let t = ple_lower_terms(&Shape { w, ..*base })?;
        let side = t.second_wins();
        if let Some((pw, ps)) = prev {
            if ps != side {
                out.push((pw, w));
            }
        }
        prev = Some((w, side));
    }
    Ok(out)
}

/// Every evaluated term for one parameter set.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub shape: Shape,
    pub lower: MinTerms,
    pub upper: MinTerms,
    pub sort_lower: f64,
    pub sort_upper: f64,
    pub av_small: f64,
    pub av_large: f64,
    pub ram: Option<f64>,
}

impl BoundReport {
    /// `stripe_sizes` are record counts; `prices` adds the RAM evaluation
    /// with `n = max(S, L/w)` keys per color.
    pub fn evaluate(p: &Shape, stripe_sizes: &[usize], prices: Option<(f64, f64, f64)>) -> Result<Self> {
        let lower = ple_lower_terms(p)?;
        let upper = ple_upper_terms(p)?;
        let vols: Vec<f64> = stripe_sizes.iter().map(|&n| n as f64 * p.w).collect();
        let ram = prices.map(|(a, b, c)| {
            let n = p.s.max(p.l / p.w).round() as usize;
            ram_bound(n, stripe_sizes.len(), stripe_sizes, a, b, c)
        });
        Ok(BoundReport {
            shape: *p,
            lower,
            upper,
            sort_lower: sort_bound(p, &vols, lower.value())?,
            sort_upper: sort_bound(p, &vols, upper.value())?,
            av_small: av_bound(p.s, 1.0, p.b, p.m)?,
            av_large: if p.m / p.w >= 2.0 { av_bound(p.l, p.w, p.b, p.m)? } else { f64::NAN },
            ram,
        })
    }

    pub fn pairs(&self) -> Vec<(&'static str, f64)> {
        let p = &self.shape;
        let mut v = vec![
            ("S", p.s),
            ("L", p.l),
            ("w", p.w),
            ("k", p.k),
            ("B", p.b),
            ("M", p.m),
            ("ple_lower_first", self.lower.first),
            ("ple_lower_second", self.lower.second),
            ("ple_lower", self.lower.value()),
            ("ple_upper_bfs", self.upper.first),
            ("ple_upper_dfs", self.upper.second),
            ("ple_upper", self.upper.value()),
            ("sort_lower", self.sort_lower),
            ("sort_upper", self.sort_upper),
            ("av_small", self.av_small),
            ("av_large", self.av_large),
        ];
        if let Some(r) = self.ram {
            v.push(("ram_bound", r));
        }
        v
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.pairs() {
            let _ = writeln!(out, "{k}={}", fmt_num(v));
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let pairs = self.pairs();
        let header: Vec<&str> = pairs.iter().map(|p| p.0).collect();
        let row: Vec<String> = pairs.iter().map(|p| fmt_num(p.1)).collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

/// Fixed six-decimal rendering, trimmed, so output is stable across runs.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> Shape {
        Shape::new(1 << 10, 1 << 9, 1 << 5, 1 << 2, 1 << 3, 1 << 6)
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9 * b.abs().max(1.0)
    }

    #[test]
    fn ram_bound_example() {
        assert!(close(ram_bound(4, 2, &[2, 2], 1.0, 2.0, 3.0), 36.0));
        // k = 1: n lg k vanishes
        let v = ram_bound(8, 1, &[8], 0.0, 1.0, 0.0);
        assert!(close(v, 3.0));
    }

    #[test]
    fn ple_lower_worked_example() {
        let t = ple_lower_terms(&example()).unwrap();
        assert!(close(t.first, 48.0), "{t:?}");
        assert!(close(t.second, 73.0), "{t:?}");
        assert!(close(ple_lower(&example()).unwrap(), 48.0));
    }

    #[test]
    fn ple_upper_worked_example() {
        let t = ple_upper_terms(&example()).unwrap();
        assert!(close(t.first, 704.0 / 3.0), "{t:?}");
        assert!(close(t.second, 216.0), "{t:?}");
        assert!(t.second_wins());
    }

    #[test]
    fn k_one_degenerates() {
        let p = Shape { k: 1.0, ..example() };
        let t = ple_lower_terms(&p).unwrap();
        assert!(close(t.first, p.w / p.b * (10.0 / 6.0)));
        let u = ple_upper_terms(&p).unwrap();
        assert!(close(u.second, log_base(8.0, 1024.0) + 64.0 + 128.0));
    }

    #[test]
    fn rejects_tiny_memory() {
        let p = Shape { m: 1.0, ..example() };
        assert!(ple_lower(&p).is_err());
        assert!(ple_upper(&p).is_err());
    }

    #[test]
    fn av_bound_cases() {
        assert!(close(av_bound(4096.0, 16.0, 8.0, 256.0).unwrap(), 1024.0));
        assert!(close(av_bound(16.0, 16.0, 8.0, 256.0).unwrap(), 0.0));
        let classic = 1024.0 / 8.0 * log_base(64.0 / 8.0, 1024.0 / 8.0);
        assert!(close(av_bound(1024.0, 1.0, 8.0, 64.0).unwrap(), classic));
        assert!(av_bound(64.0, 40.0, 8.0, 64.0).is_err());
    }

    #[test]
    fn sort_bound_terms() {
        let p = Shape::new(16, 64, 8, 8, 8, 128);
        // singleton stripes: third term vanishes, S <= M keeps first term small
        let v = sort_bound(&p, &[8.0; 8], 0.0).unwrap();
        assert!(close(v, 2.0 * log_base(16.0, 2.0) + 8.0));
        assert!(sort_bound(&p, &[8.0; 7], 0.0).is_err());
        assert!(sort_bound(&p, &[9.0; 8], 0.0).is_err());
    }

    #[test]
    fn full_sort_example_hand_value() {
        // S=4096, 256 larges of width 16, k=8 equal stripes, B=8, M=128
        let p = Shape::new(4096, 4096, 16, 8, 8, 128);
        let v = sort_bound(&p, &[512.0; 8], 0.0).unwrap();
        // 512 * log_16 512 + 8 * 64 * log_8 32 + 512
        let hand = 512.0 * 9.0 / 4.0 + 8.0 * 64.0 * 5.0 / 3.0 + 512.0;
        assert!(close(v, hand), "{v} vs {hand}");
    }

    #[test]
    fn report_is_consistent() {
        let r = BoundReport::evaluate(&example(), &[4, 4, 4, 4], Some((1.0, 2.0, 4.0))).unwrap();
        assert!(close(r.lower.value(), 48.0));
        assert!(close(r.upper.value(), 216.0));
        assert!(r.sort_upper >= r.sort_lower);
        assert!(r.to_key_values().contains("ple_upper=216\n"));
        assert_eq!(r.to_csv().lines().count(), 2);
    }

    #[test]
    fn fmt_num_is_stable() {
        assert_eq!(fmt_num(216.0), "216");
        assert_eq!(fmt_num(704.0 / 3.0), "234.666667");
        assert_eq!(fmt_num(0.0), "0");
    }
}
