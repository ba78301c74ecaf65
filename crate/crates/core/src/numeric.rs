//! Small numerical helpers shared by the inference routines.

use rayon::prelude::*;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// Fixed chunk width for partitioned reductions. The partition never depends on
/// the thread count, so the result is identical serially and in parallel.
pub const REDUCE_CHUNK: usize = 8192;

/// Sums `f(x)` over `items` with compensated per-chunk sums, reducing chunks in
/// order. Chunks are evaluated concurrently once there is more than one.
pub fn chunked_sum<T, F>(items: &[T], f: F) -> f64
where
    T: Sync,
    F: Fn(&T) -> f64 + Sync,
{
    if items.len() <= REDUCE_CHUNK {
        return compensated_sum(items.iter().map(&f));
    }
    let partials: Vec<f64> = items
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| compensated_sum(chunk.iter().map(&f)))
        .collect();
    compensated_sum(partials)
}

/// Like [`chunked_sum`] for a pair of sums evaluated together.
pub fn chunked_sum_pair<T, F>(items: &[T], f: F) -> (f64, f64)
where
    T: Sync,
    F: Fn(&T) -> (f64, f64) + Sync,
{
    let reduce = |chunk: &[T]| {
        let mut a = KahanSum::new();
        let mut b = KahanSum::new();
        for x in chunk {
            let (u, v) = f(x);
            a.add(u);
            b.add(v);
        }
        (a.value(), b.value())
    };
    if items.len() <= REDUCE_CHUNK {
        return reduce(items);
    }
    let partials: Vec<(f64, f64)> = items.par_chunks(REDUCE_CHUNK).map(reduce).collect();
    (
        compensated_sum(partials.iter().map(|p| p.0)),
        compensated_sum(partials.iter().map(|p| p.1)),
    )
}

/// `ln(n!)` for `n = 0..=max`.
pub fn ln_factorials(max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(max + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for n in 1..=max {
        acc += (n as f64).ln();
        out.push(acc);
    }
    out
}

/// Plain bisection on a function whose sign changes on `[lo, hi]`.
/// `f(lo)` and `f(hi)` must have opposite signs (or one is zero).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    if f_lo == 0.0 {
        return lo;
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
