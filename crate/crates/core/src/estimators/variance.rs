//! Streaming accumulators behind the estimators: the running mean `Sᵢ`,
//! per-coordinate Welford moments, and non-overlapping batch means.

use super::Algorithm;
use crate::error::{Error, Result};

/// Smallest batch size the batch-means estimator accepts.
pub const MIN_TERMS_PER_BATCH: usize = 16;

/// Prefix averages `Sᵢ = (1/n) Σ_{m≤n} yᵢ(w_m)` of every output.
///
/// Stores plain sums, so `mean` is exactly `sum / count` in push order.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningMean {
    sums: Vec<f64>,
    count: usize,
}

impl RunningMean {
    pub fn new(outputs: usize) -> Self {
        Self {
            sums: vec![0.0; outputs],
            count: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, y: &[f64]) {
        debug_assert_eq!(y.len(), self.sums.len());
        for (s, v) in self.sums.iter_mut().zip(y) {
            *s += v;
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn sums(&self) -> &[f64] {
        &self.sums
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sums[i] / self.count as f64
    }

    pub fn means(&self) -> Vec<f64> {
        (0..self.sums.len()).map(|i| self.mean(i)).collect()
    }
}

/// Per-coordinate mean and centered second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    pub fn new(dim: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    #[inline]
    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variance of the pushed terms (`n − 1` denominator).
    pub fn sample_variance(&self) -> Vec<f64> {
        let d = self.n as f64 - 1.0;
        self.m2.iter().map(|s| s / d).collect()
    }

    /// Variance of the mean under independence: sample variance / n.
    pub fn variance_of_mean(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sample_variance().into_iter().map(|v| v / n).collect()
    }
}

/// First term of batch `b`: the least `t` with `⌊t·B/n⌋ ≥ b`.
fn batch_start(b: usize, n: usize, batches: usize) -> usize {
    ((b as u128 * n as u128).div_ceil(batches as u128)) as usize
}

/// Non-overlapping batch means over a stream of known length.
///
/// Term `t` of `n` falls in batch `⌊t·B/n⌋`, so batch sizes differ by at most
/// one. The variance of the overall mean is estimated by
/// `Σ_b n_b (m_b − m̄)² / ((B − 1) n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMeans {
    n_terms: usize,
    batches: usize,
    seen: usize,
    current: usize,
    next_start: usize,
    sums: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl BatchMeans {
    pub fn new(dim: usize, n_terms: usize, batches: usize) -> Result<Self> {
        let required = batches.max(2) * MIN_TERMS_PER_BATCH;
        if batches < 2 || n_terms < required {
            return Err(Error::TooFewTerms {
                batches,
                required,
                got: n_terms,
            });
        }
        Ok(Self {
            n_terms,
            batches,
            seen: 0,
            current: 0,
            next_start: batch_start(1, n_terms, batches),
            sums: vec![vec![0.0; dim]; batches],
            counts: vec![0; batches],
        })
    }

    #[inline]
    pub fn push(&mut self, x: &[f64]) {
        debug_assert!(self.seen < self.n_terms);
        while self.seen >= self.next_start {
            self.current += 1;
            self.next_start = batch_start(self.current + 1, self.n_terms, self.batches);
        }
        let b = self.current;
        for (s, v) in self.sums[b].iter_mut().zip(x) {
            *s += v;
        }
        self.counts[b] += 1;
        self.seen += 1;
    }

    pub fn variance_of_mean(&self) -> Vec<f64> {
        debug_assert_eq!(self.seen, self.n_terms);
        let dim = self.sums[0].len();
        let n = self.seen as f64;
        (0..dim)
            .map(|k| {
                let total: f64 = self.sums.iter().map(|s| s[k]).sum();
                let grand = total / n;
                let spread: f64 = self
                    .sums
                    .iter()
                    .zip(&self.counts)
                    .map(|(s, &c)| {
                        let d = s[k] / c as f64 - grand;
                        c as f64 * d * d
                    })
                    .sum();
                spread / ((self.batches - 1) as f64 * n)
            })
            .collect()
    }
}

/// Variance estimator matched to an algorithm's dependence structure.
#[derive(Debug, Clone)]
pub(crate) enum TermVariance {
    Iid(Welford),
    Batched(BatchMeans),
    /// Too few terms for any estimate; reports NaN.
    Unavailable,
}

impl TermVariance {
    /// Estimator used inside the gradient routines. When `n_terms` is too
    /// small for `batches`, the batch count shrinks to keep at least
    /// [`MIN_TERMS_PER_BATCH`] terms per batch.
    pub(crate) fn for_run(algorithm: Algorithm, dim: usize, n_terms: usize, batches: usize) -> Self {
        match algorithm {
            Algorithm::TwoPass if n_terms >= 2 => TermVariance::Iid(Welford::new(dim)),
            Algorithm::TwoPass => TermVariance::Unavailable,
            _ => {
                let b = batches.min(n_terms / MIN_TERMS_PER_BATCH);
                BatchMeans::new(dim, n_terms, b)
                    .map(TermVariance::Batched)
                    .unwrap_or(TermVariance::Unavailable)
            }
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, x: &[f64]) {
        match self {
            TermVariance::Iid(w) => w.push(x),
            TermVariance::Batched(b) => b.push(x),
            TermVariance::Unavailable => {}
        }
    }

    pub(crate) fn finish(&self, dim: usize) -> Vec<f64> {
        match self {
            TermVariance::Iid(w) => w.variance_of_mean(),
            TermVariance::Batched(b) => b.variance_of_mean(),
            TermVariance::Unavailable => vec![f64::NAN; dim],
        }
    }
}

/// Variance of an estimator given its per-path terms (one row per term).
///
/// The two-pass estimator's terms are independent, so the i.i.d. formula
/// applies. The lagged and running-mean estimators have serially dependent
/// terms and use `batches` non-overlapping batch means, which requires at
/// least `16 · batches` terms.
pub fn estimate_variance<'a, I>(terms: I, algorithm: Algorithm, batches: usize) -> Result<Vec<f64>>
where
    I: IntoIterator<Item = &'a [f64]>,
    I::IntoIter: ExactSizeIterator,
{
    let terms = terms.into_iter();
    let n = terms.len();
    let mut terms = terms.peekable();
    let dim = terms.peek().map_or(0, |t| t.len());
    match algorithm {
        Algorithm::TwoPass => {
            if n < 2 {
                return Err(Error::TooFewTerms {
                    batches: 1,
                    required: 2,
                    got: n,
                });
            }
            let mut w = Welford::new(dim);
            terms.for_each(|t| w.push(t));
            Ok(w.variance_of_mean())
        }
        _ => {
            let mut bm = BatchMeans::new(dim, n, batches)?;
            terms.for_each(|t| bm.push(t));
            Ok(bm.variance_of_mean())
        }
    }
}
