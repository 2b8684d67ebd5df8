//! Corpus BLEU over integer token sequences.
//!
//! Clipped n-gram matches (n = 1..4) are pooled over the whole corpus before
//! the geometric mean, and a brevity penalty `exp(1 − r/c)` applies when the
//! total hypothesis length `c` is below the total reference length `r`.
//! A zero match count for n ≥ 2 is replaced by 0.1; a zero unigram match
//! count gives a score of 0. Orders for which the hypotheses contain no
//! n-grams at all (every hypothesis shorter than n) are left out of the
//! geometric mean, so an exact copy of short references still scores 100.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;
const SMOOTHED_NUMERATOR: f64 = 0.1;

/// Pooled statistics for one corpus.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

fn ngram_counts(tokens: &[u32], n: usize) -> HashMap<&[u32], u64> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    pub fn add_pair(&mut self, hyp: &[u32], reference: &[u32]) {
        self.hyp_len += hyp.len() as u64;
        self.ref_len += reference.len() as u64;
        for n in 1..=MAX_ORDER {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(reference, n);
            let clipped: u64 = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
            self.matches[n - 1] += clipped;
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
    }

    /// Score on the 0–100 scale.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches[0] == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        let mut orders = 0;
        for n in (0..MAX_ORDER).filter(|&n| self.totals[n] > 0) {
            let num = if self.matches[n] == 0 {
                SMOOTHED_NUMERATOR
            } else {
                self.matches[n] as f64
            };
            log_sum += (num / self.totals[n] as f64).ln();
            orders += 1;
        }
        let precision = (log_sum / orders as f64).exp();
        let (c, r) = (self.hyp_len as f64, self.ref_len as f64);
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        (100.0 * bp * precision).clamp(0.0, 100.0)
    }
}

pub fn corpus_bleu<H, R>(hypotheses: &[H], references: &[R]) -> Result<f64>
where
    H: AsRef<[u32]>,
    R: AsRef<[u32]>,
{
    if hypotheses.len() != references.len() {
        return Err(Error::InvalidArgument(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut stats = BleuStats::default();
    for (h, r) in hypotheses.iter().zip(references) {
        if r.as_ref().is_empty() {
            return Err(Error::InvalidArgument("empty reference".into()));
        }
        stats.add_pair(h.as_ref(), r.as_ref());
    }
    Ok(stats.score())
}
