//! Histogram summaries of matched versus unmatched similarity scores.
//!
//! The operative statistic is the gap: minimum matched score minus maximum
//! unmatched score. A positive gap means a whole band of thresholds
//! separates the populations perfectly; degradation shows up as the gap
//! shrinking or going negative.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramReport {
    /// Shared bin edges over both samples, length bins + 1.
    pub edges: Vec<f64>,
    pub matched_counts: Vec<usize>,
    pub unmatched_counts: Vec<usize>,
    /// min(matched) - max(unmatched); positive means separable.
    pub gap: f64,
    /// Samples from either class inside the overlapping score interval;
    /// zero whenever the gap is positive.
    pub overlap: usize,
    pub matched_total: usize,
    pub unmatched_total: usize,
}

/// Bins both score samples over their common range.
pub fn histogram_report(
    matched: &[f64],
    unmatched: &[f64],
    bins: usize,
) -> Result<HistogramReport> {
    if bins == 0 {
        return Err(Error::InvalidParam("bins must be positive"));
    }
    if matched.is_empty() || unmatched.is_empty() {
        return Err(Error::InsufficientData {
            have: matched.len().min(unmatched.len()),
            need: 1,
        });
    }
    if matched.iter().chain(unmatched.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("scores must be finite"));
    }

    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in matched.iter().chain(unmatched.iter()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();

    let bin_of = |v: f64| -> usize {
        let raw = ((v - lo) / width) as usize;
        raw.min(bins - 1)
    };
    let mut matched_counts = vec![0usize; bins];
    for &v in matched {
        matched_counts[bin_of(v)] += 1;
    }
    let mut unmatched_counts = vec![0usize; bins];
    for &v in unmatched {
        unmatched_counts[bin_of(v)] += 1;
    }

    let matched_min = matched.iter().cloned().fold(f64::INFINITY, f64::min);
    let unmatched_max = unmatched.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gap = matched_min - unmatched_max;
    let overlap = if gap >= 0.0 {
        0
    } else {
        matched.iter().filter(|&&v| v <= unmatched_max).count()
            + unmatched.iter().filter(|&&v| v >= matched_min).count()
    };

    Ok(HistogramReport {
        edges,
        matched_counts,
        unmatched_counts,
        gap,
        overlap,
        matched_total: matched.len(),
        unmatched_total: unmatched.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn separated_populations_have_unit_gap_and_no_overlap() {
        let matched = vec![1.0; 5];
        let unmatched = vec![0.0; 7];
        let r = histogram_report(&matched, &unmatched, 10).unwrap();
        assert_relative_eq!(r.gap, 1.0, epsilon = 1e-12);
        assert_eq!(r.overlap, 0);
        assert_eq!(r.matched_counts.iter().sum::<usize>(), 5);
        assert_eq!(r.unmatched_counts.iter().sum::<usize>(), 7);
        assert_eq!(r.edges.len(), 11);
        assert_eq!(r.matched_counts[9], 5);
        assert_eq!(r.unmatched_counts[0], 7);
    }

    #[test]
    fn interleaved_populations_report_negative_gap() {
        let matched = vec![0.2, 0.5, 0.9];
        let unmatched = vec![0.1, 0.4, 0.6];
        let r = histogram_report(&matched, &unmatched, 4).unwrap();
        assert_relative_eq!(r.gap, 0.2 - 0.6, epsilon = 1e-12);
        // matched <= 0.6: {0.2, 0.5}; unmatched >= 0.2: {0.4, 0.6}.
        assert_eq!(r.overlap, 4);
    }

    #[test]
    fn identical_values_expand_the_range() {
        let r = histogram_report(&[0.5, 0.5], &[0.5], 3).unwrap();
        assert_eq!(r.edges.first().copied().unwrap(), 0.0);
        assert_eq!(r.edges.last().copied().unwrap(), 1.0);
        assert_eq!(r.matched_counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn top_edge_values_fall_into_last_bin() {
        let r = histogram_report(&[0.0, 1.0], &[0.5], 2).unwrap();
        assert_eq!(r.matched_counts, vec![1, 1]);
        assert_eq!(r.unmatched_counts, vec![0, 1]);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            histogram_report(&[], &[0.0], 4),
            Err(Error::InsufficientData { have: 0, need: 1 })
        ));
        assert!(matches!(
            histogram_report(&[0.1], &[], 4),
            Err(Error::InsufficientData { have: 0, need: 1 })
        ));
        assert!(histogram_report(&[0.1], &[0.2], 0).is_err());
        assert!(histogram_report(&[f64::NAN], &[0.2], 2).is_err());
    }
}
