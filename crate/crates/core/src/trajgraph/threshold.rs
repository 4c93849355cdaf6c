//! Gap threshold discovery with two-cluster 1-D k-means.

use log::warn;
use serde::{Deserialize, Serialize};

use super::{GapSeries, TrajError, TIME_EPS_S};

const MAX_ITERATIONS: usize = 100;

/// Axis on which gaps are clustered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapScale {
    /// Raw seconds.
    Linear,
    /// Natural log of seconds. Sampling-interval gaps and inter-event gaps
    /// differ by orders of magnitude, and a wide inter-event mode otherwise
    /// pulls its shortest members into the low cluster.
    #[default]
    Log,
}

impl GapScale {
    fn apply(self, gap: f64) -> f64 {
        match self {
            GapScale::Linear => gap,
            GapScale::Log => gap.max(TIME_EPS_S).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub delta_s: f64,
    /// All gaps were equal; `delta_s` is that common value.
    pub degenerate: bool,
}

/// Lloyd's algorithm with k = 2, centroids seeded at the extremes. Returns
/// `true` for members of the upper cluster. Ties go to the lower cluster.
pub fn two_means(values: &[f64]) -> Vec<bool> {
    let assign = |lo: f64, hi: f64| -> Vec<bool> {
        values
            .iter()
            .map(|&v| (v - hi).abs() < (v - lo).abs())
            .collect()
    };
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut upper = assign(lo, hi);
    for _ in 0..MAX_ITERATIONS {
        let mean = |want: bool| {
            let (sum, n) = upper
                .iter()
                .zip(values)
                .filter(|(&u, _)| u == want)
                .fold((0.0, 0usize), |(s, n), (_, &v)| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        };
        let (Some(lo), Some(hi)) = (mean(false), mean(true)) else {
            break;
        };
        let next = assign(lo, hi);
        if next == upper {
            break;
        }
        upper = next;
    }
    upper
}

/// Largest gap of the cluster holding the short gaps, on the default scale.
pub fn compute_threshold(gaps: &GapSeries) -> Result<Threshold, TrajError> {
    compute_threshold_with(gaps, GapScale::default())
}

pub fn compute_threshold_with(gaps: &GapSeries, scale: GapScale) -> Result<Threshold, TrajError> {
    let g = &gaps.gaps;
    if g.len() < 2 {
        return Err(TrajError::InsufficientData {
            needed: 2,
            found: g.len(),
        });
    }
    let min = g.iter().copied().fold(f64::INFINITY, f64::min);
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max - min <= TIME_EPS_S {
        warn!("degenerate_gap_clusters gaps={} delta_s={max}", g.len());
        return Ok(Threshold {
            delta_s: max,
            degenerate: true,
        });
    }
    let scaled: Vec<f64> = g.iter().map(|&x| scale.apply(x)).collect();
    let upper = two_means(&scaled);
    let delta_s = g
        .iter()
        .zip(&upper)
        .filter(|(_, &u)| !u)
        .map(|(&x, _)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Threshold {
        delta_s,
        degenerate: false,
    })
}
