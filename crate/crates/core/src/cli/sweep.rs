//! Synthetic experiment grid: area size × route length × K.
//!
//! Each trial draws a fresh jittered grid covering the area, samples a route,
//! synthesizes a log, reconstructs the trajectory and attacks it once with the
//! largest K; each smaller K is scored on the top-K prefix of that ranking.
//! Trials are independent and seeded from their cell coordinates, so the
//! aggregate is the same whatever order (or thread) they run in.

use std::io::Write;

use log::debug;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matcher::{escalate_and_match, top_k, MatchConfig, MatchError};
use crate::metrics::evaluate_candidates;
use crate::simulate::{
    make_synthetic_grid, sample_route, synthesize_can, DriveProfile, GridSpec, SimError,
};
use crate::trajgraph::{build_trajectory, TrajectoryConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub side_km: Vec<f64>,
    pub q: Vec<usize>,
    pub k: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub spacing_m: f64,
    pub jitter: f64,
    /// Merge threshold as a fraction of the grid's shortest edge. A lattice's
    /// shortest edge is close to its typical edge, unlike real road networks,
    /// so driving error alone would otherwise trigger merges.
    pub merge_threshold_factor: f64,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub profile: DriveProfile,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let grid = GridSpec::default();
        Self {
            side_km: vec![1.0, 2.0, 3.0, 4.0],
            q: vec![5, 7, 10],
            k: vec![1, 5, 10],
            trials: 20,
            seed: 0,
            spacing_m: grid.spacing_m,
            jitter: grid.jitter,
            merge_threshold_factor: 0.5,
            origin_lat: grid.origin_lat,
            origin_lon: grid.origin_lon,
            profile: DriveProfile {
                speed_noise_std: 0.2,
                segment_length_error: 0.01,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        let bad = |m: &str| Err(SweepError::Invalid(m.to_string()));
        if self.side_km.is_empty() || self.q.is_empty() || self.k.is_empty() {
            return bad("side_km, q and k must be nonempty");
        }
        if self.trials == 0 {
            return bad("trials must be positive");
        }
        if !(self.spacing_m > 0.0) {
            return bad("spacing_m must be positive");
        }
        if self
            .side_km
            .iter()
            .any(|&s| !(s * 1000.0 >= self.spacing_m))
        {
            return bad("every side_km must span at least one grid spacing");
        }
        if !(self.merge_threshold_factor > 0.0 && self.merge_threshold_factor <= 1.0) {
            return bad("merge_threshold_factor must be in (0, 1]");
        }
        if self.q.iter().any(|&q| q < 2) {
            return bad("q values must be at least 2");
        }
        if self.k.iter().any(|&k| k == 0) {
            return bad("k values must be positive");
        }
        self.profile.validate()?;
        Ok(())
    }

    /// Nodes per side of the grid covering `side_km`.
    pub fn grid_side(&self, side_km: f64) -> usize {
        (side_km * 1000.0 / self.spacing_m).round() as usize + 1
    }
}

/// Aggregate over all trials of one (side, q, k) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub side_km: f64,
    pub q: usize,
    pub k: usize,
    pub trials: usize,
    /// Trials whose log did not reconstruct into a trajectory.
    pub no_trajectory: usize,
    /// Trials where the matcher found no candidate.
    pub no_candidates: usize,
    pub mean_psi: f64,
    pub mean_precision: f64,
    /// Over trials with at least one candidate; NaN if there were none.
    pub mean_offset_m: f64,
    pub mean_fnr: f64,
}

/// Outcome of one trial at one K.
#[derive(Debug, Clone, Copy)]
enum TrialScore {
    NoTrajectory,
    NoCandidates,
    Scored {
        psi: f64,
        precision: f64,
        offset_m: f64,
        fnr: f64,
    },
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn trial_seed(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ p))
}

fn run_trial(
    cfg: &SweepConfig,
    side_idx: usize,
    q: usize,
    trial: usize,
) -> Result<Vec<TrialScore>, SweepError> {
    let side_km = cfg.side_km[side_idx];
    let grid = make_synthetic_grid(&GridSpec {
        n: cfg.grid_side(side_km),
        spacing_m: cfg.spacing_m,
        jitter: cfg.jitter,
        seed: trial_seed(cfg.seed, &[1, side_idx as u64, trial as u64]),
        origin_lat: cfg.origin_lat,
        origin_lon: cfg.origin_lon,
    })?;
    let route_seed = trial_seed(cfg.seed, &[2, side_idx as u64, q as u64, trial as u64]);
    let gt = sample_route(&grid, q, route_seed)?;
    let profile = DriveProfile {
        seed: trial_seed(cfg.seed, &[3, side_idx as u64, q as u64, trial as u64]),
        ..cfg.profile.clone()
    };
    let scenario = synthesize_can(&gt, &grid, &profile)?;
    let min_edge = grid.min_edge_length_m().expect("grid has edges") * cfg.merge_threshold_factor;
    let traj = match build_trajectory(&scenario.log, min_edge, &TrajectoryConfig::default()) {
        Ok(t) => t,
        Err(e) => {
            debug!("trial side_km={side_km} q={q} trial={trial} trajectory_error=\"{e}\"");
            return Ok(vec![TrialScore::NoTrajectory; cfg.k.len()]);
        }
    };
    let k_max = *cfg.k.iter().max().expect("validated nonempty");
    // per-trial work is already parallel; keep each search serial
    let match_cfg = MatchConfig {
        k: k_max,
        parallel: false,
        ..Default::default()
    };
    // one escalation for the largest K; smaller K score nested prefixes of
    // the same ranking, so Ψ cannot drop as K grows
    let ranked = top_k(
        escalate_and_match(&grid, &traj, &match_cfg)?.candidates,
        k_max,
    );
    Ok(cfg
        .k
        .iter()
        .map(
            |&k| match evaluate_candidates(&ranked[..k.min(ranked.len())], &gt, &grid) {
                Ok(r) => TrialScore::Scored {
                    psi: r.psi,
                    precision: r.precision,
                    offset_m: r.offset_m,
                    fnr: r.fnr,
                },
                Err(_) => TrialScore::NoCandidates,
            },
        )
        .collect())
}

fn aggregate(side_km: f64, q: usize, k: usize, scores: &[TrialScore]) -> SweepRow {
    let mut row = SweepRow {
        side_km,
        q,
        k,
        trials: scores.len(),
        no_trajectory: 0,
        no_candidates: 0,
        mean_psi: 0.0,
        mean_precision: 0.0,
        mean_offset_m: 0.0,
        mean_fnr: 0.0,
    };
    let mut scored = 0usize;
    for s in scores {
        match *s {
            TrialScore::NoTrajectory => {
                row.no_trajectory += 1;
                row.mean_fnr += 1.0;
            }
            TrialScore::NoCandidates => {
                row.no_candidates += 1;
                row.mean_fnr += 1.0;
            }
            TrialScore::Scored {
                psi,
                precision,
                offset_m,
                fnr,
            } => {
                scored += 1;
                row.mean_psi += psi;
                row.mean_precision += precision;
                row.mean_offset_m += offset_m;
                row.mean_fnr += fnr;
            }
        }
    }
    let n = scores.len() as f64;
    row.mean_psi /= n;
    row.mean_precision /= n;
    row.mean_fnr /= n;
    row.mean_offset_m = if scored > 0 {
        row.mean_offset_m / scored as f64
    } else {
        f64::NAN
    };
    row
}

/// Runs every trial and returns one row per (side, q, k), sorted by those keys.
pub fn run_sweep(cfg: &SweepConfig, parallel: bool) -> Result<Vec<SweepRow>, SweepError> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.side_km.len())
        .flat_map(|s| {
            cfg.q
                .iter()
                .flat_map(move |&q| (0..cfg.trials).map(move |t| (s, q, t)))
        })
        .collect();
    let run = |&(s, q, t): &(usize, usize, usize)| run_trial(cfg, s, q, t).map(|r| ((s, q, t), r));
    let mut results: Vec<((usize, usize, usize), Vec<TrialScore>)> = if parallel {
        jobs.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_, _>>()?
    };
    results.sort_by_key(|(key, _)| *key);

    let mut rows = Vec::new();
    for (s, &side_km) in cfg.side_km.iter().enumerate() {
        for &q in &cfg.q {
            let cell: Vec<&Vec<TrialScore>> = results
                .iter()
                .filter(|((rs, rq, _), _)| *rs == s && *rq == q)
                .map(|(_, r)| r)
                .collect();
            for (ki, &k) in cfg.k.iter().enumerate() {
                let scores: Vec<TrialScore> = cell.iter().map(|r| r[ki]).collect();
                rows.push(aggregate(side_km, q, k, &scores));
            }
        }
    }
    rows.sort_by(|a, b| {
        a.side_km
            .total_cmp(&b.side_km)
            .then(a.q.cmp(&b.q))
            .then(a.k.cmp(&b.k))
    });
    Ok(rows)
}

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], sink: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            side_km: vec![0.6, 0.9],
            q: vec![3, 4],
            k: vec![1, 5],
            trials: 5,
            ..Default::default()
        }
    }

    #[test]
    fn one_row_per_cell() {
        let rows = run_sweep(&small(), true).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert_eq!(r.trials, 5);
            assert!((0.0..=1.0).contains(&r.mean_psi));
        }
    }

    #[test]
    fn psi_nondecreasing_in_k() {
        let rows = run_sweep(&small(), false).unwrap();
        for cell in rows.chunks(2) {
            assert_eq!(cell[0].k, 1);
            assert!(cell[1].mean_psi >= cell[0].mean_psi - 1e-12, "{cell:?}");
        }
    }

    #[test]
    fn serial_and_parallel_agree() {
        let render = |parallel| {
            let mut buf = Vec::new();
            write_sweep_csv(&run_sweep(&small(), parallel).unwrap(), &mut buf).unwrap();
            buf
        };
        let a = render(true);
        assert_eq!(a, render(false));
        assert_eq!(a, render(true));
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("side_km,q,k,trials,"));
    }

    #[test]
    fn rejects_bad_grid() {
        let cfg = SweepConfig {
            side_km: vec![0.1],
            ..small()
        };
        assert!(matches!(run_sweep(&cfg, true), Err(SweepError::Invalid(_))));
    }
}
