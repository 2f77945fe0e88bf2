//! Visibility maps over path-length difference and 2-fold rate.

use std::fmt;
use std::fmt::Write as _;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::pipeline::run;
use crate::report::fourfold_rate_model;

/// Witness isoline: `W < 0` exactly when `V̄ > 1/3`.
pub const WITNESS_BOUND: f64 = 1.0 / 3.0;
/// CHSH isoline: `S > 2` exactly when `V > 1/√2`.
pub const CHSH_BOUND: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// No entanglement shown by either test.
    Classical,
    /// Witness negative, CHSH not violated.
    Witness,
    /// CHSH violated.
    Chsh,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::Classical => "classical",
            Region::Witness => "witness",
            Region::Chsh => "chsh",
        })
    }
}

/// Region of a visibility relative to the two isolines.
pub fn classify(v: f64) -> Region {
    if v > CHSH_BOUND {
        Region::Chsh
    } else if v > WITNESS_BOUND {
        Region::Witness
    } else {
        Region::Classical
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub delta_l_mm: Vec<f64>,
    pub two_fold_hz: Vec<f64>,
}

impl SweepGrid {
    /// `(Δl, rate)` pairs, rate-major.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.two_fold_hz.iter().flat_map(|&r| self.delta_l_mm.iter().map(move |&d| (d, r))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub delta_l_mm: f64,
    pub two_fold_hz: f64,
    pub duration_s: f64,
    pub events: usize,
    /// Pooled mean visibility `V̄`.
    pub visibility: f64,
    pub sigma: f64,
    pub region: Region,
}

/// Local-mode configuration for one grid point. The duration is chosen so
/// that about `target_events` 4-folds are expected.
pub fn point_config(base: &ExperimentConfig, delta_l_mm: f64, two_fold_hz: f64, target_events: f64) -> Result<ExperimentConfig> {
    if !(target_events > 0.0) {
        return Err(Error::range("target_events", format!("{target_events} must be positive")));
    }
    let mut c = base.clone();
    c.mode = Mode::Local;
    c.hom.delta_l_mm = delta_l_mm;
    c.two_fold_rate_hz = Some(two_fold_hz);
    let rate = fourfold_rate_model(two_fold_hz, two_fold_hz, c.rep_rate_hz);
    let block = c.channel.block_seconds;
    // whole schedule cycles so every setting is measured
    let cycle = c.schedule.schedule().settings.len() as f64;
    let blocks = if rate > 0.0 { (target_events / rate / block / cycle).ceil().max(1.0) } else { 1.0 };
    c.duration_s = blocks * cycle * block;
    c.validate()?;
    Ok(c)
}

fn measure(c: &ExperimentConfig) -> Result<(f64, f64, usize)> {
    let (report, _, _) = run(c)?;
    let w = report.pooled.ok_or(Error::TooFewEvents { got: report.total_events, need: 1 })?;
    // W = (1 − 3V̄)/4
    Ok((w.v_mean, 4.0 * w.sigma / 3.0, report.total_events))
}

/// One pipeline visibility per grid point.
pub fn sweep(base: &ExperimentConfig, grid: &SweepGrid, target_events: f64) -> Result<Vec<SweepPoint>> {
    let pts = grid.points();
    if pts.is_empty() {
        return Err(Error::range("grid", "sweep grid is empty"));
    }
    pts.into_iter()
        .map(|(dl, rate)| {
            let c = point_config(base, dl, rate, target_events)?;
            let (v, s, n) = measure(&c)?;
            Ok(SweepPoint {
                delta_l_mm: dl,
                two_fold_hz: rate,
                duration_s: c.duration_s,
                events: n,
                visibility: v,
                sigma: s,
                region: classify(v),
            })
        })
        .collect()
}

/// Intrinsic visibility giving `V̄ = target` at zero delay and `two_fold_hz`.
///
/// `V̄` is affine in the overlap, so two runs at overlap 0 and 1 fix it.
pub fn calibrate_v0(base: &ExperimentConfig, two_fold_hz: f64, target: f64, target_events: f64) -> Result<f64> {
    let at = |m: f64| {
        let mut c = point_config(base, 0.0, two_fold_hz, target_events)?;
        c.sources[0].intrinsic_visibility = m;
        c.sources[1].intrinsic_visibility = m;
        measure(&c).map(|r| r.0)
    };
    let lo = at(0.0)?;
    let hi = at(1.0)?;
    if hi <= lo {
        return Err(Error::range("calibration", format!("no interference contrast ({lo} → {hi})")));
    }
    let m = (target - lo) / (hi - lo);
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::range("calibration", format!("target {target} outside [{lo}, {hi}]")));
    }
    Ok(m)
}

/// True when no step rises by more than `k` combined standard errors.
pub fn monotone_non_increasing(values: &[(f64, f64)], k: f64) -> bool {
    values.windows(2).all(|w| w[1].0 <= w[0].0 + k * w[0].1.hypot(w[1].1))
}

/// Points at fixed Δl ordered by rate.
pub fn along_rate(points: &[SweepPoint], delta_l_mm: f64) -> Vec<(f64, f64)> {
    let mut v: Vec<_> = points.iter().filter(|p| p.delta_l_mm == delta_l_mm).collect();
    v.sort_by(|a, b| a.two_fold_hz.total_cmp(&b.two_fold_hz));
    v.iter().map(|p| (p.visibility, p.sigma)).collect()
}

/// Points at fixed rate ordered by |Δl|.
pub fn along_delay(points: &[SweepPoint], two_fold_hz: f64) -> Vec<(f64, f64)> {
    let mut v: Vec<_> = points.iter().filter(|p| p.two_fold_hz == two_fold_hz).collect();
    v.sort_by(|a, b| a.delta_l_mm.abs().total_cmp(&b.delta_l_mm.abs()));
    v.iter().map(|p| (p.visibility, p.sigma)).collect()
}

/// Tab-delimited grid, one row per point.
pub fn to_text(points: &[SweepPoint]) -> String {
    let mut s = String::from("delta_l_mm\ttwo_fold_hz\tduration_s\tevents\tV_mean\tsV_mean\tregion\n");
    for p in points {
        let _ = writeln!(
            s,
            "{:.6}\t{:.1}\t{:.1}\t{}\t{:.6}\t{:.6}\t{}",
            p.delta_l_mm, p.two_fold_hz, p.duration_s, p.events, p.visibility, p.sigma, p.region
        );
    }
    s
}
