//! Cross-correlation synchronization of two independently clocked recorders.
//!
//! Time differences `remote − local` between correlated events follow a line
//! `Δ(t) = offset + drift·(t − t_ref)` in local time. The search histograms
//! pair differences over a grid of candidate drifts, coarse to fine, so that
//! within-segment drift never smears the coincidence peak by more than one
//! bin at any level.

use statrs::distribution::{DiscreteCDF, Poisson};

use crate::error::{Error, Result};
use crate::link::{DetectionEvent, TICK_NS};

use super::TagStream;

/// Largest drift-grid half-width per level.
const MAX_DRIFT_STEPS: i64 = 512;
/// Bin refinement factor between levels.
const REFINE: f64 = 4.0;
/// Bins around the peak excluded from the background estimate.
const PEAK_GUARD: i64 = 2;
/// Hard cap on candidate pairs per search.
const MAX_PAIRS: usize = 40_000_000;

/// `Δ(t) = offset + drift·(t − t_ref)`, all in ns of local time.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Line {
    pub t_ref: f64,
    pub offset: f64,
    pub drift: f64,
}

impl Line {
    pub fn at(&self, t: f64) -> f64 {
        self.offset + self.drift * (t - self.t_ref)
    }

    /// Same line expressed about a new reference time.
    pub fn rebased(&self, t_ref: f64) -> Line {
        Line { t_ref, offset: self.at(t_ref), drift: self.drift }
    }

    /// Local time of a remote time stamp.
    pub fn to_local(&self, remote: f64) -> f64 {
        (remote - self.offset + self.drift * self.t_ref) / (1.0 + self.drift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncParams {
    /// Half-width of the acquisition search around the nominal delay, ns.
    pub span_ns: f64,
    pub bin_ns: f64,
    /// Largest relative clock drift searched, ppm.
    pub max_drift_ppm: f64,
    pub min_significance: f64,
    /// Largest accepted look-elsewhere false-alarm probability.
    pub max_false_alarm: f64,
    /// Blocks pooled per solution (centred on the solved block).
    pub window_blocks: usize,
    /// Half-width of the tracking search around the previous solution, ns.
    pub track_span_ns: f64,
    /// Expected `remote − local` delay from geometry, ns.
    pub center_ns: f64,
}

impl Default for SyncParams {
    fn default() -> Self {
        SyncParams {
            span_ns: 1_000_000.0,
            bin_ns: 1.0,
            max_drift_ppm: 1e-4,
            min_significance: 5.0,
            max_false_alarm: 1e-6,
            window_blocks: 16,
            track_span_ns: 1_000.0,
            center_ns: 0.0,
        }
    }
}

impl SyncParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.span_ns > 0.0 && self.bin_ns > 0.0 && self.bin_ns <= self.span_ns) {
            return Err(Error::range("sync", "need 0 < bin ≤ span"));
        }
        if !(self.max_drift_ppm >= 0.0) {
            return Err(Error::range("sync_max_drift_ppm", "must be ≥ 0"));
        }
        if self.window_blocks == 0 {
            return Err(Error::range("sync_window_blocks", "must be ≥ 1"));
        }
        if !(self.track_span_ns > 0.0) {
            return Err(Error::range("sync_track_span_ns", "must be > 0"));
        }
        Ok(())
    }
}

/// Outcome of one coincidence-peak search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub line: Line,
    pub peak: u32,
    /// `(peak − mean)/std` of the off-peak cells.
    pub significance: f64,
    /// Probability that pure background yields a peak this high anywhere in
    /// the searched grid.
    pub false_alarm: f64,
    /// Pairs within one fine bin of the final line.
    pub matched: usize,
}

impl SearchResult {
    pub fn passes(&self, p: &SyncParams) -> bool {
        self.significance >= p.min_significance && self.false_alarm <= p.max_false_alarm
    }
}

/// Plain cross-correlation peak (no drift search).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XcorrPeak {
    pub offset_ns: f64,
    pub peak: u32,
    pub significance: f64,
    pub false_alarm: f64,
    pub synchronized: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncSolution {
    pub block: usize,
    /// Line referenced to the block centre.
    pub line: Line,
    pub offset_ns: f64,
    pub drift_ppm: f64,
    pub significance: f64,
    pub false_alarm: f64,
    pub peak: u32,
    pub synchronized: bool,
}

impl SyncSolution {
    fn unsynced(block: usize, center: f64) -> Self {
        SyncSolution {
            block,
            line: Line { t_ref: center, ..Line::default() },
            offset_ns: f64::NAN,
            drift_ppm: f64::NAN,
            significance: 0.0,
            false_alarm: 1.0,
            peak: 0,
            synchronized: false,
        }
    }
}

/// Probability that the maximum of `cells` Poisson(`mean`) cells is ≥ `peak`.
fn false_alarm(mean: f64, peak: u32, cells: f64) -> f64 {
    if peak == 0 {
        return 1.0;
    }
    let tail = if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).map(|d| d.sf(peak as u64 - 1)).unwrap_or(1.0)
    };
    // 1 − (1 − tail)^cells without cancellation
    -f64::exp_m1(cells * f64::ln_1p(-tail.min(1.0 - 1e-16)))
}

struct Pairs {
    tau: Vec<f64>,
    x: Vec<f64>,
}

fn collect_pairs(local: &[f64], remote: &[f64], prior: &Line, span: f64, drift_range: f64) -> Result<Pairs> {
    let mut tau = Vec::new();
    let mut x = Vec::new();
    for &t in local {
        let dt = t - prior.t_ref;
        let c = t + prior.at(t);
        let allow = span + drift_range * dt.abs();
        let lo = remote.partition_point(|&r| r < c - allow);
        for &r in &remote[lo..] {
            if r > c + allow {
                break;
            }
            tau.push(dt);
            x.push(r - c);
        }
        if x.len() > MAX_PAIRS {
            return Err(Error::range("sync", "too many candidate pairs; narrow the span"));
        }
    }
    Ok(Pairs { tau, x })
}

struct LevelPeak {
    drift: f64,
    x: f64,
    peak: u32,
    significance: f64,
    false_alarm: f64,
}

/// One grid level: histogram `x − d·τ` into bins of width `bin` over
/// `[−span, span)` for every candidate `d = k·step`, `|k| ≤ steps`.
fn scan_level(p: &Pairs, span: f64, bin: f64, step: f64, steps: i64) -> LevelPeak {
    let nbins = ((2.0 * span / bin).ceil() as usize).max(1);
    let mut hist = vec![0u32; nbins];
    let mut touched: Vec<usize> = Vec::new();
    let (mut sum, mut sumsq, mut cells) = (0f64, 0f64, 0f64);
    let mut best = (0i64, 0usize, 0u32);
    let mut best_nbhd: Vec<u32> = Vec::new();
    for k in -steps..=steps {
        let d = k as f64 * step;
        for (&t, &x) in p.tau.iter().zip(&p.x) {
            let y = x - d * t + span;
            if y >= 0.0 {
                let i = (y / bin) as usize;
                if i < nbins {
                    if hist[i] == 0 {
                        touched.push(i);
                    }
                    hist[i] += 1;
                }
            }
        }
        for &i in &touched {
            let v = hist[i] as f64;
            sum += v;
            sumsq += v * v;
            if hist[i] > best.2 || (hist[i] == best.2 && k.abs() < best.0.abs()) {
                best = (k, i, hist[i]);
                let lo = i.saturating_sub(PEAK_GUARD as usize);
                let hi = (i + PEAK_GUARD as usize + 1).min(nbins);
                best_nbhd = hist[lo..hi].to_vec();
            }
        }
        cells += nbins as f64;
        for &i in &touched {
            hist[i] = 0;
        }
        touched.clear();
    }
    // background statistics without the peak neighbourhood
    let guard_sum: f64 = best_nbhd.iter().map(|&v| v as f64).sum();
    let guard_sq: f64 = best_nbhd.iter().map(|&v| (v as f64).powi(2)).sum();
    let n = (cells - best_nbhd.len() as f64).max(1.0);
    let mean = ((sum - guard_sum) / n).max(0.0);
    let var = ((sumsq - guard_sq) / n - mean * mean).max(0.0);
    let peak = best.2;
    let significance = if var > 0.0 {
        (peak as f64 - mean) / var.sqrt()
    } else if peak as f64 > mean {
        f64::INFINITY
    } else {
        0.0
    };
    LevelPeak {
        drift: best.0 as f64 * step,
        x: (best.1 as f64 + 0.5) * bin - span,
        peak,
        significance,
        false_alarm: false_alarm(mean, peak, cells),
    }
}

/// Finds the coincidence line between `local` and `remote` (both sorted, ns)
/// near `prior`, searching `±span` in offset and `±drift_range` in drift.
pub fn search_line(
    local: &[f64],
    remote: &[f64],
    prior: Line,
    span: f64,
    drift_range: f64,
    bin: f64,
) -> Result<SearchResult> {
    if !(span > 0.0 && bin > 0.0) {
        return Err(Error::range("search", "span and bin must be > 0"));
    }
    let tmax = local.iter().map(|t| (t - prior.t_ref).abs()).fold(0.0, f64::max);
    let mut pairs = collect_pairs(local, remote, &prior, span, drift_range)?;

    let steps_for = |b: f64, range: f64| -> i64 {
        if tmax <= 0.0 || range <= 0.0 {
            0
        } else {
            (range * tmax / b).ceil() as i64
        }
    };
    let mut b = bin;
    while steps_for(b, drift_range) > MAX_DRIFT_STEPS {
        b *= REFINE;
    }
    let b = b.min(span);
    let steps = steps_for(b, drift_range);
    let step = if steps > 0 { b / tmax } else { 0.0 };
    let first = scan_level(&pairs, span, b, step, steps);
    let (significance, fa, mut peak) = (first.significance, first.false_alarm, first.peak);

    let mut line = Line { t_ref: prior.t_ref, offset: prior.offset + first.x, drift: prior.drift + first.drift };
    let mut cur_bin = b;
    let mut rel = (first.x, first.drift);
    while cur_bin > bin * (1.0 + 1e-9) {
        let nb = (cur_bin / REFINE).max(bin);
        let new_span = 2.0 * cur_bin;
        let range = if tmax > 0.0 { cur_bin / tmax } else { 0.0 };
        // re-centre on the current best line and keep nearby pairs
        let (x0, d0) = rel;
        let mut tau = Vec::new();
        let mut x = Vec::new();
        for (&t, &v) in pairs.tau.iter().zip(&pairs.x) {
            let y = v - x0 - d0 * t;
            if y.abs() <= new_span + range * t.abs() {
                tau.push(t);
                x.push(y);
            }
        }
        pairs = Pairs { tau, x };
        let s = steps_for(nb, range);
        let lvl = scan_level(&pairs, new_span, nb, if s > 0 { nb / tmax } else { 0.0 }, s);
        line.offset += lvl.x;
        line.drift += lvl.drift;
        rel = (lvl.x, lvl.drift);
        peak = lvl.peak;
        cur_bin = nb;
    }
    // sub-bin offset from the mean residual of pairs in the final peak
    let (x0, d0) = rel;
    let resid: Vec<f64> = pairs
        .tau
        .iter()
        .zip(&pairs.x)
        .map(|(&t, &v)| v - x0 - d0 * t)
        .filter(|y| y.abs() <= bin)
        .collect();
    if !resid.is_empty() {
        line.offset += resid.iter().sum::<f64>() / resid.len() as f64;
    }
    Ok(SearchResult { line, peak, significance, false_alarm: fa, matched: resid.len() })
}

/// Histogram of `remote − local` over `±span_ns` with `bin_ns` bins.
pub fn xcorr_offset(local: &[f64], remote: &[f64], span_ns: f64, bin_ns: f64) -> Result<XcorrPeak> {
    let r = search_line(local, remote, Line::default(), span_ns, 0.0, bin_ns)?;
    let synchronized = r.significance >= 5.0 && r.false_alarm <= 1e-6;
    Ok(XcorrPeak {
        offset_ns: r.line.offset,
        peak: r.peak,
        significance: r.significance,
        false_alarm: r.false_alarm,
        synchronized,
    })
}

fn slice_between(times: &[f64], lo: f64, hi: f64) -> &[f64] {
    let a = times.partition_point(|&t| t < lo);
    let b = times.partition_point(|&t| t < hi);
    &times[a..b]
}

/// Solves every block. `local` holds local coincidence times and `remote`
/// the remote clicks, both sorted, in ns of their own recorder clocks.
/// Block `k` covers local times `[origin + k·len, origin + (k+1)·len)`.
pub fn synchronize(
    local: &[f64],
    remote: &[f64],
    origin_ns: f64,
    block_ns: f64,
    n_blocks: usize,
    params: &SyncParams,
) -> Result<Vec<SyncSolution>> {
    params.validate()?;
    let half = (params.window_blocks as isize - 1) / 2;
    let extra = (params.window_blocks as isize - 1) - half;
    let max_drift = params.max_drift_ppm * 1e-6;
    let mut out = Vec::with_capacity(n_blocks);
    let mut last: Option<Line> = None;
    for k in 0..n_blocks {
        let center = origin_ns + (k as f64 + 0.5) * block_ns;
        let first = (k as isize - half).max(0) as f64;
        let end = ((k as isize + extra + 1) as f64).min(n_blocks as f64);
        let seg = slice_between(local, origin_ns + first * block_ns, origin_ns + end * block_ns);
        if seg.is_empty() {
            out.push(SyncSolution::unsynced(k, center));
            continue;
        }
        let mut found = None;
        if let Some(prev) = last {
            let prior = prev.rebased(center);
            // residual drift that moves the line by at most one span per block
            let drift = max_drift.min(params.track_span_ns / block_ns);
            let r = search_line(seg, remote, prior, params.track_span_ns, drift, params.bin_ns)?;
            if r.passes(params) {
                found = Some(r);
            }
        }
        if found.is_none() {
            // the offset bound holds at the run start (or the last lock);
            // drift widens it with distance from there
            let prior = last.unwrap_or(Line { t_ref: origin_ns, offset: params.center_ns, drift: 0.0 });
            let mut r = search_line(seg, remote, prior, params.span_ns, max_drift, params.bin_ns)?;
            if r.passes(params) {
                r.line = r.line.rebased(center);
                found = Some(r);
            }
        }
        match found {
            Some(r) => {
                last = Some(r.line);
                out.push(SyncSolution {
                    block: k,
                    line: r.line,
                    offset_ns: r.line.offset,
                    drift_ppm: r.line.drift * 1e6,
                    significance: r.significance,
                    false_alarm: r.false_alarm,
                    peak: r.peak,
                    synchronized: true,
                });
            }
            None => out.push(SyncSolution::unsynced(k, center)),
        }
    }
    Ok(out)
}

/// Retimes remote events into the local frame block by block using each
/// block's own line. Events falling into unsynchronized blocks are dropped;
/// the second return value counts them.
pub fn drift_correct(
    solutions: &[SyncSolution],
    remote: &TagStream,
    origin_ns: f64,
    block_ns: f64,
) -> Result<(TagStream, usize)> {
    let synced: Vec<&SyncSolution> = solutions.iter().filter(|s| s.synchronized).collect();
    if synced.is_empty() {
        return Ok((TagStream { events: Vec::new(), ..remote.clone() }, remote.events.len()));
    }
    // nearest synchronized line for every block, to place block edges
    let nearest = |k: usize| -> Line {
        synced.iter().min_by_key(|s| (s.block as i64 - k as i64).abs()).map(|s| s.line).expect("non-empty")
    };
    let n = solutions.len();
    let edges: Vec<f64> = (0..=n)
        .map(|k| {
            let t = origin_ns + k as f64 * block_ns;
            t + nearest(k.min(n - 1)).at(t)
        })
        .collect();
    let mut out = Vec::with_capacity(remote.events.len());
    let mut dropped = 0usize;
    for e in &remote.events {
        let r = e.tag as f64 * TICK_NS;
        let k = edges.partition_point(|&x| x <= r);
        if k == 0 || k > n {
            dropped += 1;
            continue;
        }
        let sol = &solutions[k - 1];
        if !sol.synchronized {
            dropped += 1;
            continue;
        }
        let t = sol.line.to_local(r);
        if t < 0.0 {
            dropped += 1;
            continue;
        }
        out.push(DetectionEvent { tag: (t / TICK_NS).round() as u64, ..*e });
    }
    out.sort_by_key(|e| e.tag);
    Ok((TagStream { recorder: remote.recorder, events: out, block_seconds: remote.block_seconds }, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{Channel, Origin};
    use crate::rng;
    use crate::tagstream::Recorder;
    use rand::Rng;

    fn poisson_times(rate_hz: f64, dur_ns: f64, r: &mut impl Rng) -> Vec<f64> {
        let mut out = Vec::new();
        let mut t = 0.0;
        loop {
            t += -(1.0 - r.random::<f64>()).ln() / (rate_hz * 1e-9);
            if t >= dur_ns {
                return out;
            }
            out.push(t);
        }
    }

    #[test]
    fn constructed_shift_recovered() {
        let mut r = rng::stream(21, rng::domain::TEST);
        let local = poisson_times(2000.0, 1e9, &mut r);
        let remote: Vec<f64> = local.iter().map(|t| t + 1000.0).collect();
        let p = xcorr_offset(&local, &remote, 10_000.0, 1.0).unwrap();
        assert!(p.synchronized);
        assert!((p.offset_ns - 1000.0).abs() <= 1.0, "{}", p.offset_ns);
    }

    #[test]
    fn pure_noise_flagged() {
        for seed in 0..20 {
            let mut r = rng::stream(seed, rng::domain::TEST);
            let local = poisson_times(3000.0, 3e9, &mut r);
            let remote = poisson_times(30_000.0, 3e9, &mut r);
            let p = xcorr_offset(&local, &remote, 10_000.0, 1.0).unwrap();
            assert!(!p.synchronized, "seed {seed}: sig {} fa {}", p.significance, p.false_alarm);
        }
    }

    #[test]
    fn drifting_clock_tracked() {
        // 5 ppm drift: the offset advances 150 µs per 30 s block
        let mut r = rng::stream(22, rng::domain::TEST);
        let block = 30e9;
        let local = poisson_times(50.0, 4.0 * block, &mut r);
        let drift = 5e-6;
        let mut remote: Vec<f64> = local.iter().map(|t| t * (1.0 + drift) + 200_000.0).collect();
        remote.extend(poisson_times(2000.0, 4.0 * block, &mut r));
        remote.sort_by(f64::total_cmp);
        let params = SyncParams { max_drift_ppm: 10.0, window_blocks: 1, ..SyncParams::default() };
        let sols = synchronize(&local, &remote, 0.0, block, 4, &params).unwrap();
        assert!(sols.iter().all(|s| s.synchronized));
        for w in sols.windows(2) {
            let step = w[1].offset_ns - w[0].offset_ns;
            assert!((step - 150_000.0).abs() < 15_000.0, "{step}");
        }
        for s in &sols {
            assert!((s.drift_ppm - 5.0).abs() < 0.5, "{}", s.drift_ppm);
        }
    }

    #[test]
    fn correction_of_constant_offset_is_shift() {
        let mut r = rng::stream(23, rng::domain::TEST);
        let local = poisson_times(500.0, 30e9, &mut r);
        let remote: Vec<f64> = local.iter().map(|t| t + 42_000.0).collect();
        let params = SyncParams { window_blocks: 1, ..SyncParams::default() };
        let sols = synchronize(&local, &remote, 0.0, 30e9, 1, &params).unwrap();
        assert!(sols[0].synchronized);
        let events: Vec<DetectionEvent> = remote
            .iter()
            .map(|t| DetectionEvent { channel: Channel::G, tag: (t / TICK_NS) as u64, origin: Origin::UNKNOWN })
            .collect();
        let stream = TagStream::new(Recorder::Tenerife, events.clone(), 30.0).unwrap();
        let (c, dropped) = drift_correct(&sols, &stream, 0.0, 30e9).unwrap();
        assert_eq!(dropped, 0);
        for (a, b) in c.events.iter().zip(&events) {
            let shift = (b.tag as f64 - a.tag as f64) * TICK_NS;
            assert!((shift - 42_000.0).abs() < 1.0, "{shift}");
        }
    }

    #[test]
    fn gap_block_excluded() {
        let mut r = rng::stream(24, rng::domain::TEST);
        let block = 10e9;
        // block 1 has no local events
        let mut local = poisson_times(500.0, block, &mut r);
        local.extend(poisson_times(500.0, block, &mut r).into_iter().map(|t| t + 2.0 * block));
        let mut remote: Vec<f64> = local.iter().map(|t| t + 5_000.0).collect();
        let noise = poisson_times(100.0, 3.0 * block, &mut r);
        remote.extend(noise);
        remote.sort_by(f64::total_cmp);
        let params = SyncParams { window_blocks: 1, ..SyncParams::default() };
        let sols = synchronize(&local, &remote, 0.0, block, 3, &params).unwrap();
        assert!(sols[0].synchronized && !sols[1].synchronized && sols[2].synchronized);
        let events: Vec<DetectionEvent> = remote
            .iter()
            .map(|t| DetectionEvent { channel: Channel::H, tag: (t / TICK_NS) as u64, origin: Origin::UNKNOWN })
            .collect();
        let n = events.len();
        let stream = TagStream::new(Recorder::Tenerife, events, 10.0).unwrap();
        let (c, dropped) = drift_correct(&sols, &stream, 0.0, block).unwrap();
        assert_eq!(c.events.len() + dropped, n);
        assert!(dropped > 0);
    }

    #[test]
    fn false_alarm_tail() {
        assert_eq!(false_alarm(0.0, 1, 1e6), 0.0);
        assert!(false_alarm(1.0, 1, 100.0) > 0.99);
        assert!(false_alarm(0.01, 10, 1e6) < 1e-12);
    }
}
