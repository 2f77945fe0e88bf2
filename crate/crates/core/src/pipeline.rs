//! End-to-end processing: tag streams in, swap events out.

use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::link::TICK_NS;
use crate::report::ResultsReport;
use crate::sim::{simulate, SimOutput};
use crate::tagstream::{
    drift_correct, find_bsm, fourfold, sideband_accidentals, synchronize, threefold, BsmKind, SwapEvent, SyncParams,
    SyncSolution, TagStream, ThreeFold,
};

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Analyzer records per kind, `[Ψ⁻, Ψ⁺]`.
    pub bsm_records: [usize; 2],
    pub threefolds: Vec<ThreeFold>,
    /// Per-block solutions (remote mode only).
    pub sync: Vec<SyncSolution>,
    /// Remote clicks discarded because their block had no solution.
    pub remote_dropped: usize,
    pub events: Vec<SwapEvent>,
    /// Sideband estimate of accidental 4-folds in the central window.
    pub accidentals: f64,
}

/// Analyzer records joined with Alice's clicks.
pub fn local_threefolds(local: &TagStream, cfg: &ExperimentConfig) -> Result<Vec<ThreeFold>> {
    let bsm = find_bsm(local, cfg.bsm_window_ns)?;
    let alice: Vec<_> = local.events.iter().filter(|e| e.channel.is_alice()).copied().collect();
    Ok(threefold(&bsm, &alice, cfg.alice_window_ns, cfg.alice_delay_ns()))
}

/// Sync parameters with the search centred on the nominal link delay.
pub fn sync_params(cfg: &ExperimentConfig) -> SyncParams {
    SyncParams { center_ns: cfg.bob_delay_ns(), ..cfg.sync }
}

/// Recovers swap events from recorded streams. `remote` is required in
/// remote mode and ignored in local mode.
pub fn analyze(local: &TagStream, remote: Option<&TagStream>, cfg: &ExperimentConfig) -> Result<Analysis> {
    let bsm = find_bsm(local, cfg.bsm_window_ns)?;
    let bsm_records = [
        bsm.iter().filter(|r| r.kind == BsmKind::PsiMinus12).count(),
        bsm.iter().filter(|r| r.kind == BsmKind::PsiPlus12).count(),
    ];
    let alice: Vec<_> = local.events.iter().filter(|e| e.channel.is_alice()).copied().collect();
    let tfs = threefold(&bsm, &alice, cfg.alice_window_ns, cfg.alice_delay_ns());
    let schedule = cfg.schedule.schedule();
    let origin = SimOutput::origin_ns(cfg);
    let block_ns = cfg.block_ns() * (1.0 + cfg.local_clock.drift_ppm * 1e-6);
    match cfg.mode {
        Mode::Local => {
            let bob: Vec<_> = local.events.iter().filter(|e| e.channel.is_bob()).copied().collect();
            let delay = cfg.bob_delay_ns();
            let events = fourfold(&tfs, &bob, cfg.fourfold_window_ns, delay, &schedule, origin, block_ns);
            let accidentals = sideband_accidentals(&tfs, &bob, cfg.fourfold_window_ns, delay);
            Ok(Analysis { bsm_records, threefolds: tfs, sync: Vec::new(), remote_dropped: 0, events, accidentals })
        }
        Mode::Remote => {
            let remote = remote.ok_or_else(|| Error::range("remote", "remote mode needs the remote stream"))?;
            let local_times: Vec<f64> = tfs.iter().map(|t| t.tag as f64 * TICK_NS).collect();
            let remote_times = remote.times_ns(|c| c.is_bob());
            let sols = synchronize(&local_times, &remote_times, origin, block_ns, cfg.n_blocks(), &sync_params(cfg))?;
            let (corrected, dropped) = drift_correct(&sols, remote, origin, block_ns)?;
            let events = fourfold(&tfs, &corrected.events, cfg.fourfold_window_ns, 0.0, &schedule, origin, block_ns);
            let accidentals = sideband_accidentals(&tfs, &corrected.events, cfg.fourfold_window_ns, 0.0);
            Ok(Analysis { bsm_records, threefolds: tfs, sync: sols, remote_dropped: dropped, events, accidentals })
        }
    }
}

/// Simulates and analyzes one scenario.
pub fn run(cfg: &ExperimentConfig) -> Result<(ResultsReport, SimOutput, Analysis)> {
    let sim = simulate(cfg)?;
    let analysis = analyze(&sim.local, sim.remote.as_ref(), cfg)?;
    let report = ResultsReport::build(cfg, &analysis)?;
    Ok((report, sim, analysis))
}
