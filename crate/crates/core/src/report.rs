//! Results report with a stable, tab-delimited text form.

use std::fmt::Write as _;

use crate::config::{ExperimentConfig, Mode};
use crate::error::Result;
use crate::pipeline::Analysis;
use crate::qstate::{BellKind, MeasBasis};
use crate::source::two_fold_rate;
use crate::stats::{
    bootstrap_sigma, chsh_from_counts, visibility, witness, witness_from_counts, ChshResult, CorrelationCounts,
    Statistic, WitnessResult, MIN_BOOTSTRAP_EVENTS,
};
use crate::tagstream::{BsmKind, SyncSolution};

#[derive(Debug, Clone, PartialEq)]
pub struct KindSummary {
    pub kind: BsmKind,
    pub events: usize,
    /// Events whose four clicks share one source pulse.
    pub true_events: usize,
    pub counts: CorrelationCounts,
    pub witness: Option<WitnessResult>,
    pub chsh: Option<ChshResult>,
    pub witness_boot_sigma: Option<f64>,
    pub chsh_boot_sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// Detected 2-fold rate per source implied by the configuration.
    pub two_fold_hz: f64,
    pub threefold_hz: f64,
    /// Measured local 4-fold rate (local mode only).
    pub local_fourfold_hz: Option<f64>,
    /// Closed-form local 4-fold rate `R₁R₂/(2·rep)`.
    pub local_fourfold_model_hz: f64,
    /// Measured 4-fold rate across the link (remote mode only).
    pub remote_fourfold_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsReport {
    pub mode: Mode,
    pub seed: u64,
    pub duration_s: f64,
    pub blocks: usize,
    pub synced_blocks: usize,
    pub rates: Rates,
    pub kinds: [KindSummary; 2],
    /// Both kinds combined, each oriented by its own ideal correlations.
    pub pooled: Option<WitnessResult>,
    pub total_events: usize,
    pub accidentals: f64,
    pub remote_dropped: usize,
    pub sync: Vec<SyncSolution>,
}

/// Closed-form local 4-fold rate for detected 2-fold rates `r1`, `r2`.
pub fn fourfold_rate_model(r1: f64, r2: f64, rep_rate_hz: f64) -> f64 {
    r1 * r2 / (2.0 * rep_rate_hz)
}

/// Visibilities in HV, PM, RL with both kinds' counts pooled.
pub fn pooled_witness(counts: &[(BellKind, &CorrelationCounts)]) -> Result<WitnessResult> {
    let mut v = [(0.0, 0.0); 3];
    for (i, b) in MeasBasis::MUB.iter().enumerate() {
        let (mut hi, mut lo) = (0, 0);
        for (k, c) in counts {
            if let Ok((x, n)) = c.extremes(*k, *b) {
                hi += x;
                lo += n;
            }
        }
        v[i] = visibility(hi, lo)?;
    }
    witness(v[0], v[1], v[2])
}

impl ResultsReport {
    pub fn build(cfg: &ExperimentConfig, a: &Analysis) -> Result<Self> {
        let p = cfg.pair_probs()?;
        let eta = cfg.local_detector.efficiency;
        let r = [two_fold_rate(p[0], cfg.rep_rate_hz, eta), two_fold_rate(p[1], cfg.rep_rate_hz, eta)];
        let dur = cfg.duration_s;
        let n = a.events.len() as f64;
        let rates = Rates {
            two_fold_hz: (r[0] * r[1]).sqrt(),
            threefold_hz: a.threefolds.len() as f64 / dur,
            local_fourfold_hz: (cfg.mode == Mode::Local).then_some(n / dur),
            local_fourfold_model_hz: fourfold_rate_model(r[0], r[1], cfg.rep_rate_hz),
            remote_fourfold_hz: (cfg.mode == Mode::Remote).then_some(n / dur),
        };
        let kinds = [BsmKind::PsiMinus12, BsmKind::PsiPlus12].map(|kind| {
            let mine: Vec<_> = a.events.iter().filter(|e| e.kind == kind).copied().collect();
            let counts = CorrelationCounts::from_events(&mine, kind);
            let boot = |s| {
                (mine.len() >= MIN_BOOTSTRAP_EVENTS)
                    .then(|| bootstrap_sigma(&mine, s, cfg.bootstrap_resamples, cfg.seed).ok())
                    .flatten()
            };
            let w = witness_from_counts(&counts, kind.bell()).ok();
            let s = chsh_from_counts(&counts, kind.bell()).ok();
            KindSummary {
                kind,
                events: mine.len(),
                true_events: mine.iter().filter(|e| e.pulse.is_some()).count(),
                witness_boot_sigma: w.and_then(|_| boot(Statistic::Witness(kind))),
                chsh_boot_sigma: s.and_then(|_| boot(Statistic::Chsh(kind))),
                witness: w,
                chsh: s,
                counts,
            }
        });
        let pooled =
            pooled_witness(&[(BellKind::PsiMinus, &kinds[0].counts), (BellKind::PsiPlus, &kinds[1].counts)]).ok();
        Ok(ResultsReport {
            mode: cfg.mode,
            seed: cfg.seed,
            duration_s: dur,
            blocks: cfg.n_blocks(),
            synced_blocks: match cfg.mode {
                Mode::Local => cfg.n_blocks(),
                Mode::Remote => a.sync.iter().filter(|s| s.synchronized).count(),
            },
            rates,
            total_events: a.events.len(),
            kinds,
            pooled,
            accidentals: a.accidentals,
            remote_dropped: a.remote_dropped,
            sync: a.sync.clone(),
        })
    }

    /// Tab-delimited text; identical inputs give identical bytes.
    pub fn to_text(&self) -> String {
        fn f(v: f64) -> String {
            format!("{v:.6}")
        }
        fn o(v: Option<f64>) -> String {
            v.map_or_else(|| "-".into(), f)
        }
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "mode\t{}", self.mode);
        let _ = writeln!(s, "seed\t{}", self.seed);
        let _ = writeln!(s, "duration_s\t{}", f(self.duration_s));
        let _ = writeln!(s, "blocks\t{}", self.blocks);
        let _ = writeln!(s, "synced_blocks\t{}", self.synced_blocks);
        let _ = writeln!(s, "[rates]");
        let _ = writeln!(s, "two_fold_hz\t{}", f(self.rates.two_fold_hz));
        let _ = writeln!(s, "threefold_hz\t{}", f(self.rates.threefold_hz));
        let _ = writeln!(s, "local_fourfold_hz\t{}", o(self.rates.local_fourfold_hz));
        let _ = writeln!(s, "local_fourfold_model_hz\t{}", f(self.rates.local_fourfold_model_hz));
        let _ = writeln!(s, "remote_fourfold_hz\t{}", o(self.rates.remote_fourfold_hz));
        let _ = writeln!(s, "[results]");
        let _ = writeln!(
            s,
            "kind\tevents\ttrue_events\tV_HV\tsV_HV\tV_PM\tsV_PM\tV_RL\tsV_RL\tV_mean\tW\tsW\tsigW\tsW_boot\tS\tsS\tsS_boot"
        );
        let row = |name: &str, events: String, truth: String, w: Option<&WitnessResult>, c: Option<&ChshResult>, wb: Option<f64>, sb: Option<f64>| {
            let wv = |g: fn(&WitnessResult) -> f64| o(w.map(g));
            format!(
                "{name}\t{events}\t{truth}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                wv(|w| w.v_hv.0),
                wv(|w| w.v_hv.1),
                wv(|w| w.v_pm.0),
                wv(|w| w.v_pm.1),
                wv(|w| w.v_rl.0),
                wv(|w| w.v_rl.1),
                wv(|w| w.v_mean),
                wv(|w| w.w),
                wv(|w| w.sigma),
                wv(|w| w.significance),
                o(wb),
                o(c.map(|c| c.s)),
                o(c.map(|c| c.sigma)),
                o(sb),
            )
        };
        for k in &self.kinds {
            s.push_str(&row(
                k.kind.bell().name(),
                k.events.to_string(),
                k.true_events.to_string(),
                k.witness.as_ref(),
                k.chsh.as_ref(),
                k.witness_boot_sigma,
                k.chsh_boot_sigma,
            ));
        }
        let truth: usize = self.kinds.iter().map(|k| k.true_events).sum();
        s.push_str(&row("pooled", self.total_events.to_string(), truth.to_string(), self.pooled.as_ref(), None, None, None));
        let _ = writeln!(s, "accidentals_estimate\t{}", f(self.accidentals));
        let _ = writeln!(s, "remote_dropped\t{}", self.remote_dropped);
        let _ = writeln!(s, "[counts]");
        let _ = writeln!(s, "kind\tbasis_a\tbasis_b\tn++\tn+-\tn-+\tn--");
        for k in &self.kinds {
            for (st, c) in k.counts.entries() {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    k.kind.bell().name(),
                    st.basis_a.label(),
                    st.basis_b.label(),
                    c[0],
                    c[1],
                    c[2],
                    c[3]
                );
            }
        }
        let _ = writeln!(s, "[sync]");
        let _ = writeln!(s, "block\tsynchronized\toffset_ns\tdrift_ppm\tsignificance\tfalse_alarm\tpeak");
        for b in &self.sync {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{:.3e}\t{}",
                b.block,
                b.synchronized as u8,
                f(b.offset_ns),
                format!("{:.9}", b.drift_ppm),
                f(b.significance),
                b.false_alarm,
                b.peak
            );
        }
        s
    }
}
