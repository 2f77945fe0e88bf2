//! Scenario configuration: flat `key = value` text, unknown keys rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::link::{propagation_delay, fiber_delay, ChannelParams, ClockParams, DetectorParams};
use crate::source::{calibrate_pair_prob, hom_overlap, HomParams, SourceParams, StatModel};
use crate::tagstream::{Schedule, SyncParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Every detector in one laboratory, one recorder, no free-space link.
    Local,
    /// Bob across the free-space link with his own recorder.
    Remote,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Mode::Local),
            "remote" => Ok(Mode::Remote),
            other => Err(Error::range("mode", format!("unknown mode `{other}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Local => "local",
            Mode::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    Witness,
    Chsh,
}

impl ScheduleKind {
    pub fn schedule(self) -> Schedule {
        match self {
            ScheduleKind::Witness => Schedule::witness(),
            ScheduleKind::Chsh => Schedule::chsh(),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "witness" => Ok(ScheduleKind::Witness),
            "chsh" => Ok(ScheduleKind::Chsh),
            other => Err(Error::range("schedule", format!("unknown schedule `{other}`"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Witness => "witness",
            ScheduleKind::Chsh => "chsh",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub rep_rate_hz: f64,
    /// When set, both pair probabilities are calibrated from this detected
    /// 2-fold rate and the local detector efficiency.
    pub two_fold_rate_hz: Option<f64>,
    pub sources: [SourceParams; 2],
    pub hom: HomParams,
    pub channel: ChannelParams,
    pub local_detector: DetectorParams,
    pub remote_detector: DetectorParams,
    pub local_clock: ClockParams,
    pub remote_clock: ClockParams,
    pub alice_fiber_m: f64,
    pub bob_fiber_m: f64,
    pub bsm_window_ns: f64,
    pub alice_window_ns: f64,
    pub fourfold_window_ns: f64,
    pub duration_s: f64,
    pub sync: SyncParams,
    pub schedule: ScheduleKind,
    pub bootstrap_resamples: usize,
    /// Interference-filter width in front of the analyzers; metadata only.
    pub if_fwhm_nm: f64,
}

/// Intrinsic two-photon overlap reproducing the remote mean visibility.
pub const DEFAULT_INTRINSIC_VISIBILITY: f64 = 0.43;

impl Default for ExperimentConfig {
    fn default() -> Self {
        let src = SourceParams {
            pair_prob: 0.0,
            intrinsic_visibility: DEFAULT_INTRINSIC_VISIBILITY,
            stat_model: StatModel::Poissonian,
        };
        ExperimentConfig {
            mode: Mode::Remote,
            seed: 1,
            rep_rate_hz: 80e6,
            two_fold_rate_hz: Some(130e3),
            sources: [src, src],
            hom: HomParams::default(),
            channel: ChannelParams::default(),
            local_detector: DetectorParams::local(),
            remote_detector: DetectorParams::remote(),
            local_clock: ClockParams::default(),
            remote_clock: ClockParams { offset_ns: 0.0, drift_ppm: 1e-5 },
            alice_fiber_m: 100.0,
            bob_fiber_m: 50.0,
            bsm_window_ns: 1.0,
            alice_window_ns: 2.0,
            fourfold_window_ns: 5.0,
            duration_s: 16_260.0,
            sync: SyncParams::default(),
            schedule: ScheduleKind::Witness,
            bootstrap_resamples: 1000,
            if_fwhm_nm: 8.0,
        }
    }
}

fn num<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn opt_f64(v: &str) -> std::result::Result<Option<f64>, String> {
    if v == "none" {
        Ok(None)
    } else {
        num(v).map(Some)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

macro_rules! keys {
    ($( $key:literal => $field:expr, $parse:expr, $show:expr; )*) => {
        impl ExperimentConfig {
            /// Every accepted key, in serialization order.
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one parameter from its text form.
            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                let c = self;
                let r: std::result::Result<(), String> = match key {
                    $( $key => { let parse = $parse; parse(value).map(|v| $field(c, v)) } )*
                    other => Err(format!("unknown key `{other}`")),
                };
                r.map_err(|msg| Error::Config { line: 0, msg: format!("{key}: {msg}") })
            }

            /// All parameters as `(key, value)` in stable order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                let c = self;
                vec![$( ($key, $show(c)) ),*]
            }
        }
    };
}

keys! {
    "mode" => |c: &mut Self, v| c.mode = v, |s: &str| s.parse::<Mode>().map_err(|e| e.to_string()), |c: &Self| c.mode.to_string();
    "seed" => |c: &mut Self, v| c.seed = v, num::<u64>, |c: &Self| c.seed.to_string();
    "rep_rate_hz" => |c: &mut Self, v| c.rep_rate_hz = v, num::<f64>, |c: &Self| c.rep_rate_hz.to_string();
    "two_fold_rate_hz" => |c: &mut Self, v| c.two_fold_rate_hz = v, opt_f64, |c: &Self| fmt_opt(c.two_fold_rate_hz);
    "src1.pair_prob" => |c: &mut Self, v| c.sources[0].pair_prob = v, num::<f64>, |c: &Self| c.sources[0].pair_prob.to_string();
    "src2.pair_prob" => |c: &mut Self, v| c.sources[1].pair_prob = v, num::<f64>, |c: &Self| c.sources[1].pair_prob.to_string();
    "src1.intrinsic_visibility" => |c: &mut Self, v| c.sources[0].intrinsic_visibility = v, num::<f64>, |c: &Self| c.sources[0].intrinsic_visibility.to_string();
    "src2.intrinsic_visibility" => |c: &mut Self, v| c.sources[1].intrinsic_visibility = v, num::<f64>, |c: &Self| c.sources[1].intrinsic_visibility.to_string();
    "src1.stat_model" => |c: &mut Self, v| c.sources[0].stat_model = v, |s: &str| s.parse::<StatModel>().map_err(|e| e.to_string()), |c: &Self| c.sources[0].stat_model.to_string();
    "src2.stat_model" => |c: &mut Self, v| c.sources[1].stat_model = v, |s: &str| s.parse::<StatModel>().map_err(|e| e.to_string()), |c: &Self| c.sources[1].stat_model.to_string();
    "hom.delta_l_mm" => |c: &mut Self, v| c.hom.delta_l_mm = v, num::<f64>, |c: &Self| c.hom.delta_l_mm.to_string();
    "hom.center_wavelength_nm" => |c: &mut Self, v| c.hom.center_wavelength_nm = v, num::<f64>, |c: &Self| c.hom.center_wavelength_nm.to_string();
    "hom.filter_fwhm_nm" => |c: &mut Self, v| c.hom.filter_fwhm_nm = v, num::<f64>, |c: &Self| c.hom.filter_fwhm_nm.to_string();
    "hom.width_scale" => |c: &mut Self, v| c.hom.width_scale = v, num::<f64>, |c: &Self| c.hom.width_scale.to_string();
    "channel.mean_loss_db" => |c: &mut Self, v| c.channel.mean_loss_db = v, num::<f64>, |c: &Self| c.channel.mean_loss_db.to_string();
    "channel.scint_sigma_db" => |c: &mut Self, v| c.channel.scint_sigma_db = v, num::<f64>, |c: &Self| c.channel.scint_sigma_db.to_string();
    "channel.length_km" => |c: &mut Self, v| c.channel.length_km = v, num::<f64>, |c: &Self| c.channel.length_km.to_string();
    "block_seconds" => |c: &mut Self, v| c.channel.block_seconds = v, num::<f64>, |c: &Self| c.channel.block_seconds.to_string();
    "duration_s" => |c: &mut Self, v| c.duration_s = v, num::<f64>, |c: &Self| c.duration_s.to_string();
    "local.efficiency" => |c: &mut Self, v| c.local_detector.efficiency = v, num::<f64>, |c: &Self| c.local_detector.efficiency.to_string();
    "local.dark_rate_hz" => |c: &mut Self, v| c.local_detector.dark_rate_hz = v, num::<f64>, |c: &Self| c.local_detector.dark_rate_hz.to_string();
    "local.jitter_ps" => |c: &mut Self, v| c.local_detector.jitter_sigma_ps = v, num::<f64>, |c: &Self| c.local_detector.jitter_sigma_ps.to_string();
    "local.dead_time_ns" => |c: &mut Self, v| c.local_detector.dead_time_ns = v, num::<f64>, |c: &Self| c.local_detector.dead_time_ns.to_string();
    "remote.efficiency" => |c: &mut Self, v| c.remote_detector.efficiency = v, num::<f64>, |c: &Self| c.remote_detector.efficiency.to_string();
    "remote.dark_rate_hz" => |c: &mut Self, v| c.remote_detector.dark_rate_hz = v, num::<f64>, |c: &Self| c.remote_detector.dark_rate_hz.to_string();
    "remote.jitter_ps" => |c: &mut Self, v| c.remote_detector.jitter_sigma_ps = v, num::<f64>, |c: &Self| c.remote_detector.jitter_sigma_ps.to_string();
    "remote.dead_time_ns" => |c: &mut Self, v| c.remote_detector.dead_time_ns = v, num::<f64>, |c: &Self| c.remote_detector.dead_time_ns.to_string();
    "local_clock.offset_ns" => |c: &mut Self, v| c.local_clock.offset_ns = v, num::<f64>, |c: &Self| c.local_clock.offset_ns.to_string();
    "local_clock.drift_ppm" => |c: &mut Self, v| c.local_clock.drift_ppm = v, num::<f64>, |c: &Self| c.local_clock.drift_ppm.to_string();
    "remote_clock.offset_ns" => |c: &mut Self, v| c.remote_clock.offset_ns = v, num::<f64>, |c: &Self| c.remote_clock.offset_ns.to_string();
    "remote_clock.drift_ppm" => |c: &mut Self, v| c.remote_clock.drift_ppm = v, num::<f64>, |c: &Self| c.remote_clock.drift_ppm.to_string();
    "alice_fiber_m" => |c: &mut Self, v| c.alice_fiber_m = v, num::<f64>, |c: &Self| c.alice_fiber_m.to_string();
    "bob_fiber_m" => |c: &mut Self, v| c.bob_fiber_m = v, num::<f64>, |c: &Self| c.bob_fiber_m.to_string();
    "bsm_window_ns" => |c: &mut Self, v| c.bsm_window_ns = v, num::<f64>, |c: &Self| c.bsm_window_ns.to_string();
    "alice_window_ns" => |c: &mut Self, v| c.alice_window_ns = v, num::<f64>, |c: &Self| c.alice_window_ns.to_string();
    "fourfold_window_ns" => |c: &mut Self, v| c.fourfold_window_ns = v, num::<f64>, |c: &Self| c.fourfold_window_ns.to_string();
    "sync.span_ns" => |c: &mut Self, v| c.sync.span_ns = v, num::<f64>, |c: &Self| c.sync.span_ns.to_string();
    "sync.bin_ns" => |c: &mut Self, v| c.sync.bin_ns = v, num::<f64>, |c: &Self| c.sync.bin_ns.to_string();
    "sync.max_drift_ppm" => |c: &mut Self, v| c.sync.max_drift_ppm = v, num::<f64>, |c: &Self| c.sync.max_drift_ppm.to_string();
    "sync.min_significance" => |c: &mut Self, v| c.sync.min_significance = v, num::<f64>, |c: &Self| c.sync.min_significance.to_string();
    "sync.max_false_alarm" => |c: &mut Self, v| c.sync.max_false_alarm = v, num::<f64>, |c: &Self| c.sync.max_false_alarm.to_string();
    "sync.window_blocks" => |c: &mut Self, v| c.sync.window_blocks = v, num::<usize>, |c: &Self| c.sync.window_blocks.to_string();
    "sync.track_span_ns" => |c: &mut Self, v| c.sync.track_span_ns = v, num::<f64>, |c: &Self| c.sync.track_span_ns.to_string();
    "schedule" => |c: &mut Self, v| c.schedule = v, |s: &str| s.parse::<ScheduleKind>().map_err(|e| e.to_string()), |c: &Self| c.schedule.to_string();
    "bootstrap_resamples" => |c: &mut Self, v| c.bootstrap_resamples = v, num::<usize>, |c: &Self| c.bootstrap_resamples.to_string();
    "if_fwhm_nm" => |c: &mut Self, v| c.if_fwhm_nm = v, num::<f64>, |c: &Self| c.if_fwhm_nm.to_string();
}

impl ExperimentConfig {
    /// Default scenario in the given mode.
    pub fn with_mode(mode: Mode) -> Self {
        ExperimentConfig { mode, ..Self::default() }
    }

    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// `#` comments are ignored; unknown or repeated keys are errors. The
    /// result is validated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: String| Error::Config { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected `key = value`".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.iter().any(|s| s == k) {
                return Err(bad(format!("duplicate key `{k}`")));
            }
            cfg.set(k, v).map_err(|e| match e {
                Error::Config { msg, .. } => bad(msg),
                other => other,
            })?;
            seen.push(k.to_string());
        }
        let explicit_p = seen.iter().any(|k| k.ends_with(".pair_prob"));
        if explicit_p && !seen.iter().any(|k| k == "two_fold_rate_hz") {
            // explicit pair probabilities replace the default calibration
            cfg.two_fold_rate_hz = None;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        }
        s
    }

    /// Per-source pair probabilities after calibration.
    pub fn pair_probs(&self) -> Result<[f64; 2]> {
        match self.two_fold_rate_hz {
            Some(r) => {
                let p = calibrate_pair_prob(r, self.rep_rate_hz, self.local_detector.efficiency)?;
                Ok([p, p])
            }
            None => Ok([self.sources[0].pair_prob, self.sources[1].pair_prob]),
        }
    }

    /// Source parameters with calibrated pair probabilities.
    pub fn resolved_sources(&self) -> Result<[SourceParams; 2]> {
        let p = self.pair_probs()?;
        let mut s = self.sources;
        s[0].pair_prob = p[0];
        s[1].pair_prob = p[1];
        Ok(s)
    }

    /// Two-photon overlap at the analyzer: geometric mean of the intrinsic
    /// visibilities times the HOM overlap.
    pub fn overlap(&self) -> f64 {
        (self.sources[0].intrinsic_visibility * self.sources[1].intrinsic_visibility).sqrt() * hom_overlap(&self.hom)
    }

    pub fn block_ns(&self) -> f64 {
        self.channel.block_seconds * 1e9
    }

    pub fn n_blocks(&self) -> usize {
        (self.duration_s / self.channel.block_seconds).round() as usize
    }

    /// Delay of Alice's clicks after the analyzer clicks.
    pub fn alice_delay_ns(&self) -> f64 {
        fiber_delay(self.alice_fiber_m)
    }

    /// Delay of Bob's arrival after the analyzer clicks, in true time.
    pub fn bob_delay_ns(&self) -> f64 {
        let link = match self.mode {
            Mode::Local => 0.0,
            Mode::Remote => propagation_delay(&self.channel),
        };
        fiber_delay(self.bob_fiber_m) + link
    }

    pub fn bob_detector(&self) -> DetectorParams {
        match self.mode {
            Mode::Local => self.local_detector,
            Mode::Remote => self.remote_detector,
        }
    }

    /// Checks every parameter and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut check = |r: Result<()>, what: &str| {
            if let Err(e) = r {
                errs.push(format!("{what}: {e}"));
            }
        };
        check(self.hom.validate(), "hom");
        check(self.channel.validate(), "channel");
        check(self.local_detector.validate(), "local detector");
        check(self.remote_detector.validate(), "remote detector");
        check(self.sync.validate(), "sync");
        match self.resolved_sources() {
            Ok(srcs) => {
                for (i, s) in srcs.iter().enumerate() {
                    check(s.validate(), &format!("source {}", i + 1));
                }
            }
            Err(e) => errs.push(format!("sources: {e}")),
        }
        let positive = [
            ("rep_rate_hz", self.rep_rate_hz),
            ("duration_s", self.duration_s),
            ("bsm_window_ns", self.bsm_window_ns),
            ("alice_window_ns", self.alice_window_ns),
            ("fourfold_window_ns", self.fourfold_window_ns),
            ("if_fwhm_nm", self.if_fwhm_nm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name}: {v} must be > 0"));
            }
        }
        for (name, v) in [("alice_fiber_m", self.alice_fiber_m), ("bob_fiber_m", self.bob_fiber_m)] {
            if !(v >= 0.0) {
                errs.push(format!("{name}: {v} must be ≥ 0"));
            }
        }
        if self.duration_s > 0.0 && self.channel.block_seconds > 0.0 {
            let n = self.duration_s / self.channel.block_seconds;
            if n.round() < 1.0 || (n - n.round()).abs() > 1e-9 * n.max(1.0) {
                errs.push(format!(
                    "duration_s: {} is not a multiple of block_seconds {}",
                    self.duration_s, self.channel.block_seconds
                ));
            }
        }
        for (name, clk) in [("local_clock", self.local_clock), ("remote_clock", self.remote_clock)] {
            if !(clk.drift_ppm > -1e5 && clk.drift_ppm < 1e5) || !clk.offset_ns.is_finite() {
                errs.push(format!("{name}: drift or offset out of range"));
            }
            if clk.offset_ns < -crate::sim::START_NS * 0.9 {
                errs.push(format!("{name}: offset {} ns would produce negative tags", clk.offset_ns));
            }
        }
        if self.bootstrap_resamples < 2 {
            errs.push("bootstrap_resamples: need at least 2".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.n_blocks(), 542);
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.entries().len(), ExperimentConfig::KEYS.len());
    }

    #[test]
    fn calibrated_pair_probability() {
        let c = ExperimentConfig::default();
        let p = c.pair_probs().unwrap();
        assert!((p[0] - 1.625e-3).abs() < 1e-15);
    }

    #[test]
    fn unknown_and_duplicate_keys() {
        let e = ExperimentConfig::parse("mode = local\nwarp_factor = 9\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        let e = ExperimentConfig::parse("seed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        assert!(ExperimentConfig::parse("seed\n").is_err());
        assert!(ExperimentConfig::parse("seed = x\n").is_err());
    }

    #[test]
    fn comments_and_overrides() {
        let c = ExperimentConfig::parse("# lab run\nmode = local\n\nduration_s = 60\nsrc1.pair_prob = 0.001\n").unwrap();
        assert_eq!(c.mode, Mode::Local);
        assert_eq!(c.two_fold_rate_hz, None);
        assert_eq!(c.pair_probs().unwrap()[0], 0.001);
        assert_eq!(c.n_blocks(), 2);
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = "duration_s = 45\nfourfold_window_ns = 0\nlocal.efficiency = 2\n";
        match ExperimentConfig::parse(text) {
            Err(Error::Validation(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("{other:?}"),
        }
        let c = ExperimentConfig { two_fold_rate_hz: Some(79e6), ..ExperimentConfig::default() };
        assert!(c.validate().is_err());
    }
}
