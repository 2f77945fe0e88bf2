//! Physical layer: channel loss, detectors, dark counts, delays and the
//! recorder clocks that turn true arrival times into integer tags.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::SPEED_OF_LIGHT;

/// Time-tagger resolution in picoseconds.
pub const TICK_PS: u16 = 156;
/// Time-tagger resolution in nanoseconds.
pub const TICK_NS: f64 = TICK_PS as f64 * 1e-3;
/// Group index of the single-mode fibre.
pub const FIBER_GROUP_INDEX: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub mean_loss_db: f64,
    pub scint_sigma_db: f64,
    pub length_km: f64,
    pub block_seconds: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams { mean_loss_db: 32.0, scint_sigma_db: 0.0, length_km: 143.0, block_seconds: 30.0 }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_loss_db >= 0.0) {
            return Err(Error::range("mean_loss_db", "must be ≥ 0"));
        }
        if !(self.scint_sigma_db >= 0.0) {
            return Err(Error::range("scint_sigma_db", "must be ≥ 0"));
        }
        if !(self.length_km >= 0.0) {
            return Err(Error::range("length_km", "must be ≥ 0"));
        }
        if !(self.block_seconds > 0.0) {
            return Err(Error::range("block_seconds", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub jitter_sigma_ps: f64,
    pub dead_time_ns: f64,
}

impl DetectorParams {
    pub fn local() -> Self {
        DetectorParams { efficiency: 1.0, dark_rate_hz: 100.0, jitter_sigma_ps: 200.0, dead_time_ns: 0.0 }
    }

    pub fn remote() -> Self {
        DetectorParams { efficiency: 1.0, dark_rate_hz: 500.0, jitter_sigma_ps: 200.0, dead_time_ns: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::range("efficiency", format!("{} not in [0,1]", self.efficiency)));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate_hz),
            ("jitter_sigma", self.jitter_sigma_ps),
            ("dead_time", self.dead_time_ns),
        ] {
            if !(v >= 0.0) {
                return Err(Error::range(name, format!("{v} must be ≥ 0")));
            }
        }
        Ok(())
    }
}

/// Recorder clock: linear rate error plus constant offset.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClockParams {
    pub offset_ns: f64,
    pub drift_ppm: f64,
}

/// Detector channels. `a`–`d` sit behind the Bell-state analyzer, `e`/`f`
/// are Alice's `+`/`−` outputs and `g`/`h` Bob's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Channel {
    A = 0,
    B = 1,
    C = 2,
    D = 3,
    E = 4,
    F = 5,
    G = 6,
    H = 7,
}

impl Channel {
    pub const ALL: [Channel; 8] =
        [Channel::A, Channel::B, Channel::C, Channel::D, Channel::E, Channel::F, Channel::G, Channel::H];
    pub const BSM: [Channel; 4] = [Channel::A, Channel::B, Channel::C, Channel::D];

    pub fn from_u8(v: u8) -> Option<Channel> {
        Channel::ALL.get(v as usize).copied()
    }

    pub fn is_bsm(self) -> bool {
        (self as u8) < 4
    }

    pub fn is_alice(self) -> bool {
        matches!(self, Channel::E | Channel::F)
    }

    pub fn is_bob(self) -> bool {
        matches!(self, Channel::G | Channel::H)
    }

    /// `true` for the `+` output of Alice or Bob.
    pub fn is_plus(self) -> bool {
        matches!(self, Channel::E | Channel::G)
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = (b'a' + *self as u8) as char;
        write!(f, "{c}")
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let b = s.as_bytes();
        if b.len() == 1 && (b'a'..=b'h').contains(&b[0]) {
            Ok(Channel::ALL[(b[0] - b'a') as usize])
        } else {
            Err(Error::range("channel", format!("`{s}` is not one of a..h")))
        }
    }
}

/// Where a click came from. Only available for simulated data.
///
/// Packed into one word: the top two bits hold the kind, photon clicks carry
/// the pulse index in bits 8..62 and the photon id in the low byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Origin(u64);

const ORIGIN_DARK: u64 = 1 << 62;
const ORIGIN_PHOTON: u64 = 2 << 62;
const ORIGIN_PULSE_MAX: u64 = (1 << 54) - 1;

impl Origin {
    pub const UNKNOWN: Origin = Origin(0);
    pub const DARK: Origin = Origin(ORIGIN_DARK);

    /// Photon role 0..3 plus `4 × pair index` within the pulse.
    pub fn photon(pulse: u64, photon: u8) -> Origin {
        assert!(pulse <= ORIGIN_PULSE_MAX, "pulse index {pulse} too large");
        Origin(ORIGIN_PHOTON | pulse << 8 | photon as u64)
    }

    pub fn is_dark(self) -> bool {
        self.0 >> 62 == 1
    }

    pub fn is_photon(self) -> bool {
        self.0 >> 62 == 2
    }

    pub fn pulse(self) -> Option<u64> {
        self.is_photon().then_some((self.0 >> 8) & ORIGIN_PULSE_MAX)
    }

    pub fn photon_id(self) -> Option<u8> {
        self.is_photon().then_some(self.0 as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionEvent {
    pub channel: Channel,
    pub tag: u64,
    pub origin: Origin,
}

/// Survival probability `10^(−loss/10)`.
pub fn transmission(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

pub fn transmit<R: Rng + ?Sized>(block_loss_db: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < transmission(block_loss_db.max(0.0))
}

/// Loss of one block: normal in dB around the mean, floored at 0 dB.
pub fn sample_block_loss<R: Rng + ?Sized>(ch: &ChannelParams, rng: &mut R) -> Result<f64> {
    ch.validate()?;
    if ch.scint_sigma_db == 0.0 {
        return Ok(ch.mean_loss_db);
    }
    let n = Normal::new(ch.mean_loss_db, ch.scint_sigma_db).map_err(|e| Error::range("scint_sigma_db", e.to_string()))?;
    Ok(n.sample(rng).max(0.0))
}

/// One detector channel with efficiency, jitter and dead time.
#[derive(Debug, Clone)]
pub struct Detector {
    params: DetectorParams,
    jitter: Option<Normal<f64>>,
    last_kept_ns: Option<f64>,
}

impl Detector {
    pub fn new(params: DetectorParams) -> Result<Self> {
        params.validate()?;
        let jitter = (params.jitter_sigma_ps > 0.0)
            .then(|| Normal::new(0.0, params.jitter_sigma_ps * 1e-3).expect("positive sigma"));
        Ok(Detector { params, jitter, last_kept_ns: None })
    }

    pub fn params(&self) -> &DetectorParams {
        &self.params
    }

    /// Registers a photon arriving at `t_ns`; returns the click time if it
    /// is detected. Arrivals must be presented in time order for dead time
    /// to be meaningful.
    pub fn detect<R: Rng + ?Sized>(&mut self, t_ns: f64, rng: &mut R) -> Option<f64> {
        if self.params.efficiency < 1.0 && rng.random::<f64>() >= self.params.efficiency {
            return None;
        }
        let t = match &self.jitter {
            Some(n) => t_ns + n.sample(rng),
            None => t_ns,
        };
        if self.params.dead_time_ns > 0.0 {
            if let Some(last) = self.last_kept_ns {
                if t - last < self.params.dead_time_ns {
                    return None;
                }
            }
        }
        self.last_kept_ns = Some(t);
        Some(t)
    }

    /// Click-time jitter only; efficiency and dead time not applied.
    pub fn jitter<R: Rng + ?Sized>(&self, t_ns: f64, rng: &mut R) -> f64 {
        match &self.jitter {
            Some(n) => t_ns + n.sample(rng),
            None => t_ns,
        }
    }
}

/// Homogeneous Poisson dark clicks over `[0, duration_s)`, in ns, sorted.
pub fn dark_events<R: Rng + ?Sized>(det: &DetectorParams, duration_s: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(duration_s > 0.0) {
        return Err(Error::range("duration", "must be > 0"));
    }
    det.validate()?;
    let mut out = Vec::new();
    if det.dark_rate_hz == 0.0 {
        return Ok(out);
    }
    let exp = Exp::new(det.dark_rate_hz * 1e-9).expect("positive rate");
    let end = duration_s * 1e9;
    let mut t = exp.sample(rng);
    while t < end {
        out.push(t);
        t += exp.sample(rng);
    }
    Ok(out)
}

/// Converts a true time to the recorder's tick count.
pub fn apply_clock(true_time_ns: f64, clk: &ClockParams) -> Result<u64> {
    if true_time_ns < 0.0 {
        return Err(Error::NegativeTime(true_time_ns));
    }
    let local = true_time_ns * (1.0 + clk.drift_ppm * 1e-6) + clk.offset_ns;
    if local < 0.0 {
        return Err(Error::NegativeTime(local));
    }
    Ok((local / TICK_NS).floor() as u64)
}

pub fn ticks_to_ns(tag: u64) -> f64 {
    tag as f64 * TICK_NS
}

/// Free-space propagation delay over the channel length.
pub fn propagation_delay(ch: &ChannelParams) -> f64 {
    ch.length_km * 1e3 / SPEED_OF_LIGHT * 1e9
}

pub fn fiber_delay(length_m: f64) -> f64 {
    length_m * FIBER_GROUP_INDEX / SPEED_OF_LIGHT * 1e9
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;

    #[test]
    fn transmission_values() {
        assert_eq!(transmission(0.0), 1.0);
        assert_abs_diff_eq!(transmission(32.0), 6.3096e-4, epsilon = 1e-7);
    }

    #[test]
    fn transmit_is_unbiased() {
        let mut r = rng::stream(7, rng::domain::TEST);
        for (loss, n) in [(0.0, 100_000u64), (10.0, 1_000_000), (32.0, 10_000_000)] {
            let q = transmission(loss);
            let k = (0..n).filter(|_| transmit(loss, &mut r)).count() as f64;
            let sd = (n as f64 * q * (1.0 - q)).sqrt().max(1e-9);
            assert!((k - n as f64 * q).abs() <= 3.0 * sd + 1e-9, "loss {loss}: {k} vs {}", n as f64 * q);
        }
    }

    #[test]
    fn block_loss() {
        let mut r = rng::stream(8, rng::domain::TEST);
        let ch = ChannelParams::default();
        assert_eq!(sample_block_loss(&ch, &mut r).unwrap(), 32.0);
        let sc = ChannelParams { scint_sigma_db: 3.0, ..ch };
        let mean: f64 = (0..10_000).map(|_| sample_block_loss(&sc, &mut r).unwrap()).sum::<f64>() / 1e4;
        assert!((mean - 32.0).abs() < 0.2, "{mean}");
        let bad = ChannelParams { scint_sigma_db: -1.0, ..ch };
        assert!(sample_block_loss(&bad, &mut r).is_err());
    }

    #[test]
    fn detector_rules() {
        let mut r = rng::stream(9, rng::domain::TEST);
        let ideal = DetectorParams { efficiency: 1.0, dark_rate_hz: 0.0, jitter_sigma_ps: 0.0, dead_time_ns: 0.0 };
        let mut d = Detector::new(ideal).unwrap();
        for t in [0.0, 1.5, 1.5, 99.0] {
            assert_eq!(d.detect(t, &mut r), Some(t));
        }
        let mut half = Detector::new(DetectorParams { efficiency: 0.5, ..ideal }).unwrap();
        let n = 1_000_000;
        let kept = (0..n).filter(|i| half.detect(*i as f64, &mut r).is_some()).count() as f64;
        assert!((kept - 5e5).abs() < 3.0 * (n as f64 * 0.25).sqrt());
        let mut dead = Detector::new(DetectorParams { dead_time_ns: 1000.0, ..ideal }).unwrap();
        assert!(dead.detect(0.0, &mut r).is_some());
        assert!(dead.detect(10.0, &mut r).is_none());
        assert!(dead.detect(1001.0, &mut r).is_some());
    }

    #[test]
    fn dark_counts() {
        let mut r = rng::stream(10, rng::domain::TEST);
        let zero = DetectorParams { dark_rate_hz: 0.0, ..DetectorParams::remote() };
        assert!(dark_events(&zero, 30.0, &mut r).unwrap().is_empty());
        let d = dark_events(&DetectorParams::remote(), 30.0, &mut r).unwrap();
        assert!((d.len() as f64 - 15000.0).abs() < 3.0 * 15000f64.sqrt());
        assert!(d.windows(2).all(|w| w[0] <= w[1]));
        assert!(dark_events(&zero, 0.0, &mut r).is_err());
    }

    #[test]
    fn dark_interarrival_exponential() {
        // one-sample KS against Exp(rate) at α = 0.01
        let mut r = rng::stream(11, rng::domain::TEST);
        let det = DetectorParams { dark_rate_hz: 1e4, ..DetectorParams::remote() };
        let t = dark_events(&det, 10.5, &mut r).unwrap();
        let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).take(100_000).collect();
        assert_eq!(gaps.len(), 100_000);
        gaps.sort_by(f64::total_cmp);
        let n = gaps.len() as f64;
        let rate = 1e4 * 1e-9;
        let dmax = gaps
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let cdf = 1.0 - (-rate * g).exp();
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(dmax < 1.628 / n.sqrt(), "KS D = {dmax}");
    }

    #[test]
    fn clock_values() {
        let z = ClockParams::default();
        assert_eq!(apply_clock(1.0, &z).unwrap(), 6);
        assert_eq!(apply_clock(0.0, &z).unwrap(), 0);
        let d = ClockParams { offset_ns: 0.0, drift_ppm: 1.0 };
        let shift = ticks_to_ns(apply_clock(1e9, &d).unwrap()) - ticks_to_ns(apply_clock(1e9, &z).unwrap());
        assert!((shift - 1000.0).abs() <= TICK_NS, "{shift}");
        assert!(apply_clock(-1.0, &z).is_err());
        assert!(apply_clock(10.0, &ClockParams { offset_ns: -20.0, drift_ppm: 0.0 }).is_err());
    }

    #[test]
    fn delays() {
        assert_abs_diff_eq!(fiber_delay(100.0), 500.35, epsilon = 0.01);
        let ch = ChannelParams::default();
        assert_abs_diff_eq!(propagation_delay(&ch) * 1e-3, 477.0, epsilon = 0.05);
        assert_eq!(fiber_delay(0.0), 0.0);
    }

    #[test]
    fn channel_names() {
        for c in Channel::ALL {
            assert_eq!(c.to_string().parse::<Channel>().unwrap(), c);
            assert_eq!(Channel::from_u8(c as u8), Some(c));
        }
        assert!("z".parse::<Channel>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn clock_monotone(a in 0.0f64..1e12, b in 0.0f64..1e12, drift in -100.0f64..100.0) {
                let clk = ClockParams { offset_ns: 1e6, drift_ppm: drift };
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(apply_clock(lo, &clk).unwrap() <= apply_clock(hi, &clk).unwrap());
            }

            #[test]
            fn dark_stream_deterministic(seed in any::<u64>()) {
                let det = DetectorParams::remote();
                let a = dark_events(&det, 0.5, &mut rng::stream(seed, 3)).unwrap();
                let b = dark_events(&det, 0.5, &mut rng::stream(seed, 3)).unwrap();
                prop_assert_eq!(a, b);
            }
        }
    }
}
