use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::link::{DetectionEvent, TICK_NS};
use crate::qstate::MeasBasis;

use super::{BsmKind, ThreeFold};

/// Sideband offsets used for the accidental estimate, ns.
pub const SIDEBAND_NS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setting {
    pub basis_a: MeasBasis,
    pub basis_b: MeasBasis,
}

/// Round-robin analyzer settings, one per block.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub settings: Vec<Setting>,
}

impl Schedule {
    pub fn new(settings: Vec<Setting>) -> Result<Self> {
        if settings.is_empty() {
            return Err(Error::range("schedule", "needs at least one setting"));
        }
        Ok(Schedule { settings })
    }

    /// Both parties in the same basis, cycling HV, PM, RL.
    pub fn witness() -> Self {
        let settings = MeasBasis::MUB.iter().map(|&b| Setting { basis_a: b, basis_b: b }).collect();
        Schedule { settings }
    }

    /// The four CHSH pairs `(a,b), (a,b'), (a',b), (a',b')`.
    pub fn chsh() -> Self {
        let [a, a2, b, b2] = chsh_angles();
        let settings = [(a, b), (a, b2), (a2, b), (a2, b2)]
            .into_iter()
            .map(|(x, y)| Setting { basis_a: MeasBasis::Linear(x), basis_b: MeasBasis::Linear(y) })
            .collect();
        Schedule { settings }
    }

    pub fn for_block(&self, block: usize) -> Setting {
        self.settings[block % self.settings.len()]
    }
}

/// `[a, a', b, b']` in polarization-plane radians.
pub fn chsh_angles() -> [f64; 4] {
    [0.0, PI / 4.0, PI / 8.0, 3.0 * PI / 8.0]
}

/// One recovered entanglement-swapping event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapEvent {
    pub kind: BsmKind,
    pub alice_plus: bool,
    pub bob_plus: bool,
    pub setting: Setting,
    pub block: usize,
    /// Bob's click minus its expected time, ns.
    pub residual_ns: f64,
    pub tag: u64,
    /// Common pulse of all four clicks, when known.
    pub pulse: Option<u64>,
}

fn match_bob(
    threefolds: &[ThreeFold],
    bob: &[DetectionEvent],
    window_ns: f64,
    delay_ns: f64,
    mut emit: impl FnMut(&ThreeFold, &DetectionEvent, f64),
) {
    let bob: Vec<&DetectionEvent> = bob.iter().filter(|e| e.channel.is_bob()).collect();
    let half = window_ns / 2.0;
    let mut used = vec![false; bob.len()];
    let mut start = 0;
    for tf in threefolds {
        let t = tf.tag as f64 * TICK_NS + delay_ns;
        while start < bob.len() && (bob[start].tag as f64 * TICK_NS) < t - half {
            start += 1;
        }
        let mut k = start;
        while k < bob.len() {
            let r = bob[k].tag as f64 * TICK_NS - t;
            if r > half {
                break;
            }
            if !used[k] {
                used[k] = true;
                emit(tf, bob[k], r);
                break;
            }
            k += 1;
        }
    }
}

/// Joins local 3-folds with Bob's clicks expected `delay_ns` after the
/// analyzer click. Block indices count `block_ns` spans from `origin_ns` on
/// the local time axis and select the active setting.
pub fn fourfold(
    threefolds: &[ThreeFold],
    bob: &[DetectionEvent],
    window_ns: f64,
    delay_ns: f64,
    schedule: &Schedule,
    origin_ns: f64,
    block_ns: f64,
) -> Vec<SwapEvent> {
    let mut out = Vec::new();
    match_bob(threefolds, bob, window_ns, delay_ns, |tf, b, r| {
        let block = ((tf.tag as f64 * TICK_NS - origin_ns) / block_ns).floor().max(0.0) as usize;
        let pulse = match (tf.pulse, b.origin.pulse()) {
            (Some(x), Some(y)) if x == y => Some(x),
            _ => None,
        };
        out.push(SwapEvent {
            kind: tf.kind,
            alice_plus: tf.alice.is_plus(),
            bob_plus: b.channel.is_plus(),
            setting: schedule.for_block(block),
            block,
            residual_ns: r,
            tag: tf.tag,
            pulse,
        });
    });
    out
}

/// Coincidences found in windows displaced by `±SIDEBAND_NS`, averaged.
/// Estimates the accidental content of the central window.
pub fn sideband_accidentals(threefolds: &[ThreeFold], bob: &[DetectionEvent], window_ns: f64, delay_ns: f64) -> f64 {
    let count = |shift: f64| {
        let mut n = 0usize;
        match_bob(threefolds, bob, window_ns, delay_ns + shift, |_, _, _| n += 1);
        n as f64
    };
    (count(-SIDEBAND_NS) + count(SIDEBAND_NS)) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::{Channel, Origin};
    use crate::rng;
    use rand::Rng;

    fn tf(ns: f64, pulse: Option<u64>) -> ThreeFold {
        let tag = (ns / TICK_NS).round() as u64;
        ThreeFold { tag, kind: BsmKind::PsiMinus12, alice: Channel::E, alice_tag: tag, pulse }
    }

    fn bob(ch: Channel, ns: f64, origin: Origin) -> DetectionEvent {
        DetectionEvent { channel: ch, tag: (ns / TICK_NS).round() as u64, origin }
    }

    #[test]
    fn single_true_pair() {
        let o = Origin::photon(7, 3);
        let ev = fourfold(&[tf(1000.0, Some(7))], &[bob(Channel::H, 1251.0, o)], 5.0, 250.0, &Schedule::witness(), 0.0, 1e12);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].pulse, Some(7));
        assert!(ev[0].alice_plus && !ev[0].bob_plus);
        assert!(ev[0].residual_ns.abs() <= 2.5);
        assert_eq!(ev[0].setting.basis_a, MeasBasis::HV);
    }

    #[test]
    fn outside_window_and_reuse() {
        let s = Schedule::witness();
        assert!(fourfold(&[tf(0.0, None)], &[bob(Channel::G, 3.0, Origin::UNKNOWN)], 5.0, 0.0, &s, 0.0, 1e12).is_empty());
        let ev = fourfold(&[tf(0.0, None), tf(0.5, None)], &[bob(Channel::G, 1.0, Origin::UNKNOWN)], 5.0, 0.0, &s, 0.0, 1e12);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].tag, tf(0.0, None).tag);
    }

    #[test]
    fn schedule_round_robin() {
        let s = Schedule::witness();
        assert_eq!(s.for_block(0).basis_a, MeasBasis::HV);
        assert_eq!(s.for_block(4).basis_b, MeasBasis::PM);
        assert_eq!(s.for_block(5).basis_a, MeasBasis::RL);
        let ev = fourfold(&[tf(2500.0, None)], &[bob(Channel::G, 2500.0, Origin::UNKNOWN)], 5.0, 0.0, &s, 0.0, 1000.0);
        assert_eq!(ev[0].block, 2);
        assert_eq!(ev[0].setting.basis_a, MeasBasis::RL);
        assert_eq!(Schedule::chsh().settings.len(), 4);
    }

    #[test]
    fn sideband_matches_accidental_formula() {
        // r1 r2 τ T: 3-folds at 2 kHz, Bob darks at 500 Hz, 5 ns, 100 s
        let mut r = rng::stream(31, rng::domain::TEST);
        let mut times = |rate: f64| {
            let mut v = Vec::new();
            let mut t = 0.0;
            loop {
                t += -(1.0 - r.random::<f64>()).ln() / (rate * 1e-9);
                if t > 100e9 {
                    break v;
                }
                v.push(t);
            }
        };
        let tfs: Vec<ThreeFold> = times(2000.0).into_iter().map(|t| tf(t, None)).collect();
        let darks: Vec<DetectionEvent> = times(500.0).into_iter().map(|t| bob(Channel::G, t, Origin::DARK)).collect();
        let expect = 2000.0 * 500.0 * 5e-9 * 100.0;
        let side = sideband_accidentals(&tfs, &darks, 5.0, 0.0);
        // each sideband is Poisson; the mean of two has variance expect/2
        assert!((side - expect).abs() < 3.0 * (expect / 2.0).sqrt(), "{side} vs {expect}");
        let central = fourfold(&tfs, &darks, 5.0, 0.0, &Schedule::witness(), 0.0, 1e12).len() as f64;
        assert!((central - side).abs() < 3.0 * (expect * 1.5).sqrt());
    }
}
