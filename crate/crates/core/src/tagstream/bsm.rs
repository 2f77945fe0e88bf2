use crate::error::Result;
use crate::link::{Channel, DetectionEvent, Origin, TICK_NS};
use crate::qstate::BellKind;

use super::{check_sorted, TagStream};

/// The two Bell states a linear-optics analyzer can identify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BsmKind {
    PsiMinus12,
    PsiPlus12,
}

impl BsmKind {
    pub fn bell(self) -> BellKind {
        match self {
            BsmKind::PsiMinus12 => BellKind::PsiMinus,
            BsmKind::PsiPlus12 => BellKind::PsiPlus,
        }
    }

    /// Valid two-detector patterns: `(a&d)∨(b&c)` → Ψ⁻, `(a&b)∨(c&d)` → Ψ⁺.
    pub fn from_pattern(x: Channel, y: Channel) -> Option<BsmKind> {
        use Channel::*;
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        match (lo, hi) {
            (A, D) | (B, C) => Some(BsmKind::PsiMinus12),
            (A, B) | (C, D) => Some(BsmKind::PsiPlus12),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BsmRecord {
    pub tag: u64,
    pub kind: BsmKind,
    pub channels: (Channel, Channel),
    /// Common source pulse of both clicks, when known.
    pub pulse: Option<u64>,
}

fn common_pulse(a: Origin, b: Origin) -> Option<u64> {
    match (a.pulse(), b.pulse()) {
        (Some(x), Some(y)) if x == y => Some(x),
        _ => None,
    }
}

/// Pairs analyzer clicks into Bell-state records.
///
/// Clicks are taken earliest first. All unused analyzer clicks within
/// `window_ns` of the earliest one form a group; the group yields a record
/// only if it spans exactly two detectors in a valid pattern. Every click in
/// a group is consumed whether or not a record results.
pub fn find_bsm(stream: &TagStream, window_ns: f64) -> Result<Vec<BsmRecord>> {
    check_sorted(&stream.events)?;
    let clicks: Vec<&DetectionEvent> = stream.events.iter().filter(|e| e.channel.is_bsm()).collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < clicks.len() {
        let first = clicks[i];
        let mut j = i + 1;
        while j < clicks.len() && (clicks[j].tag - first.tag) as f64 * TICK_NS <= window_ns {
            j += 1;
        }
        let group = &clicks[i..j];
        if group.len() >= 2 {
            let mut chans: Vec<Channel> = group.iter().map(|e| e.channel).collect();
            chans.sort_unstable();
            chans.dedup();
            if chans.len() == 2 {
                if let Some(kind) = BsmKind::from_pattern(chans[0], chans[1]) {
                    let second = group.iter().find(|e| e.channel != first.channel).expect("two channels");
                    out.push(BsmRecord {
                        tag: first.tag,
                        kind,
                        channels: (first.channel, second.channel),
                        pulse: if group.len() == 2 { common_pulse(first.origin, second.origin) } else { None },
                    });
                }
            }
        }
        i = j;
    }
    Ok(out)
}

/// A Bell-state record coincident with one of Alice's clicks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ThreeFold {
    pub tag: u64,
    pub kind: BsmKind,
    pub alice: Channel,
    pub alice_tag: u64,
    pub pulse: Option<u64>,
}

/// Joins Bell-state records with Alice's clicks expected `alice_delay_ns`
/// later, accepting `|Δ − delay| ≤ window/2`. Each click joins at most once;
/// records are served in time order and take the earliest eligible click.
pub fn threefold(bsm: &[BsmRecord], alice: &[DetectionEvent], window_ns: f64, alice_delay_ns: f64) -> Vec<ThreeFold> {
    let alice: Vec<&DetectionEvent> = alice.iter().filter(|e| e.channel.is_alice()).collect();
    let half = window_ns / 2.0;
    let mut used = vec![false; alice.len()];
    let mut start = 0;
    let mut out = Vec::new();
    for rec in bsm {
        let t = rec.tag as f64 * TICK_NS + alice_delay_ns;
        while start < alice.len() && (alice[start].tag as f64 * TICK_NS) < t - half {
            start += 1;
        }
        let mut k = start;
        while k < alice.len() && (alice[k].tag as f64 * TICK_NS) <= t + half {
            if !used[k] {
                used[k] = true;
                let a = alice[k];
                let pulse = match (rec.pulse, a.origin.pulse()) {
                    (Some(x), Some(y)) if x == y => Some(x),
                    _ => None,
                };
                out.push(ThreeFold { tag: rec.tag, kind: rec.kind, alice: a.channel, alice_tag: a.tag, pulse });
                break;
            }
            k += 1;
        }
    }
    out
}
