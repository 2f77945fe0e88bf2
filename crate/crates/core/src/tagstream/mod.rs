//! Time-tag processing: Bell-state-measurement click logic, local and remote
//! coincidences, and cross-correlation synchronization of the two recorders.

mod bsm;
mod fourfold;
mod sync;

pub use bsm::{find_bsm, threefold, BsmKind, BsmRecord, ThreeFold};
pub use fourfold::{chsh_angles, fourfold, sideband_accidentals, Schedule, Setting, SwapEvent, SIDEBAND_NS};
pub use sync::{
    drift_correct, search_line, synchronize, xcorr_offset, Line, SearchResult, SyncParams, SyncSolution,
    XcorrPeak,
};

use crate::error::{Error, Result};
use crate::link::{Channel, DetectionEvent, TICK_NS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recorder {
    LaPalma,
    Tenerife,
}

impl Recorder {
    pub fn owns(self, ch: Channel) -> bool {
        match self {
            Recorder::LaPalma => !ch.is_bob(),
            Recorder::Tenerife => ch.is_bob(),
        }
    }

    pub fn id(self) -> u8 {
        match self {
            Recorder::LaPalma => 0,
            Recorder::Tenerife => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Recorder::LaPalma),
            1 => Some(Recorder::Tenerife),
            _ => None,
        }
    }
}

/// Time-sorted clicks from one recorder.
#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub recorder: Recorder,
    pub events: Vec<DetectionEvent>,
    pub block_seconds: f64,
}

impl TagStream {
    /// Validates ordering. Bob's channels are accepted on La Palma only when
    /// `allow_foreign` is set (local-mode runs record everything in one unit).
    pub fn new(recorder: Recorder, events: Vec<DetectionEvent>, block_seconds: f64) -> Result<Self> {
        check_sorted(&events)?;
        Ok(TagStream { recorder, events, block_seconds })
    }

    pub fn check_channels(&self) -> Result<()> {
        match self.events.iter().position(|e| !self.recorder.owns(e.channel)) {
            Some(i) => Err(Error::TagFormat(format!("event {i} on channel {} not owned by recorder", self.events[i].channel))),
            None => Ok(()),
        }
    }

    pub fn times_ns(&self, pred: impl Fn(Channel) -> bool) -> Vec<f64> {
        self.events.iter().filter(|e| pred(e.channel)).map(|e| e.tag as f64 * TICK_NS).collect()
    }
}

pub fn check_sorted(events: &[DetectionEvent]) -> Result<()> {
    match events.windows(2).position(|w| w[1].tag < w[0].tag) {
        Some(i) => Err(Error::Unsorted(i + 1)),
        None => Ok(()),
    }
}
