//! Discrete-event generation of the two recorders' tag streams.
//!
//! Only pulses that can matter are visited: pulse indices are skipped with
//! geometric gaps whose rate is the total probability of an "interesting"
//! emission (at least two pairs overall, plus in remote mode a lone pair
//! whose link photon survives the channel). Each block draws from its own
//! seeded stream, so blocks run in parallel with bit-identical results.

use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{Error, Result};
use crate::link::{
    apply_clock, dark_events, sample_block_loss, transmission, Channel, ClockParams, DetectionEvent, DetectorParams,
    Origin,
};
use crate::qstate::{bell_state, born_probabilities, single_plus_probability, BellKind, DensityOp, C64};
use crate::rng::{self, SimRng};
use crate::source::{pair_count_distribution, MAX_PAIRS};
use crate::tagstream::{Recorder, Setting, TagStream};

/// True time of the first pulse, ns. Leaves room for negative clock offsets.
pub const START_NS: f64 = 1e6;

/// Photon roles within a pair.
pub mod role {
    pub const ALICE: u8 = 0;
    pub const BSM1: u8 = 1;
    pub const BSM2: u8 = 2;
    pub const BOB: u8 = 3;
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// La Palma recorder; in local mode it also holds Bob's channels.
    pub local: TagStream,
    /// Tenerife recorder (remote mode only).
    pub remote: Option<TagStream>,
    pub block_loss_db: Vec<f64>,
    /// Pulses actually visited by the gap sampler.
    pub visited_pulses: u64,
    /// Pulse slots covered by the run.
    pub total_pulses: u64,
}

impl SimOutput {
    /// Local-clock time of the start of block 0, ns.
    pub fn origin_ns(cfg: &ExperimentConfig) -> f64 {
        START_NS * (1.0 + cfg.local_clock.drift_ppm * 1e-6) + cfg.local_clock.offset_ns
    }
}

#[derive(Debug, Clone, Copy)]
struct Category {
    n1: u8,
    n2: u8,
    /// Bob's photon is known to survive the channel.
    forced: bool,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    dist: [Vec<f64>; 2],
    m: f64,
    pulses_per_block: u64,
    pulse_ns: f64,
    alice_delay: f64,
    bob_delay: f64,
    bob_det: DetectorParams,
}

struct BlockOut {
    local: Vec<DetectionEvent>,
    remote: Vec<DetectionEvent>,
    loss_db: f64,
    visited: u64,
}

/// Outcome of a partner photon before its own measurement.
#[derive(Debug, Clone, Copy)]
enum Partner {
    /// Its BSM twin was not detected.
    Mixed,
    /// Projected onto a definite H (`false`) or V (`true`) polarization.
    Pol(bool),
    /// Fixed by a joint sample from the swapped state.
    Outcome(bool),
}

struct Click {
    t: f64,
    ch: Channel,
    origin: Origin,
}

struct Jitter(Option<Normal<f64>>);

impl Jitter {
    fn new(d: &DetectorParams) -> Self {
        Jitter((d.jitter_sigma_ps > 0.0).then(|| Normal::new(0.0, d.jitter_sigma_ps * 1e-3).expect("positive")))
    }

    fn apply(&self, t: f64, r: &mut SimRng) -> f64 {
        match &self.0 {
            Some(n) => t + n.sample(r),
            None => t,
        }
    }
}

/// Per-block state: analyzer settings, detector response, dead time.
struct BlockState {
    joint: [[f64; 4]; 4],
    plus_a: [f64; 2],
    plus_b: [f64; 2],
    jit_local: Jitter,
    jit_bob: Jitter,
    dead_local: f64,
    dead_bob: f64,
    last: [f64; 8],
}

fn pol_vec(v: bool) -> [C64; 2] {
    if v {
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)]
    } else {
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    }
}

fn joint_tables(s: Setting) -> Result<[[f64; 4]; 4]> {
    let mut out = [[0.0; 4]; 4];
    for (i, k) in BellKind::ALL.iter().enumerate() {
        let rho = DensityOp::from_pure(&bell_state(*k, (0, 3))?);
        out[i] = born_probabilities(&rho, s.basis_a, s.basis_b)?;
    }
    Ok(out)
}

fn draw4(p: &[f64; 4], r: &mut SimRng) -> usize {
    let u: f64 = r.random();
    let mut acc = 0.0;
    for (i, q) in p.iter().enumerate() {
        acc += q;
        if u < acc {
            return i;
        }
    }
    3
}

const BSM_CH: [Channel; 4] = [Channel::A, Channel::B, Channel::C, Channel::D];

/// Analyzer output port `0/1` and polarization `H/V` to detector.
fn bsm_channel(port: bool, v: bool) -> Channel {
    BSM_CH[(port as usize) * 2 + v as usize]
}

/// Two detectors fired by an interfering pair projected onto `kind`.
fn bell_clicks(kind: BellKind, r: &mut SimRng) -> (Channel, Channel) {
    use Channel::*;
    let flip: bool = r.random();
    match kind {
        BellKind::PsiMinus => if flip { (A, D) } else { (B, C) },
        BellKind::PsiPlus => if flip { (A, B) } else { (C, D) },
        BellKind::PhiPlus | BellKind::PhiMinus => {
            let c = BSM_CH[r.random_range(0..4)];
            (c, c)
        }
    }
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let srcs = cfg.resolved_sources()?;
        let pulses_per_block = (cfg.rep_rate_hz * cfg.channel.block_seconds).round() as u64;
        if pulses_per_block == 0 {
            return Err(Error::range("block_seconds", "block shorter than one pulse"));
        }
        Ok(Ctx {
            cfg,
            dist: [pair_count_distribution(&srcs[0], MAX_PAIRS)?, pair_count_distribution(&srcs[1], MAX_PAIRS)?],
            m: cfg.overlap(),
            pulses_per_block,
            pulse_ns: 1e9 / cfg.rep_rate_hz,
            alice_delay: cfg.alice_delay_ns(),
            bob_delay: cfg.bob_delay_ns(),
            bob_det: cfg.bob_detector(),
        })
    }

    fn remote(&self) -> bool {
        self.cfg.mode == Mode::Remote
    }

    fn categories(&self, t_link: f64) -> (Vec<Category>, Vec<f64>) {
        let mut cats = Vec::new();
        let mut cum = Vec::new();
        let mut acc = 0.0;
        for n1 in 0..=MAX_PAIRS {
            for n2 in 0..=MAX_PAIRS {
                if n1 + n2 >= 2 {
                    let w = self.dist[0][n1] * self.dist[1][n2];
                    if w > 0.0 {
                        acc += w;
                        cats.push(Category { n1: n1 as u8, n2: n2 as u8, forced: false });
                        cum.push(acc);
                    }
                }
            }
        }
        if self.remote() {
            let w = self.dist[0][0] * self.dist[1][1] * t_link;
            if w > 0.0 {
                acc += w;
                cats.push(Category { n1: 0, n2: 1, forced: true });
                cum.push(acc);
            }
        }
        (cats, cum)
    }

    fn block(&self, k: usize) -> Result<BlockOut> {
        let cfg = self.cfg;
        let mut r = rng::stream(cfg.seed, rng::domain::BLOCK + k as u64);
        let loss_db = if self.remote() { sample_block_loss(&cfg.channel, &mut r)? } else { 0.0 };
        let t_link = if self.remote() { transmission(loss_db) } else { 1.0 };
        let setting = cfg.schedule.schedule().for_block(k);
        let mut st = BlockState {
            joint: joint_tables(setting)?,
            plus_a: [
                single_plus_probability(pol_vec(false), setting.basis_a),
                single_plus_probability(pol_vec(true), setting.basis_a),
            ],
            plus_b: [
                single_plus_probability(pol_vec(false), setting.basis_b),
                single_plus_probability(pol_vec(true), setting.basis_b),
            ],
            jit_local: Jitter::new(&cfg.local_detector),
            jit_bob: Jitter::new(&self.bob_det),
            dead_local: cfg.local_detector.dead_time_ns,
            dead_bob: self.bob_det.dead_time_ns,
            last: [f64::NEG_INFINITY; 8],
        };

        let first = k as u64 * self.pulses_per_block;
        let end = first + self.pulses_per_block;
        let t_block = START_NS + first as f64 * self.pulse_ns;
        let mut clicks: Vec<Click> = Vec::new();
        let mut bob_clicks: Vec<Click> = Vec::new();

        let (cats, cum) = self.categories(t_link);
        let q = cum.last().copied().unwrap_or(0.0);
        let mut visited = 0u64;
        if q > 0.0 {
            let geo = Geometric::new(q.min(1.0)).map_err(|e| Error::range("gap sampler", e.to_string()))?;
            let mut idx = first.saturating_add(geo.sample(&mut r));
            while idx < end {
                let u = r.random::<f64>() * q;
                let c = cats[cum.partition_point(|&x| x <= u).min(cats.len() - 1)];
                self.pulse(idx, c, t_link, &mut st, &mut r, &mut clicks, &mut bob_clicks);
                visited += 1;
                idx = idx.saturating_add(1).saturating_add(geo.sample(&mut r));
            }
        }

        // dark counts over the block
        let dur = self.pulses_per_block as f64 * self.pulse_ns * 1e-9;
        let local_dark_channels: &[Channel] = if self.remote() { &Channel::ALL[..6] } else { &Channel::ALL };
        for &ch in local_dark_channels {
            for t in dark_events(&cfg.local_detector, dur, &mut r)? {
                clicks.push(Click { t: t_block + t, ch, origin: Origin::DARK });
            }
        }
        if self.remote() {
            for ch in [Channel::G, Channel::H] {
                for t in dark_events(&self.bob_det, dur, &mut r)? {
                    bob_clicks.push(Click { t: t_block + t, ch, origin: Origin::DARK });
                }
            }
        }

        let local = stamp(clicks, &cfg.local_clock)?;
        let remote = stamp(bob_clicks, &cfg.remote_clock)?;
        Ok(BlockOut { local, remote, loss_db, visited })
    }

    #[allow(clippy::too_many_arguments)]
    fn pulse(
        &self,
        idx: u64,
        c: Category,
        t_link: f64,
        st: &mut BlockState,
        r: &mut SimRng,
        clicks: &mut Vec<Click>,
        bob_clicks: &mut Vec<Click>,
    ) {
        let eta = self.cfg.local_detector.efficiency;
        let (n1, n2) = (c.n1 as usize, c.n2 as usize);
        let mut alice = [Partner::Mixed; MAX_PAIRS];
        let mut bob = [Partner::Mixed; MAX_PAIRS];
        let mut det1 = [false; MAX_PAIRS];
        let mut det2 = [false; MAX_PAIRS];
        for d in det1.iter_mut().take(n1) {
            *d = r.random::<f64>() < eta;
        }
        for d in det2.iter_mut().take(n2) {
            *d = r.random::<f64>() < eta;
        }
        let k1 = det1.iter().filter(|&&d| d).count();
        let k2 = det2.iter().filter(|&&d| d).count();
        let t0 = START_NS + idx as f64 * self.pulse_ns;
        let (dead_local, dead_bob) = (st.dead_local, st.dead_bob);
        let mut bsm: [Option<(Channel, u8)>; 2 * MAX_PAIRS] = [None; 2 * MAX_PAIRS];
        let mut nb = 0;

        if k1 == 1 && k2 == 1 && r.random::<f64>() < self.m {
            let i = det1.iter().position(|&d| d).expect("one");
            let j = det2.iter().position(|&d| d).expect("one");
            let kind_idx = r.random_range(0..4);
            let (x, y) = bell_clicks(BellKind::ALL[kind_idx], r);
            bsm[0] = Some((x, role::BSM1 + 4 * i as u8));
            bsm[1] = Some((y, role::BSM2 + 4 * j as u8));
            nb = 2;
            let o = draw4(&st.joint[kind_idx], r);
            alice[i] = Partner::Outcome(o < 2);
            bob[j] = Partner::Outcome(o % 2 == 0);
        } else {
            for (pairs, det, partners, role_id) in
                [(n1, &det1, &mut alice, role::BSM1), (n2, &det2, &mut bob, role::BSM2)]
            {
                for p in 0..pairs {
                    if det[p] {
                        let v: bool = r.random();
                        let port: bool = r.random();
                        bsm[nb] = Some((bsm_channel(port, v), role_id + 4 * p as u8));
                        nb += 1;
                        partners[p] = Partner::Pol(!v);
                    }
                }
            }
        }

        // detectors cannot resolve photon number: one click per channel
        let mut fired = [false; 8];
        for (ch, ph) in bsm.iter().take(nb).flatten() {
            if !fired[*ch as usize] {
                fired[*ch as usize] = true;
                let t = st.jit_local.apply(t0, r);
                push_click(clicks, st, dead_local, t, *ch, Origin::photon(idx, *ph));
            }
        }
        for (p, partner) in alice.iter().enumerate().take(n1) {
            if r.random::<f64>() < eta {
                let plus = resolve(*partner, st.plus_a, r);
                let ch = if plus { Channel::E } else { Channel::F };
                if !fired[ch as usize] {
                    fired[ch as usize] = true;
                    let t = st.jit_local.apply(t0 + self.alice_delay, r);
                    push_click(clicks, st, dead_local, t, ch, Origin::photon(idx, role::ALICE + 4 * p as u8));
                }
            }
        }
        let eta_b = self.bob_det.efficiency;
        for (p, partner) in bob.iter().enumerate().take(n2) {
            let survives = c.forced || t_link >= 1.0 || r.random::<f64>() < t_link;
            if survives && r.random::<f64>() < eta_b {
                let plus = resolve(*partner, st.plus_b, r);
                let ch = if plus { Channel::G } else { Channel::H };
                if !fired[ch as usize] {
                    fired[ch as usize] = true;
                    let t = st.jit_bob.apply(t0 + self.bob_delay, r);
                    let target = if self.remote() { &mut *bob_clicks } else { &mut *clicks };
                    push_click(target, st, dead_bob, t, ch, Origin::photon(idx, role::BOB + 4 * p as u8));
                }
            }
        }
    }
}

fn resolve(p: Partner, plus: [f64; 2], r: &mut SimRng) -> bool {
    match p {
        Partner::Outcome(b) => b,
        Partner::Pol(v) => r.random::<f64>() < plus[v as usize],
        Partner::Mixed => r.random(),
    }
}

fn push_click(out: &mut Vec<Click>, st: &mut BlockState, dead: f64, t: f64, ch: Channel, origin: Origin) {
    let last = &mut st.last[ch as usize];
    if dead > 0.0 && t - *last < dead {
        return;
    }
    *last = t;
    out.push(Click { t, ch, origin });
}

fn stamp(clicks: Vec<Click>, clk: &ClockParams) -> Result<Vec<DetectionEvent>> {
    let mut out = clicks
        .into_iter()
        .map(|c| Ok(DetectionEvent { channel: c.ch, tag: apply_clock(c.t, clk)?, origin: c.origin }))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|e| e.tag);
    Ok(out)
}

fn concat(blocks: Vec<Vec<DetectionEvent>>) -> Vec<DetectionEvent> {
    let n = blocks.iter().map(Vec::len).sum();
    let mut out = Vec::with_capacity(n);
    for b in blocks {
        out.extend(b);
    }
    // delayed clicks can spill past the next block's first tags
    out.sort_by_key(|e| e.tag);
    out
}

/// Generates both recorders' streams for `cfg`.
pub fn simulate(cfg: &ExperimentConfig) -> Result<SimOutput> {
    let ctx = Ctx::new(cfg)?;
    let n = cfg.n_blocks();
    let blocks: Vec<BlockOut> = (0..n).into_par_iter().map(|k| ctx.block(k)).collect::<Result<_>>()?;
    let block_loss_db = blocks.iter().map(|b| b.loss_db).collect();
    let visited_pulses = blocks.iter().map(|b| b.visited).sum();
    let (local, remote): (Vec<_>, Vec<_>) = blocks.into_iter().map(|b| (b.local, b.remote)).unzip();
    let local = TagStream::new(Recorder::LaPalma, concat(local), cfg.channel.block_seconds)?;
    let remote = match cfg.mode {
        Mode::Remote => Some(TagStream::new(Recorder::Tenerife, concat(remote), cfg.channel.block_seconds)?),
        Mode::Local => None,
    };
    Ok(SimOutput {
        local,
        remote,
        block_loss_db,
        visited_pulses,
        total_pulses: ctx.pulses_per_block * n as u64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link::DetectorParams;

    fn quiet(mode: Mode) -> ExperimentConfig {
        let mut c = ExperimentConfig::with_mode(mode);
        let d = DetectorParams { efficiency: 1.0, dark_rate_hz: 0.0, jitter_sigma_ps: 0.0, dead_time_ns: 0.0 };
        c.local_detector = d;
        c.remote_detector = d;
        c.duration_s = 60.0;
        c
    }

    #[test]
    fn deterministic_for_seed() {
        let mut c = quiet(Mode::Local);
        c.local_detector.dark_rate_hz = 100.0;
        c.local_detector.jitter_sigma_ps = 200.0;
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a.local, b.local);
        c.seed += 1;
        assert_ne!(simulate(&c).unwrap().local, a.local);
    }

    #[test]
    fn gap_sampler_visits_few_pulses() {
        let c = quiet(Mode::Remote);
        let out = simulate(&c).unwrap();
        assert_eq!(out.total_pulses, 4_800_000_000);
        // about 2p² + p·T of all slots
        let p = 1.625e-3;
        let expect = out.total_pulses as f64 * (2.0 * p * p + p * 10f64.powf(-3.2));
        let v = out.visited_pulses as f64;
        assert!((v - expect).abs() < 5.0 * expect.sqrt() + 0.01 * expect, "{v} vs {expect}");
        let remote = out.remote.unwrap();
        assert!(remote.events.iter().all(|e| e.channel.is_bob()));
        assert!(out.local.events.iter().all(|e| !e.channel.is_bob()));
    }

    #[test]
    fn zero_rate_yields_only_darks() {
        let mut c = quiet(Mode::Local);
        c.two_fold_rate_hz = Some(0.0);
        c.local_detector.dark_rate_hz = 50.0;
        let out = simulate(&c).unwrap();
        assert_eq!(out.visited_pulses, 0);
        assert!(out.local.events.iter().all(|e| e.origin.is_dark()));
        let n = out.local.events.len() as f64;
        let expect = 50.0 * 8.0 * 60.0;
        assert!((n - expect).abs() < 4.0 * expect.sqrt());
    }

    #[test]
    fn delays_follow_geometry() {
        let c = quiet(Mode::Remote);
        let out = simulate(&c).unwrap();
        let remote = out.remote.unwrap();
        let local_bsm: std::collections::HashMap<u64, u64> = out
            .local
            .events
            .iter()
            .filter(|e| e.channel.is_bsm())
            .filter_map(|e| e.origin.pulse().map(|p| (p, e.tag)))
            .collect();
        let mut checked = 0;
        for e in &remote.events {
            if let Some(t) = e.origin.pulse().and_then(|p| local_bsm.get(&p)) {
                let d = (e.tag as f64 - *t as f64) * crate::link::TICK_NS;
                assert!((d - c.bob_delay_ns()).abs() < 1.0, "{d}");
                checked += 1;
            }
        }
        assert!(checked > 0);
        let alice = out.local.events.iter().find(|e| e.channel.is_alice()).unwrap();
        let p = alice.origin.pulse().unwrap();
        if let Some(t) = local_bsm.get(&p) {
            let d = (alice.tag as f64 - *t as f64) * crate::link::TICK_NS;
            assert!((d - c.alice_delay_ns()).abs() < 1.0);
        }
    }
}
