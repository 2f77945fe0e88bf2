//! Fast invariant checks run by `swapsim selftest`.

use crate::config::{ExperimentConfig, Mode};
use crate::error::Result;
use crate::link::{Channel, DetectionEvent, DetectorParams, Origin};
use crate::pipeline::run;
use crate::qstate::{
    bell_state, born_probabilities, bsm_project, correlation, tensor, werner, BellKind, MeasBasis, PureState, C64,
};
use crate::source::{calibrate_pair_prob, hom_overlap, pair_count_distribution, two_fold_rate, HomParams, SourceParams, StatModel};
use crate::stats::{chsh, witness};
use crate::sweep::{classify, Region};
use crate::tagfile::{decode, encode};
use crate::tagstream::{chsh_angles, search_line, Line, Recorder, TagStream};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: e.to_string() },
    }
}

fn input_state() -> Result<PureState> {
    let s = tensor(&bell_state(BellKind::PsiMinus, (0, 1))?, &bell_state(BellKind::PsiMinus, (2, 3))?)?;
    s.permuted(&[0, 1, 2, 3])
}

fn swap_identity() -> Result<(bool, String)> {
    let terms = [(0.5, BellKind::PsiPlus), (-0.5, BellKind::PsiMinus), (-0.5, BellKind::PhiPlus), (0.5, BellKind::PhiMinus)];
    let mut acc = vec![C64::default(); 16];
    for (w, k) in terms {
        let t = tensor(&bell_state(k, (0, 3))?, &bell_state(k, (1, 2))?)?.permuted(&[0, 1, 2, 3])?;
        for (a, b) in acc.iter_mut().zip(t.amplitudes()) {
            *a += b * w;
        }
    }
    let err = PureState::new(vec![0, 1, 2, 3], acc)?.distance(&input_state()?)?;
    Ok((err < 1e-12, format!("error {err:.2e}")))
}

fn bsm_branches() -> Result<(bool, String)> {
    let s = input_state()?;
    let mut worst: f64 = 0.0;
    for k in BellKind::ALL {
        let (p, cond) = bsm_project(&s, k)?;
        worst = worst.max((p - 0.25).abs()).max(1.0 - cond.fidelity(&bell_state(k, (0, 3))?)?);
    }
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn isolines() -> Result<(bool, String)> {
    let [a, a2, b, b2] = chsh_angles();
    let mut ok = true;
    for i in 1..200 {
        let v = i as f64 / 200.0;
        let w = witness((v, 0.0), (v, 0.0), (v, 0.0))?;
        ok &= (w.w < 0.0) == (v > 1.0 / 3.0);
        let rho = werner(v, BellKind::PsiMinus)?;
        let mut e = [0.0; 4];
        for (j, (x, y)) in [(a, b), (a, b2), (a2, b), (a2, b2)].into_iter().enumerate() {
            e[j] = correlation(&rho, MeasBasis::Linear(x), MeasBasis::Linear(y))?;
        }
        let s = (e[0] - e[1] + e[2] + e[3]).abs();
        ok &= (s > 2.0 + 1e-12) == (v > std::f64::consts::FRAC_1_SQRT_2 + 1e-12);
        ok &= matches!(classify(v), Region::Chsh) == (v > std::f64::consts::FRAC_1_SQRT_2);
    }
    // counts path agrees with the state path at the Tsirelson point
    let rho = werner(1.0, BellKind::PsiMinus)?;
    let mut tables = [[0u64; 4]; 4];
    for (j, (x, y)) in [(a, b), (a, b2), (a2, b), (a2, b2)].into_iter().enumerate() {
        let p = born_probabilities(&rho, MeasBasis::Linear(x), MeasBasis::Linear(y))?;
        tables[j] = p.map(|q| (q * 1e9).round() as u64);
    }
    let s = chsh(tables, BellKind::PsiMinus)?.s;
    ok &= (s - 2.0 * 2f64.sqrt()).abs() < 1e-6;
    Ok((ok, format!("S_max {s:.6}")))
}

fn sources() -> Result<(bool, String)> {
    let mut ok = true;
    for model in [StatModel::Poissonian, StatModel::Thermal] {
        for p in [0.0, 1e-4, 3e-3, 0.05, 0.099] {
            let d = pair_count_distribution(&SourceParams::new(p, 1.0, model)?, 4)?;
            ok &= (d.iter().sum::<f64>() - 1.0).abs() < 1e-12;
        }
    }
    let h = HomParams::default();
    ok &= hom_overlap(&h) == 1.0;
    let off = |d: f64| hom_overlap(&HomParams { delta_l_mm: d, ..h });
    ok &= off(0.1) == off(-0.1) && off(0.2) < off(0.1);
    for r in [15e3, 130e3, 240e3] {
        let p = calibrate_pair_prob(r, 80e6, 1.0)?;
        ok &= (two_fold_rate(p, 80e6, 1.0) - r).abs() < 1e-12 * r;
    }
    Ok((ok, String::new()))
}

fn tag_round_trip() -> Result<(bool, String)> {
    let events: Vec<_> = (0..10_000u64)
        .map(|i| DetectionEvent { channel: Channel::ALL[(i % 8) as usize], tag: i * 11, origin: Origin::photon(i, (i % 4) as u8) })
        .collect();
    let s = TagStream::new(Recorder::LaPalma, events, 30.0)?;
    let b = encode(&s, true)?;
    let back = decode(&b, 30.0)?;
    Ok((back == s && encode(&back, true)? == b, format!("{} bytes", b.len())))
}

fn sync_shift() -> Result<(bool, String)> {
    // 1 kHz local train; remote copy shifted by 123 µs plus uncorrelated clicks
    let local: Vec<f64> = (0..2000).map(|i| i as f64 * 1e6 + (i * 7919 % 1000) as f64).collect();
    let mut remote: Vec<f64> = local.iter().map(|t| t + 123_456.0).collect();
    remote.extend((0..2000).map(|i| i as f64 * 999_983.0 + 500.0));
    remote.sort_by(f64::total_cmp);
    let prior = Line { t_ref: 0.0, offset: 0.0, drift: 0.0 };
    let r = search_line(&local, &remote, prior, 500_000.0, 0.0, 1.0)?;
    let err = (r.line.offset - 123_456.0).abs();
    Ok((err <= 1.0, format!("offset error {err:.2} ns")))
}

fn determinism() -> Result<(bool, String)> {
    let mut c = ExperimentConfig::with_mode(Mode::Local);
    c.local_detector = DetectorParams { dark_rate_hz: 50.0, ..DetectorParams::local() };
    c.duration_s = 90.0;
    c.bootstrap_resamples = 20;
    let a = run(&c)?.0.to_text();
    let b = run(&c)?.0.to_text();
    Ok((a == b, format!("{} report bytes", a.len())))
}

/// Runs every check; never panics.
pub fn run_all() -> Vec<Check> {
    vec![
        check("swap identity", swap_identity),
        check("bsm branches", bsm_branches),
        check("isolines", isolines),
        check("source models", sources),
        check("tag file round trip", tag_round_trip),
        check("sync offset", sync_shift),
        check("determinism", determinism),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_pass() {
        for c in run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
