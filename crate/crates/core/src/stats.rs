//! Entanglement verification: visibilities, the witness, CHSH, error
//! propagation, bootstrap errors and the space-like separation check.

use rand::Rng;

use crate::error::{Error, Result};
use crate::qstate::{ideal_correlation_sign, BellKind, MeasBasis};
use crate::rng;
use crate::tagstream::{chsh_angles, BsmKind, Setting, SwapEvent};
use crate::SPEED_OF_LIGHT;

/// Outcome index in `[++, +−, −+, −−]` order.
pub fn outcome_index(alice_plus: bool, bob_plus: bool) -> usize {
    (!alice_plus as usize) * 2 + (!bob_plus as usize)
}

/// Coincidence tallies per setting and outcome for one swapped kind.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrelationCounts {
    entries: Vec<(Setting, [u64; 4])>,
}

impl CorrelationCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a SwapEvent>, kind: BsmKind) -> Self {
        let mut c = Self::new();
        for e in events.into_iter().filter(|e| e.kind == kind) {
            c.add(e.setting, e.alice_plus, e.bob_plus);
        }
        c
    }

    pub fn add(&mut self, setting: Setting, alice_plus: bool, bob_plus: bool) {
        self.add_n(setting, outcome_index(alice_plus, bob_plus), 1);
    }

    pub fn add_n(&mut self, setting: Setting, outcome: usize, n: u64) {
        match self.entries.iter_mut().find(|(s, _)| *s == setting) {
            Some((_, c)) => c[outcome] += n,
            None => {
                let mut c = [0; 4];
                c[outcome] = n;
                self.entries.push((setting, c));
            }
        }
    }

    pub fn get(&self, setting: Setting) -> Option<[u64; 4]> {
        self.entries.iter().find(|(s, _)| *s == setting).map(|(_, c)| *c)
    }

    pub fn entries(&self) -> &[(Setting, [u64; 4])] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().flat_map(|(_, c)| c.iter()).sum()
    }

    /// `(CCmax, CCmin)` for both parties in `basis`, oriented by the ideal
    /// correlation sign of `kind`.
    pub fn extremes(&self, kind: BellKind, basis: MeasBasis) -> Result<(u64, u64)> {
        let c = self
            .get(Setting { basis_a: basis, basis_b: basis })
            .ok_or_else(|| Error::MissingSetting(format!("{0}×{0}", basis.label())))?;
        let same = c[0] + c[3];
        let diff = c[1] + c[2];
        Ok(if ideal_correlation_sign(kind, basis) < 0.0 { (diff, same) } else { (same, diff) })
    }
}

/// `V = (max − min)/(max + min)` with Poisson error `2√(max·min/(max+min)³)`.
pub fn visibility(cc_max: u64, cc_min: u64) -> Result<(f64, f64)> {
    let n = (cc_max + cc_min) as f64;
    if n == 0.0 {
        return Err(Error::ZeroCounts);
    }
    let (a, b) = (cc_max as f64, cc_min as f64);
    Ok(((a - b) / n, 2.0 * (a * b / (n * n * n)).sqrt()))
}

/// Visibility after subtracting `accidentals` spread evenly over both
/// outcome classes.
pub fn visibility_corrected(cc_max: u64, cc_min: u64, accidentals: f64) -> Result<f64> {
    let a = cc_max as f64 - accidentals / 2.0;
    let b = cc_min as f64 - accidentals / 2.0;
    if a + b <= 0.0 {
        return Err(Error::ZeroCounts);
    }
    Ok((a - b) / (a + b))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessResult {
    pub w: f64,
    pub sigma: f64,
    /// `−W/σ` for `W < 0`, otherwise 0.
    pub significance: f64,
    pub v_hv: (f64, f64),
    pub v_pm: (f64, f64),
    pub v_rl: (f64, f64),
    pub v_mean: f64,
}

/// `W = ½ − ¼(1 + V_HV + V_PM + V_RL)`; each argument is `(V, σ)`.
pub fn witness(v_hv: (f64, f64), v_pm: (f64, f64), v_rl: (f64, f64)) -> Result<WitnessResult> {
    for (name, v) in [("V_HV", v_hv.0), ("V_PM", v_pm.0), ("V_RL", v_rl.0)] {
        if !(-1.0..=1.0).contains(&v) {
            return Err(Error::range(name, format!("{v} not in [-1,1]")));
        }
    }
    let w = 0.5 - 0.25 * (1.0 + v_hv.0 + v_pm.0 + v_rl.0);
    let sigma = 0.25 * (v_hv.1.powi(2) + v_pm.1.powi(2) + v_rl.1.powi(2)).sqrt();
    let significance = if w < 0.0 && sigma > 0.0 { -w / sigma } else { 0.0 };
    Ok(WitnessResult { w, sigma, significance, v_hv, v_pm, v_rl, v_mean: (v_hv.0 + v_pm.0 + v_rl.0) / 3.0 })
}

/// Witness from the three equal-basis settings of `counts`.
pub fn witness_from_counts(counts: &CorrelationCounts, kind: BellKind) -> Result<WitnessResult> {
    let v = |b| counts.extremes(kind, b).and_then(|(x, n)| visibility(x, n));
    witness(v(MeasBasis::HV)?, v(MeasBasis::PM)?, v(MeasBasis::RL)?)
}

/// `E = (N₊₊ + N₋₋ − N₊₋ − N₋₊)/N` with its Poisson error.
pub fn correlation_e(counts: [u64; 4]) -> Result<(f64, f64)> {
    let same = counts[0] + counts[3];
    let diff = counts[1] + counts[2];
    visibility(same, diff)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChshResult {
    pub s: f64,
    pub sigma: f64,
    /// `(a,b), (a,b'), (a',b), (a',b')` in polarization-plane radians.
    pub settings: [(f64, f64); 4],
    pub e: [f64; 4],
}

/// Signs of the four correlators in S. The singlet form subtracts
/// `E(a,b')`; the triplet form subtracts `E(a,b)`.
pub fn chsh_signs(kind: BellKind) -> [f64; 4] {
    match kind {
        BellKind::PsiPlus | BellKind::PhiMinus => [-1.0, 1.0, 1.0, 1.0],
        BellKind::PsiMinus | BellKind::PhiPlus => [1.0, -1.0, 1.0, 1.0],
    }
}

/// S from four `[++, +−, −+, −−]` tables ordered as [`ChshResult::settings`].
pub fn chsh(counts: [[u64; 4]; 4], kind: BellKind) -> Result<ChshResult> {
    let [a, a2, b, b2] = chsh_angles();
    let mut e = [0.0; 4];
    let mut var = 0.0;
    for (i, c) in counts.iter().enumerate() {
        let (v, s) = correlation_e(*c)?;
        e[i] = v;
        var += s * s;
    }
    let signs = chsh_signs(kind);
    let s = signs.iter().zip(&e).map(|(x, y)| x * y).sum::<f64>().abs();
    Ok(ChshResult { s, sigma: var.sqrt(), settings: [(a, b), (a, b2), (a2, b), (a2, b2)], e })
}

/// CHSH from the linear-angle settings present in `counts`.
pub fn chsh_from_counts(counts: &CorrelationCounts, kind: BellKind) -> Result<ChshResult> {
    let [a, a2, b, b2] = chsh_angles();
    let mut tables = [[0u64; 4]; 4];
    for (i, (x, y)) in [(a, b), (a, b2), (a2, b), (a2, b2)].into_iter().enumerate() {
        let s = Setting { basis_a: MeasBasis::Linear(x), basis_b: MeasBasis::Linear(y) };
        tables[i] = counts.get(s).ok_or_else(|| Error::MissingSetting(format!("({x:.4}, {y:.4})")))?;
    }
    chsh(tables, kind)
}

/// True when the two events lie outside each other's light cones.
pub fn spacelike_check(distance_km: f64, t_a_ns: f64, t_b_ns: f64) -> Result<bool> {
    if !(distance_km > 0.0) {
        return Err(Error::range("distance_km", "must be > 0"));
    }
    Ok(SPEED_OF_LIGHT * (t_a_ns - t_b_ns).abs() * 1e-9 < distance_km * 1e3)
}

/// Statistic recomputed on each bootstrap resample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    Witness(BsmKind),
    Chsh(BsmKind),
    Visibility(BsmKind, MeasBasis),
}

impl Statistic {
    pub fn evaluate<'a>(&self, events: impl IntoIterator<Item = &'a SwapEvent>) -> Result<f64> {
        match *self {
            Statistic::Witness(k) => witness_from_counts(&CorrelationCounts::from_events(events, k), k.bell()).map(|w| w.w),
            Statistic::Chsh(k) => chsh_from_counts(&CorrelationCounts::from_events(events, k), k.bell()).map(|c| c.s),
            Statistic::Visibility(k, b) => {
                let (x, n) = CorrelationCounts::from_events(events, k).extremes(k.bell(), b)?;
                visibility(x, n).map(|v| v.0)
            }
        }
    }
}

pub const MIN_BOOTSTRAP_EVENTS: usize = 100;

fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn check_resamples(resamples: usize) -> Result<()> {
    if resamples < 2 {
        return Err(Error::range("resamples", "need at least 2"));
    }
    Ok(())
}

fn spread(values: Vec<f64>, resamples: usize) -> Result<f64> {
    if values.len() * 2 < resamples {
        return Err(Error::range("bootstrap", "statistic undefined on most resamples"));
    }
    Ok(std_dev(&values))
}

/// Standard deviation of `statistic` over resamples of `events` drawn with
/// replacement (multinomial resampling of the observed counts).
pub fn bootstrap_sigma(events: &[SwapEvent], statistic: Statistic, resamples: usize, seed: u64) -> Result<f64> {
    check_resamples(resamples)?;
    if events.len() < MIN_BOOTSTRAP_EVENTS {
        return Err(Error::TooFewEvents { got: events.len(), need: MIN_BOOTSTRAP_EVENTS });
    }
    let mut r = rng::stream(seed, rng::domain::BOOTSTRAP);
    let n = events.len();
    let mut values = Vec::with_capacity(resamples);
    let mut picks = Vec::with_capacity(n);
    for _ in 0..resamples {
        picks.clear();
        picks.extend((0..n).map(|_| &events[r.random_range(0..n)]));
        if let Ok(v) = statistic.evaluate(picks.iter().copied()) {
            values.push(v);
        }
    }
    spread(values, resamples)
}

/// Multinomial bootstrap of a count vector through `f`.
pub fn bootstrap_counts(counts: &[u64], f: impl Fn(&[u64]) -> Result<f64>, resamples: usize, seed: u64) -> Result<f64> {
    check_resamples(resamples)?;
    let n: u64 = counts.iter().sum();
    if (n as usize) < MIN_BOOTSTRAP_EVENTS {
        return Err(Error::TooFewEvents { got: n as usize, need: MIN_BOOTSTRAP_EVENTS });
    }
    let cum: Vec<u64> = counts.iter().scan(0, |s, &c| { *s += c; Some(*s) }).collect();
    let mut r = rng::stream(seed, rng::domain::BOOTSTRAP);
    let mut values = Vec::with_capacity(resamples);
    let mut draw = vec![0u64; counts.len()];
    for _ in 0..resamples {
        draw.iter_mut().for_each(|d| *d = 0);
        for _ in 0..n {
            let u = r.random_range(0..n);
            draw[cum.partition_point(|&c| c <= u)] += 1;
        }
        if let Ok(v) = f(&draw) {
            values.push(v);
        }
    }
    spread(values, resamples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qstate::{born_probabilities, bell_state, werner, DensityOp};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    #[test]
    fn visibility_values() {
        assert_eq!(visibility(100, 0).unwrap().0, 1.0);
        let (v, s) = visibility(80, 20).unwrap();
        assert_abs_diff_eq!(v, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s, 0.08, epsilon = 1e-15);
        assert!(matches!(visibility(0, 0), Err(Error::ZeroCounts)));
        assert_abs_diff_eq!(visibility_corrected(80, 20, 0.0).unwrap(), 0.6);
        assert!(visibility_corrected(80, 20, 20.0).unwrap() > 0.6);
    }

    #[test]
    fn witness_values() {
        assert_abs_diff_eq!(witness((1.0, 0.0), (1.0, 0.0), (1.0, 0.0)).unwrap().w, -0.5);
        let t = 1.0 / 3.0;
        assert_abs_diff_eq!(witness((t, 0.0), (t, 0.0), (t, 0.0)).unwrap().w, 0.0, epsilon = 1e-15);
        let v = 0.6167;
        let w = witness((v, 0.05), (v, 0.05), (v, 0.05)).unwrap();
        assert_abs_diff_eq!(w.w, -0.212525, epsilon = 1e-6);
        assert_abs_diff_eq!(w.sigma, 0.25 * (3.0f64 * 0.0025).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(w.significance, -w.w / w.sigma);
        assert!(witness((1.2, 0.0), (0.0, 0.0), (0.0, 0.0)).is_err());
    }

    #[test]
    fn correlation_values() {
        assert_eq!(correlation_e([50, 0, 0, 50]).unwrap().0, 1.0);
        assert_eq!(correlation_e([25, 25, 25, 25]).unwrap().0, 0.0);
        assert!(correlation_e([0; 4]).is_err());
        // singlet at (0, π/8) from exact probabilities
        let rho = DensityOp::from_pure(&bell_state(BellKind::PsiMinus, (0, 3)).unwrap());
        let p = born_probabilities(&rho, MeasBasis::Linear(0.0), MeasBasis::Linear(PI / 8.0)).unwrap();
        let counts = p.map(|x| (x * 1e9).round() as u64);
        assert_abs_diff_eq!(correlation_e(counts).unwrap().0, -FRAC_1_SQRT_2, epsilon = 1e-8);
    }

    fn exact_tables(rho: &DensityOp, n: f64) -> [[u64; 4]; 4] {
        let [a, a2, b, b2] = chsh_angles();
        [(a, b), (a, b2), (a2, b), (a2, b2)].map(|(x, y)| {
            born_probabilities(rho, MeasBasis::Linear(x), MeasBasis::Linear(y)).unwrap().map(|p| (p * n).round() as u64)
        })
    }

    #[test]
    fn tsirelson_point() {
        for kind in [BellKind::PsiMinus, BellKind::PsiPlus] {
            let rho = DensityOp::from_pure(&bell_state(kind, (0, 3)).unwrap());
            let r = chsh(exact_tables(&rho, 1e12), kind).unwrap();
            assert_abs_diff_eq!(r.s, 2.0 * SQRT_2, epsilon = 1e-6);
        }
    }

    #[test]
    fn chsh_threshold_at_inverse_sqrt2() {
        for i in 0..=20 {
            let v = i as f64 / 20.0;
            let rho = werner(v, BellKind::PsiMinus).unwrap();
            let r = chsh(exact_tables(&rho, 1e12), BellKind::PsiMinus).unwrap();
            assert_abs_diff_eq!(r.s, 2.0 * SQRT_2 * v, epsilon = 1e-6);
            assert_eq!(r.s > 2.0 + 1e-9, v > FRAC_1_SQRT_2);
        }
        let [x, y, z, w] = [[1, 0, 0, 0], [0, 0, 0, 0], [1, 0, 0, 0], [1, 0, 0, 0]];
        assert!(chsh([x, y, z, w], BellKind::PsiMinus).is_err());
    }

    #[test]
    fn spacelike_values() {
        let d = 143.0;
        let light = d * 1e3 / SPEED_OF_LIGHT * 1e9;
        assert!(spacelike_check(d, 0.0, 0.0).unwrap());
        assert!(!spacelike_check(d, 0.0, light).unwrap());
        assert!(spacelike_check(d, 0.0, 476_900.0).unwrap());
        // Alice measures 500 ns after Bob's photon leaves; Bob measures on arrival
        assert!(spacelike_check(d, 500.0, light).unwrap());
        assert!(spacelike_check(0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn bootstrap_matches_propagation() {
        let f = |c: &[u64]| visibility(c[0], c[1]).map(|v| v.0);
        let s = bootstrap_counts(&[80, 20], f, 2000, 3).unwrap();
        assert!((s / 0.08 - 1.0).abs() < 0.25, "{s}");
        let s = bootstrap_counts(&[8000, 2000], f, 1000, 4).unwrap();
        assert!((s / 0.008 - 1.0).abs() < 0.25, "{s}");
        assert!(bootstrap_counts(&[80, 20], f, 0, 3).is_err());
        assert!(matches!(bootstrap_counts(&[10, 20], f, 10, 3), Err(Error::TooFewEvents { .. })));
    }

    #[test]
    fn bootstrap_needs_events() {
        assert!(bootstrap_sigma(&[], Statistic::Witness(BsmKind::PsiMinus12), 10, 1).is_err());
    }

    #[test]
    fn counts_orientation() {
        let mut c = CorrelationCounts::new();
        let hv = Setting { basis_a: MeasBasis::HV, basis_b: MeasBasis::HV };
        c.add_n(hv, 1, 30);
        c.add_n(hv, 0, 10);
        assert_eq!(c.extremes(BellKind::PsiMinus, MeasBasis::HV).unwrap(), (30, 10));
        assert_eq!(c.extremes(BellKind::PsiPlus, MeasBasis::HV).unwrap(), (30, 10));
        assert!(c.extremes(BellKind::PsiMinus, MeasBasis::PM).is_err());
        assert_eq!(c.total(), 40);
    }

    proptest! {
        #[test]
        fn witness_sign_tracks_one_third(v in -1.0f64..=1.0) {
            let w = witness((v, 0.0), (v, 0.0), (v, 0.0)).unwrap().w;
            prop_assert_eq!(w < 0.0, v > 1.0 / 3.0 + 1e-15);
            prop_assert!((w - (0.25 - 0.75 * v)).abs() < 1e-12);
        }

        #[test]
        fn e_bounded(c in proptest::array::uniform4(0u64..1000)) {
            prop_assume!(c.iter().sum::<u64>() > 0);
            let (e, s) = correlation_e(c).unwrap();
            prop_assert!((-1.0..=1.0).contains(&e));
            prop_assert!(s >= 0.0);
        }

        #[test]
        fn s_bounded(c in proptest::array::uniform4(proptest::array::uniform4(1u64..100))) {
            prop_assert!(chsh(c, BellKind::PsiMinus).unwrap().s <= 4.0);
        }
    }
}
