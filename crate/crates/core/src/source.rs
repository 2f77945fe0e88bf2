//! Pulsed SPDC pair-source models.

use rand::Rng;

use crate::error::{Error, Result};

/// Per-pulse pair-number statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatModel {
    Thermal,
    Poissonian,
}

impl std::str::FromStr for StatModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thermal" => Ok(StatModel::Thermal),
            "poissonian" | "poisson" => Ok(StatModel::Poissonian),
            other => Err(Error::range("stat_model", format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for StatModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StatModel::Thermal => "thermal",
            StatModel::Poissonian => "poissonian",
        })
    }
}

/// Largest pair number tracked per pulse.
pub const MAX_PAIRS: usize = 4;

/// Upper bound on the per-pulse pair probability (perturbative regime).
pub const MAX_PAIR_PROB: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    pub pair_prob: f64,
    pub intrinsic_visibility: f64,
    pub stat_model: StatModel,
}

impl SourceParams {
    pub fn new(pair_prob: f64, intrinsic_visibility: f64, stat_model: StatModel) -> Result<Self> {
        let s = SourceParams { pair_prob, intrinsic_visibility, stat_model };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..MAX_PAIR_PROB).contains(&self.pair_prob) {
            return Err(Error::range("pair_prob", format!("{} not in [0, {MAX_PAIR_PROB})", self.pair_prob)));
        }
        if !(0.0..=1.0).contains(&self.intrinsic_visibility) {
            return Err(Error::range(
                "intrinsic_visibility",
                format!("{} not in [0, 1]", self.intrinsic_visibility),
            ));
        }
        Ok(())
    }
}

/// Geometry of the two-photon interference at the fibre beam splitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomParams {
    /// Relative path-length difference, mm.
    pub delta_l_mm: f64,
    /// Centre wavelength, nm.
    pub center_wavelength_nm: f64,
    /// Interference-filter FWHM, nm.
    pub filter_fwhm_nm: f64,
    /// Multiplies the coherence length derived from the filter bandwidth.
    pub width_scale: f64,
}

impl Default for HomParams {
    fn default() -> Self {
        HomParams { delta_l_mm: 0.0, center_wavelength_nm: 808.0, filter_fwhm_nm: 3.0, width_scale: 1.0 }
    }
}

impl HomParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.filter_fwhm_nm > 0.0) {
            return Err(Error::range("filter_fwhm_nm", "must be > 0"));
        }
        if !(self.center_wavelength_nm > 0.0) {
            return Err(Error::range("center_wavelength_nm", "must be > 0"));
        }
        if !(self.width_scale > 0.0) {
            return Err(Error::range("hom_width_scale", "must be > 0"));
        }
        Ok(())
    }

    /// Coherence length `λ₀²/Δλ` in mm.
    pub fn coherence_length_mm(&self) -> f64 {
        let l0 = self.center_wavelength_nm * 1e-9;
        let dl = self.filter_fwhm_nm * 1e-9;
        self.width_scale * l0 * l0 / dl * 1e3
    }
}

/// Pair-number probabilities `P(0..=n_max)`, renormalized after truncation.
pub fn pair_count_distribution(params: &SourceParams, n_max: usize) -> Result<Vec<f64>> {
    params.validate()?;
    let p = params.pair_prob;
    let mut probs: Vec<f64> = match params.stat_model {
        StatModel::Poissonian => {
            let mut v = Vec::with_capacity(n_max + 1);
            let mut term = (-p).exp();
            for n in 0..=n_max {
                if n > 0 {
                    term *= p / n as f64;
                }
                v.push(term);
            }
            v
        }
        StatModel::Thermal => {
            // mean x/(1−x) = p
            let x = p / (1.0 + p);
            (0..=n_max).map(|n| (1.0 - x) * x.powi(n as i32)).collect()
        }
    };
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|q| *q /= total);
    Ok(probs)
}

/// Gaussian HOM-dip overlap for path mismatch `Δl`.
pub fn hom_overlap(h: &HomParams) -> f64 {
    let lc = h.coherence_length_mm();
    let sigma = lc / (8.0 * std::f64::consts::LN_2).sqrt();
    (-h.delta_l_mm * h.delta_l_mm / (2.0 * sigma * sigma)).exp()
}

/// Effective two-photon overlap entering the swapped-state mixture.
pub fn effective_overlap(source: &SourceParams, h: &HomParams) -> f64 {
    source.intrinsic_visibility * hom_overlap(h)
}

/// Pair probability reproducing a detected 2-fold rate.
pub fn calibrate_pair_prob(two_fold_rate_hz: f64, rep_rate_hz: f64, eta_local: f64) -> Result<f64> {
    if !(rep_rate_hz > 0.0) || !(eta_local > 0.0 && eta_local <= 1.0) {
        return Err(Error::range("calibrate", "rep_rate must be > 0 and eta_local in (0,1]"));
    }
    if !(0.0..rep_rate_hz).contains(&two_fold_rate_hz) {
        return Err(Error::range("two_fold_rate", format!("{two_fold_rate_hz} Hz not below rep rate")));
    }
    let p = two_fold_rate_hz / (rep_rate_hz * eta_local * eta_local);
    if p >= MAX_PAIR_PROB {
        return Err(Error::range("pair_prob", format!("calibrated p = {p} ≥ {MAX_PAIR_PROB}")));
    }
    Ok(p)
}

/// Detected 2-fold rate produced by pair probability `p`.
pub fn two_fold_rate(pair_prob: f64, rep_rate_hz: f64, eta_local: f64) -> f64 {
    pair_prob * rep_rate_hz * eta_local * eta_local
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseEmission {
    pub pulse_index: u64,
    pub n_pairs_src1: u8,
    pub n_pairs_src2: u8,
}

/// Inverse-CDF draw from a discrete distribution.
pub fn draw_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Independent pair numbers for both sources in one pulse.
pub fn sample_pulse<R: Rng + ?Sized>(
    pulse_index: u64,
    src1: &SourceParams,
    src2: &SourceParams,
    rng: &mut R,
) -> Result<PulseEmission> {
    let d1 = pair_count_distribution(src1, MAX_PAIRS)?;
    let d2 = pair_count_distribution(src2, MAX_PAIRS)?;
    Ok(PulseEmission {
        pulse_index,
        n_pairs_src1: draw_index(&d1, rng) as u8,
        n_pairs_src2: draw_index(&d2, rng) as u8,
    })
}
