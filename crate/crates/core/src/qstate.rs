//! Polarization-state algebra for a handful of photons.
//!
//! States live in the product basis of `|H⟩ = 0`, `|V⟩ = 1` with the first
//! label as the most significant bit, so a two-photon amplitude vector is
//! ordered `(HH, HV, VH, VV)`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

const NORM_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// The four two-photon Bell states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BellKind {
    PsiMinus,
    PsiPlus,
    PhiPlus,
    PhiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PsiMinus,
        BellKind::PsiPlus,
        BellKind::PhiPlus,
        BellKind::PhiMinus,
    ];

    /// Amplitudes over `(HH, HV, VH, VV)`.
    pub fn amplitudes(self) -> [C64; 4] {
        let s = FRAC_1_SQRT_2;
        match self {
            BellKind::PsiMinus => [c(0.0, 0.0), c(s, 0.0), c(-s, 0.0), c(0.0, 0.0)],
            BellKind::PsiPlus => [c(0.0, 0.0), c(s, 0.0), c(s, 0.0), c(0.0, 0.0)],
            BellKind::PhiPlus => [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(s, 0.0)],
            BellKind::PhiMinus => [c(s, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-s, 0.0)],
        }
    }

    pub fn is_psi(self) -> bool {
        matches!(self, BellKind::PsiMinus | BellKind::PsiPlus)
    }

    pub fn name(self) -> &'static str {
        match self {
            BellKind::PsiMinus => "psi-",
            BellKind::PsiPlus => "psi+",
            BellKind::PhiPlus => "phi+",
            BellKind::PhiMinus => "phi-",
        }
    }
}

impl fmt::Display for BellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single-photon polarization analyzer. Outcome `+` is the first basis
/// vector, `−` the second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasBasis {
    /// `+ = H`, `− = V`.
    HV,
    /// `+ = (H+V)/√2`, `− = (H−V)/√2`.
    PM,
    /// `+ = R = (H−iV)/√2`, `− = L = (H+iV)/√2`.
    RL,
    /// Linear polarizer at `angle` radians from horizontal.
    Linear(f64),
}

impl MeasBasis {
    pub const MUB: [MeasBasis; 3] = [MeasBasis::HV, MeasBasis::PM, MeasBasis::RL];

    /// Basis kets `[plus, minus]` as `(H, V)` amplitude pairs.
    pub fn vectors(self) -> [[C64; 2]; 2] {
        let s = FRAC_1_SQRT_2;
        match self {
            MeasBasis::HV => [[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]],
            MeasBasis::PM => [[c(s, 0.0), c(s, 0.0)], [c(s, 0.0), c(-s, 0.0)]],
            MeasBasis::RL => [[c(s, 0.0), c(0.0, -s)], [c(s, 0.0), c(0.0, s)]],
            MeasBasis::Linear(a) => [
                [c(a.cos(), 0.0), c(a.sin(), 0.0)],
                [c(-a.sin(), 0.0), c(a.cos(), 0.0)],
            ],
        }
    }

    pub fn label(self) -> String {
        match self {
            MeasBasis::HV => "HV".into(),
            MeasBasis::PM => "PM".into(),
            MeasBasis::RL => "RL".into(),
            MeasBasis::Linear(a) => format!("L{:.6}", a),
        }
    }
}

/// Pure polarization state of `n` labelled photons.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    labels: Vec<u32>,
    amps: Vec<C64>,
}

fn check_labels(labels: &[u32]) -> Result<()> {
    for (i, l) in labels.iter().enumerate() {
        if labels[..i].contains(l) {
            return Err(Error::DuplicateLabel(*l));
        }
    }
    Ok(())
}

impl PureState {
    /// Builds a state, rejecting duplicate labels, size mismatch and
    /// non-unit norm.
    pub fn new(labels: Vec<u32>, amps: Vec<C64>) -> Result<Self> {
        check_labels(&labels)?;
        if amps.len() != 1usize << labels.len() {
            return Err(Error::DimensionMismatch { len: amps.len(), photons: labels.len() });
        }
        let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(n2));
        }
        Ok(PureState { labels, amps })
    }

    /// Normalizes `amps` and fixes the global phase before building.
    pub fn normalized(labels: Vec<u32>, mut amps: Vec<C64>) -> Result<Self> {
        let n2: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if n2 <= 0.0 {
            return Err(Error::ZeroProbability);
        }
        let n = n2.sqrt();
        amps.iter_mut().for_each(|a| *a /= n);
        let mut s = PureState::new(labels, amps)?;
        s.fix_phase();
        Ok(s)
    }

    /// Product-basis state; `bits[i]` is `false` for H and `true` for V.
    pub fn basis(labels: Vec<u32>, bits: &[bool]) -> Result<Self> {
        if bits.len() != labels.len() {
            return Err(Error::DimensionMismatch { len: bits.len(), photons: labels.len() });
        }
        let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
        let mut amps = vec![C64::default(); 1 << labels.len()];
        amps[idx] = c(1.0, 0.0);
        PureState::new(labels, amps)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn n_photons(&self) -> usize {
        self.labels.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Rotates the global phase so that the first non-negligible amplitude
    /// is real and non-negative.
    pub fn fix_phase(&mut self) {
        if let Some(first) = self.amps.iter().find(|a| a.norm() > 1e-14).copied() {
            let ph = first.conj() / first.norm();
            self.amps.iter_mut().for_each(|a| *a *= ph);
        }
    }

    pub fn with_canonical_phase(mut self) -> Self {
        self.fix_phase();
        self
    }

    /// Returns the same state with photons reordered to `order`.
    pub fn permuted(&self, order: &[u32]) -> Result<Self> {
        let n = self.labels.len();
        let mut sorted_a = self.labels.clone();
        let mut sorted_b = order.to_vec();
        sorted_a.sort_unstable();
        sorted_b.sort_unstable();
        if sorted_a != sorted_b {
            return Err(Error::WrongLabels { expected: self.labels.clone(), actual: order.to_vec() });
        }
        // position of new photon k in the old ordering
        let src: Vec<usize> = order
            .iter()
            .map(|l| self.labels.iter().position(|x| x == l).unwrap())
            .collect();
        let mut amps = vec![C64::default(); self.amps.len()];
        for (new_idx, slot) in amps.iter_mut().enumerate() {
            let mut old_idx = 0usize;
            for (k, &s) in src.iter().enumerate() {
                let bit = (new_idx >> (n - 1 - k)) & 1;
                old_idx |= bit << (n - 1 - s);
            }
            *slot = self.amps[old_idx];
        }
        Ok(PureState { labels: order.to_vec(), amps })
    }

    /// `⟨self|other⟩`, matching photons by label.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        let o = other.permuted(&self.labels)?;
        Ok(self.amps.iter().zip(&o.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn fidelity(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    /// Euclidean distance between amplitude vectors (photons matched by label).
    pub fn distance(&self, other: &PureState) -> Result<f64> {
        let o = other.permuted(&self.labels)?;
        Ok(self
            .amps
            .iter()
            .zip(&o.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt())
    }
}

pub fn bell_state(kind: BellKind, labels: (u32, u32)) -> Result<PureState> {
    if labels.0 == labels.1 {
        return Err(Error::DuplicateLabel(labels.0));
    }
    PureState::new(vec![labels.0, labels.1], kind.amplitudes().to_vec())
}

/// Tensor product; labels are `a`'s followed by `b`'s.
pub fn tensor(a: &PureState, b: &PureState) -> Result<PureState> {
    if a.labels.iter().any(|l| b.labels.contains(l)) {
        return Err(Error::OverlappingLabels);
    }
    let mut amps = Vec::with_capacity(a.amps.len() * b.amps.len());
    for x in &a.amps {
        for y in &b.amps {
            amps.push(x * y);
        }
    }
    let labels = a.labels.iter().chain(&b.labels).copied().collect();
    Ok(PureState { labels, amps })
}

fn require_0123(state: &PureState) -> Result<PureState> {
    if state.n_photons() != 4 {
        return Err(Error::WrongPhotonCount { expected: 4, actual: state.n_photons() });
    }
    state.permuted(&[0, 1, 2, 3]).map_err(|_| Error::WrongLabels {
        expected: vec![0, 1, 2, 3],
        actual: state.labels.clone(),
    })
}

/// `(⟨outer|₀₃ ⊗ ⟨inner|₁₂) |state⟩` for a four-photon state on labels 0..3.
pub fn bell_overlap(state: &PureState, outer: BellKind, inner: BellKind) -> Result<C64> {
    let s = require_0123(state)?;
    let bo = outer.amplitudes();
    let bi = inner.amplitudes();
    let mut acc = C64::default();
    for (idx, amp) in s.amps.iter().enumerate() {
        let (b0, b1, b2, b3) = ((idx >> 3) & 1, (idx >> 2) & 1, (idx >> 1) & 1, idx & 1);
        acc += bo[b0 * 2 + b3].conj() * bi[b1 * 2 + b2].conj() * amp;
    }
    Ok(acc)
}

/// Projects photons 1 and 2 onto `outcome`. Returns the branch probability
/// and the renormalized conditional state of photons 0 and 3.
pub fn bsm_project(state: &PureState, outcome: BellKind) -> Result<(f64, PureState)> {
    let s = require_0123(state)?;
    let bk = outcome.amplitudes();
    let mut cond = vec![C64::default(); 4];
    for (idx, amp) in s.amps.iter().enumerate() {
        let (b0, b1, b2, b3) = ((idx >> 3) & 1, (idx >> 2) & 1, (idx >> 1) & 1, idx & 1);
        cond[b0 * 2 + b3] += bk[b1 * 2 + b2].conj() * amp;
    }
    let p: f64 = cond.iter().map(|a| a.norm_sqr()).sum();
    if p < 1e-15 {
        return Err(Error::ZeroProbability);
    }
    Ok((p, PureState::normalized(vec![0, 3], cond)?))
}

/// Mixed polarization state of `n` labelled photons.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    labels: Vec<u32>,
    matrix: DMatrix<C64>,
}

impl DensityOp {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(labels: Vec<u32>, matrix: DMatrix<C64>) -> Result<Self> {
        check_labels(&labels)?;
        let dim = 1usize << labels.len();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch { len: matrix.nrows(), photons: labels.len() });
        }
        let herm_err = (&matrix - matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if herm_err > NORM_TOL {
            return Err(Error::InvalidDensity(format!("not Hermitian (max deviation {herm_err:e})")));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let eig = matrix.clone().symmetric_eigenvalues();
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min < -PSD_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(DensityOp { labels, matrix })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let v = nalgebra::DVector::from_column_slice(&psi.amps);
        DensityOp { labels: psi.labels.clone(), matrix: &v * v.adjoint() }
    }

    /// Convex combination `Σ wᵢ ρᵢ`; all operands must share labels.
    pub fn mixture(parts: &[(f64, DensityOp)]) -> Result<Self> {
        let first = parts.first().ok_or(Error::ZeroProbability)?;
        let mut m = DMatrix::zeros(first.1.matrix.nrows(), first.1.matrix.ncols());
        for (w, rho) in parts {
            if rho.labels != first.1.labels {
                return Err(Error::WrongLabels { expected: first.1.labels.clone(), actual: rho.labels.clone() });
            }
            m += &rho.matrix * C64::from(*w);
        }
        DensityOp::new(first.1.labels.clone(), m)
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `⟨ψ|ρ|ψ⟩` for a pure state on the same labels.
    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        let p = psi.permuted(&self.labels)?;
        let v = nalgebra::DVector::from_column_slice(&p.amps);
        Ok((v.adjoint() * &self.matrix * &v)[(0, 0)].re)
    }
}

fn photons03(kind: BellKind) -> PureState {
    bell_state(kind, (0, 3)).expect("distinct labels")
}

/// `m·|kind⟩⟨kind| + (1−m)·½(|HV⟩⟨HV| + |VH⟩⟨VH|)` for Ψ kinds, with the
/// `HH`/`VV` mixture for Φ kinds. Photons are labelled 0 and 3.
pub fn swapped_mixture(m: f64, kind: BellKind) -> Result<DensityOp> {
    if !(0.0..=1.0).contains(&m) || m.is_nan() {
        return Err(Error::range("m", format!("{m} not in [0,1]")));
    }
    let pure = DensityOp::from_pure(&photons03(kind));
    let (x, y) = if kind.is_psi() { ([false, true], [true, false]) } else { ([false, false], [true, true]) };
    let cx = DensityOp::from_pure(&PureState::basis(vec![0, 3], &x)?);
    let cy = DensityOp::from_pure(&PureState::basis(vec![0, 3], &y)?);
    DensityOp::mixture(&[(m, pure), ((1.0 - m) / 2.0, cx), ((1.0 - m) / 2.0, cy)])
}

/// Bell state with white noise: `v·|kind⟩⟨kind| + (1−v)·𝟙/4`.
pub fn werner(v: f64, kind: BellKind) -> Result<DensityOp> {
    if !(0.0..=1.0).contains(&v) || v.is_nan() {
        return Err(Error::range("v", format!("{v} not in [0,1]")));
    }
    let pure = DensityOp::from_pure(&photons03(kind));
    let id = DensityOp { labels: vec![0, 3], matrix: DMatrix::identity(4, 4) / C64::from(4.0) };
    DensityOp::mixture(&[(v, pure), (1.0 - v, id)])
}

/// Joint outcome probabilities `[P(++), P(+−), P(−+), P(−−)]` for the first
/// photon measured in `a` and the second in `b`.
pub fn born_probabilities(rho: &DensityOp, a: MeasBasis, b: MeasBasis) -> Result<[f64; 4]> {
    if rho.labels.len() != 2 {
        return Err(Error::WrongPhotonCount { expected: 2, actual: rho.labels.len() });
    }
    // re-validate in case the matrix was assembled unchecked
    let eig = rho.matrix.clone().symmetric_eigenvalues();
    if eig.iter().any(|&e| e < -PSD_TOL) {
        return Err(Error::InvalidDensity("not positive semidefinite".into()));
    }
    let va = a.vectors();
    let vb = b.vectors();
    let mut out = [0.0; 4];
    for (i, ka) in va.iter().enumerate() {
        for (j, kb) in vb.iter().enumerate() {
            let ket = [ka[0] * kb[0], ka[0] * kb[1], ka[1] * kb[0], ka[1] * kb[1]];
            let mut acc = C64::default();
            for r in 0..4 {
                for s in 0..4 {
                    acc += ket[r].conj() * rho.matrix[(r, s)] * ket[s];
                }
            }
            out[i * 2 + j] = acc.re.max(0.0);
        }
    }
    Ok(out)
}

/// Correlation `P(++) + P(−−) − P(+−) − P(−+)` of a two-photon state.
pub fn correlation(rho: &DensityOp, a: MeasBasis, b: MeasBasis) -> Result<f64> {
    let p = born_probabilities(rho, a, b)?;
    Ok(p[0] + p[3] - p[1] - p[2])
}

/// Sign (+1 correlated, −1 anticorrelated) of the ideal Bell-state
/// correlation when both photons are measured in `basis`.
pub fn ideal_correlation_sign(kind: BellKind, basis: MeasBasis) -> f64 {
    let rho = DensityOp::from_pure(&photons03(kind));
    let e = correlation(&rho, basis, basis).expect("valid Bell state");
    if e >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Single-photon outcome probability `P(+)` for a photon in the pure
/// polarization `(h, v)`.
pub fn single_plus_probability(pol: [C64; 2], basis: MeasBasis) -> f64 {
    let plus = basis.vectors()[0];
    (plus[0].conj() * pol[0] + plus[1].conj() * pol[1]).norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn ideal() -> PureState {
        tensor(
            &bell_state(BellKind::PsiMinus, (0, 1)).unwrap(),
            &bell_state(BellKind::PsiMinus, (2, 3)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn singlet_amplitudes() {
        let s = bell_state(BellKind::PsiMinus, (0, 1)).unwrap();
        let h = FRAC_1_SQRT_2;
        let expect = [0.0, h, -h, 0.0];
        for (a, e) in s.amplitudes().iter().zip(expect) {
            assert_abs_diff_eq!(a.re, e, epsilon = 1e-15);
            assert_abs_diff_eq!(a.im, 0.0);
        }
        let p = bell_state(BellKind::PhiPlus, (1, 2)).unwrap();
        assert_abs_diff_eq!(p.amplitudes()[0].re, h);
        assert_abs_diff_eq!(p.amplitudes()[3].re, h);
    }

    #[test]
    fn bell_states_orthogonal() {
        for a in BellKind::ALL {
            for b in BellKind::ALL {
                let ov = bell_state(a, (0, 1)).unwrap().inner(&bell_state(b, (0, 1)).unwrap()).unwrap();
                let want = if a == b { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ov.norm(), want, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn duplicate_label_rejected() {
        assert!(matches!(bell_state(BellKind::PsiMinus, (1, 1)), Err(Error::DuplicateLabel(1))));
    }

    #[test]
    fn tensor_of_singlets() {
        let s = ideal();
        assert_eq!(s.labels(), &[0, 1, 2, 3]);
        let nz: Vec<f64> = s.amplitudes().iter().map(|a| a.norm()).filter(|&n| n > 1e-12).collect();
        assert_eq!(nz.len(), 4);
        nz.iter().for_each(|&n| assert_abs_diff_eq!(n, 0.5, epsilon = 1e-15));
        let hv = tensor(
            &PureState::basis(vec![0], &[false]).unwrap(),
            &PureState::basis(vec![1], &[true]).unwrap(),
        )
        .unwrap();
        assert_eq!(hv, PureState::basis(vec![0, 1], &[false, true]).unwrap());
        assert!(matches!(tensor(&s, &hv), Err(Error::OverlappingLabels)));
    }

    #[test]
    fn overlaps_follow_swap_decomposition() {
        let s = ideal();
        let pp = bell_overlap(&s, BellKind::PsiPlus, BellKind::PsiPlus).unwrap();
        let mm = bell_overlap(&s, BellKind::PsiMinus, BellKind::PsiMinus).unwrap();
        let x = bell_overlap(&s, BellKind::PsiMinus, BellKind::PhiPlus).unwrap();
        assert_abs_diff_eq!(pp.re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mm.re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(x.norm(), 0.0, epsilon = 1e-15);
        let three = PureState::basis(vec![0, 1, 2], &[false; 3]).unwrap();
        assert!(matches!(bell_overlap(&three, BellKind::PsiMinus, BellKind::PsiMinus), Err(Error::WrongPhotonCount { .. })));
    }

    #[test]
    fn swap_identity_reconstructs_product() {
        // ½[Ψ⁺Ψ⁺ − Ψ⁻Ψ⁻ − Φ⁺Φ⁺ + Φ⁻Φ⁻] in (03)⊗(12) order
        let terms = [
            (0.5, BellKind::PsiPlus),
            (-0.5, BellKind::PsiMinus),
            (-0.5, BellKind::PhiPlus),
            (0.5, BellKind::PhiMinus),
        ];
        let mut acc = vec![C64::default(); 16];
        for (w, k) in terms {
            let t = tensor(&bell_state(k, (0, 3)).unwrap(), &bell_state(k, (1, 2)).unwrap())
                .unwrap()
                .permuted(&[0, 1, 2, 3])
                .unwrap();
            for (a, b) in acc.iter_mut().zip(t.amplitudes()) {
                *a += b * w;
            }
        }
        let rebuilt = PureState::new(vec![0, 1, 2, 3], acc).unwrap();
        assert!(rebuilt.distance(&ideal()).unwrap() < 1e-12);
    }

    #[test]
    fn bsm_branches_are_quarter_and_swap() {
        let s = ideal();
        let mut total = 0.0;
        for k in BellKind::ALL {
            let (p, cond) = bsm_project(&s, k).unwrap();
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-14);
            assert_abs_diff_eq!(cond.fidelity(&bell_state(k, (0, 3)).unwrap()).unwrap(), 1.0, epsilon = 1e-12);
            total += p;
        }
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-14);
        let (_, c) = bsm_project(&s, BellKind::PsiMinus).unwrap();
        assert_eq!(c, bell_state(BellKind::PsiMinus, (0, 3)).unwrap().with_canonical_phase());
    }

    #[test]
    fn bsm_zero_branch_is_error() {
        // |HH⟩₁₂ has no Ψ component
        let s = PureState::basis(vec![0, 1, 2, 3], &[false, false, false, false]).unwrap();
        assert!(matches!(bsm_project(&s, BellKind::PsiMinus), Err(Error::ZeroProbability)));
    }

    #[test]
    fn bases_mutually_unbiased() {
        let b = MeasBasis::MUB;
        for i in 0..3 {
            for j in (i + 1)..3 {
                for u in b[i].vectors() {
                    for v in b[j].vectors() {
                        let ip: C64 = u[0].conj() * v[0] + u[1].conj() * v[1];
                        assert_abs_diff_eq!(ip.norm_sqr(), 0.5, epsilon = 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn singlet_born_tables() {
        let rho = DensityOp::from_pure(&bell_state(BellKind::PsiMinus, (0, 3)).unwrap());
        let p = born_probabilities(&rho, MeasBasis::HV, MeasBasis::HV).unwrap();
        for (a, e) in p.iter().zip([0.0, 0.5, 0.5, 0.0]) {
            assert_abs_diff_eq!(*a, e, epsilon = 1e-14);
        }
        for (a, b) in [(0.0, PI / 8.0), (0.3, 1.1), (PI / 4.0, 3.0 * PI / 8.0)] {
            let p = born_probabilities(&rho, MeasBasis::Linear(a), MeasBasis::Linear(b)).unwrap();
            assert_abs_diff_eq!(p[0], 0.5 * (a - b).sin().powi(2), epsilon = 1e-14);
            assert_abs_diff_eq!(p[0] + p[1] + p[2] + p[3], 1.0, epsilon = 1e-12);
        }
        let mix = swapped_mixture(0.6, BellKind::PsiMinus).unwrap();
        let p = born_probabilities(&mix, MeasBasis::PM, MeasBasis::PM).unwrap();
        assert_abs_diff_eq!(p[1], 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(p[2], 0.4, epsilon = 1e-14);
    }

    #[test]
    fn rl_convention_gives_positive_singlet_visibility() {
        let rho = DensityOp::from_pure(&bell_state(BellKind::PsiMinus, (0, 3)).unwrap());
        assert_abs_diff_eq!(correlation(&rho, MeasBasis::RL, MeasBasis::RL).unwrap(), -1.0, epsilon = 1e-14);
        assert_eq!(ideal_correlation_sign(BellKind::PsiPlus, MeasBasis::HV), -1.0);
        assert_eq!(ideal_correlation_sign(BellKind::PsiPlus, MeasBasis::PM), 1.0);
        assert_eq!(ideal_correlation_sign(BellKind::PsiPlus, MeasBasis::RL), 1.0);
    }

    #[test]
    fn invalid_density_rejected() {
        let mut m = DMatrix::<C64>::zeros(4, 4);
        m[(0, 0)] = c(1.5, 0.0);
        m[(1, 1)] = c(-0.5, 0.0);
        assert!(matches!(DensityOp::new(vec![0, 3], m), Err(Error::InvalidDensity(_))));
        assert!(swapped_mixture(1.2, BellKind::PsiMinus).is_err());
    }

    #[test]
    fn permutation_round_trip() {
        let s = ideal();
        let p = s.permuted(&[3, 1, 0, 2]).unwrap();
        assert!(p.permuted(&[0, 1, 2, 3]).unwrap().distance(&s).unwrap() < 1e-15);
        assert_abs_diff_eq!(p.inner(&s).unwrap().re, 1.0, epsilon = 1e-14);
    }
}
