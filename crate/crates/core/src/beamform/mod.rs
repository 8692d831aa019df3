//! Mask-driven MVDR beamforming.
//!
//! Speech and interference covariances come from an enhanced multichannel
//! estimate `S_hat` and the residual `Y - S_hat`, averaged over all frames.
//! The steering vector is the principal eigenvector of the speech covariance;
//! the weights are `Phi_N^-1 c / (c^H Phi_N^-1 c)` per frequency.

mod matrix;

pub use matrix::{inner, norm, CMatrix};

use ndarray::Array3;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::masking::{MaskSet, MaskSource};
use crate::signal::Spectrogram;

/// Per-frequency speech and interference covariance matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    pub phi_s: Vec<CMatrix>,
    pub phi_n: Vec<CMatrix>,
    pub frames: usize,
}

/// `phi_s(f) = 1/T sum_t S(t,f) S(t,f)^H`, and likewise for `N = Y - S`.
pub fn estimate_covariances(s_hat: &Spectrogram, y: &Spectrogram) -> Result<CovarianceSet> {
    if s_hat.data.dim() != y.data.dim() {
        return Err(Error::DimensionMismatch(format!(
            "estimate {:?} vs mixture {:?}",
            s_hat.data.dim(),
            y.data.dim()
        )));
    }
    let (frames, bins, mics) = y.data.dim();
    if mics < 2 {
        return Err(Error::DimensionMismatch(format!(
            "beamforming needs at least 2 channels, got {mics}"
        )));
    }
    if frames == 0 {
        return Err(Error::NoFrames);
    }
    let inv_t = 1.0 / frames as f64;
    let mut phi_s = Vec::with_capacity(bins);
    let mut phi_n = Vec::with_capacity(bins);
    let mut sv = vec![Complex64::new(0.0, 0.0); mics];
    let mut nv = sv.clone();
    for f in 0..bins {
        let mut acc_s = CMatrix::zeros(mics);
        let mut acc_n = CMatrix::zeros(mics);
        for t in 0..frames {
            for m in 0..mics {
                sv[m] = s_hat.data[[t, f, m]];
                nv[m] = y.data[[t, f, m]] - sv[m];
            }
            for i in 0..mics {
                for j in i..mics {
                    acc_s[(i, j)] += sv[i] * sv[j].conj();
                    acc_n[(i, j)] += nv[i] * nv[j].conj();
                }
            }
        }
        phi_s.push(acc_s.scaled(inv_t).hermitianized());
        phi_n.push(acc_n.scaled(inv_t).hermitianized());
    }
    Ok(CovarianceSet {
        phi_s,
        phi_n,
        frames,
    })
}

const SQUARINGS: usize = 40;
pub const POWER_TOLERANCE: f64 = 1e-10;
pub const POWER_MAX_ITERATIONS: usize = 500;

/// Deterministic start: `e_ref` plus a small fixed perturbation on every entry.
fn start_vector(n: usize, reference: usize) -> Vec<Complex64> {
    (0..n)
        .map(|i| {
            let base = if i == reference { 1.0 } else { 0.0 };
            Complex64::new(base + 1e-3 * (i + 1) as f64, 1e-3 * (n - i) as f64)
        })
        .collect()
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let n = norm(v);
    if n > 0.0 {
        v.iter_mut().for_each(|c| *c /= n);
    }
    n
}

/// Rotates `v` so that `v[reference]` is real and nonnegative. If that entry
/// is zero, the first nonzero entry is used instead.
pub fn fix_phase(v: &mut [Complex64], reference: usize) {
    let anchor = if v[reference].norm() > 0.0 {
        v[reference]
    } else {
        match v.iter().find(|c| c.norm() > 0.0) {
            Some(&c) => c,
            None => return,
        }
    };
    let rot = anchor.conj() / anchor.norm();
    v.iter_mut().for_each(|c| *c *= rot);
    if v[reference].norm() > 0.0 {
        v[reference] = Complex64::new(v[reference].norm(), 0.0);
    }
}

/// Unit-norm principal eigenvector of a Hermitian PSD matrix and its
/// eigenvalue, phase-fixed on `reference`.
///
/// Power iteration: the start vector is first multiplied by `A^(2^k)`, built
/// by repeated normalized squaring, then refined with plain power steps on
/// `A` until successive iterates differ by less than [`POWER_TOLERANCE`] or
/// [`POWER_MAX_ITERATIONS`] is reached.
pub fn principal_eigenvector(a: &CMatrix, reference: usize) -> Option<(f64, Vec<Complex64>)> {
    let n = a.size();
    let scale = a.frobenius();
    if scale == 0.0 || !scale.is_finite() {
        return None;
    }
    let mut p = a.scaled(1.0 / scale);
    for _ in 0..SQUARINGS {
        let sq = p.matmul(&p);
        let f = sq.frobenius();
        if f == 0.0 {
            break;
        }
        p = sq.scaled(1.0 / f);
    }
    let mut v = p.mul_vec(&start_vector(n, reference));
    if norm(&v) < 1e-6 {
        // Start vector (almost) orthogonal to the dominant subspace.
        let best = (0..n)
            .max_by(|&i, &j| {
                let ci: f64 = (0..n).map(|r| p[(r, i)].norm_sqr()).sum();
                let cj: f64 = (0..n).map(|r| p[(r, j)].norm_sqr()).sum();
                ci.total_cmp(&cj)
            })
            .unwrap_or(0);
        v = (0..n).map(|r| p[(r, best)]).collect();
    }
    normalize(&mut v);
    fix_phase(&mut v, reference);
    for _ in 0..POWER_MAX_ITERATIONS {
        let mut w = a.mul_vec(&v);
        if normalize(&mut w) == 0.0 {
            break;
        }
        fix_phase(&mut w, reference);
        let delta = norm(
            &w.iter()
                .zip(&v)
                .map(|(x, y)| x - y)
                .collect::<Vec<_>>(),
        );
        v = w;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    let lambda = inner(&v, &a.mul_vec(&v)).re;
    Some((lambda, v))
}

/// Steering vector per frequency from the speech covariances.
pub fn steering_vectors(phi_s: &[CMatrix], reference: usize) -> Result<Vec<Vec<Complex64>>> {
    phi_s
        .iter()
        .enumerate()
        .map(|(f, m)| {
            principal_eigenvector(m, reference)
                .map(|(_, v)| v)
                .ok_or(Error::NoSteeringDirection(f))
        })
        .collect()
}

/// Rescales a steering vector so its reference entry is 1 (relative
/// transfer function). Vectors with a zero reference entry are returned
/// unchanged.
pub fn relative_to_reference(c: &[Complex64], reference: usize) -> Vec<Complex64> {
    let r = c[reference];
    if r.norm() == 0.0 {
        c.to_vec()
    } else {
        c.iter().map(|v| v / r).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvdrConfig {
    /// `phi_n + loading * trace(phi_n) / M * I` before inversion.
    pub diagonal_loading: f64,
}

impl Default for MvdrConfig {
    fn default() -> Self {
        Self {
            diagonal_loading: 1e-6,
        }
    }
}

impl MvdrConfig {
    pub fn loaded(&self, phi_n: &CMatrix) -> CMatrix {
        let m = phi_n.size() as f64;
        phi_n.add_diagonal(self.diagonal_loading * phi_n.trace().re / m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    /// One complex M-vector per frequency bin.
    pub w: Vec<Vec<Complex64>>,
    pub reference_mic: usize,
    /// Bins where the loaded interference covariance could not be inverted;
    /// these pass the reference microphone through.
    pub fallback_bins: Vec<usize>,
}

impl BeamformerWeights {
    pub fn num_bins(&self) -> usize {
        self.w.len()
    }

    pub fn num_mics(&self) -> usize {
        self.w.first().map_or(0, Vec::len)
    }

    /// Weights that return channel `reference` unchanged.
    pub fn selector(bins: usize, mics: usize, reference: usize) -> Self {
        let mut e = vec![Complex64::new(0.0, 0.0); mics];
        e[reference] = Complex64::new(1.0, 0.0);
        Self {
            w: vec![e; bins],
            reference_mic: reference,
            fallback_bins: Vec::new(),
        }
    }

    /// Weights as a complex tensor with one frame: `(1, bins, mics)`.
    pub fn to_mask_set(&self) -> MaskSet {
        let data = Array3::from_shape_fn((1, self.num_bins(), self.num_mics()), |(_, f, m)| {
            self.w[f][m]
        });
        MaskSet::from_complex(&data, MaskSource::Oracle)
    }
}

/// Single-bin MVDR solve; `None` when the loaded covariance is singular.
pub fn mvdr_bin(phi_n: &CMatrix, c: &[Complex64], cfg: &MvdrConfig) -> Option<Vec<Complex64>> {
    let x = cfg.loaded(phi_n).solve(c)?;
    let denom = inner(c, &x);
    if !(denom.norm() > 0.0) || !denom.re.is_finite() {
        return None;
    }
    Some(x.iter().map(|v| v / denom).collect())
}

pub fn mvdr_weights(
    cov: &CovarianceSet,
    steering: &[Vec<Complex64>],
    reference_mic: usize,
    cfg: &MvdrConfig,
) -> Result<BeamformerWeights> {
    if steering.len() != cov.phi_n.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} steering vectors for {} bins",
            steering.len(),
            cov.phi_n.len()
        )));
    }
    let mut w = Vec::with_capacity(steering.len());
    let mut fallback_bins = Vec::new();
    for (f, (phi, c)) in cov.phi_n.iter().zip(steering).enumerate() {
        let m = phi.size();
        if c.len() != m || reference_mic >= m {
            return Err(Error::DimensionMismatch(format!(
                "bin {f}: steering length {} / reference {reference_mic} for {m} mics",
                c.len()
            )));
        }
        match mvdr_bin(phi, c, cfg) {
            Some(wf) => w.push(wf),
            None => {
                let mut e = vec![Complex64::new(0.0, 0.0); m];
                e[reference_mic] = Complex64::new(1.0, 0.0);
                w.push(e);
                fallback_bins.push(f);
            }
        }
    }
    Ok(BeamformerWeights {
        w,
        reference_mic,
        fallback_bins,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamformMode {
    /// Applied to the microphone mixture.
    OnMic,
    /// Applied to the enhanced multichannel estimate.
    PostFilter,
}

/// `out(t, f) = w(f)^H x(t, f)`; the mode only records what `input` holds.
pub fn apply_beamformer(
    w: &BeamformerWeights,
    input: &Spectrogram,
    _mode: BeamformMode,
) -> Result<Spectrogram> {
    let (frames, bins, mics) = input.data.dim();
    if bins != w.num_bins() || mics != w.num_mics() {
        return Err(Error::DimensionMismatch(format!(
            "weights {}x{} vs input {bins} bins x {mics} channels",
            w.num_bins(),
            w.num_mics()
        )));
    }
    let data = Array3::from_shape_fn((frames, bins, 1), |(t, f, _)| {
        (0..mics)
            .map(|m| w.w[f][m].conj() * input.data[[t, f, m]])
            .sum()
    });
    Ok(input.with_data(data))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SteeringScale {
    /// Unit-norm principal eigenvector as returned by [`steering_vectors`].
    UnitNorm,
    /// Eigenvector rescaled to a unit reference entry, so the beamformer
    /// preserves the speech image at the reference microphone.
    Reference,
}

/// Covariances, steering vectors and weights from an enhanced estimate.
pub fn mvdr_from_estimate(
    s_hat: &Spectrogram,
    y: &Spectrogram,
    reference_mic: usize,
    scale: SteeringScale,
    cfg: &MvdrConfig,
) -> Result<BeamformerWeights> {
    let cov = estimate_covariances(s_hat, y)?;
    let mut c = steering_vectors(&cov.phi_s, reference_mic)?;
    if scale == SteeringScale::Reference {
        c = c
            .iter()
            .map(|v| relative_to_reference(v, reference_mic))
            .collect();
    }
    mvdr_weights(&cov, &c, reference_mic, cfg)
}
