//! Spectral measurements: weight singular values, folded conv similarity,
//! layer covariances, power-law envelopes, effective ranks, degrees of freedom
//! and ridge leverage scores.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::netfwd::ActivationSet;
use crate::tensor_store::TensorEntry;

/// Relative tolerance below which negative covariance eigenvalues are rounding noise.
pub const PSD_TOL: f64 = 1e-10;

/// Values below this fraction of the leading value are excluded from decay fits.
pub const FIT_FLOOR: f64 = 1e-12;

pub const DEFAULT_THRESHOLDS: [f64; 3] = [1e-1, 1e-2, 1e-3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumSource {
    Weight,
    WeightConvFolded,
    Covariance,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralProfile {
    pub values: Vec<f64>,
    pub source: SpectrumSource,
}

impl SpectralProfile {
    /// Sorts nonincreasing. Values must be finite and nonnegative.
    pub fn new(mut values: Vec<f64>, source: SpectrumSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Validation(
                "spectrum values must be finite and nonnegative".into(),
            ));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        Ok(SpectralProfile { values, source })
    }

    pub fn leading(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Two-column `index value` text, 1-based indices.
    pub fn plot_data(&self) -> String {
        let mut s = String::new();
        for (j, v) in self.values.iter().enumerate() {
            let _ = writeln!(s, "{} {:e}", j + 1, v);
        }
        s
    }
}

pub fn weight_spectrum(w: &DMatrix<f64>) -> Result<SpectralProfile> {
    SpectralProfile::new(linalg::singular_values(w)?, SpectrumSource::Weight)
}

/// A 4-way filter bank `[out, in, k, k]` stored row-major.
#[derive(Debug, Clone)]
pub struct ConvWeight {
    pub out_channels: usize,
    pub in_channels: usize,
    pub k: usize,
    pub data: Vec<f64>,
}

impl ConvWeight {
    pub fn new(out_channels: usize, in_channels: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != out_channels * in_channels * k * k {
            return Err(Error::Dimension(format!(
                "conv weight [{out_channels},{in_channels},{k},{k}] needs {} values, got {}",
                out_channels * in_channels * k * k,
                data.len()
            )));
        }
        Ok(ConvWeight {
            out_channels,
            in_channels,
            k,
            data,
        })
    }

    pub fn from_entry(e: &TensorEntry) -> Result<Self> {
        match e.dims.as_slice() {
            &[o, i, k1, k2] if k1 == k2 => {
                ConvWeight::new(o as usize, i as usize, k1 as usize, e.to_f64_vec())
            }
            d => Err(Error::Dimension(format!(
                "tensor {:?} has dims {d:?}, expected [out, in, k, k]",
                e.name
            ))),
        }
    }

    /// `out × (in·k·k)` matrix; row `i` is filter `i` flattened.
    pub fn fold(&self) -> DMatrix<f64> {
        let cols = self.in_channels * self.k * self.k;
        DMatrix::from_row_slice(self.out_channels, cols, &self.data)
    }
}

/// `K_{ij} = Σ_{c,κ1,κ2} W_{i,c,κ1,κ2} W_{j,c,κ1,κ2}`.
pub fn conv_fold_similarity(w: &ConvWeight) -> DMatrix<f64> {
    let f = w.fold();
    let k = &f * f.transpose();
    (&k + k.transpose()) * 0.5
}

/// Eigenvalues of the folded similarity matrix; for a dense weight this is `σ_j(W)²`.
pub fn similarity_spectrum(k: &DMatrix<f64>) -> Result<SpectralProfile> {
    let values = clamp_psd(linalg::sym_eigen(k)?.values)?;
    SpectralProfile::new(values, SpectrumSource::WeightConvFolded)
}

/// Eigenvalues of `K` taken as squared singular values of the fold, which keeps
/// the small tail accurate where an eigensolver on `K` loses half the digits.
/// Padded with zeros to `out_channels` entries.
pub fn conv_similarity_spectrum(w: &ConvWeight) -> Result<SpectralProfile> {
    let mut values: Vec<f64> = linalg::singular_values(&w.fold())?.iter().map(|s| s * s).collect();
    values.resize(w.out_channels, 0.0);
    SpectralProfile::new(values, SpectrumSource::WeightConvFolded)
}

#[derive(Debug, Clone)]
pub struct CovarianceStat {
    pub matrix: DMatrix<f64>,
    pub sample_count: usize,
}

impl CovarianceStat {
    pub fn new(matrix: DMatrix<f64>, sample_count: usize) -> Result<Self> {
        linalg::check_square(&matrix, "covariance")?;
        linalg::check_finite(&matrix, "covariance")?;
        let matrix = linalg::symmetrized(&matrix)?;
        Ok(CovarianceStat {
            matrix,
            sample_count,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `Σ̂ = ΦᵀΦ / n` for an `n × m` activation matrix.
pub fn covariance_of(phi: &DMatrix<f64>) -> Result<CovarianceStat> {
    if phi.nrows() == 0 {
        return Err(Error::Validation("covariance needs at least one sample".into()));
    }
    CovarianceStat::new(linalg::second_moment(phi), phi.nrows())
}

/// Covariance of the inputs to layer `layer` (1-based).
pub fn layer_covariance(acts: &ActivationSet, layer: usize) -> Result<CovarianceStat> {
    if layer == 0 || layer > acts.layers.len() {
        return Err(Error::Validation(format!(
            "layer {layer} out of range 1..={}",
            acts.layers.len()
        )));
    }
    covariance_of(&acts.layers[layer - 1])
}

/// Channel covariance of a conv activation tensor `[n, m, I, J]` stored row-major.
pub fn conv_channel_covariance(
    data: &[f64],
    n: usize,
    channels: usize,
    spatial: usize,
) -> Result<CovarianceStat> {
    if n == 0 {
        return Err(Error::Validation("covariance needs at least one sample".into()));
    }
    if data.len() != n * channels * spatial {
        return Err(Error::Dimension(format!(
            "activation tensor has {} values, expected {}",
            data.len(),
            n * channels * spatial
        )));
    }
    let mut acc = DMatrix::<f64>::zeros(channels, channels);
    let block = channels * spatial;
    for i in 0..n {
        let a = DMatrix::from_row_slice(channels, spatial, &data[i * block..(i + 1) * block]);
        acc += &a * a.transpose();
    }
    acc /= n as f64;
    CovarianceStat::new((&acc + acc.transpose()) * 0.5, n)
}

pub fn conv_channel_covariance_entry(e: &TensorEntry) -> Result<CovarianceStat> {
    match e.dims.as_slice() {
        &[n, c, i, j] => conv_channel_covariance(
            &e.to_f64_vec(),
            n as usize,
            c as usize,
            (i as usize) * (j as usize),
        ),
        d => Err(Error::Dimension(format!(
            "tensor {:?} has dims {d:?}, expected [n, channels, I, J]",
            e.name
        ))),
    }
}

fn clamp_psd(mut values: Vec<f64>) -> Result<Vec<f64>> {
    let max_eig = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let min_eig = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_TOL * max_eig {
        return Err(Error::NotPsd { min_eig, max_eig });
    }
    values.iter_mut().for_each(|v| *v = v.max(0.0));
    Ok(values)
}

/// Eigenvalues of a covariance, tiny negatives clamped to zero.
pub fn covariance_spectrum(cov: &CovarianceStat) -> Result<SpectralProfile> {
    let values = clamp_psd(linalg::sym_eigen(&cov.matrix)?.values)?;
    SpectralProfile::new(values, SpectrumSource::Covariance)
}

/// Power-law upper envelope `values[j] ≤ scale · j^(−exponent)`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Inflated envelope scale.
    pub scale: f64,
    /// Intercept of the log-log least-squares line.
    pub ls_scale: f64,
    pub exponent: f64,
    /// 1-based inclusive index range used by the fit.
    pub fit_range: (usize, usize),
}

impl DecayFit {
    pub fn envelope(&self, j: usize) -> f64 {
        self.scale * (j as f64).powf(-self.exponent)
    }

    pub fn holds_on(&self, values: &[f64]) -> bool {
        let (lo, hi) = self.fit_range;
        (lo..=hi.min(values.len())).all(|j| values[j - 1] <= self.envelope(j))
    }
}

fn fit_points(values: &[f64]) -> Vec<(f64, f64)> {
    let v1 = values.first().copied().unwrap_or(0.0);
    values
        .iter()
        .enumerate()
        .take_while(|(_, &v)| v > 0.0 && v > FIT_FLOOR * v1)
        .map(|(j, &v)| (((j + 1) as f64).ln(), v.ln()))
        .collect()
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Smallest scale (up to one ulp search) for which every profile fits under the envelope.
fn inflate(profiles: &[&[f64]], exponent: f64, hi: usize) -> f64 {
    let mut scale = 0.0_f64;
    for p in profiles {
        for (j, &v) in p.iter().enumerate().take(hi) {
            scale = scale.max(v * ((j + 1) as f64).powf(exponent));
        }
    }
    loop {
        let ok = profiles.iter().all(|p| {
            p.iter()
                .enumerate()
                .take(hi)
                .all(|(j, &v)| v <= scale * ((j + 1) as f64).powf(-exponent))
        });
        if ok {
            return scale;
        }
        scale = scale.next_up();
    }
}

pub fn fit_decay(profile: &SpectralProfile) -> Result<DecayFit> {
    let points = fit_points(&profile.values);
    if points.len() < 3 {
        return Err(Error::Fit(points.len()));
    }
    let (slope, intercept) = least_squares(&points);
    let exponent = (-slope).max(0.0);
    let hi = points.len();
    Ok(DecayFit {
        scale: inflate(&[&profile.values], exponent, hi),
        ls_scale: intercept.exp(),
        exponent,
        fit_range: (1, hi),
    })
}

/// One envelope for all layers: pooled log-log fit, scale inflated over every layer.
pub fn fit_decay_global(profiles: &[SpectralProfile]) -> Result<DecayFit> {
    let per: Vec<Vec<(f64, f64)>> = profiles.iter().map(|p| fit_points(&p.values)).collect();
    let pooled: Vec<(f64, f64)> = per.iter().flatten().copied().collect();
    if pooled.len() < 3 {
        return Err(Error::Fit(pooled.len()));
    }
    let (slope, intercept) = least_squares(&pooled);
    let exponent = (-slope).max(0.0);
    let mut scale = 0.0_f64;
    let mut hi_max = 0;
    for (p, pts) in profiles.iter().zip(&per) {
        let s = inflate(&[&p.values], exponent, pts.len());
        scale = scale.max(s);
        hi_max = hi_max.max(pts.len());
    }
    Ok(DecayFit {
        scale,
        ls_scale: intercept.exp(),
        exponent,
        fit_range: (1, hi_max),
    })
}

pub fn check_threshold(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::Domain(format!("threshold ν must lie in (0,1), got {nu}")));
    }
    Ok(())
}

/// `#{ j : values[j] ≥ ν · values[1] }`.
pub fn effective_rank(profile: &SpectralProfile, nu: f64) -> Result<usize> {
    check_threshold(nu)?;
    if profile.values.is_empty() {
        return Err(Error::Validation("effective rank of an empty spectrum".into()));
    }
    let v1 = profile.leading();
    if v1 == 0.0 {
        return Ok(0);
    }
    Ok(profile.values.iter().filter(|&&v| v >= nu * v1).count())
}

/// `Σ_j μ_j / (μ_j + λ)` from a spectrum.
pub fn dof_from_spectrum(values: &[f64], lambda: f64) -> f64 {
    values.iter().map(|&m| m / (m + lambda)).sum()
}

pub fn degrees_of_freedom(cov: &CovarianceStat, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("ridge level must be positive, got {lambda}")));
    }
    Ok(dof_from_spectrum(&covariance_spectrum(cov)?.values, lambda))
}

#[derive(Debug, Clone, Serialize)]
pub struct LeverageScores {
    pub tau_prime: Vec<f64>,
    pub lambda: f64,
    pub dof: f64,
}

/// `τ′_j = [Σ(Σ+λI)^{−1}]_{jj} / N̂(λ)`.
pub fn leverage_scores(cov: &CovarianceStat, lambda: f64) -> Result<LeverageScores> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("ridge level must be positive, got {lambda}")));
    }
    let eig = linalg::sym_eigen(&cov.matrix)?;
    let mu = clamp_psd(eig.values)?;
    let weights: Vec<f64> = mu.iter().map(|&m| m / (m + lambda)).collect();
    let dof: f64 = weights.iter().sum();
    let m = cov.dim();
    let diag: Vec<f64> = (0..m)
        .map(|j| {
            (0..m)
                .map(|k| eig.vectors[(j, k)].powi(2) * weights[k])
                .sum()
        })
        .collect();
    let total: f64 = diag.iter().sum();
    if !(dof > 0.0) || !(total > 0.0) {
        return Err(Error::Numerical(
            "leverage scores undefined for a zero covariance".into(),
        ));
    }
    Ok(LeverageScores {
        tau_prime: diag.iter().map(|d| d / total).collect(),
        lambda,
        dof,
    })
}
