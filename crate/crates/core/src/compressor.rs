//! Network compression by per-layer SVD truncation and by ridge leverage-score
//! node selection, with tracked error bounds and realized errors.

use log::{debug, warn};
use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::netfwd::{self, Dataset, DenseNetwork};
use crate::rng::{self, Domain};
use crate::spectra::{self, CovarianceStat, DecayFit};

pub const DEFAULT_MAX_RETRIES: usize = 50;

/// Relative PSD slack accepted by [`check_guarantee`].
pub const SLACK_TOL: f64 = 1e-8;

pub const DEFAULT_C0: f64 = 0.25;

#[derive(Debug, Clone)]
pub struct Truncation {
    pub matrix: DMatrix<f64>,
    pub op_err: f64,
    pub fro_err: f64,
}

pub fn truncate_rank(w: &DMatrix<f64>, s: usize) -> Result<Truncation> {
    let k = w.nrows().min(w.ncols());
    if s == 0 || s > k {
        return Err(Error::Validation(format!("rank {s} outside 1..={k}")));
    }
    let d = linalg::svd(w)?;
    let sv = &d.singular_values;
    let mut matrix = DMatrix::zeros(w.nrows(), w.ncols());
    for j in 0..s {
        matrix += d.u.column(j) * d.v_t.row(j) * sv[j];
    }
    Ok(Truncation {
        matrix,
        op_err: sv.get(s).copied().unwrap_or(0.0),
        fro_err: sv[s..].iter().map(|v| v * v).sum::<f64>().sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RankPlan {
    pub ranks: Vec<usize>,
}

impl RankPlan {
    pub fn full(net: &DenseNetwork) -> Self {
        RankPlan {
            ranks: net.weights().iter().map(|w| w.nrows().min(w.ncols())).collect(),
        }
    }

    pub fn validate(&self, net: &DenseNetwork) -> Result<()> {
        if self.ranks.len() != net.depth() {
            return Err(Error::Validation(format!(
                "rank plan has {} entries for a depth-{} network",
                self.ranks.len(),
                net.depth()
            )));
        }
        for (l, (s, w)) in self.ranks.iter().zip(net.weights()).enumerate() {
            let k = w.nrows().min(w.ncols());
            if *s == 0 || *s > k {
                return Err(Error::Validation(format!(
                    "layer {}: rank {s} outside 1..={k}",
                    l + 1
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RankLayerReport {
    pub layer: usize,
    pub rank: usize,
    pub op_err: f64,
    pub fro_err: f64,
    pub op_norm: f64,
    pub fro_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankCompression {
    #[serde(skip)]
    pub network: DenseNetwork,
    pub layers: Vec<RankLayerReport>,
    pub b_x: f64,
    /// `Σ_ℓ (Π_{k>ℓ}‖W^k‖_op)·σ_{s_ℓ+1}(W^ℓ)·(Π_{k<ℓ}‖W^k‖_op)·B_x`
    pub per_layer_bound: f64,
    /// `V0·R2^{L−1}·B_x·Σ_ℓ s_ℓ^{−α}`, present when a decay fit was supplied.
    pub r_hat_envelope: Option<f64>,
    pub realized_error: f64,
}

pub fn compress_by_rank(
    net: &DenseNetwork,
    plan: &RankPlan,
    data: &Dataset,
    fit: Option<&DecayFit>,
) -> Result<RankCompression> {
    plan.validate(net)?;
    let mut weights = Vec::with_capacity(net.depth());
    let mut layers = Vec::with_capacity(net.depth());
    for (l, (w, &s)) in net.weights().iter().zip(&plan.ranks).enumerate() {
        let t = truncate_rank(w, s)?;
        let norms = netfwd::matrix_norms(w)?;
        layers.push(RankLayerReport {
            layer: l + 1,
            rank: s,
            op_err: t.op_err,
            fro_err: t.fro_err,
            op_norm: norms.op,
            fro_norm: norms.fro,
        });
        weights.push(t.matrix);
    }
    let network = DenseNetwork::new(weights, net.clip_level())?;
    let b_x = data.bound_x();
    let ops: Vec<f64> = layers.iter().map(|l| l.op_norm).collect();
    let per_layer_bound = layers
        .iter()
        .enumerate()
        .map(|(l, r)| {
            let others: f64 = ops
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != l)
                .map(|(_, v)| v)
                .product();
            others * r.op_err * b_x
        })
        .sum();
    let r2 = ops.iter().copied().fold(0.0, f64::max);
    let r_hat_envelope = fit.map(|f| {
        let depth = net.depth() as i32;
        f.scale
            * r2.powi(depth - 1)
            * b_x
            * plan.ranks.iter().map(|&s| (s as f64).powf(-f.exponent)).sum::<f64>()
    });
    let realized_error = netfwd::empirical_l2_distance(net, &network, data)?;
    Ok(RankCompression {
        network,
        layers,
        b_x,
        per_layer_bound,
        r_hat_envelope,
        realized_error,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSelection {
    /// Sampled node indices, duplicates kept.
    pub indices: Vec<usize>,
    #[serde(skip)]
    pub a_hat: DMatrix<f64>,
    pub tau: Vec<f64>,
    pub attempts: usize,
    pub slack: f64,
    pub a_hat_op: f64,
    /// `Σ_{j∈J} 1/τ′_j`
    pub inv_tau_sum: f64,
}

fn restrict(sigma: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| sigma[(rows[i], cols[j])])
}

/// `Â = Σ_{F,J}(Σ_{J,J} + diag τ)^{−1}`.
pub fn reconstruction_matrix(sigma: &DMatrix<f64>, indices: &[usize], tau: &[f64]) -> Result<DMatrix<f64>> {
    let mut sjj = restrict(sigma, indices, indices);
    for (i, t) in tau.iter().enumerate() {
        sjj[(i, i)] += t;
    }
    let sjf = restrict(sigma, indices, &(0..sigma.nrows()).collect::<Vec<_>>());
    Ok(linalg::solve_spd(&sjj, &sjf)?.transpose())
}

/// `λ_min(4λ·Σ(Σ+λI)^{−1} − (Σ − Â Σ_{J,F}))`.
pub fn check_guarantee(
    cov: &CovarianceStat,
    lambda: f64,
    indices: &[usize],
    a_hat: &DMatrix<f64>,
) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Validation("node selection needs at least one index".into()));
    }
    let m = cov.dim();
    if a_hat.shape() != (m, indices.len()) || indices.iter().any(|&j| j >= m) {
        return Err(Error::Dimension(format!(
            "Â is {}x{}, expected {m}x{}",
            a_hat.nrows(),
            a_hat.ncols(),
            indices.len()
        )));
    }
    let sigma = &cov.matrix;
    let shifted = sigma + DMatrix::identity(m, m) * lambda;
    // Σ(Σ+λI)^{-1} = (Σ+λI)^{-1}Σ since both share eigenvectors
    let ridge = linalg::solve_spd(&shifted, sigma)? * (4.0 * lambda);
    let sjf = restrict(sigma, indices, &(0..m).collect::<Vec<_>>());
    let residual = sigma - a_hat * sjf;
    let diff = ridge - residual;
    let diff = (&diff + diff.transpose()) * 0.5;
    Ok(linalg::sym_eigen(&diff)?.values.last().copied().unwrap_or(0.0))
}

/// Recommended node count `⌈5N log(80N)⌉` clamped to `[1, m]`.
pub fn recommended_width(dof: f64, m: usize) -> usize {
    let raw = (5.0 * dof * (80.0 * dof).ln()).ceil();
    if !(raw >= 1.0) {
        1
    } else {
        (raw as usize).min(m).max(1)
    }
}

/// Samples `m_sharp` nodes proportional to ridge leverage scores until the
/// guarantee slack, the `Â` norm cap and the inverse-score budget all hold.
pub fn select_nodes(
    cov: &CovarianceStat,
    lambda: f64,
    m_sharp: usize,
    seed: u64,
    layer: usize,
    max_retries: usize,
) -> Result<NodeSelection> {
    if m_sharp == 0 {
        return Err(Error::Validation("node selection needs at least one index".into()));
    }
    let m = cov.dim();
    let lev = spectra::leverage_scores(cov, lambda)?;
    let recommended = recommended_width(lev.dof, usize::MAX);
    if m_sharp < recommended {
        warn!("layer {layer}: m♯ = {m_sharp} below recommended {recommended}");
    }
    let dist = WeightedIndex::new(&lev.tau_prime)
        .map_err(|e| Error::Numerical(format!("leverage distribution: {e}")))?;
    let sigma_op = linalg::op_norm(&cov.matrix)?;
    let tol = -SLACK_TOL * sigma_op;
    let a_cap = (20.0 * m as f64 / 3.0).sqrt() + 1e-9;
    let budget = 5.0 / 3.0 * m_sharp as f64 * m as f64;
    let mut best_slack = f64::NEG_INFINITY;
    for attempt in 0..max_retries {
        let mut g = rng::substream(seed, Domain::NodeSelection, layer as u64, attempt as u64);
        let indices: Vec<usize> = (0..m_sharp).map(|_| dist.sample(&mut g)).collect();
        let inv_tau_sum: f64 = indices.iter().map(|&j| 1.0 / lev.tau_prime[j]).sum();
        let tau: Vec<f64> = indices
            .iter()
            .map(|&j| m_sharp as f64 * lambda * lev.tau_prime[j])
            .collect();
        let a_hat = reconstruction_matrix(&cov.matrix, &indices, &tau)?;
        let slack = check_guarantee(cov, lambda, &indices, &a_hat)?;
        let a_hat_op = linalg::op_norm(&a_hat)?;
        best_slack = best_slack.max(slack);
        debug!("layer {layer} attempt {attempt}: slack {slack:e}, ‖Â‖ {a_hat_op}, Σ1/τ′ {inv_tau_sum}");
        if slack >= tol && a_hat_op <= a_cap && inv_tau_sum <= budget {
            return Ok(NodeSelection {
                indices,
                a_hat,
                tau,
                attempts: attempt + 1,
                slack,
                a_hat_op,
                inv_tau_sum,
            });
        }
    }
    Err(Error::Selection {
        layer,
        attempts: max_retries,
        best_slack,
    })
}

/// `r̃_ℓ ≡ r̃` for every layer.
pub fn uniform_schedule(depth: usize, r_tilde: f64) -> Vec<f64> {
    vec![r_tilde; depth]
}

/// `RF²r̃_ℓ² = c0²r_ℓ²R2²/ℓ` with `r_{ℓ+1} = R2 r_ℓ + RF r̃_ℓ`, seeded by `r̃_1`.
pub fn theorem4_schedule(depth: usize, r_tilde_1: f64, r2: f64, rf: f64, c0: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(depth);
    let mut r = rf * r_tilde_1 / (c0 * r2);
    for l in 1..=depth {
        let rt = c0 * r2 * r / (rf * (l as f64).sqrt());
        out.push(rt);
        r = r2 * r + rf * rt;
    }
    out
}

/// Optional covariance envelope `σ_j(Σ̂_ℓ) ≤ U0 j^{−β}` used for the width diagnostic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CovEnvelope {
    pub u0: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovLayerReport {
    pub layer: usize,
    pub width: usize,
    pub r_tilde: f64,
    pub lambda: f64,
    pub dof: f64,
    pub m_sharp: usize,
    pub compressed: bool,
    pub selection: Option<NodeSelection>,
    /// Width from the envelope form `((β+1)/(β−1))ṁ + 8(Σ R2^{ℓ−1−k} RF r̃_k)²/r̃_ℓ²`.
    pub envelope_width: Option<f64>,
    pub op_norm: f64,
    pub fro_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceCompression {
    #[serde(skip)]
    pub network: DenseNetwork,
    pub layers: Vec<CovLayerReport>,
    /// Tracked `r_1, …, r_{L+1}`.
    pub r: Vec<f64>,
    pub r_hat: f64,
    /// `Σ_k R2^{L−k} RF r̃_k`
    pub r_hat_envelope: f64,
    pub realized_error: f64,
    pub widths: Vec<usize>,
    pub class_cap_op: f64,
    pub class_cap_fro: f64,
    pub realized_op_norms: Vec<f64>,
    pub realized_fro_norms: Vec<f64>,
}

impl CovarianceCompression {
    pub fn min_slack_ratio(&self) -> Option<f64> {
        self.layers
            .iter()
            .filter_map(|l| l.selection.as_ref().map(|s| s.slack))
            .reduce(f64::min)
    }
}

/// Compresses layers 2..=L in turn; `targets[ℓ−1]` is `r̃_ℓ`. Layer 1's input is
/// the data and is never reduced, so `r̃_1` only enters the envelope value.
pub fn compress_by_covariance(
    net: &DenseNetwork,
    data: &Dataset,
    targets: &[f64],
    seed: u64,
    max_retries: usize,
    envelope: Option<CovEnvelope>,
) -> Result<CovarianceCompression> {
    let depth = net.depth();
    if targets.len() != depth {
        return Err(Error::Validation(format!(
            "{} targets for a depth-{depth} network",
            targets.len()
        )));
    }
    if targets.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(Error::Domain("targets r̃_ℓ must be positive and finite".into()));
    }
    let norms = netfwd::layer_norms(net)?;
    let (r2, rf) = (norms.r2, norms.rf);
    let widths = net.widths();
    let n = data.len();

    let mut weights: Vec<DMatrix<f64>> = net.weights().to_vec();
    let mut phi = data.inputs().clone();
    let mut r = vec![0.0; depth + 1];
    let mut layers = Vec::with_capacity(depth);

    for l in 1..=depth {
        let w = &net.weights()[l - 1];
        let (op, fro) = (norms.layers[l - 1].op, norms.layers[l - 1].fro);
        let rt = targets[l - 1];
        let lambda = rt * rt / 4.0;
        let mut report = CovLayerReport {
            layer: l,
            width: widths[l - 1],
            r_tilde: rt,
            lambda,
            dof: f64::NAN,
            m_sharp: widths[l - 1],
            compressed: false,
            selection: None,
            envelope_width: None,
            op_norm: op,
            fro_norm: fro,
        };
        if l >= 2 {
            let cov = CovarianceStat::new(linalg::second_moment(&phi), n)?;
            let dof = spectra::degrees_of_freedom(&cov, lambda)?;
            let m_sharp = recommended_width(dof, widths[l - 1]);
            report.dof = dof;
            report.m_sharp = m_sharp;
            report.envelope_width = envelope.map(|e| envelope_width(e, l, widths[l - 1], targets, r2, rf));
            if m_sharp < widths[l - 1] && dof > 0.0 {
                let sel = match select_nodes(&cov, lambda, m_sharp, seed, l, max_retries) {
                    Ok(s) => s,
                    Err(Error::Selection {
                        attempts,
                        best_slack,
                        ..
                    }) => {
                        return Err(Error::Selection {
                            layer: l,
                            attempts,
                            best_slack,
                        })
                    }
                    Err(e) => return Err(e),
                };
                let prev = &weights[l - 2];
                weights[l - 2] =
                    DMatrix::from_fn(sel.indices.len(), prev.ncols(), |i, j| prev[(sel.indices[i], j)]);
                weights[l - 1] = w * &sel.a_hat;
                phi = DMatrix::from_fn(n, sel.indices.len(), |i, j| phi[(i, sel.indices[j])]);
                report.compressed = true;
                report.selection = Some(sel);
            }
        }
        r[l] = op * r[l - 1] + if report.compressed { fro * rt } else { 0.0 };
        if l < depth {
            phi = &phi * weights[l - 1].transpose();
            linalg::relu_in_place(&mut phi);
        }
        layers.push(report);
    }

    let network = DenseNetwork::new(weights, net.clip_level())?;
    let realized_error = netfwd::empirical_l2_distance(net, &network, data)?;
    let r_hat_envelope = targets
        .iter()
        .enumerate()
        .map(|(k, rt)| r2.powi((depth - 1 - k) as i32) * rf * rt)
        .sum();
    let max_m = *widths.iter().max().unwrap() as f64;
    let cap = (20.0 * max_m / 3.0).sqrt();
    let realized = netfwd::layer_norms(&network)?;
    Ok(CovarianceCompression {
        widths: network.widths(),
        r_hat: r[depth],
        r,
        r_hat_envelope,
        realized_error,
        class_cap_op: cap * r2,
        class_cap_fro: cap * rf,
        realized_op_norms: realized.layers.iter().map(|l| l.op).collect(),
        realized_fro_norms: realized.layers.iter().map(|l| l.fro).collect(),
        layers,
        network,
    })
}

fn envelope_width(e: CovEnvelope, l: usize, width: usize, targets: &[f64], r2: f64, rf: f64) -> f64 {
    let rt = targets[l - 1];
    let level = rt * rt / 4.0;
    let m_dot = (1..=width)
        .filter(|&j| e.u0 * (j as f64).powf(-e.beta) >= level)
        .max()
        .unwrap_or(0) as f64;
    let carried: f64 = (1..l)
        .map(|k| r2.powi((l - 1 - k) as i32) * rf * targets[k - 1])
        .sum();
    (e.beta + 1.0) / (e.beta - 1.0) * m_dot + 8.0 * carried * carried / (rt * rt)
}
