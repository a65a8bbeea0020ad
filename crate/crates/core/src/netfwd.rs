//! Bias-free dense ReLU networks with output clipping.
//!
//! `f(x) = G(W^L η(… η(W^1 x) …))` where `η` is ReLU and `G` clips every
//! output coordinate to `[-M, M]`. Internal layers are never clipped.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, relu_in_place};
use crate::rng::{self, Domain};
use crate::tensor_store::{LayerKind, Manifest, TensorFile};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    weights: Vec<DMatrix<f64>>,
    clip_level: f64,
}

impl DenseNetwork {
    /// `weights[ℓ]` maps layer ℓ's input (width `m_ℓ`) to width `m_{ℓ+1}`.
    pub fn new(weights: Vec<DMatrix<f64>>, clip_level: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Validation("network needs at least one layer".into()));
        }
        if !(clip_level > 0.0) || !clip_level.is_finite() {
            return Err(Error::Validation(format!(
                "clip level must be positive and finite, got {clip_level}"
            )));
        }
        for (l, pair) in weights.windows(2).enumerate() {
            if pair[0].nrows() != pair[1].ncols() {
                return Err(Error::Dimension(format!(
                    "layer {} outputs {} values but layer {} expects {}",
                    l + 1,
                    pair[0].nrows(),
                    l + 2,
                    pair[1].ncols()
                )));
            }
        }
        Ok(DenseNetwork {
            weights,
            clip_level,
        })
    }

    /// Builds the network described by an all-dense manifest.
    pub fn from_manifest(m: &Manifest, t: &TensorFile) -> Result<Self> {
        let mut weights = Vec::with_capacity(m.depth());
        for l in &m.layers {
            if l.kind != LayerKind::Dense {
                return Err(Error::Validation(format!(
                    "layer {:?} is a conv layer; forward evaluation is dense-only",
                    l.name
                )));
            }
            weights.push(t.require(&l.weight_tensor)?.to_matrix()?);
        }
        DenseNetwork::new(weights, m.clip_level)
    }

    pub fn weights(&self) -> &[DMatrix<f64>] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<DMatrix<f64>> {
        self.weights
    }

    pub fn clip_level(&self) -> f64 {
        self.clip_level
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    /// `(m_1, …, m_{L+1})`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.weights.iter().map(|m| m.ncols()).collect();
        w.push(self.weights.last().unwrap().nrows());
        w
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().unwrap().nrows()
    }

    fn clip(&self, v: f64) -> f64 {
        v.clamp(-self.clip_level, self.clip_level)
    }

    pub fn forward(&self, x: &[f64]) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "input has {} entries, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h = DVector::from_column_slice(x);
        for (l, w) in self.weights.iter().enumerate() {
            if l > 0 {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            h = w * h;
        }
        h.iter_mut().for_each(|v| *v = self.clip(*v));
        Ok(h)
    }

    /// Row-wise forward pass over an `n × m_1` input matrix; returns `n × m_{L+1}`.
    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "inputs have {} columns, network expects {}",
                inputs.ncols(),
                self.input_dim()
            )));
        }
        let mut h = inputs.clone();
        for (l, w) in self.weights.iter().enumerate() {
            if l > 0 {
                relu_in_place(&mut h);
            }
            h = &h * w.transpose();
        }
        h.iter_mut().for_each(|v| *v = self.clip(*v));
        Ok(h)
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    inputs: DMatrix<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>) -> Result<Self> {
        if inputs.nrows() == 0 {
            return Err(Error::Validation("dataset needs at least one sample".into()));
        }
        linalg::check_finite(&inputs, "dataset")?;
        Ok(Dataset { inputs })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// `B_x`: the largest Euclidean norm of an input row.
    pub fn bound_x(&self) -> f64 {
        (0..self.inputs.nrows())
            .map(|i| linalg::row_norm(&self.inputs, i))
            .fold(0.0, f64::max)
    }
}

/// Inputs to each layer, one `n × m_ℓ` matrix per layer; `layers[0]` is the data.
#[derive(Debug, Clone)]
pub struct ActivationSet {
    pub layers: Vec<DMatrix<f64>>,
}

impl ActivationSet {
    pub fn sample_count(&self) -> usize {
        self.layers[0].nrows()
    }
}

pub fn capture_activations(net: &DenseNetwork, data: &Dataset) -> Result<ActivationSet> {
    if data.inputs().ncols() != net.input_dim() {
        return Err(Error::Dimension(format!(
            "dataset has {} features, network expects {}",
            data.inputs().ncols(),
            net.input_dim()
        )));
    }
    let mut layers = Vec::with_capacity(net.depth());
    layers.push(data.inputs().clone());
    for w in &net.weights[..net.depth() - 1] {
        let mut next = layers.last().unwrap() * w.transpose();
        relu_in_place(&mut next);
        layers.push(next);
    }
    Ok(ActivationSet { layers })
}

/// `√(Σ_i ‖f_a(x_i) − f_b(x_i)‖² / n)` on clipped outputs.
pub fn empirical_l2_distance(a: &DenseNetwork, b: &DenseNetwork, data: &Dataset) -> Result<f64> {
    if a.input_dim() != b.input_dim() || a.output_dim() != b.output_dim() {
        return Err(Error::Dimension(format!(
            "networks map {}→{} and {}→{}",
            a.input_dim(),
            a.output_dim(),
            b.input_dim(),
            b.output_dim()
        )));
    }
    let fa = a.forward_batch(data.inputs())?;
    let fb = b.forward_batch(data.inputs())?;
    // fixed summation order: by sample, then by coordinate
    let mut total = 0.0;
    for i in 0..fa.nrows() {
        let mut row = 0.0;
        for j in 0..fa.ncols() {
            let d = fa[(i, j)] - fb[(i, j)];
            row += d * d;
        }
        total += row;
    }
    Ok((total / fa.nrows() as f64).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerNorm {
    pub op: f64,
    pub fro: f64,
    /// Sum of column Euclidean norms.
    pub norm_2_1: f64,
    /// Sum of absolute entries.
    pub norm_1_1: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerNorms {
    pub layers: Vec<LayerNorm>,
    /// `R2 = max_ℓ ‖W^ℓ‖_op`
    pub r2: f64,
    /// `RF = max_ℓ ‖W^ℓ‖_F`
    pub rf: f64,
    pub r21: f64,
    pub r11: f64,
}

pub fn matrix_norms(w: &DMatrix<f64>) -> Result<LayerNorm> {
    let norm_2_1 = w
        .column_iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    Ok(LayerNorm {
        op: linalg::op_norm(w)?,
        fro: linalg::fro_norm(w),
        norm_2_1,
        norm_1_1: w.iter().map(|v| v.abs()).sum(),
    })
}

pub fn layer_norms(net: &DenseNetwork) -> Result<LayerNorms> {
    let layers = net
        .weights()
        .iter()
        .map(matrix_norms)
        .collect::<Result<Vec<_>>>()?;
    let max = |f: fn(&LayerNorm) -> f64| layers.iter().map(f).fold(0.0, f64::max);
    Ok(LayerNorms {
        r2: max(|l| l.op),
        rf: max(|l| l.fro),
        r21: max(|l| l.norm_2_1),
        r11: max(|l| l.norm_1_1),
        layers,
    })
}

/// Maps layer-`from` inputs through layers `from..=to` (linear, ReLU between, no
/// ReLU after the last map).
fn propagate(net: &DenseNetwork, h: &DMatrix<f64>, from: usize, to: usize) -> DMatrix<f64> {
    let mut h = h * net.weights[from].transpose();
    for w in &net.weights[from + 1..=to] {
        relu_in_place(&mut h);
        h = &h * w.transpose();
    }
    h
}

#[derive(Debug, Clone, Serialize)]
pub struct KappaEstimate {
    pub kappa: f64,
    pub draws: usize,
    pub label: &'static str,
}

/// Interlayer Lipschitz ratio observed on the training set.
///
/// For every layer pair `ℓ ≤ ℓ'` and `draws` random perturbations `ξ` of the
/// stacked layer-ℓ inputs, records `‖M_{ℓ,ℓ'}(φ_ℓ + ξ) − M_{ℓ,ℓ'}(φ_ℓ)‖_F / ‖ξ‖_F`.
/// This is a lower estimate of κ, not a certificate.
pub fn estimate_kappa(
    net: &DenseNetwork,
    acts: &ActivationSet,
    draws: usize,
    relative_scale: f64,
    seed: u64,
) -> Result<KappaEstimate> {
    let depth = net.depth();
    if acts.layers.len() != depth {
        return Err(Error::Dimension(format!(
            "activation set has {} layers, network has {depth}",
            acts.layers.len()
        )));
    }
    let mut kappa = 0.0_f64;
    for from in 0..depth {
        let base_in = &acts.layers[from];
        let scale = relative_scale * linalg::fro_norm(base_in).max(1e-12)
            / ((base_in.nrows() * base_in.ncols()) as f64).sqrt();
        for to in from..depth {
            let base_out = propagate(net, base_in, from, to);
            for d in 0..draws {
                let mut g = rng::substream(seed, Domain::Kappa, (from * depth + to) as u64, d as u64);
                let xi = DMatrix::from_fn(base_in.nrows(), base_in.ncols(), |_, _| {
                    let z: f64 = StandardNormal.sample(&mut g);
                    z * scale
                });
                let out = propagate(net, &(base_in + &xi), from, to);
                let denom = linalg::fro_norm(&xi);
                if denom > 0.0 {
                    kappa = kappa.max(linalg::fro_norm(&(out - &base_out)) / denom);
                }
            }
        }
    }
    Ok(KappaEstimate {
        kappa,
        draws,
        label: "heuristic lower estimate",
    })
}
