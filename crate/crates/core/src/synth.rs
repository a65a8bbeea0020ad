//! Seeded fixture networks with planted spectral structure.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::netfwd::{capture_activations, Dataset, DenseNetwork};
use crate::rng::{self, Domain};
use crate::tensor_store::{LayerKind, LayerSpec, Manifest, TensorEntry, TensorFile};

pub const TENSOR_FILE: &str = "tensors.cbt";

#[derive(Debug, Clone)]
pub struct Fixture {
    pub manifest: Manifest,
    pub tensors: TensorFile,
}

#[derive(Debug, Clone)]
pub struct SynthParams {
    /// `m_1, …, m_{L+1}`
    pub widths: Vec<usize>,
    pub n: usize,
    pub clip_level: f64,
    pub seed: u64,
}

impl SynthParams {
    fn check(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.contains(&0) {
            return Err(Error::Validation(format!("invalid widths {:?}", self.widths)));
        }
        if self.n == 0 {
            return Err(Error::Validation("n must be positive".into()));
        }
        Ok(())
    }

    fn depth(&self) -> usize {
        self.widths.len() - 1
    }
}

fn gaussian(rows: usize, cols: usize, g: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(g))
}

/// `rows × cols` matrix with orthonormal columns (`cols ≤ rows`).
pub fn random_orthonormal(rows: usize, cols: usize, g: &mut ChaCha8Rng) -> DMatrix<f64> {
    gaussian(rows, cols, g).qr().q()
}

/// `U diag(spectrum) Vᵀ` with random orthonormal factors; the spectrum is
/// truncated or zero-padded to `min(out, inp)`.
pub fn planted_matrix(out: usize, inp: usize, spectrum: &[f64], g: &mut ChaCha8Rng) -> DMatrix<f64> {
    let k = out.min(inp);
    let u = random_orthonormal(out, k, g);
    let v = random_orthonormal(inp, k, g);
    let mut us = u;
    for j in 0..k {
        let s = spectrum.get(j).copied().unwrap_or(0.0);
        us.column_mut(j).scale_mut(s);
    }
    us * v.transpose()
}

pub fn power_law(len: usize, scale: f64, exponent: f64) -> Vec<f64> {
    (1..=len).map(|j| scale * (j as f64).powf(-exponent)).collect()
}

fn scale_rows_to(x: &mut DMatrix<f64>, b_x: f64) {
    let max = (0..x.nrows())
        .map(|i| crate::linalg::row_norm(x, i))
        .fold(0.0, f64::max);
    if max > 0.0 {
        *x *= b_x / max;
    }
}

fn dense_fixture(p: &SynthParams, weights: Vec<DMatrix<f64>>, inputs: DMatrix<f64>) -> Result<Fixture> {
    network_fixture(&DenseNetwork::new(weights, p.clip_level)?, inputs)
}

/// Manifest and tensors for a dense network, with activations recorded on `inputs`.
pub fn network_fixture(net: &DenseNetwork, inputs: DMatrix<f64>) -> Result<Fixture> {
    let n = inputs.nrows();
    let acts = capture_activations(&net, &Dataset::new(inputs.clone())?)?;
    let mut tensors = TensorFile::new();
    let mut layers = Vec::with_capacity(net.depth());
    let mut activation_tensors = BTreeMap::new();
    for (l, w) in net.weights().iter().enumerate() {
        let name = format!("l{}", l + 1);
        let wname = format!("W{}", l + 1);
        tensors.push(TensorEntry::from_matrix(&wname, w));
        layers.push(LayerSpec {
            name: name.clone(),
            kind: LayerKind::Dense,
            weight_tensor: wname,
            in_width: w.ncols(),
            out_width: w.nrows(),
            filter_size: None,
        });
        let aname = format!("A{}", l + 1);
        tensors.push(TensorEntry::from_matrix(&aname, &acts.layers[l]));
        activation_tensors.insert(name, aname);
    }
    tensors.push(TensorEntry::from_matrix("X", &inputs));
    Ok(Fixture {
        manifest: Manifest {
            layers,
            activation_tensors,
            clip_level: net.clip_level(),
            sample_count: n,
            tensor_file: TENSOR_FILE.into(),
            input_tensor: Some("X".into()),
        },
        tensors,
    })
}

/// Weights with `σ_j = V0 j^{−α}` (zero beyond `rank` when given) and Gaussian
/// inputs rescaled so the largest row norm equals `b_x`.
pub fn lowrank_weights(p: &SynthParams, v0: f64, alpha: f64, rank: Option<usize>, b_x: f64) -> Result<Fixture> {
    p.check()?;
    let mut weights = Vec::with_capacity(p.depth());
    for l in 0..p.depth() {
        let (inp, out) = (p.widths[l], p.widths[l + 1]);
        let mut spec = power_law(inp.min(out), v0, alpha);
        if let Some(r) = rank {
            spec.iter_mut().skip(r).for_each(|s| *s = 0.0);
        }
        let mut g = rng::stream(p.seed, Domain::Synth, l as u64);
        weights.push(planted_matrix(out, inp, &spec, &mut g));
    }
    let mut g = rng::stream(p.seed, Domain::Synth, 1000);
    let mut x = gaussian(p.n, p.widths[0], &mut g);
    scale_rows_to(&mut x, b_x);
    dense_fixture(p, weights, x)
}

/// Inputs whose empirical second moment has eigenvalues exactly `U0 j^{−β}`;
/// weights follow `σ_j = j^{−weight_alpha}` scaled to unit operator norm.
pub fn lowrank_cov(p: &SynthParams, u0: f64, beta: f64, weight_alpha: f64) -> Result<Fixture> {
    p.check()?;
    let m1 = p.widths[0];
    if p.n < m1 {
        return Err(Error::Validation(format!(
            "planted covariance needs n >= m_1 ({} < {m1})",
            p.n
        )));
    }
    let mut weights = Vec::with_capacity(p.depth());
    for l in 0..p.depth() {
        let (inp, out) = (p.widths[l], p.widths[l + 1]);
        let mut g = rng::stream(p.seed, Domain::Synth, l as u64);
        weights.push(planted_matrix(out, inp, &power_law(inp.min(out), 1.0, weight_alpha), &mut g));
    }
    let mut g = rng::stream(p.seed, Domain::Synth, 1000);
    let q = random_orthonormal(p.n, m1, &mut g);
    let v = random_orthonormal(m1, m1, &mut g);
    let mu = power_law(m1, u0, beta);
    let mut qs = q * (p.n as f64).sqrt();
    for j in 0..m1 {
        qs.column_mut(j).scale_mut(mu[j].sqrt());
    }
    dense_fixture(p, weights, qs * v.transpose())
}

/// Gaussian weights with a `density` fraction of entries kept per layer.
pub fn sparse(p: &SynthParams, density: f64, b_x: f64) -> Result<Fixture> {
    p.check()?;
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::Validation(format!("density must lie in (0,1], got {density}")));
    }
    let mut weights = Vec::with_capacity(p.depth());
    for l in 0..p.depth() {
        let (inp, out) = (p.widths[l], p.widths[l + 1]);
        let mut g = rng::stream(p.seed, Domain::Synth, l as u64);
        let scale = 1.0 / (inp as f64).sqrt();
        weights.push(DMatrix::from_fn(out, inp, |_, _| {
            let keep = g.random::<f64>() < density;
            let z: f64 = StandardNormal.sample(&mut g);
            if keep {
                z * scale
            } else {
                0.0
            }
        }));
    }
    let mut g = rng::stream(p.seed, Domain::Synth, 1000);
    let mut x = gaussian(p.n, p.widths[0], &mut g);
    scale_rows_to(&mut x, b_x);
    dense_fixture(p, weights, x)
}

/// Conv activations `[n, c, s, s]` with channel covariance spectrum `∝ j^{−β}`.
fn conv_activations(n: usize, c: usize, s: usize, beta: f64, g: &mut ChaCha8Rng) -> Vec<f64> {
    let mix = random_orthonormal(c, c, g);
    let mut mixed = mix;
    for (j, sd) in power_law(c, 1.0, beta / 2.0).into_iter().enumerate() {
        mixed.column_mut(j).scale_mut(sd);
    }
    let mut out = Vec::with_capacity(n * c * s * s);
    for _ in 0..n {
        let a = &mixed * gaussian(c, s * s, g);
        // row-major [c, s*s]
        for i in 0..c {
            for k in 0..s * s {
                out.push(a[(i, k)]);
            }
        }
    }
    out
}

/// Small conv network with a dense head: three 3×3 conv layers and one dense
/// layer, planted weight and channel-covariance decay.
pub fn toy_cnn(seed: u64) -> Result<Fixture> {
    let n = 24;
    let spatial = 6;
    let k = 3;
    let chans = [3usize, 8, 16, 16];
    let mut tensors = TensorFile::new();
    let mut layers = Vec::new();
    let mut activation_tensors = BTreeMap::new();
    for l in 0..3 {
        let (inp, out) = (chans[l], chans[l + 1]);
        let mut g = rng::stream(seed, Domain::Synth, l as u64);
        let fold = planted_matrix(out, inp * k * k, &power_law(out.min(inp * k * k), 1.0, 1.2), &mut g);
        let data: Vec<f64> = (0..out).flat_map(|i| fold.row(i).iter().copied().collect::<Vec<_>>()).collect();
        let name = format!("c{}", l + 1);
        let wname = format!("W{}", l + 1);
        tensors.push(TensorEntry::from_f64(&wname, vec![out as u32, inp as u32, k as u32, k as u32], &data));
        let mut ga = rng::stream(seed, Domain::Synth, 100 + l as u64);
        let acts = conv_activations(n, inp, spatial, 1.5 + 0.5 * l as f64, &mut ga);
        let aname = format!("A{}", l + 1);
        tensors.push(TensorEntry::from_f64(
            &aname,
            vec![n as u32, inp as u32, spatial as u32, spatial as u32],
            &acts,
        ));
        activation_tensors.insert(name.clone(), aname);
        layers.push(LayerSpec {
            name,
            kind: LayerKind::Conv,
            weight_tensor: wname,
            in_width: inp,
            out_width: out,
            filter_size: Some(k),
        });
    }
    let mut g = rng::stream(seed, Domain::Synth, 3);
    let head = planted_matrix(10, 16, &power_law(10, 1.0, 1.0), &mut g);
    tensors.push(TensorEntry::from_matrix("W4", &head));
    let mut ga = rng::stream(seed, Domain::Synth, 103);
    let pooled = conv_activations(n, 16, 1, 2.5, &mut ga);
    tensors.push(TensorEntry::from_f64("A4", vec![n as u32, 16], &pooled));
    activation_tensors.insert("l4".into(), "A4".into());
    layers.push(LayerSpec {
        name: "l4".into(),
        kind: LayerKind::Dense,
        weight_tensor: "W4".into(),
        in_width: 16,
        out_width: 10,
        filter_size: None,
    });
    Ok(Fixture {
        manifest: Manifest {
            layers,
            activation_tensors,
            clip_level: 1.0,
            sample_count: n,
            tensor_file: TENSOR_FILE.into(),
            input_tensor: None,
        },
        tensors,
    })
}
