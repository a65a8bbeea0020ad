use compbound::linalg;
use compbound::netfwd::{capture_activations, empirical_l2_distance, layer_norms, Dataset, DenseNetwork};
use compbound::rng::{self, Domain};
use compbound::spectra::{self, ConvWeight, SpectralProfile, SpectrumSource};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng::stream(seed, Domain::Synth, 500);
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut g))
}

fn power_iteration(w: &DMatrix<f64>) -> f64 {
    let wtw = w.transpose() * w;
    let mut v = DVector::from_element(w.ncols(), 1.0);
    for _ in 0..5000 {
        let next = &wtw * &v;
        v = &next / next.norm();
    }
    (&wtw * &v).norm().sqrt()
}

#[test]
fn op_norm_matches_power_iteration() {
    for seed in 0..5 {
        let w = gaussian(9, 7, seed);
        let n = layer_norms(&DenseNetwork::new(vec![w.clone()], 1.0).unwrap()).unwrap();
        assert!((n.r2 - power_iteration(&w)).abs() < 1e-8);
    }
}

#[test]
fn network_is_lipschitz_with_product_of_op_norms() {
    let ws = vec![gaussian(6, 4, 1), gaussian(5, 6, 2), gaussian(1, 5, 3)];
    let net = DenseNetwork::new(ws.clone(), 1e6).unwrap();
    let lip: f64 = ws.iter().map(|w| linalg::op_norm(w).unwrap()).product();
    let mut g = rng::stream(4, Domain::Synth, 0);
    for _ in 0..50 {
        let x: Vec<f64> = (0..4).map(|_| g.random_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..4).map(|_| g.random_range(-1.0..1.0)).collect();
        let d: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let fx = net.forward(&x).unwrap();
        let fy = net.forward(&y).unwrap();
        assert!((fx - fy).norm() <= lip * d + 1e-12);
    }
}

#[test]
fn activations_respect_norm_products_and_recompute() {
    let ws = vec![gaussian(6, 4, 5), gaussian(5, 6, 6), gaussian(2, 5, 7)];
    let net = DenseNetwork::new(ws.clone(), 1.0).unwrap();
    let data = Dataset::new(gaussian(30, 4, 8)).unwrap();
    let acts = capture_activations(&net, &data).unwrap();
    let mut bound = data.bound_x();
    for l in 0..acts.layers.len() {
        for i in 0..30 {
            assert!(linalg::row_norm(&acts.layers[l], i) <= bound + 1e-12);
        }
        if l + 1 < acts.layers.len() {
            let mut next = &acts.layers[l] * ws[l].transpose();
            linalg::relu_in_place(&mut next);
            assert!(linalg::max_abs(&(next - &acts.layers[l + 1])) < 1e-12);
        }
        bound *= linalg::op_norm(&ws[l]).unwrap();
    }
}

#[test]
fn forward_output_is_bounded_by_clip_level() {
    let net = DenseNetwork::new(vec![gaussian(8, 3, 9) * 50.0, gaussian(3, 8, 10)], 2.5).unwrap();
    let out = net.forward_batch(&gaussian(40, 3, 11)).unwrap();
    assert!(out.iter().all(|v| v.abs() <= 2.5));
}

#[test]
fn distance_matches_sample_loop() {
    let a = DenseNetwork::new(vec![gaussian(5, 3, 12), gaussian(2, 5, 13)], 1.5).unwrap();
    let b = DenseNetwork::new(vec![gaussian(5, 3, 14), gaussian(2, 5, 15)], 1.5).unwrap();
    let x = gaussian(25, 3, 16);
    let d = empirical_l2_distance(&a, &b, &Dataset::new(x.clone()).unwrap()).unwrap();
    let mut s = 0.0;
    for i in 0..25 {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        s += (a.forward(&row).unwrap() - b.forward(&row).unwrap()).norm_squared();
    }
    assert!((d - (s / 25.0).sqrt()).abs() < 1e-12);
}

#[test]
fn weight_spectrum_squares_sum_to_frobenius() {
    let w = gaussian(20, 15, 17);
    let p = spectra::weight_spectrum(&w).unwrap();
    let s: f64 = p.values.iter().map(|v| v * v).sum();
    assert!((s - linalg::fro_norm(&w).powi(2)).abs() < 1e-9);
}

#[test]
fn covariance_trace_identity() {
    let phi = gaussian(50, 7, 18);
    let c = spectra::covariance_of(&phi).unwrap();
    let rows: f64 = (0..50).map(|i| linalg::row_norm(&phi, i).powi(2)).sum::<f64>() / 50.0;
    assert!((c.matrix.trace() - rows).abs() < 1e-10);
}

#[test]
fn dof_matches_linear_solve_and_tends_to_rank() {
    let phi = gaussian(40, 10, 19) * DMatrix::from_fn(10, 10, |i, j| if i == j && i < 6 { 1.0 } else { 0.0 });
    let c = spectra::covariance_of(&phi).unwrap();
    for lam in [1e-3, 0.1, 1.0, 10.0] {
        let direct = (&c.matrix + DMatrix::identity(10, 10) * lam)
            .lu()
            .solve(&c.matrix)
            .unwrap()
            .trace();
        assert!((spectra::degrees_of_freedom(&c, lam).unwrap() - direct).abs() < 1e-9);
    }
    let sigma1 = linalg::op_norm(&c.matrix).unwrap();
    let tiny = spectra::degrees_of_freedom(&c, 1e-9 * sigma1).unwrap();
    assert_eq!(tiny.round() as usize, 6);
}

#[test]
fn conv_folding_reconstruction_identity() {
    let mut g = rng::stream(20, Domain::Synth, 3);
    let data: Vec<f64> = (0..5 * 3 * 3 * 3).map(|_| StandardNormal.sample(&mut g)).collect();
    let w = ConvWeight::new(5, 3, 3, data).unwrap();
    let k = spectra::conv_fold_similarity(&w);
    let eig = linalg::sym_eigen(&k).unwrap();
    let f = w.fold();
    for s in 0..=5 {
        let p = eig.vectors.columns(0, s).transpose();
        let resid = linalg::fro_norm(&(&f - p.transpose() * (&p * &f)));
        let tail: f64 = eig.values[s..].iter().map(|v| v.max(0.0)).sum::<f64>().sqrt();
        assert!((resid - tail).abs() < 1e-9);
    }
}

#[test]
fn decay_fit_recovers_planted_exponents() {
    for &alpha in &[0.75, 1.0, 1.5, 2.5] {
        let v: Vec<f64> = (1..=64).map(|j| 3.0 * (j as f64).powf(-alpha)).collect();
        let f = spectra::fit_decay(&SpectralProfile::new(v.clone(), SpectrumSource::Weight).unwrap()).unwrap();
        assert!((f.exponent - alpha).abs() < 0.05);
        assert!(f.holds_on(&v));
    }
}
