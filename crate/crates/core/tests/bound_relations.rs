use compbound::boundcalc::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Inputs {
    widths: Vec<usize>,
    alpha: f64,
    beta: f64,
    v0: f64,
    u0: f64,
    r2: f64,
    rf: f64,
    b_x: f64,
}

fn inputs() -> impl Strategy<Value = Inputs> {
    (
        proptest::collection::vec(2usize..48, 2..6),
        0.55f64..4.0,
        1.1f64..5.0,
        0.2f64..3.0,
        0.2f64..3.0,
        0.5f64..2.0,
        0.5f64..4.0,
        0.1f64..3.0,
    )
        .prop_map(|(mut widths, alpha, beta, v0, u0, r2, rf, b_x)| {
            widths.push(1);
            Inputs { widths, alpha, beta, v0, u0, r2, rf, b_x }
        })
}

fn cfg(n: f64, t: f64, m: f64, b_x: f64) -> BoundConfig {
    BoundConfig { kappa: Some(2.0), ..BoundConfig::new(n, t, m, b_x) }
}

/// Term vectors of every evaluator at one configuration.
fn all_terms(p: &Inputs, c: &BoundConfig) -> Vec<(&'static str, Vec<f64>)> {
    let depth = p.widths.len() - 1;
    let ranks = corollary1_ranks(&p.widths, p.v0, p.alpha, p.r2.powi(depth as i32 - 1) * p.b_x);
    let terms = |r: BoundReport| r.terms.iter().map(|t| t.value).collect::<Vec<_>>();
    let covering = CoveringParams { s1: 50.0, s2: 5.0, s3: 2.0, q: 0.5 };
    let norms = NormSummary {
        depth,
        width: *p.widths.iter().max().unwrap(),
        r2: p.r2,
        rf: p.rf,
        r21: 3.0,
        r11: 9.0,
        kappa: 2.0,
    };
    vec![
        ("t1", terms(theorem1_assemble(0.1, 0.05, &covering, c).unwrap())),
        ("t2", terms(theorem2_bound(&p.widths, &ranks, p.v0, p.alpha, p.r2, c).unwrap())),
        ("cor1", terms(corollary1_bound(&p.widths, p.v0, p.alpha, p.r2, c).unwrap())),
        ("cor1lip", terms(corollary1_lip(&p.widths, p.v0, p.alpha, c).unwrap())),
        ("t3", vec![theorem3_rad_term(&p.widths, c).unwrap()]),
        ("t4", terms(theorem4_bound(&p.widths, p.alpha, p.v0, p.beta, p.u0, p.r2, p.rf, c).unwrap())),
        ("t4lip", terms(theorem4_lip(&p.widths, p.alpha, p.v0, p.beta, p.u0, p.r2, p.rf, c).unwrap())),
        ("sparse", vec![example1_sparse_bound(depth, 100.0, c).unwrap()]),
        ("baselines", baseline_rates(&norms, c.n).unwrap().iter().map(|t| t.value).collect()),
    ]
}

fn grid(lo: f64, hi: f64) -> Vec<f64> {
    (0..20).map(|k| lo * (hi / lo).powf(k as f64 / 19.0)).collect()
}

fn sums(v: &[(&str, Vec<f64>)]) -> Vec<f64> {
    v.iter().map(|(_, t)| t.iter().sum()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corollary_never_exceeds_theorem2_at_its_ranks(p in inputs(), n in 10.0f64..1e7, m in 1.0f64..4.0) {
        let c = cfg(n, 1.0, m, p.b_x);
        let depth = p.widths.len() - 1;
        let ranks = corollary1_ranks(&p.widths, p.v0, p.alpha, p.r2.powi(depth as i32 - 1) * p.b_x);
        let cor = corollary1_bound(&p.widths, p.v0, p.alpha, p.r2, &c).unwrap();
        let thm = theorem2_bound(&p.widths, &ranks, p.v0, p.alpha, p.r2, &c).unwrap();
        prop_assert!(cor.total <= thm.total * (1.0 + 1e-12), "{} > {}", cor.total, thm.total);
    }

    // √(log³n / n) rises below n = e³, so the scans start at 100
    #[test]
    fn doubling_n_never_increases_a_term(p in inputs(), n in 100.0f64..1e7) {
        let a = all_terms(&p, &cfg(n, 1.5, 2.0, p.b_x));
        let b = all_terms(&p, &cfg(2.0 * n, 1.5, 2.0, p.b_x));
        for ((name, x), (_, y)) in a.iter().zip(&b) {
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                prop_assert!(*v <= *u * (1.0 + 1e-12), "{name} term {i}: {u} → {v}");
            }
        }
    }

    #[test]
    fn totals_monotone_on_grids(p in inputs()) {
        let ns: Vec<Vec<f64>> = grid(100.0, 1e8).into_iter().map(|n| sums(&all_terms(&p, &cfg(n, 1.5, 2.0, p.b_x)))).collect();
        let ts: Vec<Vec<f64>> = grid(1.0, 50.0).into_iter().map(|t| sums(&all_terms(&p, &cfg(1e4, t, 2.0, p.b_x)))).collect();
        let ms: Vec<Vec<f64>> = grid(1.0, 50.0).into_iter().map(|m| sums(&all_terms(&p, &cfg(1e4, 1.5, m, p.b_x)))).collect();
        for w in ns.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                prop_assert!(*b <= *a * (1.0 + 1e-12));
            }
        }
        for w in ts.windows(2).chain(ms.windows(2)) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                prop_assert!(*b >= *a * (1.0 - 1e-12));
            }
        }
    }
}
