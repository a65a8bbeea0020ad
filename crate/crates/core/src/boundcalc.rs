//! Closed-form generalization-gap bounds and their building blocks.
//!
//! Every evaluator returns nonnegative terms that are summed into a
//! [`BoundReport`]. Unpinned universal constants come from [`BoundConfig`]
//! and are echoed in each report. `log` is natural and guarded as
//! `ln(max(n, 3))`.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub const LOG_GUARD: f64 = 3.0;
pub const RSTAR_LO: f64 = 1e-12;
pub const RSTAR_HI: f64 = 1e6;
/// Relative bracket width at which bisection stops.
pub const RSTAR_REL_TOL: f64 = 1e-9;

pub fn log_n(n: f64) -> f64 {
    n.max(LOG_GUARD).ln()
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundConfig {
    pub n: f64,
    pub t: f64,
    pub clip_m: f64,
    pub b_x: f64,
    pub c: f64,
    pub c_q: f64,
    /// Defaults to `1/(2α)` where α is known.
    pub q: Option<f64>,
    pub kappa: Option<f64>,
}

impl BoundConfig {
    pub fn new(n: f64, t: f64, clip_m: f64, b_x: f64) -> Self {
        BoundConfig {
            n,
            t,
            clip_m,
            b_x,
            c: 1.0,
            c_q: 1.0,
            q: None,
            kappa: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Domain(format!("{what} = {v} out of range")));
        if !(self.n >= 1.0) || !self.n.is_finite() {
            return bad("n", self.n);
        }
        if !(self.t >= 1.0) || !self.t.is_finite() {
            return bad("t", self.t);
        }
        if !(self.clip_m >= 1.0) || !self.clip_m.is_finite() {
            return bad("M", self.clip_m);
        }
        if !(self.b_x >= 0.0) || !self.b_x.is_finite() {
            return bad("B_x", self.b_x);
        }
        if !(self.c > 0.0) || !(self.c_q > 0.0) {
            return bad("C", self.c.min(self.c_q));
        }
        if let Some(q) = self.q {
            if !(q > 0.0 && q < 1.0) {
                return bad("q", q);
            }
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0) || !k.is_finite() {
                return bad("kappa", k);
            }
        }
        Ok(())
    }

    pub fn log_n(&self) -> f64 {
        log_n(self.n)
    }

    pub fn q_for(&self, alpha: f64) -> f64 {
        self.q.unwrap_or(1.0 / (2.0 * alpha))
    }

    fn constants(&self) -> Value {
        json!({
            "C": self.c,
            "C_q": self.c_q,
            "q": self.q,
            "log": "ln(max(n, 3))",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Term {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub theorem: String,
    pub terms: Vec<Term>,
    pub total: f64,
    /// Reported alongside but not summed.
    pub diagnostics: Vec<Term>,
    pub inputs: Value,
    pub constants: Value,
}

impl BoundReport {
    fn build(theorem: &str, terms: Vec<(&str, f64)>, diagnostics: Vec<(&str, f64)>, inputs: Value, cfg: &BoundConfig) -> Result<Self> {
        let terms: Vec<Term> = terms
            .into_iter()
            .map(|(n, v)| Term { name: n.into(), value: v })
            .collect();
        if let Some(t) = terms.iter().find(|t| !t.value.is_finite() || t.value < 0.0) {
            return Err(Error::Numerical(format!("{theorem}: term {} = {}", t.name, t.value)));
        }
        let total = terms.iter().map(|t| t.value).sum();
        Ok(BoundReport {
            theorem: theorem.into(),
            terms,
            total,
            diagnostics: diagnostics
                .into_iter()
                .map(|(n, v)| Term { name: n.into(), value: v })
                .collect(),
            inputs,
            constants: cfg.constants(),
        })
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms
            .iter()
            .chain(&self.diagnostics)
            .find(|t| t.name == name)
            .map(|t| t.value)
    }

    pub const CSV_HEADER: &'static str = "theorem,kind,name,value";

    /// Long-format rows: one per term, one per diagnostic and a `total` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for t in &self.terms {
            let _ = writeln!(s, "{},term,{},{:e}", self.theorem, t.name, t.value);
        }
        let _ = writeln!(s, "{},total,total,{:e}", self.theorem, self.total);
        for t in &self.diagnostics {
            let _ = writeln!(s, "{},diagnostic,{},{:e}", self.theorem, t.name, t.value);
        }
        s
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.5) || !alpha.is_finite() {
        return Err(Error::Domain(format!("α must exceed 1/2, got {alpha}")));
    }
    Ok(())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 1.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("β must exceed 1, got {beta}")));
    }
    Ok(())
}

fn check_widths(widths: &[usize]) -> Result<usize> {
    if widths.len() < 2 || widths.contains(&0) {
        return Err(Error::Validation(format!(
            "widths must list m_1..m_{{L+1}} (all positive), got {widths:?}"
        )));
    }
    Ok(widths.len() - 1)
}

/// `S · ln(ε⁻¹ L (B∨1)^{L−1} (m+1)^{2L})`, floored at 0.
pub fn covering_entropy_sparse(depth: usize, m: usize, s: f64, b: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("ε must be positive, got {eps}")));
    }
    let l = depth as f64;
    let inner = -eps.ln() + l.ln() + (l - 1.0) * b.max(1.0).ln() + 2.0 * l * ((m + 1) as f64).ln();
    Ok((s * inner).max(0.0))
}

/// `Σ s_ℓ(m_ℓ+m_{ℓ+1}) · ln(ε⁻¹ L (R2∨1)^{2L−1} (max m+1)^{2L})`, floored at 0.
pub fn covering_entropy_lowrank(widths: &[usize], ranks: &[usize], r2: f64, eps: f64) -> Result<f64> {
    let depth = check_widths(widths)?;
    if ranks.len() != depth {
        return Err(Error::Validation(format!("{} ranks for depth {depth}", ranks.len())));
    }
    for (l, &s) in ranks.iter().enumerate() {
        if s > widths[l].min(widths[l + 1]) {
            return Err(Error::Validation(format!("layer {}: rank {s} exceeds width", l + 1)));
        }
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("ε must be positive, got {eps}")));
    }
    let l = depth as f64;
    let max_m = *widths.iter().max().unwrap() as f64;
    let count: f64 = ranks
        .iter()
        .enumerate()
        .map(|(i, &s)| (s * (widths[i] + widths[i + 1])) as f64)
        .sum();
    let inner = -eps.ln() + l.ln() + (2.0 * l - 1.0) * r2.max(1.0).ln() + 2.0 * l * (max_m + 1.0).ln();
    Ok((count * inner).max(0.0))
}

/// Entropy coefficients in `S1 + S2 log(1/ε) + S3 ε^{−2q}`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CoveringParams {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub q: f64,
}

impl CoveringParams {
    pub fn validate(&self) -> Result<()> {
        if [self.s1, self.s2, self.s3].iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("S1, S2, S3 must be finite and nonnegative".into()));
        }
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::Domain(format!("q must lie in (0,1), got {}", self.q)));
        }
        Ok(())
    }
}

pub fn phi_of_r(p: &CoveringParams, cfg: &BoundConfig, r: f64) -> f64 {
    let n = cfg.n;
    let m = cfg.clip_m;
    let k = p.s1 + p.s2 * cfg.log_n();
    let first = 1.0 / n + m * k / n + r * (k / n).sqrt();
    let second = cfg.c_q
        * (1.0 / n
            + (m.powf(1.0 - p.q) * p.s3 / n).powf(1.0 / (1.0 + p.q))
            + r.powf(1.0 - p.q) * (p.s3 / n).sqrt());
    cfg.c * first.max(second)
}

/// Left side minus `1/2` of the fixed-point inequality; decreasing in `r`.
pub fn rstar_gap(p: &CoveringParams, cfg: &BoundConfig, r: f64) -> f64 {
    let (n, m, t) = (cfg.n, cfg.clip_m, cfg.t);
    8.0 * phi_of_r(p, cfg, r) / (r * r) + m * (4.0 * t / (r * r * n)).sqrt() + 2.0 * m * m * t / (r * r * n) - 0.5
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RStar {
    pub r: f64,
    /// `√(C[M(S1+S2 log n)/n + (M^{1−q}S3/n)^{1/(1+q)} + (1+Mt)/n])`
    pub closed_form: f64,
    pub iterations: usize,
}

pub fn r_star(p: &CoveringParams, cfg: &BoundConfig) -> Result<RStar> {
    p.validate()?;
    cfg.validate()?;
    let (mut lo, mut hi) = (RSTAR_LO, RSTAR_HI);
    if rstar_gap(p, cfg, hi) > 0.0 {
        return Err(Error::Bracket(format!(
            "inequality fails at r = {hi:e}; bound is vacuous for these inputs"
        )));
    }
    if rstar_gap(p, cfg, lo) <= 0.0 {
        return Err(Error::Bracket(format!("inequality already holds at r = {lo:e}")));
    }
    let mut iterations = 0;
    while hi / lo - 1.0 >= RSTAR_REL_TOL {
        let mid = (lo * hi).sqrt();
        if rstar_gap(p, cfg, mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    let (n, m) = (cfg.n, cfg.clip_m);
    let closed = cfg.c
        * (m * (p.s1 + p.s2 * cfg.log_n()) / n
            + (m.powf(1.0 - p.q) * p.s3 / n).powf(1.0 / (1.0 + p.q))
            + (1.0 + m * cfg.t) / n);
    Ok(RStar {
        r: hi,
        closed_form: closed.sqrt(),
        iterations,
    })
}

/// Generalization-gap bound from a complexity bound on the compressed class
/// and a compression radius `r̂`.
pub fn theorem1_assemble(main_rad: f64, r_hat: f64, p: &CoveringParams, cfg: &BoundConfig) -> Result<BoundReport> {
    if !(main_rad >= 0.0) || !(r_hat >= 0.0) {
        return Err(Error::Domain("main_rad and r̂ must be nonnegative".into()));
    }
    let rs = r_star(p, cfg)?;
    let r_dot = (2.0 * (r_hat * r_hat + rs.r * rs.r)).sqrt();
    let (n, t, m) = (cfg.n, cfg.t, cfg.clip_m);
    BoundReport::build(
        "t1",
        vec![
            ("main_rademacher", 2.0 * main_rad),
            ("confidence", (2.0 * m * t / n).sqrt()),
            ("bias_phi", cfg.c * phi_of_r(p, cfg, r_dot)),
            ("bias_sqrt", cfg.c * r_dot * (t / n).sqrt()),
            ("bias_small", cfg.c * (1.0 + t * m) / n),
        ],
        vec![
            ("r_star", rs.r),
            ("r_star_closed_form", rs.closed_form),
            ("r_hat", r_hat),
            ("r_dot", r_dot),
        ],
        json!({"main_rad": main_rad, "r_hat": r_hat, "covering": p, "n": n, "t": t, "M": m}),
        cfg,
    )
}

fn a2_value(depth: usize, sum_m: f64, core: f64, alpha: f64, n: f64) -> f64 {
    depth as f64 * sum_m * core.powf(1.0 / alpha) / n
}

/// Rank-truncation bound with explicit ranks.
pub fn theorem2_bound(widths: &[usize], ranks: &[usize], v0: f64, alpha: f64, r2: f64, cfg: &BoundConfig) -> Result<BoundReport> {
    check_alpha(alpha)?;
    cfg.validate()?;
    let depth = check_widths(widths)?;
    if ranks.len() != depth {
        return Err(Error::Validation(format!("{} ranks for depth {depth}", ranks.len())));
    }
    for (l, &s) in ranks.iter().enumerate() {
        if s == 0 || s > widths[l].min(widths[l + 1]) {
            return Err(Error::Validation(format!("layer {}: rank {s} out of range", l + 1)));
        }
    }
    let (n, m, l) = (cfg.n, cfg.clip_m, depth as f64);
    let growth = v0 * r2.powi(depth as i32 - 1) * cfg.b_x;
    let r_hat = growth * ranks.iter().map(|&s| (s as f64).powf(-alpha)).sum::<f64>();
    let params: f64 = ranks
        .iter()
        .enumerate()
        .map(|(i, &s)| (s * (widths[i] + widths[i + 1])) as f64)
        .sum();
    let a1 = l * params * cfg.log_n() / n;
    let sum_m: f64 = widths[..depth].iter().map(|&w| w as f64).sum();
    let a2 = a2_value(depth, sum_m, 2.0 * l * growth, alpha, n);
    let c = cfg.c;
    BoundReport::build(
        "t2",
        vec![
            ("m_a1", c * m * a1),
            ("a2_rate", c * m.powf((2.0 * alpha - 1.0) / (2.0 * alpha + 1.0)) * a2.powf(2.0 * alpha / (1.0 + 2.0 * alpha))),
            ("r_hat_a2", c * (r_hat.powf(2.0 * (1.0 - 2.0 * alpha)) * a2).sqrt()),
            ("r_hat_m_a1", c * (r_hat + m) * a1.sqrt()),
            ("small", c * (1.0 + cfg.t * m) / n),
        ],
        vec![("r_hat", r_hat), ("a1", a1), ("a2", a2)],
        json!({"widths": widths, "ranks": ranks, "V0": v0, "alpha": alpha, "R2": r2, "B_x": cfg.b_x, "n": n, "t": cfg.t, "M": m}),
        cfg,
    )
}

/// `s_ℓ = min{m_ℓ, m_{ℓ+1}, ⌈(L·V0·R2^{L−1}·B_x)^{1/α}⌉}`.
pub fn corollary1_ranks(widths: &[usize], v0: f64, alpha: f64, growth: f64) -> Vec<usize> {
    let depth = widths.len() - 1;
    let target = ((depth as f64 * v0 * growth).powf(1.0 / alpha)).ceil().max(1.0);
    (0..depth)
        .map(|l| {
            let cap = widths[l].min(widths[l + 1]);
            if target >= cap as f64 {
                cap
            } else {
                target as usize
            }
        })
        .collect()
}

fn corollary1_impl(theorem: &str, widths: &[usize], v0: f64, alpha: f64, growth: f64, cfg: &BoundConfig) -> Result<BoundReport> {
    check_alpha(alpha)?;
    cfg.validate()?;
    let depth = check_widths(widths)?;
    let (n, m, l) = (cfg.n, cfg.clip_m, depth as f64);
    let sum_m: f64 = widths[..depth].iter().map(|&w| w as f64).sum();
    let core = 2.0 * l * v0 * growth * cfg.b_x;
    let a2 = a2_value(depth, sum_m, core, alpha, n);
    let ranks = corollary1_ranks(widths, v0, alpha, growth * cfg.b_x);
    let c = cfg.c;
    BoundReport::build(
        theorem,
        vec![
            ("width_rate", c * m.powf(1.0 - 1.0 / (2.0 * alpha)) * (a2 * cfg.log_n()).sqrt()),
            ("a2_rate", c * m.powf((2.0 * alpha - 1.0) / (2.0 * alpha + 1.0)) * a2.powf(2.0 * alpha / (2.0 * alpha + 1.0))),
            ("small", c * (1.0 + cfg.t * m) / n),
        ],
        vec![("a2", a2)]
            .into_iter()
            .chain(ranks.iter().map(|&s| ("rank", s as f64)))
            .collect(),
        json!({"widths": widths, "ranks": ranks, "V0": v0, "alpha": alpha, "B_x": cfg.b_x, "n": n, "t": cfg.t, "M": m}),
        cfg,
    )
}

pub fn corollary1_bound(widths: &[usize], v0: f64, alpha: f64, r2: f64, cfg: &BoundConfig) -> Result<BoundReport> {
    let depth = check_widths(widths)?;
    corollary1_impl("cor1", widths, v0, alpha, r2.powi(depth as i32 - 1), cfg)
}

/// Same as [`corollary1_bound`] with `R2^{L−1}` replaced by `κ²`.
pub fn corollary1_lip(widths: &[usize], v0: f64, alpha: f64, cfg: &BoundConfig) -> Result<BoundReport> {
    let kappa = cfg
        .kappa
        .ok_or_else(|| Error::MissingPrerequisite("κ is required for the Lipschitz variant".into()))?;
    corollary1_impl("cor1lip", widths, v0, alpha, kappa * kappa, cfg)
}

/// `C·√(L·Σ m♯_{ℓ+1} m♯_ℓ / n · log n)`.
pub fn theorem3_rad_term(widths: &[usize], cfg: &BoundConfig) -> Result<f64> {
    cfg.validate()?;
    let depth = check_widths(widths)?;
    let prod: f64 = widths.windows(2).map(|w| (w[0] * w[1]) as f64).sum();
    Ok(cfg.c * (depth as f64 * prod / cfg.n * cfg.log_n()).sqrt())
}

pub fn theorem3_report(widths: &[usize], cfg: &BoundConfig) -> Result<BoundReport> {
    let v = theorem3_rad_term(widths, cfg)?;
    BoundReport::build("t3", vec![("rademacher", v)], vec![], json!({"widths": widths, "n": cfg.n}), cfg)
}

/// `exp(¼(2√L − 1))`, the depth factor inside `Q_L`.
pub fn q_l_depth_factor(depth: usize) -> f64 {
    (0.25 * (2.0 * (depth as f64).sqrt() - 1.0)).exp()
}

/// `ln Q_L`; `lip` drops the `R2` factors.
pub fn ln_q_l(depth: usize, u0: f64, beta: f64, r2: f64, rf: f64, lip: bool) -> f64 {
    let l = depth as f64;
    let mut inner = 4f64.ln() + u0.ln() + 2.0 * rf.ln() + 0.25 * (2.0 * l.sqrt() - 1.0) - 4.0 * 0.25f64.ln();
    if !lip {
        inner += l * r2.max(1.0).ln() - 2.0 * l * r2.min(1.0).ln();
    }
    2.0 / beta * inner
}

#[allow(clippy::too_many_arguments)]
fn theorem4_impl(
    theorem: &str,
    widths: &[usize],
    alpha: f64,
    v0: f64,
    beta: f64,
    u0: f64,
    r2: f64,
    rf: f64,
    kappa: Option<f64>,
    cfg: &BoundConfig,
) -> Result<BoundReport> {
    check_alpha(alpha)?;
    check_beta(beta)?;
    cfg.validate()?;
    let depth = check_widths(widths)?;
    if !(u0 > 0.0 && v0 > 0.0 && r2 > 0.0 && rf > 0.0) {
        return Err(Error::Domain("U0, V0, R2, RF must be positive".into()));
    }
    let (n, m, l) = (cfg.n, cfg.clip_m, depth as f64);
    let lip = kappa.is_some();
    let growth = match kappa {
        Some(k) => k * k,
        None => r2.powi(depth as i32 - 1),
    };
    let p_l = (2.0 * l * v0 * growth * cfg.b_x).powf(1.0 / alpha);
    let ln_q = ln_q_l(depth, u0, beta, r2, rf, lip);
    let pq = p_l.max(ln_q.exp());
    let sum_m: f64 = widths[..depth].iter().map(|&w| w as f64).sum();
    let log = cfg.log_n();
    let l_exp = 1.0 + beta / (4.0 * alpha / (2.0 * alpha - 1.0) + beta);
    let m_exp = (4.0 / beta) / (4.0 / beta + 2.0 * (1.0 - 1.0 / (2.0 * alpha)));
    let width = m * (pq * l.powf(l_exp) / n * sum_m.powf(m_exp) * log.powi(3)).sqrt();
    let a2 = m.powf((2.0 * alpha - 1.0) / (2.0 * alpha + 1.0))
        * (l * p_l * sum_m / n * log).powf(2.0 * alpha / (2.0 * alpha + 1.0));
    let depth_scale = match kappa {
        Some(k) => k * k * rf * rf * l * l,
        None => rf * rf * l * l / (r2 * r2),
    };
    let depth_term = m * depth_scale * (log.powi(3) / n).sqrt();
    let c = cfg.c;
    BoundReport::build(
        theorem,
        vec![
            ("width_rate", c * width),
            ("a2_rate", c * a2),
            ("depth", c * depth_term),
            ("small", c * (1.0 + m * cfg.t) / n),
        ],
        vec![
            ("p_l", p_l),
            ("ln_q_l", ln_q),
            ("q_l_depth_factor", q_l_depth_factor(depth)),
            ("width_exponent", m_exp),
            ("depth_exponent", l_exp),
        ],
        json!({"widths": widths, "alpha": alpha, "V0": v0, "beta": beta, "U0": u0, "R2": r2, "RF": rf,
               "kappa": kappa, "B_x": cfg.b_x, "n": n, "t": cfg.t, "M": m}),
        cfg,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn theorem4_bound(widths: &[usize], alpha: f64, v0: f64, beta: f64, u0: f64, r2: f64, rf: f64, cfg: &BoundConfig) -> Result<BoundReport> {
    theorem4_impl("t4", widths, alpha, v0, beta, u0, r2, rf, None, cfg)
}

#[allow(clippy::too_many_arguments)]
pub fn theorem4_lip(widths: &[usize], alpha: f64, v0: f64, beta: f64, u0: f64, r2: f64, rf: f64, cfg: &BoundConfig) -> Result<BoundReport> {
    let kappa = cfg
        .kappa
        .ok_or_else(|| Error::MissingPrerequisite("κ is required for the Lipschitz variant".into()))?;
    theorem4_impl("t4lip", widths, alpha, v0, beta, u0, r2, rf, Some(kappa), cfg)
}

/// `C·M·√(L·S·log n / n)`.
pub fn example1_sparse_bound(depth: usize, s: f64, cfg: &BoundConfig) -> Result<f64> {
    cfg.validate()?;
    if !(s >= 0.0) {
        return Err(Error::Domain(format!("S must be nonnegative, got {s}")));
    }
    Ok(cfg.c * cfg.clip_m * (depth as f64 * s * cfg.log_n() / cfg.n).sqrt())
}

pub fn example1_report(depth: usize, s: f64, cfg: &BoundConfig) -> Result<BoundReport> {
    let v = example1_sparse_bound(depth, s, cfg)?;
    BoundReport::build("sparse", vec![("rademacher", v)], vec![], json!({"L": depth, "S": s, "n": cfg.n, "M": cfg.clip_m}), cfg)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormSummary {
    pub depth: usize,
    pub width: usize,
    pub r2: f64,
    pub rf: f64,
    /// Sum of column Euclidean norms.
    pub r21: f64,
    /// Sum of absolute entries.
    pub r11: f64,
    pub kappa: f64,
}

/// Norm-based comparison rates, keyed by origin.
pub fn baseline_rates(s: &NormSummary, n: f64) -> Result<Vec<Term>> {
    if [s.r2, s.rf, s.r21, s.r11, s.kappa].iter().any(|v| !(*v > 0.0)) || !(n >= 1.0) {
        return Err(Error::Domain("norms and n must be positive".into()));
    }
    let l = s.depth as f64;
    let li = s.depth as i32;
    let m = s.width as f64;
    let sq = n.sqrt();
    let third = 2.0 / 3.0;
    let rates = [
        ("neyshabur_2015", 2f64.powi(li) * s.rf.powi(li) / sq),
        ("bartlett_2017", s.r2.powi(li) / sq * (l * s.r21.powf(third) / s.r2.powf(third)).powf(1.5)),
        (
            "wei_ma_2019",
            (1.0 + l * s.kappa.powf(4.0 / 3.0) * s.r21.powf(third) + l * s.kappa.powf(third) * s.r11.powf(third)).powf(1.5) / sq,
        ),
        ("neyshabur_2018", s.r2.powi(li) / sq * (l.powi(3) * m * s.rf * s.rf / (s.r2 * s.r2)).sqrt()),
        ("golowich_2018", s.rf.powi(li) * n.powf(-0.25).min((l / n).sqrt())),
        ("vc_dimension", s.r2.powi(li) * (l * l * m * m).sqrt() / sq),
    ];
    Ok(rates
        .into_iter()
        .map(|(k, v)| Term { name: k.into(), value: v })
        .collect())
}

pub fn baselines_report(s: &NormSummary, cfg: &BoundConfig) -> Result<BoundReport> {
    let rates = baseline_rates(s, cfg.n)?;
    // rates are alternatives, not summands
    BoundReport::build(
        "baselines",
        vec![],
        rates.iter().map(|t| (t.name.as_str(), t.value)).collect(),
        json!({"norms": s, "n": cfg.n}),
        cfg,
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerRanks {
    pub name: String,
    pub in_width: usize,
    pub out_width: usize,
    /// `k²` for conv layers, 1 for dense.
    pub filter_area: usize,
    pub cov_in: usize,
    pub cov_out: usize,
    pub weight_rank: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntrinsicRow {
    pub name: String,
    pub original: u64,
    pub covariance: u64,
    pub weight: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntrinsicTable {
    pub rows: Vec<IntrinsicRow>,
    pub total_original: u64,
    pub total_covariance: u64,
    pub total_weight: u64,
}

/// Parameter counts: original `m_{ℓ+1}m_ℓk²`, covariance `ṁ_{ℓ+1}ṁ_ℓk²`,
/// weight `s m_ℓ k² + m_{ℓ+1} s`.
pub fn intrinsic_dimensions(layers: &[LayerRanks]) -> Result<IntrinsicTable> {
    let mut rows = Vec::with_capacity(layers.len());
    for l in layers {
        if l.cov_in > l.in_width || l.cov_out > l.out_width || l.weight_rank > l.out_width.min(l.in_width * l.filter_area) {
            return Err(Error::Validation(format!("layer {}: effective rank exceeds width", l.name)));
        }
        let k = l.filter_area as u64;
        let (mi, mo, s) = (l.in_width as u64, l.out_width as u64, l.weight_rank as u64);
        rows.push(IntrinsicRow {
            name: l.name.clone(),
            original: mo * mi * k,
            covariance: l.cov_out as u64 * l.cov_in as u64 * k,
            weight: s * mi * k + mo * s,
        });
    }
    Ok(IntrinsicTable {
        total_original: rows.iter().map(|r| r.original).sum(),
        total_covariance: rows.iter().map(|r| r.covariance).sum(),
        total_weight: rows.iter().map(|r| r.weight).sum(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg(n: f64) -> BoundConfig {
        BoundConfig::new(n, 1.0, 1.0, 1.0)
    }

    fn zero_params() -> CoveringParams {
        CoveringParams { s1: 0.0, s2: 0.0, s3: 0.0, q: 0.5 }
    }

    #[test]
    fn sparse_entropy_examples() {
        assert_eq!(covering_entropy_sparse(3, 4, 0.0, 2.0, 0.1).unwrap(), 0.0);
        let v = covering_entropy_sparse(1, 1, 1.0, 1.0, 1.0).unwrap();
        assert!((v - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lowrank_entropy_examples() {
        assert_eq!(covering_entropy_lowrank(&[2, 2], &[0], 1.0, 1.0).unwrap(), 0.0);
        let v = covering_entropy_lowrank(&[2, 2], &[1], 1.0, 1.0).unwrap();
        assert!((v - 4.0 * 9f64.ln()).abs() < 1e-12);
        assert!(covering_entropy_lowrank(&[2, 2], &[3], 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_entropy_rstar_matches_quadratic() {
        let c = BoundConfig::new(16.0, 1.0, 1.0, 1.0);
        let r = r_star(&zero_params(), &c).unwrap().r;
        // φ = C(1/n + r·0) on the first branch
        let a = 8.0 / 16.0 + 2.0 / 16.0;
        let b = 2.0 * (1.0f64 / 16.0).sqrt();
        let oracle = b + (b * b + 2.0 * a).sqrt();
        assert!((r - oracle).abs() < 1e-6 * oracle);
    }

    #[test]
    fn rstar_certificate() {
        let p = CoveringParams { s1: 5.0, s2: 2.0, s3: 3.0, q: 0.4 };
        let c = BoundConfig::new(500.0, 2.0, 1.5, 1.0);
        let r = r_star(&p, &c).unwrap().r;
        assert!(rstar_gap(&p, &c, r) <= 0.0);
        assert!(rstar_gap(&p, &c, r * (1.0 - 1e-6)) > 0.0);
    }

    #[test]
    fn rstar_bracket_failure() {
        let p = CoveringParams { s1: 1e30, s2: 0.0, s3: 0.0, q: 0.5 };
        assert!(matches!(r_star(&p, &cfg(10.0)), Err(Error::Bracket(_))));
    }

    #[test]
    fn theorem1_structure_with_zero_radius() {
        let c = cfg(100.0);
        let rep = theorem1_assemble(0.0, 0.0, &zero_params(), &c).unwrap();
        let rs = rep.term("r_star").unwrap();
        assert!((rep.term("r_dot").unwrap() - 2f64.sqrt() * rs).abs() < 1e-12);
        let sum: f64 = rep.terms.iter().map(|t| t.value).sum();
        assert_eq!(sum, rep.total);
        assert_eq!(rep.term("main_rademacher").unwrap(), 0.0);
    }

    #[test]
    fn theorem1_radius_only_moves_bias_terms() {
        let c = cfg(200.0);
        let p = CoveringParams { s1: 3.0, s2: 1.0, s3: 0.0, q: 0.5 };
        let a = theorem1_assemble(0.1, 0.0, &p, &c).unwrap();
        let b = theorem1_assemble(0.1, 0.5, &p, &c).unwrap();
        for name in ["main_rademacher", "confidence", "bias_small"] {
            assert_eq!(a.term(name), b.term(name));
        }
        assert!(b.term("bias_sqrt").unwrap() > a.term("bias_sqrt").unwrap());
    }

    #[test]
    fn theorem2_hand_instance() {
        // widths (4,4,2) keep s = (2,2) within min(m_ℓ, m_{ℓ+1})
        let c = BoundConfig::new(100.0, 1.0, 1.0, 1.0);
        let rep = theorem2_bound(&[4, 4, 2], &[2, 2], 1.0, 1.0, 1.0, &c).unwrap();
        assert!((rep.term("r_hat").unwrap() - 1.0).abs() < 1e-12);
        let a1 = 2.0 * (2.0 * 8.0 + 2.0 * 6.0) * 100f64.ln() / 100.0;
        assert!((rep.term("a1").unwrap() - a1).abs() < 1e-12);
        let a2 = 2.0 * 8.0 * 4.0 / 100.0;
        assert!((rep.term("a2").unwrap() - a2).abs() < 1e-12);
        assert!(matches!(theorem2_bound(&[4, 4, 2], &[2, 2], 1.0, 0.5, 1.0, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn theorem3_term_example() {
        let e = std::f64::consts::E;
        let v = theorem3_rad_term(&[1, 1, 1], &cfg(e)).unwrap();
        assert!((v - (4.0 * 3f64.ln() / e).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn theorem4_requires_kappa_for_lip() {
        let c = cfg(100.0);
        assert!(matches!(
            theorem4_lip(&[4, 4, 1], 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, &c),
            Err(Error::MissingPrerequisite(_))
        ));
        assert!(matches!(theorem4_bound(&[4, 4, 1], 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, &c), Err(Error::Domain(_))));
    }

    #[test]
    fn theorem4_exponents_vanish_in_the_limit() {
        let c = cfg(1000.0);
        let rep = theorem4_bound(&[8, 8, 1], 1e9, 1.0, 1e9, 1.0, 1.0, 1.0, &c).unwrap();
        assert!(rep.term("width_exponent").unwrap() < 1e-8);
        assert!((rep.term("depth_exponent").unwrap() - 2.0).abs() < 1e-8);
    }

    #[test]
    fn sparse_bound_examples() {
        assert_eq!(example1_sparse_bound(3, 0.0, &cfg(100.0)).unwrap(), 0.0);
        let a = example1_sparse_bound(3, 10.0, &cfg(100.0)).unwrap();
        let b = example1_sparse_bound(3, 10.0, &cfg(400.0)).unwrap();
        assert!((b / a - 0.5 * (400f64.ln() / 100f64.ln()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn golowich_min_branch() {
        let s = NormSummary { depth: 1, width: 4, r2: 1.0, rf: 1.0, r21: 1.0, r11: 1.0, kappa: 1.0 };
        for n in [4.0, 100.0] {
            let r = baseline_rates(&s, n).unwrap();
            let g = r.iter().find(|t| t.name == "golowich_2018").unwrap().value;
            assert!((g - n.powf(-0.25).min((1.0 / n).sqrt())).abs() < 1e-15);
            assert!(r.iter().all(|t| t.value.is_finite() && t.value > 0.0));
        }
    }

    #[test]
    fn intrinsic_examples() {
        let t = intrinsic_dimensions(&[
            LayerRanks { name: "c0".into(), in_width: 3, out_width: 64, filter_area: 9, cov_in: 3, cov_out: 5, weight_rank: 3 },
            LayerRanks { name: "l".into(), in_width: 4096, out_width: 10, filter_area: 1, cov_in: 10, cov_out: 6, weight_rank: 4 },
        ])
        .unwrap();
        assert_eq!(t.rows[0].covariance, 135);
        assert_eq!(t.rows[1].covariance, 60);
        assert_eq!(t.total_original, 64 * 3 * 9 + 4096 * 10);
        assert!(intrinsic_dimensions(&[LayerRanks { name: "x".into(), in_width: 2, out_width: 2, filter_area: 1, cov_in: 3, cov_out: 1, weight_rank: 1 }]).is_err());
    }

    #[test]
    fn report_csv_lists_total() {
        let rep = theorem3_report(&[2, 3, 1], &cfg(50.0)).unwrap();
        assert!(rep.to_csv().contains("t3,total,total,"));
    }

    proptest! {
        #[test]
        fn sparse_entropy_monotone(
            l in 1usize..6, m in 1usize..50, s in 0.0f64..100.0, b in 0.1f64..5.0, eps in 1e-4f64..0.9,
        ) {
            let v = covering_entropy_sparse(l, m, s, b, eps).unwrap();
            prop_assert!(covering_entropy_sparse(l, m, s + 1.0, b, eps).unwrap() >= v);
            prop_assert!(covering_entropy_sparse(l + 1, m, s, b, eps).unwrap() >= v);
            prop_assert!(covering_entropy_sparse(l, m, s, b * 1.5, eps).unwrap() >= v);
            prop_assert!(covering_entropy_sparse(l, m, s, b, eps / 2.0).unwrap() >= v);
        }

        #[test]
        fn lowrank_entropy_grows_with_rank(m in 2usize..20, s in 1usize..10, eps in 1e-4f64..0.9) {
            let s = s.min(m - 1);
            let a = covering_entropy_lowrank(&[m, m, m], &[s, s], 1.3, eps).unwrap();
            let b = covering_entropy_lowrank(&[m, m, m], &[s + 1, s], 1.3, eps).unwrap();
            prop_assert!(b > a);
        }

        #[test]
        fn rstar_monotone(
            s1 in 0.0f64..50.0, s2 in 0.0f64..5.0, s3 in 0.0f64..20.0, q in 0.05f64..0.95,
            n in 50.0f64..1e5, t in 1.0f64..10.0,
        ) {
            let p = CoveringParams { s1, s2, s3, q };
            let base = BoundConfig::new(n, t, 1.0, 1.0);
            let r = r_star(&p, &base).unwrap().r;
            let more_n = r_star(&p, &BoundConfig { n: n * 2.0, ..base.clone() }).unwrap().r;
            let more_t = r_star(&p, &BoundConfig { t: t * 2.0, ..base.clone() }).unwrap().r;
            prop_assert!(more_n <= r * (1.0 + 1e-8));
            prop_assert!(more_t >= r * (1.0 - 1e-8));
        }

        #[test]
        fn evaluators_finite_and_additive(
            alpha in 0.6f64..4.0, beta in 1.1f64..5.0, m in 2usize..64, depth in 1usize..6,
            n in 10.0f64..1e6, r2 in 0.2f64..3.0, rf in 0.5f64..6.0,
        ) {
            let widths: Vec<usize> = std::iter::repeat_n(m, depth).chain([1]).collect();
            let c = BoundConfig { kappa: Some(2.0), ..BoundConfig::new(n, 1.0, 1.0, 1.0) };
            for rep in [
                corollary1_bound(&widths, 1.0, alpha, r2, &c).unwrap(),
                theorem4_bound(&widths, alpha, 1.0, beta, 1.0, r2, rf, &c).unwrap(),
                theorem4_lip(&widths, alpha, 1.0, beta, 1.0, r2, rf, &c).unwrap(),
            ] {
                prop_assert!(rep.total.is_finite());
                prop_assert_eq!(rep.total, rep.terms.iter().map(|t| t.value).sum::<f64>());
            }
        }
    }
}
