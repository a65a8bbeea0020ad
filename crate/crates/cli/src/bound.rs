use std::path::Path;

use compbound::boundcalc::{self, BoundConfig, CoveringParams, NormSummary};
use compbound::netfwd::{self, DenseNetwork, LayerNorms};
use compbound::spectra::{self, DecayFit};
use serde_json::Value;

use crate::inputs::Loaded;
use crate::output::OutDir;
use crate::{BoundArgs, Failure, Theorem};

/// Quantities available from `--manifest` and `--compression`.
struct Context {
    loaded: Option<Loaded>,
    network: Option<DenseNetwork>,
    norms: Option<LayerNorms>,
    compression: Option<Value>,
}

fn missing(what: &str, flag: &str) -> Failure {
    Failure::Missing(format!("{what} unavailable: pass {flag} or a manifest that provides it"))
}

impl Context {
    fn load(a: &BoundArgs) -> Result<Self, Failure> {
        let loaded = a.manifest.as_deref().map(Loaded::open).transpose()?;
        let network = match &loaded {
            Some(l) if l.manifest.is_dense() => Some(l.network()?),
            _ => None,
        };
        let norms = network.as_ref().map(netfwd::layer_norms).transpose()?;
        let compression = a.compression.as_deref().map(read_json).transpose()?;
        Ok(Context {
            loaded,
            network,
            norms,
            compression,
        })
    }

    fn n(&self, a: &BoundArgs) -> Result<f64, Failure> {
        a.n.or(self.loaded.as_ref().map(|l| l.manifest.sample_count as f64))
            .ok_or_else(|| missing("sample count", "--n"))
    }

    fn clip_m(&self, a: &BoundArgs) -> Result<f64, Failure> {
        a.clip_m
            .or(self.loaded.as_ref().map(|l| l.manifest.clip_level))
            .ok_or_else(|| missing("clip level", "--clip-m"))
    }

    fn b_x(&self, a: &BoundArgs) -> Result<f64, Failure> {
        if let Some(b) = a.b_x {
            return Ok(b);
        }
        match &self.loaded {
            Some(l) if l.manifest.input_tensor.is_some() => Ok(l.dataset()?.bound_x()),
            _ => Err(missing("input bound B_x", "--b-x")),
        }
    }

    fn config(&self, a: &BoundArgs) -> Result<BoundConfig, Failure> {
        let cfg = BoundConfig {
            c: a.constant_c,
            c_q: a.constant_cq,
            q: a.q,
            kappa: a.kappa,
            ..BoundConfig::new(self.n(a)?, a.t, self.clip_m(a)?, self.b_x(a)?)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Compressed widths from a covariance report, else `--widths`, else the manifest.
    fn widths(&self, a: &BoundArgs, prefer_compressed: bool) -> Result<Vec<usize>, Failure> {
        if prefer_compressed {
            if let Some(w) = self.compression.as_ref().and_then(|c| c["result"]["widths"].as_array()) {
                return w
                    .iter()
                    .map(|v| v.as_u64().map(|u| u as usize))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Failure::Usage("compression report has malformed widths".into()));
            }
        }
        if !a.widths.is_empty() {
            return Ok(a.widths.clone());
        }
        self.loaded
            .as_ref()
            .map(Loaded::widths)
            .ok_or_else(|| missing("widths", "--widths"))
    }

    fn r2(&self, a: &BoundArgs) -> Result<f64, Failure> {
        a.r2.or(self.norms.as_ref().map(|n| n.r2))
            .ok_or_else(|| missing("R2", "--r2"))
    }

    fn rf(&self, a: &BoundArgs) -> Result<f64, Failure> {
        a.rf.or(self.norms.as_ref().map(|n| n.rf))
            .ok_or_else(|| missing("RF", "--rf"))
    }

    fn weight_fit(&self) -> Result<Option<DecayFit>, Failure> {
        let Some(l) = &self.loaded else { return Ok(None) };
        let profiles = l
            .manifest
            .layers
            .iter()
            .map(|s| l.weight_profile(s))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(spectra::fit_decay_global(&profiles).ok())
    }

    fn covariance_fit(&self) -> Result<Option<DecayFit>, Failure> {
        let Some(l) = &self.loaded else { return Ok(None) };
        let mut profiles = Vec::new();
        for s in &l.manifest.layers {
            if let Some(c) = l.covariance(s)? {
                profiles.push(spectra::covariance_spectrum(&c)?);
            }
        }
        if profiles.is_empty() {
            return Ok(None);
        }
        Ok(spectra::fit_decay_global(&profiles).ok())
    }

    fn alpha_v0(&self, a: &BoundArgs) -> Result<(f64, f64), Failure> {
        if let (Some(al), Some(v)) = (a.alpha, a.v0) {
            return Ok((al, v));
        }
        let fit = self.weight_fit()?;
        let alpha = a.alpha.or(fit.as_ref().map(|f| f.exponent));
        let v0 = a.v0.or(fit.as_ref().map(|f| f.scale));
        match (alpha, v0) {
            (Some(al), Some(v)) => Ok((al, v)),
            _ => Err(missing("weight decay (α, V0)", "--alpha and --v0")),
        }
    }

    fn beta_u0(&self, a: &BoundArgs) -> Result<(f64, f64), Failure> {
        if let (Some(b), Some(u)) = (a.beta, a.u0) {
            return Ok((b, u));
        }
        let fit = self.covariance_fit()?;
        let beta = a.beta.or(fit.as_ref().map(|f| f.exponent));
        let u0 = a.u0.or(fit.as_ref().map(|f| f.scale));
        match (beta, u0) {
            (Some(b), Some(u)) => Ok((b, u)),
            _ => Err(missing("covariance decay (β, U0)", "--beta and --u0")),
        }
    }

    fn r_hat(&self, a: &BoundArgs) -> Result<f64, Failure> {
        if let Some(r) = a.r_hat {
            return Ok(r);
        }
        let from_report = self.compression.as_ref().and_then(|c| {
            let r = &c["result"];
            r["r_hat"].as_f64().or_else(|| r["per_layer_bound"].as_f64())
        });
        from_report.ok_or_else(|| Failure::Missing("compression radius r̂ unavailable: pass --r-hat or --compression".into()))
    }

    fn ranks(&self, a: &BoundArgs) -> Result<Vec<usize>, Failure> {
        if !a.ranks.is_empty() {
            return Ok(a.ranks.clone());
        }
        let from_report = self.compression.as_ref().and_then(|c| {
            c["result"]["layers"].as_array().and_then(|ls| {
                ls.iter()
                    .map(|l| l["rank"].as_u64().map(|r| r as usize))
                    .collect::<Option<Vec<_>>>()
            })
        });
        from_report.ok_or_else(|| Failure::Missing("ranks unavailable: pass --ranks or a rank compression report".into()))
    }

    fn sparsity(&self, a: &BoundArgs) -> Result<f64, Failure> {
        if let Some(s) = a.sparsity {
            return Ok(s);
        }
        self.network
            .as_ref()
            .map(|n| n.weights().iter().map(|w| w.iter().filter(|v| **v != 0.0).count()).sum::<usize>() as f64)
            .ok_or_else(|| missing("nonzero count", "--sparsity"))
    }

    fn norm_summary(&self, a: &BoundArgs) -> Result<NormSummary, Failure> {
        let norms = self
            .norms
            .as_ref()
            .ok_or_else(|| Failure::Missing("baselines need --manifest with a dense network".into()))?;
        let widths = self.widths(a, false)?;
        Ok(NormSummary {
            depth: norms.layers.len(),
            width: widths.iter().copied().max().unwrap_or(1),
            r2: norms.r2,
            rf: norms.rf,
            r21: norms.r21,
            r11: norms.r11,
            kappa: a.kappa.unwrap_or(1.0),
        })
    }
}

fn read_json(path: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Missing(format!("reading {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Entropy coefficients for a dense class of the given widths when none are supplied.
fn default_covering(widths: &[usize], r2: f64, q: f64) -> CoveringParams {
    let depth = (widths.len() - 1) as f64;
    let s1: f64 = widths.windows(2).map(|w| (w[0] * w[1]) as f64).sum();
    let m = widths.iter().copied().max().unwrap_or(1) as f64;
    let s2 = depth * s1 * (depth * r2.max(1.0) * (m + 1.0)).ln();
    CoveringParams { s1, s2, s3: 0.0, q }
}

fn theorem_key(t: Theorem) -> &'static str {
    match t {
        Theorem::T1 => "t1",
        Theorem::T2 => "t2",
        Theorem::Cor1 => "cor1",
        Theorem::T3 => "t3",
        Theorem::T4 => "t4",
        Theorem::T4lip => "t4lip",
        Theorem::Sparse => "sparse",
        Theorem::Baselines => "baselines",
    }
}

pub fn run(a: &BoundArgs) -> Result<(), Failure> {
    let ctx = Context::load(a)?;
    let cfg = ctx.config(a)?;
    let report = match a.theorem {
        Theorem::T1 => {
            let main_rad = a
                .main_rad
                .ok_or_else(|| Failure::Missing("t1 needs --main-rad for the compressed class".into()))?;
            let r_hat = ctx.r_hat(a)?;
            let q = cfg.q.unwrap_or(0.5);
            let p = match (a.s1, a.s2, a.s3) {
                (None, None, None) => {
                    let widths = ctx.widths(a, true)?;
                    default_covering(&widths, a.r2.or(ctx.norms.as_ref().map(|n| n.r2)).unwrap_or(1.0), q)
                }
                (s1, s2, s3) => CoveringParams {
                    s1: s1.unwrap_or(0.0),
                    s2: s2.unwrap_or(0.0),
                    s3: s3.unwrap_or(0.0),
                    q,
                },
            };
            boundcalc::theorem1_assemble(main_rad, r_hat, &p, &cfg)?
        }
        Theorem::T2 => {
            let (alpha, v0) = ctx.alpha_v0(a)?;
            let ranks = ctx.ranks(a)?;
            boundcalc::theorem2_bound(&ctx.widths(a, false)?, &ranks, v0, alpha, ctx.r2(a)?, &cfg)?
        }
        Theorem::Cor1 => {
            let (alpha, v0) = ctx.alpha_v0(a)?;
            let widths = ctx.widths(a, false)?;
            if cfg.kappa.is_some() {
                boundcalc::corollary1_lip(&widths, v0, alpha, &cfg)?
            } else {
                boundcalc::corollary1_bound(&widths, v0, alpha, ctx.r2(a)?, &cfg)?
            }
        }
        Theorem::T3 => boundcalc::theorem3_report(&ctx.widths(a, true)?, &cfg)?,
        Theorem::T4 | Theorem::T4lip => {
            let (alpha, v0) = ctx.alpha_v0(a)?;
            let (beta, u0) = ctx.beta_u0(a)?;
            let widths = ctx.widths(a, false)?;
            let (r2, rf) = (ctx.r2(a)?, ctx.rf(a)?);
            if a.theorem == Theorem::T4 {
                boundcalc::theorem4_bound(&widths, alpha, v0, beta, u0, r2, rf, &cfg)?
            } else {
                boundcalc::theorem4_lip(&widths, alpha, v0, beta, u0, r2, rf, &cfg)?
            }
        }
        Theorem::Sparse => {
            let depth = ctx.widths(a, false)?.len() - 1;
            boundcalc::example1_report(depth, ctx.sparsity(a)?, &cfg)?
        }
        Theorem::Baselines => boundcalc::baselines_report(&ctx.norm_summary(a)?, &cfg)?,
    };
    let out = OutDir::create(&a.out)?;
    let key = theorem_key(a.theorem);
    out.write_json(&format!("bound_{key}.json"), &report)?;
    let csv = format!("{}\n{}", boundcalc::BoundReport::CSV_HEADER, report.to_csv());
    out.write_text(&format!("bound_{key}.csv"), &csv)?;
    Ok(())
}
