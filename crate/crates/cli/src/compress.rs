use compbound::compressor::{self, RankPlan};
use compbound::netfwd;
use compbound::spectra;
use compbound::synth::network_fixture;
use serde_json::json;

use crate::inputs::Loaded;
use crate::output::OutDir;
use crate::{CompressArgs, Failure, Method, Schedule};

fn covariance_targets(a: &CompressArgs, net: &netfwd::DenseNetwork) -> Result<Vec<f64>, Failure> {
    let depth = net.depth();
    if !a.targets.is_empty() {
        if a.targets.len() != depth {
            return Err(Failure::Usage(format!(
                "--targets has {} values, network depth is {depth}",
                a.targets.len()
            )));
        }
        return Ok(a.targets.clone());
    }
    let r1 = a
        .target_r1
        .ok_or_else(|| Failure::Usage("covariance method needs --targets or --target-r1".into()))?;
    if !(r1 > 0.0) {
        return Err(Failure::Usage("--target-r1 must be positive".into()));
    }
    Ok(match a.schedule {
        Schedule::Uniform => compressor::uniform_schedule(depth, r1),
        Schedule::Theorem4 => {
            let norms = netfwd::layer_norms(net)?;
            compressor::theorem4_schedule(depth, r1, norms.r2, norms.rf, a.c0)
        }
    })
}

pub fn run(a: &CompressArgs) -> Result<(), Failure> {
    let input = Loaded::open(&a.manifest)?;
    let net = input.network()?;
    let data = input.dataset()?;

    let (compressed, report) = match a.method {
        Method::Rank => {
            let plan = if a.ranks.is_empty() {
                RankPlan::full(&net)
            } else {
                RankPlan { ranks: a.ranks.clone() }
            };
            plan.validate(&net).map_err(|e| Failure::Usage(e.to_string()))?;
            let profiles = net
                .weights()
                .iter()
                .map(spectra::weight_spectrum)
                .collect::<Result<Vec<_>, _>>()?;
            let fit = spectra::fit_decay_global(&profiles).ok();
            let c = compressor::compress_by_rank(&net, &plan, &data, fit.as_ref())?;
            let report = json!({ "method": "rank", "fit": fit, "result": &c });
            (c.network, report)
        }
        Method::Covariance => {
            let targets = covariance_targets(a, &net)?;
            let c = compressor::compress_by_covariance(&net, &data, &targets, a.seed, a.max_retries, None)?;
            let report = json!({
                "method": "covariance",
                "seed": a.seed,
                "targets": targets,
                "min_slack": c.min_slack_ratio(),
                "result": &c,
            });
            (c.network, report)
        }
    };

    let out = OutDir::create(&a.out)?;
    out.write_fixture(&network_fixture(&compressed, data.inputs().clone())?)?;
    out.write_json("report.json", &report)?;
    Ok(())
}
