use compbound::spectra::{self, DecayFit, SpectralProfile};
use rayon::prelude::*;
use serde::Serialize;

use crate::inputs::Loaded;
use crate::output::OutDir;
use crate::{Failure, SpectraArgs};

#[derive(Serialize)]
struct LayerFits {
    layer: String,
    weight_source: spectra::SpectrumSource,
    weight_fit: Option<DecayFit>,
    covariance_fit: Option<DecayFit>,
}

#[derive(Serialize)]
struct FitsReport {
    layers: Vec<LayerFits>,
    weight_global: Option<DecayFit>,
    covariance_global: Option<DecayFit>,
}

fn try_fit(p: &SpectralProfile, what: &str) -> Option<DecayFit> {
    match spectra::fit_decay(p) {
        Ok(f) => Some(f),
        Err(e) => {
            log::warn!("{what}: {e}");
            None
        }
    }
}

pub fn run(a: &SpectraArgs) -> Result<(), Failure> {
    let input = Loaded::open(&a.manifest)?;
    let out = OutDir::create(&a.out)?;
    let layers = &input.manifest.layers;

    let computed: Vec<Result<(SpectralProfile, Option<SpectralProfile>), Failure>> = layers
        .par_iter()
        .map(|l| {
            let w = input.weight_profile(l)?;
            let c = match input.covariance(l)? {
                Some(cov) => Some(spectra::covariance_spectrum(&cov)?),
                None => None,
            };
            Ok((w, c))
        })
        .collect();

    let mut report = Vec::with_capacity(layers.len());
    let mut weights = Vec::new();
    let mut covs = Vec::new();
    for (l, r) in layers.iter().zip(computed) {
        let (w, c) = r?;
        out.write_text(&format!("weight_{}.txt", l.name), &w.plot_data())?;
        if let Some(c) = &c {
            out.write_text(&format!("cov_{}.txt", l.name), &c.plot_data())?;
        } else {
            log::warn!("layer {}: no activations, covariance spectrum skipped", l.name);
        }
        report.push(LayerFits {
            layer: l.name.clone(),
            weight_source: w.source,
            weight_fit: try_fit(&w, &format!("{} weight", l.name)),
            covariance_fit: c.as_ref().and_then(|c| try_fit(c, &format!("{} covariance", l.name))),
        });
        weights.push(w);
        covs.extend(c);
    }
    let global = |ps: &[SpectralProfile]| {
        if ps.is_empty() {
            None
        } else {
            spectra::fit_decay_global(ps).ok()
        }
    };
    out.write_json(
        "fits.json",
        &FitsReport {
            layers: report,
            weight_global: global(&weights),
            covariance_global: global(&covs),
        },
    )?;
    Ok(())
}
