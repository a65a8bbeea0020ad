use std::fmt::Write as _;

use compbound::boundcalc::{intrinsic_dimensions, LayerRanks};
use compbound::spectra::{self, SpectralProfile};
use rayon::prelude::*;

use crate::inputs::{check_thresholds, Loaded};
use crate::output::OutDir;
use crate::{Failure, TablesArgs};

struct LayerSpectra {
    similarity: SpectralProfile,
    covariance: Option<SpectralProfile>,
}

/// CSV with one row per layer and a `total` row; empty cells where the
/// covariance is unavailable.
pub fn build_csv(input: &Loaded, nus: &[f64]) -> Result<String, Failure> {
    let layers = &input.manifest.layers;
    let spectra: Vec<LayerSpectra> = layers
        .par_iter()
        .map(|l| {
            Ok(LayerSpectra {
                similarity: input.similarity_profile(l)?,
                covariance: match input.covariance(l)? {
                    Some(c) => Some(spectra::covariance_spectrum(&c)?),
                    None => None,
                },
            })
        })
        .collect::<Result<_, Failure>>()?;
    for (l, s) in layers.iter().zip(&spectra) {
        if s.covariance.is_none() {
            log::warn!("layer {}: no activations, covariance columns left empty", l.name);
        }
    }

    let mut header = String::from("layer,kind,in,out,filter,params");
    for nu in nus {
        let _ = write!(header, ",cov_rank@{nu},weight_rank@{nu},cov_dim@{nu},weight_dim@{nu}");
    }
    let mut rows: Vec<String> = layers
        .iter()
        .map(|l| {
            format!(
                "{},{},{},{},{},{}",
                l.name,
                if l.filter_size.is_some() { "conv" } else { "dense" },
                l.in_width,
                l.out_width,
                l.filter_size.unwrap_or(1),
                l.in_width * l.out_width * l.filter_area()
            )
        })
        .collect();
    let mut totals = String::new();

    for &nu in nus {
        let cov_ranks: Vec<Option<usize>> = spectra
            .iter()
            .map(|s| s.covariance.as_ref().map(|c| spectra::effective_rank(c, nu)).transpose())
            .collect::<Result<_, _>>()?;
        let weight_ranks: Vec<usize> = spectra
            .iter()
            .map(|s| spectra::effective_rank(&s.similarity, nu))
            .collect::<Result<_, _>>()?;
        let mut complete = Vec::new();
        let mut weight_total = 0u64;
        let mut cov_total: Option<u64> = Some(0);
        for (i, l) in layers.iter().enumerate() {
            let cov_out = if i + 1 < layers.len() { cov_ranks[i + 1] } else { Some(l.out_width) };
            let ranks = LayerRanks {
                name: l.name.clone(),
                in_width: l.in_width,
                out_width: l.out_width,
                filter_area: l.filter_area(),
                cov_in: cov_ranks[i].unwrap_or(0),
                cov_out: cov_out.unwrap_or(0),
                weight_rank: weight_ranks[i],
            };
            let table = intrinsic_dimensions(std::slice::from_ref(&ranks))?;
            let row = &table.rows[0];
            let have_cov = cov_ranks[i].is_some() && cov_out.is_some();
            let cell = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
            let _ = write!(
                rows[i],
                ",{},{},{},{}",
                cell(cov_ranks[i].map(|v| v as u64)),
                weight_ranks[i],
                cell(have_cov.then_some(row.covariance)),
                row.weight
            );
            weight_total += row.weight;
            cov_total = cov_total.and_then(|t| have_cov.then_some(t + row.covariance));
            complete.push(ranks);
        }
        let _ = write!(
            totals,
            ",,,{},{}",
            cov_total.map(|v| v.to_string()).unwrap_or_default(),
            weight_total
        );
    }
    let params: usize = layers.iter().map(|l| l.in_width * l.out_width * l.filter_area()).sum();
    let mut csv = header;
    csv.push('\n');
    for r in rows {
        csv.push_str(&r);
        csv.push('\n');
    }
    let _ = writeln!(csv, "total,,,,,{params}{totals}");
    Ok(csv)
}

pub fn run(a: &TablesArgs) -> Result<(), Failure> {
    let nus = check_thresholds(&a.nu)?;
    let input = Loaded::open(&a.manifest)?;
    let out = OutDir::create(&a.out)?;
    out.write_text("tables.csv", &build_csv(&input, &nus)?)?;
    Ok(())
}
