use std::path::{Path, PathBuf};

use compbound::netfwd::{Dataset, DenseNetwork};
use compbound::spectra::{self, CovarianceStat, SpectralProfile, SpectrumSource};
use compbound::tensor_store::{
    load_manifest, read_tensor_file, tensor_path, validate_manifest, LayerKind, LayerSpec, Manifest,
    TensorFile,
};

use crate::Failure;

pub struct Loaded {
    pub path: PathBuf,
    pub manifest: Manifest,
    pub tensors: TensorFile,
}

impl Loaded {
    pub fn open(path: &Path) -> Result<Self, Failure> {
        let manifest = load_manifest(path)?;
        let tensors = read_tensor_file(tensor_path(path, &manifest))?;
        validate_manifest(&manifest, &tensors)?;
        Ok(Loaded {
            path: path.to_path_buf(),
            manifest,
            tensors,
        })
    }

    pub fn network(&self) -> Result<DenseNetwork, Failure> {
        if !self.manifest.is_dense() {
            return Err(Failure::Missing(
                "this command needs an all-dense network; conv layers are analyzed spectrally only".into(),
            ));
        }
        Ok(DenseNetwork::from_manifest(&self.manifest, &self.tensors)?)
    }

    pub fn dataset(&self) -> Result<Dataset, Failure> {
        let name = self.manifest.input_tensor.as_deref().ok_or_else(|| {
            Failure::Missing(format!("{} declares no input_tensor", self.path.display()))
        })?;
        Ok(Dataset::new(self.tensors.require(name)?.to_matrix()?)?)
    }

    /// `m_1, …, m_{L+1}`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.manifest.layers.iter().map(|l| l.in_width).collect();
        w.push(self.manifest.layers.last().unwrap().out_width);
        w
    }

    /// Weight spectrum: singular values for dense layers, eigenvalues of the
    /// folded similarity for conv layers.
    pub fn weight_profile(&self, layer: &LayerSpec) -> Result<SpectralProfile, Failure> {
        let e = self.tensors.require(&layer.weight_tensor)?;
        Ok(match layer.kind {
            LayerKind::Dense => spectra::weight_spectrum(&e.to_matrix()?)?,
            LayerKind::Conv => {
                spectra::conv_similarity_spectrum(&spectra::ConvWeight::from_entry(e)?)?
            }
        })
    }

    /// Eigenvalues of `K = WWᵀ` (dense) or the folded similarity (conv).
    pub fn similarity_profile(&self, layer: &LayerSpec) -> Result<SpectralProfile, Failure> {
        let p = self.weight_profile(layer)?;
        Ok(match layer.kind {
            LayerKind::Dense => SpectralProfile::new(
                p.values.iter().map(|v| v * v).collect(),
                SpectrumSource::WeightConvFolded,
            )?,
            LayerKind::Conv => p,
        })
    }

    pub fn covariance(&self, layer: &LayerSpec) -> Result<Option<CovarianceStat>, Failure> {
        let Some(name) = self.manifest.activation_tensor(&layer.name) else {
            return Ok(None);
        };
        let e = self.tensors.require(name)?;
        Ok(Some(match layer.kind {
            LayerKind::Dense => spectra::covariance_of(&e.to_matrix()?)?,
            LayerKind::Conv => spectra::conv_channel_covariance_entry(e)?,
        }))
    }
}

pub fn check_thresholds(nu: &[f64]) -> Result<Vec<f64>, Failure> {
    if nu.is_empty() {
        return Ok(spectra::DEFAULT_THRESHOLDS.to_vec());
    }
    for &v in nu {
        if !(v > 0.0 && v < 1.0) {
            return Err(Failure::Usage(format!("--nu {v} must lie in (0,1)")));
        }
    }
    Ok(nu.to_vec())
}
