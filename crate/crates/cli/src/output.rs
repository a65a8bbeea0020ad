use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

/// Output directory; every file is written to a temp file and renamed into place.
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir {
            root: root.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let dest = self.path(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.root)
            .with_context(|| format!("temp file in {}", self.root.display()))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&dest)
            .with_context(|| format!("renaming into {}", dest.display()))?;
        log::info!("wrote {}", dest.display());
        Ok(dest)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        self.write_bytes(name, text.as_bytes())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

impl OutDir {
    /// `manifest.json` plus its tensor file.
    pub fn write_fixture(&self, fx: &compbound::synth::Fixture) -> Result<PathBuf> {
        let bytes = compbound::tensor_store::encode(&fx.tensors)?;
        self.write_bytes(&fx.manifest.tensor_file, &bytes)?;
        let mut json = fx.manifest.to_json()?;
        if !json.ends_with('\n') {
            json.push('\n');
        }
        self.write_text("manifest.json", &json)
    }
}
