//! Pipeline configuration: one TOML document with a section per stage,
//! dot-path command-line overrides, and a content hash recorded in run
//! manifests so artifacts can be traced to the exact configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::art::{ArtConfig, ArtTrainParams, GenerateParams};
use crate::dataprep::{Dataset, SyntheticConfig};
use crate::postproc::PostprocConfig;
use crate::raster::RenderConfig;
use crate::vsq::{VsqConfig, VsqTrainParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DataprepSection {
    pub dataset: Dataset,
    /// Tiles per side when decomposing a full raster.
    pub grid: usize,
    /// Maximum stroke arc length as a fraction of the canvas diagonal.
    pub max_len_fraction: f64,
    /// Number of samples to synthesize (synthetic dataset only).
    pub n_samples: usize,
    pub seed: u64,
    pub synthetic: SyntheticConfig,
}

impl Default for DataprepSection {
    fn default() -> Self {
        DataprepSection {
            dataset: Dataset::Synthetic,
            grid: 1,
            max_len_fraction: 0.35,
            n_samples: 200,
            seed: 0,
            synthetic: SyntheticConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub render: RenderConfig,
    pub dataprep: DataprepSection,
    pub vsq: VsqConfig,
    pub vsq_train: VsqTrainParams,
    pub art: ArtConfig,
    pub art_train: ArtTrainParams,
    pub generate: GenerateParams,
    pub postproc: PostprocConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        self.vsq.validate()?;
        self.art.validate()?;
        if self.dataprep.grid == 0 {
            return Err(Error::invalid("dataprep.grid must be at least 1"));
        }
        if !(self.dataprep.max_len_fraction > 0.0) {
            return Err(Error::invalid("dataprep.max_len_fraction must be positive"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a TOML file (or the defaults when `path` is `None`) and applies
    /// `key.path=value` overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::MissingArtifact(p.to_path_buf()));
                }
                std::fs::read_to_string(p)?
            }
            None => PipelineConfig::default().to_toml()?,
        };
        let mut value: toml::Value = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut value, ov)?;
        }
        let cfg: PipelineConfig = value.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Hash of the canonical serialized configuration.
    pub fn content_hash(&self) -> Result<String> {
        let canonical = self.to_toml()?;
        Ok(hex(&Sha256::digest(canonical.as_bytes())))
    }

    /// Writes `config.toml` plus a `manifest.json` carrying the config hash
    /// into a run directory.
    pub fn write_manifest(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config.toml"), self.to_toml()?)?;
        let manifest = serde_json::json!({
            "config_sha256": self.content_hash()?,
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Applies one `dotted.path=value` override to a parsed TOML tree. The value
/// is parsed as a TOML literal; values that do not parse are taken as strings.
pub fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not of the form key.path=value")))?;
    let path = path.trim();
    let raw = raw.trim();
    if path.is_empty() {
        return Err(Error::Config(format!("override '{spec}' has an empty key path")));
    }
    let parsed: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{path}': '{seg}' is not a table")))?;
        if i + 1 == segments.len() {
            table.insert(seg.to_string(), parsed);
            return Ok(());
        }
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    unreachable!("override paths always have at least one segment")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vsq::HeadMode;

    #[test]
    fn toml_roundtrip_preserves_config() {
        let mut cfg = PipelineConfig::default();
        cfg.vsq.alpha = 0.25;
        cfg.vsq.head_mode = HeadMode::Shape;
        cfg.art.n_blocks = 6;
        let text = cfg.to_toml().unwrap();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back.vsq.alpha, 0.25);
        assert_eq!(back.vsq.head_mode, HeadMode::Shape);
        assert_eq!(back.art.n_blocks, 6);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn overrides_apply_by_dot_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, PipelineConfig::default().to_toml().unwrap()).unwrap();
        let cfg = PipelineConfig::load(
            Some(&path),
            &[
                "vsq.nu=3".to_string(),
                "generate.top_p=0.5".to_string(),
                "dataprep.dataset=\"mnist\"".to_string(),
                "postproc.mode=\"pi\"".to_string(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.vsq.nu, 3);
        assert_eq!(cfg.generate.top_p, 0.5);
        assert_eq!(cfg.dataprep.dataset, Dataset::Mnist);
        assert_eq!(cfg.postproc.mode, crate::postproc::PostprocMode::Pi);
    }

    #[test]
    fn bad_overrides_and_configs_are_rejected() {
        let mut v: toml::Value = toml::from_str("").unwrap();
        assert!(apply_override(&mut v, "no-equals-sign").is_err());
        assert!(apply_override(&mut v, "=5").is_err());
        // invalid values fail validation after overrides
        assert!(PipelineConfig::load(None, &["render.resolution=0".into()]).is_err());
        assert!(PipelineConfig::load(None, &["art.d_model=30".into()]).is_err());
        // missing file
        assert!(matches!(
            PipelineConfig::load(Some(Path::new("/nonexistent/cfg.toml")), &[]),
            Err(Error::MissingArtifact(_))
        ));
    }

    #[test]
    fn content_hash_tracks_changes() {
        let a = PipelineConfig::default();
        let mut b = PipelineConfig::default();
        assert_eq!(a.content_hash().unwrap(), b.content_hash().unwrap());
        b.vsq.alpha = 0.1;
        assert_ne!(a.content_hash().unwrap(), b.content_hash().unwrap());
        assert_eq!(a.content_hash().unwrap().len(), 64);
    }

    #[test]
    fn manifest_files_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig::default();
        cfg.write_manifest(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
        assert!(PipelineConfig::from_toml(&text).is_ok());
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["config_sha256"].as_str().unwrap(), cfg.content_hash().unwrap());
    }
}
