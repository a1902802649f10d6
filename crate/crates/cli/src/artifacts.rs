//! Artifact plumbing: provenance headers, deterministic JSON/CSV writers,
//! and the run-metadata sidecar.
//!
//! Every JSON artifact leads with a [`Provenance`] block — config hash,
//! seeds, and the standing model-substitution notes — so any file can be
//! traced to the exact run that produced it. CSV artifacts cannot carry the
//! block without breaking their tabular shape; `run_meta.json` maps each
//! emitted file to its config hash instead. That sidecar is also the only
//! place a timestamp lives, keeping every data artifact byte-reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Seeds};
use crate::errors::CliError;

/// Standing caveats restated in every report: where this toolkit substitutes
/// a stand-in for a named library model.
pub const SUBSTITUTION_NOTES: [&str; 3] = [
    "linear_margin stands in for the SVR/SVC rows: linear hinge or \
     epsilon-insensitive loss trained by subgradient descent, not a kernel SVM",
    "gbt_preset_a stands in for the XGBoost row: depth-wise gradient-boosted \
     trees trained from scratch, not the XGBoost library",
    "gbt_preset_b stands in for the LightGBM row: leaf-wise gradient-boosted \
     trees trained from scratch, not the LightGBM library",
];

/// Written into every JSON artifact so results are traceable to their run.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub format_version: u32,
    /// Hash of every semantic config field.
    pub config_hash: String,
    /// Hash of only the fields the shared artifact chain depends on;
    /// cross-command freshness checks compare this one, so changing (say)
    /// the focus country does not invalidate the leaderboard.
    pub pipeline_hash: String,
    pub seeds: Seeds,
    pub notes: Vec<String>,
}

impl Provenance {
    pub fn of(config: &PipelineConfig) -> Provenance {
        Provenance {
            format_version: 1,
            config_hash: config.hash(),
            pipeline_hash: config.pipeline_hash(),
            seeds: config.seeds,
            notes: SUBSTITUTION_NOTES.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Collects what a command writes, then records it all in `run_meta.json`.
pub struct ArtifactSet<'a> {
    config: &'a PipelineConfig,
    written: Vec<String>,
}

impl<'a> ArtifactSet<'a> {
    pub fn new(config: &'a PipelineConfig) -> ArtifactSet<'a> {
        ArtifactSet {
            config,
            written: Vec::new(),
        }
    }

    fn target(&mut self, rel: &str) -> Result<PathBuf, CliError> {
        let path = self.config.out.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", parent.display())))?;
        }
        self.written.push(rel.to_string());
        Ok(path)
    }

    /// Writes pretty-printed JSON with a trailing newline.
    pub fn json<T: Serialize>(&mut self, rel: &str, payload: &T) -> Result<(), CliError> {
        let path = self.target(rel)?;
        let mut text = serde_json::to_string_pretty(payload)
            .map_err(|e| CliError::Numeric(format!("cannot serialize {rel}: {e}")))?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| crate::errors::io_error(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Writes a text artifact verbatim.
    pub fn text(&mut self, rel: &str, content: &str) -> Result<(), CliError> {
        let path = self.target(rel)?;
        std::fs::write(&path, content).map_err(|e| crate::errors::io_error(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Writes a CSV artifact from a header and string rows, quoting as
    /// needed.
    pub fn csv(
        &mut self,
        rel: &str,
        header: &[String],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        let path = self.target(rel)?;
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record(header)
            .and_then(|_| rows.iter().try_for_each(|row| writer.write_record(row)))
            .map_err(|e| CliError::Numeric(format!("cannot encode {rel}: {e}")))?;
        let bytes = writer
            .into_inner()
            .map_err(|e| CliError::Numeric(format!("cannot encode {rel}: {e}")))?;
        std::fs::write(&path, bytes).map_err(|e| crate::errors::io_error(&path, e))?;
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Records everything written (plus the run timestamp) in
    /// `run_meta.json`, merging with entries from earlier commands.
    pub fn finish(self) -> Result<(), CliError> {
        let meta_path = self.config.out.join("run_meta.json");
        let mut meta = match std::fs::read_to_string(&meta_path) {
            Ok(text) => serde_json::from_str::<RunMeta>(&text).unwrap_or_default(),
            Err(_) => RunMeta::default(),
        };
        let hash = self.config.hash();
        for rel in &self.written {
            meta.artifacts.insert(rel.clone(), hash.clone());
        }
        meta.written_at = chrono::Utc::now().to_rfc3339();
        let mut text = serde_json::to_string_pretty(&meta)
            .map_err(|e| CliError::Numeric(format!("cannot serialize run_meta.json: {e}")))?;
        text.push('\n');
        std::fs::write(&meta_path, text).map_err(|e| crate::errors::io_error(&meta_path, e))?;
        Ok(())
    }
}

/// The timestamped sidecar: which artifacts exist and which config hash
/// produced each. Excluded from byte-reproducibility comparisons.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct RunMeta {
    pub written_at: String,
    /// Relative artifact path -> config hash of the run that wrote it.
    pub artifacts: BTreeMap<String, String>,
}

/// Reads a JSON artifact produced by an earlier command; a missing file is
/// a usage error naming the command that creates it.
pub fn read_json(path: &Path, produced_by: &str) -> Result<serde_json::Value, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(text) => text,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::missing(path, produced_by))
        }
        Err(e) => return Err(crate::errors::io_error(path, e)),
    };
    serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{} is not valid JSON: {e}", path.display())))
}

/// Checks that an artifact's data chain matches the current config; a
/// mismatch means a chain-shaping field changed since and the producing
/// command must re-run. Fields outside the chain (the focus country, the
/// explanation knobs) are allowed to differ.
pub fn check_fresh(
    value: &serde_json::Value,
    path: &Path,
    config: &PipelineConfig,
    produced_by: &str,
) -> Result<(), CliError> {
    let found = value
        .pointer("/provenance/pipeline_hash")
        .and_then(|v| v.as_str())
        .unwrap_or("");
    if found != config.pipeline_hash() {
        return Err(CliError::Usage(format!(
            "{} was produced by a different config; re-run `aqicast {produced_by}`",
            path.display()
        )));
    }
    Ok(())
}

/// Replaces every non-alphanumeric character with `_` for use in file
/// names (country and feature names contain spaces, dots, and dashes).
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

/// Renders a float for CSV cells: shortest representation that parses back
/// to the same value.
pub fn cell(value: f64) -> String {
    format!("{value}")
}
