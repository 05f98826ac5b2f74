//! Config file layer. Flags and environment variables are handled by clap;
//! whatever they leave unset is filled from here, then from defaults.

use std::path::Path;

use anyhow::Context;
use nft_audit::lof::Reachability;
use nft_audit::wash_audit::SuspicionRule;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub jobs: Option<usize>,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub base_url: Option<String>,
    pub window_start: Option<String>,
    pub window_end: Option<String>,
    pub page_size: Option<u32>,
    pub window_step_hours: Option<u32>,
    pub rate_limit: Option<f64>,
    pub max_retries: Option<u32>,
    pub collections: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSection {
    pub k: Option<usize>,
    pub threshold: Option<f64>,
    pub rule: Option<SuspicionRule>,
    pub reachability: Option<Reachability>,
    pub min_addresses: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub seed: Option<u64>,
    pub scenario: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
