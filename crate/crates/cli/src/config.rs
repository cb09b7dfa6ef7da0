//! Run configuration: a TOML file whose every field has a default, plus
//! command-line overrides applied on top.

use std::path::{Path, PathBuf};

use excessvocab::count::VocabFilter;
use excessvocab::excess::{ExcessThresholds, Smoothing};
use excessvocab::ingest::{FilterCriteria, ParseMode};
use excessvocab::markergap::{default_sweep_thresholds, Eligibility};
use serde::{Deserialize, Serialize};

use crate::Failure;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "EXCESSVOCAB_CONFIG";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Rayon threads; 0 uses every core.
    pub workers: usize,
    pub mode: ParseMode,
    /// Overrides the seed of synthetic specs when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub paths: Paths,
    pub filter: FilterCriteria,
    pub count: CountSettings,
    pub analysis: Analysis,
    pub thresholds: ExcessThresholds,
    pub eligibility: Eligibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub inputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cleaning_rules: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_rules: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub countries: Option<PathBuf>,
    /// Count matrix read by `excess`, `sweep` and `report`; defaults to the
    /// one `count` writes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annotations: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma_overrides: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spelling: Option<PathBuf>,
    /// Rare marker set; defaults to the one `sweep` writes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rare_markers: Option<PathBuf>,
    /// Common marker set; defaults to the shipped ten words.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub common_markers: Option<PathBuf>,
    /// Extra marker sets evaluated by `gap`.
    pub markers: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subgroup_specs: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth_spec: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out_dir: PathBuf::from("out"),
            inputs: Vec::new(),
            cleaning_rules: None,
            field_rules: None,
            countries: None,
            matrix: None,
            annotations: None,
            lemma_overrides: None,
            spelling: None,
            rare_markers: None,
            common_markers: None,
            markers: Vec::new(),
            subgroup_specs: None,
            points: None,
            synth_spec: None,
        }
    }
}

impl Paths {
    fn referenced(&self) -> impl Iterator<Item = (&'static str, &Path)> {
        let singles = [
            ("cleaning_rules", &self.cleaning_rules),
            ("field_rules", &self.field_rules),
            ("countries", &self.countries),
            ("annotations", &self.annotations),
            ("lemma_overrides", &self.lemma_overrides),
            ("spelling", &self.spelling),
            ("common_markers", &self.common_markers),
            ("subgroup_specs", &self.subgroup_specs),
            ("points", &self.points),
            ("synth_spec", &self.synth_spec),
        ];
        singles
            .into_iter()
            .filter_map(|(k, p)| p.as_deref().map(|p| (k, p)))
            .chain(self.inputs.iter().map(|p| ("inputs", p.as_path())))
            .chain(self.markers.iter().map(|p| ("markers", p.as_path())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CountSettings {
    pub vocab: VocabFilter,
    /// Minimum document frequency, as a fraction of all documents, for a
    /// token to enter the vocabulary.
    pub min_df: f64,
    /// Inclusive matrix year range; defaults to the range observed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub years: Option<(i32, i32)>,
    /// Documents per parallel shard in streaming passes.
    pub shard_size: usize,
}

impl Default for CountSettings {
    fn default() -> Self {
        CountSettings {
            vocab: VocabFilter::AllTokens,
            min_df: 0.0,
            years: None,
            shard_size: 65_536,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Analysis {
    pub target_year: i32,
    pub smoothing: Smoothing,
    /// Rare-set thresholds scanned by `sweep`.
    pub sweep_thresholds: Vec<f64>,
    /// Neighbours per year for `local-delta`.
    pub local_k: usize,
    pub reference_year: i32,
    /// Words plotted by the `report` time-series table.
    pub highlight_words: Vec<String>,
}

impl Default for Analysis {
    fn default() -> Self {
        Analysis {
            target_year: 2024,
            smoothing: Smoothing::AddOne,
            sweep_thresholds: default_sweep_thresholds(),
            local_k: 100,
            reference_year: 2022,
            highlight_words: ["delves", "underscores", "showcasing", "potential", "findings", "crucial", "covid"]
                .map(String::from)
                .to_vec(),
        }
    }
}

impl RunConfig {
    pub fn parse(src: &str) -> Result<Self, Failure> {
        toml::from_str(src).map_err(|e| Failure::usage(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let src = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("config {}: {e}", path.display())))?;
        Self::parse(&src)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// Checks value ranges and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), Failure> {
        self.filter.validate().map_err(|e| Failure::usage(e.to_string()))?;
        self.thresholds.validate().map_err(|e| Failure::usage(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.count.min_df) {
            return Err(Failure::usage(format!("count.min_df {} outside [0, 1]", self.count.min_df)));
        }
        if let Some((lo, hi)) = self.count.years {
            if lo > hi {
                return Err(Failure::usage(format!("count.years {lo}..={hi} is empty")));
            }
        }
        if self.analysis.local_k == 0 {
            return Err(Failure::usage("analysis.local_k must be at least 1"));
        }
        if self.count.shard_size == 0 {
            return Err(Failure::usage("count.shard_size must be at least 1"));
        }
        for (key, p) in self.paths.referenced() {
            if !p.exists() {
                return Err(Failure::data(format!("paths.{key}: {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.paths.out_dir.join(name)
    }
}
