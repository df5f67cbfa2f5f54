//! Project configuration for `intertext pipeline`.
//!
//! A single TOML file, `version = 1`. Relative paths resolve against the
//! directory holding the file. Every randomized stage has a seed derived
//! from the master seed by hashing the stage name, unless pinned under
//! `[seeds]`. Command-line overrides take precedence over the file, which
//! takes precedence over built-in defaults.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::DEFAULT_NEGATIVE_RATIO;
use crate::corpus::{DEFAULT_MAX_YEAR, DEFAULT_MIN_YEAR};
use crate::embedding::EmbedderSpec;
use crate::error::{Error, Result};
use crate::ocr::DEFAULT_THRESHOLD;
use crate::passage::{DEFAULT_DRAWS, DEFAULT_PASSAGE_LEN};
use crate::rng::stage_seed;
use crate::similarity::MaskPolicy;
use crate::temporal::{Bounds, CurveConfig};

pub const CONFIG_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 42;

/// Stages whose seed is derived from the master seed.
pub const SEEDED_STAGES: [&str; 4] = ["sample", "temporal", "sanity", "classify"];

fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub input: InputConfig,
    #[serde(default)]
    pub ocr: OcrConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default = "default_embed")]
    pub embed: EmbedderSpec,
    #[serde(default)]
    pub matrix: MatrixConfig,
    #[serde(default)]
    pub temporal: TemporalConfig,
    #[serde(default)]
    pub analyses: Analyses,
    /// Pinned stage seeds, overriding derivation from `seed`.
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_embed() -> EmbedderSpec {
    EmbedderSpec::HashTest { dim: 256 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub metadata: PathBuf,
    pub texts: PathBuf,
    pub lexicon: PathBuf,
    #[serde(default = "min_year")]
    pub min_year: i32,
    #[serde(default = "max_year")]
    pub max_year: i32,
    #[serde(default = "yes")]
    pub dedup: bool,
}

fn min_year() -> i32 {
    DEFAULT_MIN_YEAR
}

fn max_year() -> i32 {
    DEFAULT_MAX_YEAR
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OcrConfig {
    pub threshold: f64,
}

impl Default for OcrConfig {
    fn default() -> Self {
        OcrConfig {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub draws: usize,
    pub passage_len: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            draws: DEFAULT_DRAWS,
            passage_len: DEFAULT_PASSAGE_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub policy: String,
    /// Neighbors listed per document in `neighbors.csv`.
    pub neighbors: usize,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            policy: "same-author".into(),
            neighbors: 5,
        }
    }
}

impl MatrixConfig {
    pub fn policy(&self) -> Result<MaskPolicy> {
        self.policy.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemporalConfig {
    pub window: i32,
    pub repeats: usize,
    pub min_per_year: usize,
    pub max_per_year: usize,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        let c = CurveConfig::default();
        TemporalConfig {
            window: c.window,
            repeats: c.repeats,
            min_per_year: c.bounds.min,
            max_per_year: c.bounds.max,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    pub offset_curve: Option<CurveAnalysis>,
    pub trajectory: Option<TrajectoryAnalysis>,
    #[serde(default)]
    pub compare: Vec<CompareAnalysis>,
    pub sanity: Option<SanityAnalysis>,
    pub classify: Option<ClassifyAnalysis>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveAnalysis {
    /// Label query selecting the target documents; all documents when absent.
    pub query: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryAnalysis {
    pub docs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareAnalysis {
    pub name: String,
    pub group: String,
    pub comparison: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanityAnalysis {
    pub novel_count: usize,
    pub reps_per_novel: usize,
    pub draw_counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifyAnalysis {
    pub positive: String,
    pub negative: String,
    #[serde(default = "lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "epochs")]
    pub epochs: usize,
    #[serde(default = "folds")]
    pub folds: usize,
    #[serde(default = "ratio")]
    pub negative_ratio: usize,
}

fn lambdas() -> Vec<f64> {
    vec![0.001, 0.01, 0.1]
}

fn epochs() -> usize {
    50
}

fn folds() -> usize {
    5
}

fn ratio() -> usize {
    DEFAULT_NEGATIVE_RATIO
}

/// Command-line values that replace config entries when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threshold: Option<f64>,
    pub draws: Option<usize>,
    pub passage_len: Option<usize>,
    pub dim: Option<usize>,
    pub window: Option<i32>,
    pub repeats: Option<usize>,
}

impl Config {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if c.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                c.version
            )));
        }
        c.base_dir = base_dir.to_path_buf();
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Config::parse(&text, &base)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.threshold {
            self.ocr.threshold = t;
        }
        if let Some(d) = o.draws {
            self.sample.draws = d;
        }
        if let Some(l) = o.passage_len {
            self.sample.passage_len = l;
        }
        if let Some(d) = o.dim {
            match &mut self.embed {
                EmbedderSpec::HashTest { dim } | EmbedderSpec::File { dim, .. } | EmbedderSpec::Bridge { dim, .. } => {
                    *dim = d
                }
            }
        }
        if let Some(w) = o.window {
            self.temporal.window = w;
        }
        if let Some(r) = o.repeats {
            self.temporal.repeats = r;
        }
        self.validate()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.ocr.threshold) {
            return bad(format!("ocr.threshold {} outside [0, 1]", self.ocr.threshold));
        }
        if self.sample.draws == 0 || self.sample.passage_len == 0 {
            return bad("sample.draws and sample.passage_len must be positive".into());
        }
        if self.embed.dim() == 0 {
            return bad("embed.dim must be positive".into());
        }
        if self.input.min_year > self.input.max_year {
            return bad("input.min_year is after input.max_year".into());
        }
        self.matrix.policy()?;
        self.curve_config(0)?;
        if self.temporal.repeats < 2 || self.temporal.window < 1 {
            return bad("temporal.repeats must be >= 2 and temporal.window >= 1".into());
        }
        if let Some(unknown) = self.seeds.keys().find(|k| !SEEDED_STAGES.contains(&k.as_str())) {
            return bad(format!("unknown stage {unknown:?} under [seeds]"));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// The embedder spec with its file path resolved.
    pub fn embedder(&self) -> EmbedderSpec {
        match &self.embed {
            EmbedderSpec::File { path, dim } => EmbedderSpec::File {
                path: self.resolve(path),
                dim: *dim,
            },
            other => other.clone(),
        }
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        self.seeds
            .get(stage)
            .copied()
            .unwrap_or_else(|| stage_seed(self.seed, stage))
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        SEEDED_STAGES
            .iter()
            .map(|s| (s.to_string(), self.stage_seed(s)))
            .collect()
    }

    pub fn curve_config(&self, seed: u64) -> Result<CurveConfig> {
        Ok(CurveConfig {
            window: self.temporal.window,
            repeats: self.temporal.repeats,
            bounds: Bounds::new(self.temporal.min_per_year, self.temporal.max_per_year)
                .map_err(|e| Error::Config(e.to_string()))?,
            seed,
        })
    }

    /// Input files that must exist before any stage runs.
    pub fn required_inputs(&self) -> Vec<PathBuf> {
        let mut v = vec![
            self.resolve(&self.input.metadata),
            self.resolve(&self.input.texts),
            self.resolve(&self.input.lexicon),
        ];
        if let EmbedderSpec::File { path, .. } = &self.embed {
            v.push(self.resolve(path));
        }
        v
    }
}
