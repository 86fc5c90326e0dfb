//! Pipeline configuration file (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cutoff::Cutoff;
use crate::harness::{ReportFormat, RunnerAdapter};
use crate::layout::{LayoutConfig, TestLayout};
use crate::miner::Granularity;
use crate::mirror::FilterPolicy;

pub const WORKROOT_ENV: &str = "RCXFORGE_WORKROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}{}: {message}", key_display(.key), line_display(*.line))]
    Invalid {
        key: String,
        line: Option<usize>,
        message: String,
    },
}

fn key_display(key: &str) -> String {
    if key.is_empty() {
        "config".into()
    } else {
        format!("config key `{key}`")
    }
}

fn line_display(line: Option<usize>) -> String {
    line.map(|l| format!(" (line {l})")).unwrap_or_default()
}

impl ConfigError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Invalid {
            key: key.into(),
            line: None,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub design: usize,
    pub fim: usize,
    /// Filtered PRs mirrored, newest first.
    pub replay: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub granularities: Vec<Granularity>,
    pub min_chunk_lines: usize,
    /// Commits of pre-cutoff history counted for heat; all when absent.
    pub lookback: Option<usize>,
    pub template_file: Option<PathBuf>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            granularities: vec![Granularity::Module, Granularity::File, Granularity::Chunk],
            min_chunk_lines: crate::design::DEFAULT_MIN_CHUNK_LINES,
            lookback: None,
            template_file: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FimConfig {
    pub neg_ratio: f64,
    pub min_body_lines: usize,
    /// Also carve holes out of test files.
    pub include_tests: bool,
    /// Language server command; the static resolver is used when absent.
    pub lsp_command: Option<Vec<String>>,
    pub lsp_timeout_secs: f64,
}

impl Default for FimConfig {
    fn default() -> Self {
        Self {
            neg_ratio: 0.1,
            min_body_lines: 2,
            include_tests: false,
            lsp_command: None,
            lsp_timeout_secs: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterSetting {
    Preset(String),
    Custom(FilterPolicy),
}

impl FilterSetting {
    pub fn policy(&self) -> Result<FilterPolicy, String> {
        match self {
            FilterSetting::Preset(p) if p == "strict" => Ok(FilterPolicy::strict()),
            FilterSetting::Preset(p) if p == "relaxed" => Ok(FilterPolicy::relaxed()),
            FilterSetting::Preset(p) => Err(format!("unknown filter preset {p:?}; expected \"strict\" or \"relaxed\"")),
            FilterSetting::Custom(c) if c.max_changed_lines == 0 => Err("max_changed_lines must be positive".into()),
            FilterSetting::Custom(c) => Ok(*c),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MirrorConfig {
    pub fuzz: usize,
    pub max_tests: usize,
    pub filter: FilterSetting,
    pub issue_store: Option<PathBuf>,
    /// Problem-statement generator command.
    pub generator: Option<Vec<String>>,
    pub generator_timeout_secs: u64,
}

impl Default for MirrorConfig {
    fn default() -> Self {
        Self {
            fuzz: 2,
            max_tests: 200,
            filter: FilterSetting::Preset("relaxed".into()),
            issue_store: None,
            generator: None,
            generator_timeout_secs: 120,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub setup_commands: Vec<String>,
    pub test_command: String,
    pub report_format: ReportFormat,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            setup_commands: Vec::new(),
            test_command: "python3 -m pytest -q -p no:cacheprovider --junitxml={report} {test_ids}".into(),
            report_format: ReportFormat::JunitXml,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub timeout_secs: f64,
    pub workroot: Option<PathBuf>,
    pub retain_failed: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            timeout_secs: 900.0,
            workroot: None,
            retain_failed: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub repo: PathBuf,
    #[serde(default = "default_head")]
    pub head: String,
    pub cutoff: Cutoff,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub design: DesignConfig,
    #[serde(default)]
    pub fim: FimConfig,
    #[serde(default)]
    pub mirror: MirrorConfig,
    #[serde(default)]
    pub layout: LayoutConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub harness: HarnessConfig,
    #[serde(skip)]
    pub workroot_flag: Option<PathBuf>,
}

fn default_head() -> String {
    "HEAD".into()
}

fn default_output() -> PathBuf {
    "rcx-out".into()
}

fn default_parallel() -> usize {
    1
}

/// 1-based line where `key` (dotted path) is set, found by scanning table
/// headers and assignments.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", key),
    };
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(h) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = h.trim().to_string();
            continue;
        }
        let Some((k, _)) = line.split_once('=') else {
            continue;
        };
        let k = k.trim().trim_matches('"');
        let full = if current.is_empty() { k.to_string() } else { format!("{current}.{k}") };
        if current == table && k == leaf || full == key {
            return Some(i + 1);
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Command-line settings that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub repo: Option<PathBuf>,
    pub head: Option<String>,
    pub cutoff: Option<Cutoff>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub max_parallel: Option<usize>,
    pub workroot: Option<PathBuf>,
}

impl PipelineConfig {
    /// Deserializes without validating.
    pub fn parse_raw(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { String::new() } else { key };
            let inner = e.into_inner();
            let line = inner
                .span()
                .map(|s| line_of_offset(text, s.start))
                .or_else(|| line_of_key(text, &key));
            ConfigError::Invalid {
                key,
                line,
                message: inner.message().trim().to_string(),
            }
        })
    }

    /// Validates, pointing errors at the line of `text` that sets the key.
    pub fn validate_in(&self, text: &str) -> Result<(), ConfigError> {
        self.validate().map_err(|e| match e {
            ConfigError::Invalid { key, message, .. } => ConfigError::Invalid {
                line: line_of_key(text, &key),
                key,
                message,
            },
            other => other,
        })
    }

    /// Parses and validates. Relative paths stay relative; see
    /// [`PipelineConfig::resolve_paths`].
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg = Self::parse_raw(text)?;
        cfg.validate_in(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::load_with(path, &Overrides::default())
    }

    /// Reads `path`, resolves its relative paths against its directory,
    /// applies `overrides` and validates the result.
    pub fn load_with(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse_raw(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.apply(overrides);
        cfg.validate_in(&text)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.repo {
            self.repo = v.clone();
        }
        if let Some(v) = &o.head {
            self.head = v.clone();
        }
        if let Some(v) = o.cutoff {
            self.cutoff = v;
        }
        if let Some(v) = o.seed {
            self.seed = Some(v);
        }
        if let Some(v) = &o.output_dir {
            self.output_dir = v.clone();
        }
        if let Some(v) = o.max_parallel {
            self.max_parallel = v;
        }
        if let Some(v) = &o.workroot {
            self.workroot_flag = Some(v.clone());
        }
    }

    /// Makes relative paths relative to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.repo);
        fix(&mut self.output_dir);
        if let Some(p) = self.design.template_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.mirror.issue_store.as_mut() {
            fix(p);
        }
        if let Some(p) = self.harness.workroot.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.budgets;
        if self.seed.is_none() && (b.design > 0 || b.fim > 0 || b.replay > 0) {
            return Err(ConfigError::invalid("seed", "a seed is required when any budget is positive"));
        }
        if !(0.0..=1.0).contains(&self.fim.neg_ratio) {
            return Err(ConfigError::invalid("fim.neg_ratio", "must be within [0, 1]"));
        }
        if self.max_parallel == 0 {
            return Err(ConfigError::invalid("max_parallel", "must be at least 1"));
        }
        if self.harness.timeout_secs.is_nan() || self.harness.timeout_secs <= 0.0 {
            return Err(ConfigError::invalid("harness.timeout_secs", "must be positive"));
        }
        if self.fim.lsp_timeout_secs.is_nan() || self.fim.lsp_timeout_secs <= 0.0 {
            return Err(ConfigError::invalid("fim.lsp_timeout_secs", "must be positive"));
        }
        if matches!(&self.fim.lsp_command, Some(c) if c.is_empty()) {
            return Err(ConfigError::invalid("fim.lsp_command", "must name a program"));
        }
        if matches!(&self.mirror.generator, Some(c) if c.is_empty()) {
            return Err(ConfigError::invalid("mirror.generator", "must name a program"));
        }
        self.mirror
            .filter
            .policy()
            .map_err(|m| ConfigError::invalid("mirror.filter", m))?;
        TestLayout::new(self.layout.clone()).map_err(|e| ConfigError::invalid("layout", e.to_string()))?;
        self.adapter()?;
        Ok(())
    }

    pub fn adapter(&self) -> Result<RunnerAdapter, ConfigError> {
        let mut a = RunnerAdapter::new(&self.env.test_command, self.env.report_format)
            .map_err(|e| ConfigError::invalid("env.test_command", e.to_string()))?;
        a.setup_commands = self.env.setup_commands.clone();
        Ok(a)
    }

    pub fn layout(&self) -> TestLayout {
        TestLayout::new(self.layout.clone()).expect("validated")
    }

    pub fn filter(&self) -> FilterPolicy {
        self.mirror.filter.policy().expect("validated")
    }

    /// Seed for sampling; zero only when nothing is sampled.
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    /// Checkout root: the flag, then the environment variable, then the
    /// config file, then `<output_dir>/work`.
    pub fn workroot(&self) -> PathBuf {
        if let Some(w) = &self.workroot_flag {
            return w.clone();
        }
        if let Some(v) = std::env::var_os(WORKROOT_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(v);
        }
        self.harness
            .workroot
            .clone()
            .unwrap_or_else(|| self.output_dir.join("work"))
    }

    /// Settings that determine the dataset, for the manifest echo. File
    /// locations are left out so that moving a run does not change its
    /// identity; what those files contain shows up in the instances.
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        if let Some(m) = v.as_object_mut() {
            m.remove("output_dir");
            m.remove("repo");
            m.remove("max_parallel");
            for (table, key) in [
                ("harness", "workroot"),
                ("harness", "retain_failed"),
                ("mirror", "issue_store"),
                ("design", "template_file"),
            ] {
                if let Some(t) = m.get_mut(table).and_then(|t| t.as_object_mut()) {
                    t.remove(key);
                }
            }
        }
        v
    }
}
