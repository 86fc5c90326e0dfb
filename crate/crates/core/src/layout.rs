//! Test-suite layout conventions of the subject repository.

use globset::{Glob, GlobSet, GlobSetBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("invalid test layout pattern {pattern:?}: {message}")]
pub struct LayoutError {
    pub pattern: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    /// Globs matched against the full repository-relative path.
    pub test_globs: Vec<String>,
    /// Globs matched against the file name only.
    pub test_file_patterns: Vec<String>,
    /// Prefix of test function / method names.
    pub test_function_prefix: String,
    /// Prefix of test class names.
    pub test_class_prefix: String,
    /// Directories that act as import roots, in lookup order.
    pub source_roots: Vec<String>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self {
            test_globs: vec!["tests/**".into(), "test/**".into(), "**/tests/**".into()],
            test_file_patterns: vec!["test_*.py".into(), "*_test.py".into()],
            test_function_prefix: "test".into(),
            test_class_prefix: "Test".into(),
            source_roots: vec!["".into(), "src".into()],
        }
    }
}

/// Compiled form of [`LayoutConfig`].
#[derive(Clone, Debug)]
pub struct TestLayout {
    config: LayoutConfig,
    paths: GlobSet,
    names: GlobSet,
}

fn build(patterns: &[String]) -> Result<GlobSet, LayoutError> {
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let glob = Glob::new(p).map_err(|e| LayoutError {
            pattern: p.clone(),
            message: e.to_string(),
        })?;
        b.add(glob);
    }
    b.build().map_err(|e| LayoutError {
        pattern: patterns.join(","),
        message: e.to_string(),
    })
}

impl TestLayout {
    pub fn new(config: LayoutConfig) -> Result<Self, LayoutError> {
        Ok(Self {
            paths: build(&config.test_globs)?,
            names: build(&config.test_file_patterns)?,
            config,
        })
    }

    pub fn config(&self) -> &LayoutConfig {
        &self.config
    }

    /// A path is a test path when it lives under a test directory glob or its
    /// file name matches a test file pattern.
    pub fn is_test_path(&self, path: &str) -> bool {
        let name = path.rsplit('/').next().unwrap_or(path);
        self.paths.is_match(path) || self.names.is_match(name)
    }

    /// A test *file* is a test path that can contain test cases, i.e. its
    /// name matches a test file pattern.
    pub fn is_test_file(&self, path: &str) -> bool {
        let name = path.rsplit('/').next().unwrap_or(path);
        self.names.is_match(name)
    }

    pub fn is_test_function(&self, name: &str) -> bool {
        name.starts_with(&self.config.test_function_prefix)
    }

    pub fn is_test_class(&self, name: &str) -> bool {
        name.starts_with(&self.config.test_class_prefix)
    }
}

impl Default for TestLayout {
    fn default() -> Self {
        Self::new(LayoutConfig::default()).expect("default layout compiles")
    }
}
