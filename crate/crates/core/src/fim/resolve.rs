//! Symbol resolution backends and hole classification.

use std::collections::BTreeSet;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Classification, SyntaxHole};
use crate::index::{DefSite, RepoIndex};
use crate::syntax::NameRef;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ResolveError {
    #[error("resolver timed out on {symbol}")]
    Timeout { symbol: String },
    #[error("resolver backend: {0}")]
    Backend(String),
}

/// One resolver session. Sessions are single-client: a pool hands out one
/// per worker.
pub trait Resolver: Send {
    fn resolve(&mut self, path: &str, reference: &NameRef) -> Result<Option<DefSite>, ResolveError>;
}

/// Offline backend over the static import graph.
#[derive(Clone, Debug)]
pub struct StaticResolver {
    index: Arc<RepoIndex>,
}

impl StaticResolver {
    pub fn new(index: Arc<RepoIndex>) -> Self {
        Self { index }
    }
}

impl Resolver for StaticResolver {
    fn resolve(&mut self, path: &str, reference: &NameRef) -> Result<Option<DefSite>, ResolveError> {
        Ok(self.index.resolve_reference(path, reference))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UseSite {
    pub path: String,
    pub line: usize,
    pub col: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolResolution {
    pub symbol: String,
    pub use_site: UseSite,
    pub def_site: Option<DefSite>,
    pub cross_file: bool,
}

impl SymbolResolution {
    pub fn new(path: &str, reference: &NameRef, def_site: Option<DefSite>) -> Self {
        let cross_file = def_site
            .as_ref()
            .is_some_and(|d| d.in_repo && d.path != path);
        Self {
            symbol: reference.symbol(),
            use_site: UseSite {
                path: path.to_string(),
                line: reference.line,
                col: reference.col,
            },
            def_site,
            cross_file,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classified {
    pub classification: Classification,
    pub dep_targets: BTreeSet<String>,
    pub resolutions: Vec<SymbolResolution>,
    /// Symbols whose lookup timed out; they count as unresolved.
    pub timeouts: usize,
}

/// Resolves every reference in the hole body. Positive iff at least one
/// resolves to a definition in another repository file.
pub fn classify_hole(hole: &SyntaxHole, resolver: &mut dyn Resolver) -> Result<Classified, ResolveError> {
    let mut resolutions = Vec::with_capacity(hole.references.len());
    let mut timeouts = 0;
    for reference in &hole.references {
        let site = match resolver.resolve(&hole.path, reference) {
            Ok(site) => site,
            Err(ResolveError::Timeout { symbol }) => {
                log::debug!("resolution of {symbol} in {} timed out", hole.path);
                timeouts += 1;
                None
            }
            Err(e) => return Err(e),
        };
        resolutions.push(SymbolResolution::new(&hole.path, reference, site));
    }
    let dep_targets: BTreeSet<String> = resolutions
        .iter()
        .filter(|r| r.cross_file)
        .filter_map(|r| r.def_site.as_ref().map(|d| d.path.clone()))
        .collect();
    let classification = if dep_targets.is_empty() {
        Classification::Negative
    } else {
        Classification::Positive
    };
    Ok(Classified {
        classification,
        dep_targets,
        resolutions,
        timeouts,
    })
}

type Factory = dyn Fn() -> Result<Box<dyn Resolver>, ResolveError> + Send + Sync;

/// Hands out resolver sessions, one per concurrent user, reusing idle ones.
pub struct ResolverPool {
    factory: Box<Factory>,
    idle: Mutex<Vec<Box<dyn Resolver>>>,
}

pub struct PooledResolver<'a> {
    pool: &'a ResolverPool,
    session: Option<Box<dyn Resolver>>,
}

impl std::ops::Deref for PooledResolver<'_> {
    type Target = dyn Resolver;
    fn deref(&self) -> &Self::Target {
        self.session.as_deref().expect("session present until drop")
    }
}

impl std::ops::DerefMut for PooledResolver<'_> {
    fn deref_mut(&mut self) -> &mut Self::Target {
        self.session.as_deref_mut().expect("session present until drop")
    }
}

impl Drop for PooledResolver<'_> {
    fn drop(&mut self) {
        if let Some(s) = self.session.take() {
            self.pool.idle.lock().unwrap_or_else(|e| e.into_inner()).push(s);
        }
    }
}

impl ResolverPool {
    pub fn new(factory: impl Fn() -> Result<Box<dyn Resolver>, ResolveError> + Send + Sync + 'static) -> Self {
        Self {
            factory: Box::new(factory),
            idle: Mutex::new(Vec::new()),
        }
    }

    pub fn from_index(index: Arc<RepoIndex>) -> Self {
        Self::new(move || Ok(Box::new(StaticResolver::new(index.clone())) as Box<dyn Resolver>))
    }

    pub fn checkout(&self) -> Result<PooledResolver<'_>, ResolveError> {
        let idle = self.idle.lock().unwrap_or_else(|e| e.into_inner()).pop();
        let session = match idle {
            Some(s) => s,
            None => (self.factory)()?,
        };
        Ok(PooledResolver {
            pool: self,
            session: Some(session),
        })
    }

    pub fn idle_sessions(&self) -> usize {
        self.idle.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

/// Classifies holes on up to `workers` threads, one session each. Output
/// order matches input order.
pub fn classify_all(
    holes: &[SyntaxHole],
    pool: &ResolverPool,
    workers: usize,
) -> Result<Vec<Classified>, ResolveError> {
    let workers = workers.clamp(1, holes.len().max(1));
    let chunk = holes.len().div_ceil(workers).max(1);
    let results: Vec<Result<Vec<Classified>, ResolveError>> = std::thread::scope(|s| {
        let handles: Vec<_> = holes
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    let mut session = pool.checkout()?;
                    part.iter().map(|h| classify_hole(h, &mut *session)).collect()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(ResolveError::Backend("worker panicked".into()))))
            .collect()
    });
    let mut out = Vec::with_capacity(holes.len());
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::fim::enumerate_holes_in;
    use crate::syntax::SyntaxRegistry;

    fn fixture() -> (Arc<RepoIndex>, Vec<SyntaxHole>) {
        let files = [
            ("pkg/__init__.py", ""),
            ("pkg/helpers.py", "def clamp(x):\n    return max(0, x)\n"),
            (
                "pkg/core.py",
                "import json\nfrom pkg.helpers import clamp\n\n\
                 def local(x):\n    return x + 1\n\n\
                 def uses_sibling(x):\n    return clamp(x)\n\n\
                 def uses_local(x):\n    return local(x) * 2\n\n\
                 def uses_stdlib(x):\n    return json.dumps(len(x))\n",
            ),
        ];
        let sources: BTreeMap<String, String> = files.iter().map(|(p, s)| (p.to_string(), s.to_string())).collect();
        let reg = SyntaxRegistry::default();
        let holes = enumerate_holes_in(&sources, &|p| p == "pkg/core.py", 1, &reg).unwrap().holes;
        let ix = RepoIndex::build(sources, &reg, &["".into()]);
        (Arc::new(ix), holes)
    }

    #[test]
    fn classification_rules() {
        let (ix, holes) = fixture();
        let mut r = StaticResolver::new(ix);
        let by_name = |n: &str| holes.iter().find(|h| h.name == n).unwrap();
        let c = classify_hole(by_name("uses_sibling"), &mut r).unwrap();
        assert_eq!(c.classification, Classification::Positive);
        assert_eq!(c.dep_targets, BTreeSet::from(["pkg/helpers.py".to_string()]));
        for n in ["uses_local", "uses_stdlib", "local"] {
            let c = classify_hole(by_name(n), &mut r).unwrap();
            assert_eq!(c.classification, Classification::Negative, "{n}");
            assert!(c.dep_targets.is_empty());
        }
    }

    struct TimesOut;
    impl Resolver for TimesOut {
        fn resolve(&mut self, _: &str, r: &NameRef) -> Result<Option<DefSite>, ResolveError> {
            Err(ResolveError::Timeout { symbol: r.symbol() })
        }
    }

    #[test]
    fn timeouts_count_as_unresolved() {
        let (_, holes) = fixture();
        let h = holes.iter().find(|h| h.name == "uses_sibling").unwrap();
        let c = classify_hole(h, &mut TimesOut).unwrap();
        assert_eq!(c.classification, Classification::Negative);
        assert_eq!(c.timeouts, h.references.len());
    }

    #[test]
    fn cross_file_requires_in_repo_and_other_path() {
        let r = NameRef {
            name: "f".into(),
            qualifier: None,
            byte: 0,
            line: 0,
            col: 0,
            scope: None,
        };
        let site = |path: &str, in_repo| Some(DefSite { path: path.into(), line: 0, in_repo });
        assert!(SymbolResolution::new("a.py", &r, site("b.py", true)).cross_file);
        assert!(!SymbolResolution::new("a.py", &r, site("a.py", true)).cross_file);
        assert!(!SymbolResolution::new("a.py", &r, site("/usr/lib/x.py", false)).cross_file);
        assert!(!SymbolResolution::new("a.py", &r, None).cross_file);
    }

    #[test]
    fn parallel_matches_sequential_and_reuses_sessions() {
        let (ix, holes) = fixture();
        let pool = ResolverPool::from_index(ix.clone());
        let par = classify_all(&holes, &pool, 3).unwrap();
        let mut r = StaticResolver::new(ix);
        let seq: Vec<_> = holes.iter().map(|h| classify_hole(h, &mut r).unwrap()).collect();
        assert_eq!(par, seq);
        assert!(pool.idle_sessions() >= 1);
        let _a = pool.checkout().unwrap();
        let _b = pool.checkout().unwrap();
    }
}
