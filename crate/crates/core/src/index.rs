//! Static repository index: module naming, import resolution and
//! name-to-definition lookup over parsed files.
//!
//! This is the offline symbol-resolution backend and the import graph used
//! for test selection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::syntax::{Binding, ByteSpan, DefKind, ImportTarget, NameRef, ParsedFile, SyntaxRegistry};

/// Where a symbol is defined.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DefSite {
    pub path: String,
    /// 0-based line of the definition.
    pub line: usize,
    pub in_repo: bool,
}

#[derive(Clone, Debug, Default)]
pub struct RepoIndex {
    files: BTreeMap<String, ParsedFile>,
    sources: BTreeMap<String, String>,
    modules: BTreeMap<String, String>,
    skipped: Vec<(String, String)>,
}

/// Dotted module name of `path` relative to `root` ("" = repository root).
fn module_name(path: &str, root: &str) -> Option<String> {
    let rel = if root.is_empty() {
        path
    } else {
        path.strip_prefix(root)?.strip_prefix('/')?
    };
    let stem = rel.strip_suffix(".py")?;
    let stem = stem.strip_suffix("/__init__").unwrap_or(stem);
    if stem == "__init__" || stem.is_empty() {
        return None;
    }
    Some(stem.replace('/', "."))
}

impl RepoIndex {
    /// Parses every file the registry handles. Files that fail to parse are
    /// recorded in [`RepoIndex::skipped`].
    pub fn build(
        sources: BTreeMap<String, String>,
        registry: &SyntaxRegistry,
        source_roots: &[String],
    ) -> Self {
        let mut files = BTreeMap::new();
        let mut skipped = Vec::new();
        for (path, text) in &sources {
            match registry.parse(path, text) {
                Ok(Some(parsed)) => {
                    files.insert(path.clone(), parsed);
                }
                Ok(None) => {}
                Err(e) => skipped.push((path.clone(), e.to_string())),
            }
        }
        let mut modules = BTreeMap::new();
        for root in source_roots {
            for path in files.keys() {
                if let Some(m) = module_name(path, root) {
                    modules.entry(m).or_insert_with(|| path.clone());
                }
            }
        }
        Self {
            files,
            sources,
            modules,
            skipped,
        }
    }

    pub fn file(&self, path: &str) -> Option<&ParsedFile> {
        self.files.get(path)
    }

    pub fn source(&self, path: &str) -> Option<&str> {
        self.sources.get(path).map(String::as_str)
    }

    pub fn files(&self) -> impl Iterator<Item = (&String, &ParsedFile)> {
        self.files.iter()
    }

    pub fn skipped(&self) -> &[(String, String)] {
        &self.skipped
    }

    pub fn module_path(&self, module: &str) -> Option<&str> {
        self.modules.get(module).map(String::as_str)
    }

    fn package_of(&self, path: &str) -> Vec<String> {
        let module = self
            .modules
            .iter()
            .find(|(_, p)| p.as_str() == path)
            .map(|(m, _)| m.clone())
            .unwrap_or_default();
        let mut parts: Vec<String> = module.split('.').filter(|s| !s.is_empty()).map(str::to_string).collect();
        if !path.ends_with("__init__.py") {
            parts.pop();
        }
        parts
    }

    /// Absolute dotted module for an import written in `from_path`.
    pub fn absolute_module(&self, from_path: &str, module: &str) -> Option<String> {
        let dots = module.chars().take_while(|c| *c == '.').count();
        if dots == 0 {
            return Some(module.to_string());
        }
        let mut package = self.package_of(from_path);
        for _ in 1..dots {
            package.pop()?;
        }
        let rest = &module[dots..];
        if !rest.is_empty() {
            package.push(rest.to_string());
        }
        Some(package.join("."))
    }

    fn whole_module(&self, module: &str) -> Option<DefSite> {
        self.module_path(module).map(|p| DefSite {
            path: p.to_string(),
            line: 0,
            in_repo: true,
        })
    }

    fn line_of(&self, path: &str, byte: usize) -> usize {
        self.sources
            .get(path)
            .map(|s| s[..byte.min(s.len())].matches('\n').count())
            .unwrap_or(0)
    }

    fn site_for(&self, path: &str, binding: &Binding, visited: &mut BTreeSet<(String, String)>) -> Option<DefSite> {
        match binding {
            Binding::Definition(i) => {
                let d = &self.files[path].definitions[*i];
                Some(DefSite {
                    path: path.to_string(),
                    line: self.line_of(path, d.span.start),
                    in_repo: true,
                })
            }
            Binding::Local { span, .. } => Some(DefSite {
                path: path.to_string(),
                line: self.line_of(path, span.start),
                in_repo: true,
            }),
            Binding::Import(target) => self.resolve_import(path, target, visited),
        }
    }

    /// Resolves what an import binds. Targets outside the repository resolve
    /// to `None`.
    pub fn resolve_import(
        &self,
        from_path: &str,
        target: &ImportTarget,
        visited: &mut BTreeSet<(String, String)>,
    ) -> Option<DefSite> {
        let module = self.absolute_module(from_path, &target.module)?;
        match &target.name {
            None => self.whole_module(&module),
            Some(name) => self
                .lookup_in_module(&module, name, visited)
                .or_else(|| self.whole_module(&format!("{module}.{name}"))),
        }
    }

    /// Definition of `name` as seen from module `module`'s top level,
    /// following re-exports and star imports.
    pub fn lookup_in_module(
        &self,
        module: &str,
        name: &str,
        visited: &mut BTreeSet<(String, String)>,
    ) -> Option<DefSite> {
        if !visited.insert((module.to_string(), name.to_string())) {
            return None;
        }
        let path = self.module_path(module)?;
        let file = &self.files[path];
        if let Some(b) = file.module_scope.bindings.get(name) {
            return self.site_for(path, b, visited);
        }
        if let Some(sub) = self.whole_module(&format!("{module}.{name}")) {
            return Some(sub);
        }
        for star in &file.module_scope.star_imports {
            let Some(target) = self.absolute_module(path, star) else {
                continue;
            };
            if let Some(site) = self.lookup_in_module(&target, name, visited) {
                return Some(site);
            }
        }
        None
    }

    /// Binding visible for `name` at a reference in `path`, innermost scope
    /// first. Class scopes are only visible to their own direct statements.
    fn visible_binding<'a>(&'a self, file: &'a ParsedFile, name: &str, scope: Option<usize>) -> Option<&'a Binding> {
        for (depth, idx) in file.scope_chain(scope).into_iter().enumerate() {
            let def = &file.definitions[idx];
            if def.kind == DefKind::Class && depth > 0 {
                continue;
            }
            if let Some(b) = def.scope.bindings.get(name) {
                return Some(b);
            }
        }
        file.module_scope.bindings.get(name)
    }

    /// Module denoted by a dotted qualifier such as `pkg.util` in
    /// `pkg.util.f`, when its first segment is bound to an in-repo module.
    fn qualifier_module(&self, file: &ParsedFile, qualifier: &str, scope: Option<usize>) -> Option<String> {
        let mut parts = qualifier.split('.');
        let head = parts.next()?;
        let Binding::Import(target) = self.visible_binding(file, head, scope)? else {
            return None;
        };
        let base = self.absolute_module(&file.path, &target.module)?;
        // `import a.b` binds `a` to module `a`; the qualifier spells out the rest
        let mut module = match &target.name {
            None => base,
            Some(n) => format!("{base}.{n}"),
        };
        for p in parts {
            module = format!("{module}.{p}");
        }
        self.module_path(&module).map(|_| module)
    }

    /// Resolves one reference in `path`. `None` means unresolved: a builtin,
    /// an attribute of a non-module value, or a target outside the repo.
    pub fn resolve_reference(&self, path: &str, reference: &NameRef) -> Option<DefSite> {
        let file = self.files.get(path)?;
        let mut visited = BTreeSet::new();
        match &reference.qualifier {
            Some(q) => {
                let module = self.qualifier_module(file, q, reference.scope)?;
                self.lookup_in_module(&module, &reference.name, &mut visited)
            }
            None => match self.visible_binding(file, &reference.name, reference.scope) {
                Some(b) => self.site_for(path, b, &mut visited),
                None => file.module_scope.star_imports.iter().find_map(|star| {
                    let target = self.absolute_module(path, star)?;
                    self.lookup_in_module(&target, &reference.name, &mut visited)
                }),
            },
        }
    }

    /// In-repo files directly imported by `path` (any scope).
    pub fn imports_of(&self, path: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let Some(file) = self.files.get(path) else {
            return out;
        };
        let scopes = std::iter::once(&file.module_scope).chain(file.definitions.iter().map(|d| &d.scope));
        for scope in scopes {
            for target in scope.imported_modules() {
                let Some(module) = self.absolute_module(path, &target.module) else {
                    continue;
                };
                if let Some(p) = self.module_path(&module) {
                    out.insert(p.to_string());
                }
                if let Some(name) = &target.name {
                    if let Some(p) = self.module_path(&format!("{module}.{name}")) {
                        out.insert(p.to_string());
                    }
                }
                // importing a.b.c also executes a and a.b
                let mut prefix = String::new();
                for part in module.split('.') {
                    if !prefix.is_empty() {
                        prefix.push('.');
                    }
                    prefix.push_str(part);
                    if let Some(p) = self.module_path(&prefix) {
                        out.insert(p.to_string());
                    }
                }
            }
            for star in &scope.star_imports {
                if let Some(p) = self
                    .absolute_module(path, star)
                    .and_then(|m| self.module_path(&m).map(str::to_string))
                {
                    out.insert(p);
                }
            }
        }
        out.remove(path);
        out
    }

    /// Files transitively imported from `path`, including `path` itself.
    pub fn import_closure(&self, path: &str) -> BTreeSet<String> {
        let mut seen = BTreeSet::from([path.to_string()]);
        let mut stack = vec![path.to_string()];
        while let Some(p) = stack.pop() {
            for next in self.imports_of(&p) {
                if seen.insert(next.clone()) {
                    stack.push(next);
                }
            }
        }
        seen
    }

    /// Byte span of a whole file, for module-level holes and objects.
    pub fn file_span(&self, path: &str) -> Option<ByteSpan> {
        self.sources.get(path).map(|s| ByteSpan::new(0, s.len()))
    }
}
