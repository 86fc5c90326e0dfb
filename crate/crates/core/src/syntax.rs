//! Pluggable syntax-tree providers.
//!
//! A provider turns one source file into a [`ParsedFile`]: definitions with
//! byte spans, per-scope bindings (including imports) and every name
//! reference with its enclosing scope. Downstream modules only rely on this
//! model, never on the concrete grammar.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tree_sitter::{Node, Parser};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyntaxError {
    #[error("{path}:{line}: syntax error")]
    Parse { path: String, line: usize },
    #[error("no syntax provider configured for {language} ({path})")]
    ProviderUnavailable { path: String, language: String },
    #[error("{path}: {message}")]
    Grammar { path: String, message: String },
}

/// Half-open byte range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ByteSpan {
    pub start: usize,
    pub end: usize,
}

impl ByteSpan {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &ByteSpan) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn contains_byte(&self, byte: usize) -> bool {
        self.start <= byte && byte < self.end
    }

    pub fn overlaps(&self, other: &ByteSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    /// True when one span lies within the other.
    pub fn nests_with(&self, other: &ByteSpan) -> bool {
        self.contains(other) || other.contains(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DefKind {
    Function,
    Class,
}

/// What an import statement binds a name to. `module` may be relative
/// (leading dots); `name` is set for `from module import name`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportTarget {
    pub module: String,
    pub name: Option<String>,
    pub line: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Binding {
    /// Assignment, parameter, loop target and the like.
    Local { span: ByteSpan, line: usize },
    /// A `def`/`class` statement; index into [`ParsedFile::definitions`].
    Definition(usize),
    Import(ImportTarget),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scope {
    /// First binding of each name wins.
    pub bindings: BTreeMap<String, Binding>,
    pub star_imports: Vec<String>,
    /// Names declared `global`/`nonlocal` in this scope.
    pub declared_outer: BTreeSet<String>,
}

impl Scope {
    fn bind(&mut self, name: &str, binding: Binding) {
        if !self.declared_outer.contains(name) {
            self.bindings.entry(name.to_string()).or_insert(binding);
        }
    }

    /// Modules this scope imports from, in source order.
    pub fn imported_modules(&self) -> impl Iterator<Item = &ImportTarget> {
        self.bindings.values().filter_map(|b| match b {
            Binding::Import(t) => Some(t),
            _ => None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Definition {
    pub kind: DefKind,
    pub name: String,
    pub qualified_name: String,
    pub parent: Option<usize>,
    /// Whole definition, decorators included.
    pub span: ByteSpan,
    /// Signature plus leading docstring.
    pub header: ByteSpan,
    pub block: ByteSpan,
    /// Statements after the docstring; `None` when nothing but a docstring.
    pub body: Option<ByteSpan>,
    pub doc: Option<String>,
    /// 1-based, inclusive.
    pub start_line: usize,
    pub end_line: usize,
    pub block_lines: usize,
    pub body_lines: usize,
    pub scope: Scope,
}

/// An identifier read somewhere in the file. For `a.b.f`, the reference to
/// `f` carries qualifier `a.b`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameRef {
    pub name: String,
    pub qualifier: Option<String>,
    pub byte: usize,
    /// 0-based line.
    pub line: usize,
    /// 0-based column in UTF-16 code units.
    pub col: usize,
    /// Innermost enclosing definition.
    pub scope: Option<usize>,
}

impl NameRef {
    pub fn symbol(&self) -> String {
        match &self.qualifier {
            Some(q) => format!("{q}.{}", self.name),
            None => self.name.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedFile {
    pub path: String,
    pub language: String,
    pub definitions: Vec<Definition>,
    pub module_scope: Scope,
    pub references: Vec<NameRef>,
    pub line_count: usize,
}

impl ParsedFile {
    pub fn top_level(&self) -> impl Iterator<Item = (usize, &Definition)> {
        self.definitions
            .iter()
            .enumerate()
            .filter(|(_, d)| d.parent.is_none())
    }

    pub fn children(&self, parent: usize) -> impl Iterator<Item = (usize, &Definition)> {
        self.definitions
            .iter()
            .enumerate()
            .filter(move |(_, d)| d.parent == Some(parent))
    }

    /// References whose byte offset falls inside `span`.
    pub fn references_in<'a>(&'a self, span: &'a ByteSpan) -> impl Iterator<Item = &'a NameRef> {
        self.references.iter().filter(move |r| span.contains_byte(r.byte))
    }

    /// Chain of enclosing definitions, innermost first.
    pub fn scope_chain(&self, innermost: Option<usize>) -> Vec<usize> {
        let mut chain = Vec::new();
        let mut cur = innermost;
        while let Some(i) = cur {
            chain.push(i);
            cur = self.definitions[i].parent;
        }
        chain
    }
}

pub trait SyntaxProvider: Send + Sync {
    fn language(&self) -> &'static str;
    fn extensions(&self) -> &'static [&'static str];
    fn parse(&self, path: &str, source: &str) -> Result<ParsedFile, SyntaxError>;
}

const KNOWN_LANGUAGES: &[(&str, &str)] = &[
    ("py", "python"),
    ("pyi", "python"),
    ("rs", "rust"),
    ("go", "go"),
    ("js", "javascript"),
    ("jsx", "javascript"),
    ("mjs", "javascript"),
    ("ts", "typescript"),
    ("tsx", "typescript"),
    ("java", "java"),
    ("kt", "kotlin"),
    ("scala", "scala"),
    ("c", "c"),
    ("h", "c"),
    ("cc", "cpp"),
    ("cpp", "cpp"),
    ("hpp", "cpp"),
    ("cs", "csharp"),
    ("rb", "ruby"),
    ("php", "php"),
    ("swift", "swift"),
];

fn extension(path: &str) -> Option<&str> {
    let name = path.rsplit('/').next().unwrap_or(path);
    name.rsplit_once('.').map(|(_, ext)| ext)
}

/// Programming language guessed from the file extension, if it is a known
/// source extension.
pub fn language_of(path: &str) -> Option<&'static str> {
    let ext = extension(path)?;
    KNOWN_LANGUAGES
        .iter()
        .find(|(e, _)| *e == ext)
        .map(|(_, lang)| *lang)
}

/// Extension-keyed set of providers.
#[derive(Clone)]
pub struct SyntaxRegistry {
    providers: Vec<Arc<dyn SyntaxProvider>>,
}

impl SyntaxRegistry {
    pub fn empty() -> Self {
        Self {
            providers: Vec::new(),
        }
    }

    pub fn with(mut self, provider: Arc<dyn SyntaxProvider>) -> Self {
        self.providers.push(provider);
        self
    }

    pub fn for_path(&self, path: &str) -> Option<&dyn SyntaxProvider> {
        let ext = extension(path)?;
        self.providers
            .iter()
            .find(|p| p.extensions().contains(&ext))
            .map(|p| p.as_ref())
    }

    pub fn handles(&self, path: &str) -> bool {
        self.for_path(path).is_some()
    }

    /// Parses `source`. Files of a known language without a provider yield
    /// `ProviderUnavailable`; files of unknown type yield `Ok(None)`.
    pub fn parse(&self, path: &str, source: &str) -> Result<Option<ParsedFile>, SyntaxError> {
        match self.for_path(path) {
            Some(p) => p.parse(path, source).map(Some),
            None => match language_of(path) {
                Some(lang) => Err(SyntaxError::ProviderUnavailable {
                    path: path.to_string(),
                    language: lang.to_string(),
                }),
                None => Ok(None),
            },
        }
    }
}

impl Default for SyntaxRegistry {
    fn default() -> Self {
        Self::empty().with(Arc::new(PythonProvider))
    }
}

impl std::fmt::Debug for SyntaxRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list()
            .entries(self.providers.iter().map(|p| p.language()))
            .finish()
    }
}

/// Python via tree-sitter.
#[derive(Clone, Copy, Debug, Default)]
pub struct PythonProvider;

impl SyntaxProvider for PythonProvider {
    fn language(&self) -> &'static str {
        "python"
    }

    fn extensions(&self) -> &'static [&'static str] {
        &["py"]
    }

    fn parse(&self, path: &str, source: &str) -> Result<ParsedFile, SyntaxError> {
        let mut parser = Parser::new();
        parser
            .set_language(&tree_sitter_python::LANGUAGE.into())
            .map_err(|e| SyntaxError::Grammar {
                path: path.to_string(),
                message: e.to_string(),
            })?;
        let tree = parser.parse(source, None).ok_or_else(|| SyntaxError::Grammar {
            path: path.to_string(),
            message: "parser returned no tree".into(),
        })?;
        let root = tree.root_node();
        if root.has_error() {
            return Err(SyntaxError::Parse {
                path: path.to_string(),
                line: first_error_line(root).unwrap_or(0) + 1,
            });
        }
        let mut walker = PyWalker::new(path, source);
        walker.visit_children(root, None);
        Ok(ParsedFile {
            path: path.to_string(),
            language: "python".into(),
            definitions: walker.definitions,
            module_scope: walker.module_scope,
            references: walker.references,
            line_count: source.lines().count(),
        })
    }
}

fn first_error_line(node: Node) -> Option<usize> {
    if node.is_error() || node.is_missing() {
        return Some(node.start_position().row);
    }
    let mut cursor = node.walk();
    for child in node.children(&mut cursor) {
        if child.has_error() {
            if let Some(l) = first_error_line(child) {
                return Some(l);
            }
        }
    }
    None
}

struct PyWalker<'s> {
    src: &'s str,
    line_starts: Vec<usize>,
    definitions: Vec<Definition>,
    module_scope: Scope,
    references: Vec<NameRef>,
}

impl<'s> PyWalker<'s> {
    fn new(_path: &str, src: &'s str) -> Self {
        let mut line_starts = vec![0];
        line_starts.extend(src.match_indices('\n').map(|(i, _)| i + 1));
        Self {
            src,
            line_starts,
            definitions: Vec::new(),
            module_scope: Scope::default(),
            references: Vec::new(),
        }
    }

    fn text(&self, node: Node) -> &'s str {
        &self.src[node.byte_range()]
    }

    fn scope_mut(&mut self, scope: Option<usize>) -> &mut Scope {
        match scope {
            Some(i) => &mut self.definitions[i].scope,
            None => &mut self.module_scope,
        }
    }

    fn bind(&mut self, scope: Option<usize>, name: &str, binding: Binding) {
        let redirect = scope.is_some_and(|i| self.definitions[i].scope.declared_outer.contains(name));
        if redirect {
            self.module_scope.bind(name, binding);
        } else {
            self.scope_mut(scope).bind(name, binding);
        }
    }

    fn utf16_col(&self, byte: usize, row: usize) -> usize {
        let start = self.line_starts[row];
        self.src[start..byte].encode_utf16().count()
    }

    fn push_ref(&mut self, node: Node, qualifier: Option<String>, scope: Option<usize>) {
        let row = node.start_position().row;
        self.references.push(NameRef {
            name: self.text(node).to_string(),
            qualifier,
            byte: node.start_byte(),
            line: row,
            col: self.utf16_col(node.start_byte(), row),
            scope,
        });
    }

    fn visit_children(&mut self, node: Node, scope: Option<usize>) {
        let mut cursor = node.walk();
        let children: Vec<Node> = node.named_children(&mut cursor).collect();
        for child in children {
            self.visit(child, scope);
        }
    }

    fn visit(&mut self, node: Node, scope: Option<usize>) {
        match node.kind() {
            "comment" => {}
            "decorated_definition" => {
                let mut cursor = node.walk();
                let children: Vec<Node> = node.named_children(&mut cursor).collect();
                for child in children {
                    match child.kind() {
                        "decorator" => self.visit_children(child, scope),
                        "function_definition" | "class_definition" => {
                            self.define(child, node.start_byte(), scope)
                        }
                        _ => self.visit(child, scope),
                    }
                }
            }
            "function_definition" | "class_definition" => self.define(node, node.start_byte(), scope),
            "import_statement" => self.import(node, scope),
            "import_from_statement" => self.import_from(node, scope),
            "future_import_statement" => {}
            "global_statement" | "nonlocal_statement" => {
                if let Some(i) = scope {
                    let mut cursor = node.walk();
                    let names: Vec<String> = node
                        .named_children(&mut cursor)
                        .filter(|c| c.kind() == "identifier")
                        .map(|c| self.text(c).to_string())
                        .collect();
                    self.definitions[i].scope.declared_outer.extend(names);
                }
            }
            "assignment" | "augmented_assignment" => {
                if let Some(left) = node.child_by_field_name("left") {
                    if node.kind() == "augmented_assignment" {
                        self.visit(left, scope);
                    }
                    self.bind_target(left, scope);
                }
                if let Some(t) = node.child_by_field_name("type") {
                    self.visit(t, scope);
                }
                if let Some(right) = node.child_by_field_name("right") {
                    self.visit(right, scope);
                }
            }
            "for_statement" | "for_in_clause" => {
                if let Some(left) = node.child_by_field_name("left") {
                    self.bind_target(left, scope);
                }
                let mut cursor = node.walk();
                let rest: Vec<Node> = node
                    .named_children(&mut cursor)
                    .filter(|c| Some(*c) != node.child_by_field_name("left"))
                    .collect();
                for c in rest {
                    self.visit(c, scope);
                }
            }
            "as_pattern" => {
                let mut cursor = node.walk();
                let children: Vec<Node> = node.named_children(&mut cursor).collect();
                for c in children {
                    if c.kind() == "as_pattern_target" {
                        self.bind_target(c, scope);
                    } else {
                        self.visit(c, scope);
                    }
                }
            }
            "except_clause" => {
                let mut cursor = node.walk();
                let children: Vec<Node> = node.children(&mut cursor).collect();
                let mut after_as = false;
                for c in children {
                    if c.kind() == "as" {
                        after_as = true;
                    } else if c.is_named() {
                        if after_as && c.kind() == "identifier" {
                            self.bind_target(c, scope);
                        } else {
                            self.visit(c, scope);
                        }
                        after_as = false;
                    }
                }
            }
            "named_expression" => {
                if let Some(name) = node.child_by_field_name("name") {
                    self.bind_target(name, scope);
                }
                if let Some(v) = node.child_by_field_name("value") {
                    self.visit(v, scope);
                }
            }
            "lambda" => {
                if let Some(p) = node.child_by_field_name("parameters") {
                    self.parameters(p, scope, scope);
                }
                if let Some(b) = node.child_by_field_name("body") {
                    self.visit(b, scope);
                }
            }
            "keyword_argument" => {
                if let Some(v) = node.child_by_field_name("value") {
                    self.visit(v, scope);
                }
            }
            "attribute" => self.attribute(node, scope),
            "identifier" => self.push_ref(node, None, scope),
            "string" | "concatenated_string" => {
                // only f-string interpolations contain code
                let mut cursor = node.walk();
                let children: Vec<Node> = node.named_children(&mut cursor).collect();
                for c in children {
                    match c.kind() {
                        "interpolation" => self.visit_children(c, scope),
                        "string" => self.visit(c, scope),
                        _ => {}
                    }
                }
            }
            _ => self.visit_children(node, scope),
        }
    }

    fn dotted(&self, node: Node) -> Option<String> {
        match node.kind() {
            "identifier" => Some(self.text(node).to_string()),
            "attribute" => {
                let obj = self.dotted(node.child_by_field_name("object")?)?;
                let attr = node.child_by_field_name("attribute")?;
                Some(format!("{obj}.{}", self.text(attr)))
            }
            _ => None,
        }
    }

    fn attribute(&mut self, node: Node, scope: Option<usize>) {
        let Some(object) = node.child_by_field_name("object") else {
            return;
        };
        if let Some(attr) = node.child_by_field_name("attribute") {
            if let Some(q) = self.dotted(object) {
                self.push_ref(attr, Some(q), scope);
            }
        }
        self.visit(object, scope);
    }

    fn bind_target(&mut self, node: Node, scope: Option<usize>) {
        match node.kind() {
            "identifier" => {
                let name = self.text(node).to_string();
                let line = node.start_position().row + 1;
                self.bind(
                    scope,
                    &name,
                    Binding::Local {
                        span: ByteSpan::new(node.start_byte(), node.end_byte()),
                        line,
                    },
                );
            }
            "attribute" | "subscript" => self.visit(node, scope),
            _ => {
                let mut cursor = node.walk();
                let children: Vec<Node> = node.named_children(&mut cursor).collect();
                for c in children {
                    self.bind_target(c, scope);
                }
            }
        }
    }

    /// Binds parameter names into `inner`; defaults and annotations are
    /// evaluated in `outer`.
    fn parameters(&mut self, node: Node, outer: Option<usize>, inner: Option<usize>) {
        let mut cursor = node.walk();
        let params: Vec<Node> = node.named_children(&mut cursor).collect();
        for p in params {
            match p.kind() {
                "identifier" => self.bind_target(p, inner),
                "default_parameter" | "typed_default_parameter" => {
                    if let Some(n) = p.child_by_field_name("name") {
                        self.bind_target(n, inner);
                    }
                    if let Some(t) = p.child_by_field_name("type") {
                        self.visit(t, outer);
                    }
                    if let Some(v) = p.child_by_field_name("value") {
                        self.visit(v, outer);
                    }
                }
                "typed_parameter" => {
                    let mut c2 = p.walk();
                    let parts: Vec<Node> = p.named_children(&mut c2).collect();
                    for part in parts {
                        match part.kind() {
                            "identifier" | "list_splat_pattern" | "dictionary_splat_pattern" => {
                                self.bind_target(part, inner)
                            }
                            _ => self.visit(part, outer),
                        }
                    }
                }
                "list_splat_pattern" | "dictionary_splat_pattern" | "tuple_pattern" => {
                    self.bind_target(p, inner)
                }
                _ => {}
            }
        }
    }

    fn import(&mut self, node: Node, scope: Option<usize>) {
        let line = node.start_position().row + 1;
        let mut cursor = node.walk();
        let names: Vec<Node> = node.children_by_field_name("name", &mut cursor).collect();
        for n in names {
            match n.kind() {
                "dotted_name" => {
                    let full = self.text(n);
                    let first = full.split('.').next().unwrap_or(full).to_string();
                    self.bind(
                        scope,
                        &first,
                        Binding::Import(ImportTarget {
                            module: first.clone(),
                            name: None,
                            line,
                        }),
                    );
                }
                "aliased_import" => {
                    let (Some(module), Some(alias)) =
                        (n.child_by_field_name("name"), n.child_by_field_name("alias"))
                    else {
                        continue;
                    };
                    let alias = self.text(alias).to_string();
                    let module = self.text(module).to_string();
                    self.bind(
                        scope,
                        &alias,
                        Binding::Import(ImportTarget {
                            module,
                            name: None,
                            line,
                        }),
                    );
                }
                _ => {}
            }
        }
    }

    fn import_from(&mut self, node: Node, scope: Option<usize>) {
        let line = node.start_position().row + 1;
        let Some(module) = node.child_by_field_name("module_name") else {
            return;
        };
        let module = self.text(module).replace(char::is_whitespace, "");
        let mut cursor = node.walk();
        let children: Vec<Node> = node.named_children(&mut cursor).collect();
        if children.iter().any(|c| c.kind() == "wildcard_import") {
            self.scope_mut(scope).star_imports.push(module);
            return;
        }
        let mut cursor = node.walk();
        let names: Vec<Node> = node.children_by_field_name("name", &mut cursor).collect();
        for n in names {
            let (name, alias) = match n.kind() {
                "dotted_name" => (self.text(n).to_string(), self.text(n).to_string()),
                "aliased_import" => {
                    let (Some(name), Some(alias)) =
                        (n.child_by_field_name("name"), n.child_by_field_name("alias"))
                    else {
                        continue;
                    };
                    (self.text(name).to_string(), self.text(alias).to_string())
                }
                _ => continue,
            };
            self.bind(
                scope,
                &alias,
                Binding::Import(ImportTarget {
                    module: module.clone(),
                    name: Some(name),
                    line,
                }),
            );
        }
    }

    fn line_start_of(&self, byte: usize) -> usize {
        match self.line_starts.binary_search(&byte) {
            Ok(i) => self.line_starts[i],
            Err(i) => self.line_starts[i - 1],
        }
    }

    fn docstring(&self, stmt: Node) -> Option<String> {
        if stmt.kind() != "expression_statement" || stmt.named_child_count() != 1 {
            return None;
        }
        let s = stmt.named_child(0)?;
        if s.kind() != "string" {
            return None;
        }
        let mut cursor = s.walk();
        let content: String = s
            .named_children(&mut cursor)
            .filter(|c| c.kind() == "string_content")
            .map(|c| self.text(c))
            .collect();
        Some(clean_doc(&content))
    }

    fn define(&mut self, node: Node, span_start: usize, scope: Option<usize>) {
        let kind = if node.kind() == "function_definition" {
            DefKind::Function
        } else {
            DefKind::Class
        };
        let Some(name_node) = node.child_by_field_name("name") else {
            return;
        };
        let Some(block) = node.child_by_field_name("body") else {
            return;
        };
        let name = self.text(name_node).to_string();
        let qualified_name = match scope {
            Some(p) => format!("{}.{}", self.definitions[p].qualified_name, name),
            None => name.clone(),
        };

        let colon_end = {
            let mut cursor = node.walk();
            node.children(&mut cursor)
                .filter(|c| c.kind() == ":" && c.end_byte() <= block.start_byte())
                .map(|c| c.end_byte())
                .last()
                .unwrap_or(block.start_byte())
        };
        let mut cursor = block.walk();
        let stmts: Vec<Node> = block.named_children(&mut cursor).collect();
        let first_code = stmts.iter().position(|s| s.kind() != "comment");
        let doc_idx = first_code.filter(|&i| self.docstring(stmts[i]).is_some());
        let doc = doc_idx.and_then(|i| self.docstring(stmts[i]));
        let header_end = doc_idx.map(|i| stmts[i].end_byte()).unwrap_or(colon_end);
        let body_first = match doc_idx {
            Some(i) => stmts.get(i + 1),
            None => stmts.first(),
        };
        let header_row = self.src[..header_end].matches('\n').count();
        let body = body_first.map(|first| {
            let start = if first.start_position().row > header_row {
                self.line_start_of(first.start_byte())
            } else {
                first.start_byte()
            };
            ByteSpan::new(start, block.end_byte().max(start))
        });
        let body_lines = body
            .map(|b| {
                let first = self.src[..b.start].matches('\n').count();
                let last = self.src[..b.end.saturating_sub(1).max(b.start)].matches('\n').count();
                last - first + 1
            })
            .unwrap_or(0);
        let start_row = self.src[..span_start].matches('\n').count();

        let idx = self.definitions.len();
        self.definitions.push(Definition {
            kind,
            name: name.clone(),
            qualified_name,
            parent: scope,
            span: ByteSpan::new(span_start, node.end_byte()),
            header: ByteSpan::new(span_start, header_end),
            block: ByteSpan::new(block.start_byte(), block.end_byte()),
            body,
            doc,
            start_line: start_row + 1,
            end_line: node.end_position().row + 1,
            block_lines: block.end_position().row - block.start_position().row + 1,
            body_lines,
            scope: Scope::default(),
        });
        self.bind(scope, &name, Binding::Definition(idx));

        match kind {
            DefKind::Function => {
                if let Some(p) = node.child_by_field_name("parameters") {
                    self.parameters(p, scope, Some(idx));
                }
                if let Some(r) = node.child_by_field_name("return_type") {
                    self.visit(r, scope);
                }
                // global/nonlocal declarations must be known before bindings
                self.collect_declared_outer(block, idx);
            }
            DefKind::Class => {
                if let Some(s) = node.child_by_field_name("superclasses") {
                    self.visit(s, scope);
                }
            }
        }
        self.visit_children(block, Some(idx));
    }

    fn collect_declared_outer(&mut self, node: Node, idx: usize) {
        let mut cursor = node.walk();
        let children: Vec<Node> = node.named_children(&mut cursor).collect();
        for c in children {
            match c.kind() {
                "global_statement" | "nonlocal_statement" => {
                    let mut c2 = c.walk();
                    let names: Vec<String> = c
                        .named_children(&mut c2)
                        .filter(|n| n.kind() == "identifier")
                        .map(|n| self.text(n).to_string())
                        .collect();
                    self.definitions[idx].scope.declared_outer.extend(names);
                }
                "function_definition" | "class_definition" | "decorated_definition" | "lambda" => {}
                _ => self.collect_declared_outer(c, idx),
            }
        }
    }
}

/// Strips the docstring's indentation the way `inspect.cleandoc` does.
fn clean_doc(raw: &str) -> String {
    let mut lines = raw.lines();
    let first = lines.next().unwrap_or("").trim().to_string();
    let rest: Vec<&str> = lines.collect();
    let indent = rest
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    let mut out = vec![first];
    out.extend(rest.iter().map(|l| l.get(indent..).unwrap_or("").trim_end().to_string()));
    while out.last().is_some_and(|l| l.is_empty()) {
        out.pop();
    }
    while out.first().is_some_and(|l| l.is_empty()) {
        out.remove(0);
    }
    out.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = r#"import os
import pkg.util as pu
from .helpers import clamp, scale as sc
from pkg import *

LIMIT = 10


@decorator
def outer(a, b=LIMIT, *args, key: int = 3, **kw):
    """Combine values.

    More words.
    """
    total = clamp(a) + sc(b)
    for item in args:
        total += item

    def inner(x):
        return x * total

    return os.path.join(pu.fmt(inner(total)), f"{key}")


class Widget(Base):
    """A widget."""

    size = 3

    def grow(self, n):
        global LIMIT
        LIMIT = n
        return self.size + n

    def shrink(self):
        return 0
"#;

    fn parse() -> ParsedFile {
        PythonProvider.parse("pkg/mod.py", SRC).unwrap()
    }

    #[test]
    fn definitions_and_spans() {
        let f = parse();
        let names: Vec<_> = f.definitions.iter().map(|d| d.qualified_name.as_str()).collect();
        assert_eq!(names, ["outer", "outer.inner", "Widget", "Widget.grow", "Widget.shrink"]);
        let outer = &f.definitions[0];
        assert!(SRC[outer.span.start..].starts_with("@decorator"));
        assert!(SRC[outer.header.start..outer.header.end].ends_with("\"\"\""));
        let body = outer.body.unwrap();
        assert!(SRC[body.start..body.end].starts_with("    total = clamp(a)"));
        assert!(SRC[body.start..body.end].ends_with("f\"{key}\")"));
        assert_eq!(outer.doc.as_deref(), Some("Combine values.\n\nMore words."));
        assert!(outer.header.end <= body.start);
        let shrink = &f.definitions[4];
        assert_eq!(shrink.body_lines, 1);
        assert_eq!(shrink.doc, None);
    }

    #[test]
    fn bindings_and_imports() {
        let f = parse();
        let m = &f.module_scope.bindings;
        assert!(matches!(m["os"], Binding::Import(ImportTarget { ref module, name: None, .. }) if module == "os"));
        assert!(matches!(m["pu"], Binding::Import(ImportTarget { ref module, .. }) if module == "pkg.util"));
        assert!(matches!(m["sc"], Binding::Import(ImportTarget { ref module, name: Some(ref n), .. }) if module == ".helpers" && n == "scale"));
        assert!(matches!(m["outer"], Binding::Definition(0)));
        assert!(matches!(m["LIMIT"], Binding::Local { .. }));
        assert_eq!(f.module_scope.star_imports, ["pkg"]);
        let outer = &f.definitions[0].scope.bindings;
        for local in ["a", "b", "args", "key", "kw", "total", "item", "inner"] {
            assert!(outer.contains_key(local), "{local}");
        }
        // `global LIMIT` keeps LIMIT out of the method scope
        assert!(!f.definitions[3].scope.bindings.contains_key("LIMIT"));
    }

    #[test]
    fn references_carry_qualifiers_and_scopes() {
        let f = parse();
        let syms: Vec<(String, Option<usize>)> =
            f.references.iter().map(|r| (r.symbol(), r.scope)).collect();
        assert!(syms.contains(&("clamp".into(), Some(0))));
        assert!(syms.contains(&("os.path.join".into(), Some(0))));
        assert!(syms.contains(&("pu.fmt".into(), Some(0))));
        assert!(syms.contains(&("total".into(), Some(1))));
        assert!(syms.contains(&("key".into(), Some(0))));
        assert!(syms.contains(&("LIMIT".into(), None)));
        assert!(syms.contains(&("Base".into(), None)));
        let r = f.references.iter().find(|r| r.name == "clamp").unwrap();
        assert_eq!((r.line, r.col), (14, 12));
    }

    #[test]
    fn syntax_errors_are_reported() {
        let err = PythonProvider.parse("bad.py", "def f(:\n    pass\n").unwrap_err();
        assert!(matches!(err, SyntaxError::Parse { line: 1, .. }));
    }

    #[test]
    fn registry_distinguishes_unknown_and_unsupported() {
        let reg = SyntaxRegistry::default();
        assert!(reg.parse("README.md", "# hi").unwrap().is_none());
        assert!(matches!(
            reg.parse("main.rs", "fn main() {}"),
            Err(SyntaxError::ProviderUnavailable { .. })
        ));
        assert!(reg.parse("a.py", "x = 1\n").unwrap().is_some());
    }

    #[test]
    fn one_line_bodies() {
        let f = PythonProvider.parse("a.py", "def f(): return 1\n").unwrap();
        let d = &f.definitions[0];
        let body = d.body.unwrap();
        assert_eq!(&"def f(): return 1\n"[body.start..body.end], "return 1");
        assert_eq!(d.body_lines, 1);
    }
}
