//! Agentic fill-in-the-middle task construction.
//!
//! Candidate holes are complete function bodies, or for classes the bodies
//! of all directly nested methods, with signatures and docstrings kept in
//! place. Holes are classified by whether their body reaches definitions in
//! other repository files, and selection favors positive holes covering many
//! distinct dependencies. The dependency evidence is bookkeeping only and
//! never reaches the task text.

pub mod lsp;
pub mod resolve;
pub mod select;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::miner::{MinerError, Provenance, RepoSnapshot};
use crate::syntax::{ByteSpan, DefKind, NameRef, SyntaxError, SyntaxRegistry};

pub use resolve::{classify_all, classify_hole, Classified, Resolver, ResolverPool, StaticResolver, SymbolResolution};
pub use select::{greedy_cover, select_holes, ClassifiedHole};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HoleKind {
    FunctionDefinition,
    ClassBody,
}

/// A removable, syntax-aligned region of one file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntaxHole {
    pub path: String,
    pub kind: HoleKind,
    pub name: String,
    /// Signature plus leading docstring, kept in the holed file.
    pub header_span: ByteSpan,
    /// Envelope of everything the hole covers. For functions this is exactly
    /// the removed body; for classes it runs from the first removed method
    /// body to the last one, method signatures in between are kept.
    pub body_span: ByteSpan,
    /// Removed regions, ascending and disjoint.
    pub segments: Vec<ByteSpan>,
    pub body_lines: usize,
    pub references: Vec<NameRef>,
}

impl SyntaxHole {
    pub fn id(&self) -> String {
        format!("{}::{}@{}", self.path, self.name, self.body_span.start)
    }

    /// Sort key: path, then start byte of the definition.
    pub fn order_key(&self) -> (&str, usize, usize) {
        (&self.path, self.header_span.start, self.body_span.start)
    }

    /// True when both holes are in the same file and one envelope lies
    /// within the other.
    pub fn nests_with(&self, other: &SyntaxHole) -> bool {
        self.path == other.path && self.body_span.nests_with(&other.body_span)
    }
}

/// Text shown in place of a removed segment: the segment's indentation
/// followed by an ellipsis body.
pub fn placeholder(source: &str, segment: &ByteSpan) -> String {
    let at_line_start = segment.start == 0 || source.as_bytes()[segment.start - 1] == b'\n';
    if !at_line_start {
        return "...".to_string();
    }
    let rest = &source[segment.start..segment.end];
    let indent: String = rest.chars().take_while(|c| *c == ' ' || *c == '\t').collect();
    format!("{indent}...")
}

/// The hole's envelope with every segment replaced by its placeholder.
pub fn carved_envelope(source: &str, hole: &SyntaxHole) -> String {
    let mut out = String::new();
    let mut cursor = hole.body_span.start;
    for seg in &hole.segments {
        out.push_str(&source[cursor..seg.start]);
        out.push_str(&placeholder(source, seg));
        cursor = seg.end;
    }
    out.push_str(&source[cursor..hole.body_span.end]);
    out
}

/// The whole file with the hole carved out.
pub fn carve(source: &str, hole: &SyntaxHole) -> String {
    format!(
        "{}{}{}",
        &source[..hole.body_span.start],
        carved_envelope(source, hole),
        &source[hole.body_span.end..]
    )
}

/// Puts `body` back where the carved envelope sits in `holed`.
pub fn splice(holed: &str, start: usize, carved: &str, body: &str) -> Result<String, String> {
    let end = start + carved.len();
    if holed.get(start..end) != Some(carved) {
        return Err(format!("placeholder region {start}..{end} not found"));
    }
    Ok(format!("{}{}{}", &holed[..start], body, &holed[end..]))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoleScan {
    pub holes: Vec<SyntaxHole>,
    /// Files that failed to parse, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Candidate holes over in-memory sources, ordered by path then start byte.
/// Only files accepted by `filter` are considered.
pub fn enumerate_holes_in(
    sources: &BTreeMap<String, String>,
    filter: &dyn Fn(&str) -> bool,
    min_body_lines: usize,
    registry: &SyntaxRegistry,
) -> Result<HoleScan, SyntaxError> {
    let mut scan = HoleScan::default();
    for (path, source) in sources.iter().filter(|(p, _)| filter(p)) {
        let parsed = match registry.parse(path, source) {
            Ok(Some(p)) => p,
            Ok(None) => continue,
            Err(e @ SyntaxError::ProviderUnavailable { .. }) => return Err(e),
            Err(e) => {
                scan.skipped.push((path.clone(), e.to_string()));
                continue;
            }
        };
        for (idx, def) in parsed.definitions.iter().enumerate() {
            let (kind, segments, body_lines) = match def.kind {
                DefKind::Function => {
                    let Some(body) = def.body else { continue };
                    (HoleKind::FunctionDefinition, vec![body], def.body_lines)
                }
                DefKind::Class => {
                    let methods: Vec<_> = parsed
                        .children(idx)
                        .filter(|(_, d)| d.kind == DefKind::Function && d.body.is_some())
                        .map(|(_, d)| (d.body.expect("filtered"), d.body_lines))
                        .collect();
                    if methods.is_empty() {
                        continue;
                    }
                    let lines = methods.iter().map(|(_, l)| l).sum();
                    (HoleKind::ClassBody, methods.into_iter().map(|(s, _)| s).collect(), lines)
                }
            };
            if body_lines < min_body_lines {
                continue;
            }
            let body_span = ByteSpan::new(segments[0].start, segments[segments.len() - 1].end);
            let references = segments
                .iter()
                .flat_map(|s| parsed.references_in(s).cloned().collect::<Vec<_>>())
                .collect();
            scan.holes.push(SyntaxHole {
                path: path.clone(),
                kind,
                name: def.qualified_name.clone(),
                header_span: def.header,
                body_span,
                segments,
                body_lines,
                references,
            });
        }
    }
    scan.holes.sort_by(|a, b| a.order_key().cmp(&b.order_key()));
    Ok(scan)
}

#[derive(Debug, thiserror::Error)]
pub enum HoleError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Miner(#[from] MinerError),
}

/// Candidate holes in the snapshot's head tree.
pub fn enumerate_holes(
    snapshot: &RepoSnapshot,
    filter: &dyn Fn(&str) -> bool,
    min_body_lines: usize,
    registry: &SyntaxRegistry,
) -> Result<HoleScan, HoleError> {
    let paths: Vec<String> = snapshot.files()?.into_iter().filter(|p| filter(p)).collect();
    let sources = snapshot.read_files(&paths)?;
    Ok(enumerate_holes_in(&sources, filter, min_body_lines, registry)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Positive,
    Negative,
}

/// One agentic FIM task: a single hole with its instruction and answer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FimTask {
    pub hole: SyntaxHole,
    pub classification: Classification,
    /// Files defining the cross-file symbols the body uses. Never shown to
    /// the solver.
    pub dep_targets: BTreeSet<String>,
    pub instruction: String,
    pub ground_truth_body: String,
    /// What sits at `hole.body_span.start` in the holed file.
    pub holed_body: String,
    pub provenance: Provenance,
}

impl FimTask {
    /// Restores the original file from the holed one.
    pub fn splice_back(&self, holed: &str) -> Result<String, String> {
        splice(holed, self.hole.body_span.start, &self.holed_body, &self.ground_truth_body)
    }
}

/// Words of an identifier, for a neutral description when there is no
/// docstring: `parse_config_header` and `parseConfigHeader` both become
/// "parse config header".
pub fn identifier_words(name: &str) -> String {
    let last = name.rsplit('.').next().unwrap_or(name);
    let mut words: Vec<String> = Vec::new();
    for part in last.split('_').filter(|p| !p.is_empty()) {
        let mut cur = String::new();
        let chars: Vec<char> = part.chars().collect();
        for (i, c) in chars.iter().enumerate() {
            let boundary = c.is_uppercase()
                && i > 0
                && (chars[i - 1].is_lowercase()
                    || chars.get(i + 1).is_some_and(|n| n.is_lowercase()) && chars[i - 1].is_uppercase());
            if boundary && !cur.is_empty() {
                words.push(std::mem::take(&mut cur));
            }
            cur.extend(c.to_lowercase());
        }
        if !cur.is_empty() {
            words.push(cur);
        }
    }
    words.join(" ")
}

fn language_fence(path: &str) -> &'static str {
    crate::syntax::language_of(path).unwrap_or("")
}

fn render_instruction(hole: &SyntaxHole, header: &str, functionality: &str) -> String {
    let what = match hole.kind {
        HoleKind::FunctionDefinition => format!(
            "The implementation of `{}` in `{}` has been removed. Its signature is kept:",
            hole.name, hole.path
        ),
        HoleKind::ClassBody => format!(
            "The method bodies of class `{}` in `{}` have been removed. The class header and every method signature are kept:",
            hole.name, hole.path
        ),
    };
    format!(
        "{what}\n\n```{fence}\n{header}\n```\n\nFunctionality to implement: {functionality}\n\n\
         Explore the repository to find the conventions, helpers and abstractions this code is \
         expected to use, then replace each `...` placeholder with a complete implementation. \
         Do not change any signature.\n",
        fence = language_fence(&hole.path),
    )
}

/// Builds the task text for a classified hole. The instruction carries the
/// location, the retained header and the functionality statement (the
/// docstring, or a description derived from the name), and nothing from the
/// dependency analysis.
pub fn make_fim_task(
    hole: &SyntaxHole,
    source: &str,
    classification: Classification,
    dep_targets: BTreeSet<String>,
    provenance: Provenance,
) -> FimTask {
    let header = &source[hole.header_span.start..hole.header_span.end];
    let doc = header_doc(header);
    let neutral = format!("implement `{}` ({}).", hole.name, identifier_words(&hole.name));
    let leaks = |text: &str| dep_targets.iter().any(|d| text.contains(d.as_str()));

    let mut instruction = match &doc {
        Some(d) if !leaks(d) => render_instruction(hole, header, d),
        _ => render_instruction(hole, header, &neutral),
    };
    if leaks(&instruction) {
        for d in &dep_targets {
            instruction = instruction.replace(d.as_str(), "<path>");
        }
    }
    FimTask {
        hole: hole.clone(),
        classification,
        dep_targets,
        instruction,
        ground_truth_body: source[hole.body_span.start..hole.body_span.end].to_string(),
        holed_body: carved_envelope(source, hole),
        provenance,
    }
}

/// First docstring paragraph found in a header, if any.
fn header_doc(header: &str) -> Option<String> {
    for quote in ["\"\"\"", "'''", "\"", "'"] {
        if let Some(start) = header.find(quote) {
            let after = &header[start + quote.len()..];
            if let Some(end) = after.rfind(quote) {
                let doc = after[..end].trim();
                let para: Vec<&str> = doc.split("\n\n").next().unwrap_or(doc).lines().map(str::trim).collect();
                let text = para.join(" ");
                if !text.is_empty() && header[..start].trim_end().ends_with(':') {
                    return Some(text);
                }
            }
        }
    }
    None
}
