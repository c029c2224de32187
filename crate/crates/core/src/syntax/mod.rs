//! Unified syntax trees across languages, function-level slicing, and
//! root-to-token paths.
//!
//! Parsing is delegated to pluggable [`ParserProvider`]s keyed by language
//! tag in a [`ParserRegistry`]. A built-in recursive-descent parser for a
//! small C-like subset ([`clike`]) keeps every test hermetic; adapters for
//! external grammar-based parsers can be registered at runtime for real
//! languages.
//!
//! Parsing is lenient: malformed input yields `error`-kind nodes instead of
//! failures, because code mined from security advisories frequently arrives
//! as fragments.

pub mod clike;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Node-kind label of error-recovery nodes, shared by all providers.
pub const ERROR_KIND: &str = "error";
/// Node-kind label providers should use for identifier leaves; function
/// names are detected through it.
pub const IDENTIFIER_KIND: &str = "identifier";

/// One node of a [`SyntaxTree`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    /// Grammar label, e.g. `"function_definition"`.
    pub kind: String,
    /// Half-open byte interval of the node in the source.
    pub span: (usize, usize),
    /// Indices of children, in source order.
    pub children: Vec<usize>,
    /// Index of the parent; `None` only for the root.
    pub parent: Option<usize>,
}

/// An immutable syntax tree over a byte buffer.
///
/// Invariants (enforced by [`SyntaxTree::from_parts`]): exactly one root;
/// parent/child links mutually consistent and acyclic; every child span is
/// contained in its parent's span; sibling spans are non-overlapping and in
/// source order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    nodes: Vec<Node>,
    root: usize,
}

impl SyntaxTree {
    /// Builds a tree from raw nodes, validating every invariant.
    pub fn from_parts(nodes: Vec<Node>, root: usize) -> Result<Self> {
        let tree = SyntaxTree { nodes, root };
        tree.validate()?;
        Ok(tree)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, index: usize) -> &Node {
        &self.nodes[index]
    }

    pub fn kind(&self, index: usize) -> &str {
        &self.nodes[index].kind
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Error::invalid_input(format!("malformed syntax tree: {msg}"));
        if self.root >= self.nodes.len() {
            return Err(bad(format!("root index {} out of bounds", self.root)));
        }
        let roots = self.nodes.iter().filter(|n| n.parent.is_none()).count();
        if roots != 1 || self.nodes[self.root].parent.is_some() {
            return Err(bad(format!("expected exactly one parentless root, found {roots}")));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let (s, e) = node.span;
            if s > e {
                return Err(bad(format!("node {i} has inverted span {s}..{e}")));
            }
            let mut prev_end = s;
            for &c in &node.children {
                let child = self
                    .nodes
                    .get(c)
                    .ok_or_else(|| bad(format!("node {i} references missing child {c}")))?;
                if child.parent != Some(i) {
                    return Err(bad(format!("child {c} does not link back to parent {i}")));
                }
                let (cs, ce) = child.span;
                if cs < s || ce > e {
                    return Err(bad(format!("child {c} span escapes parent {i}")));
                }
                if cs < prev_end {
                    return Err(bad(format!("children of node {i} overlap or are out of order")));
                }
                prev_end = ce;
            }
        }
        // Reachability: every node must be visited exactly once from the
        // root, which together with the link checks above rules out cycles
        // and shared children.
        let mut visited = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            if visited[i] {
                return Err(bad(format!("node {i} is reachable twice")));
            }
            visited[i] = true;
            stack.extend(self.nodes[i].children.iter().copied());
        }
        if let Some(orphan) = visited.iter().position(|&v| !v) {
            return Err(bad(format!("node {orphan} is unreachable from the root")));
        }
        Ok(())
    }

    /// Kinds along the chain from the root to the deepest node whose span
    /// contains `offset`.
    pub fn path_for_offset(&self, offset: usize) -> Result<AstPath> {
        let (root_start, root_end) = self.nodes[self.root].span;
        if offset < root_start || offset >= root_end {
            return Err(Error::OutOfRange {
                offset,
                len: root_end,
            });
        }
        let mut kinds = Vec::new();
        let mut current = self.root;
        loop {
            kinds.push(self.nodes[current].kind.clone());
            let next = self.nodes[current].children.iter().copied().find(|&c| {
                let (s, e) = self.nodes[c].span;
                s <= offset && offset < e
            });
            match next {
                Some(child) => current = child,
                None => return Ok(AstPath { kinds }),
            }
        }
    }

    /// One slice per node whose kind is in `function_kinds`, in source
    /// order; nested definitions are emitted independently (outer first).
    pub fn extract_functions(
        &self,
        source: &[u8],
        function_kinds: &BTreeSet<String>,
    ) -> Vec<FunctionSlice> {
        let mut slices = Vec::new();
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if function_kinds.contains(node.kind.as_str()) {
                if let Some(bytes) = source.get(node.span.0..node.span.1) {
                    slices.push(FunctionSlice {
                        name: self.function_name(node, source),
                        span: node.span,
                        source: bytes.to_vec(),
                    });
                }
            }
            // Pre-order: push children reversed so the leftmost pops first.
            stack.extend(node.children.iter().rev().copied());
        }
        slices
    }

    /// Text of the first direct identifier child, the cross-grammar
    /// convention for a definition's name.
    fn function_name(&self, node: &Node, source: &[u8]) -> Option<String> {
        node.children
            .iter()
            .map(|&c| &self.nodes[c])
            .find(|child| child.kind == IDENTIFIER_KIND)
            .and_then(|child| source.get(child.span.0..child.span.1))
            .map(|bytes| String::from_utf8_lossy(bytes).into_owned())
    }

    /// Debug rendering: one `(kind start..end ...)` form per node, children
    /// indented two spaces per level. Stable, for golden tests.
    pub fn to_sexpr(&self) -> String {
        fn render(tree: &SyntaxTree, index: usize, depth: usize, out: &mut String) {
            let node = &tree.nodes[index];
            let _ = write!(out, "({} {}..{}", node.kind, node.span.0, node.span.1);
            for &child in &node.children {
                out.push('\n');
                for _ in 0..depth + 1 {
                    out.push_str("  ");
                }
                render(tree, child, depth + 1, out);
            }
            out.push(')');
        }
        let mut out = String::new();
        render(self, self.root, 0, &mut out);
        out
    }
}

/// Root-to-leaf chain of node kinds for one byte offset.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AstPath {
    /// Kind labels from the root (first) to the deepest containing node
    /// (last). Never empty.
    pub kinds: Vec<String>,
}

impl AstPath {
    pub fn depth(&self) -> usize {
        self.kinds.len()
    }
}

/// One function-level piece of a source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FunctionSlice {
    /// Declared name, or `None` for anonymous definitions.
    pub name: Option<String>,
    /// Byte interval of the slice in the file.
    pub span: (usize, usize),
    /// The file bytes at `span`, signature included.
    pub source: Vec<u8>,
}

/// A language front-end: bytes in, lenient tree out.
///
/// Implementations must never fail — malformed input becomes `error`-kind
/// nodes — and must be safe for concurrent parsing of distinct inputs.
pub trait ParserProvider: Send + Sync {
    fn parse(&self, source: &[u8]) -> SyntaxTree;
}

/// Maps language tags to parser providers and their function-node kinds.
pub struct ParserRegistry {
    providers: HashMap<String, Arc<dyn ParserProvider>>,
    function_kinds: HashMap<String, BTreeSet<String>>,
}

impl ParserRegistry {
    /// Registry with no languages.
    pub fn empty() -> Self {
        ParserRegistry {
            providers: HashMap::new(),
            function_kinds: HashMap::new(),
        }
    }

    /// Registry with the built-in `"clike"` reference parser.
    pub fn with_builtin() -> Self {
        let mut registry = Self::empty();
        registry.register(
            clike::LANGUAGE,
            Arc::new(clike::CLikeParser),
            [clike::kind::FUNCTION_DEFINITION.to_string()],
        );
        registry
    }

    /// Registers (or replaces) a provider for `language`, together with the
    /// node kinds that delimit functions in that grammar.
    pub fn register(
        &mut self,
        language: &str,
        provider: Arc<dyn ParserProvider>,
        function_kinds: impl IntoIterator<Item = String>,
    ) {
        self.providers.insert(language.to_string(), provider);
        self.function_kinds
            .insert(language.to_string(), function_kinds.into_iter().collect());
    }

    pub fn supports(&self, language: &str) -> bool {
        self.providers.contains_key(language)
    }

    /// Registered language tags, sorted.
    pub fn languages(&self) -> Vec<&str> {
        let mut tags: Vec<&str> = self.providers.keys().map(String::as_str).collect();
        tags.sort_unstable();
        tags
    }

    pub fn parse(&self, source: &[u8], language: &str) -> Result<SyntaxTree> {
        let provider = self
            .providers
            .get(language)
            .ok_or_else(|| Error::UnsupportedLanguage(language.to_string()))?;
        Ok(provider.parse(source))
    }

    pub fn function_kinds(&self, language: &str) -> Option<&BTreeSet<String>> {
        self.function_kinds.get(language)
    }

    /// Parses `source` and slices it at the function level.
    pub fn extract_functions(&self, source: &[u8], language: &str) -> Result<Vec<FunctionSlice>> {
        let tree = self.parse(source, language)?;
        let kinds = self
            .function_kinds
            .get(language)
            .ok_or_else(|| Error::UnsupportedLanguage(language.to_string()))?;
        Ok(tree.extract_functions(source, kinds))
    }
}

impl Default for ParserRegistry {
    fn default() -> Self {
        Self::with_builtin()
    }
}
