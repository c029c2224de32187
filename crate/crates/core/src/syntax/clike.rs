//! Built-in recursive-descent parser for a small C-like language.
//!
//! The subset covers function definitions, blocks, `if`/`while`/`return`,
//! assignments, and ordinary expressions (calls, unary and binary operators,
//! parentheses, identifier / number / string leaves). That is enough surface
//! to exercise function slicing and root-to-token paths hermetically; real
//! languages plug in through [`super::ParserRegistry::register`].
//!
//! Parsing is total and lenient: any byte input produces a valid tree, with
//! unparseable stretches wrapped in `error`-kind nodes. Keywords and
//! punctuation are not materialized as nodes — parent spans cover them.

use super::{Node, ParserProvider, SyntaxTree};

/// Language tag the built-in parser registers under.
pub const LANGUAGE: &str = "clike";

/// Node-kind labels of the reference grammar.
pub mod kind {
    pub const TRANSLATION_UNIT: &str = "translation_unit";
    pub const FUNCTION_DEFINITION: &str = "function_definition";
    pub const PARAMETER_LIST: &str = "parameter_list";
    pub const PARAMETER: &str = "parameter";
    pub const TYPE_SPECIFIER: &str = "type_specifier";
    pub const BLOCK: &str = "block";
    pub const IF_STATEMENT: &str = "if_statement";
    pub const WHILE_STATEMENT: &str = "while_statement";
    pub const RETURN_STATEMENT: &str = "return_statement";
    pub const ASSIGNMENT_STATEMENT: &str = "assignment_statement";
    pub const EXPRESSION_STATEMENT: &str = "expression_statement";
    pub const BINARY_EXPRESSION: &str = "binary_expression";
    pub const UNARY_EXPRESSION: &str = "unary_expression";
    pub const CALL_EXPRESSION: &str = "call_expression";
    pub const ARGUMENT_LIST: &str = "argument_list";
    pub const PARENTHESIZED_EXPRESSION: &str = "parenthesized_expression";
    pub const IDENTIFIER: &str = "identifier";
    pub const NUMBER_LITERAL: &str = "number_literal";
    pub const STRING_LITERAL: &str = "string_literal";
    pub const ERROR: &str = "error";
}

/// Every kind the reference grammar can emit, in a stable order suitable for
/// building node-kind lookup tables.
pub const ALL_KINDS: [&str; 20] = [
    kind::TRANSLATION_UNIT,
    kind::FUNCTION_DEFINITION,
    kind::PARAMETER_LIST,
    kind::PARAMETER,
    kind::TYPE_SPECIFIER,
    kind::BLOCK,
    kind::IF_STATEMENT,
    kind::WHILE_STATEMENT,
    kind::RETURN_STATEMENT,
    kind::ASSIGNMENT_STATEMENT,
    kind::EXPRESSION_STATEMENT,
    kind::BINARY_EXPRESSION,
    kind::UNARY_EXPRESSION,
    kind::CALL_EXPRESSION,
    kind::ARGUMENT_LIST,
    kind::PARENTHESIZED_EXPRESSION,
    kind::IDENTIFIER,
    kind::NUMBER_LITERAL,
    kind::STRING_LITERAL,
    kind::ERROR,
];

/// Nesting ceiling; beyond it the parser degrades to per-token error nodes
/// so hostile inputs cannot overflow the stack.
const MAX_DEPTH: usize = 200;

const KEYWORDS: [&str; 4] = ["if", "else", "while", "return"];
const ASSIGN_OPS: [&str; 11] = ["=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="];
const UNARY_OPS: [&str; 6] = ["!", "-", "+", "*", "&", "~"];
/// Binary operators from loosest to tightest binding; all left-associative.
const BINARY_LEVELS: [&[&str]; 6] = [
    &["||"],
    &["&&"],
    &["==", "!="],
    &["<", "<=", ">", ">="],
    &["+", "-"],
    &["*", "/", "%"],
];
/// Multi-byte punctuation, longest first so lexing is greedy.
const MULTI_PUNCT: [&str; 21] = [
    "<<=", ">>=", "==", "!=", "<=", ">=", "&&", "||", "+=", "-=", "*=", "/=", "%=", "&=", "|=",
    "^=", "<<", ">>", "->", "++", "--",
];

/// The built-in reference parser.
pub struct CLikeParser;

impl ParserProvider for CLikeParser {
    fn parse(&self, source: &[u8]) -> SyntaxTree {
        parse(source)
    }
}

/// Parses any byte input into a valid tree rooted at a translation unit
/// spanning the whole source.
pub fn parse(source: &[u8]) -> SyntaxTree {
    let mut parser = Parser {
        source,
        tokens: lex(source),
        pos: 0,
        prev_end: 0,
        nodes: Vec::new(),
        depth: 0,
    };
    let root = parser.parse_translation_unit();
    SyntaxTree::from_parts(parser.nodes, root).expect("reference parser emits valid trees")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TokKind {
    Ident,
    Number,
    Str,
    Punct,
}

#[derive(Debug, Clone, Copy)]
struct Token {
    kind: TokKind,
    start: usize,
    end: usize,
}

fn lex(source: &[u8]) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < source.len() {
        let b = source[i];
        if b.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if b == b'/' && source.get(i + 1) == Some(&b'/') {
            while i < source.len() && source[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if b == b'/' && source.get(i + 1) == Some(&b'*') {
            let mut j = i + 2;
            while j < source.len() && !(source[j] == b'*' && source.get(j + 1) == Some(&b'/')) {
                j += 1;
            }
            i = if j < source.len() { j + 2 } else { source.len() };
            continue;
        }
        let start = i;
        let kind = if b == b'_' || b.is_ascii_alphabetic() {
            while i < source.len() && (source[i] == b'_' || source[i].is_ascii_alphanumeric()) {
                i += 1;
            }
            TokKind::Ident
        } else if b.is_ascii_digit() {
            // Loose C-style number: digits plus hex/suffix letters and dots.
            while i < source.len() && (source[i] == b'.' || source[i].is_ascii_alphanumeric()) {
                i += 1;
            }
            TokKind::Number
        } else if b == b'"' || b == b'\'' {
            let quote = b;
            i += 1;
            while i < source.len() && source[i] != quote {
                i += if source[i] == b'\\' { 2 } else { 1 };
            }
            i = (i + 1).min(source.len()); // consume the closing quote if present
            TokKind::Str
        } else {
            let rest = &source[i..];
            let multi = MULTI_PUNCT.iter().find(|op| rest.starts_with(op.as_bytes()));
            i += multi.map_or(1, |op| op.len());
            TokKind::Punct
        };
        tokens.push(Token {
            kind,
            start,
            end: i,
        });
    }
    tokens
}

struct Parser<'a> {
    source: &'a [u8],
    tokens: Vec<Token>,
    pos: usize,
    /// End offset of the last consumed token; node spans close here.
    prev_end: usize,
    nodes: Vec<Node>,
    depth: usize,
}

impl<'a> Parser<'a> {
    // ---- token access -----------------------------------------------------

    fn eof(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self, n: usize) -> Option<Token> {
        self.tokens.get(self.pos + n).copied()
    }

    fn text(&self, token: Token) -> &'a [u8] {
        &self.source[token.start..token.end]
    }

    fn cur_start(&self) -> usize {
        self.peek(0).map_or(self.prev_end, |t| t.start)
    }

    fn bump(&mut self) -> Token {
        let token = self.tokens[self.pos];
        self.pos += 1;
        self.prev_end = token.end;
        token
    }

    fn at_punct(&self, op: &str) -> bool {
        self.peek(0)
            .is_some_and(|t| t.kind == TokKind::Punct && self.text(t) == op.as_bytes())
    }

    fn at_any_punct(&self, ops: &[&str]) -> bool {
        ops.iter().any(|op| self.at_punct(op))
    }

    fn at_keyword(&self, word: &str) -> bool {
        self.peek(0)
            .is_some_and(|t| t.kind == TokKind::Ident && self.text(t) == word.as_bytes())
    }

    /// Identifier token that is not a keyword, `n` tokens ahead.
    fn plain_ident_at(&self, n: usize) -> bool {
        self.peek(n).is_some_and(|t| {
            t.kind == TokKind::Ident && !KEYWORDS.iter().any(|kw| self.text(t) == kw.as_bytes())
        })
    }

    /// `type name (` — the start of a function definition.
    fn at_function_definition(&self) -> bool {
        self.plain_ident_at(0)
            && self.plain_ident_at(1)
            && self
                .peek(2)
                .is_some_and(|t| t.kind == TokKind::Punct && self.text(t) == b"(")
    }

    // ---- node construction ------------------------------------------------

    fn leaf(&mut self, kind: &str, span: (usize, usize)) -> usize {
        self.nodes.push(Node {
            kind: kind.to_string(),
            span,
            children: Vec::new(),
            parent: None,
        });
        self.nodes.len() - 1
    }

    fn token_leaf(&mut self, kind: &str, token: Token) -> usize {
        self.leaf(kind, (token.start, token.end))
    }

    /// Closes a node started at `start`, ending at the last consumed token.
    /// Children were all created earlier, so the new index is the largest.
    fn finish(&mut self, kind: &str, start: usize, children: Vec<usize>) -> usize {
        let index = self.nodes.len();
        for &child in &children {
            self.nodes[child].parent = Some(index);
        }
        self.nodes.push(Node {
            kind: kind.to_string(),
            span: (start, self.prev_end.max(start)),
            children,
            parent: None,
        });
        index
    }

    /// Zero-width error node marking something missing at the current point.
    fn missing(&mut self) -> usize {
        self.leaf(kind::ERROR, (self.prev_end, self.prev_end))
    }

    /// Error node consuming exactly one token (or nothing at EOF).
    fn error_one_token(&mut self) -> usize {
        if self.eof() {
            return self.missing();
        }
        let token = self.bump();
        self.leaf(kind::ERROR, (token.start, token.end))
    }

    // ---- grammar ----------------------------------------------------------

    fn parse_translation_unit(&mut self) -> usize {
        let mut children = Vec::new();
        while !self.eof() {
            if self.at_function_definition() {
                children.push(self.parse_function_definition());
            } else {
                children.push(self.recover_top_level());
            }
        }
        let index = self.nodes.len();
        for &child in &children {
            self.nodes[child].parent = Some(index);
        }
        self.nodes.push(Node {
            kind: kind::TRANSLATION_UNIT.to_string(),
            span: (0, self.source.len()),
            children,
            parent: None,
        });
        index
    }

    /// Skips past unparseable top-level tokens, stopping after a `;` or `}`
    /// or before the next plausible function definition.
    fn recover_top_level(&mut self) -> usize {
        let start = self.cur_start();
        self.bump();
        loop {
            if self.eof() || self.at_function_definition() {
                break;
            }
            if self.at_punct(";") || self.at_punct("}") {
                self.bump();
                break;
            }
            self.bump();
        }
        self.leaf(kind::ERROR, (start, self.prev_end))
    }

    fn parse_function_definition(&mut self) -> usize {
        let start = self.cur_start();
        let ty = self.bump();
        let ty = self.token_leaf(kind::TYPE_SPECIFIER, ty);
        let name = self.bump();
        let name = self.token_leaf(kind::IDENTIFIER, name);
        let params = self.parse_parameter_list();
        let body = if self.at_punct("{") {
            self.parse_block()
        } else if self.eof() {
            self.missing()
        } else {
            self.recover_statement()
        };
        self.finish(kind::FUNCTION_DEFINITION, start, vec![ty, name, params, body])
    }

    /// Current token is `(`.
    fn parse_parameter_list(&mut self) -> usize {
        let start = self.cur_start();
        self.bump();
        let mut children = Vec::new();
        loop {
            if self.at_punct(")") {
                self.bump();
                break;
            }
            if self.eof() {
                children.push(self.missing());
                break;
            }
            if self.plain_ident_at(0) {
                let param_start = self.cur_start();
                let ty = self.bump();
                let ty = self.token_leaf(kind::TYPE_SPECIFIER, ty);
                let mut param_children = vec![ty];
                if self.plain_ident_at(0) {
                    let name = self.bump();
                    param_children.push(self.token_leaf(kind::IDENTIFIER, name));
                }
                children.push(self.finish(kind::PARAMETER, param_start, param_children));
            } else if self.at_punct(",") {
                self.bump();
            } else {
                children.push(self.error_one_token());
            }
        }
        self.finish(kind::PARAMETER_LIST, start, children)
    }

    /// Current token is `{`.
    fn parse_block(&mut self) -> usize {
        let start = self.cur_start();
        self.bump();
        let mut children = Vec::new();
        loop {
            if self.at_punct("}") {
                self.bump();
                break;
            }
            if self.eof() {
                children.push(self.missing()); // unterminated block
                break;
            }
            children.push(self.parse_statement());
        }
        self.finish(kind::BLOCK, start, children)
    }

    fn parse_statement(&mut self) -> usize {
        if self.depth >= MAX_DEPTH {
            return self.error_one_token();
        }
        self.depth += 1;
        let node = self.parse_statement_inner();
        self.depth -= 1;
        node
    }

    fn parse_statement_inner(&mut self) -> usize {
        if self.at_punct("{") {
            return self.parse_block();
        }
        if self.at_keyword("if") {
            return self.parse_if();
        }
        if self.at_keyword("while") {
            return self.parse_while();
        }
        if self.at_keyword("return") {
            return self.parse_return();
        }
        if self.at_function_definition() {
            return self.parse_function_definition();
        }
        if self.plain_ident_at(0)
            && self
                .peek(1)
                .is_some_and(|t| t.kind == TokKind::Punct && ASSIGN_OPS.iter().any(|op| self.text(t) == op.as_bytes()))
        {
            return self.parse_assignment();
        }
        self.parse_expression_statement()
    }

    /// A statement in a position where `}` or EOF means it is absent.
    fn parse_statement_or_missing(&mut self) -> usize {
        if self.eof() || self.at_punct("}") {
            self.missing()
        } else {
            self.parse_statement()
        }
    }

    /// Skips past unparseable statement tokens, stopping after a `;` or
    /// before the enclosing block's `}`.
    fn recover_statement(&mut self) -> usize {
        let start = self.cur_start();
        self.bump();
        loop {
            if self.eof() || self.at_punct("}") {
                break;
            }
            if self.at_punct(";") {
                self.bump();
                break;
            }
            self.bump();
        }
        self.leaf(kind::ERROR, (start, self.prev_end))
    }

    fn parse_if(&mut self) -> usize {
        let start = self.cur_start();
        self.bump(); // `if`
        let condition = if self.at_punct("(") {
            self.parse_parenthesized()
        } else {
            self.missing()
        };
        let then_branch = self.parse_statement_or_missing();
        let mut children = vec![condition, then_branch];
        if self.at_keyword("else") {
            self.bump();
            children.push(self.parse_statement_or_missing());
        }
        self.finish(kind::IF_STATEMENT, start, children)
    }

    fn parse_while(&mut self) -> usize {
        let start = self.cur_start();
        self.bump(); // `while`
        let condition = if self.at_punct("(") {
            self.parse_parenthesized()
        } else {
            self.missing()
        };
        let body = self.parse_statement_or_missing();
        self.finish(kind::WHILE_STATEMENT, start, vec![condition, body])
    }

    fn parse_return(&mut self) -> usize {
        let start = self.cur_start();
        self.bump(); // `return`
        let mut children = Vec::new();
        if self.at_punct(";") {
            self.bump();
        } else if self.eof() || self.at_punct("}") {
            children.push(self.missing()); // missing `;`
        } else {
            children.push(self.parse_expr());
            self.expect_semi(&mut children);
        }
        self.finish(kind::RETURN_STATEMENT, start, children)
    }

    fn parse_assignment(&mut self) -> usize {
        let start = self.cur_start();
        let target = self.bump();
        let target = self.token_leaf(kind::IDENTIFIER, target);
        self.bump(); // assignment operator
        let value = self.parse_expr();
        let mut children = vec![target, value];
        self.expect_semi(&mut children);
        self.finish(kind::ASSIGNMENT_STATEMENT, start, children)
    }

    fn parse_expression_statement(&mut self) -> usize {
        let start = self.cur_start();
        let expr = self.parse_expr();
        let mut children = vec![expr];
        self.expect_semi(&mut children);
        self.finish(kind::EXPRESSION_STATEMENT, start, children)
    }

    fn expect_semi(&mut self, children: &mut Vec<usize>) {
        if self.at_punct(";") {
            self.bump();
        } else {
            children.push(self.missing());
        }
    }

    // ---- expressions ------------------------------------------------------

    fn parse_expr(&mut self) -> usize {
        if self.depth >= MAX_DEPTH {
            return self.error_one_token();
        }
        self.depth += 1;
        let node = self.parse_binary(0);
        self.depth -= 1;
        node
    }

    fn parse_binary(&mut self, level: usize) -> usize {
        if level == BINARY_LEVELS.len() {
            return self.parse_unary();
        }
        let mut lhs = self.parse_binary(level + 1);
        while self.at_any_punct(BINARY_LEVELS[level]) {
            self.bump();
            let rhs = self.parse_binary(level + 1);
            let start = self.nodes[lhs].span.0;
            lhs = self.finish(kind::BINARY_EXPRESSION, start, vec![lhs, rhs]);
        }
        lhs
    }

    fn parse_unary(&mut self) -> usize {
        if self.depth >= MAX_DEPTH {
            return self.error_one_token();
        }
        if self.at_any_punct(&UNARY_OPS) {
            let start = self.cur_start();
            self.bump();
            self.depth += 1;
            let operand = self.parse_unary();
            self.depth -= 1;
            return self.finish(kind::UNARY_EXPRESSION, start, vec![operand]);
        }
        self.parse_postfix()
    }

    fn parse_postfix(&mut self) -> usize {
        let mut expr = self.parse_primary();
        while self.at_punct("(") {
            let args = self.parse_argument_list();
            let start = self.nodes[expr].span.0;
            expr = self.finish(kind::CALL_EXPRESSION, start, vec![expr, args]);
        }
        expr
    }

    fn parse_primary(&mut self) -> usize {
        let Some(token) = self.peek(0) else {
            return self.missing();
        };
        match token.kind {
            TokKind::Number => {
                self.bump();
                self.token_leaf(kind::NUMBER_LITERAL, token)
            }
            TokKind::Str => {
                self.bump();
                self.token_leaf(kind::STRING_LITERAL, token)
            }
            TokKind::Ident => {
                self.bump();
                self.token_leaf(kind::IDENTIFIER, token)
            }
            TokKind::Punct if self.at_punct("(") => self.parse_parenthesized(),
            TokKind::Punct => self.error_one_token(),
        }
    }

    /// Current token is `(`.
    fn parse_parenthesized(&mut self) -> usize {
        let start = self.cur_start();
        self.bump();
        let mut children = Vec::new();
        if self.at_punct(")") {
            children.push(self.missing()); // empty parentheses
            self.bump();
        } else {
            children.push(self.parse_expr());
            if self.at_punct(")") {
                self.bump();
            } else {
                children.push(self.missing());
            }
        }
        self.finish(kind::PARENTHESIZED_EXPRESSION, start, children)
    }

    /// Current token is `(`.
    fn parse_argument_list(&mut self) -> usize {
        let start = self.cur_start();
        self.bump();
        let mut children = Vec::new();
        loop {
            if self.at_punct(")") {
                self.bump();
                break;
            }
            if self.eof() {
                children.push(self.missing());
                break;
            }
            children.push(self.parse_expr());
            if self.at_punct(",") {
                self.bump();
            }
        }
        self.finish(kind::ARGUMENT_LIST, start, children)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn function_kinds() -> BTreeSet<String> {
        [kind::FUNCTION_DEFINITION.to_string()].into()
    }

    #[test]
    fn empty_source_is_a_bare_translation_unit() {
        let tree = parse(b"");
        let root = tree.node(tree.root());
        assert_eq!(root.kind, kind::TRANSLATION_UNIT);
        assert_eq!(root.span, (0, 0));
        assert!(root.children.is_empty());
    }

    #[test]
    fn minimal_function_spans_whole_input() {
        let source = b"int f(){return 0;}";
        let tree = parse(source);
        let func = tree
            .nodes()
            .iter()
            .find(|n| n.kind == kind::FUNCTION_DEFINITION)
            .expect("function node");
        assert_eq!(func.span, (0, source.len()));
    }

    #[test]
    fn minimal_function_sexpr_golden() {
        let tree = parse(b"int f(){return 0;}");
        let expected = "\
(translation_unit 0..18
  (function_definition 0..18
    (type_specifier 0..3)
    (identifier 4..5)
    (parameter_list 5..7)
    (block 7..18
      (return_statement 8..17
        (number_literal 15..16)))))";
        assert_eq!(tree.to_sexpr(), expected);
    }

    #[test]
    fn unbalanced_brace_yields_error_node_not_failure() {
        let tree = parse(b"int f(){return 0;");
        assert!(tree.nodes().iter().any(|n| n.kind == kind::ERROR));
    }

    #[test]
    fn garbage_input_parses_leniently() {
        for source in [
            b"#include <stdio.h>".as_slice(),
            b"\xff\xfe\x00garbage((((".as_slice(),
            b"}}}}};;;".as_slice(),
            b"int 5x(){}".as_slice(),
        ] {
            let tree = parse(source); // from_parts inside asserts validity
            assert_eq!(tree.node(tree.root()).span, (0, source.len()));
        }
    }

    #[test]
    fn deep_nesting_degrades_instead_of_overflowing() {
        let mut source = b"int f(){ x = ".to_vec();
        source.extend(std::iter::repeat_n(b'(', 5_000));
        source.extend(b"1");
        source.extend(std::iter::repeat_n(b')', 5_000));
        source.extend(b"; }");
        let tree = parse(&source);
        assert!(tree.nodes().iter().any(|n| n.kind == kind::ERROR));
    }

    #[test]
    fn statement_in_if_block_has_seven_kind_path() {
        let source = b"int f(int n) {\n  if (n > 0) {\n    x = 1;\n  }\n  return x;\n}\n";
        let tree = parse(source);
        let offset = source
            .windows(6)
            .position(|w| w == b"x = 1;")
            .expect("assignment present");
        let path = tree.path_for_offset(offset).unwrap();
        assert_eq!(
            path.kinds,
            vec![
                kind::TRANSLATION_UNIT,
                kind::FUNCTION_DEFINITION,
                kind::BLOCK,
                kind::IF_STATEMENT,
                kind::BLOCK,
                kind::ASSIGNMENT_STATEMENT,
                kind::IDENTIFIER,
            ]
        );
    }

    #[test]
    fn whitespace_between_siblings_maps_to_enclosing_node() {
        let source = b"int f(){ return 0; }";
        let tree = parse(source);
        // Offset 8 is the space between `{` and `return`.
        assert_eq!(source[8], b' ');
        let path = tree.path_for_offset(8).unwrap();
        assert_eq!(
            path.kinds,
            vec![kind::TRANSLATION_UNIT, kind::FUNCTION_DEFINITION, kind::BLOCK]
        );
    }

    #[test]
    fn no_functions_means_no_slices() {
        let source = b"x = 1;";
        let tree = parse(source);
        assert!(tree.extract_functions(source, &function_kinds()).is_empty());
    }

    #[test]
    fn two_functions_slice_in_source_order() {
        let source = b"int a(){return 1;}\nint b(){return 2;}\n";
        let tree = parse(source);
        let slices = tree.extract_functions(source, &function_kinds());
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].name.as_deref(), Some("a"));
        assert_eq!(slices[1].name.as_deref(), Some("b"));
        for slice in &slices {
            assert_eq!(slice.source, source[slice.span.0..slice.span.1].to_vec());
        }
    }

    #[test]
    fn nested_function_emits_outer_then_inner() {
        let source = b"int outer() { int inner(int k) { return k; } return inner(1); }";
        let tree = parse(source);
        let slices = tree.extract_functions(source, &function_kinds());
        assert_eq!(slices.len(), 2);
        assert_eq!(slices[0].name.as_deref(), Some("outer"));
        assert_eq!(slices[1].name.as_deref(), Some("inner"));
        // Inner lies within outer.
        assert!(slices[0].span.0 <= slices[1].span.0 && slices[1].span.1 <= slices[0].span.1);
    }

    #[test]
    fn control_flow_and_expressions_parse() {
        let source = b"int f(int n) {\n\
            while (n > 0 && !done) {\n\
                n = n - step(n, \"fast\");\n\
                if (n == 1) { log(n); } else { n = 0; }\n\
            }\n\
            return (n + 1) * 2;\n\
        }\n";
        let tree = parse(source);
        let kinds: BTreeSet<&str> = tree.nodes().iter().map(|n| n.kind.as_str()).collect();
        for expected in [
            kind::WHILE_STATEMENT,
            kind::IF_STATEMENT,
            kind::ASSIGNMENT_STATEMENT,
            kind::BINARY_EXPRESSION,
            kind::UNARY_EXPRESSION,
            kind::CALL_EXPRESSION,
            kind::ARGUMENT_LIST,
            kind::PARENTHESIZED_EXPRESSION,
            kind::STRING_LITERAL,
            kind::EXPRESSION_STATEMENT,
        ] {
            assert!(kinds.contains(expected), "missing {expected}");
        }
        assert!(!kinds.contains(kind::ERROR), "clean input parsed with errors");
    }

    #[test]
    fn parsing_is_deterministic() {
        let source = b"int f(){ if (a) { b = c(1, 2); } }";
        assert_eq!(parse(source), parse(source));
    }

    #[test]
    fn comments_are_trivia() {
        let source = b"int f(){ // line comment\n return /* inline */ 0; }";
        let tree = parse(source);
        assert!(!tree.nodes().iter().any(|n| n.kind == kind::ERROR));
        assert!(tree.nodes().iter().any(|n| n.kind == kind::NUMBER_LITERAL));
    }
}
