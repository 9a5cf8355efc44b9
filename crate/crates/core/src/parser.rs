//! Source parsing for the subject language.
//!
//! Every metric in this crate consumes one of three artifacts produced here:
//! a full-fidelity [`SyntaxTree`], a classified token stream (summarised as a
//! [`TokenCensus`]), or a [`LineCensus`]. The concrete grammar is
//! tree-sitter-python; the rest of the crate only sees [`Node`] values and
//! the kind strings listed in [`PYTHON_NODE_KINDS`].
//!
//! # Operator / operand table
//!
//! | token                                                   | class    |
//! |---------------------------------------------------------|----------|
//! | punctuation and operator symbols (`=`, `+`, `.`, `,`, `:`, `->`, `@`, ...) | operator |
//! | opening bracket; the pair counts once as `()`, `[]`, `{}` (closers are skipped) | operator |
//! | keywords (`def`, `if`, `for`, `in`, `and`, `return`, `import`, ...) | operator |
//! | multi-word operators `is not`, `not in`                  | operator (one token) |
//! | identifiers, including attribute names                  | operand  |
//! | numeric literals, `True`, `False`, `None`, `...`        | operand  |
//! | a string literal (an f-string counts as one literal)     | operand  |
//! | comments, line continuations, layout tokens             | ignored  |

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Named node kinds the Python grammar can produce.
///
/// Supertype kinds (`expression`, `pattern`, ...) never appear in a concrete
/// tree and are omitted.
pub const PYTHON_NODE_KINDS: &[&str] = &[
    "aliased_import", "argument_list", "as_pattern", "as_pattern_target", "assert_statement",
    "assignment", "attribute", "augmented_assignment", "await", "binary_operator", "block",
    "boolean_operator", "break_statement", "call", "case_clause", "case_pattern", "chevron",
    "class_definition", "class_pattern", "comment", "comparison_operator", "complex_pattern",
    "concatenated_string", "conditional_expression", "constrained_type", "continue_statement",
    "decorated_definition", "decorator", "default_parameter", "delete_statement",
    "dict_pattern", "dictionary", "dictionary_comprehension", "dictionary_splat",
    "dictionary_splat_pattern", "dotted_name", "elif_clause", "ellipsis", "else_clause",
    "escape_interpolation", "escape_sequence", "except_clause", "exec_statement",
    "expression_list", "expression_statement", "false", "finally_clause", "float",
    "for_in_clause", "for_statement", "format_expression", "format_specifier",
    "function_definition", "future_import_statement", "generator_expression", "generic_type",
    "global_statement", "identifier", "if_clause", "if_statement", "import_from_statement",
    "import_prefix", "import_statement", "integer", "interpolation", "keyword_argument",
    "keyword_pattern", "keyword_separator", "lambda", "lambda_parameters", "line_continuation",
    "list", "list_comprehension", "list_pattern", "list_splat", "list_splat_pattern",
    "match_statement", "member_type", "module", "named_expression", "none",
    "nonlocal_statement", "not_operator", "pair", "parameters", "parenthesized_expression",
    "parenthesized_list_splat", "pass_statement", "pattern_list", "positional_separator",
    "print_statement", "raise_statement", "relative_import", "return_statement", "set",
    "set_comprehension", "slice", "splat_pattern", "splat_type", "string", "string_content",
    "string_end", "string_start", "subscript", "true", "try_statement", "tuple",
    "tuple_pattern", "type", "type_alias_statement", "type_conversion", "type_parameter",
    "typed_default_parameter", "typed_parameter", "unary_operator", "union_pattern",
    "union_type", "while_statement", "wildcard_import", "with_clause", "with_item",
    "with_statement", "yield",
];

/// Grammars the parser can be instantiated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Grammar {
    #[default]
    Python,
}

impl Grammar {
    pub fn node_kinds(self) -> &'static [&'static str] {
        match self {
            Grammar::Python => PYTHON_NODE_KINDS,
        }
    }

    fn language(self) -> tree_sitter::Language {
        match self {
            Grammar::Python => tree_sitter_python::LANGUAGE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct SyntaxError {
    /// 1-based.
    pub line: usize,
    /// 1-based, in bytes.
    pub column: usize,
    pub message: String,
}

/// Zero-based row/column position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Position {
    pub row: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    /// Grammar production name, or the token text for anonymous nodes.
    pub kind: &'static str,
    /// False for anonymous tokens such as `=` or `def`.
    pub named: bool,
    /// Comments and line continuations.
    pub extra: bool,
    /// Field name under which the parent holds this node, if any.
    pub field: Option<&'static str>,
    pub span: Range<usize>,
    pub start: Position,
    pub end: Position,
    pub children: Vec<Node>,
}

impl Node {
    pub fn text<'s>(&self, source: &'s str) -> &'s str {
        &source[self.span.clone()]
    }

    pub fn named_children(&self) -> impl Iterator<Item = &Node> {
        self.children.iter().filter(|c| c.named && !c.extra)
    }

    pub fn child_by_field(&self, field: &str) -> Option<&Node> {
        self.children.iter().find(|c| c.field == Some(field))
    }

    /// Preorder walk over this node and all descendants.
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder { stack: vec![self] }
    }
}

pub struct Preorder<'a> {
    stack: Vec<&'a Node>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = &'a Node;

    fn next(&mut self) -> Option<&'a Node> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxTree {
    pub root: Node,
    pub source_span: Range<usize>,
}

impl SyntaxTree {
    /// Top-level statements of the module, comments excluded.
    pub fn statements(&self) -> impl Iterator<Item = &Node> {
        self.root.named_children()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenCensus {
    pub distinct_operators: usize,
    pub total_operators: usize,
    pub distinct_operands: usize,
    pub total_operands: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineCensus {
    pub sloc: usize,
    pub comment_lines: usize,
    pub total_lines: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenClass {
    Operator,
    Operand,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'s> {
    pub text: &'s str,
    pub class: TokenClass,
    pub span: Range<usize>,
}

thread_local! {
    static PARSERS: RefCell<HashMap<&'static str, tree_sitter::Parser>> = RefCell::new(HashMap::new());
}

fn with_parser<R>(grammar: Grammar, f: impl FnOnce(&mut tree_sitter::Parser) -> R) -> R {
    let key = match grammar {
        Grammar::Python => "python",
    };
    PARSERS.with(|cell| {
        let mut map = cell.borrow_mut();
        let parser = map.entry(key).or_insert_with(|| {
            let mut p = tree_sitter::Parser::new();
            p.set_language(&grammar.language())
                .expect("bundled grammar matches the tree-sitter ABI");
            p
        });
        f(parser)
    })
}

fn convert(node: tree_sitter::Node<'_>, field: Option<&'static str>) -> Node {
    let mut children = Vec::with_capacity(node.child_count());
    let mut cursor = node.walk();
    if cursor.goto_first_child() {
        loop {
            children.push(convert(cursor.node(), cursor.field_name()));
            if !cursor.goto_next_sibling() {
                break;
            }
        }
    }
    let start = node.start_position();
    let end = node.end_position();
    Node {
        kind: node.kind(),
        named: node.is_named(),
        extra: node.is_extra(),
        field,
        span: node.byte_range(),
        start: Position { row: start.row, column: start.column },
        end: Position { row: end.row, column: end.column },
        children,
    }
}

fn first_error(node: tree_sitter::Node<'_>) -> Option<(tree_sitter::Node<'_>, bool)> {
    if node.is_missing() {
        return Some((node, true));
    }
    if node.is_error() {
        return Some((node, false));
    }
    if !node.has_error() {
        return None;
    }
    let mut cursor = node.walk();
    let found = node.children(&mut cursor).find_map(first_error);
    found
}

/// Parse with error recovery: always yields a tree plus the first syntax
/// error, if any. Line-level metrics use this so they stay total.
pub fn parse_lenient(source: &str, grammar: Grammar) -> (SyntaxTree, Option<SyntaxError>) {
    let ts_tree = with_parser(grammar, |p| {
        p.reset();
        p.parse(source, None)
    })
    .expect("parser has a language and no cancellation flag");
    let root = ts_tree.root_node();
    let error = first_error(root).map(|(n, missing)| {
        let pos = n.start_position();
        let message = if missing {
            format!("missing `{}`", n.kind())
        } else {
            let snippet: String = source[n.byte_range()].chars().take(20).collect();
            format!("unexpected `{}`", snippet.trim())
        };
        SyntaxError { line: pos.row + 1, column: pos.column + 1, message }
    });
    let tree = SyntaxTree { root: convert(root, None), source_span: 0..source.len() };
    (tree, error)
}

pub fn parse_source_with(source: &str, grammar: Grammar) -> Result<SyntaxTree, SyntaxError> {
    match parse_lenient(source, grammar) {
        (tree, None) => Ok(tree),
        (_, Some(err)) => Err(err),
    }
}

/// Parse Python source into a full-fidelity syntax tree.
pub fn parse_source(source: &str) -> Result<SyntaxTree, SyntaxError> {
    parse_source_with(source, Grammar::Python)
}

/// Preorder kinds of named, non-extra nodes. String literals contribute a
/// single `string` entry; identifier and literal text never appears.
pub fn node_kind_sequence(tree: &SyntaxTree) -> Vec<&'static str> {
    let mut out = Vec::new();
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        if !node.named || node.extra {
            continue;
        }
        out.push(node.kind);
        if node.kind == "string" {
            continue;
        }
        stack.extend(node.children.iter().rev());
    }
    out
}

const OPERAND_LEAVES: &[&str] = &["identifier", "integer", "float", "true", "false", "none", "ellipsis"];

fn closing_bracket(kind: &str) -> bool {
    matches!(kind, ")" | "]" | "}")
}

fn bracket_pair(kind: &'static str) -> &'static str {
    match kind {
        "(" => "()",
        "[" => "[]",
        "{" => "{}",
        other => other,
    }
}

/// Classified token stream in source order.
pub fn tokens<'s>(tree: &SyntaxTree, source: &'s str) -> Vec<Token<'s>> {
    let mut out = Vec::new();
    let mut stack = vec![&tree.root];
    while let Some(node) = stack.pop() {
        if node.extra {
            continue;
        }
        if node.named {
            if node.kind == "string" || OPERAND_LEAVES.contains(&node.kind) {
                out.push(Token { text: node.text(source), class: TokenClass::Operand, span: node.span.clone() });
                continue;
            }
            if node.children.is_empty() {
                // keyword_separator, positional_separator, ... are bare punctuation.
                if node.span.is_empty() {
                    continue;
                }
                let class = if node.text(source).chars().all(|c| c.is_alphanumeric() || c == '_') {
                    TokenClass::Operand
                } else {
                    TokenClass::Operator
                };
                out.push(Token { text: node.text(source), class, span: node.span.clone() });
                continue;
            }
            stack.extend(node.children.iter().rev());
            continue;
        }
        // Anonymous tokens, including aliased multi-word operators.
        if closing_bracket(node.kind) || node.span.is_empty() {
            continue;
        }
        let class = if node.kind == "_" { TokenClass::Operand } else { TokenClass::Operator };
        let text = if node.children.is_empty() && class == TokenClass::Operator {
            bracket_pair(node.kind)
        } else if node.children.is_empty() {
            node.text(source)
        } else {
            node.kind
        };
        out.push(Token { text, class, span: node.span.clone() });
    }
    out
}

/// Fold a classified token stream into Halstead base counts.
pub fn census_of(tokens: &[Token<'_>]) -> TokenCensus {
    let mut operators = BTreeSet::new();
    let mut operands = BTreeSet::new();
    let mut census = TokenCensus::default();
    for tok in tokens {
        match tok.class {
            TokenClass::Operator => {
                operators.insert(tok.text);
                census.total_operators += 1;
            }
            TokenClass::Operand => {
                operands.insert(tok.text);
                census.total_operands += 1;
            }
        }
    }
    census.distinct_operators = operators.len();
    census.distinct_operands = operands.len();
    census
}

pub fn token_census(source: &str) -> Result<TokenCensus, SyntaxError> {
    let tree = parse_source(source)?;
    Ok(census_of(&tokens(&tree, source)))
}

fn is_docstring_statement(stmt: &Node) -> bool {
    if stmt.kind != "expression_statement" {
        return false;
    }
    let mut named = stmt.named_children();
    matches!(
        (named.next(), named.next()),
        (Some(n), None) if n.kind == "string" || n.kind == "concatenated_string"
    )
}

/// Docstring nodes: a string-only first statement of the module or of a
/// class or function body.
pub fn docstrings(tree: &SyntaxTree) -> Vec<&Node> {
    let bodies = std::iter::once(&tree.root).chain(
        tree.root
            .preorder()
            .filter(|n| matches!(n.kind, "function_definition" | "class_definition"))
            .filter_map(|n| n.child_by_field("body")),
    );
    bodies.filter_map(|body| body.named_children().next().filter(|first| is_docstring_statement(first))).collect()
}

/// Count source, comment and total lines. Docstring lines count as comment
/// lines. Never fails: unparsable input is still censused on the recovered tree.
pub fn line_census(source: &str) -> LineCensus {
    let lines: Vec<&str> = source.lines().collect();
    let (tree, _) = parse_lenient(source, Grammar::Python);
    let mut comment_rows = BTreeSet::new();
    for node in tree.root.preorder() {
        if node.kind == "comment" {
            let line = lines.get(node.start.row).copied().unwrap_or("");
            let before = line.get(..node.start.column).unwrap_or("");
            if before.trim().is_empty() {
                comment_rows.insert(node.start.row);
            }
        }
    }
    for doc in docstrings(&tree) {
        comment_rows.extend(doc.start.row..=doc.end.row);
    }
    let mut census = LineCensus { total_lines: lines.len(), ..LineCensus::default() };
    for (row, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if comment_rows.contains(&row) {
            census.comment_lines += 1;
        } else {
            census.sloc += 1;
        }
    }
    census
}

/// Names bound at module top level by `def`, `class`, or simple assignment.
pub fn top_level_definitions<'s>(tree: &SyntaxTree, source: &'s str) -> Vec<&'s str> {
    let mut names = Vec::new();
    for stmt in tree.statements() {
        let def = if stmt.kind == "decorated_definition" { stmt.child_by_field("definition") } else { Some(stmt) };
        let Some(def) = def else { continue };
        match def.kind {
            "function_definition" | "class_definition" => {
                if let Some(name) = def.child_by_field("name") {
                    names.push(name.text(source));
                }
            }
            "expression_statement" => {
                for assign in def.named_children().filter(|n| n.kind == "assignment") {
                    if let Some(left) = assign.child_by_field("left") {
                        if left.kind == "identifier" {
                            names.push(left.text(source));
                        }
                    }
                }
            }
            _ => {}
        }
    }
    names
}

/// Whether the source defines `name` at module level.
pub fn defines(source: &str, name: &str) -> bool {
    parse_source(source).map(|t| top_level_definitions(&t, source).contains(&name)).unwrap_or(false)
}

impl fmt::Display for TokenCensus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "η1={} N1={} η2={} N2={}",
            self.distinct_operators, self.total_operators, self.distinct_operands, self.total_operands
        )
    }
}
