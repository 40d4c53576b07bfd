//! Symbolic model trees.
//!
//! An [`ExpressionTree`] is a tree of function nodes over terminals; terminals
//! are real constants or (variable, lag) references into a
//! [`LaggedDesignMatrix`]. Evaluation is pure: numeric domain violations
//! (division by zero, log of a non-positive value, overflow) produce
//! non-finite values that propagate upward instead of raising errors.
//!
//! Trees have a canonical prefix serialization, e.g.
//! `(add (var x 3) (const 1.25))`, which round-trips exactly.

use crate::dataset::LaggedDesignMatrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpressionError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("variable index {var} out of range for a matrix with {num_vars} variables")]
    UnresolvableVariable { var: usize, num_vars: usize },
    #[error("lag {lag} exceeds the matrix max lag {max_lag}")]
    LagOutOfRange { lag: usize, max_lag: usize },
}

/// The function set: binary `+ - * / avg`, unary `log exp sin`.
/// Division is not protected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FunctionSymbol {
    Add,
    Sub,
    Mul,
    Div,
    Avg,
    Log,
    Exp,
    Sin,
}

impl FunctionSymbol {
    pub const ALL: [FunctionSymbol; 8] = [
        FunctionSymbol::Add,
        FunctionSymbol::Sub,
        FunctionSymbol::Mul,
        FunctionSymbol::Div,
        FunctionSymbol::Avg,
        FunctionSymbol::Log,
        FunctionSymbol::Exp,
        FunctionSymbol::Sin,
    ];

    pub fn arity(self) -> usize {
        match self {
            FunctionSymbol::Add
            | FunctionSymbol::Sub
            | FunctionSymbol::Mul
            | FunctionSymbol::Div
            | FunctionSymbol::Avg => 2,
            FunctionSymbol::Log | FunctionSymbol::Exp | FunctionSymbol::Sin => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FunctionSymbol::Add => "add",
            FunctionSymbol::Sub => "sub",
            FunctionSymbol::Mul => "mul",
            FunctionSymbol::Div => "div",
            FunctionSymbol::Avg => "avg",
            FunctionSymbol::Log => "log",
            FunctionSymbol::Exp => "exp",
            FunctionSymbol::Sin => "sin",
        }
    }

    pub fn from_name(name: &str) -> Option<FunctionSymbol> {
        FunctionSymbol::ALL.iter().copied().find(|f| f.name() == name)
    }
}

/// A tree node: function application or terminal.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Const(f64),
    Var { var: usize, lag: usize },
    Fun(FunctionSymbol, Vec<Node>),
}

impl Node {
    fn depth(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var { .. } => 1,
            Node::Fun(_, children) => 1 + children.iter().map(Node::depth).max().unwrap_or(0),
        }
    }

    fn size(&self) -> usize {
        match self {
            Node::Const(_) | Node::Var { .. } => 1,
            Node::Fun(_, children) => 1 + children.iter().map(Node::size).sum::<usize>(),
        }
    }

    fn eval(&self, matrix: &LaggedDesignMatrix, t: usize) -> f64 {
        match self {
            Node::Const(c) => *c,
            Node::Var { var, lag } => matrix.cell(*var, *lag, t),
            Node::Fun(f, ch) => match f {
                FunctionSymbol::Add => ch[0].eval(matrix, t) + ch[1].eval(matrix, t),
                FunctionSymbol::Sub => ch[0].eval(matrix, t) - ch[1].eval(matrix, t),
                FunctionSymbol::Mul => ch[0].eval(matrix, t) * ch[1].eval(matrix, t),
                FunctionSymbol::Div => ch[0].eval(matrix, t) / ch[1].eval(matrix, t),
                FunctionSymbol::Avg => 0.5 * (ch[0].eval(matrix, t) + ch[1].eval(matrix, t)),
                FunctionSymbol::Log => ch[0].eval(matrix, t).ln(),
                FunctionSymbol::Exp => ch[0].eval(matrix, t).exp(),
                FunctionSymbol::Sin => ch[0].eval(matrix, t).sin(),
            },
        }
    }

    fn count_refs(&self, counts: &mut [usize]) {
        match self {
            Node::Const(_) => {}
            Node::Var { var, .. } => counts[*var] += 1,
            Node::Fun(_, ch) => ch.iter().for_each(|c| c.count_refs(counts)),
        }
    }

    fn count_lagged_refs(&self, counts: &mut std::collections::BTreeMap<(usize, usize), usize>) {
        match self {
            Node::Const(_) => {}
            Node::Var { var, lag } => *counts.entry((*var, *lag)).or_insert(0) += 1,
            Node::Fun(_, ch) => ch.iter().for_each(|c| c.count_lagged_refs(counts)),
        }
    }

    /// Preorder access; `index` must be < size.
    pub fn nth(&self, index: usize) -> &Node {
        fn walk<'a>(node: &'a Node, index: &mut usize) -> Option<&'a Node> {
            if *index == 0 {
                return Some(node);
            }
            *index -= 1;
            if let Node::Fun(_, ch) = node {
                for c in ch {
                    if let Some(found) = walk(c, index) {
                        return Some(found);
                    }
                }
            }
            None
        }
        let mut idx = index;
        walk(self, &mut idx).expect("node index out of range")
    }

    pub fn nth_mut(&mut self, index: usize) -> &mut Node {
        fn walk<'a>(node: &'a mut Node, index: &mut usize) -> Option<&'a mut Node> {
            if *index == 0 {
                return Some(node);
            }
            *index -= 1;
            if let Node::Fun(_, ch) = node {
                for c in ch {
                    if let Some(found) = walk(c, index) {
                        return Some(found);
                    }
                }
            }
            None
        }
        let mut idx = index;
        walk(self, &mut idx).expect("node index out of range")
    }

    /// Depth (nodes on the path from the root, root = 1) at which the
    /// preorder `index`-th node sits.
    pub fn depth_of_nth(&self, index: usize) -> usize {
        fn walk(node: &Node, index: &mut usize, depth: usize) -> Option<usize> {
            if *index == 0 {
                return Some(depth);
            }
            *index -= 1;
            if let Node::Fun(_, ch) = node {
                for c in ch {
                    if let Some(d) = walk(c, index, depth + 1) {
                        return Some(d);
                    }
                }
            }
            None
        }
        let mut idx = index;
        walk(self, &mut idx, 1).expect("node index out of range")
    }

    fn write_prefix(&self, names: &[String], out: &mut String) {
        match self {
            Node::Const(c) => out.push_str(&format!("(const {c:?})")),
            Node::Var { var, lag } => out.push_str(&format!("(var {} {})", names[*var], lag)),
            Node::Fun(f, ch) => {
                out.push('(');
                out.push_str(f.name());
                for c in ch {
                    out.push(' ');
                    c.write_prefix(names, out);
                }
                out.push(')');
            }
        }
    }
}

/// An evolvable symbolic regression model.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionTree {
    pub root: Node,
}

impl ExpressionTree {
    pub fn new(root: Node) -> Self {
        ExpressionTree { root }
    }

    /// Nodes on the longest root-to-leaf path; a lone terminal has depth 1.
    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Total node count.
    pub fn size(&self) -> usize {
        self.root.size()
    }

    /// Checks that the tree only references variables and lags the matrix can
    /// resolve. Violations are programming errors, not fitness events.
    pub fn validate_refs(&self, matrix: &LaggedDesignMatrix) -> Result<(), ExpressionError> {
        fn walk(node: &Node, matrix: &LaggedDesignMatrix) -> Result<(), ExpressionError> {
            match node {
                Node::Const(_) => Ok(()),
                Node::Var { var, lag } => {
                    if *var >= matrix.num_vars() {
                        return Err(ExpressionError::UnresolvableVariable {
                            var: *var,
                            num_vars: matrix.num_vars(),
                        });
                    }
                    if *lag > matrix.max_lag() {
                        return Err(ExpressionError::LagOutOfRange {
                            lag: *lag,
                            max_lag: matrix.max_lag(),
                        });
                    }
                    Ok(())
                }
                Node::Fun(_, ch) => ch.iter().try_for_each(|c| walk(c, matrix)),
            }
        }
        walk(&self.root, matrix)
    }

    /// Evaluates the tree on each row of `rows`. Non-finite values (unprotected
    /// division, log of non-positives, overflow, missing cells) propagate
    /// upward unaltered.
    pub fn evaluate(&self, matrix: &LaggedDesignMatrix, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&t| self.root.eval(matrix, t)).collect()
    }

    /// Number of references to the base variable `var`, summed over all lags.
    pub fn ref_count(&self, var: usize, num_vars: usize) -> usize {
        self.ref_counts(num_vars)[var]
    }

    /// Per-base-variable reference counts; lag variants collapse onto their
    /// base variable.
    pub fn ref_counts(&self, num_vars: usize) -> Vec<usize> {
        let mut counts = vec![0; num_vars];
        self.root.count_refs(&mut counts);
        counts
    }

    /// Per-(variable, lag) reference counts, kept for diagnostics.
    pub fn lagged_ref_counts(&self) -> std::collections::BTreeMap<(usize, usize), usize> {
        let mut counts = std::collections::BTreeMap::new();
        self.root.count_lagged_refs(&mut counts);
        counts
    }

    /// Canonical prefix serialization with explicit lags and variable names.
    pub fn to_prefix(&self, names: &[String]) -> String {
        let mut out = String::new();
        self.root.write_prefix(names, &mut out);
        out
    }

    /// Parses the canonical prefix form back into a tree.
    pub fn parse_prefix(text: &str, names: &[String]) -> Result<Self, ExpressionError> {
        let mut parser = Parser {
            text,
            pos: 0,
            names,
        };
        let root = parser.parse_node()?;
        parser.skip_ws();
        if parser.pos != text.len() {
            return Err(parser.err("trailing input after expression"));
        }
        Ok(ExpressionTree { root })
    }
}

struct Parser<'a> {
    text: &'a str,
    pos: usize,
    names: &'a [String],
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> ExpressionError {
        ExpressionError::Parse {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.text[self.pos..].starts_with(|c: char| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExpressionError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            Ok(())
        } else {
            Err(self.err(&format!("expected `{c}`")))
        }
    }

    fn token(&mut self) -> Result<&'a str, ExpressionError> {
        self.skip_ws();
        let start = self.pos;
        let rest = &self.text[start..];
        let end = rest
            .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
            .unwrap_or(rest.len());
        if end == 0 {
            return Err(self.err("expected a token"));
        }
        self.pos += end;
        Ok(&rest[..end])
    }

    fn parse_node(&mut self) -> Result<Node, ExpressionError> {
        self.expect('(')?;
        let head = self.token()?;
        let node = match head {
            "const" => {
                let tok = self.token()?;
                let value: f64 = tok
                    .parse()
                    .map_err(|_| self.err(&format!("invalid constant `{tok}`")))?;
                Node::Const(value)
            }
            "var" => {
                let name = self.token()?;
                let var = self
                    .names
                    .iter()
                    .position(|n| n == name)
                    .ok_or_else(|| ExpressionError::UnknownVariable(name.to_string()))?;
                let lag_tok = self.token()?;
                let lag: usize = lag_tok
                    .parse()
                    .map_err(|_| self.err(&format!("invalid lag `{lag_tok}`")))?;
                Node::Var { var, lag }
            }
            other => {
                let f = FunctionSymbol::from_name(other)
                    .ok_or_else(|| self.err(&format!("unknown function `{other}`")))?;
                let children = (0..f.arity())
                    .map(|_| self.parse_node())
                    .collect::<Result<Vec<_>, _>>()?;
                Node::Fun(f, children)
            }
        };
        self.expect(')')?;
        Ok(node)
    }
}
