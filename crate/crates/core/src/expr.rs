//! Arithmetic expressions over named variables: the grammar for deterministic
//! CPDs and quantity-of-interest definitions.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := unary ('^' factor)?          // '^' is right-associative
//! unary  := '-'? atom
//! atom   := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Functions: `exp`, `log`, `sqrt`, `abs` (one argument), `min`, `max` (two
//! arguments). Function names are reserved words. Note that unary minus binds
//! tighter than `^`, so `-2^2` parses as `(-2)^2 = 4`.
//!
//! Evaluation follows IEEE 754: `log` of a negative number is NaN rather than
//! an error, which keeps evaluation total on numeric inputs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function '{name}' at offset {offset}")]
    UnknownFunction { name: String, offset: usize },
    #[error("function '{name}' expects {expected} argument(s), got {got}")]
    Arity {
        name: String,
        expected: usize,
        got: usize,
        offset: usize,
    },
    #[error("unknown variable '{name}'")]
    UnknownVariable { name: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }
}

/// Parsed expression tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Variable(String),
    Neg(Box<Expr>),
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Call { func: Func, args: Vec<Expr> },
}

/// An expression recognized as a linear combination
/// `constant + Σ coefficient · variable`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearForm {
    pub constant: f64,
    pub coefficients: BTreeMap<String, f64>,
}

impl Expr {
    /// Evaluates against a variable lookup. Unknown variables are an error;
    /// out-of-domain function arguments follow IEEE semantics (NaN).
    pub fn eval(&self, lookup: &dyn Fn(&str) -> Option<f64>) -> Result<f64, ExprError> {
        match self {
            Expr::Number(v) => Ok(*v),
            Expr::Variable(name) => lookup(name).ok_or_else(|| ExprError::UnknownVariable {
                name: name.clone(),
            }),
            Expr::Neg(inner) => Ok(-inner.eval(lookup)?),
            Expr::Binary { op, lhs, rhs } => {
                let a = lhs.eval(lookup)?;
                let b = rhs.eval(lookup)?;
                Ok(match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    BinaryOp::Pow => a.powf(b),
                })
            }
            Expr::Call { func, args } => {
                let mut vals = [0.0f64; 2];
                for (slot, arg) in vals.iter_mut().zip(args) {
                    *slot = arg.eval(lookup)?;
                }
                Ok(match func {
                    Func::Exp => vals[0].exp(),
                    Func::Log => vals[0].ln(),
                    Func::Sqrt => vals[0].sqrt(),
                    Func::Abs => vals[0].abs(),
                    Func::Min => vals[0].min(vals[1]),
                    Func::Max => vals[0].max(vals[1]),
                })
            }
        }
    }

    /// The set of free variables.
    pub fn variables(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_variables(&mut out);
        out
    }

    fn collect_variables<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Expr::Number(_) => {}
            Expr::Variable(name) => {
                out.insert(name.as_str());
            }
            Expr::Neg(inner) => inner.collect_variables(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.collect_variables(out);
                rhs.collect_variables(out);
            }
            Expr::Call { args, .. } => {
                for a in args {
                    a.collect_variables(out);
                }
            }
        }
    }

    /// Recognizes the expression as `constant + Σ coefficient·variable`, if it
    /// is one structurally (products of two non-constant subtrees, powers, and
    /// function calls over variables all disqualify). Coefficients of zero are
    /// kept so the variable set is preserved.
    pub fn as_linear_form(&self) -> Option<LinearForm> {
        match self {
            Expr::Number(v) => Some(LinearForm {
                constant: *v,
                coefficients: BTreeMap::new(),
            }),
            Expr::Variable(name) => {
                let mut coefficients = BTreeMap::new();
                coefficients.insert(name.clone(), 1.0);
                Some(LinearForm {
                    constant: 0.0,
                    coefficients,
                })
            }
            Expr::Neg(inner) => {
                let mut form = inner.as_linear_form()?;
                form.constant = -form.constant;
                for c in form.coefficients.values_mut() {
                    *c = -*c;
                }
                Some(form)
            }
            Expr::Binary { op, lhs, rhs } => match op {
                BinaryOp::Add | BinaryOp::Sub => {
                    let a = lhs.as_linear_form()?;
                    let b = rhs.as_linear_form()?;
                    let sign = if *op == BinaryOp::Sub { -1.0 } else { 1.0 };
                    let mut coefficients = a.coefficients;
                    for (name, c) in b.coefficients {
                        *coefficients.entry(name).or_insert(0.0) += sign * c;
                    }
                    Some(LinearForm {
                        constant: a.constant + sign * b.constant,
                        coefficients,
                    })
                }
                BinaryOp::Mul => {
                    let a = lhs.as_linear_form()?;
                    let b = rhs.as_linear_form()?;
                    let (scale, mut form) = if a.coefficients.is_empty() {
                        (a.constant, b)
                    } else if b.coefficients.is_empty() {
                        (b.constant, a)
                    } else {
                        return None;
                    };
                    form.constant *= scale;
                    for c in form.coefficients.values_mut() {
                        *c *= scale;
                    }
                    Some(form)
                }
                BinaryOp::Div => {
                    let mut a = lhs.as_linear_form()?;
                    let b = rhs.as_linear_form()?;
                    if !b.coefficients.is_empty() {
                        return None;
                    }
                    a.constant /= b.constant;
                    for c in a.coefficients.values_mut() {
                        *c /= b.constant;
                    }
                    Some(a)
                }
                BinaryOp::Pow => {
                    let a = lhs.as_linear_form()?;
                    let b = rhs.as_linear_form()?;
                    if a.coefficients.is_empty() && b.coefficients.is_empty() {
                        Some(LinearForm {
                            constant: a.constant.powf(b.constant),
                            coefficients: BTreeMap::new(),
                        })
                    } else {
                        None
                    }
                }
            },
            Expr::Call { func, args } => {
                // Calls fold only when every argument is constant.
                let consts: Option<Vec<f64>> = args
                    .iter()
                    .map(|a| {
                        a.as_linear_form()
                            .filter(|f| f.coefficients.is_empty())
                            .map(|f| f.constant)
                    })
                    .collect();
                let consts = consts?;
                let folded = Expr::Call {
                    func: *func,
                    args: consts.into_iter().map(Expr::Number).collect(),
                };
                let value = folded.eval(&|_| None).expect("constant call");
                Some(LinearForm {
                    constant: value,
                    coefficients: BTreeMap::new(),
                })
            }
        }
    }

    /// Recognizes `a·x + b` for the single variable `x = var`, rejecting
    /// expressions that mention any other variable.
    pub fn as_affine_in(&self, var: &str) -> Option<(f64, f64)> {
        let form = self.as_linear_form()?;
        if form.coefficients.keys().any(|name| name != var) {
            return None;
        }
        let slope = form.coefficients.get(var).copied().unwrap_or(0.0);
        Some((slope, form.constant))
    }
}

// ---------------------------------------------------------------------------
// Pretty-printing (round-trips through the parser)
// ---------------------------------------------------------------------------

impl BinaryOp {
    fn precedence(self) -> u8 {
        match self {
            BinaryOp::Add | BinaryOp::Sub => 1,
            BinaryOp::Mul | BinaryOp::Div => 2,
            BinaryOp::Pow => 3,
        }
    }

    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
            BinaryOp::Pow => '^',
        }
    }
}

impl Expr {
    fn write(&self, f: &mut fmt::Formatter<'_>, parent_prec: u8, is_right: bool) -> fmt::Result {
        match self {
            Expr::Number(v) => {
                if *v < 0.0 || v.is_sign_negative() {
                    // Negative literals only arise from construction, not
                    // parsing; print them parenthesized so they re-parse.
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Variable(name) => write!(f, "{name}"),
            Expr::Neg(inner) => {
                // `unary := '-'? atom`, so the operand must print as an atom.
                write!(f, "-")?;
                match **inner {
                    Expr::Number(v) if v >= 0.0 => write!(f, "{v}"),
                    Expr::Variable(ref name) => write!(f, "{name}"),
                    Expr::Call { .. } => inner.write(f, 0, false),
                    _ => {
                        write!(f, "(")?;
                        inner.write(f, 0, false)?;
                        write!(f, ")")
                    }
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let prec = op.precedence();
                let needs_parens = prec < parent_prec
                    || (prec == parent_prec && (is_right != matches!(op, BinaryOp::Pow)));
                if needs_parens {
                    write!(f, "(")?;
                }
                // Left child of '^' must itself be a factor, hence the bump.
                let lhs_prec = if matches!(op, BinaryOp::Pow) { prec + 1 } else { prec };
                lhs.write(f, lhs_prec, false)?;
                write!(f, " {} ", op.symbol())?;
                rhs.write(f, prec, true)?;
                if needs_parens {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Expr::Call { func, args } => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    a.write(f, 0, false)?;
                }
                write!(f, ")")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, 0, false)
    }
}

// ---------------------------------------------------------------------------
// Lexer + parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    kind: TokenKind,
    offset: usize,
}

fn lex(input: &str) -> Result<Vec<Token>, ExprError> {
    let bytes = input.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        let start = i;
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b'+' => tokens.push(Token { kind: TokenKind::Plus, offset: start }),
            b'-' => tokens.push(Token { kind: TokenKind::Minus, offset: start }),
            b'*' => tokens.push(Token { kind: TokenKind::Star, offset: start }),
            b'/' => tokens.push(Token { kind: TokenKind::Slash, offset: start }),
            b'^' => tokens.push(Token { kind: TokenKind::Caret, offset: start }),
            b'(' => tokens.push(Token { kind: TokenKind::LParen, offset: start }),
            b')' => tokens.push(Token { kind: TokenKind::RParen, offset: start }),
            b',' => tokens.push(Token { kind: TokenKind::Comma, offset: start }),
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        j = k;
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let text = &input[i..j];
                let value: f64 = text.parse().map_err(|_| ExprError::Syntax {
                    offset: start,
                    message: format!("invalid number literal '{text}'"),
                })?;
                tokens.push(Token { kind: TokenKind::Number(value), offset: start });
                i = j;
                continue;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut j = i;
                while j < bytes.len()
                    && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                tokens.push(Token {
                    kind: TokenKind::Ident(input[i..j].to_string()),
                    offset: start,
                });
                i = j;
                continue;
            }
            _ => {
                return Err(ExprError::Syntax {
                    offset: start,
                    message: format!("unexpected character '{}'", &input[i..i + 1]),
                })
            }
        }
        i += 1;
    }
    tokens.push(Token { kind: TokenKind::End, offset: input.len() });
    Ok(tokens)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> Result<(), ExprError> {
        if self.peek().kind == kind {
            self.advance();
            Ok(())
        } else {
            Err(ExprError::Syntax {
                offset: self.peek().offset,
                message: format!("expected {what}"),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut node = self.term()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Plus => BinaryOp::Add,
                TokenKind::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.advance();
            let rhs = self.term()?;
            node = Expr::Binary { op, lhs: Box::new(node), rhs: Box::new(rhs) };
        }
        Ok(node)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut node = self.factor()?;
        loop {
            let op = match self.peek().kind {
                TokenKind::Star => BinaryOp::Mul,
                TokenKind::Slash => BinaryOp::Div,
                _ => break,
            };
            self.advance();
            let rhs = self.factor()?;
            node = Expr::Binary { op, lhs: Box::new(node), rhs: Box::new(rhs) };
        }
        Ok(node)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.unary()?;
        if self.peek().kind == TokenKind::Caret {
            self.advance();
            let exponent = self.factor()?; // right-associative
            return Ok(Expr::Binary {
                op: BinaryOp::Pow,
                lhs: Box::new(base),
                rhs: Box::new(exponent),
            });
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.peek().kind == TokenKind::Minus {
            self.advance();
            let inner = self.atom()?;
            return Ok(Expr::Neg(Box::new(inner)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let token = self.advance();
        match token.kind {
            TokenKind::Number(v) => Ok(Expr::Number(v)),
            TokenKind::Ident(name) => {
                if self.peek().kind == TokenKind::LParen {
                    let func = Func::from_name(&name).ok_or(ExprError::UnknownFunction {
                        name: name.clone(),
                        offset: token.offset,
                    })?;
                    self.advance(); // '('
                    let mut args = vec![self.expr()?];
                    while self.peek().kind == TokenKind::Comma {
                        self.advance();
                        args.push(self.expr()?);
                    }
                    self.expect(TokenKind::RParen, "')'")?;
                    if args.len() != func.arity() {
                        return Err(ExprError::Arity {
                            name: name.clone(),
                            expected: func.arity(),
                            got: args.len(),
                            offset: token.offset,
                        });
                    }
                    Ok(Expr::Call { func, args })
                } else if Func::from_name(&name).is_some() {
                    Err(ExprError::Syntax {
                        offset: token.offset,
                        message: format!("'{name}' is a reserved function name; expected '(' after it"),
                    })
                } else {
                    Ok(Expr::Variable(name))
                }
            }
            TokenKind::LParen => {
                let inner = self.expr()?;
                self.expect(TokenKind::RParen, "')'")?;
                Ok(inner)
            }
            other => Err(ExprError::Syntax {
                offset: token.offset,
                message: format!("expected a number, variable, or '(', found {other:?}"),
            }),
        }
    }
}

/// Parses an expression; errors carry byte offsets into the input.
pub fn parse_expression(input: &str) -> Result<Expr, ExprError> {
    let tokens = lex(input)?;
    let mut parser = Parser { tokens, pos: 0 };
    let node = parser.expr()?;
    if parser.peek().kind != TokenKind::End {
        return Err(ExprError::Syntax {
            offset: parser.peek().offset,
            message: "trailing input after expression".to_string(),
        });
    }
    Ok(node)
}
