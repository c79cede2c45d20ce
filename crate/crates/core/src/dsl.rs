//! A small arithmetic language for writing `F(x, y)` in config files.
//!
//! ```text
//! expr    := term (("+" | "-") term)*
//! term    := power (("*" | "/") power)*
//! power   := unary ("^" power)?          right-associative
//! unary   := ("-" | "+") unary | primary
//! primary := number | variable | func "(" expr ("," expr)* ")" | "(" expr ")"
//! variable:= ("x" | "y") digits          index in 1..=n
//! func    := "sqrt" | "abs" | "exp" | "log" | "pow"
//! number  := digits ("." digits)? (("e" | "E") ("+" | "-")? digits)?
//! ```
//!
//! Unary minus binds tighter than the base of `^`, so `-y1^2` reads as
//! `(-y1)^2`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 3,
        }
    }

    fn right_assoc(self) -> bool {
        matches!(self, BinOp::Pow)
    }

    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Exp,
    Log,
    Pow,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "pow" => Func::Pow,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Pow => "pow",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::Pow => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index.
    Var(VarKind, usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// A parsed metric expression over `x1..xn, y1..yn`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricExpr {
    ast: Expr,
    dimension: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    text: String,
    line: usize,
    column: usize,
}

fn lex(source: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = source.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut column) = (1usize, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            column = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            column += 1;
            i += 1;
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text: String = chars[start..i].iter().collect();
            match text.parse::<f64>() {
                Ok(v) => Tok::Num(v),
                Err(_) => {
                    return Err(Error::Parse {
                        line,
                        column,
                        token: text,
                        message: "malformed number".into(),
                    })
                }
            }
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else {
            i += 1;
            match c {
                '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => {
                    return Err(Error::Parse {
                        line,
                        column,
                        token: c.to_string(),
                        message: "unexpected character".into(),
                    })
                }
            }
        };
        let text: String = chars[start..i].iter().collect();
        out.push(Token {
            tok,
            text,
            line,
            column,
        });
        column += i - start;
    }
    out.push(Token {
        tok: Tok::End,
        text: "<end of input>".into(),
        line,
        column,
    });
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dimension: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error_at(token: &Token, message: impl Into<String>) -> Error {
        Error::Parse {
            line: token.line,
            column: token.column,
            token: token.text.clone(),
            message: message.into(),
        }
    }

    fn peek_binop(&self) -> Option<BinOp> {
        match self.peek().tok {
            Tok::Op('+') => Some(BinOp::Add),
            Tok::Op('-') => Some(BinOp::Sub),
            Tok::Op('*') => Some(BinOp::Mul),
            Tok::Op('/') => Some(BinOp::Div),
            Tok::Op('^') => Some(BinOp::Pow),
            _ => None,
        }
    }

    /// Precedence climbing over the binary operators.
    fn expr(&mut self, min_prec: u8) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            let prec = op.precedence();
            if prec < min_prec {
                break;
            }
            self.bump();
            let next = if op.right_assoc() { prec } else { prec + 1 };
            let rhs = self.expr(next)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek().tok {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr> {
        let token = self.bump();
        match &token.tok {
            Tok::Num(v) => Ok(Expr::Num(*v)),
            Tok::LParen => {
                let inner = self.expr(1)?;
                self.expect_rparen()?;
                Ok(inner)
            }
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(name) {
                    return self.call(func, &token);
                }
                self.variable(name, &token)
            }
            Tok::End => Err(Self::error_at(&token, "unexpected end of input")),
            _ => Err(Self::error_at(&token, "expected a number, variable, function or `(`")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        let t = self.bump();
        if t.tok == Tok::RParen {
            Ok(())
        } else {
            Err(Self::error_at(&t, "expected `)`"))
        }
    }

    fn call(&mut self, func: Func, name_token: &Token) -> Result<Expr> {
        let open = self.bump();
        if open.tok != Tok::LParen {
            return Err(Self::error_at(&open, format!("expected `(` after `{}`", func.name())));
        }
        let mut args = vec![self.expr(1)?];
        while self.peek().tok == Tok::Comma {
            self.bump();
            args.push(self.expr(1)?);
        }
        self.expect_rparen()?;
        if args.len() != func.arity() {
            return Err(Self::error_at(
                name_token,
                format!(
                    "`{}` takes {} argument(s), got {}",
                    func.name(),
                    func.arity(),
                    args.len()
                ),
            ));
        }
        Ok(Expr::Call(func, args))
    }

    fn variable(&self, name: &str, token: &Token) -> Result<Expr> {
        let (kind, digits) = match name.split_at(1) {
            ("x", d) => (VarKind::X, d),
            ("y", d) => (VarKind::Y, d),
            _ => return Err(Self::error_at(token, format!("unknown identifier `{name}`"))),
        };
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Self::error_at(token, format!("unknown identifier `{name}`")));
        }
        let index: usize = digits
            .parse()
            .map_err(|_| Self::error_at(token, "variable index too large"))?;
        if index == 0 || index > self.dimension {
            return Err(Self::error_at(
                token,
                format!("variable index {index} out of range 1..{}", self.dimension),
            ));
        }
        Ok(Expr::Var(kind, index - 1))
    }
}

/// Parses `source` as an expression in dimension `n`.
pub fn parse(source: &str, n: usize) -> Result<MetricExpr> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if source.trim().is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            token: String::new(),
            message: "empty expression".into(),
        });
    }
    let mut parser = Parser {
        tokens: lex(source)?,
        pos: 0,
        dimension: n,
    };
    let ast = parser.expr(1)?;
    let trailing = parser.peek();
    if trailing.tok != Tok::End {
        return Err(Parser::error_at(trailing, "unexpected token after expression"));
    }
    Ok(MetricExpr { ast, dimension: n })
}

fn domain(expr: &Expr, message: impl Into<String>) -> Error {
    Error::Domain {
        expr: expr.to_string(),
        message: message.into(),
    }
}

fn eval(expr: &Expr, x: &[f64], y: &[f64]) -> Result<f64> {
    let value = match expr {
        Expr::Num(v) => *v,
        Expr::Var(VarKind::X, i) => x[*i],
        Expr::Var(VarKind::Y, i) => y[*i],
        Expr::Neg(e) => -eval(e, x, y)?,
        Expr::Bin(op, a, b) => {
            let a = eval(a, x, y)?;
            let b = eval(b, x, y)?;
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(domain(expr, "division by zero"));
                    }
                    a / b
                }
                BinOp::Pow => power(expr, a, b)?,
            }
        }
        Expr::Call(func, args) => {
            let a = eval(&args[0], x, y)?;
            match func {
                Func::Sqrt => {
                    if a < 0.0 {
                        return Err(domain(expr, format!("square root of negative value {a}")));
                    }
                    a.sqrt()
                }
                Func::Abs => a.abs(),
                Func::Exp => a.exp(),
                Func::Log => {
                    if a <= 0.0 {
                        return Err(domain(expr, format!("logarithm of non-positive value {a}")));
                    }
                    a.ln()
                }
                Func::Pow => power(expr, a, eval(&args[1], x, y)?)?,
            }
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(domain(expr, "non-finite result"))
    }
}

fn power(expr: &Expr, base: f64, exponent: f64) -> Result<f64> {
    if base < 0.0 && exponent.fract() != 0.0 {
        return Err(domain(expr, format!("fractional power of negative value {base}")));
    }
    if base == 0.0 && exponent < 0.0 {
        return Err(domain(expr, "negative power of zero"));
    }
    if exponent == 2.0 {
        return Ok(base * base);
    }
    Ok(base.powf(exponent))
}

impl MetricExpr {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    /// Evaluates at chart point `x` and direction `y`.
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        for v in [x, y] {
            if v.len() != self.dimension {
                return Err(Error::Dimension {
                    expected: self.dimension,
                    got: v.len(),
                });
            }
        }
        eval(&self.ast, x, y)
    }

    /// Number of variable occurrences in the tree.
    pub fn variable_count(&self) -> usize {
        fn walk(e: &Expr) -> usize {
            match e {
                Expr::Num(_) => 0,
                Expr::Var(..) => 1,
                Expr::Neg(a) => walk(a),
                Expr::Bin(_, a, b) => walk(a) + walk(b),
                Expr::Call(_, args) => args.iter().map(walk).sum(),
            }
        }
        walk(&self.ast)
    }

    /// True when no `x` variable occurs.
    pub fn is_position_independent(&self) -> bool {
        fn walk(e: &Expr) -> bool {
            match e {
                Expr::Num(_) | Expr::Var(VarKind::Y, _) => true,
                Expr::Var(VarKind::X, _) => false,
                Expr::Neg(a) => walk(a),
                Expr::Bin(_, a, b) => walk(a) && walk(b),
                Expr::Call(_, args) => args.iter().all(walk),
            }
        }
        walk(&self.ast)
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parenthesize: bool) -> fmt::Result {
    if parenthesize {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(VarKind::X, i) => write!(f, "x{}", i + 1),
            Expr::Var(VarKind::Y, i) => write!(f, "y{}", i + 1),
            Expr::Neg(e) => {
                f.write_str("-")?;
                write_operand(f, e, matches!(**e, Expr::Bin(..) | Expr::Neg(_)))
            }
            Expr::Bin(op, a, b) => {
                let prec = op.precedence();
                let wrap = |child: &Expr, right: bool| match child {
                    Expr::Bin(cop, ..) => {
                        let cp = cop.precedence();
                        cp < prec
                            || (cp == prec && right != op.right_assoc())
                    }
                    Expr::Neg(_) => true,
                    _ => false,
                };
                write_operand(f, a, wrap(a, false))?;
                write!(f, " {} ", op.symbol())?;
                write_operand(f, b, wrap(b, true))
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Display for MetricExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn euclidean_norm_parses() {
        let e = parse("sqrt(y1^2 + y2^2)", 2).unwrap();
        assert_eq!(e.variable_count(), 2);
        assert!(e.is_position_independent());
    }

    #[test]
    fn index_out_of_range() {
        let err = parse("sqrt(y1^2 + y3^2)", 2).unwrap_err();
        match err {
            Error::Parse { message, token, .. } => {
                assert!(message.contains("index 3 out of range"), "{message}");
                assert_eq!(token, "y3");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_input() {
        let err = parse("y1 +", 2).unwrap_err();
        match err {
            Error::Parse { message, column, .. } => {
                assert!(message.contains("end of input"));
                assert_eq!(column, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_identifier_and_position() {
        let err = parse("y1 +\n  foo(y2)", 2).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                column: 3,
                token: "foo".into(),
                message: "unknown identifier `foo`".into()
            }
        );
        assert!(parse("z1", 2).is_err());
        assert!(parse("y0", 2).is_err());
        assert!(parse("pow(y1)", 2).is_err());
        assert!(parse("(y1", 2).is_err());
        assert!(parse("y1 y2", 2).is_err());
        assert!(parse("   ", 2).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let e = parse("sqrt(y1^2+y2^2)", 2).unwrap();
        assert_eq!(e.evaluate(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        let e = parse("(y1^4+y2^4)^(1/4)", 2).unwrap();
        let v = e.evaluate(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - 2f64.powf(0.25)).abs() < 1e-15);
        assert!((v - 1.189207).abs() < 1e-6);
        let e = parse("sqrt(y1^2+y2^2) + 0.5*y1", 2).unwrap();
        assert_eq!(e.evaluate(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.5);
    }

    #[test]
    fn precedence_and_associativity() {
        let at = |s: &str| parse(s, 1).unwrap().evaluate(&[2.0], &[3.0]).unwrap();
        assert_eq!(at("2^3^2"), 512.0);
        assert_eq!(at("-2^2"), 4.0);
        assert_eq!(at("2^-1"), 0.5);
        assert_eq!(at("1 - 2 - 3"), -4.0);
        assert_eq!(at("8 / 4 / 2"), 1.0);
        assert_eq!(at("1 + 2 * 3"), 7.0);
        assert_eq!(at("x1 * y1 ^ 2"), 18.0);
        assert_eq!(at("pow(y1, 2) + exp(0) + log(1) + abs(-1)"), 11.0);
        assert_eq!(at("1.5e1 + 2E-1"), 15.2);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse("sqrt(y1 - 5)", 1).unwrap();
        match e.evaluate(&[0.0], &[1.0]).unwrap_err() {
            Error::Domain { expr, .. } => assert_eq!(expr, "sqrt(y1 - 5.0)"),
            other => panic!("unexpected {other:?}"),
        }
        let e = parse("1 / y1", 1).unwrap();
        assert!(e.evaluate(&[0.0], &[0.0]).is_err());
        let e = parse("log(y1)", 1).unwrap();
        assert!(e.evaluate(&[0.0], &[-1.0]).is_err());
        let e = parse("y1^0.5", 1).unwrap();
        assert!(e.evaluate(&[0.0], &[-1.0]).is_err());
        assert!(e.evaluate(&[0.0, 1.0], &[1.0]).is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.1f64..5.0).prop_map(Expr::Num),
            (0usize..2).prop_map(|i| Expr::Var(VarKind::Y, i)),
            (0usize..2).prop_map(|i| Expr::Var(VarKind::X, i)),
        ];
        leaf.prop_recursive(4, 24, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (inner.clone(), inner.clone(), 0usize..4).prop_map(|(a, b, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][k];
                    Expr::Bin(op, Box::new(a), Box::new(b))
                }),
                (inner.clone(), 1u32..4).prop_map(|(a, p)| Expr::Bin(
                    BinOp::Pow,
                    Box::new(a),
                    Box::new(Expr::Num(p as f64))
                )),
                inner.clone().prop_map(|e| Expr::Call(Func::Abs, vec![e])),
                inner.prop_map(|e| Expr::Call(
                    Func::Sqrt,
                    vec![Expr::Call(Func::Abs, vec![e])]
                )),
            ]
        })
    }

    proptest! {
        #[test]
        fn pretty_print_round_trips(ast in arb_expr(), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let original = MetricExpr { ast, dimension: 2 };
            let printed = original.to_string();
            let reparsed = parse(&printed, 2).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                let y = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
                match (original.evaluate(&x, &y), reparsed.evaluate(&x, &y)) {
                    (Ok(a), Ok(b)) => prop_assert!(a == b, "{} vs {}: {} != {}", original, printed, a, b),
                    (Err(_), Err(_)) => {}
                    (a, b) => prop_assert!(false, "{printed}: {a:?} vs {b:?}"),
                }
            }
        }
    }
}
