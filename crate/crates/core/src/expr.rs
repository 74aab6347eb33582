//! Grammar, parser, and evaluator for the scalar terms that populate
//! dictionaries.
//!
//! Grammar (whitespace-insensitive, `*` binds tighter than `+`):
//!
//! ```text
//! expr   := term ('+' term)*
//! term   := factor ('*' factor)*
//! factor := number | x<k> | u<k> | fn '(' expr ')' | '(' expr ')'
//! fn     := sin | cos | tan | atan | tanh | ln
//! ```
//!
//! Variable indices are 1-based (`x1`, `u2`). Numbers are ordinary float
//! literals; a leading `-` directly attached to a digit is read as part of
//! the literal so rendered constants round-trip.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarKind {
    State,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FuncKind {
    Sin,
    Cos,
    Tan,
    Atan,
    Tanh,
    Ln,
}

impl FuncKind {
    pub fn name(self) -> &'static str {
        match self {
            FuncKind::Sin => "sin",
            FuncKind::Cos => "cos",
            FuncKind::Tan => "tan",
            FuncKind::Atan => "atan",
            FuncKind::Tanh => "tanh",
            FuncKind::Ln => "ln",
        }
    }

    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => FuncKind::Sin,
            "cos" => FuncKind::Cos,
            "tan" => FuncKind::Tan,
            "atan" => FuncKind::Atan,
            "tanh" => FuncKind::Tanh,
            "ln" => FuncKind::Ln,
            _ => return None,
        })
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            FuncKind::Sin => x.sin(),
            FuncKind::Cos => x.cos(),
            FuncKind::Tan => x.tan(),
            FuncKind::Atan => x.atan(),
            FuncKind::Tanh => x.tanh(),
            FuncKind::Ln => x.ln(),
        }
    }
}

/// Parse tree of a scalar dictionary term.
#[derive(Debug, Clone, PartialEq)]
pub enum TermExpr {
    Const(f64),
    Var { kind: VarKind, index: usize },
    Add(Box<TermExpr>, Box<TermExpr>),
    Mul(Box<TermExpr>, Box<TermExpr>),
    Func(FuncKind, Box<TermExpr>),
}

impl TermExpr {
    pub fn state(index: usize) -> Self {
        TermExpr::Var {
            kind: VarKind::State,
            index,
        }
    }

    pub fn input(index: usize) -> Self {
        TermExpr::Var {
            kind: VarKind::Input,
            index,
        }
    }

    /// True if the tree contains no variable at all (a pure constant).
    pub fn is_constant(&self) -> bool {
        match self {
            TermExpr::Const(_) => true,
            TermExpr::Var { .. } => false,
            TermExpr::Add(l, r) | TermExpr::Mul(l, r) => l.is_constant() && r.is_constant(),
            TermExpr::Func(_, a) => a.is_constant(),
        }
    }

    /// Exact recursive evaluation at the point `(x, u)`.
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<f64> {
        match self {
            TermExpr::Const(c) => Ok(*c),
            TermExpr::Var { kind, index } => {
                let (slice, name) = match kind {
                    VarKind::State => (x, 'x'),
                    VarKind::Input => (u, 'u'),
                };
                slice.get(index - 1).copied().ok_or_else(|| Error::Dimension {
                    expected: *index,
                    got: slice.len(),
                    context: format!("evaluating {name}{index}"),
                })
            }
            TermExpr::Add(l, r) => Ok(l.eval(x, u)? + r.eval(x, u)?),
            TermExpr::Mul(l, r) => Ok(l.eval(x, u)? * r.eval(x, u)?),
            TermExpr::Func(f, a) => {
                let v = a.eval(x, u)?;
                if *f == FuncKind::Ln && v <= 0.0 {
                    return Err(Error::LnDomain {
                        term: self.to_string(),
                        value: v,
                    });
                }
                Ok(f.apply(v))
            }
        }
    }

    /// Replaces every input variable `u_k` by the state variable `x_{n+k}`.
    ///
    /// This is the dictionary re-indexing used when the control input is
    /// absorbed into the augmented state.
    pub fn reindex_inputs_as_states(&self, n: usize) -> TermExpr {
        match self {
            TermExpr::Const(c) => TermExpr::Const(*c),
            TermExpr::Var { kind, index } => match kind {
                VarKind::State => TermExpr::state(*index),
                VarKind::Input => TermExpr::state(n + *index),
            },
            TermExpr::Add(l, r) => TermExpr::Add(
                Box::new(l.reindex_inputs_as_states(n)),
                Box::new(r.reindex_inputs_as_states(n)),
            ),
            TermExpr::Mul(l, r) => TermExpr::Mul(
                Box::new(l.reindex_inputs_as_states(n)),
                Box::new(r.reindex_inputs_as_states(n)),
            ),
            TermExpr::Func(f, a) => TermExpr::Func(*f, Box::new(a.reindex_inputs_as_states(n))),
        }
    }

    /// Conservative range of the term over the box `x_i in [xlo_i, xhi_i]`,
    /// `u_j in [ulo_j, uhi_j]`.
    ///
    /// Products of a subtree with a structurally identical subtree are
    /// recognized as squares, which keeps `ln(1 + x1*x1)` provably positive.
    /// Used only for dictionary validation, never for evaluation.
    pub fn range_on_box(
        &self,
        x_bounds: &[(f64, f64)],
        u_bounds: &[(f64, f64)],
    ) -> Result<(f64, f64)> {
        match self {
            TermExpr::Const(c) => Ok((*c, *c)),
            TermExpr::Var { kind, index } => {
                let slice = match kind {
                    VarKind::State => x_bounds,
                    VarKind::Input => u_bounds,
                };
                slice.get(index - 1).copied().ok_or_else(|| Error::Dimension {
                    expected: *index,
                    got: slice.len(),
                    context: "range_on_box variable index".into(),
                })
            }
            TermExpr::Add(l, r) => {
                let (a, b) = l.range_on_box(x_bounds, u_bounds)?;
                let (c, d) = r.range_on_box(x_bounds, u_bounds)?;
                Ok((a + c, b + d))
            }
            TermExpr::Mul(l, r) => {
                let (a, b) = l.range_on_box(x_bounds, u_bounds)?;
                if l == r {
                    // square: range of t^2 from the range of t
                    let lo = if a <= 0.0 && b >= 0.0 {
                        0.0
                    } else {
                        a.abs().min(b.abs()).powi(2)
                    };
                    return Ok((lo, a.abs().max(b.abs()).powi(2)));
                }
                let (c, d) = r.range_on_box(x_bounds, u_bounds)?;
                let products = [a * c, a * d, b * c, b * d];
                Ok((
                    products.iter().cloned().fold(f64::INFINITY, f64::min),
                    products.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                ))
            }
            TermExpr::Func(f, a) => {
                let (lo, hi) = a.range_on_box(x_bounds, u_bounds)?;
                Ok(match f {
                    FuncKind::Sin | FuncKind::Cos => (-1.0, 1.0),
                    FuncKind::Tan => (f64::NEG_INFINITY, f64::INFINITY),
                    FuncKind::Atan => (lo.atan(), hi.atan()),
                    FuncKind::Tanh => (lo.tanh(), hi.tanh()),
                    FuncKind::Ln => {
                        if lo <= 0.0 {
                            return Err(Error::LnDomain {
                                term: self.to_string(),
                                value: lo,
                            });
                        }
                        (lo.ln(), hi.ln())
                    }
                })
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            TermExpr::Add(..) => 1,
            TermExpr::Mul(..) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for TermExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn child(
            f: &mut fmt::Formatter<'_>,
            e: &TermExpr,
            parent_prec: u8,
            strict: bool,
        ) -> fmt::Result {
            let needs_parens = if strict {
                e.precedence() <= parent_prec
            } else {
                e.precedence() < parent_prec
            };
            if needs_parens {
                write!(f, "(")?;
                write!(f, "{e}")?;
                write!(f, ")")
            } else {
                write!(f, "{e}")
            }
        }
        match self {
            TermExpr::Const(c) => write!(f, "{c}"),
            TermExpr::Var { kind, index } => match kind {
                VarKind::State => write!(f, "x{index}"),
                VarKind::Input => write!(f, "u{index}"),
            },
            TermExpr::Add(l, r) => {
                child(f, l, 1, false)?;
                write!(f, " + ")?;
                child(f, r, 1, true)
            }
            TermExpr::Mul(l, r) => {
                child(f, l, 2, false)?;
                write!(f, " * ")?;
                child(f, r, 2, true)
            }
            TermExpr::Func(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Renders a term back to its source form. `parse_term(render_term(t))`
/// reproduces `t` structurally.
pub fn render_term(t: &TermExpr) -> String {
    t.to_string()
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    n: usize,
    m: usize,
}

impl<'a> Parser<'a> {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::Syntax {
            src: self.src.to_string(),
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<TermExpr> {
        let mut acc = self.term()?;
        while self.peek() == Some(b'+') {
            self.pos += 1;
            let rhs = self.term()?;
            acc = TermExpr::Add(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<TermExpr> {
        let mut acc = self.factor()?;
        while self.peek() == Some(b'*') {
            self.pos += 1;
            let rhs = self.factor()?;
            acc = TermExpr::Mul(Box::new(acc), Box::new(rhs));
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<TermExpr> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected ')'"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(false),
            Some(b'-') => {
                // a sign is only accepted as part of a numeric literal
                let next = self.bytes.get(self.pos + 1).copied();
                if matches!(next, Some(d) if d.is_ascii_digit() || d == b'.') {
                    self.pos += 1;
                    self.number(true)
                } else {
                    Err(self.error("'-' must be followed by a digit (no subtraction operator)"))
                }
            }
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            Some(c) => Err(self.error(format!("unexpected character '{}'", c as char))),
        }
    }

    fn number(&mut self, negative: bool) -> Result<TermExpr> {
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c.is_ascii_digit() || c == b'.' {
                self.pos += 1;
            } else if (c == b'e' || c == b'E') && self.pos > start {
                self.pos += 1;
                if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
        let text = &self.src[start..self.pos];
        let value: f64 = text
            .parse()
            .map_err(|_| self.error(format!("invalid number literal \"{text}\"")))?;
        Ok(TermExpr::Const(if negative { -value } else { value }))
    }

    fn ident(&mut self) -> Result<TermExpr> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphabetic())
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        // variables: x<k> / u<k> with a numeric suffix
        if name == "x" || name == "u" {
            let digits_start = self.pos;
            while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
                self.pos += 1;
            }
            if digits_start == self.pos {
                return Err(self.error(format!("expected index after '{name}'")));
            }
            let index: usize = self.src[digits_start..self.pos]
                .parse()
                .map_err(|_| self.error("variable index overflow"))?;
            let (kind, limit) = if name == "x" {
                (VarKind::State, self.n)
            } else {
                (VarKind::Input, self.m)
            };
            if index == 0 || index > limit {
                return Err(Error::VarIndex {
                    name: format!("{name}{index}"),
                    n: self.n,
                    m: self.m,
                });
            }
            return Ok(TermExpr::Var { kind, index });
        }
        let func = FuncKind::from_name(name)
            .ok_or_else(|| self.error(format!("unknown function \"{name}\"")))?;
        if self.peek() != Some(b'(') {
            return Err(self.error(format!("expected '(' after \"{name}\"")));
        }
        self.pos += 1;
        let arg = self.expr()?;
        if self.peek() != Some(b')') {
            return Err(self.error("expected ')'"));
        }
        self.pos += 1;
        Ok(TermExpr::Func(func, Box::new(arg)))
    }
}

/// Parses a term source string against the declared dimensions `(n, m)`.
pub fn parse_term(src: &str, n: usize, m: usize) -> Result<TermExpr> {
    let mut p = Parser {
        src,
        bytes: src.as_bytes(),
        pos: 0,
        n,
        m,
    };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return Err(p.error("trailing input after expression"));
    }
    Ok(e)
}

/// Ordered function library `f(x, u)`: the first `n` terms are the states,
/// the next `m` the inputs, and the tail holds the nonlinear entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    n: usize,
    m: usize,
    terms: Vec<TermExpr>,
}

impl Dictionary {
    /// Builds a dictionary from the full ordered term list, enforcing the
    /// linear prefix `[x; u]` and rejecting pure-constant terms.
    pub fn new(n: usize, m: usize, terms: Vec<TermExpr>) -> Result<Self> {
        if terms.len() < n + m {
            return Err(Error::InvalidDictionary(format!(
                "need at least n+m = {} terms, got {}",
                n + m,
                terms.len()
            )));
        }
        for (i, t) in terms.iter().enumerate().take(n) {
            if *t != TermExpr::state(i + 1) {
                return Err(Error::InvalidDictionary(format!(
                    "term {i} must be x{}, got \"{t}\"",
                    i + 1
                )));
            }
        }
        for (i, t) in terms.iter().enumerate().take(n + m).skip(n) {
            if *t != TermExpr::input(i - n + 1) {
                return Err(Error::InvalidDictionary(format!(
                    "term {i} must be u{}, got \"{t}\"",
                    i - n + 1
                )));
            }
        }
        for t in &terms {
            if t.is_constant() {
                return Err(Error::InvalidDictionary(format!(
                    "term \"{t}\" is a pure constant; the dynamics map must be devoid of constant terms"
                )));
            }
        }
        Ok(Dictionary { n, m, terms })
    }

    /// Parses every source string and assembles the dictionary.
    pub fn parse(n: usize, m: usize, sources: &[impl AsRef<str>]) -> Result<Self> {
        let terms = sources
            .iter()
            .map(|s| parse_term(s.as_ref(), n, m))
            .collect::<Result<Vec<_>>>()?;
        Dictionary::new(n, m, terms)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Total number of terms N.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Number of nonlinear tail terms, N - (n + m).
    pub fn nonlinear_len(&self) -> usize {
        self.terms.len() - self.n - self.m
    }

    pub fn terms(&self) -> &[TermExpr] {
        &self.terms
    }

    pub fn nonlinear_terms(&self) -> &[TermExpr] {
        &self.terms[self.n + self.m..]
    }

    /// Evaluates all N terms; the prefix equals `[x; u]` exactly.
    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension {
                expected: self.n,
                got: x.len(),
                context: "dictionary state argument".into(),
            });
        }
        if u.len() != self.m {
            return Err(Error::Dimension {
                expected: self.m,
                got: u.len(),
                context: "dictionary input argument".into(),
            });
        }
        let mut out = Vec::with_capacity(self.terms.len());
        out.extend_from_slice(x);
        out.extend_from_slice(u);
        for t in &self.terms[self.n + self.m..] {
            out.push(t.eval(x, u)?);
        }
        Ok(out)
    }

    /// Evaluates only the nonlinear tail Psi(x, u).
    pub fn eval_nonlinear(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.terms[self.n + self.m..]
            .iter()
            .map(|t| t.eval(x, u))
            .collect()
    }

    /// Checks that every `ln` argument is provably positive on the given box
    /// (conservative interval bound with square detection).
    pub fn validate_on_box(
        &self,
        x_bounds: &[(f64, f64)],
        u_bounds: &[(f64, f64)],
    ) -> Result<()> {
        for t in &self.terms {
            t.range_on_box(x_bounds, u_bounds)?;
        }
        Ok(())
    }

    /// Re-indexes every input variable `u_k` as state `x_{n+k}`, producing a
    /// dictionary over the augmented state (no input variables left).
    pub fn reindex_for_augmentation(&self) -> Dictionary {
        let terms = self
            .terms
            .iter()
            .map(|t| t.reindex_inputs_as_states(self.n))
            .collect();
        Dictionary {
            n: self.n + self.m,
            m: 0,
            terms,
        }
    }

    pub fn render(&self) -> Vec<String> {
        self.terms.iter().map(render_term).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_paper_terms() {
        let t = parse_term("sin(u1)", 2, 1).unwrap();
        assert_eq!(t, TermExpr::Func(FuncKind::Sin, Box::new(TermExpr::input(1))));

        let t = parse_term("ln(1 + x1*x1)", 2, 1).unwrap();
        assert_eq!(
            t,
            TermExpr::Func(
                FuncKind::Ln,
                Box::new(TermExpr::Add(
                    Box::new(TermExpr::Const(1.0)),
                    Box::new(TermExpr::Mul(
                        Box::new(TermExpr::state(1)),
                        Box::new(TermExpr::state(1))
                    ))
                ))
            )
        );

        let t = parse_term("x2", 2, 1).unwrap();
        assert_eq!(t, TermExpr::state(2));
    }

    #[test]
    fn parse_is_whitespace_insensitive() {
        let a = parse_term("ln(1+x1*x1)", 2, 1).unwrap();
        let b = parse_term("  ln( 1 +  x1 * x1 ) ", 2, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn precedence_mul_over_add() {
        let t = parse_term("1 + x1 * x2", 2, 0).unwrap();
        assert_eq!(
            t,
            TermExpr::Add(
                Box::new(TermExpr::Const(1.0)),
                Box::new(TermExpr::Mul(
                    Box::new(TermExpr::state(1)),
                    Box::new(TermExpr::state(2))
                ))
            )
        );
    }

    #[test]
    fn syntax_error_reports_position() {
        let err = parse_term("sin(x1", 2, 0).unwrap_err();
        match err {
            Error::Syntax { pos, .. } => assert_eq!(pos, 6),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn var_index_out_of_range() {
        let err = parse_term("x3", 2, 1).unwrap_err();
        assert!(matches!(err, Error::VarIndex { .. }));
        let err = parse_term("u2", 2, 1).unwrap_err();
        assert!(matches!(err, Error::VarIndex { .. }));
    }

    #[test]
    fn eval_examples() {
        let t = parse_term("cos(x1)", 2, 1).unwrap();
        assert_eq!(t.eval(&[0.0, 0.0], &[0.0]).unwrap(), 1.0);

        let t = parse_term("ln(1 + x1*x1)", 2, 1).unwrap();
        assert_relative_eq!(
            t.eval(&[1.0, 0.0], &[0.0]).unwrap(),
            std::f64::consts::LN_2,
            epsilon = 1e-15
        );

        let t = parse_term("sin(u1)", 2, 1).unwrap();
        assert_eq!(t.eval(&[0.0, 0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn ln_domain_error() {
        let t = parse_term("ln(x1)", 1, 0).unwrap();
        let err = t.eval(&[-1.0], &[]).unwrap_err();
        assert!(matches!(err, Error::LnDomain { .. }));
    }

    fn case1_dictionary() -> Dictionary {
        Dictionary::parse(
            2,
            1,
            &[
                "x1",
                "x2",
                "u1",
                "ln(1 + x1*x1)",
                "ln(1 + x2*x2)",
                "ln(1 + u1*u1)",
                "cos(x1)",
                "cos(x2)",
                "cos(u1)",
                "sin(u1)",
            ],
        )
        .unwrap()
    }

    #[test]
    fn case1_dictionary_at_origin() {
        let d = case1_dictionary();
        let v = d.eval(&[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn case1_dictionary_at_x1_one() {
        let d = case1_dictionary();
        let v = d.eval(&[1.0, 0.0], &[0.0]).unwrap();
        let expected = [
            1.0,
            0.0,
            0.0,
            std::f64::consts::LN_2,
            0.0,
            0.0,
            1f64.cos(),
            1.0,
            1.0,
            0.0,
        ];
        for (a, b) in v.iter().zip(expected.iter()) {
            assert_relative_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn dictionary_rejects_bad_prefix() {
        let err = Dictionary::parse(2, 1, &["x2", "x1", "u1"]).unwrap_err();
        assert!(matches!(err, Error::InvalidDictionary(_)));
    }

    #[test]
    fn dictionary_rejects_pure_constant_term() {
        let err = Dictionary::parse(1, 1, &["x1", "u1", "ln(2)"]).unwrap_err();
        assert!(matches!(err, Error::InvalidDictionary(_)));
    }

    #[test]
    fn validate_on_box_accepts_square_ln() {
        let d = Dictionary::parse(1, 1, &["x1", "u1", "ln(1 + x1*x1)"]).unwrap();
        d.validate_on_box(&[(-5.0, 5.0)], &[(-15.0, 15.0)]).unwrap();
    }

    #[test]
    fn validate_on_box_rejects_possibly_nonpositive_ln() {
        let d = Dictionary::parse(1, 0, &["x1", "ln(x1)"]).unwrap();
        let err = d.validate_on_box(&[(-1.0, 5.0)], &[]).unwrap_err();
        assert!(matches!(err, Error::LnDomain { .. }));
    }

    #[test]
    fn reindex_moves_inputs_to_states() {
        let d = Dictionary::parse(2, 1, &["x1", "x2", "u1", "sin(u1)"]).unwrap();
        let aug = d.reindex_for_augmentation();
        assert_eq!(aug.n(), 3);
        assert_eq!(aug.m(), 0);
        assert_eq!(aug.terms()[3], parse_term("sin(x3)", 3, 0).unwrap());
    }

    #[test]
    fn render_round_trips_nested_structures() {
        let cases = [
            "sin(u1)",
            "ln(1 + x1*x1)",
            "x1 + (x2 + u1)",
            "(1 + x1) * x2",
            "x1 * (x2 * u1)",
            "tanh(1 + x1*x1) * cos(x2)",
            "-2.5 * x1",
        ];
        for src in cases {
            let t = parse_term(src, 2, 1).unwrap();
            let rendered = render_term(&t);
            let back = parse_term(&rendered, 2, 1).unwrap();
            assert_eq!(t, back, "round-trip failed for {src} -> {rendered}");
        }
    }

    #[test]
    fn finite_differences_are_second_order() {
        // second-order convergence of central differences is a smoothness
        // surrogate for the evaluator on interior points
        let d = case1_dictionary();
        let term = &d.terms()[3]; // ln(1 + x1^2)
        let x = [0.7, -0.3];
        let u = [2.0];
        let exact = 2.0 * x[0] / (1.0 + x[0] * x[0]);
        let diff = |h: f64| {
            let mut xp = x;
            let mut xm = x;
            xp[0] += h;
            xm[0] -= h;
            (term.eval(&xp, &u).unwrap() - term.eval(&xm, &u).unwrap()) / (2.0 * h)
        };
        let e1 = (diff(1e-3) - exact).abs();
        let e2 = (diff(5e-4) - exact).abs();
        // halving h should shrink the error by about 4
        assert!(e2 < e1 / 3.0, "e1 = {e1}, e2 = {e2}");
        assert!(e1 < 1e-6);
    }
}
