//! Arithmetic expressions over the entries of `b`, `x` and `z`, used for
//! user-defined drifts.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | primary
//! primary := number | b[i] | x[i] | z[i][j] | func '(' expr ')'
//!          | norm '(' (b | x | z) ')' | '(' expr ')'
//! func    := sin | cos | exp
//! ```
//!
//! Indices are zero-based.

use mbsde_core::{Matrix, Vector};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ExprError {
    #[error("unexpected character {found:?} at column {col}")]
    Char { found: char, col: usize },
    #[error("expected {expected} at column {col}")]
    Expected { expected: &'static str, col: usize },
    #[error("unknown name {name:?} at column {col}")]
    Unknown { name: String, col: usize },
    #[error("index {index} of {var} out of range (dimension {dim}) at column {col}")]
    Index {
        var: char,
        index: usize,
        dim: usize,
        col: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    B,
    X,
    Z,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    B(usize),
    X(usize),
    Z(usize, usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Norm(Var),
}

/// Dimensions against which indices are checked: `b` in `R^d`, `x` in
/// `R^n`, `z` in `R^{n x d_w}`.
#[derive(Clone, Copy, Debug)]
pub struct Shape {
    pub d: usize,
    pub n: usize,
    pub d_w: usize,
}

impl Expr {
    pub fn parse(src: &str, shape: Shape) -> Result<Expr, ExprError> {
        let mut p = Parser {
            s: src.as_bytes(),
            pos: 0,
            shape,
        };
        let e = p.expr()?;
        p.ws();
        if p.pos < p.s.len() {
            return Err(ExprError::Char {
                found: p.s[p.pos] as char,
                col: p.pos + 1,
            });
        }
        Ok(e)
    }

    pub fn eval(&self, b: &Vector, x: &Vector, z: &Matrix) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::B(i) => b[*i],
            Expr::X(i) => x[*i],
            Expr::Z(i, j) => z[(*i, *j)],
            Expr::Neg(e) => -e.eval(b, x, z),
            Expr::Add(l, r) => l.eval(b, x, z) + r.eval(b, x, z),
            Expr::Sub(l, r) => l.eval(b, x, z) - r.eval(b, x, z),
            Expr::Mul(l, r) => l.eval(b, x, z) * r.eval(b, x, z),
            Expr::Div(l, r) => l.eval(b, x, z) / r.eval(b, x, z),
            Expr::Sin(e) => e.eval(b, x, z).sin(),
            Expr::Cos(e) => e.eval(b, x, z).cos(),
            Expr::Exp(e) => e.eval(b, x, z).exp(),
            Expr::Norm(Var::B) => b.norm(),
            Expr::Norm(Var::X) => x.norm(),
            Expr::Norm(Var::Z) => z.norm(),
        }
    }

    pub fn uses_z(&self) -> bool {
        match self {
            Expr::Z(..) | Expr::Norm(Var::Z) => true,
            Expr::Num(_) | Expr::B(_) | Expr::X(_) | Expr::Norm(_) => false,
            Expr::Neg(e) | Expr::Sin(e) | Expr::Cos(e) | Expr::Exp(e) => e.uses_z(),
            Expr::Add(l, r) | Expr::Sub(l, r) | Expr::Mul(l, r) | Expr::Div(l, r) => {
                l.uses_z() || r.uses_z()
            }
        }
    }
}

struct Parser<'a> {
    s: &'a [u8],
    pos: usize,
    shape: Shape,
}

impl Parser<'_> {
    fn ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.pos).copied()
    }

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8, what: &'static str) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(ExprError::Expected {
                expected: what,
                col: self.pos + 1,
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')', "')'")?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.name(),
            Some(c) => Err(ExprError::Char {
                found: c as char,
                col: self.pos + 1,
            }),
            None => Err(ExprError::Expected {
                expected: "an operand",
                col: self.pos + 1,
            }),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.s.len()
            && (self.s[self.pos].is_ascii_digit() || self.s[self.pos] == b'.')
        {
            self.pos += 1;
        }
        // exponent part
        if self.pos < self.s.len() && matches!(self.s[self.pos], b'e' | b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < self.s.len() && matches!(self.s[self.pos], b'+' | b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        text.parse()
            .map(Expr::Num)
            .map_err(|_| ExprError::Expected {
                expected: "a number",
                col: start + 1,
            })
    }

    fn index(&mut self, var: char, dim: usize) -> Result<usize, ExprError> {
        self.expect(b'[', "'['")?;
        self.ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        let index: usize = std::str::from_utf8(&self.s[start..self.pos])
            .unwrap_or("")
            .parse()
            .map_err(|_| ExprError::Expected {
                expected: "an index",
                col: start + 1,
            })?;
        if index >= dim {
            return Err(ExprError::Index {
                var,
                index,
                dim,
                col: start + 1,
            });
        }
        self.expect(b']', "']'")?;
        Ok(index)
    }

    fn name(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.s.len()
            && (self.s[self.pos].is_ascii_alphanumeric() || self.s[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("");
        let sh = self.shape;
        match name {
            "b" => Ok(Expr::B(self.index('b', sh.d)?)),
            "x" => Ok(Expr::X(self.index('x', sh.n)?)),
            "z" => {
                let i = self.index('z', sh.n)?;
                let j = self.index('z', sh.d_w)?;
                Ok(Expr::Z(i, j))
            }
            "sin" | "cos" | "exp" => {
                self.expect(b'(', "'('")?;
                let arg = Box::new(self.expr()?);
                self.expect(b')', "')'")?;
                Ok(match name {
                    "sin" => Expr::Sin(arg),
                    "cos" => Expr::Cos(arg),
                    _ => Expr::Exp(arg),
                })
            }
            "norm" => {
                self.expect(b'(', "'('")?;
                self.ws();
                let col = self.pos + 1;
                let var = match self.s.get(self.pos) {
                    Some(b'b') => Var::B,
                    Some(b'x') => Var::X,
                    Some(b'z') => Var::Z,
                    _ => {
                        return Err(ExprError::Expected {
                            expected: "b, x or z",
                            col,
                        })
                    }
                };
                self.pos += 1;
                self.expect(b')', "')'")?;
                Ok(Expr::Norm(var))
            }
            _ => Err(ExprError::Unknown {
                name: name.to_string(),
                col: start + 1,
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPE: Shape = Shape { d: 2, n: 2, d_w: 3 };

    fn eval(src: &str) -> f64 {
        let b = Vector::from_vec(vec![0.5, -1.0]);
        let x = Vector::from_vec(vec![3.0, 4.0]);
        let z = Matrix::from_fn(2, 3, |i, j| (i * 3 + j) as f64);
        Expr::parse(src, SHAPE).unwrap().eval(&b, &x, &z)
    }

    #[test]
    fn arithmetic_and_precedence() {
        assert_eq!(eval("1 + 2 * 3"), 7.0);
        assert_eq!(eval("(1 + 2) * 3"), 9.0);
        assert_eq!(eval("8 / 4 / 2"), 1.0);
        assert_eq!(eval("2 - 3 - 4"), -5.0);
        assert_eq!(eval("--2"), 2.0);
        assert_eq!(eval("-x[0] * 2"), -6.0);
        assert_eq!(eval("1.5e1 + 2E-1"), 15.2);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(eval("b[0] + x[1] + z[1][2]"), 0.5 + 4.0 + 5.0);
        assert_eq!(eval("norm(x)"), 5.0);
        assert_eq!(eval("norm(b)"), 1.25_f64.sqrt());
        assert!((eval("sin(b[0])") - 0.5_f64.sin()).abs() < 1e-15);
        assert!((eval("cos(0) + exp(1)") - (1.0 + 1.0_f64.exp())).abs() < 1e-15);
        assert!(Expr::parse("z[0][0]", SHAPE).unwrap().uses_z());
        assert!(Expr::parse("norm(z) * 0", SHAPE).unwrap().uses_z());
        assert!(!Expr::parse("x[0] * b[1]", SHAPE).unwrap().uses_z());
    }

    #[test]
    fn errors_carry_columns() {
        assert_eq!(
            Expr::parse("x[2]", SHAPE),
            Err(ExprError::Index {
                var: 'x',
                index: 2,
                dim: 2,
                col: 3
            })
        );
        assert!(matches!(
            Expr::parse("tan(1)", SHAPE),
            Err(ExprError::Unknown { col: 1, .. })
        ));
        assert!(matches!(
            Expr::parse("1 +", SHAPE),
            Err(ExprError::Expected { .. })
        ));
        assert!(matches!(
            Expr::parse("(1", SHAPE),
            Err(ExprError::Expected { .. })
        ));
        assert!(matches!(
            Expr::parse("1 2", SHAPE),
            Err(ExprError::Char { found: '2', col: 3 })
        ));
        assert!(matches!(
            Expr::parse("norm(y)", SHAPE),
            Err(ExprError::Expected { .. })
        ));
        assert!(matches!(
            Expr::parse("z[0][3]", SHAPE),
            Err(ExprError::Index { var: 'z', .. })
        ));
    }
}
