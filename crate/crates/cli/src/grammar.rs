//! Text forms of cones and step laws, inverse to their `Display` impls.
//!
//! ```text
//! cone  := halfline | halfspace(d) | orthant(d) | wedge(angle) | linear(matrix; cone)
//! steps := gaussian(d) | uniform_cube(d, side) | atoms[atom; ...]
//!        | product[steps, ...] | linear(matrix; steps)
//! atom  := (x, w) | ((x1, ..., xd), w)
//! ```
//!
//! Numbers may be written with `pi`, products and quotients (`pi/2`, `3*pi/4`)
//! and with a Unicode minus sign.

use conewalk_core::geometry::ConeSpec;
use conewalk_core::steps::{Atom, StepKind};
use nalgebra::DMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{what} at column {column}: {text}")]
pub struct SyntaxError {
    pub what: String,
    pub column: usize,
    pub text: String,
}

struct Cursor<'a> {
    src: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor { src, chars: src.chars().collect(), pos: 0 }
    }

    fn fail<T>(&self, what: impl Into<String>) -> Result<T, SyntaxError> {
        Err(SyntaxError { what: what.into(), column: self.pos + 1, text: self.src.to_string() })
    }

    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), SyntaxError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.fail(format!("expected '{c}'"))
        }
    }

    fn ident(&mut self) -> String {
        self.skip_ws();
        let start = self.pos;
        while self.chars.get(self.pos).is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_') {
            self.pos += 1;
        }
        self.chars[start..self.pos].iter().collect()
    }

    fn finish(&mut self) -> Result<(), SyntaxError> {
        if self.peek().is_some() {
            return self.fail("trailing input");
        }
        Ok(())
    }

    fn factor(&mut self) -> Result<f64, SyntaxError> {
        let negative = matches!(self.peek(), Some('-') | Some('−'));
        if negative {
            self.pos += 1;
        } else {
            self.eat('+');
        }
        self.skip_ws();
        let start = self.pos;
        let v = if self.chars[self.pos..].starts_with(&['p', 'i']) {
            self.pos += 2;
            std::f64::consts::PI
        } else {
            while let Some(&c) = self.chars.get(self.pos) {
                let exp_sign = (c == '-' || c == '+')
                    && self.pos > start
                    && matches!(self.chars.get(self.pos - 1), Some('e') | Some('E'));
                if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
                    self.pos += 1;
                } else {
                    break;
                }
            }
            let s: String = self.chars[start..self.pos].iter().collect();
            match s.parse::<f64>() {
                Ok(v) => v,
                Err(_) => {
                    self.pos = start;
                    return self.fail("expected a number");
                }
            }
        };
        Ok(if negative { -v } else { v })
    }

    fn number(&mut self) -> Result<f64, SyntaxError> {
        let mut v = self.factor()?;
        loop {
            if self.eat('*') {
                v *= self.factor()?;
            } else if self.eat('/') {
                v /= self.factor()?;
            } else {
                return Ok(v);
            }
        }
    }

    fn count(&mut self) -> Result<usize, SyntaxError> {
        let at = self.pos;
        let v = self.number()?;
        if v.fract() != 0.0 || v < 1.0 {
            self.pos = at;
            return self.fail("expected a positive integer");
        }
        Ok(v as usize)
    }

    fn vector(&mut self, open: char, close: char) -> Result<Vec<f64>, SyntaxError> {
        self.expect(open)?;
        let mut out = vec![self.number()?];
        while self.eat(',') {
            out.push(self.number()?);
        }
        self.expect(close)?;
        Ok(out)
    }

    fn matrix(&mut self) -> Result<Vec<Vec<f64>>, SyntaxError> {
        self.expect('[')?;
        let mut rows = vec![self.vector('[', ']')?];
        while self.eat(',') {
            rows.push(self.vector('[', ']')?);
        }
        self.expect(']')?;
        if rows.iter().any(|r| r.len() != rows.len()) {
            return self.fail("matrix must be square");
        }
        Ok(rows)
    }

    fn cone(&mut self) -> Result<ConeSpec, SyntaxError> {
        let at = self.pos;
        let name = self.ident();
        let spec = match name.as_str() {
            "halfline" => ConeSpec::HalfLine,
            "halfspace" | "orthant" => {
                self.expect('(')?;
                let d = self.count()?;
                self.expect(')')?;
                if name == "halfspace" {
                    ConeSpec::HalfSpace(d)
                } else {
                    ConeSpec::Orthant(d)
                }
            }
            "wedge" => {
                self.expect('(')?;
                let a = self.number()?;
                self.expect(')')?;
                ConeSpec::Wedge(a)
            }
            "linear" => {
                self.expect('(')?;
                let rows = self.matrix()?;
                self.expect(';')?;
                let base = self.cone()?;
                self.expect(')')?;
                ConeSpec::Linear { rows, base: Box::new(base) }
            }
            _ => {
                self.pos = at;
                return self.fail("unknown cone (expected halfline, halfspace, orthant, wedge or linear)");
            }
        };
        Ok(spec)
    }

    fn atom(&mut self) -> Result<Atom, SyntaxError> {
        self.expect('(')?;
        let point = if self.peek() == Some('(') { self.vector('(', ')')? } else { vec![self.number()?] };
        self.expect(',')?;
        let weight = self.number()?;
        self.expect(')')?;
        Ok(Atom { point, weight })
    }

    fn steps(&mut self) -> Result<StepKind, SyntaxError> {
        let at = self.pos;
        let name = self.ident();
        let kind = match name.as_str() {
            "gaussian" => {
                self.expect('(')?;
                let d = self.count()?;
                self.expect(')')?;
                StepKind::Gaussian(d)
            }
            "uniform_cube" => {
                self.expect('(')?;
                let dim = self.count()?;
                self.expect(',')?;
                let side = self.number()?;
                self.expect(')')?;
                StepKind::UniformCube { dim, side }
            }
            "atoms" => {
                self.expect('[')?;
                let mut atoms = vec![self.atom()?];
                while self.eat(';') {
                    atoms.push(self.atom()?);
                }
                self.expect(']')?;
                StepKind::Atoms(atoms)
            }
            "product" => {
                self.expect('[')?;
                let mut parts = vec![self.steps()?];
                while self.eat(',') {
                    parts.push(self.steps()?);
                }
                self.expect(']')?;
                StepKind::Product(parts)
            }
            "linear" => {
                self.expect('(')?;
                let rows = self.matrix()?;
                self.expect(';')?;
                let base = self.steps()?;
                self.expect(')')?;
                let d = rows.len();
                let matrix = DMatrix::from_fn(d, d, |i, j| rows[i][j]);
                StepKind::Linear { matrix, base: Box::new(base) }
            }
            _ => {
                self.pos = at;
                return self.fail("unknown step law (expected gaussian, uniform_cube, atoms, product or linear)");
            }
        };
        Ok(kind)
    }
}

pub fn parse_cone(src: &str) -> Result<ConeSpec, SyntaxError> {
    let mut c = Cursor::new(src);
    let spec = c.cone()?;
    c.finish()?;
    Ok(spec)
}

pub fn parse_steps(src: &str) -> Result<StepKind, SyntaxError> {
    let mut c = Cursor::new(src);
    let kind = c.steps()?;
    c.finish()?;
    Ok(kind)
}
