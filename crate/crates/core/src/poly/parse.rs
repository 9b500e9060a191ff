use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use super::{MultiIndex, PolyError, Polynomial};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(BigRational),
    Var(usize),
    Plus,
    Minus,
    Star,
    Caret,
    LParen,
    RParen,
}

struct Lexer {
    chars: Vec<(usize, char)>,
    idx: usize,
    nvars: usize,
}

impl Lexer {
    fn syntax(pos: usize, msg: impl Into<String>) -> PolyError {
        PolyError::Syntax { pos, msg: msg.into() }
    }

    fn digits(&mut self) -> String {
        let mut s = String::new();
        while let Some(&(_, c)) = self.chars.get(self.idx) {
            if c.is_ascii_digit() {
                s.push(c);
                self.idx += 1;
            } else {
                break;
            }
        }
        s
    }

    fn skip_ws(&mut self) {
        while matches!(self.chars.get(self.idx), Some((_, c)) if c.is_whitespace()) {
            self.idx += 1;
        }
    }

    fn number(&mut self, start: usize) -> Result<BigRational, PolyError> {
        let int = self.digits();
        let mut value = BigRational::from_integer(int.parse::<BigInt>().unwrap());
        match self.chars.get(self.idx) {
            Some(&(_, '.')) => {
                self.idx += 1;
                let frac = self.digits();
                if frac.is_empty() {
                    return Err(Self::syntax(start, "expected digits after decimal point"));
                }
                let scale = num_traits::pow(BigInt::from(10), frac.len());
                let f = BigRational::new(frac.parse::<BigInt>().unwrap(), scale);
                value += f;
            }
            Some(&(_, '/')) => {
                self.idx += 1;
                self.skip_ws();
                let pos = self.chars.get(self.idx).map_or(start, |c| c.0);
                let den = self.digits();
                if den.is_empty() {
                    return Err(Self::syntax(pos, "expected integer denominator after '/'"));
                }
                let den: BigInt = den.parse().unwrap();
                if den.is_zero() {
                    return Err(Self::syntax(pos, "zero denominator"));
                }
                value /= BigRational::from_integer(den);
            }
            _ => {}
        }
        Ok(value)
    }

    fn variable(&mut self, start: usize) -> Result<usize, PolyError> {
        let mut name = String::new();
        while let Some(&(_, c)) = self.chars.get(self.idx) {
            if c.is_ascii_alphanumeric() || c == '_' {
                name.push(c);
                self.idx += 1;
            } else {
                break;
            }
        }
        let out_of_range = |name: &str| PolyError::VariableOutOfRange {
            name: name.to_string(),
            pos: start,
            nvars: self.nvars,
        };
        let index = match name.as_str() {
            "x" | "y" | "z" if self.nvars <= 3 => match name.as_str() {
                "x" => 0,
                "y" => 1,
                _ => 2,
            },
            "x" | "y" | "z" => return Err(out_of_range(&name)),
            _ => {
                let digits = name
                    .strip_prefix('x')
                    .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
                    .ok_or_else(|| Self::syntax(start, format!("unknown identifier `{name}`")))?;
                let k: usize = digits
                    .parse()
                    .map_err(|_| Self::syntax(start, format!("bad variable index `{name}`")))?;
                if k == 0 {
                    return Err(out_of_range(&name));
                }
                k - 1
            }
        };
        if index >= self.nvars {
            return Err(out_of_range(&name));
        }
        Ok(index)
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, PolyError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let Some(&(pos, c)) = self.chars.get(self.idx) else { break };
            let tok = match c {
                '+' => {
                    self.idx += 1;
                    Tok::Plus
                }
                '-' | '\u{2212}' => {
                    self.idx += 1;
                    Tok::Minus
                }
                '*' => {
                    self.idx += 1;
                    Tok::Star
                }
                '^' => {
                    self.idx += 1;
                    Tok::Caret
                }
                '(' => {
                    self.idx += 1;
                    Tok::LParen
                }
                ')' => {
                    self.idx += 1;
                    Tok::RParen
                }
                c if c.is_ascii_digit() => Tok::Num(self.number(pos)?),
                c if c.is_ascii_alphabetic() => Tok::Var(self.variable(pos)?),
                other => return Err(Self::syntax(pos, format!("unexpected character `{other}`"))),
            };
            out.push((pos, tok));
        }
        Ok(out)
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
    nvars: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |t| t.0)
    }

    fn err(&self, msg: &str) -> PolyError {
        PolyError::Syntax { pos: self.pos(), msg: msg.to_string() }
    }

    fn expr(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.idx += 1;
                    acc = &acc + &self.term()?;
                }
                Some(Tok::Minus) => {
                    self.idx += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial, PolyError> {
        let mut acc = self.unary()?;
        while let Some(Tok::Star) = self.peek() {
            self.idx += 1;
            acc = &acc * &self.unary()?;
        }
        match self.peek() {
            Some(Tok::Num(_)) | Some(Tok::Var(_)) | Some(Tok::LParen) => {
                Err(self.err("implicit multiplication is not allowed; use '*'"))
            }
            _ => Ok(acc),
        }
    }

    fn unary(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek() {
            Some(Tok::Minus) => {
                self.idx += 1;
                Ok(-self.unary()?)
            }
            Some(Tok::Plus) => {
                self.idx += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial, PolyError> {
        let base = self.atom()?;
        if let Some(Tok::Caret) = self.peek() {
            self.idx += 1;
            match self.peek().cloned() {
                Some(Tok::Num(n)) if n.is_integer() => {
                    let k: u32 = n
                        .to_integer()
                        .try_into()
                        .map_err(|_| self.err("exponent too large"))?;
                    self.idx += 1;
                    return Ok(base.pow(k));
                }
                _ => return Err(self.err("expected a non-negative integer exponent after '^'")),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Polynomial, PolyError> {
        match self.peek().cloned() {
            Some(Tok::Num(c)) => {
                self.idx += 1;
                Ok(Polynomial::constant(self.nvars, c))
            }
            Some(Tok::Var(v)) => {
                self.idx += 1;
                Ok(Polynomial::monomial(self.nvars, MultiIndex::unit(self.nvars, v), BigRational::one()))
            }
            Some(Tok::LParen) => {
                self.idx += 1;
                let inner = self.expr()?;
                match self.peek() {
                    Some(Tok::RParen) => {
                        self.idx += 1;
                        Ok(inner)
                    }
                    _ => Err(self.err("expected ')'")),
                }
            }
            Some(_) => Err(self.err("unexpected token")),
            None => Err(self.err("unexpected end of input")),
        }
    }
}

/// Parses a polynomial in `nvars` variables.
///
/// Variables are `x1..xN`; `x`, `y`, `z` alias the first three when
/// `nvars <= 3`. Coefficients are integers, `p/q` rationals or decimals,
/// all read exactly. Multiplication must be explicit.
pub fn parse(text: &str, nvars: usize) -> Result<Polynomial, PolyError> {
    let lexer = Lexer { chars: text.char_indices().collect(), idx: 0, nvars };
    let toks = lexer.tokens()?;
    if toks.is_empty() {
        return Err(PolyError::Syntax { pos: 0, msg: "empty input".into() });
    }
    let mut parser = Parser { toks, idx: 0, end: text.len(), nvars };
    let p = parser.expr()?;
    if parser.idx != parser.toks.len() {
        return Err(parser.err("unexpected trailing input"));
    }
    Ok(p)
}

/// Highest variable index referenced by `text` (1-based), treating
/// `x`, `y`, `z` as `x1`, `x2`, `x3`. Used to infer the ambient dimension.
pub fn max_variable_index(text: &str) -> usize {
    let mut best = 0;
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let name: String = chars[start..i].iter().collect();
            let k = match name.as_str() {
                "x" => 1,
                "y" => 2,
                "z" => 3,
                _ => name.strip_prefix('x').and_then(|d| d.parse().ok()).unwrap_or(0),
            };
            best = best.max(k);
        } else {
            i += 1;
        }
    }
    best
}
