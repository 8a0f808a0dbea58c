//! Drift expressions: numbers, `x`, `pi`, `e`, `+ - * /`, unary minus,
//! parentheses, `exp(·)` and `tanh(·)`.

use std::sync::Arc;

use condflow::analytic::DriftSpec;

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    X,
    Neg(Box<Expr>),
    Bin(Op, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Tanh,
}

impl Expr {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Bin(op, l, r) => {
                let (l, r) = (l.eval(x), r.eval(x));
                match op {
                    Op::Add => l + r,
                    Op::Sub => l - r,
                    Op::Mul => l * r,
                    Op::Div => l / r,
                }
            }
            Expr::Call(f, e) => match f {
                Func::Exp => e.eval(x).exp(),
                Func::Tanh => e.eval(x).tanh(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<Tok>, String> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // exponent: e or E, optional sign, digits
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
            let v = text.parse().map_err(|_| format!("bad number '{text}'"))?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Tok::Ident(chars[start..i].iter().collect()));
        } else if "+-*/()".contains(c) {
            out.push(Tok::Sym(c));
            i += 1;
        } else {
            return Err(format!("unexpected character '{c}'"));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn sum(&mut self) -> Result<Expr, String> {
        let mut e = self.product()?;
        loop {
            let op = if self.eat('+') {
                Op::Add
            } else if self.eat('-') {
                Op::Sub
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.product()?));
        }
    }

    fn product(&mut self) -> Result<Expr, String> {
        let mut e = self.unary()?;
        loop {
            let op = if self.eat('*') {
                Op::Mul
            } else if self.eat('/') {
                Op::Div
            } else {
                return Ok(e);
            };
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
    }

    fn unary(&mut self) -> Result<Expr, String> {
        if self.eat('-') {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr, String> {
        let tok = self.peek().cloned().ok_or("unexpected end of expression")?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::Sym('(') => {
                let e = self.sum()?;
                if !self.eat(')') {
                    return Err("missing ')'".into());
                }
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Expr::X),
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "e" => Ok(Expr::Num(std::f64::consts::E)),
                "exp" | "tanh" => {
                    if !self.eat('(') {
                        return Err(format!("'{name}' needs parentheses"));
                    }
                    let arg = self.sum()?;
                    if !self.eat(')') {
                        return Err("missing ')'".into());
                    }
                    let f = if name == "exp" { Func::Exp } else { Func::Tanh };
                    Ok(Expr::Call(f, Box::new(arg)))
                }
                other => Err(format!("unknown name '{other}'")),
            },
            Tok::Sym(c) => Err(format!("unexpected '{c}'")),
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, CliError> {
    let wrap = |m: String| CliError::Usage(format!("drift expression '{src}': {m}"));
    let toks = tokenize(src).map_err(wrap)?;
    let mut p = Parser { toks, pos: 0 };
    let e = p.sum().map_err(wrap)?;
    if p.pos != p.toks.len() {
        return Err(wrap(format!("unexpected trailing input at token {}", p.pos + 1)));
    }
    Ok(e)
}

/// Range and spacing of the grid used to estimate the drift constants.
const ESTIMATE_RANGE: f64 = 20.0;
const ESTIMATE_STEP: f64 = 1e-3;
/// Smaller monotonicity constants are treated as no contraction at all.
const MIN_LAMBDA: f64 = 1e-8;

/// Difference-quotient estimates (λ, L) on [-20, 20]: λ = -max slope and
/// L = max |slope|.
pub fn estimate_constants(e: &Expr) -> Result<(f64, f64), CliError> {
    let n = (2.0 * ESTIMATE_RANGE / ESTIMATE_STEP).round() as usize;
    let mut prev = e.eval(-ESTIMATE_RANGE);
    let (mut max_slope, mut max_abs) = (f64::NEG_INFINITY, 0.0f64);
    for k in 1..=n {
        let x = -ESTIMATE_RANGE + k as f64 * ESTIMATE_STEP;
        let v = e.eval(x);
        if !v.is_finite() || !prev.is_finite() {
            return Err(CliError::Usage(format!("drift is not finite near x = {x}")));
        }
        let slope = (v - prev) / ESTIMATE_STEP;
        max_slope = max_slope.max(slope);
        max_abs = max_abs.max(slope.abs());
        prev = v;
    }
    Ok((-max_slope, max_abs))
}

/// A drift from an expression, with estimated or given constants.
pub fn drift_spec(src: &str, lambda: Option<f64>, lipschitz: Option<f64>) -> Result<DriftSpec, CliError> {
    let e = Arc::new(parse(src)?);
    let (lam_est, lip_est) = estimate_constants(&e)?;
    let lambda = lambda.unwrap_or(lam_est);
    let lipschitz = lipschitz.unwrap_or(lip_est).max(lambda);
    if !(lambda >= MIN_LAMBDA) {
        return Err(CliError::Usage(format!(
            "drift '{src}' is not strictly contracting (λ = {lambda:.3e}); pass --lambda if the estimate is wrong"
        )));
    }
    let f = Arc::clone(&e);
    let spec = DriftSpec::new(move |x| f.eval(x), lipschitz, lambda).map_err(|err| CliError::Usage(err.to_string()))?;
    let grid: Vec<f64> = (0..=4000).map(|k| -ESTIMATE_RANGE + k as f64 * 0.01).collect();
    spec.validate_on_grid(&grid, 1e-9).map_err(|err| CliError::Usage(err.to_string()))?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse("-x + 2*x/4 - (1 - 3)").unwrap();
        assert_eq!(e.eval(2.0), -2.0 + 1.0 + 2.0);
        assert_eq!(parse("--x").unwrap().eval(3.0), 3.0);
        assert_eq!(parse("2*-x").unwrap().eval(3.0), -6.0);
    }

    #[test]
    fn functions_constants_and_exponents() {
        let e = parse("exp(1) - e + tanh(0) + 1.5e-1 + 2E+1 + pi").unwrap();
        assert!((e.eval(0.0) - (0.15 + 20.0 + std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["", "x +", "sin(x)", "(x", "x)", "2 x", "x^2", "exp x", "1.2.3"] {
            assert!(parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn linear_drift_constants() {
        let (lam, lip) = estimate_constants(&parse("-2*x").unwrap()).unwrap();
        assert!((lam - 2.0).abs() < 1e-9 && (lip - 2.0).abs() < 1e-9);
        let d = drift_spec("-x - tanh(x)", None, None).unwrap();
        assert!((d.lambda() - 1.0).abs() < 1e-3);
        assert!((d.lipschitz() - 2.0).abs() < 1e-3);
        assert!(drift_spec("x", None, None).is_err());
        assert!(drift_spec("-tanh(x)", None, None).is_err());
    }
}
