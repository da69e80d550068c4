//! Tiny expression language for surface/data profiles on a periodic grid.
//!
//! Grammar: a sum of signed terms, each `scalar`, `scalar*func` or `func`,
//! where `func` is one of
//!
//! * `sin`, `cos` — fundamental mode of the period (`sin(2πx/L)`),
//! * `sinK`, `cosK` — K-th mode (`sin(2πKx/L)`, K a positive integer),
//! * `gauss` — periodized Gaussian bump centered at L/2 with width L/10.
//!
//! Examples: `"0.05*sin"`, `"0.1*cos2 - 0.02*sin"`, `"0.2"`, `"0.3*gauss"`.

use crate::error::{Error, Result};
use crate::grid::{Grid1D, SpatialField};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
enum Func {
    Const,
    Sin(u32),
    Cos(u32),
    Gauss,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    terms: Vec<(f64, Func)>,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let src = src.trim();
        if src.is_empty() {
            return Err(Error::InvalidParameter("empty expression".into()));
        }
        // split into signed summands; '+'/'-' after an exponent marker ('e'/'E')
        // belongs to a number, not a new term
        let mut terms = Vec::new();
        let chars: Vec<char> = src.chars().collect();
        let mut start = 0;
        let mut boundaries = Vec::new();
        for (i, &ch) in chars.iter().enumerate() {
            if (ch == '+' || ch == '-') && i > 0 {
                let prev = chars[..i]
                    .iter()
                    .rev()
                    .find(|c| !c.is_whitespace())
                    .copied()
                    .unwrap_or(' ');
                if prev != 'e' && prev != 'E' && prev != '*' {
                    boundaries.push(i);
                }
            }
        }
        for &b in boundaries.iter().chain(std::iter::once(&chars.len())) {
            let piece: String = chars[start..b].iter().collect();
            let piece = piece.trim().replace(' ', "");
            if !piece.is_empty() {
                terms.push(Self::parse_term(&piece)?);
            }
            start = b;
        }
        if terms.is_empty() {
            return Err(Error::InvalidParameter(format!("no terms in expression `{src}`")));
        }
        Ok(Expr { terms })
    }

    fn parse_term(piece: &str) -> Result<(f64, Func)> {
        let (coeff_str, func_str) = match piece.split_once('*') {
            Some((a, b)) => (a.trim(), b.trim()),
            None => {
                if let Ok(v) = piece.parse::<f64>() {
                    return Ok((v, Func::Const));
                }
                let (sign, rest) = match (piece.strip_prefix('-'), piece.strip_prefix('+')) {
                    (Some(r), _) => (-1.0, r.trim()),
                    (None, Some(r)) => (1.0, r.trim()),
                    (None, None) => (1.0, piece),
                };
                return Ok((sign, Self::parse_func(rest)?));
            }
        };
        let coeff: f64 = coeff_str
            .parse()
            .map_err(|_| Error::InvalidParameter(format!("bad coefficient `{coeff_str}`")))?;
        Ok((coeff, Self::parse_func(func_str)?))
    }

    fn parse_func(name: &str) -> Result<Func> {
        let parse_mode = |rest: &str| -> Result<u32> {
            if rest.is_empty() {
                return Ok(1);
            }
            rest.parse::<u32>()
                .ok()
                .filter(|&k| k >= 1)
                .ok_or_else(|| Error::InvalidParameter(format!("bad mode number `{rest}`")))
        };
        if let Some(rest) = name.strip_prefix("sin") {
            return Ok(Func::Sin(parse_mode(rest)?));
        }
        if let Some(rest) = name.strip_prefix("cos") {
            return Ok(Func::Cos(parse_mode(rest)?));
        }
        if name == "gauss" {
            return Ok(Func::Gauss);
        }
        Err(Error::InvalidParameter(format!("unknown function `{name}`")))
    }

    pub fn eval(&self, x: f64, length: f64) -> f64 {
        let k0 = 2.0 * PI / length;
        self.terms
            .iter()
            .map(|(c, f)| {
                c * match f {
                    Func::Const => 1.0,
                    Func::Sin(k) => (*k as f64 * k0 * x).sin(),
                    Func::Cos(k) => (*k as f64 * k0 * x).cos(),
                    Func::Gauss => {
                        // periodized over nearest images; width L/10
                        let w = length / 10.0;
                        (-2i32..=2)
                            .map(|m| {
                                let d = x - 0.5 * length + m as f64 * length;
                                (-(d * d) / (w * w)).exp()
                            })
                            .sum::<f64>()
                    }
                }
            })
            .sum()
    }

    pub fn sample(&self, grid: Grid1D) -> SpatialField {
        SpatialField::from_fn(grid, |x| self.eval(x, grid.length))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn parses_basic_forms() {
        let g = Grid1D::new(2.0 * PI, 32).unwrap();
        let f = Expr::parse("0.05*sin").unwrap().sample(g);
        assert_relative_eq!(f.values[8], 0.05, max_relative = 1e-12); // x = π/2
        let c = Expr::parse("0.2").unwrap().sample(g);
        assert!(c.values.iter().all(|&v| (v - 0.2).abs() < 1e-15));
        let s = Expr::parse("0.1*cos2 - 0.02*sin").unwrap();
        let x = 0.7;
        assert_relative_eq!(
            s.eval(x, 2.0 * PI),
            0.1 * (2.0 * x).cos() - 0.02 * x.sin(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn bare_function_and_negation() {
        assert_relative_eq!(Expr::parse("sin").unwrap().eval(0.3, 2.0 * PI), 0.3f64.sin());
        assert_relative_eq!(Expr::parse("-cos").unwrap().eval(0.3, 2.0 * PI), -(0.3f64.cos()));
    }

    #[test]
    fn gauss_is_periodic() {
        let e = Expr::parse("0.3*gauss").unwrap();
        let l = 4.0;
        assert_relative_eq!(e.eval(0.0, l), e.eval(l, l), max_relative = 1e-12);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("0.1*tan").is_err());
        assert!(Expr::parse("x+1").is_err());
    }
}
