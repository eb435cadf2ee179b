//! Polynomials: complex univariate ones for conormal symbols, and small real
//! multivariate ones parsed from strings like `"1 - 2*t + t^2; -nu"`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Complex polynomial, coefficients in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poly {
    coeffs: Vec<Complex64>,
}

impl Poly {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Poly { coeffs }
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Poly { coeffs: coeffs.iter().map(|&c| Complex64::new(c, 0.0)).collect() }
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Degree ignoring trailing zeros; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.iter().rposition(|c| *c != Complex64::new(0.0, 0.0))
    }

    pub fn is_zero(&self) -> bool {
        self.degree().is_none()
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect(),
        }
    }

    /// max_k |c_k|·max(1,|z|)^k: the size against which "zero" is judged at z.
    fn scale_at(&self, z: Complex64) -> f64 {
        let r = z.norm().max(1.0);
        self.coeffs.iter().enumerate().map(|(k, c)| c.norm() * r.powi(k as i32)).fold(0.0, f64::max)
    }

    /// Order of the zero at z: the first m with |f^{(m)}(z)/m!| > tol·scale.
    pub fn zero_order(&self, z: Complex64, tol: f64) -> usize {
        let scale = self.scale_at(z);
        let mut d = self.clone();
        let mut fact = 1.0;
        for m in 0.. {
            if m > 0 {
                fact *= m as f64;
            }
            if d.is_zero() || d.eval(z).norm() / fact > tol * scale {
                return m;
            }
            d = d.derivative();
        }
        unreachable!()
    }

    /// Distinct roots with their zero orders.
    ///
    /// Companion-matrix eigenvalues are clustered (a zero of order m smears
    /// out to radius ~ε^{1/m}), each cluster is polished by Newton on the
    /// (m−1)-st derivative, and the order is confirmed by the derivative test.
    pub fn roots(&self, tol: f64) -> Result<Vec<(Complex64, usize)>> {
        let deg = match self.degree() {
            None => return Err(Error::DegeneratePolynomial { mode: 0 }),
            Some(d) => d,
        };
        if deg == 0 {
            return Ok(Vec::new());
        }
        let lead = self.coeffs[deg];
        let mut comp = DMatrix::<Complex64>::zeros(deg, deg);
        for k in 0..deg {
            comp[(0, k)] = -self.coeffs[deg - 1 - k] / lead;
            if k + 1 < deg {
                comp[(k + 1, k)] = Complex64::new(1.0, 0.0);
            }
        }
        let eig = if deg == 1 {
            vec![comp[(0, 0)]]
        } else {
            let schur = nalgebra::Schur::try_new(comp, f64::EPSILON, 10_000)
                .ok_or(Error::NoConvergence { mode: 0 })?;
            let t = schur.unpack().1;
            (0..deg).map(|i| t[(i, i)]).collect::<Vec<_>>()
        };

        // Greedy clustering.
        let mut clusters: Vec<Vec<Complex64>> = Vec::new();
        for z in eig {
            let radius = 1e-5 * (1.0 + z.norm());
            match clusters.iter_mut().find(|c| (c[0] - z).norm() < radius) {
                Some(c) => c.push(z),
                None => clusters.push(vec![z]),
            }
        }

        let mut out = Vec::with_capacity(clusters.len());
        for cluster in clusters {
            let m = cluster.len();
            let mut z = cluster.iter().sum::<Complex64>() / m as f64;
            let mut d = self.clone();
            for _ in 1..m {
                d = d.derivative();
            }
            let dd = d.derivative();
            for _ in 0..50 {
                let f = d.eval(z);
                let fp = dd.eval(z);
                if fp.norm() == 0.0 {
                    break;
                }
                let step = f / fp;
                z -= step;
                if step.norm() <= 1e-16 * (1.0 + z.norm()) {
                    break;
                }
            }
            // Clean up round-off on the real axis / at zero.
            if z.im.abs() < 1e-14 * (1.0 + z.norm()) {
                z.im = 0.0;
            }
            if z.re.abs() < 1e-14 * (1.0 + z.norm()) {
                z.re = 0.0;
            }
            let order = self.zero_order(z, tol).max(1);
            out.push((z, order));
        }
        out.sort_by(|a, b| a.0.re.total_cmp(&b.0.re).then(a.0.im.total_cmp(&b.0.im)));
        Ok(out)
    }
}

/// Real polynomial in named variables, stored as exponent vector → coefficient.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MultiPoly {
    vars: Vec<String>,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl MultiPoly {
    pub fn zero(vars: &[&str]) -> Self {
        MultiPoly { vars: vars.iter().map(|s| s.to_string()).collect(), terms: BTreeMap::new() }
    }

    pub fn constant(vars: &[&str], c: f64) -> Self {
        let mut p = Self::zero(vars);
        p.add_term(vec![0; vars.len()], c);
        p
    }

    /// Parses sums of monomials; `;` separates factors that are multiplied.
    ///
    /// ```
    /// use conecalc::poly::MultiPoly;
    /// let p = MultiPoly::parse("1 + 2*t; 3 - nu^2", &["t", "nu"]).unwrap();
    /// assert_eq!(p.eval(&[1.0, 2.0]), 3.0 * (3.0 - 4.0));
    /// ```
    pub fn parse(src: &str, vars: &[&str]) -> Result<Self> {
        let mut acc = Self::constant(vars, 1.0);
        for factor in src.split(';') {
            let f = parse_sum(factor, vars)?;
            acc = acc.mul(&f);
        }
        Ok(acc)
    }

    fn add_term(&mut self, exps: Vec<u32>, c: f64) {
        if c == 0.0 {
            return;
        }
        let v = self.terms.get(&exps).copied().unwrap_or(0.0) + c;
        if v == 0.0 {
            self.terms.remove(&exps);
        } else {
            self.terms.insert(exps, v);
        }
    }

    pub fn mul(&self, other: &MultiPoly) -> MultiPoly {
        let mut out = MultiPoly { vars: self.vars.clone(), terms: BTreeMap::new() };
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * e.iter().zip(x).map(|(&k, &v)| v.powi(k as i32)).product::<f64>())
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Highest exponent of variable `k`.
    pub fn degree_in(&self, k: usize) -> u32 {
        self.terms.keys().map(|e| e[k]).max().unwrap_or(0)
    }

    /// Coefficients in variable `k` with the others fixed at `x`.
    pub fn coeffs_in(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.degree_in(k) as usize + 1];
        for (e, c) in &self.terms {
            let rest: f64 = e
                .iter()
                .zip(x)
                .enumerate()
                .filter(|(i, _)| *i != k)
                .map(|(_, (&p, &v))| v.powi(p as i32))
                .product();
            out[e[k] as usize] += c * rest;
        }
        out
    }

    /// ∂/∂x_k.
    pub fn derivative(&self, k: usize) -> MultiPoly {
        let mut out = MultiPoly { vars: self.vars.clone(), terms: BTreeMap::new() };
        for (e, c) in &self.terms {
            if e[k] > 0 {
                let mut e2 = e.clone();
                e2[k] -= 1;
                out.add_term(e2, c * e[k] as f64);
            }
        }
        out
    }
}

impl fmt::Display for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            let mono: Vec<String> = e
                .iter()
                .zip(&self.vars)
                .filter(|(p, _)| **p > 0)
                .map(|(p, v)| if *p == 1 { v.clone() } else { format!("{v}^{p}") })
                .collect();
            let sign = if *c < 0.0 { "-" } else if i > 0 { "+" } else { "" };
            let sep = if i > 0 { " " } else { "" };
            let mag = c.abs();
            let body = match (mono.is_empty(), mag == 1.0) {
                (true, _) => format!("{mag}"),
                (false, true) => mono.join("*"),
                (false, false) => format!("{mag}*{}", mono.join("*")),
            };
            if i > 0 {
                write!(f, "{sep}{sign} {body}")?;
            } else {
                write!(f, "{sign}{body}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Caret,
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let bytes = src.as_bytes();
    let mut i = 0;
    let mut out = Vec::new();
    while i < bytes.len() {
        let ch = bytes[i] as char;
        match ch {
            ' ' | '\t' => i += 1,
            '+' => {
                out.push(Tok::Plus);
                i += 1
            }
            '-' => {
                out.push(Tok::Minus);
                i += 1
            }
            '*' => {
                out.push(Tok::Star);
                i += 1
            }
            '^' => {
                out.push(Tok::Caret);
                i += 1
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // Exponent part, only when followed by a digit (so "2e" is not eaten).
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s = &src[start..i];
                let v: f64 = s.parse().map_err(|_| invalid("polynomial", format!("bad number `{s}`")))?;
                out.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                out.push(Tok::Ident(src[start..i].to_string()));
            }
            other => return Err(invalid("polynomial", format!("unexpected character `{other}` in `{src}`"))),
        }
    }
    Ok(out)
}

fn parse_sum(src: &str, vars: &[&str]) -> Result<MultiPoly> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(invalid("polynomial", format!("empty factor in `{src}`")));
    }
    let mut p = MultiPoly::zero(vars);
    let mut i = 0;
    let err = |msg: &str| invalid("polynomial", format!("{msg} in `{}`", src.trim()));
    while i < toks.len() {
        let mut sign = 1.0;
        while i < toks.len() && matches!(toks[i], Tok::Plus | Tok::Minus) {
            if toks[i] == Tok::Minus {
                sign = -sign;
            }
            i += 1;
        }
        let mut coef = sign;
        let mut exps = vec![0u32; vars.len()];
        let mut first = true;
        loop {
            if !first {
                if i < toks.len() && toks[i] == Tok::Star {
                    i += 1;
                } else {
                    break;
                }
            }
            first = false;
            match toks.get(i) {
                Some(Tok::Num(v)) => {
                    coef *= v;
                    i += 1;
                }
                Some(Tok::Ident(name)) => {
                    let k = vars
                        .iter()
                        .position(|v| v == name)
                        .ok_or_else(|| err(&format!("unknown variable `{name}` (expected one of {vars:?})")))?;
                    i += 1;
                    let mut pow = 1u32;
                    if i < toks.len() && toks[i] == Tok::Caret {
                        match toks.get(i + 1) {
                            Some(Tok::Num(v)) if v.fract() == 0.0 && *v >= 0.0 && *v < 64.0 => {
                                pow = *v as u32;
                                i += 2;
                            }
                            _ => return Err(err("exponent must be a small nonnegative integer")),
                        }
                    }
                    exps[k] += pow;
                }
                _ => return Err(err("expected a number or variable")),
            }
        }
        p.add_term(exps, coef);
        if i < toks.len() && !matches!(toks[i], Tok::Plus | Tok::Minus) {
            return Err(err("unexpected token"));
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roots_of_simple_quadratics() {
        // −z² + 4 → ±2
        let r = Poly::from_real(&[4.0, 0.0, -1.0]).roots(1e-8).unwrap();
        assert_eq!(r.len(), 2);
        assert!((r[0].0 - Complex64::new(-2.0, 0.0)).norm() < 1e-14);
        assert!((r[1].0 - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        // −z² → double root at 0
        let r = Poly::from_real(&[0.0, 0.0, -1.0]).roots(1e-8).unwrap();
        assert_eq!(r, vec![(Complex64::new(0.0, 0.0), 2)]);
    }

    #[test]
    fn triple_root_is_found_once() {
        // (z−1)³ = z³ − 3z² + 3z − 1
        let r = Poly::from_real(&[-1.0, 3.0, -3.0, 1.0]).roots(1e-8).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].1, 3);
        assert!((r[0].0 - 1.0).norm() < 1e-10);
    }

    #[test]
    fn zero_polynomial_is_degenerate() {
        assert!(Poly::from_real(&[0.0, 0.0]).roots(1e-8).is_err());
        assert!(Poly::from_real(&[1.0]).roots(1e-8).unwrap().is_empty());
    }

    #[test]
    fn parse_and_eval() {
        let p = MultiPoly::parse("-1", &["t", "nu"]).unwrap();
        assert_eq!(p.eval(&[0.3, 7.0]), -1.0);
        let p = MultiPoly::parse("1 - 2*t + t^2; -nu", &["t", "nu"]).unwrap();
        assert_eq!(p.eval(&[2.0, 3.0]), -3.0);
        let p = MultiPoly::parse("2.5e-1*t*nu - 3", &["t", "nu"]).unwrap();
        assert_eq!(p.eval(&[2.0, 4.0]), 2.0 - 3.0);
        assert_eq!(p.coeffs_in(1, &[2.0, 0.0]), vec![-3.0, 0.5]);
        assert!(MultiPoly::parse("x + 1", &["t"]).is_err());
        assert!(MultiPoly::parse("t^", &["t"]).is_err());
        assert!(MultiPoly::parse("", &["t"]).is_err());
        assert!(MultiPoly::parse("1 2", &["t"]).is_err());
    }

    #[test]
    fn display_round_trips() {
        for src in ["1 + s^2", "-nu + 3*t^2*nu - 0.5", "0", "t"] {
            let vars = ["t", "nu", "s"];
            let p = MultiPoly::parse(src, &vars).unwrap();
            let q = MultiPoly::parse(&p.to_string(), &vars).unwrap();
            assert_eq!(p, q, "{src} -> {p}");
        }
    }
}

#[derive(Serialize, Deserialize)]
struct MultiPolyRepr {
    vars: Vec<String>,
    expr: String,
}

impl Serialize for MultiPoly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MultiPolyRepr { vars: self.vars.clone(), expr: self.to_string() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MultiPoly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = MultiPolyRepr::deserialize(d)?;
        let vars: Vec<&str> = r.vars.iter().map(String::as_str).collect();
        MultiPoly::parse(&r.expr, &vars).map_err(serde::de::Error::custom)
    }
}
