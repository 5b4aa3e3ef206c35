//! Exact vectors over a declared basis of ℚ-independent real symbols.
//!
//! A component is stored as a rational combination `Σ_s c_s · symbol_s`, so
//! equality tests, collision closure and integer-relation checks are exact even
//! when velocities involve irrational numbers such as √2.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("symbol basis is empty")]
    EmptyBasis,
    #[error("first symbol must be the rational unit with value 1, found {name} = {value}")]
    MissingUnit { name: String, value: f64 },
    #[error("duplicate symbol name {0:?}")]
    DuplicateSymbol(String),
    #[error("symbol {name:?} has non-finite value")]
    NonFiniteSymbol { name: String },
    #[error("cannot parse rational {0:?}")]
    BadRational(String),
    #[error("component has {got} coefficients, basis has {expected} symbols")]
    CoefficientCount { expected: usize, got: usize },
}

/// Names and numeric values of the basis symbols. Entry 0 is always the unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBasis {
    names: Vec<String>,
    values: Vec<f64>,
}

impl SymbolBasis {
    /// The basis `{1}`: every component is a plain rational.
    pub fn rational() -> Self {
        Self { names: vec!["1".into()], values: vec![1.0] }
    }

    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = (S, f64)>) -> Result<Self, ExactError> {
        let (names, values): (Vec<String>, Vec<f64>) =
            symbols.into_iter().map(|(n, v)| (n.into(), v)).unzip();
        if names.is_empty() {
            return Err(ExactError::EmptyBasis);
        }
        if values[0] != 1.0 {
            return Err(ExactError::MissingUnit { name: names[0].clone(), value: values[0] });
        }
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ExactError::DuplicateSymbol(n.clone()));
            }
            if !values[i].is_finite() {
                return Err(ExactError::NonFiniteSymbol { name: n.clone() });
            }
        }
        Ok(Self { names, values })
    }

    /// Basis `{1, extra...}`, prepending the unit.
    pub fn with_unit<S: Into<String>>(extra: impl IntoIterator<Item = (S, f64)>) -> Result<Self, ExactError> {
        let mut all: Vec<(String, f64)> = vec![("1".into(), 1.0)];
        all.extend(extra.into_iter().map(|(n, v)| (n.into(), v)));
        Self::new(all)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A `d`-vector whose components are rational combinations of basis symbols.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExactVector {
    coeffs: Vec<Vec<BigRational>>,
}

impl ExactVector {
    pub fn zero(dim: usize, basis_len: usize) -> Self {
        Self { coeffs: vec![vec![BigRational::zero(); basis_len]; dim] }
    }

    /// Build from `coeffs[j][s]`; all rows must have the same length.
    pub fn from_coeffs(coeffs: Vec<Vec<BigRational>>) -> Self {
        debug_assert!(coeffs.windows(2).all(|w| w[0].len() == w[1].len()));
        Self { coeffs }
    }

    /// Vector with integer components on the unit symbol.
    pub fn from_integers(values: &[i64], basis_len: usize) -> Self {
        let mut v = Self::zero(values.len(), basis_len);
        for (j, &x) in values.iter().enumerate() {
            v.coeffs[j][0] = BigRational::from_integer(BigInt::from(x));
        }
        v
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn basis_len(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }

    pub fn coeffs(&self) -> &[Vec<BigRational>] {
        &self.coeffs
    }

    pub fn component(&self, j: usize) -> &[BigRational] {
        &self.coeffs[j]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().flatten().all(Zero::is_zero)
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        Self { coeffs: self.coeffs.iter().map(|row| row.iter().map(|c| c * r).collect()).collect() }
    }

    /// Numeric value of each component.
    pub fn eval(&self, basis: &SymbolBasis) -> Vec<f64> {
        self.coeffs
            .iter()
            .map(|row| row.iter().zip(basis.values()).map(|(c, s)| rational_to_f64(c) * s).sum())
            .collect()
    }

    /// Canonical string, e.g. `(1 + 1/2*s2, -3)`; used as a stable key in reports.
    pub fn render(&self, basis: &SymbolBasis) -> String {
        let parts: Vec<String> = self.coeffs.iter().map(|row| render_component(row, basis)).collect();
        format!("({})", parts.join(", "))
    }
}

fn render_component(row: &[BigRational], basis: &SymbolBasis) -> String {
    let mut out = String::new();
    for (c, name) in row.iter().zip(basis.names()) {
        if c.is_zero() {
            continue;
        }
        let neg = c.is_negative();
        let mag = c.abs();
        if out.is_empty() {
            if neg {
                out.push('-');
            }
        } else {
            out.push_str(if neg { " - " } else { " + " });
        }
        let is_unit = name == "1";
        if is_unit {
            out.push_str(&mag.to_string());
        } else if mag.is_one() {
            out.push_str(name);
        } else {
            out.push_str(&format!("{mag}*{name}"));
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

impl Add for &ExactVector {
    type Output = ExactVector;
    fn add(self, rhs: &ExactVector) -> ExactVector {
        ExactVector {
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }
}

impl Sub for &ExactVector {
    type Output = ExactVector;
    fn sub(self, rhs: &ExactVector) -> ExactVector {
        ExactVector {
            coeffs: self
                .coeffs
                .iter()
                .zip(&rhs.coeffs)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }
}

impl Neg for &ExactVector {
    type Output = ExactVector;
    fn neg(self) -> ExactVector {
        ExactVector { coeffs: self.coeffs.iter().map(|row| row.iter().map(|c| -c).collect()).collect() }
    }
}

impl fmt::Display for ExactVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<String> = self
            .coeffs
            .iter()
            .map(|row| row.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "))
            .collect();
        write!(f, "[{}]", rows.join("; "))
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    match (r.numer().to_f64(), r.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Huge numerator/denominator: scale down before dividing.
            let shift = r.numer().bits().max(r.denom().bits()).saturating_sub(900);
            let n = (r.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (r.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
            n / d
        }
    }
}

pub fn rational_from_int(x: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

/// Parse `"p"`, `"p/q"` or a terminating decimal such as `"-0.25"`.
pub fn parse_rational(s: &str) -> Result<BigRational, ExactError> {
    let t = s.trim();
    let bad = || ExactError::BadRational(s.to_string());
    if let Some((p, q)) = t.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = t.split_once('.') {
        let neg = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !frac.chars().all(|c| c.is_ascii_digit()) || !int_digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits = format!("{}{}", if int_digits.is_empty() { "0" } else { int_digits }, frac);
        let mut n: BigInt = digits.parse().map_err(|_| bad())?;
        if neg {
            n = -n;
        }
        let d = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(BigRational::new(n, d));
    }
    let n: BigInt = t.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

/// Exact rank of a rational matrix (rows × cols) by fraction-exact Gaussian elimination.
pub fn exact_rank(rows: &[Vec<BigRational>]) -> usize {
    let mut m: Vec<Vec<BigRational>> = rows.to_vec();
    let ncols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..m.len()).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank][col].clone();
        for r in (rank + 1)..m.len() {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = &m[r][col] / &pivot;
            for c in col..ncols {
                let delta = &factor * &m[rank][c];
                m[r][c] -= delta;
            }
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> BigRational {
        parse_rational(s).unwrap()
    }

    #[test]
    fn parses_forms() {
        assert_eq!(q("3"), rational_from_int(3));
        assert_eq!(q("-1/2"), BigRational::new((-1).into(), 2.into()));
        assert_eq!(q("0.25"), BigRational::new(1.into(), 4.into()));
        assert_eq!(q("-1.5"), BigRational::new((-3).into(), 2.into()));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn basis_validation() {
        assert!(SymbolBasis::new([("1", 1.0), ("s2", 2f64.sqrt())]).is_ok());
        assert!(matches!(SymbolBasis::new([("s2", 1.4)]), Err(ExactError::MissingUnit { .. })));
        assert!(matches!(
            SymbolBasis::new([("1", 1.0), ("a", 2.0), ("a", 3.0)]),
            Err(ExactError::DuplicateSymbol(_))
        ));
        assert!(matches!(SymbolBasis::new(Vec::<(String, f64)>::new()), Err(ExactError::EmptyBasis)));
    }

    #[test]
    fn irrational_components_compare_exactly() {
        let basis = SymbolBasis::with_unit([("s2", 2f64.sqrt())]).unwrap();
        let a = ExactVector::from_coeffs(vec![vec![q("1"), q("1")]]);
        let b = ExactVector::from_coeffs(vec![vec![q("0"), q("1")]]);
        let c = ExactVector::from_coeffs(vec![vec![q("1"), q("0")]]);
        assert_eq!(&(&a - &b) - &c, ExactVector::zero(1, 2));
        assert!((a.eval(&basis)[0] - (1.0 + 2f64.sqrt())).abs() < 1e-15);
        assert_eq!(a.render(&basis), "(1 + s2)");
        assert_eq!((-&b).render(&basis), "(-s2)");
    }

    #[test]
    fn rank_examples() {
        let m = vec![vec![q("1"), q("2")], vec![q("2"), q("4")]];
        assert_eq!(exact_rank(&m), 1);
        let m = vec![vec![q("1"), q("0")], vec![q("0"), q("1")]];
        assert_eq!(exact_rank(&m), 2);
        assert_eq!(exact_rank(&[vec![q("0"), q("0")]]), 0);
    }
}
