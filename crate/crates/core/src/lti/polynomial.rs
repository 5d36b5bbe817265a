use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Real polynomial in `s`, stored in ascending degree order: `coeffs[i]` multiplies `s^i`.
///
/// Trailing (highest-degree) zeros are trimmed on construction, so the leading
/// coefficient is nonzero unless the polynomial is the single-element zero polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn zero() -> Self {
        Self { coeffs: vec![0.0] }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![c])
    }

    /// Monic polynomial with the given roots. Complex roots are expected in
    /// conjugate pairs; the imaginary residue of the expansion is dropped.
    pub fn from_roots(roots: &[Complex64]) -> Self {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (i, &c) in acc.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= c * r;
            }
            acc = next;
        }
        Self::new(acc.into_iter().map(|c| c.re).collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0] == 0.0
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    /// Coefficient of `s^i`, zero past the degree.
    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    /// Sum of absolute coefficient values.
    pub fn norm1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Sum of `|c_i| * |z|^i`, the natural scale for rounding error in `eval_complex(z)`.
    pub fn magnitude_scale(&self, z: Complex64) -> f64 {
        let r = z.norm();
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * r + c.abs())
    }

    /// `p(s/a)`: coefficient `i` is divided by `a^i`.
    pub fn substitute_scaled(&self, a: f64) -> Self {
        let mut f = 1.0;
        let coeffs = self
            .coeffs
            .iter()
            .map(|&c| {
                let v = c * f;
                f /= a;
                v
            })
            .collect();
        Self::new(coeffs)
    }

    /// Roots with multiplicity.
    ///
    /// Zero roots are split off exactly; low degrees use closed forms and higher
    /// degrees the eigenvalues of the companion matrix, polished by Newton steps.
    pub fn roots(&self) -> Vec<Complex64> {
        if self.degree() == 0 {
            return Vec::new();
        }
        let zeros_at_origin = self.coeffs.iter().take_while(|&&c| c == 0.0).count();
        let mut out = vec![Complex64::new(0.0, 0.0); zeros_at_origin];
        let reduced = Polynomial::new(self.coeffs[zeros_at_origin..].to_vec());
        let lead = reduced.leading();
        let monic: Vec<f64> = reduced.coeffs.iter().map(|c| c / lead).collect();
        match reduced.degree() {
            0 => {}
            1 => out.push(Complex64::new(-monic[0], 0.0)),
            2 => out.extend(quadratic_roots(monic[1], monic[0])),
            n => {
                let mut companion = DMatrix::<f64>::zeros(n, n);
                for i in 1..n {
                    companion[(i, i - 1)] = 1.0;
                }
                for i in 0..n {
                    companion[(i, n - 1)] = -monic[i];
                }
                for r in companion.complex_eigenvalues().iter() {
                    out.push(reduced.polish_root(*r));
                }
            }
        }
        out
    }

    fn derivative(&self) -> Self {
        if self.degree() == 0 {
            return Self::zero();
        }
        Self::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as f64)
                .collect(),
        )
    }

    fn polish_root(&self, mut r: Complex64) -> Complex64 {
        let d = self.derivative();
        for _ in 0..3 {
            let f = self.eval_complex(r);
            let df = d.eval_complex(r);
            if df.norm() == 0.0 {
                break;
            }
            let next = r - f / df;
            if !next.re.is_finite() || !next.im.is_finite() {
                break;
            }
            if self.eval_complex(next).norm() >= f.norm() {
                break;
            }
            r = next;
        }
        r
    }
}

/// Roots of `s^2 + b s + c`, computed without catastrophic cancellation.
fn quadratic_roots(b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            return [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        }
        let r1 = q;
        let r2 = c / q;
        [Complex64::new(r1, 0.0), Complex64::new(r2, 0.0)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;

    fn add(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;

    fn sub(self, rhs: &Polynomial) -> Polynomial {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        Polynomial::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;

    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;

    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 && !(first && i == 0) {
                continue;
            }
            if !first {
                write!(f, " {} ", if c < 0.0 { '-' } else { '+' })?;
            } else if c < 0.0 {
                write!(f, "-")?;
            }
            let a = c.abs();
            match i {
                0 => write!(f, "{a}")?,
                1 if a == 1.0 => write!(f, "s")?,
                1 => write!(f, "{a}s")?,
                _ if a == 1.0 => write!(f, "s^{i}")?,
                _ => write!(f, "{a}s^{i}")?,
            }
            first = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted(mut r: Vec<Complex64>) -> Vec<Complex64> {
        r.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        r
    }

    #[test]
    fn trims_trailing_zeros() {
        let p = Polynomial::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.coeffs(), &[1.0, 2.0]);
        assert_eq!(p.degree(), 1);
        assert!(Polynomial::new(vec![]).is_zero());
        assert!(Polynomial::new(vec![0.0, 0.0]).is_zero());
    }

    #[test]
    fn arithmetic() {
        let a = Polynomial::new(vec![1.0, 1.0]);
        let b = Polynomial::new(vec![2.0, 1.0]);
        assert_eq!((&a * &b).coeffs(), &[2.0, 3.0, 1.0]);
        assert_eq!((&a + &b).coeffs(), &[3.0, 2.0]);
        assert_eq!((&a - &a).coeffs(), &[0.0]);
        assert_eq!(a.eval(2.0), 3.0);
    }

    #[test]
    fn roots_low_degree() {
        assert_eq!(Polynomial::new(vec![1.0, 1.0]).roots(), vec![Complex64::new(-1.0, 0.0)]);
        let r = sorted(Polynomial::new(vec![2.0, 3.0, 1.0]).roots());
        assert!((r[0].re + 2.0).abs() < 1e-12 && (r[1].re + 1.0).abs() < 1e-12);
        let r = sorted(Polynomial::new(vec![1.0, 1.0, 1.0]).roots());
        let im = 3f64.sqrt() / 2.0;
        assert!((r[0] - Complex64::new(-0.5, -im)).norm() < 1e-9);
        assert!((r[1] - Complex64::new(-0.5, im)).norm() < 1e-9);
    }

    #[test]
    fn roots_with_origin_and_companion() {
        // s^2 (s+1)(s+2)(s+3)
        let p = Polynomial::from_roots(&[
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(-2.0, 0.0),
            Complex64::new(-3.0, 0.0),
        ]);
        let r = sorted(p.roots());
        let expected = [-3.0, -2.0, -1.0, 0.0, 0.0];
        for (got, want) in r.iter().zip(expected) {
            assert!((got - Complex64::new(want, 0.0)).norm() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn scaled_substitution() {
        // (s + 1) at s/2 -> 0.5 s + 1
        let p = Polynomial::new(vec![1.0, 1.0]).substitute_scaled(2.0);
        assert_eq!(p.coeffs(), &[1.0, 0.5]);
    }

    #[test]
    fn display() {
        assert_eq!(Polynomial::new(vec![1.0, -3.0, 1.0]).to_string(), "s^2 - 3s + 1");
        assert_eq!(Polynomial::zero().to_string(), "0");
    }
}
