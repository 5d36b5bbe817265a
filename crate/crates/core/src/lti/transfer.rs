use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::{LtiError, Polynomial, StateSpace};

/// Relative root distance under which a numerator and denominator root cancel.
pub const CANCELLATION_TOLERANCE: f64 = 1e-8;

/// Stability threshold: a pole is stable when `re < -STABILITY_EPSILON * max(1, |p|)`.
pub const STABILITY_EPSILON: f64 = 1e-9;

/// SISO rational transfer function `num(s) / den(s)`.
///
/// Always held in reduced normalized form: common roots cancelled and `den` monic.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Polynomial,
    den: Polynomial,
}

impl TransferFunction {
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self, LtiError> {
        if den.is_zero() {
            return Err(LtiError::ZeroDenominator);
        }
        if num.coeffs().iter().chain(den.coeffs()).any(|c| !c.is_finite()) {
            return Err(LtiError::NonFinite);
        }
        if num.is_zero() {
            return Ok(Self {
                num,
                den: Polynomial::constant(1.0),
            });
        }
        let (num, den) = cancel_common_roots(num, den);
        let lead = den.leading();
        Ok(Self {
            num: num.scale(1.0 / lead),
            den: den.scale(1.0 / lead),
        })
    }

    /// Build from ascending coefficient slices.
    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self, LtiError> {
        Self::new(Polynomial::new(num.to_vec()), Polynomial::new(den.to_vec()))
    }

    pub fn gain(k: f64) -> Self {
        Self {
            num: Polynomial::constant(k),
            den: Polynomial::constant(1.0),
        }
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    /// `deg den - deg num`, negative when improper; `None` for the zero transfer function.
    pub fn relative_degree(&self) -> Option<isize> {
        if self.num.is_zero() {
            None
        } else {
            Some(self.den.degree() as isize - self.num.degree() as isize)
        }
    }

    pub fn is_proper(&self) -> bool {
        self.relative_degree().is_none_or(|r| r >= 0)
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.relative_degree().is_none_or(|r| r >= 1)
    }

    /// Value at an arbitrary complex point.
    pub fn eval_s(&self, s: Complex64) -> Result<Complex64, LtiError> {
        let d = self.den.eval_complex(s);
        let threshold = 64.0 * f64::EPSILON * self.den.magnitude_scale(s);
        if d.norm() <= threshold {
            return Err(LtiError::PoleOnImaginaryAxis { omega: s.im });
        }
        Ok(self.num.eval_complex(s) / d)
    }

    /// Frequency response `num(jω)/den(jω)`.
    pub fn evaluate(&self, omega: f64) -> Result<Complex64, LtiError> {
        if !(omega >= 0.0) || !omega.is_finite() {
            return Err(LtiError::InvalidFrequency(omega));
        }
        self.eval_s(Complex64::new(0.0, omega))
    }

    /// Cascade `self * other`, reduced.
    pub fn series(&self, other: &TransferFunction) -> Result<Self, LtiError> {
        Self::new(&self.num * &other.num, &self.den * &other.den)
    }

    /// Unity negative feedback around `plant * controller`: `PC / (1 + PC)`.
    pub fn closed_loop(plant: &TransferFunction, controller: &TransferFunction) -> Result<Self, LtiError> {
        let open_num = &plant.num * &controller.num;
        let open_den = &plant.den * &controller.den;
        let char_poly = &open_den + &open_num;
        let scale = open_den.norm1().max(open_num.norm1());
        if char_poly.is_zero() || char_poly.norm1() <= 64.0 * f64::EPSILON * scale {
            return Err(LtiError::DegenerateLoop);
        }
        Self::new(open_num, char_poly)
    }

    /// Roots of the denominator, with multiplicity.
    pub fn poles(&self) -> Vec<Complex64> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        if self.num.is_zero() {
            Vec::new()
        } else {
            self.num.roots()
        }
    }

    /// All poles strictly in the open left half plane; marginal poles count as unstable.
    pub fn is_hurwitz_stable(&self) -> bool {
        self.poles()
            .iter()
            .all(|p| p.re < -STABILITY_EPSILON * p.norm().max(1.0))
    }

    /// Static gain `T(0)`, `None` when there is a pole at the origin.
    pub fn dc_gain(&self) -> Option<f64> {
        let d = self.den.coeff(0);
        if d == 0.0 {
            None
        } else {
            Some(self.num.coeff(0) / d)
        }
    }

    /// `T(s/a)`: stretches the frequency axis by `a`.
    pub fn scale_frequency(&self, a: f64) -> Result<Self, LtiError> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(LtiError::InvalidScale(a));
        }
        Self::new(self.num.substitute_scaled(a), self.den.substitute_scaled(a))
    }

    /// Controllable canonical realization.
    ///
    /// With `den = a_0 + a_1 s + ... + s^n` and `num = b_0 + ... + b_n s^n`:
    /// `A` has ones on the superdiagonal and `-a_0 .. -a_{n-1}` on the last row,
    /// `B = e_n`, `D = b_n` and `C_i = b_i - a_i D`.
    pub fn to_state_space(&self) -> Result<StateSpace, LtiError> {
        if !self.is_proper() {
            return Err(LtiError::ImproperTransferFunction {
                num_degree: self.num.degree(),
                den_degree: self.den.degree(),
            });
        }
        let n = self.den.degree();
        let d = self.num.coeff(n);
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n.saturating_sub(1) {
            a[(i, i + 1)] = 1.0;
        }
        for j in 0..n {
            a[(n - 1, j)] = -self.den.coeff(j);
        }
        let mut b = DMatrix::<f64>::zeros(n, 1);
        if n > 0 {
            b[(n - 1, 0)] = 1.0;
        }
        let c = DMatrix::<f64>::from_fn(1, n, |_, j| self.num.coeff(j) - self.den.coeff(j) * d);
        StateSpace::new(a, b, c, DMatrix::from_element(1, 1, d))
    }
}

impl fmt::Display for TransferFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) / ({})", self.num, self.den)
    }
}

fn cancel_common_roots(num: Polynomial, den: Polynomial) -> (Polynomial, Polynomial) {
    if num.degree() == 0 || den.degree() == 0 {
        return (num, den);
    }
    let zeros = num.roots();
    let poles = den.roots();
    let mut zero_used = vec![false; zeros.len()];
    let mut pole_used = vec![false; poles.len()];
    let mut cancelled = false;
    for (i, z) in zeros.iter().enumerate() {
        let best = poles
            .iter()
            .enumerate()
            .filter(|(j, _)| !pole_used[*j])
            .map(|(j, p)| (j, (z - p).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        if let Some((j, dist)) = best {
            if dist <= CANCELLATION_TOLERANCE * z.norm().max(1.0) {
                zero_used[i] = true;
                pole_used[j] = true;
                cancelled = true;
            }
        }
    }
    if !cancelled {
        return (num, den);
    }
    let kept_zeros: Vec<Complex64> = zeros
        .iter()
        .zip(&zero_used)
        .filter(|(_, used)| !**used)
        .map(|(z, _)| *z)
        .collect();
    let kept_poles: Vec<Complex64> = poles
        .iter()
        .zip(&pole_used)
        .filter(|(_, used)| !**used)
        .map(|(p, _)| *p)
        .collect();
    (
        Polynomial::from_roots(&kept_zeros).scale(num.leading()),
        Polynomial::from_roots(&kept_poles).scale(den.leading()),
    )
}
