use nalgebra::DMatrix;

use super::{LtiError, Polynomial, TransferFunction};

/// Continuous-time state-space model `x' = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpace {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self, LtiError> {
        let n = a.nrows();
        let consistent =
            a.ncols() == n && b.nrows() == n && c.ncols() == n && d.nrows() == c.nrows() && d.ncols() == b.ncols();
        if !consistent {
            return Err(LtiError::DimensionMismatch(format!(
                "A {}x{}, B {}x{}, C {}x{}, D {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// Transfer function of a SISO model via Faddeev-LeVerrier:
    /// `det(sI - A)` and `C adj(sI - A) B + D det(sI - A)`.
    ///
    /// No cancellation is applied to the coefficients before normalization,
    /// so a minimal realization maps back coefficient-for-coefficient.
    pub fn to_transfer_function(&self) -> Result<TransferFunction, LtiError> {
        if self.b.ncols() != 1 || self.c.nrows() != 1 {
            return Err(LtiError::DimensionMismatch(
                "transfer function needs a SISO model".into(),
            ));
        }
        let n = self.order();
        let identity = DMatrix::<f64>::identity(n, n);
        let mut char_poly = vec![0.0; n + 1];
        char_poly[n] = 1.0;
        let mut num = vec![0.0; n + 1];
        let mut m = DMatrix::<f64>::zeros(n, n);
        for k in 1..=n {
            m = &self.a * &m + &identity * char_poly[n - k + 1];
            // adj(sI - A) = sum_k M_k s^(n-k)
            num[n - k] = (&self.c * &m * &self.b)[(0, 0)];
            char_poly[n - k] = -(&self.a * &m).trace() / k as f64;
        }
        let d = self.d[(0, 0)];
        for (ni, ci) in num.iter_mut().zip(&char_poly) {
            *ni += d * ci;
        }
        TransferFunction::new(Polynomial::new(num), Polynomial::new(char_poly))
    }

    /// Exact zero-order-hold discretization over `dt`:
    /// `(e^{A dt}, ∫_0^dt e^{A σ} dσ B)` from one exponential of the augmented matrix.
    pub fn zoh(&self, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.order();
        let m = self.b.ncols();
        let mut aug = DMatrix::<f64>::zeros(n + m, n + m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(&self.a * dt));
        aug.view_mut((0, n), (n, m)).copy_from(&(&self.b * dt));
        let e = aug.exp();
        (e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned())
    }
}
