use nalgebra::{DMatrix, DVector};

use crate::error::{dim_err, Result};
use crate::scalar::Real;

/// Agent data `(A, B, C, D, P, Q)`:
///
/// ```text
/// x' = A x + B u + P w0
/// z  = C x + D u + Q w0
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct AgentModel<T: Real> {
    pub a: DMatrix<T>,
    pub b: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub p: DMatrix<T>,
    pub q: DMatrix<T>,
}

impl<T: Real> AgentModel<T> {
    pub fn new(
        a: DMatrix<T>,
        b: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        p: DMatrix<T>,
        q: DMatrix<T>,
    ) -> Result<Self> {
        let m = Self { a, b, c, d, p, q };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if self.a.ncols() != n {
            return Err(dim_err(format!("A is {}x{}, must be square", n, self.a.ncols())));
        }
        let m = self.b.ncols();
        let q = self.c.nrows();
        let r = self.p.ncols();
        let check = |name: &str, mat: &DMatrix<T>, rows: usize, cols: usize| {
            if mat.shape() != (rows, cols) {
                Err(dim_err(format!("{name} is {:?}, expected ({rows}, {cols})", mat.shape())))
            } else {
                Ok(())
            }
        };
        check("B", &self.b, n, m)?;
        check("C", &self.c, q, n)?;
        check("D", &self.d, q, m)?;
        check("P", &self.p, n, r)?;
        check("Q", &self.q, q, r)?;
        Ok(())
    }

    /// State dimension `n`.
    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    /// Input dimension `m`.
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    /// Regulated output dimension `q`.
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Exosystem dimension `r`.
    pub fn exo_dim(&self) -> usize {
        self.p.ncols()
    }

    /// Entrywise sum with a perturbation of identical shape.
    pub fn offset_by(&self, delta: &AgentModel<T>) -> Result<Self> {
        if delta.a.shape() != self.a.shape()
            || delta.b.shape() != self.b.shape()
            || delta.c.shape() != self.c.shape()
            || delta.d.shape() != self.d.shape()
            || delta.p.shape() != self.p.shape()
            || delta.q.shape() != self.q.shape()
        {
            return Err(dim_err("perturbation shape differs from agent model"));
        }
        Ok(Self {
            a: &self.a + &delta.a,
            b: &self.b + &delta.b,
            c: &self.c + &delta.c,
            d: &self.d + &delta.d,
            p: &self.p + &delta.p,
            q: &self.q + &delta.q,
        })
    }

    /// All-zero model with the same shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            a: DMatrix::zeros(self.a.nrows(), self.a.ncols()),
            b: DMatrix::zeros(self.b.nrows(), self.b.ncols()),
            c: DMatrix::zeros(self.c.nrows(), self.c.ncols()),
            d: DMatrix::zeros(self.d.nrows(), self.d.ncols()),
            p: DMatrix::zeros(self.p.nrows(), self.p.ncols()),
            q: DMatrix::zeros(self.q.nrows(), self.q.ncols()),
        }
    }

    /// The six matrices in `A, B, C, D, P, Q` order.
    pub fn matrices(&self) -> [&DMatrix<T>; 6] {
        [&self.a, &self.b, &self.c, &self.d, &self.p, &self.q]
    }

    pub fn matrices_mut(&mut self) -> [&mut DMatrix<T>; 6] {
        [&mut self.a, &mut self.b, &mut self.c, &mut self.d, &mut self.p, &mut self.q]
    }

    /// Frobenius norm of the stacked data point.
    pub fn frobenius_norm(&self) -> T {
        self.matrices()
            .iter()
            .fold(T::zero(), |acc, m| acc + m.norm_squared())
            .sqrt()
    }
}

/// Autonomous signal generator `w0' = S0 w0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Exosystem<T: Real> {
    pub s0: DMatrix<T>,
    /// Initial state; `None` draws it at simulation start.
    pub w0: Option<DVector<T>>,
}

impl<T: Real> Exosystem<T> {
    pub fn new(s0: DMatrix<T>, w0: Option<DVector<T>>) -> Result<Self> {
        if !s0.is_square() {
            return Err(dim_err(format!("S0 is {}x{}, must be square", s0.nrows(), s0.ncols())));
        }
        if let Some(w) = &w0 {
            if w.len() != s0.nrows() {
                return Err(dim_err(format!("w0 has length {}, expected {}", w.len(), s0.nrows())));
            }
        }
        Ok(Self { s0, w0 })
    }

    pub fn dim(&self) -> usize {
        self.s0.nrows()
    }
}
