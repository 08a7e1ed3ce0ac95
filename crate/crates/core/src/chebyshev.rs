//! Piecewise Chebyshev interpolants with adaptive splitting.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    coeffs: Vec<f64>,
    deriv: Vec<f64>,
}

impl Piece {
    fn fit<F>(lo: f64, hi: f64, degree: usize, f: &mut F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let n = degree;
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let mut values = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let t = (std::f64::consts::PI * j as f64 / n as f64).cos();
            values.push(f(mid + half * t)?);
        }
        let mut coeffs = vec![0.0; n + 1];
        for (k, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for (j, v) in values.iter().enumerate() {
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s += w * v * (std::f64::consts::PI * (k * j) as f64 / n as f64).cos();
            }
            *c = 2.0 * s / n as f64;
        }
        coeffs[0] *= 0.5;
        coeffs[n] *= 0.5;
        let deriv = derivative_coeffs(&coeffs, half);
        Ok(Self {
            lo,
            hi,
            coeffs,
            deriv,
        })
    }

    fn t(&self, x: f64) -> f64 {
        (2.0 * x - self.lo - self.hi) / (self.hi - self.lo)
    }

    fn value(&self, x: f64) -> f64 {
        clenshaw(&self.coeffs, self.t(x))
    }

    fn slope(&self, x: f64) -> f64 {
        clenshaw(&self.deriv, self.t(x))
    }
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

// Coefficients of d/dx for x = mid + half * t.
fn derivative_coeffs(c: &[f64], half: f64) -> Vec<f64> {
    let n = c.len() - 1;
    let mut d = vec![0.0; n + 1];
    if n == 0 {
        return d;
    }
    d[n - 1] = 2.0 * n as f64 * c[n];
    for k in (1..n.saturating_sub(1) + 1).rev() {
        let next2 = if k < n { d[k + 1] } else { 0.0 };
        d[k - 1] = next2 + 2.0 * k as f64 * c[k];
    }
    d[0] *= 0.5;
    for v in &mut d {
        *v /= half;
    }
    d
}

/// Piecewise Chebyshev approximation of a smooth scalar function on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct ChebyshevTable {
    pieces: Vec<Piece>,
}

impl ChebyshevTable {
    /// Fit `f` on `[lo, hi]`, halving pieces until the interpolant matches `f`
    /// to `abs_tol` at the midpoints between nodes.
    pub fn build<F>(lo: f64, hi: f64, degree: usize, abs_tol: f64, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if !(hi > lo) {
            return Err(Error::InvalidInput(format!(
                "empty interpolation interval [{lo}, {hi}]"
            )));
        }
        let mut pieces = Vec::new();
        let mut stack = vec![(lo, hi, 0usize)];
        while let Some((a, b, depth)) = stack.pop() {
            let piece = Piece::fit(a, b, degree, &mut f)?;
            let mut worst: f64 = 0.0;
            for j in 0..degree {
                let t = (std::f64::consts::PI * (j as f64 + 0.5) / degree as f64).cos();
                let x = 0.5 * (a + b) + 0.5 * (b - a) * t;
                worst = worst.max((piece.value(x) - f(x)?).abs());
            }
            if worst <= abs_tol || depth >= 40 {
                pieces.push(piece);
            } else {
                let m = 0.5 * (a + b);
                // Pushed right first so pieces come out in ascending order.
                stack.push((m, b, depth + 1));
                stack.push((a, m, depth + 1));
            }
        }
        Ok(Self { pieces })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x >= lo && x <= hi
    }

    fn piece(&self, x: f64) -> &Piece {
        let idx = self.pieces.partition_point(|p| p.hi < x);
        &self.pieces[idx.min(self.pieces.len() - 1)]
    }

    pub fn value(&self, x: f64) -> f64 {
        self.piece(x).value(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.piece(x).slope(x)
    }

    pub fn pieces(&self) -> usize {
        self.pieces.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_smooth_function_and_derivative() {
        let t = ChebyshevTable::build(0.1, 3.0, 16, 1e-13, |x| Ok((3.0 * x).sin() / x)).unwrap();
        for i in 0..100 {
            let x = 0.1 + 2.9 * i as f64 / 99.0;
            let f = (3.0 * x).sin() / x;
            let df = (3.0 * (3.0 * x).cos() * x - (3.0 * x).sin()) / (x * x);
            assert!((t.value(x) - f).abs() < 1e-12);
            assert!((t.derivative(x) - df).abs() < 1e-9, "{x}");
        }
    }

    #[test]
    fn rejects_empty_interval() {
        assert!(ChebyshevTable::build(1.0, 1.0, 8, 1e-10, Ok).is_err());
    }
}
