//! Double-double arithmetic for the small dense factorizations behind nuisance
//! elimination.
//!
//! Information matrices here mix a huge bulk-phase term with tiny curvature
//! terms, so a plain f64 Schur complement or Cholesky inverse loses most of
//! the digits that survive elimination. Values are carried as an unevaluated
//! sum `hi + lo` with `|lo| <= ulp(hi)/2`, giving roughly 106 bits.

use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub(crate) const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    pub(crate) fn from_f64(v: f64) -> Self {
        Dd { hi: v, lo: 0.0 }
    }

    pub(crate) fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub(crate) fn hi(self) -> f64 {
        self.hi
    }

    pub(crate) fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::ZERO;
        }
        let x = Dd::from_f64(self.hi.sqrt());
        // One Newton step doubles the number of correct bits.
        x + (self - x * x) / (x + x)
    }
}

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        Dd { hi, lo }
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        self + (-o)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Dd { hi, lo }
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r = self - o * Dd::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * Dd::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        Dd { hi, lo } + Dd::from_f64(q3)
    }
}

/// Square matrix of double-doubles, row-major.
#[derive(Debug, Clone)]
pub(crate) struct DdMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<Dd>,
}

impl DdMatrix {
    pub(crate) fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![Dd::ZERO; n_rows * n_cols],
        }
    }

    pub(crate) fn from_f64(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                out.set(i, j, Dd::from_f64(m[(i, j)]));
            }
        }
        out
    }

    pub(crate) fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows, self.n_cols, |i, j| self.get(i, j).to_f64())
    }

    #[inline]
    pub(crate) fn get(&self, i: usize, j: usize) -> Dd {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize, v: Dd) {
        self.data[i * self.n_cols + j] = v;
    }

    pub(crate) fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    /// Inverse of a symmetric positive-definite matrix via Cholesky.
    /// `None` when a pivot is not positive.
    pub(crate) fn spd_inverse(&self) -> Option<Self> {
        let n = self.n_rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self.get(j, j);
            for k in 0..j {
                d = d - l.get(j, k) * l.get(j, k);
            }
            if d.hi().is_nan() || d.hi() <= 0.0 || d.hi().is_infinite() {
                return None;
            }
            let ljj = d.sqrt();
            l.set(j, j, ljj);
            for i in (j + 1)..n {
                let mut v = self.get(i, j);
                for k in 0..j {
                    v = v - l.get(i, k) * l.get(j, k);
                }
                l.set(i, j, v / ljj);
            }
        }
        // W = L⁻¹ (lower triangular), then A⁻¹ = Wᵀ W.
        let mut w = Self::zeros(n, n);
        for c in 0..n {
            for i in c..n {
                let mut v = if i == c { Dd::from_f64(1.0) } else { Dd::ZERO };
                for k in c..i {
                    v = v - l.get(i, k) * w.get(k, c);
                }
                w.set(i, c, v / l.get(i, i));
            }
        }
        let mut inv = Self::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let mut v = Dd::ZERO;
                for k in j..n {
                    v = v + w.get(k, i) * w.get(k, j);
                }
                inv.set(i, j, v);
                inv.set(j, i, v);
            }
        }
        Some(inv)
    }

    /// `self - b * c * bᵀ`, symmetric result.
    pub(crate) fn minus_congruence(&self, b: &Self, c: &Self) -> Self {
        let (n, m) = (b.n_rows, b.n_cols);
        // bc = b * c
        let mut bc = Self::zeros(n, m);
        for i in 0..n {
            for j in 0..m {
                let mut v = Dd::ZERO;
                for k in 0..m {
                    v = v + b.get(i, k) * c.get(k, j);
                }
                bc.set(i, j, v);
            }
        }
        let mut out = self.clone();
        for i in 0..n {
            for j in i..n {
                let mut v = Dd::ZERO;
                for k in 0..m {
                    v = v + bc.get(i, k) * b.get(j, k);
                }
                let mean = Dd {
                    hi: 0.5 * (self.get(i, j).hi + self.get(j, i).hi),
                    lo: 0.5 * (self.get(i, j).lo + self.get(j, i).lo),
                };
                let s = mean - v;
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_bits_lost_in_f64() {
        let big = Dd::from_f64(1e16);
        let one = Dd::from_f64(1.0);
        let s = (big + one) - big;
        assert_eq!(s.to_f64(), 1.0);
        assert_eq!((1e16 + 1.0) - 1e16, 0.0);
    }

    #[test]
    fn division_and_sqrt() {
        let third = Dd::from_f64(1.0) / Dd::from_f64(3.0);
        let back = third * Dd::from_f64(3.0) - Dd::from_f64(1.0);
        assert!(back.to_f64().abs() < 1e-30);
        let r = Dd::from_f64(2.0).sqrt();
        assert!((r * r - Dd::from_f64(2.0)).to_f64().abs() < 1e-30);
    }

    #[test]
    fn ill_conditioned_inverse() {
        // Hilbert matrix of order 8 has condition ~1.5e10.
        let n = 8;
        let h = DMatrix::from_fn(n, n, |i, j| 1.0 / (i + j + 1) as f64);
        let inv = DdMatrix::from_f64(&h).spd_inverse().unwrap();
        // Residual H·H⁻¹ - I evaluated in double-double.
        let hd = DdMatrix::from_f64(&h);
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let mut v = if i == j { -Dd::from_f64(1.0) } else { Dd::ZERO };
                for k in 0..n {
                    v = v + hd.get(i, k) * inv.get(k, j);
                }
                worst = worst.max(v.to_f64().abs());
            }
        }
        assert!(worst < 1e-18, "residual {worst:e}");
    }

    #[test]
    fn indefinite_matrix_has_no_cholesky() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(DdMatrix::from_f64(&m).spd_inverse().is_none());
    }
}
