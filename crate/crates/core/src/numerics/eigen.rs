//! Eigenvalues of real nonsymmetric matrices: elimination to upper
//! Hessenberg form followed by Francis double-shift QR sweeps.

use crate::error::{Result, WmsError};
use crate::numerics::Matrix;

/// Strict Schur-stability margin: stable means `ρ < 1 - SCHUR_MARGIN`.
pub const SCHUR_MARGIN: f64 = 1e-9;

/// 1-based square work array, so the sweep below reads like the textbook
/// recurrences it implements.
struct Work {
    n: usize,
    a: Vec<f64>,
}

impl Work {
    fn from(m: &Matrix) -> Self {
        let n = m.rows();
        let mut a = vec![0.0; (n + 1) * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                a[(i + 1) * (n + 1) + j + 1] = m.get(i, j);
            }
        }
        Work { n, a }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.n + 1) + j]
    }

    #[inline]
    fn put(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * (self.n + 1) + j] = v;
    }

    /// Gaussian elimination with pivoting to upper Hessenberg form.
    fn hessenberg(&mut self) {
        let n = self.n;
        for m in 2..n {
            let mut x: f64 = 0.0;
            let mut piv = m;
            for j in m..=n {
                if self.at(j, m - 1).abs() > x.abs() {
                    x = self.at(j, m - 1);
                    piv = j;
                }
            }
            if piv != m {
                for j in (m - 1)..=n {
                    let t = self.at(piv, j);
                    self.put(piv, j, self.at(m, j));
                    self.put(m, j, t);
                }
                for j in 1..=n {
                    let t = self.at(j, piv);
                    self.put(j, piv, self.at(j, m));
                    self.put(j, m, t);
                }
            }
            if x != 0.0 {
                for i in (m + 1)..=n {
                    let mut y = self.at(i, m - 1);
                    if y != 0.0 {
                        y /= x;
                        self.put(i, m - 1, y);
                        for j in m..=n {
                            self.put(i, j, self.at(i, j) - y * self.at(m, j));
                        }
                        for j in 1..=n {
                            self.put(j, m, self.at(j, m) + y * self.at(j, i));
                        }
                    }
                }
            }
        }
        // multipliers were parked below the subdiagonal
        for i in 1..=n {
            for j in 1..i.saturating_sub(1) {
                self.put(i, j, 0.0);
            }
        }
    }
}

/// Eigenvalues as `(re, im)` pairs, in no particular order.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<(f64, f64)>> {
    if !a.is_square() {
        return Err(WmsError::NotSquare {
            rows: a.rows(),
            cols: a.cols(),
        });
    }
    if !a.is_finite() {
        return Err(WmsError::NonFinite);
    }
    let n = a.rows();
    let mut w = Work::from(a);
    w.hessenberg();

    let max_iterations = 100 * n;
    let mut total_its = 0usize;
    let mut wr = vec![0.0; n + 1];
    let mut wi = vec![0.0; n + 1];

    let mut anorm = 0.0;
    for i in 1..=n {
        for j in i.saturating_sub(1).max(1)..=n {
            anorm += w.at(i, j).abs();
        }
    }

    let mut nn = n;
    let mut t = 0.0;
    while nn >= 1 {
        let mut its = 0;
        loop {
            // look for a single small subdiagonal element
            let mut l = nn;
            while l >= 2 {
                let mut s = w.at(l - 1, l - 1).abs() + w.at(l, l).abs();
                if s == 0.0 {
                    s = anorm;
                }
                if w.at(l, l - 1).abs() + s == s {
                    w.put(l, l - 1, 0.0);
                    break;
                }
                l -= 1;
            }
            let l = l.max(1);
            let mut x = w.at(nn, nn);
            if l == nn {
                // one root found
                wr[nn] = x + t;
                wi[nn] = 0.0;
                nn -= 1;
                break;
            }
            let mut y = w.at(nn - 1, nn - 1);
            let mut ww = w.at(nn, nn - 1) * w.at(nn - 1, nn);
            if l == nn - 1 {
                // two roots found
                let p = 0.5 * (y - x);
                let q = p * p + ww;
                let mut z = q.abs().sqrt();
                x += t;
                if q >= 0.0 {
                    z = p + z.copysign(p);
                    wr[nn - 1] = x + z;
                    wr[nn] = x + z;
                    if z != 0.0 {
                        wr[nn] = x - ww / z;
                    }
                    wi[nn - 1] = 0.0;
                    wi[nn] = 0.0;
                } else {
                    wr[nn - 1] = x + p;
                    wr[nn] = x + p;
                    wi[nn - 1] = -z;
                    wi[nn] = z;
                }
                nn = nn.saturating_sub(2);
                break;
            }
            if total_its >= max_iterations {
                return Err(WmsError::NoConvergence {
                    iterations: total_its,
                });
            }
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 1..=nn {
                    w.put(i, i, w.at(i, i) - x);
                }
                let s = w.at(nn, nn - 1).abs() + w.at(nn - 1, nn - 2).abs();
                x = 0.75 * s;
                y = x;
                ww = -0.4375 * s * s;
            }
            its += 1;
            total_its += 1;

            // form shift and look for two consecutive small subdiagonals
            let mut m = nn - 2;
            let (mut p, mut q, mut r);
            loop {
                let z = w.at(m, m);
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - ww) / w.at(m + 1, m) + w.at(m, m + 1);
                q = w.at(m + 1, m + 1) - z - rr - ss;
                r = w.at(m + 2, m + 1);
                let s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                let u = w.at(m, m - 1).abs() * (q.abs() + r.abs());
                let v = p.abs() * (w.at(m - 1, m - 1).abs() + z.abs() + w.at(m + 1, m + 1).abs());
                if u + v == v {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nn {
                w.put(i, i - 2, 0.0);
                if i != m + 2 {
                    w.put(i, i - 3, 0.0);
                }
            }
            // double QR step on rows l..nn, columns m..nn
            let mut k = m;
            while k < nn {
                if k != m {
                    p = w.at(k, k - 1);
                    q = w.at(k + 1, k - 1);
                    r = if k != nn - 1 { w.at(k + 2, k - 1) } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x != 0.0 {
                        p /= x;
                        q /= x;
                        r /= x;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s != 0.0 {
                    if k == m {
                        if l != m {
                            w.put(k, k - 1, -w.at(k, k - 1));
                        }
                    } else {
                        w.put(k, k - 1, -s * x);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    let z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..=nn {
                        let mut pp = w.at(k, j) + q * w.at(k + 1, j);
                        if k != nn - 1 {
                            pp += r * w.at(k + 2, j);
                            w.put(k + 2, j, w.at(k + 2, j) - pp * z);
                        }
                        w.put(k + 1, j, w.at(k + 1, j) - pp * y);
                        w.put(k, j, w.at(k, j) - pp * x);
                    }
                    let mmin = nn.min(k + 3);
                    for i in l..=mmin {
                        let mut pp = x * w.at(i, k) + y * w.at(i, k + 1);
                        if k != nn - 1 {
                            pp += z * w.at(i, k + 2);
                            w.put(i, k + 2, w.at(i, k + 2) - pp * r);
                        }
                        w.put(i, k + 1, w.at(i, k + 1) - pp * q);
                        w.put(i, k, w.at(i, k) - pp);
                    }
                }
                k += 1;
            }
            if l >= nn - 1 {
                break;
            }
        }
    }
    Ok((1..=n).map(|i| (wr[i], wi[i])).collect())
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max))
}

/// `ρ(a) < 1 - SCHUR_MARGIN`.
pub fn is_schur_stable(a: &Matrix) -> Result<bool> {
    Ok(spectral_radius(a)? < 1.0 - SCHUR_MARGIN)
}
