//! Direct solvers for the small structured systems the implicit steppers
//! produce: tridiagonal (Thomas), periodic tridiagonal (Sherman-Morrison),
//! and periodic pentadiagonal (banded LU plus a low-rank Woodbury
//! correction for the wrap entries).

use num_complex::Complex64;

use crate::error::{CoreError, Result};

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(CoreError::NoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 {
            return Err(CoreError::NoConvergence {
                iterations: i,
                residual: f64::INFINITY,
            });
        }
        if i < n - 1 {
            c[i] = upper[i] / piv;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Complex Thomas algorithm.
pub fn solve_tridiagonal_complex(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    let mut c = vec![Complex64::default(); n];
    let mut d = vec![Complex64::default(); n];
    let mut piv = diag[0];
    if piv.norm_sqr() == 0.0 {
        return Err(CoreError::NoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv.norm_sqr() == 0.0 {
            return Err(CoreError::NoConvergence {
                iterations: i,
                residual: f64::INFINITY,
            });
        }
        if i < n - 1 {
            c[i] = upper[i] / piv;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] = d[i] - c[i] * d[i + 1];
    }
    Ok(d)
}

/// Periodic tridiagonal solve (corner entries `corner_lo = A[0][n-1]`,
/// `corner_hi = A[n-1][0]`) via Sherman-Morrison.
pub fn solve_cyclic_tridiagonal_complex(
    lower: &[Complex64],
    diag: &[Complex64],
    upper: &[Complex64],
    corner_lo: Complex64,
    corner_hi: Complex64,
    rhs: &[Complex64],
) -> Result<Vec<Complex64>> {
    let n = diag.len();
    if n < 3 {
        return Err(CoreError::Unsupported("cyclic solve needs n >= 3".into()));
    }
    // A = B + u v^T with u = gamma e_0 + corner_hi e_{n-1},
    // v = e_0 + (corner_lo / gamma) e_{n-1}.
    let gamma = -diag[0];
    let mut d2 = diag.to_vec();
    d2[0] -= gamma;
    d2[n - 1] -= corner_lo * corner_hi / gamma;

    let y = solve_tridiagonal_complex(lower, &d2, upper, rhs)?;
    let mut u = vec![Complex64::default(); n];
    u[0] = gamma;
    u[n - 1] = corner_hi;
    let z = solve_tridiagonal_complex(lower, &d2, upper, &u)?;

    let vy = y[0] + corner_lo / gamma * y[n - 1];
    let vz = z[0] + corner_lo / gamma * z[n - 1];
    let denom = Complex64::new(1.0, 0.0) + vz;
    if denom.norm_sqr() == 0.0 {
        return Err(CoreError::NoConvergence {
            iterations: 0,
            residual: f64::INFINITY,
        });
    }
    let factor = vy / denom;
    Ok(y.iter()
        .zip(&z)
        .map(|(&yi, &zi)| yi - factor * zi)
        .collect())
}

/// Real periodic tridiagonal solve.
pub fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    corner_lo: f64,
    corner_hi: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let conv =
        |s: &[f64]| -> Vec<Complex64> { s.iter().map(|&x| Complex64::new(x, 0.0)).collect() };
    let sol = solve_cyclic_tridiagonal_complex(
        &conv(lower),
        &conv(diag),
        &conv(upper),
        Complex64::new(corner_lo, 0.0),
        Complex64::new(corner_hi, 0.0),
        &conv(rhs),
    )?;
    Ok(sol.into_iter().map(|z| z.re).collect())
}

/// Dense-in-band matrix with half-bandwidth `bw` stored by diagonals:
/// `bands[k][i]` is entry `A[i][i + k - bw]`.
#[derive(Debug, Clone)]
pub struct Banded {
    pub n: usize,
    pub bw: usize,
    pub bands: Vec<Vec<f64>>,
}

impl Banded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Banded {
            n,
            bw,
            bands: vec![vec![0.0; n]; 2 * bw + 1],
        }
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let off = j as i64 - i as i64;
        debug_assert!(off.unsigned_abs() as usize <= self.bw);
        self.bands[(off + self.bw as i64) as usize][i] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let off = j as i64 - i as i64 + self.bw as i64;
        self.bands[off as usize][i]
    }

    /// LU factorization without pivoting (the implicit-step matrices are
    /// strongly diagonally dominant). Factors stored in place.
    pub fn lu(mut self) -> Result<BandedLu> {
        let n = self.n;
        let bw = self.bw;
        for k in 0..n {
            let piv = self.get(k, k);
            if piv.abs() < 1e-300 {
                return Err(CoreError::NoConvergence {
                    iterations: k,
                    residual: f64::INFINITY,
                });
            }
            for i in (k + 1)..(k + bw + 1).min(n) {
                let factor = self.get(i, k) / piv;
                if factor != 0.0 {
                    for j in k..(k + bw + 1).min(n) {
                        let v = self.get(k, j);
                        if v != 0.0 {
                            self.add(i, j, -factor * v);
                        }
                    }
                }
                let off = (k as i64 - i as i64 + bw as i64) as usize;
                self.bands[off][i] = factor;
            }
        }
        Ok(BandedLu { m: self })
    }
}

/// LU factors of a banded matrix; solves by forward/back substitution.
#[derive(Debug, Clone)]
pub struct BandedLu {
    m: Banded,
}

impl BandedLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.m.n;
        let bw = self.m.bw;
        let mut x = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..i {
                let l = self.m.get(i, j);
                if l != 0.0 {
                    x[i] -= l * x[j];
                }
            }
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            for j in (i + 1)..hi {
                let u = self.m.get(i, j);
                if u != 0.0 {
                    x[i] -= u * x[j];
                }
            }
            x[i] /= self.m.get(i, i);
        }
        x
    }
}

/// Solve `(B + sum_c w_c e_c^T) x = rhs` where `B` is banded and the
/// rank-correction columns `c` carry the periodic wrap entries.
/// `corrections`: (column index, dense column vector w_c).
pub fn solve_banded_with_corrections(
    b: &BandedLu,
    corrections: &[(usize, Vec<f64>)],
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let k = corrections.len();
    let y = b.solve(rhs);
    if k == 0 {
        return Ok(y);
    }
    // Woodbury: x = y - Z (I + C)^{-1} (V^T y), Z_j = B^{-1} w_j,
    // (V^T z)_j = z[col_j], C_ij = Z_j[col_i].
    let z: Vec<Vec<f64>> = corrections.iter().map(|(_, w)| b.solve(w)).collect();
    let mut small = vec![vec![0.0; k]; k];
    let mut rhs_small = vec![0.0; k];
    for i in 0..k {
        let col_i = corrections[i].0;
        rhs_small[i] = y[col_i];
        for j in 0..k {
            small[i][j] = if i == j { 1.0 } else { 0.0 };
            small[i][j] += z[j][col_i];
        }
    }
    let alpha = solve_dense(&mut small, &mut rhs_small)?;
    let mut x = y;
    for (j, zj) in z.iter().enumerate() {
        for (xi, zv) in x.iter_mut().zip(zj) {
            *xi -= alpha[j] * zv;
        }
    }
    Ok(x)
}

/// Tiny dense Gaussian elimination with partial pivoting (Woodbury blocks).
fn solve_dense(a: &mut [Vec<f64>], rhs: &mut [f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let (pivot_row, pivot_val) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if pivot_val < 1e-300 {
            return Err(CoreError::NoConvergence {
                iterations: col,
                residual: f64::INFINITY,
            });
        }
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for r in (col + 1)..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                rhs[r] -= f * rhs[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = rhs[r];
        for c in (r + 1)..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thomas_solves_poisson_like_system() {
        let n = 16;
        let lower = vec![-1.0; n];
        let diag = vec![2.5; n];
        let upper = vec![-1.0; n];
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = 2.5 * x_true[i];
            if i > 0 {
                rhs[i] -= x_true[i - 1];
            }
            if i < n - 1 {
                rhs[i] -= x_true[i + 1];
            }
        }
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_solver_matches_direct_residual() {
        let n = 12;
        let lower = vec![-0.7; n];
        let diag = vec![3.0; n];
        let upper = vec![-0.4; n];
        let (clo, chi) = (-0.4, -0.7);
        let x_true: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64).cos()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            rhs[i] = diag[i] * x_true[i]
                + if i > 0 {
                    lower[i] * x_true[i - 1]
                } else {
                    clo * x_true[n - 1]
                }
                + if i < n - 1 {
                    upper[i] * x_true[i + 1]
                } else {
                    chi * x_true[0]
                };
        }
        let x = solve_cyclic_tridiagonal(&lower, &diag, &upper, clo, chi, &rhs).unwrap();
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-11, "i={i}");
        }
    }

    #[test]
    fn banded_lu_solves_pentadiagonal() {
        let n = 20;
        let mut m = Banded::zeros(n, 2);
        for i in 0..n {
            m.add(i, i, 4.0);
            if i >= 1 {
                m.add(i, i - 1, -1.0);
            }
            if i >= 2 {
                m.add(i, i - 2, -0.5);
            }
            if i + 1 < n {
                m.add(i, i + 1, -1.2);
            }
            if i + 2 < n {
                m.add(i, i + 2, -0.3);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| (i as f64 * 0.17).cos()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(n);
            for j in lo..hi {
                rhs[i] += m.get(i, j) * x_true[j];
            }
        }
        let lu = m.lu().unwrap();
        let x = lu.solve(&rhs);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn woodbury_handles_periodic_wrap() {
        // Full matrix: banded part plus wrap entries in columns 0 and n-1.
        let n = 10;
        let mut b = Banded::zeros(n, 2);
        for i in 0..n {
            b.add(i, i, 5.0);
            if i >= 1 {
                b.add(i, i - 1, -1.0);
            }
            if i + 1 < n {
                b.add(i, i + 1, -1.0);
            }
        }
        // Wrap: A[0][n-1] = -1, A[n-1][0] = -1.
        let mut w_last = vec![0.0; n];
        w_last[0] = -1.0; // column n-1 gets -1 in row 0
        let mut w_first = vec![0.0; n];
        w_first[n - 1] = -1.0; // column 0 gets -1 in row n-1
        let x_true: Vec<f64> = (0..n).map(|i| 0.5 + (i as f64 * 0.41).sin()).collect();
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                let off = j as i64 - i as i64;
                let mut a = if off.abs() <= 2 { b.get(i, j) } else { 0.0 };
                if i == 0 && j == n - 1 {
                    a += -1.0;
                }
                if i == n - 1 && j == 0 {
                    a += -1.0;
                }
                rhs[i] += a * x_true[j];
            }
        }
        let lu = b.lu().unwrap();
        let x = solve_banded_with_corrections(&lu, &[(n - 1, w_last), (0, w_first)], &rhs).unwrap();
        for i in 0..n {
            assert!(
                (x[i] - x_true[i]).abs() < 1e-11,
                "i={i} {} {}",
                x[i],
                x_true[i]
            );
        }
    }
}
