//! Symmetric 3x3 matrices and the handful of dense 3x3 helpers the tensor
//! kernels need.  Symmetric data is stored packed (11, 12, 13, 22, 23, 33).

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Neg, Sub};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Packed index of entry (i, j), i, j in 0..3.
const IDX: [[usize; 3]; 3] = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SymMat3 {
    pub m: [f64; 6],
}

impl SymMat3 {
    pub const ZERO: SymMat3 = SymMat3 { m: [0.0; 6] };

    pub fn new(m: [f64; 6]) -> Self {
        SymMat3 { m }
    }

    pub fn identity() -> Self {
        SymMat3 {
            m: [1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
        }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        SymMat3 {
            m: [a, 0.0, 0.0, b, 0.0, c],
        }
    }

    pub fn from_fn(mut f: impl FnMut(usize, usize) -> f64) -> Self {
        SymMat3 {
            m: [f(0, 0), f(0, 1), f(0, 2), f(1, 1), f(1, 2), f(2, 2)],
        }
    }

    /// Symmetrize an arbitrary 3x3 matrix.
    pub fn from_mat(a: &Mat3) -> Self {
        SymMat3::from_fn(|i, j| 0.5 * (a[i][j] + a[j][i]))
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.m[IDX[i][j]]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.m[IDX[i][j]] = v;
    }

    pub fn to_mat(&self) -> Mat3 {
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                a[i][j] = self.get(i, j);
            }
        }
        a
    }

    pub fn trace(&self) -> f64 {
        self.m[0] + self.m[3] + self.m[5]
    }

    pub fn det(&self) -> f64 {
        let [a, b, c, d, e, f] = self.m;
        a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c)
    }

    /// Classical adjugate; adj(A) * A = det(A) * I.  Symmetric for symmetric A.
    pub fn adjugate(&self) -> SymMat3 {
        let [a, b, c, d, e, f] = self.m;
        SymMat3 {
            m: [
                d * f - e * e,
                c * e - b * f,
                b * e - c * d,
                a * f - c * c,
                b * c - a * e,
                a * d - b * b,
            ],
        }
    }

    pub fn inverse(&self) -> Option<SymMat3> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(self.adjugate() * (1.0 / det))
    }

    /// Sylvester criterion on the leading principal minors.
    pub fn is_spd(&self) -> bool {
        let [a, b, c, d, e, f] = self.m;
        a > 0.0 && (a * d - b * b) > 0.0 && self.det() > 0.0 && f.is_finite() && c.is_finite() && e.is_finite()
    }

    /// Lower-triangular L with L L^T = self, for SPD input.
    pub fn cholesky(&self) -> Option<Mat3> {
        if !self.is_spd() {
            return None;
        }
        let a = self.to_mat();
        let mut l = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..=i {
                let mut s = a[i][j];
                for k in 0..j {
                    s -= l[i][k] * l[j][k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i][j] = s.sqrt();
                } else {
                    l[i][j] = s / l[j][j];
                }
            }
        }
        Some(l)
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Bilinear form value x^T A y.
    pub fn quad(&self, x: &Vec3, y: &Vec3) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += x[i] * self.get(i, j) * y[j];
            }
        }
        s
    }

    /// Matrix-vector product A x.
    pub fn mul_vec(&self, x: &Vec3) -> Vec3 {
        let mut y = [0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                y[i] += self.get(i, j) * x[j];
            }
        }
        y
    }

    /// Full contraction A : B = A_ij B_ij.
    pub fn dot(&self, other: &SymMat3) -> f64 {
        let mut s = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                s += self.get(i, j) * other.get(i, j);
            }
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|v| v.is_finite())
    }
}

impl Add for SymMat3 {
    type Output = SymMat3;
    fn add(self, rhs: SymMat3) -> SymMat3 {
        let mut m = self.m;
        for k in 0..6 {
            m[k] += rhs.m[k];
        }
        SymMat3 { m }
    }
}

impl Sub for SymMat3 {
    type Output = SymMat3;
    fn sub(self, rhs: SymMat3) -> SymMat3 {
        let mut m = self.m;
        for k in 0..6 {
            m[k] -= rhs.m[k];
        }
        SymMat3 { m }
    }
}

impl Mul<f64> for SymMat3 {
    type Output = SymMat3;
    fn mul(self, s: f64) -> SymMat3 {
        let mut m = self.m;
        for k in 0..6 {
            m[k] *= s;
        }
        SymMat3 { m }
    }
}

impl Neg for SymMat3 {
    type Output = SymMat3;
    fn neg(self) -> SymMat3 {
        self * -1.0
    }
}

// ---- dense 3x3 helpers -----------------------------------------------------

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn mat_vec(a: &Mat3, x: &Vec3) -> Vec3 {
    let mut y = [0.0; 3];
    for i in 0..3 {
        for j in 0..3 {
            y[i] += a[i][j] * x[j];
        }
    }
    y
}

pub fn mat_transpose(a: &Mat3) -> Mat3 {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = a[j][i];
        }
    }
    t
}

pub fn mat_det(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

pub fn mat_trace(a: &Mat3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn mat_inv(a: &Mat3) -> Option<Mat3> {
    let det = mat_det(a);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let inv_det = 1.0 / det;
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let r = [(i + 1) % 3, (i + 2) % 3];
            let c = [(j + 1) % 3, (j + 2) % 3];
            // cofactor expansion, transposed
            inv[j][i] = inv_det * (a[r[0]][c[0]] * a[r[1]][c[1]] - a[r[0]][c[1]] * a[r[1]][c[0]]);
        }
    }
    Some(inv)
}

pub fn dot3(x: &Vec3, y: &Vec3) -> f64 {
    x[0] * y[0] + x[1] * y[1] + x[2] * y[2]
}

/// Forward substitution: solve L y = b for lower-triangular L.
fn solve_lower(l: &Mat3, b: &Vec3) -> Vec3 {
    let mut y = [0.0; 3];
    for i in 0..3 {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    y
}

/// Back substitution: solve L^T y = b for lower-triangular L.
fn solve_lower_t(l: &Mat3, b: &Vec3) -> Vec3 {
    let mut y = [0.0; 3];
    for i in (0..3).rev() {
        let mut s = b[i];
        for k in i + 1..3 {
            s -= l[k][i] * y[k];
        }
        y[i] = s / l[i][i];
    }
    y
}

/// Cyclic Jacobi eigen-decomposition of a symmetric 3x3 matrix.
/// Returns eigenvalues ascending and matching orthonormal eigenvectors.
pub fn jacobi_sym3(a0: &Mat3) -> ([f64; 3], [Vec3; 3]) {
    let mut a = *a0;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .fold(0.0_f64, |acc, (i, j)| acc.max(a[i][j].abs()))
        .max(1e-300);

    for _sweep in 0..64 {
        let off = (a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2]).sqrt();
        if off <= 1e-16 * scale {
            break;
        }
        for &(p, q) in &[(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q].abs() <= 1e-300 {
                continue;
            }
            let tau = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
            let c = 1.0 / (1.0 + t * t).sqrt();
            let s = t * c;
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for k in 0..3 {
                let vkp = v[k][p];
                let vkq = v[k][q];
                v[k][p] = c * vkp - s * vkq;
                v[k][q] = s * vkp + c * vkq;
            }
        }
    }

    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[i][i].partial_cmp(&a[j][j]).unwrap());
    let vals = [a[order[0]][order[0]], a[order[1]][order[1]], a[order[2]][order[2]]];
    let vecs = [
        [v[0][order[0]], v[1][order[0]], v[2][order[0]]],
        [v[0][order[1]], v[1][order[1]], v[2][order[1]]],
        [v[0][order[2]], v[1][order[2]], v[2][order[2]]],
    ];
    (vals, vecs)
}

/// Eigenvalues and g-orthonormal eigenvectors of the endomorphism g^{-1} E.
///
/// Solved on the symmetrized similarity L^{-1} E L^{-T} with g = L L^T, so the
/// eigenvalues are guaranteed real and the eigenvectors g-orthonormal.
pub fn eigen_g_sym(g: &SymMat3, e: &SymMat3) -> Option<([f64; 3], [Vec3; 3])> {
    let l = g.cholesky()?;
    let em = e.to_mat();
    // S = L^{-1} E L^{-T}, built column by column
    let mut s = [[0.0; 3]; 3];
    for j in 0..3 {
        // column j of E L^{-T}: solve L^T x = e_j, then E x
        let unit = [(j == 0) as u8 as f64, (j == 1) as u8 as f64, (j == 2) as u8 as f64];
        let x = solve_lower_t(&l, &unit);
        let ex = mat_vec(&em, &x);
        let col = solve_lower(&l, &ex);
        for i in 0..3 {
            s[i][j] = col[i];
        }
    }
    // symmetrize against roundoff
    for i in 0..3 {
        for j in i + 1..3 {
            let avg = 0.5 * (s[i][j] + s[j][i]);
            s[i][j] = avg;
            s[j][i] = avg;
        }
    }
    let (vals, qs) = jacobi_sym3(&s);
    let mut vecs = [[0.0; 3]; 3];
    for k in 0..3 {
        vecs[k] = solve_lower_t(&l, &qs[k]);
    }
    Some((vals, vecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn adjugate_times_self_is_det() {
        let a = SymMat3::new([2.0, 0.3, -0.1, 1.5, 0.2, 3.0]);
        let adj = a.adjugate();
        let prod = mat_mul(&adj.to_mat(), &a.to_mat());
        let det = a.det();
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { det } else { 0.0 };
                assert_relative_eq!(prod[i][j], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = SymMat3::new([4.0, 1.0, 0.5, 3.0, -0.2, 2.0]);
        let l = a.cholesky().unwrap();
        let llt = mat_mul(&l, &mat_transpose(&l));
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(llt[i][j], a.get(i, j), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn jacobi_diag_and_known_spectrum() {
        let a = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let (vals, vecs) = jacobi_sym3(&a);
        assert_relative_eq!(vals[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(vals[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(vals[2], 5.0, epsilon = 1e-12);
        // A v = lambda v
        for k in 0..3 {
            let av = mat_vec(&a, &vecs[k]);
            for i in 0..3 {
                assert_relative_eq!(av[i], vals[k] * vecs[k][i], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn generalized_eigen_is_g_orthonormal() {
        let g = SymMat3::new([2.0, 0.4, -0.1, 1.2, 0.3, 3.1]);
        let e = SymMat3::new([1.0, 0.2, 0.1, 2.0, -0.4, 0.8]);
        let (vals, vecs) = eigen_g_sym(&g, &e).unwrap();
        assert!(vals[0] <= vals[1] && vals[1] <= vals[2]);
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert_relative_eq!(g.quad(&vecs[a], &vecs[b]), want, epsilon = 1e-10);
            }
        }
        // (g^{-1} E) v = lambda v
        let ginv = g.inverse().unwrap();
        let op = mat_mul(&ginv.to_mat(), &e.to_mat());
        for k in 0..3 {
            let ov = mat_vec(&op, &vecs[k]);
            for i in 0..3 {
                assert_relative_eq!(ov[i], vals[k] * vecs[k][i], epsilon = 1e-9);
            }
        }
    }
}
