//! Principal symbols of the cross curvature flow, its DeTurck gauge fix, and
//! the Ricci flow, as 6x6 matrices acting on symmetric 2-tensors in the basis
//! {e11, e12, e13, e22, e23, e33} (off-diagonal basis tensors carry 1 in both
//! slots).
//!
//! Conventions, cross-validated symbolically and by the finite-difference
//! linearization oracle: all Einstein raisings go through E♯ = g^{-1} E g^{-1}
//! (|ξ|^2_E = E♯(ξ,ξ), ♯_E ξ = E♯ ξ, Tr_E V = E♯ : V), Sym(a⊗b) is the
//! average ½(a⊗b + b⊗a), and the three-term XCF formula is the symbol of the
//! flow right side 2 adj Ein (the linearization of adj Ein alone is exactly
//! half of it).

use crate::curvature::{core_from_jet, jet_at, StencilOrder};
use crate::error::{Result, XcfError};
use crate::grid::{BoundaryMode, Family, MetricGrid, TimeCtx};
use crate::io::fmt_g17;
use crate::sym3::SymMat3;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

/// Basis index -> (i, j) of the symmetric slot.
pub const BASIS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

pub fn sym_to_coords(s: &SymMat3) -> [f64; 6] {
    s.m
}

pub fn coords_to_sym(c: &[f64; 6]) -> SymMat3 {
    SymMat3::new(*c)
}

#[derive(Clone, Copy, Debug)]
pub struct SymbolContext {
    pub g: SymMat3,
    pub e: SymMat3,
    pub xi: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct SymbolMatrix {
    pub m: [[f64; 6]; 6],
    pub context: SymbolContext,
}

impl SymbolMatrix {
    pub fn apply(&self, v: &SymMat3) -> SymMat3 {
        let x = sym_to_coords(v);
        let mut y = [0.0; 6];
        for r in 0..6 {
            for c in 0..6 {
                y[r] += self.m[r][c] * x[c];
            }
        }
        coords_to_sym(&y)
    }

    pub fn to_nalgebra(&self) -> nalgebra::SMatrix<f64, 6, 6> {
        nalgebra::SMatrix::<f64, 6, 6>::from_fn(|r, c| self.m[r][c])
    }

    pub fn sub(&self, other: &SymbolMatrix) -> [[f64; 6]; 6] {
        let mut out = [[0.0; 6]; 6];
        for r in 0..6 {
            for c in 0..6 {
                out[r][c] = self.m[r][c] - other.m[r][c];
            }
        }
        out
    }

    /// Kernel dimension by singular-value count below rel_tol * sigma_max.
    pub fn kernel_dim(&self, rel_tol: f64) -> usize {
        let sv = self.to_nalgebra().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
        sv.iter().filter(|&&s| s <= rel_tol * smax).count()
    }

    /// Smallest real part over the (possibly complex) spectrum.
    pub fn min_eig_real(&self) -> f64 {
        let ev = self.to_nalgebra().complex_eigenvalues();
        ev.iter().map(|z| z.re).fold(f64::INFINITY, f64::min)
    }
}

/// Build the 6x6 matrix of a linear map on symmetric tensors.
fn matrix_of(map: impl Fn(&SymMat3) -> SymMat3, context: SymbolContext) -> SymbolMatrix {
    let mut m = [[0.0; 6]; 6];
    for (col, &(i, j)) in BASIS.iter().enumerate() {
        let mut b = SymMat3::ZERO;
        b.set(i, j, 1.0);
        let out = map(&b);
        for row in 0..6 {
            m[row][col] = out.m[row];
        }
    }
    SymbolMatrix { m, context }
}

/// The three-term map |ξ|^2_P V − 2 Sym ξ ⊗ V(Pξ, ·) + (P : V) ξ ⊗ ξ for a
/// raising matrix P.
fn three_term(p: &SymMat3, xi: &[f64; 3], v: &SymMat3) -> SymMat3 {
    let pxi = p.mul_vec(xi);
    let norm2 = xi[0] * pxi[0] + xi[1] * pxi[1] + xi[2] * pxi[2];
    let vp = v.mul_vec(&pxi); // V(♯_P ξ, ·)
    let trace = p.dot(v);
    SymMat3::from_fn(|i, j| {
        norm2 * v.get(i, j) - (xi[i] * vp[j] + xi[j] * vp[i]) + trace * xi[i] * xi[j]
    })
}

fn e_sharp_of(g: &SymMat3, e: &SymMat3) -> Result<SymMat3> {
    let gi = g.inverse().ok_or(XcfError::NonPositiveMetric { node: [0, 0, 0] })?;
    let t = crate::sym3::mat_mul(&gi.to_mat(), &e.to_mat());
    let t = crate::sym3::mat_mul(&t, &gi.to_mat());
    Ok(SymMat3::from_mat(&t))
}

fn check_xi(xi: &[f64; 3]) -> Result<()> {
    if xi.iter().all(|c| c.abs() < 1e-300) {
        return Err(XcfError::ZeroCovector);
    }
    Ok(())
}

/// Principal symbol of the XCF right side 2 adj Ein:
/// σ(V) = |ξ|^2_E V − 2 Sym ξ ⊗ V(♯_E ξ, ·) + Tr_E V ξ ⊗ ξ.
pub fn symbol_xcf(g: &SymMat3, e: &SymMat3, xi: &[f64; 3]) -> Result<SymbolMatrix> {
    check_xi(xi)?;
    let es = e_sharp_of(g, e)?;
    let ctx = SymbolContext { g: *g, e: *e, xi: *xi };
    Ok(matrix_of(|v| three_term(&es, xi, v), ctx))
}

/// Symbol of the Lie-derivative gauge term for the Ricci-flow DeTurck field:
/// σ(V) = 2 Sym ξ ⊗ V(♯ξ, ·) − Tr_g V ξ ⊗ ξ.
pub fn gauge_symbol(g: &SymMat3, xi: &[f64; 3]) -> Result<SymbolMatrix> {
    check_xi(xi)?;
    let gi = g.inverse().ok_or(XcfError::NonPositiveMetric { node: [0, 0, 0] })?;
    let ctx = SymbolContext { g: *g, e: *g, xi: *xi };
    Ok(matrix_of(
        |v| {
            let sxi = gi.mul_vec(xi);
            let vs = v.mul_vec(&sxi);
            let trace = gi.dot(v);
            SymMat3::from_fn(|i, j| (xi[i] * vs[j] + xi[j] * vs[i]) - trace * xi[i] * xi[j])
        },
        ctx,
    ))
}

/// Symbol of the DeTurck XCF 2 adj Ein + L_W g:
/// σ(V) = |ξ|^2_E V + 2 Sym ξ ⊗ V(♯ξ − ♯_E ξ, ·) + (Tr_E V − Tr_g V) ξ ⊗ ξ.
pub fn symbol_deturck(g: &SymMat3, e: &SymMat3, xi: &[f64; 3]) -> Result<SymbolMatrix> {
    check_xi(xi)?;
    let es = e_sharp_of(g, e)?;
    let gi = g.inverse().ok_or(XcfError::NonPositiveMetric { node: [0, 0, 0] })?;
    let ctx = SymbolContext { g: *g, e: *e, xi: *xi };
    Ok(matrix_of(
        |v| {
            let pxi = es.mul_vec(xi);
            let norm2 = xi[0] * pxi[0] + xi[1] * pxi[1] + xi[2] * pxi[2];
            let q = {
                let s = gi.mul_vec(xi);
                [s[0] - pxi[0], s[1] - pxi[1], s[2] - pxi[2]]
            };
            let vq = v.mul_vec(&q);
            let tr = es.dot(v) - gi.dot(v);
            SymMat3::from_fn(|i, j| {
                norm2 * v.get(i, j) + (xi[i] * vq[j] + xi[j] * vq[i]) + tr * xi[i] * xi[j]
            })
        },
        ctx,
    ))
}

/// Raw and DeTurck Ricci-flow symbols: σ[−2 Ric](V) = |ξ|^2_g V − 2 Sym ξ ⊗
/// V(♯ξ, ·) + Tr_g V ξ ⊗ ξ, and exactly |ξ|^2_g Id after the gauge fix.
pub fn symbol_ricci(g: &SymMat3, xi: &[f64; 3]) -> Result<(SymbolMatrix, SymbolMatrix)> {
    check_xi(xi)?;
    let gi = g.inverse().ok_or(XcfError::NonPositiveMetric { node: [0, 0, 0] })?;
    let ctx = SymbolContext { g: *g, e: *g, xi: *xi };
    let raw = matrix_of(|v| three_term(&gi, xi, v), ctx);
    let n2 = {
        let s = gi.mul_vec(xi);
        xi[0] * s[0] + xi[1] * s[1] + xi[2] * s[2]
    };
    let mut m = [[0.0; 6]; 6];
    for k in 0..6 {
        m[k][k] = n2;
    }
    Ok((raw, SymbolMatrix { m, context: ctx }))
}

/// The XCF-adapted gauge sketched alongside the Ricci-flow one: its symbol
/// cancels both degenerate terms, leaving |ξ|^2_E Id.  Report-level only.
pub fn symbol_xcf_adapted_deturck(g: &SymMat3, e: &SymMat3, xi: &[f64; 3]) -> Result<SymbolMatrix> {
    check_xi(xi)?;
    let es = e_sharp_of(g, e)?;
    let pxi = es.mul_vec(xi);
    let n2 = xi[0] * pxi[0] + xi[1] * pxi[1] + xi[2] * pxi[2];
    let ctx = SymbolContext { g: *g, e: *e, xi: *xi };
    let mut m = [[0.0; 6]; 6];
    for k in 0..6 {
        m[k][k] = n2;
    }
    Ok(SymbolMatrix { m, context: ctx })
}

// ---- finite-difference linearization oracle -----------------------------------

/// Estimate σ_ξ[2 adj Ein](V) on a family background at x0, by differencing
/// the flow right side against a plane-wave perturbation u = V cos(<ξ, x−x0>/δ)
/// at decreasing amplitudes, with δ^2-Richardson extraction of the leading
/// coefficient.  The phase is zero at x0 so the first-order term drops.
pub fn symbol_fd_oracle(
    family: &Family,
    x0: [f64; 3],
    xi: &[f64; 3],
    v: &SymMat3,
    deltas: &[f64],
    amplitudes: &[f64],
) -> Result<SymMat3> {
    check_xi(xi)?;
    if deltas.len() < 2 || deltas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(XcfError::NonConvergentExtraction {
            detail: "need a decreasing list of at least two wavelengths".into(),
        });
    }
    if amplitudes.len() < 2 || amplitudes.windows(2).any(|w| w[1] >= w[0]) {
        return Err(XcfError::NonConvergentExtraction {
            detail: "need a decreasing list of at least two amplitudes".into(),
        });
    }

    let h = deltas.last().unwrap() / 24.0;
    let column = |a: f64, delta: f64| -> Result<SymMat3> {
        let eval = |perturb: bool| -> Result<SymMat3> {
            let dims = [5usize, 5, 5];
            let origin = [x0[0] - 2.0 * h, x0[1] - 2.0 * h, x0[2] - 2.0 * h];
            let mut values = Vec::with_capacity(125);
            for k in 0..5 {
                for j in 0..5 {
                    for i in 0..5 {
                        let x = [
                            origin[0] + i as f64 * h,
                            origin[1] + j as f64 * h,
                            origin[2] + k as f64 * h,
                        ];
                        let mut gv = family.eval(x, &TimeCtx::ZERO);
                        if perturb {
                            let phase = (xi[0] * (x[0] - x0[0])
                                + xi[1] * (x[1] - x0[1])
                                + xi[2] * (x[2] - x0[2]))
                                / delta;
                            gv = gv + *v * (a * phase.cos());
                        }
                        values.push(gv);
                    }
                }
            }
            let grid = MetricGrid {
                dims,
                h: [h, h, h],
                origin,
                boundary: BoundaryMode::Periodic, // stencil never leaves the box
                family: family.clone(),
                values,
            };
            let jet = jet_at(&grid, [2, 2, 2], StencilOrder::Two, &TimeCtx::ZERO);
            let core = core_from_jet(&jet).ok_or(XcfError::NonPositiveMetric { node: [2, 2, 2] })?;
            Ok(core.adj_ein * 2.0)
        };
        let base = eval(false)?;
        let pert = eval(true)?;
        // second derivatives of cos contribute -1/delta^2 at phase zero
        Ok((pert - base) * (-delta * delta / a))
    };

    let estimate_for = |a: f64| -> Result<SymMat3> {
        // two-point Richardson in delta^2 on the last two wavelengths
        let d1 = deltas[deltas.len() - 2];
        let d2 = deltas[deltas.len() - 1];
        let c1 = column(a, d1)?;
        let c2 = column(a, d2)?;
        let w = d1 * d1 / (d1 * d1 - d2 * d2);
        Ok(c2 * w + c1 * (1.0 - w))
    };

    let a1 = amplitudes[amplitudes.len() - 2];
    let a2 = amplitudes[amplitudes.len() - 1];
    let r1 = estimate_for(a1)?;
    let r2 = estimate_for(a2)?;
    let drift = (r2 - r1).max_abs();
    let scale = r2.max_abs().max(1e-12);
    if drift > 0.05 * scale + 1e-9 {
        return Err(XcfError::NonConvergentExtraction {
            detail: format!("amplitude sequence not settling: drift {drift:.3e} vs scale {scale:.3e}"),
        });
    }
    // linear-in-amplitude extrapolation
    let w = a1 / (a1 - a2);
    Ok(r2 * w + r1 * (1.0 - w))
}

// ---- seeded context scan --------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SymbolReport {
    pub samples: usize,
    pub seed: u64,
    pub kernel_dim_histogram: BTreeMap<usize, usize>,
    pub deturck_min_real_part: f64,
    pub deturck_ricci_identity_error: f64,
    pub consistency_error: f64,
    pub failures: Vec<String>,
}

impl SymbolReport {
    pub fn to_json(&self) -> String {
        let mut s = format!("{{\"samples\":{},\"seed\":{}", self.samples, self.seed);
        s.push_str(",\"xcf_kernel_dim_histogram\":{");
        for (k, (dim, count)) in self.kernel_dim_histogram.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            s.push_str(&format!("\"{dim}\":{count}"));
        }
        s.push_str("},\"deturck_min_real_part\":");
        s.push_str(&fmt_g17(self.deturck_min_real_part));
        s.push_str(",\"deturck_ricci_identity_error\":");
        s.push_str(&fmt_g17(self.deturck_ricci_identity_error));
        s.push_str(",\"consistency_error\":");
        s.push_str(&fmt_g17(self.consistency_error));
        s.push_str(",\"failures\":[");
        for (k, f) in self.failures.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            s.push_str(&serde_json::to_string(f).expect("string"));
        }
        s.push_str("]}");
        s
    }
}

pub fn rand_spd(rng: &mut ChaCha8Rng, shift: f64) -> SymMat3 {
    let mut a = [[0.0; 3]; 3];
    for row in a.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let mut s = SymMat3::from_fn(|i, j| {
        let mut acc = 0.0;
        for k in 0..3 {
            acc += a[i][k] * a[j][k];
        }
        acc
    });
    for d in [0, 3, 5] {
        s.m[d] += shift;
    }
    s
}

/// Covector on the unit g-sphere (|ξ|_g = 1 via g^{-1}).
pub fn rand_unit_covector(rng: &mut ChaCha8Rng, g: &SymMat3) -> [f64; 3] {
    let gi = g.inverse().expect("SPD");
    loop {
        let xi = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let s = gi.mul_vec(&xi);
        let n2 = xi[0] * s[0] + xi[1] * s[1] + xi[2] * s[2];
        if n2 > 1e-6 {
            let inv = 1.0 / n2.sqrt();
            return [xi[0] * inv, xi[1] * inv, xi[2] * inv];
        }
    }
}

/// Seeded scan: raw-XCF kernel dimensions, DeTurck spectrum positivity, the
/// exact DeTurck-Ricci identity, and the gauge-accounting consistency.
pub fn symbol_scan(samples: usize, seed: u64) -> SymbolReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut histogram = BTreeMap::new();
    let mut min_real = f64::INFINITY;
    let mut ricci_err = 0.0_f64;
    let mut consistency = 0.0_f64;
    let mut failures = Vec::new();

    for k in 0..samples {
        let g = rand_spd(&mut rng, 0.4);
        let e = rand_spd(&mut rng, 0.4);
        let xi = rand_unit_covector(&mut rng, &g);

        let xcf = symbol_xcf(&g, &e, &xi).expect("SPD context");
        let dim = xcf.kernel_dim(1e-8);
        *histogram.entry(dim).or_insert(0) += 1;
        if dim != 3 {
            failures.push(format!("sample {k}: kernel dim {dim}"));
        }

        let dt = symbol_deturck(&g, &e, &xi).expect("SPD context");
        let re = dt.min_eig_real();
        if re <= 0.0 {
            failures.push(format!("sample {k}: deturck min real part {re:.3e}"));
        }
        min_real = min_real.min(re);

        // consistency: deturck = xcf + gauge
        let gauge = gauge_symbol(&g, &xi).expect("SPD");
        let mut err = 0.0_f64;
        for r in 0..6 {
            for c in 0..6 {
                err = err.max((dt.m[r][c] - xcf.m[r][c] - gauge.m[r][c]).abs());
            }
        }
        consistency = consistency.max(err);

        // DeTurck Ricci flow: raw + gauge must be |xi|^2_g Id exactly
        let (raw, fixed) = symbol_ricci(&g, &xi).expect("SPD");
        let mut err = 0.0_f64;
        for r in 0..6 {
            for c in 0..6 {
                err = err.max((raw.m[r][c] + gauge.m[r][c] - fixed.m[r][c]).abs());
            }
        }
        ricci_err = ricci_err.max(err);
    }

    SymbolReport {
        samples,
        seed,
        kernel_dim_histogram: histogram,
        deturck_min_real_part: min_real,
        deturck_ricci_identity_error: ricci_err,
        consistency_error: consistency,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hand_substitution_cases() {
        // g = E = I, xi = e1, V = e22: sigma = e22 + e11
        let id = SymMat3::identity();
        let m = symbol_xcf(&id, &id, &[1.0, 0.0, 0.0]).unwrap();
        let v = SymMat3::diag(0.0, 1.0, 0.0);
        let out = m.apply(&v);
        let expect = SymMat3::diag(1.0, 1.0, 0.0);
        for k in 0..6 {
            assert_relative_eq!(out.m[k], expect.m[k], epsilon = 1e-14);
        }

        // raw Ricci: g = I, xi = e2, V = e22 -> 0
        let (raw, fixed) = symbol_ricci(&id, &[0.0, 1.0, 0.0]).unwrap();
        let out = raw.apply(&v);
        assert!(out.max_abs() < 1e-14);
        assert_relative_eq!(fixed.m[0][0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn kernel_contains_symmetrized_xi_tensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = rand_spd(&mut rng, 0.4);
            let e = rand_spd(&mut rng, 0.4);
            let xi = rand_unit_covector(&mut rng, &g);
            let m = symbol_xcf(&g, &e, &xi).unwrap();
            let omega = [
                rng.random_range(-1.0_f64..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let v = SymMat3::from_fn(|i, j| 0.5 * (xi[i] * omega[j] + xi[j] * omega[i]));
            let out = m.apply(&v);
            assert!(out.max_abs() < 1e-12, "kernel direction not killed: {out:?}");
            assert_eq!(m.kernel_dim(1e-8), 3);
        }
    }

    #[test]
    fn degree_two_homogeneity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = rand_spd(&mut rng, 0.4);
        let e = rand_spd(&mut rng, 0.4);
        let xi = rand_unit_covector(&mut rng, &g);
        let xi2 = [2.0 * xi[0], 2.0 * xi[1], 2.0 * xi[2]];
        for build in [symbol_xcf, symbol_deturck] {
            let m1 = build(&g, &e, &xi).unwrap();
            let m2 = build(&g, &e, &xi2).unwrap();
            for r in 0..6 {
                for c in 0..6 {
                    assert_relative_eq!(m2.m[r][c], 4.0 * m1.m[r][c], epsilon = 1e-12, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn deturck_e_equals_g_is_scalar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = rand_spd(&mut rng, 0.5);
        let xi = rand_unit_covector(&mut rng, &g);
        let m = symbol_deturck(&g, &g, &xi).unwrap();
        // |xi|_g = 1 by construction, so the matrix must be the identity
        for r in 0..6 {
            for c in 0..6 {
                let expect = if r == c { 1.0 } else { 0.0 };
                assert_relative_eq!(m.m[r][c], expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_covector_rejected() {
        let id = SymMat3::identity();
        assert!(matches!(
            symbol_xcf(&id, &id, &[0.0, 0.0, 0.0]),
            Err(XcfError::ZeroCovector)
        ));
    }

    #[test]
    fn scan_small_sample() {
        let rep = symbol_scan(50, 42);
        assert!(rep.failures.is_empty(), "{:?}", rep.failures);
        assert_eq!(rep.kernel_dim_histogram.get(&3), Some(&50));
        assert!(rep.deturck_min_real_part > 0.0);
        assert!(rep.deturck_ricci_identity_error < 1e-12);
        assert!(rep.consistency_error < 1e-12);
        // determinism
        let rep2 = symbol_scan(50, 42);
        assert_eq!(rep.to_json(), rep2.to_json());
    }

    #[test]
    fn fd_oracle_guards() {
        let fam = Family::HyperbolicHalfspace { k0: -1.0 };
        let v = SymMat3::identity();
        let bad = symbol_fd_oracle(
            &fam,
            [0.0, 0.0, 1.0],
            &[1.0, 0.0, 0.0],
            &v,
            &[0.2, 0.1],
            &[1e-4, 1e-3], // not decreasing
        );
        assert!(matches!(bad, Err(XcfError::NonConvergentExtraction { .. })));
    }
}
