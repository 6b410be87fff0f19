//! Pointwise and field-level curvature calculus.
//!
//! Conventions: Rm(X,Y)Z = ∇_X ∇_Y Z − ∇_Y ∇_X Z − ∇_[X,Y] Z,
//! Rm(X,Y,Z,W) = g(Rm(X,Y)Z, W), Ric(X,Y) = Tr(Z ↦ Rm(Z,X)Y),
//! Ein = Ric − (Sc/2) g.  With these signs a metric of constant sectional
//! curvature K has Ric = 2Kg, Ein = −Kg, and Ein is SPD exactly when the
//! sectional curvature is negative.

use crate::error::{Result, XcfError};
use crate::grid::{Field, MetricGrid, TimeCtx};
use crate::sym3::{self, Mat3, SymMat3, Vec3};
use rayon::prelude::*;

pub type Rm4 = [[[[f64; 3]; 3]; 3]; 3];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StencilOrder {
    Two,
    Four,
}

impl StencilOrder {
    pub fn radius(&self) -> isize {
        match self {
            StencilOrder::Two => 1,
            StencilOrder::Four => 2,
        }
    }
}

/// Metric 2-jet at a point: value, first and second coordinate derivatives.
#[derive(Clone, Copy, Debug)]
pub struct MetricJet {
    pub g: SymMat3,
    pub dg: [SymMat3; 3],
    pub ddg: [[SymMat3; 3]; 3],
}

/// Central-difference 2-jet of the metric at node `p`.
pub fn jet_at(grid: &MetricGrid, p: [isize; 3], order: StencilOrder, ctx: &TimeCtx) -> MetricJet {
    let h = grid.h;
    let s = |off: [isize; 3]| grid.sample([p[0] + off[0], p[1] + off[1], p[2] + off[2]], ctx);
    let unit = |a: usize, k: isize| {
        let mut off = [0isize; 3];
        off[a] = k;
        off
    };

    let g = s([0, 0, 0]);
    let mut dg = [SymMat3::ZERO; 3];
    let mut ddg = [[SymMat3::ZERO; 3]; 3];

    match order {
        StencilOrder::Two => {
            for a in 0..3 {
                let p1 = s(unit(a, 1));
                let m1 = s(unit(a, -1));
                dg[a] = (p1 - m1) * (0.5 / h[a]);
                ddg[a][a] = (p1 - g * 2.0 + m1) * (1.0 / (h[a] * h[a]));
            }
            for a in 0..3 {
                for b in a + 1..3 {
                    let off = |ka: isize, kb: isize| {
                        let mut o = [0isize; 3];
                        o[a] = ka;
                        o[b] = kb;
                        s(o)
                    };
                    let d = (off(1, 1) - off(1, -1) - off(-1, 1) + off(-1, -1))
                        * (0.25 / (h[a] * h[b]));
                    ddg[a][b] = d;
                    ddg[b][a] = d;
                }
            }
        }
        StencilOrder::Four => {
            // weights for f' : (-f2 + 8 f1 - 8 f-1 + f-2) / 12h
            for a in 0..3 {
                let p2 = s(unit(a, 2));
                let p1 = s(unit(a, 1));
                let m1 = s(unit(a, -1));
                let m2 = s(unit(a, -2));
                dg[a] = (p1 * 8.0 - m1 * 8.0 - p2 + m2) * (1.0 / (12.0 * h[a]));
                ddg[a][a] = (p1 * 16.0 + m1 * 16.0 - p2 - m2 - g * 30.0)
                    * (1.0 / (12.0 * h[a] * h[a]));
            }
            const OFFS: [isize; 4] = [-2, -1, 1, 2];
            const W: [f64; 4] = [1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0];
            for a in 0..3 {
                for b in a + 1..3 {
                    let mut d = SymMat3::ZERO;
                    for (ia, &ka) in OFFS.iter().enumerate() {
                        for (ib, &kb) in OFFS.iter().enumerate() {
                            let mut o = [0isize; 3];
                            o[a] = ka;
                            o[b] = kb;
                            d = d + s(o) * (W[ia] * W[ib]);
                        }
                    }
                    d = d * (1.0 / (h[a] * h[b]));
                    ddg[a][b] = d;
                    ddg[b][a] = d;
                }
            }
        }
    }
    MetricJet { g, dg, ddg }
}

/// Everything the flow and the monitors need, per node; no eigen data, no Rm.
#[derive(Clone, Copy, Debug)]
pub struct CurvatureCore {
    pub g: SymMat3,
    pub g_inv: SymMat3,
    /// gamma[k][i][j] = Γ^k_{ij}
    pub gamma: [[[f64; 3]; 3]; 3],
    pub ric: SymMat3,
    pub sc: f64,
    pub ein: SymMat3,
    /// E♯ = g^{-1} E g^{-1}, the Einstein tensor with both indices raised.
    pub e_sharp: SymMat3,
    pub adj_ein: SymMat3,
    /// det of the endomorphism g^{-1} E.
    pub det_e: f64,
    /// Tr of the endomorphism g^{-1} E.
    pub tr_e: f64,
    /// H = Tr_g adj Ein.
    pub trace_cross: f64,
    pub ein_spd: bool,
    /// V = Ein^{-1} as a bilinear form (g E^{-1} g); valid iff ein_spd.
    pub v_inv: SymMat3,
    /// Ob = sqrt(det_e) * V; valid iff ein_spd.
    pub ob: SymMat3,
    pub sqrt_det_e: f64,
}

/// Full per-node curvature data.
#[derive(Clone, Debug)]
pub struct CurvaturePack {
    pub core: CurvatureCore,
    /// rm[i][j][k][l] = Rm(e_i, e_j, e_k, e_l), raw from the jet.
    pub rm: Rm4,
    /// Eigenvalues of g^{-1} E, ascending.
    pub lambda: [f64; 3],
    /// Matching g-orthonormal eigenvectors.
    pub frame: [Vec3; 3],
}

fn raw_curvature(jet: &MetricJet) -> Option<(SymMat3, [[[f64; 3]; 3]; 3], Rm4)> {
    let g = jet.g;
    let g_inv = g.inverse()?;
    if !g.is_spd() {
        return None;
    }
    let gi = g_inv.to_mat();

    // dginv[a] = -g^{-1} dg[a] g^{-1}
    let mut dginv = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        let t = sym3::mat_mul(&gi, &jet.dg[a].to_mat());
        let t = sym3::mat_mul(&t, &gi);
        for i in 0..3 {
            for j in 0..3 {
                dginv[a][i][j] = -t[i][j];
            }
        }
    }

    // Γ^k_{ij} = ½ g^{kl} (∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij})
    let mut gamma = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += gi[k][l]
                        * (jet.dg[i].get(j, l) + jet.dg[j].get(i, l) - jet.dg[l].get(i, j));
                }
                gamma[k][i][j] = 0.5 * s;
            }
        }
    }

    // ∂_a Γ^k_{ij}
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3]; // [a][k][i][j]
    for a in 0..3 {
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for l in 0..3 {
                        s += dginv[a][k][l]
                            * (jet.dg[i].get(j, l) + jet.dg[j].get(i, l) - jet.dg[l].get(i, j));
                        s += gi[k][l]
                            * (jet.ddg[a][i].get(j, l) + jet.ddg[a][j].get(i, l)
                                - jet.ddg[a][l].get(i, j));
                    }
                    dgamma[a][k][i][j] = 0.5 * s;
                }
            }
        }
    }

    // R^l_{ijk} = ∂_i Γ^l_{jk} − ∂_j Γ^l_{ik} + Γ^l_{im} Γ^m_{jk} − Γ^l_{jm} Γ^m_{ik}
    let mut rm = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut up = dgamma[i][l][j][k] - dgamma[j][l][i][k];
                    for m in 0..3 {
                        up += gamma[l][i][m] * gamma[m][j][k] - gamma[l][j][m] * gamma[m][i][k];
                    }
                    // store lowered on the last slot later
                    rm[i][j][k][l] = up;
                }
            }
        }
    }
    // lower: Rm_{ijkl} = g_{lm} R^m_{ijk}
    let mut rml = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for m in 0..3 {
                        s += g.get(l, m) * rm[i][j][k][m];
                    }
                    rml[i][j][k][l] = s;
                }
            }
        }
    }
    Some((g_inv, gamma, rml))
}

/// Algebraic tail of the pipeline: from (g, Γ, Rm) to the core quantities.
/// Ric is traced from Rm; everything after Ein is pointwise algebra.
pub fn core_from_parts(g: SymMat3, g_inv: SymMat3, gamma: [[[f64; 3]; 3]; 3], rm: &Rm4) -> CurvatureCore {
    let gi = g_inv.to_mat();
    // Ric_{ij} = g^{ab} Rm_{a i j b}
    let ric = SymMat3::from_fn(|i, j| {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += gi[a][b] * rm[a][i][j][b];
            }
        }
        s
    });
    let sc = g_inv.dot(&ric);
    let ein = ric - g * (0.5 * sc);
    core_from_g_ein_parts(g, g_inv, gamma, ric, sc, ein)
}

fn core_from_g_ein_parts(
    g: SymMat3,
    g_inv: SymMat3,
    gamma: [[[f64; 3]; 3]; 3],
    ric: SymMat3,
    sc: f64,
    ein: SymMat3,
) -> CurvatureCore {
    let det_g = g.det();
    let adj_e = ein.adjugate();
    // adj Ein as a bilinear form: g adj(E) g / det g
    let gm = g.to_mat();
    let t = sym3::mat_mul(&gm, &adj_e.to_mat());
    let t = sym3::mat_mul(&t, &gm);
    let adj_ein = SymMat3::from_mat(&t) * (1.0 / det_g);
    let det_e = ein.det() / det_g;
    let tr_e = g_inv.dot(&ein);
    let trace_cross = g_inv.dot(&adj_ein);
    // E♯ = g^{-1} E g^{-1}
    let gim = g_inv.to_mat();
    let es = sym3::mat_mul(&gim, &ein.to_mat());
    let es = sym3::mat_mul(&es, &gim);
    let e_sharp = SymMat3::from_mat(&es);
    let ein_spd = ein.is_spd();
    let (v_inv, ob, sqrt_det_e) = if ein_spd {
        let v = adj_ein * (1.0 / det_e);
        let sq = det_e.sqrt();
        (v, v * sq, sq)
    } else {
        (SymMat3::ZERO, SymMat3::ZERO, f64::NAN)
    };
    CurvatureCore {
        g,
        g_inv,
        gamma,
        ric,
        sc,
        ein,
        e_sharp,
        adj_ein,
        det_e,
        tr_e,
        trace_cross,
        ein_spd,
        v_inv,
        ob,
        sqrt_det_e,
    }
}

pub fn core_from_jet(jet: &MetricJet) -> Option<CurvatureCore> {
    let (g_inv, gamma, rm) = raw_curvature(jet)?;
    Some(core_from_parts(jet.g, g_inv, gamma, &rm))
}

pub fn pack_from_jet(jet: &MetricJet) -> Option<CurvaturePack> {
    let (g_inv, gamma, rm) = raw_curvature(jet)?;
    let core = core_from_parts(jet.g, g_inv, gamma, &rm);
    let (lambda, frame) = sym3::eigen_g_sym(&jet.g, &core.ein)?;
    Some(CurvaturePack {
        core,
        rm,
        lambda,
        frame,
    })
}

/// Synthetic pointwise pack: prescribe (g, Ein) and build Rm through the
/// 3D Ricci decomposition.  Γ is zero (no derivative information).
pub fn pack_from_g_ein(g: SymMat3, ein: SymMat3) -> Option<CurvaturePack> {
    let g_inv = g.inverse()?;
    if !g.is_spd() {
        return None;
    }
    let tr_e = g_inv.dot(&ein);
    let sc = -2.0 * tr_e;
    let ric = ein + g * (0.5 * sc);
    let rm = rm_from_ein(&g, &ein, tr_e);
    let core = core_from_g_ein_parts(g, g_inv, [[[0.0; 3]; 3]; 3], ric, sc, ein);
    let (lambda, frame) = sym3::eigen_g_sym(&g, &ein)?;
    Some(CurvaturePack {
        core,
        rm,
        lambda,
        frame,
    })
}

/// Kulkarni–Nomizu product (A ⊼ B)_{ijkl}.
pub fn kulkarni_nomizu(a: &SymMat3, b: &SymMat3) -> Rm4 {
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[i][j][k][l] = a.get(i, k) * b.get(j, l) + a.get(j, l) * b.get(i, k)
                        - a.get(i, l) * b.get(j, k)
                        - a.get(j, k) * b.get(i, l);
                }
            }
        }
    }
    out
}

/// 3D Ricci decomposition: Rm = −Ein ⊼ g + (Tr Ein / 2) g ⊼ g.
pub fn rm_from_ein(g: &SymMat3, ein: &SymMat3, tr_e: f64) -> Rm4 {
    let eg = kulkarni_nomizu(ein, g);
    let gg = kulkarni_nomizu(g, g);
    let mut out = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    out[i][j][k][l] = -eg[i][j][k][l] + 0.5 * tr_e * gg[i][j][k][l];
                }
            }
        }
    }
    out
}

pub fn rm_max_abs(rm: &Rm4) -> f64 {
    let mut m = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    m = m.max(rm[i][j][k][l].abs());
                }
            }
        }
    }
    m
}

// ---- operations -------------------------------------------------------------

/// Sectional curvature of the eigenplane (E_i, E_j) of the pack's frame,
/// computed from the stored Rm: Rm(E_i,E_j,E_j,E_i)/|E_i ∧ E_j|^2.
pub fn sectional(pack: &CurvaturePack, i: usize, j: usize) -> Result<f64> {
    let x = pack.frame[i];
    let y = pack.frame[j];
    let g = &pack.core.g;
    let area2 = g.quad(&x, &x) * g.quad(&y, &y) - g.quad(&x, &y).powi(2);
    if area2 < 1e-14 {
        return Err(XcfError::DegeneratePlane { area2 });
    }
    let mut num = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for d in 0..3 {
                    num += pack.rm[a][b][c][d] * x[a] * y[b] * y[c] * x[d];
                }
            }
        }
    }
    Ok(num / area2)
}

/// Cross curvature tensor by the Ricci-contraction route of the adjugate:
/// −½ Tr(Z ↦ Rm(opEin Z, X) Y) = −½ E♯^{ab} Rm_{a i j b}.
/// Independent of the eigen/adjugate path; must equal adj Ein.
pub fn cross_via_ricci_e(pack: &CurvaturePack) -> SymMat3 {
    let es = pack.core.e_sharp;
    SymMat3::from_fn(|i, j| {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += es.get(a, b) * pack.rm[a][i][j][b];
            }
        }
        -0.5 * s
    })
}

/// Relative max-norm residual of the 3D Ricci decomposition of the stored Rm.
pub fn ricci_decomposition_residual(pack: &CurvaturePack) -> f64 {
    let decomposed = rm_from_ein(&pack.core.g, &pack.core.ein, pack.core.tr_e);
    let mut resid = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    resid = resid.max((pack.rm[i][j][k][l] - decomposed[i][j][k][l]).abs());
                }
            }
        }
    }
    let scale = rm_max_abs(&pack.rm).max(1e-30);
    resid / scale
}

// ---- field evaluation ---------------------------------------------------------

fn check_stencil(grid: &MetricGrid, order: StencilOrder) -> Result<()> {
    let needed = (2 * order.radius() + 1) as usize;
    if grid.dims.iter().any(|&d| d < needed) {
        return Err(XcfError::StencilUnderflow {
            dims: grid.dims,
            order: match order {
                StencilOrder::Two => 2,
                StencilOrder::Four => 4,
            },
            needed,
        });
    }
    Ok(())
}

fn node_of(grid: &MetricGrid, flat: usize) -> [usize; 3] {
    let n1 = grid.dims[0];
    let n2 = grid.dims[1];
    [flat % n1, (flat / n1) % n2, flat / (n1 * n2)]
}

/// Curvature core at every stored node (stencils pad from the family or wrap).
pub fn curvature_core_field(
    grid: &MetricGrid,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<Field<CurvatureCore>> {
    check_stencil(grid, order)?;
    let data: Result<Vec<CurvatureCore>> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n = node_of(grid, flat);
            let jet = jet_at(grid, [n[0] as isize, n[1] as isize, n[2] as isize], order, ctx);
            core_from_jet(&jet).ok_or(XcfError::NonPositiveMetric { node: n })
        })
        .collect();
    Ok(Field {
        dims: grid.dims,
        data: data?,
    })
}

/// Full curvature pack at every stored node.
pub fn curvature_pack_field(
    grid: &MetricGrid,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<Field<CurvaturePack>> {
    check_stencil(grid, order)?;
    let data: Result<Vec<CurvaturePack>> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n = node_of(grid, flat);
            let jet = jet_at(grid, [n[0] as isize, n[1] as isize, n[2] as isize], order, ctx);
            pack_from_jet(&jet).ok_or(XcfError::NonPositiveMetric { node: n })
        })
        .collect();
    Ok(Field {
        dims: grid.dims,
        data: data?,
    })
}

/// Core curvature at an arbitrary (possibly ghost) node position.
pub fn core_at(
    grid: &MetricGrid,
    p: [isize; 3],
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<CurvatureCore> {
    let jet = jet_at(grid, p, order, ctx);
    core_from_jet(&jet).ok_or(XcfError::NonPositiveMetric {
        node: [
            p[0].max(0) as usize,
            p[1].max(0) as usize,
            p[2].max(0) as usize,
        ],
    })
}

pub fn mixed_op(g_inv: &SymMat3, a: &SymMat3) -> Mat3 {
    sym3::mat_mul(&g_inv.to_mat(), &a.to_mat())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{BoundaryMode, Family};
    use approx::assert_relative_eq;

    fn hyp_grid(k0: f64, n: usize, h: f64) -> MetricGrid {
        MetricGrid::from_family(
            [n, n, n],
            [h, h, h],
            [0.0, 0.0, 1.0],
            BoundaryMode::DirichletAnalytic,
            Family::HyperbolicHalfspace { k0 },
        )
        .unwrap()
    }

    #[test]
    fn hyperbolic_unit_curvature_closed_forms() {
        // K0 = -1: Ric = -2g, Sc = -6, Ein = g, lambda = 1, adjEin = g, detE = 1
        // discretization error is O(h^2) ~ 1e-3 at h = 1/32
        let tol = 5e-3;
        let grid = hyp_grid(-1.0, 9, 1.0 / 32.0);
        let field = curvature_pack_field(&grid, StencilOrder::Two, &TimeCtx::ZERO).unwrap();
        let p = field.get([4, 4, 4]);
        let g = p.core.g;
        assert_relative_eq!(p.core.sc, -6.0, epsilon = 6.0 * tol);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(p.core.ric.get(i, j), -2.0 * g.get(i, j), epsilon = tol);
                assert_relative_eq!(p.core.ein.get(i, j), g.get(i, j), epsilon = tol);
                assert_relative_eq!(p.core.adj_ein.get(i, j), g.get(i, j), epsilon = tol);
            }
        }
        for k in 0..3 {
            assert_relative_eq!(p.lambda[k], 1.0, epsilon = tol);
        }
        assert_relative_eq!(p.core.det_e, 1.0, epsilon = tol);
        assert!(p.core.ein_spd);
        // all sectional curvatures -1
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_relative_eq!(sectional(p, i, j).unwrap(), -1.0, epsilon = tol);
        }
    }

    #[test]
    fn flat_metric_zero_curvature() {
        let grid = MetricGrid::from_family(
            [5, 5, 5],
            [0.1, 0.1, 0.1],
            [0.0, 0.0, 0.0],
            BoundaryMode::Periodic,
            Family::PeriodicSynthetic {
                amp: 0.0,
                period: [0.5, 0.5, 0.5],
            },
        )
        .unwrap();
        let field = curvature_pack_field(&grid, StencilOrder::Two, &TimeCtx::ZERO).unwrap();
        let p = field.get([2, 2, 2]);
        assert!(rm_max_abs(&p.rm) < 1e-14);
        assert!(p.core.ein.max_abs() < 1e-14);
        assert!(p.core.adj_ein.max_abs() < 1e-14);
        assert!(!p.core.ein_spd);
    }

    #[test]
    fn k2_family_converges_at_second_order() {
        // K0 = -2: Ein = 2g, lambda = 2, adjEin = 4g, detE = 8.
        let mut errs = Vec::new();
        for &n in &[9usize, 17] {
            let h = 0.25 / (n - 1) as f64;
            let grid = hyp_grid(-2.0, n, h);
            let field = curvature_pack_field(&grid, StencilOrder::Two, &TimeCtx::ZERO).unwrap();
            let c = (n - 1) / 2;
            let p = field.get([c, c, c]);
            let g = p.core.g;
            let mut err = (p.core.det_e - 8.0).abs() / 8.0;
            for i in 0..3 {
                for j in 0..3 {
                    err = err.max((p.core.ein.get(i, j) - 2.0 * g.get(i, j)).abs());
                    err = err.max((p.core.adj_ein.get(i, j) - 4.0 * g.get(i, j)).abs() / 4.0);
                }
            }
            for k in 0..3 {
                err = err.max((p.lambda[k] - 2.0).abs() / 2.0);
            }
            errs.push(err);
        }
        let ratio = errs[0] / errs[1];
        assert!(
            ratio > 3.0 && ratio < 5.2,
            "expected 2nd order convergence, errors {errs:?}, ratio {ratio}"
        );
    }

    #[test]
    fn eigen_model_cross_eigenvalues() {
        // lambda = (1,2,3): adjEin eigenvalues must be (6,3,2) -> sorted (2,3,6).
        let g = SymMat3::identity();
        let ein = SymMat3::diag(1.0, 2.0, 3.0);
        let pack = pack_from_g_ein(g, ein).unwrap();
        let (adj_vals, _) = sym3::eigen_g_sym(&g, &pack.core.adj_ein).unwrap();
        assert_relative_eq!(adj_vals[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(adj_vals[1], 3.0, epsilon = 1e-12);
        assert_relative_eq!(adj_vals[2], 6.0, epsilon = 1e-12);
        // sectional of plane (E1,E2) = -lambda_3 = -3, plane (E2,E3) = -1
        assert_relative_eq!(sectional(&pack, 0, 1).unwrap(), -3.0, epsilon = 1e-12);
        assert_relative_eq!(sectional(&pack, 1, 2).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn cross_via_ricci_matches_diag_model() {
        let g = SymMat3::identity();
        let ein = SymMat3::diag(1.0, 2.0, 3.0);
        let pack = pack_from_g_ein(g, ein).unwrap();
        let c = cross_via_ricci_e(&pack);
        let expect = SymMat3::diag(6.0, 3.0, 2.0);
        for k in 0..6 {
            assert_relative_eq!(c.m[k], expect.m[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn decomposition_residual_tiny_on_synthetic_and_small_on_grid() {
        let g = SymMat3::new([1.3, 0.2, -0.1, 0.9, 0.15, 1.7]);
        let ein = SymMat3::new([0.8, 0.1, 0.05, 1.2, -0.2, 0.6]);
        let pack = pack_from_g_ein(g, ein).unwrap();
        assert!(ricci_decomposition_residual(&pack) < 1e-13);
        assert!(cross_equiv_rel_residual(&pack) < 1e-13);

        let grid = hyp_grid(-1.0, 9, 1.0 / 16.0);
        let field = curvature_pack_field(&grid, StencilOrder::Two, &TimeCtx::ZERO).unwrap();
        let p = field.get([4, 4, 4]);
        assert!(ricci_decomposition_residual(p) < 1e-3);
    }

    fn cross_equiv_rel_residual(pack: &CurvaturePack) -> f64 {
        let a = cross_via_ricci_e(pack);
        let b = pack.core.adj_ein;
        (a - b).max_abs() / b.max_abs().max(1e-30)
    }

    #[test]
    fn sectional_rejects_equal_axes() {
        let pack = pack_from_g_ein(SymMat3::identity(), SymMat3::identity()).unwrap();
        assert!(matches!(
            sectional(&pack, 1, 1),
            Err(XcfError::DegeneratePlane { .. })
        ));
    }
}
