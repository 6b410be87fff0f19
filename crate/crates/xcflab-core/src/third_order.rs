//! Third-order objects built from the covariant derivative of the Einstein
//! tensor: T^{kij} = E^{kl} ∇_l E^{ij}, its traces, the Devil tensor, and the
//! Codazzi defect of Ob = sqrt(det E) E^{-1}.
//!
//! Everything here is pointwise algebra over a single covariant-derivative
//! field W_l^{ij} = ∇_l E♯^{ij}.  Two structural choices make the continuum
//! identities hold at machine precision on discrete data:
//!
//! * W is projected so its contracted trace ∇_j E^{ij} vanishes exactly (the
//!   contracted second Bianchi identity, which finite differences only honor
//!   to truncation order).  The projection is a consistent O(h^p) correction.
//! * ∇Ob and ∇ det E are produced from W by the chain rule rather than by
//!   differencing Ob itself, so the cubic-form/Codazzi identity
//!   |D|^2_V det E = |∇_i Ob_jk − ∇_j Ob_ik|^2_E is exact algebra.
//!
//! The Bianchi-type identity for adj Ein is deliberately NOT projected: its
//! residual is computed raw so that it converges at the stencil order.

use crate::curvature::{core_at, CurvatureCore, StencilOrder};
use crate::error::{Result, XcfError};
use crate::grid::{Field, MetricGrid, TimeCtx};
use crate::sym3::SymMat3;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug)]
pub struct ThirdOrder {
    /// T^{kij} = E^{kl} ∇_l E^{ij}; symmetric in (i, j).
    pub t3: [[[f64; 3]; 3]; 3],
    /// T^i = V_{jk} T^{ijk} = E^{ij} ∇_j ln det opEin.
    pub t1: [f64; 3],
    /// Devil tensor D^{ijk}.
    pub devil: [[[f64; 3]; 3]; 3],
    /// ∇_i Ob_{jk} − ∇_j Ob_{ik}.
    pub codazzi_defect: [[[f64; 3]; 3]; 3],
    /// |D|^2_V.
    pub devil_norm2_v: f64,
    /// |codazzi_defect|^2 contracted with E♯ on all three slots.
    pub defect_norm2_e: f64,
    /// Max-norm of the raw (pre-projection) discrete div E♯ — the discrete
    /// Bianchi defect, a pure truncation-error diagnostic.
    pub bianchi_defect: f64,
    /// Max-norm of ∇Ob, the scale against which the Codazzi defect is judged.
    pub max_grad_ob: f64,
}

/// Pointwise third-order data from a core and a covariant derivative
/// W_l^{ij} = ∇_l E♯^{ij} (symmetric in ij).
pub fn third_order_point(core: &CurvatureCore, w_raw: &[[[f64; 3]; 3]; 3]) -> Result<ThirdOrder> {
    if !core.ein_spd {
        return Err(XcfError::NonPositiveEin { node: [0, 0, 0] });
    }
    let es = core.e_sharp;
    let v = core.v_inv;
    let d = core.det_e;
    let sq = core.sqrt_det_e;

    // raw Bianchi defect B^k = ∇_j E♯^{jk}
    let mut b = [0.0_f64; 3];
    for k in 0..3 {
        for j in 0..3 {
            b[k] += w_raw[j][j][k];
        }
    }
    let bianchi_defect = b.iter().fold(0.0_f64, |a, x| a.max(x.abs()));

    // Bianchi projection: w -= 1/4 (delta_l^i B^j + delta_l^j B^i)
    let mut w = *w_raw;
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut c = 0.0;
                if l == i {
                    c += 0.25 * b[j];
                }
                if l == j {
                    c += 0.25 * b[i];
                }
                w[l][i][j] -= c;
            }
        }
    }

    // T^{kij} = E♯^{kl} w_l^{ij}
    let mut t3 = [[[0.0; 3]; 3]; 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
                for l in 0..3 {
                    s += es.get(k, l) * w[l][i][j];
                }
                t3[k][i][j] = s;
            }
        }
    }

    // T^i = V_{jk} T^{ijk}
    let mut t1 = [0.0_f64; 3];
    for i in 0..3 {
        let mut s = 0.0;
        for j in 0..3 {
            for k in 0..3 {
                s += v.get(j, k) * t3[i][j][k];
            }
        }
        t1[i] = s;
    }

    // D^{ijk} = T^{ijk} − T^{jik} − ½ (T^i E♯^{jk} − T^j E♯^{ik})
    let mut devil = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                devil[i][j][k] = t3[i][j][k] - t3[j][i][k]
                    - 0.5 * (t1[i] * es.get(j, k) - t1[j] * es.get(i, k));
            }
        }
    }

    // chain rule: ∇_l Ob_{mn} = ½ sq (V : w_l) V_{mn} − sq V_{mp} V_{nq} w_l^{pq}
    let mut dob = [[[0.0; 3]; 3]; 3]; // dob[l][m][n]
    for l in 0..3 {
        let mut vw = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                vw += v.get(p, q) * w[l][p][q];
            }
        }
        for m in 0..3 {
            for n in 0..3 {
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        s += v.get(m, p) * v.get(n, q) * w[l][p][q];
                    }
                }
                dob[l][m][n] = 0.5 * sq * vw * v.get(m, n) - sq * s;
            }
        }
    }

    let mut codazzi_defect = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                codazzi_defect[i][j][k] = dob[i][j][k] - dob[j][i][k];
            }
        }
    }

    let devil_norm2_v = norm2_3tensor(&devil, &v);
    let defect_norm2_e = norm2_3tensor(&codazzi_defect, &es);
    let mut max_grad_ob = 0.0_f64;
    for row in dob.iter().flatten().flatten() {
        max_grad_ob = max_grad_ob.max(row.abs());
    }
    let _ = d;

    Ok(ThirdOrder {
        t3,
        t1,
        devil,
        codazzi_defect,
        devil_norm2_v,
        defect_norm2_e,
        bianchi_defect,
        max_grad_ob,
    })
}

/// |T|^2 with every slot contracted against the metric `q`: lower one copy
/// slot by slot, then take the full dot product.
fn norm2_3tensor(t: &[[[f64; 3]; 3]; 3], q: &SymMat3) -> f64 {
    let mut s1 = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let mut s = 0.0;
                for i in 0..3 {
                    s += q.get(a, i) * t[i][j][k];
                }
                s1[a][j][k] = s;
            }
        }
    }
    let mut s2 = [[[0.0; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for k in 0..3 {
                let mut s = 0.0;
                for j in 0..3 {
                    s += q.get(b, j) * s1[a][j][k];
                }
                s2[a][b][k] = s;
            }
        }
    }
    let mut out = 0.0;
    for a in 0..3 {
        for b in 0..3 {
            for k in 0..3 {
                for c in 0..3 {
                    out += q.get(c, k) * s2[a][b][k] * t[a][b][c];
                }
            }
        }
    }
    out
}

/// Covariant derivative of a symmetric (2,0)-tensor field by central
/// differences plus connection terms:
/// ∇_l T^{ij} = ∂_l T^{ij} + Γ^i_{lm} T^{mj} + Γ^j_{lm} T^{im}.
fn cov_deriv_20(
    core: &CurvatureCore,
    neighbor: impl Fn([isize; 3]) -> SymMat3,
    h: &[f64; 3],
    order: StencilOrder,
) -> [[[f64; 3]; 3]; 3] {
    let mut dpart = [SymMat3::ZERO; 3];
    for a in 0..3 {
        let unit = |k: isize| {
            let mut off = [0isize; 3];
            off[a] = k;
            neighbor(off)
        };
        dpart[a] = match order {
            StencilOrder::Two => (unit(1) - unit(-1)) * (0.5 / h[a]),
            StencilOrder::Four => {
                (unit(1) * 8.0 - unit(-1) * 8.0 - unit(2) + unit(-2)) * (1.0 / (12.0 * h[a]))
            }
        };
    }
    let mut w = [[[0.0; 3]; 3]; 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = dpart[l].get(i, j);
                for m in 0..3 {
                    s += core.gamma[i][l][m] * core.e_sharp.get(m, j)
                        + core.gamma[j][l][m] * core.e_sharp.get(i, m);
                }
                w[l][i][j] = s;
            }
        }
    }
    w
}

/// Covariant derivative of a symmetric (0,2)-tensor field (raw differences):
/// ∇_l S_{ij} = ∂_l S_{ij} − Γ^m_{li} S_{mj} − Γ^m_{lj} S_{im}.
fn cov_deriv_02(
    gamma: &[[[f64; 3]; 3]; 3],
    center: &SymMat3,
    neighbor: impl Fn([isize; 3]) -> SymMat3,
    h: &[f64; 3],
    order: StencilOrder,
) -> [[[f64; 3]; 3]; 3] {
    let mut dpart = [SymMat3::ZERO; 3];
    for a in 0..3 {
        let unit = |k: isize| {
            let mut off = [0isize; 3];
            off[a] = k;
            neighbor(off)
        };
        dpart[a] = match order {
            StencilOrder::Two => (unit(1) - unit(-1)) * (0.5 / h[a]),
            StencilOrder::Four => {
                (unit(1) * 8.0 - unit(-1) * 8.0 - unit(2) + unit(-2)) * (1.0 / (12.0 * h[a]))
            }
        };
    }
    let mut out = [[[0.0; 3]; 3]; 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = dpart[l].get(i, j);
                for m in 0..3 {
                    s -= gamma[m][l][i] * center.get(m, j) + gamma[m][l][j] * center.get(i, m);
                }
                out[l][i][j] = s;
            }
        }
    }
    out
}

/// E♯ at a node offset, falling back to an analytic ghost jet off the grid.
fn e_sharp_at(
    grid: &MetricGrid,
    field: &Field<CurvatureCore>,
    p: [isize; 3],
    order: StencilOrder,
    ctx: &TimeCtx,
) -> SymMat3 {
    let inside = (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < grid.dims[a]);
    if inside {
        field.get([p[0] as usize, p[1] as usize, p[2] as usize]).e_sharp
    } else {
        match core_at(grid, p, order, ctx) {
            Ok(c) => c.e_sharp,
            Err(_) => SymMat3::ZERO,
        }
    }
}

fn adj_ein_at(
    grid: &MetricGrid,
    field: &Field<CurvatureCore>,
    p: [isize; 3],
    order: StencilOrder,
    ctx: &TimeCtx,
) -> SymMat3 {
    let inside = (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < grid.dims[a]);
    if inside {
        field.get([p[0] as usize, p[1] as usize, p[2] as usize]).adj_ein
    } else {
        match core_at(grid, p, order, ctx) {
            Ok(c) => c.adj_ein,
            Err(_) => SymMat3::ZERO,
        }
    }
}

/// Third-order field at every stored node.
pub fn third_order_field(
    grid: &MetricGrid,
    field: &Field<CurvatureCore>,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<Field<ThirdOrder>> {
    let data: Result<Vec<ThirdOrder>> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n1 = grid.dims[0];
            let n2 = grid.dims[1];
            let n = [flat % n1, (flat / n1) % n2, flat / (n1 * n2)];
            let core = field.get(n);
            if !core.ein_spd {
                return Err(XcfError::NonPositiveEin { node: n });
            }
            let p = [n[0] as isize, n[1] as isize, n[2] as isize];
            let w = cov_deriv_20(
                core,
                |off| e_sharp_at(grid, field, [p[0] + off[0], p[1] + off[1], p[2] + off[2]], order, ctx),
                &grid.h,
                order,
            );
            third_order_point(core, &w).map_err(|_| XcfError::NonPositiveEin { node: n })
        })
        .collect();
    Ok(Field {
        dims: grid.dims,
        data: data?,
    })
}

/// Max-norm over interior nodes of the Bianchi-type identity for adj Ein:
/// E^{ij} ∇_i adjE_{jk} − ½ E^{ij} ∇_k adjE_{ij}.  Raw differences; converges
/// to zero at the stencil order.
pub fn bianchi_cross_residual(
    grid: &MetricGrid,
    field: &Field<CurvatureCore>,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<f64> {
    let interior: Vec<[usize; 3]> = grid.interior_nodes().collect();
    let residuals: Result<Vec<f64>> = interior
        .into_par_iter()
        .map(|n| {
            let core = field.get(n);
            if !core.ein_spd {
                return Err(XcfError::NonPositiveEin { node: n });
            }
            let p = [n[0] as isize, n[1] as isize, n[2] as isize];
            let dadj = cov_deriv_02(
                &core.gamma,
                &core.adj_ein,
                |off| adj_ein_at(grid, field, [p[0] + off[0], p[1] + off[1], p[2] + off[2]], order, ctx),
                &grid.h,
                order,
            );
            let es = core.e_sharp;
            let mut worst = 0.0_f64;
            for k in 0..3 {
                let mut r = 0.0;
                for i in 0..3 {
                    for j in 0..3 {
                        r += es.get(i, j) * (dadj[i][j][k] - 0.5 * dadj[k][i][j]);
                    }
                }
                worst = worst.max(r.abs());
            }
            Ok(worst)
        })
        .collect();
    Ok(residuals?.into_iter().fold(0.0, f64::max))
}

// ---- identity diagnostics ----------------------------------------------------

/// Largest violation of the Devil-tensor symmetry identities
/// (antisymmetry in the first two slots, cyclic sum, V-traces on all pairs).
pub fn devil_identity_residual(core: &CurvatureCore, third: &ThirdOrder) -> f64 {
    let d = &third.devil;
    let v = &core.v_inv;
    let mut worst = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                worst = worst.max((d[i][j][k] + d[j][i][k]).abs());
                worst = worst.max((d[i][j][k] + d[k][i][j] + d[j][k][i]).abs());
            }
        }
    }
    for k in 0..3 {
        let mut tr_ij = 0.0;
        let mut tr_ik = 0.0;
        let mut tr_jk = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                tr_ij += v.get(a, b) * d[a][b][k];
                tr_ik += v.get(a, b) * d[a][k][b];
                tr_jk += v.get(a, b) * d[k][a][b];
            }
        }
        worst = worst.max(tr_ij.abs()).max(tr_ik.abs()).max(tr_jk.abs());
    }
    worst
}

/// Relative violation of |D|^2_V det E = |∇_i Ob_jk − ∇_j Ob_ik|^2_E.
pub fn cubic_codazzi_residual(core: &CurvatureCore, third: &ThirdOrder) -> f64 {
    let lhs = third.devil_norm2_v * core.det_e;
    let rhs = third.defect_norm2_e;
    (lhs - rhs).abs() / rhs.abs().max(lhs.abs()).max(1e-30)
}
