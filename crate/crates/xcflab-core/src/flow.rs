//! Time evolution of metric grids under the cross curvature flow
//! ∂t g = 2 adj Ein, its DeTurck gauge-fixed version, and the normalized flow
//! ∂t g = 2 adj Ein − 2 K^2 g, with the monitor suite and the evolution
//! equation residual checks.
//!
//! Dirichlet boundaries: the outermost node layer is forced by the analytic
//! family (value after each step, time derivative inside RK4 stages).  The
//! interior evolves freely.

use crate::curvature::{
    core_at, curvature_core_field, CurvatureCore, StencilOrder,
};
use crate::error::{Result, XcfError};
use crate::grid::{Field, FlowLaw, MetricGrid, TimeCtx};
use crate::monitor::{self, MonitorRow, NodeSample};
use crate::sym3::{self, SymMat3};
use crate::third_order::{third_order_field, ThirdOrder};
use rayon::prelude::*;
use std::sync::Arc;

pub const DEFAULT_CFL: f64 = 0.2;
const EIN_DEGENERATE_EIG: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowVariant {
    Raw,
    Deturck,
    Normalized { k: f64 },
}

impl FlowVariant {
    pub fn law(&self) -> FlowLaw {
        match self {
            FlowVariant::Normalized { k } => FlowLaw::Normalized { k: *k },
            _ => FlowLaw::Raw,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum DtSpec {
    Fixed(f64),
    /// dt = c * h_min^2 / max lambda_max(opEin), fixed at t = 0.
    Cfl(f64),
}

#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub step: u64,
    pub metric: MetricGrid,
    /// g_0 for the DeTurck vector field; immutable along the run.
    pub reference: Option<Arc<MetricGrid>>,
}

impl FlowState {
    pub fn new(metric: MetricGrid) -> Self {
        FlowState {
            t: 0.0,
            step: 0,
            metric,
            reference: None,
        }
    }

    pub fn with_reference(metric: MetricGrid) -> Self {
        let reference = Arc::new(metric.clone());
        FlowState {
            t: 0.0,
            step: 0,
            metric,
            reference: Some(reference),
        }
    }

    pub fn ctx(&self, variant: FlowVariant) -> TimeCtx {
        TimeCtx {
            t: self.t,
            law: variant.law(),
        }
    }
}

// ---- right-hand sides ---------------------------------------------------------

fn boundary_forcing(grid: &MetricGrid, n: [usize; 3], ctx: &TimeCtx) -> SymMat3 {
    grid.family.eval_dt(grid.pos(n), ctx)
}

/// Raw XCF right side: 2 adj Ein at interior nodes, family time derivative on
/// the boundary layer.
pub fn xcf_rhs(state: &FlowState, core: &Field<CurvatureCore>, ctx: &TimeCtx) -> Field<SymMat3> {
    let grid = &state.metric;
    let data: Vec<SymMat3> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n = node_of(grid, flat);
            if grid.is_boundary(n) && grid.boundary == crate::grid::BoundaryMode::DirichletAnalytic
            {
                boundary_forcing(grid, n, ctx)
            } else {
                core.data[flat].adj_ein * 2.0
            }
        })
        .collect();
    Field {
        dims: grid.dims,
        data,
    }
}

/// Normalized right side: 2 adj Ein − 2 K^2 g.
pub fn normalized_rhs(
    state: &FlowState,
    core: &Field<CurvatureCore>,
    k: f64,
    ctx: &TimeCtx,
) -> Field<SymMat3> {
    let grid = &state.metric;
    let data: Vec<SymMat3> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n = node_of(grid, flat);
            if grid.is_boundary(n) && grid.boundary == crate::grid::BoundaryMode::DirichletAnalytic
            {
                boundary_forcing(grid, n, ctx)
            } else {
                core.data[flat].adj_ein * 2.0 - core.data[flat].g * (2.0 * k * k)
            }
        })
        .collect();
    Field {
        dims: grid.dims,
        data,
    }
}

/// DeTurck vector field W^k = g^{pq} (Γ^k_{pq} − Γ0^k_{pq}).
///
/// The sign is fixed by the requirement that the same W makes the DeTurck
/// Ricci flow symbol exactly |ξ|^2_g Id (the gauge term must cancel the
/// degenerate terms, not double them).
fn deturck_w(
    core: &CurvatureCore,
    gamma0: &[[[f64; 3]; 3]; 3],
) -> [f64; 3] {
    let gi = core.g_inv;
    let mut w = [0.0; 3];
    for k in 0..3 {
        let mut s = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                s += gi.get(p, q) * (core.gamma[k][p][q] - gamma0[k][p][q]);
            }
        }
        w[k] = s;
    }
    w
}

/// Lie-derivative gauge term (L_W g)_{ij} = g_{jk} ∇_i W^k + g_{ik} ∇_j W^k,
/// with W the Ricci-flow DeTurck field against the run's reference metric.
/// Exposed separately so the defining split deturck_rhs = xcf_rhs + L_W g is
/// testable.
pub fn lie_deturck_term(
    state: &FlowState,
    core: &Field<CurvatureCore>,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<Field<SymMat3>> {
    let grid = &state.metric;
    let reference = state
        .reference
        .as_ref()
        .ok_or_else(|| XcfError::Config("DeTurck flow needs a reference metric".into()))?;
    let ctx0 = TimeCtx::ZERO;
    let ref_core = curvature_core_field(reference, order, &ctx0)?;

    // W at every stored node
    let w_field: Vec<[f64; 3]> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let g0 = &ref_core.data[flat].gamma;
            deturck_w(&core.data[flat], g0)
        })
        .collect();

    let w_at = |p: [isize; 3]| -> Result<[f64; 3]> {
        let inside = (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < grid.dims[a]);
        if inside {
            let n = [p[0] as usize, p[1] as usize, p[2] as usize];
            Ok(w_field[grid.idx(n)])
        } else {
            let c = core_at(grid, p, order, ctx)?;
            let c0 = core_at(reference, p, order, &ctx0)?;
            Ok(deturck_w(&c, &c0.gamma))
        }
    };

    let data: Result<Vec<SymMat3>> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n = node_of(grid, flat);
            let c = &core.data[flat];
            let p = [n[0] as isize, n[1] as isize, n[2] as isize];
            // ∇_i W^k = ∂_i W^k + Γ^k_{im} W^m
            let mut dw = [[0.0; 3]; 3]; // dw[i][k] = ∇_i W^k
            for a in 0..3 {
                let mut off = [0isize; 3];
                off[a] = 1;
                let wp = w_at([p[0] + off[0], p[1] + off[1], p[2] + off[2]])?;
                let wm = w_at([p[0] - off[0], p[1] - off[1], p[2] - off[2]])?;
                for k in 0..3 {
                    dw[a][k] = (wp[k] - wm[k]) / (2.0 * grid.h[a]);
                }
            }
            let w0 = w_field[flat];
            for i in 0..3 {
                for k in 0..3 {
                    for m in 0..3 {
                        dw[i][k] += c.gamma[k][i][m] * w0[m];
                    }
                }
            }
            Ok(SymMat3::from_fn(|i, j| {
                let mut s = 0.0;
                for k in 0..3 {
                    s += c.g.get(j, k) * dw[i][k] + c.g.get(i, k) * dw[j][k];
                }
                s
            }))
        })
        .collect();
    Ok(Field {
        dims: grid.dims,
        data: data?,
    })
}

/// DeTurck XCF right side: 2 adj Ein + L_W g.
pub fn deturck_rhs(
    state: &FlowState,
    core: &Field<CurvatureCore>,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<Field<SymMat3>> {
    let grid = &state.metric;
    let lie = lie_deturck_term(state, core, order, ctx)?;
    let data: Vec<SymMat3> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n = node_of(grid, flat);
            if grid.is_boundary(n) && grid.boundary == crate::grid::BoundaryMode::DirichletAnalytic
            {
                boundary_forcing(grid, n, ctx)
            } else {
                core.data[flat].adj_ein * 2.0 + lie.data[flat]
            }
        })
        .collect();
    Ok(Field {
        dims: grid.dims,
        data,
    })
}

pub fn rhs_for(
    state: &FlowState,
    core: &Field<CurvatureCore>,
    variant: FlowVariant,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<Field<SymMat3>> {
    match variant {
        FlowVariant::Raw => Ok(xcf_rhs(state, core, ctx)),
        FlowVariant::Normalized { k } => Ok(normalized_rhs(state, core, k, ctx)),
        FlowVariant::Deturck => deturck_rhs(state, core, order, ctx),
    }
}

fn node_of(grid: &MetricGrid, flat: usize) -> [usize; 3] {
    let n1 = grid.dims[0];
    let n2 = grid.dims[1];
    [flat % n1, (flat / n1) % n2, flat / (n1 * n2)]
}

/// (min over nodes of lambda_min, max over nodes of lambda_max) of opEin.
pub fn spectral_range(core: &Field<CurvatureCore>) -> (f64, f64) {
    core.data
        .par_iter()
        .map(|c| {
            match sym3::eigen_g_sym(&c.g, &c.ein) {
                Some((vals, _)) => (vals[0], vals[2]),
                None => (f64::NEG_INFINITY, f64::INFINITY),
            }
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.max(b.1)),
        )
}

/// CFL bound cfl * h_min^2 / lambda_max for the principal part E^{ij} ∇^2_{ij}.
pub fn cfl_bound(core: &Field<CurvatureCore>, h: &[f64; 3], cfl: f64) -> f64 {
    let (_, lam_max) = spectral_range(core);
    let hmin = h[0].min(h[1]).min(h[2]);
    cfl * hmin * hmin / lam_max.max(1e-300)
}

/// Von Neumann stable step for RK4 on the flow's principal part
/// 2 E♯^{ab} ∂_a ∂_b: the stiffest aligned mode sees
/// dt * 8 * sum_a E♯^{aa} / h_a^2 (times 4/3 for the wider 4th-order
/// stencil), which must stay inside RK4's real stability interval (~2.785);
/// a 0.7 margin absorbs the cross terms.
pub fn stable_dt(core: &Field<CurvatureCore>, h: &[f64; 3], order: StencilOrder) -> f64 {
    let s_max = core
        .data
        .par_iter()
        .map(|c| {
            (0..3)
                .map(|a| c.e_sharp.get(a, a).abs() / (h[a] * h[a]))
                .sum::<f64>()
        })
        .reduce(|| 0.0, f64::max);
    let widen = match order {
        StencilOrder::Two => 1.0,
        StencilOrder::Four => 4.0 / 3.0,
    };
    0.7 * 2.785 / (8.0 * widen * s_max.max(1e-300))
}

fn add_scaled(grid: &MetricGrid, k: &Field<SymMat3>, c: f64) -> MetricGrid {
    let mut out = grid.clone();
    for (v, dv) in out.values.iter_mut().zip(k.data.iter()) {
        *v = *v + *dv * c;
    }
    out
}

/// One classical RK4 step; Dirichlet boundary values are reset from the
/// family at the new time.  Errors rather than stepping when dt violates the
/// CFL bound or Ein is already degenerate.
pub fn step(
    state: &FlowState,
    dt: f64,
    variant: FlowVariant,
    order: StencilOrder,
    cfl: f64,
) -> Result<FlowState> {
    let ctx = state.ctx(variant);
    let core1 = curvature_core_field(&state.metric, order, &ctx)?;
    step_with_core(state, &core1, dt, variant, order, cfl)
}

pub fn step_with_core(
    state: &FlowState,
    core1: &Field<CurvatureCore>,
    dt: f64,
    variant: FlowVariant,
    order: StencilOrder,
    cfl: f64,
) -> Result<FlowState> {
    let ctx = state.ctx(variant);
    let (lam_min, lam_max) = spectral_range(core1);
    if lam_min < EIN_DEGENERATE_EIG {
        return Err(XcfError::EinDegenerate {
            t: state.t,
            min_eig: lam_min,
        });
    }
    let hmin = state.metric.h.iter().cloned().fold(f64::INFINITY, f64::min);
    let bound = cfl * hmin * hmin / lam_max;
    if dt > bound {
        return Err(XcfError::CflViolation { dt, bound });
    }

    let grid = &state.metric;
    let law = variant.law();
    let at = |t: f64| TimeCtx { t, law };

    let k1 = rhs_for(state, core1, variant, order, &ctx)?;
    let mk = |g: MetricGrid, t: f64| FlowState {
        t,
        step: state.step,
        metric: g,
        reference: state.reference.clone(),
    };

    let s2 = mk(add_scaled(grid, &k1, 0.5 * dt), state.t + 0.5 * dt);
    let c2 = curvature_core_field(&s2.metric, order, &at(s2.t))?;
    let k2 = rhs_for(&s2, &c2, variant, order, &at(s2.t))?;

    let s3 = mk(add_scaled(grid, &k2, 0.5 * dt), state.t + 0.5 * dt);
    let c3 = curvature_core_field(&s3.metric, order, &at(s3.t))?;
    let k3 = rhs_for(&s3, &c3, variant, order, &at(s3.t))?;

    let s4 = mk(add_scaled(grid, &k3, dt), state.t + dt);
    let c4 = curvature_core_field(&s4.metric, order, &at(s4.t))?;
    let k4 = rhs_for(&s4, &c4, variant, order, &at(s4.t))?;

    let mut metric = grid.clone();
    for flat in 0..metric.values.len() {
        metric.values[flat] = metric.values[flat]
            + (k1.data[flat] + k2.data[flat] * 2.0 + k3.data[flat] * 2.0 + k4.data[flat])
                * (dt / 6.0);
    }
    let t_new = state.t + dt;
    if metric.boundary == crate::grid::BoundaryMode::DirichletAnalytic {
        metric.reset_boundary(&at(t_new));
    }
    Ok(FlowState {
        t: t_new,
        step: state.step + 1,
        metric,
        reference: state.reference.clone(),
    })
}

// ---- per-state analysis and derivative monitors --------------------------------

type W3 = [[[f64; 3]; 3]; 3];

/// Everything the monitors need from one accepted state.
pub struct StateAnalysis {
    pub core: Field<CurvatureCore>,
    pub third: Field<ThirdOrder>,
    /// Raw ∇_l E♯^{ij} (no Bianchi projection) at every stored node.
    pub w_raw: Field<W3>,
    pub lam_min: f64,
    pub lam_max: f64,
}

fn e_sharp_at(
    grid: &MetricGrid,
    core: &Field<CurvatureCore>,
    p: [isize; 3],
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<SymMat3> {
    let inside = (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < grid.dims[a]);
    if inside {
        Ok(core
            .get([p[0] as usize, p[1] as usize, p[2] as usize])
            .e_sharp)
    } else {
        Ok(core_at(grid, p, order, ctx)?.e_sharp)
    }
}

fn raw_w_field(
    grid: &MetricGrid,
    core: &Field<CurvatureCore>,
    order: StencilOrder,
    ctx: &TimeCtx,
) -> Result<Field<W3>> {
    let data: Result<Vec<W3>> = (0..grid.node_count())
        .into_par_iter()
        .map(|flat| {
            let n = node_of(grid, flat);
            let c = &core.data[flat];
            let p = [n[0] as isize, n[1] as isize, n[2] as isize];
            let mut w = [[[0.0; 3]; 3]; 3];
            for a in 0..3 {
                let mut off = [0isize; 3];
                off[a] = 1;
                let ep = e_sharp_at(grid, core, [p[0] + off[0], p[1] + off[1], p[2] + off[2]], order, ctx)?;
                let em = e_sharp_at(grid, core, [p[0] - off[0], p[1] - off[1], p[2] - off[2]], order, ctx)?;
                let d = (ep - em) * (0.5 / grid.h[a]);
                for i in 0..3 {
                    for j in 0..3 {
                        let mut s = d.get(i, j);
                        for m in 0..3 {
                            s += c.gamma[i][a][m] * c.e_sharp.get(m, j)
                                + c.gamma[j][a][m] * c.e_sharp.get(i, m);
                        }
                        w[a][i][j] = s;
                    }
                }
            }
            Ok(w)
        })
        .collect();
    Ok(Field {
        dims: grid.dims,
        data: data?,
    })
}

pub fn analyze_state(
    state: &FlowState,
    variant: FlowVariant,
    order: StencilOrder,
) -> Result<StateAnalysis> {
    let ctx = state.ctx(variant);
    let core = curvature_core_field(&state.metric, order, &ctx)?;
    let (lam_min, lam_max) = spectral_range(&core);
    let third = third_order_field(&state.metric, &core, order, &ctx)?;
    let w_raw = raw_w_field(&state.metric, &core, order, &ctx)?;
    Ok(StateAnalysis {
        core,
        third,
        w_raw,
        lam_min,
        lam_max,
    })
}

/// Quadrature part of the monitor row for one analyzed state.
pub fn quadrature_row(grid: &MetricGrid, an: &StateAnalysis, t: f64) -> MonitorRow {
    let cell = grid.h[0] * grid.h[1] * grid.h[2];
    let samples = grid.interior_nodes().map(|n| {
        let c = an.core.get(n);
        let th = an.third.get(n);
        NodeSample {
            weight: c.g.det().max(0.0).sqrt() * cell,
            det_e: c.det_e,
            tr_e: c.tr_e,
            trace_cross: c.trace_cross,
            devil_norm2_v: th.devil_norm2_v,
        }
    });
    monitor::row_from_samples(t, samples)
}

/// min over interior nodes of the Harnack quantity
/// ∂t sqrt(detE) − |∇ sqrt(detE)|^2_E / sqrt(detE) + (3/4t) sqrt(detE).
pub fn harnack_min(
    grid: &MetricGrid,
    prev: &StateAnalysis,
    cur: &StateAnalysis,
    next: &StateAnalysis,
    t: f64,
    dt: f64,
) -> Option<f64> {
    if t <= 0.0 {
        return None;
    }
    let sq = |an: &StateAnalysis, n: [usize; 3]| an.core.get(n).det_e.max(0.0).sqrt();
    let mut worst = f64::INFINITY;
    for n in grid.interior_nodes() {
        let s0 = sq(cur, n);
        let dts = (sq(next, n) - sq(prev, n)) / (2.0 * dt);
        let mut grad = [0.0; 3];
        for a in 0..3 {
            let mut np = n;
            let mut nm = n;
            np[a] += 1;
            nm[a] -= 1;
            grad[a] = (sq(cur, np) - sq(cur, nm)) / (2.0 * grid.h[a]);
        }
        let es = cur.core.get(n).e_sharp;
        let mut grad2 = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                grad2 += es.get(a, b) * grad[a] * grad[b];
            }
        }
        let hq = dts - grad2 / s0.max(1e-300) + 3.0 / (4.0 * t) * s0;
        worst = worst.min(hq);
    }
    Some(worst)
}

/// Nodes at least `margin` cells away from every face.
fn nodes_with_margin(dims: [usize; 3], margin: usize) -> Vec<[usize; 3]> {
    let mut out = Vec::new();
    if dims.iter().any(|&d| d <= 2 * margin) {
        return out;
    }
    for k in margin..dims[2] - margin {
        for j in margin..dims[1] - margin {
            for i in margin..dims[0] - margin {
                out.push([i, j, k]);
            }
        }
    }
    out
}

/// Max-norm residuals of the evolution equations for Ein♯ and det opEin,
/// centered time differences against the spatial right-hand sides.
///
/// Measured over nodes whose full residual stencil (metric out to three
/// cells) lies in the freely evolved region: the Dirichlet layer is exact for
/// the continuum solution but differs from the discrete interior solution at
/// truncation order, and the nested differences amplify that seam.
pub fn evolution_residuals_from(
    grid: &MetricGrid,
    prev: &StateAnalysis,
    cur: &StateAnalysis,
    next: &StateAnalysis,
    dt: f64,
) -> (f64, f64) {
    let interior: Vec<[usize; 3]> = nodes_with_margin(grid.dims, 3);
    let (res_e, res_d) = interior
        .par_iter()
        .map(|&n| {
            let c = cur.core.get(n);
            let es = c.e_sharp;
            let gi = c.g_inv;
            let w = cur.w_raw.get(n);
            let p = [n[0] as isize, n[1] as isize, n[2] as isize];

            // second covariant derivative of E♯ contracted with E♯ (Box)
            let mut boxed = [[0.0_f64; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    // ∇_a (∇E♯)_b = ∂_a W_b − Γ^c_{ab} W_c + Γ^i_{am} W_b^{mj} + Γ^j_{am} W_b^{im}
                    let mut offp = p;
                    let mut offm = p;
                    offp[a] += 1;
                    offm[a] -= 1;
                    let in_range = |q: [isize; 3]| {
                        (0..3).all(|d| q[d] >= 0 && (q[d] as usize) < grid.dims[d])
                    };
                    // interior nodes always have stored neighbors
                    debug_assert!(in_range(offp) && in_range(offm));
                    let wp = cur
                        .w_raw
                        .get([offp[0] as usize, offp[1] as usize, offp[2] as usize]);
                    let wm = cur
                        .w_raw
                        .get([offm[0] as usize, offm[1] as usize, offm[2] as usize]);
                    for i in 0..3 {
                        for j in 0..3 {
                            let mut s = (wp[b][i][j] - wm[b][i][j]) / (2.0 * grid.h[a]);
                            for m in 0..3 {
                                s -= c.gamma[m][a][b] * w[m][i][j];
                                s += c.gamma[i][a][m] * w[b][m][j] + c.gamma[j][a][m] * w[b][i][m];
                            }
                            boxed[i][j] += es.get(a, b) * s;
                        }
                    }
                }
            }

            // ∂t E♯ centered
            let mut worst_e = 0.0_f64;
            let ep = next.core.get(n).e_sharp;
            let em = prev.core.get(n).e_sharp;
            for i in 0..3 {
                for j in 0..3 {
                    let dte = (ep.get(i, j) - em.get(i, j)) / (2.0 * dt);
                    let mut grad_sq = 0.0;
                    for k in 0..3 {
                        for l in 0..3 {
                            grad_sq += w[l][k][i] * w[k][l][j];
                        }
                    }
                    let rhs = boxed[i][j] - grad_sq - 4.0 * c.det_e * gi.get(i, j);
                    worst_e = worst_e.max((dte - rhs).abs());
                }
            }

            // det opEin equation: ∂t d = Box d − (|E∇d|^2_V / 2d^2 − |D|^2_V/2 + 2H) d
            let dfield = |an: &StateAnalysis, q: [usize; 3]| an.core.get(q).det_e;
            let dtd = (dfield(next, n) - dfield(prev, n)) / (2.0 * dt);
            let mut grad_d = [0.0; 3];
            let mut hess = [[0.0; 3]; 3];
            for a in 0..3 {
                let mut np = n;
                let mut nm = n;
                np[a] += 1;
                nm[a] -= 1;
                grad_d[a] = (dfield(cur, np) - dfield(cur, nm)) / (2.0 * grid.h[a]);
                hess[a][a] = (dfield(cur, np) - 2.0 * dfield(cur, n) + dfield(cur, nm))
                    / (grid.h[a] * grid.h[a]);
            }
            for a in 0..3 {
                for b in a + 1..3 {
                    // interior-of-interior mixed stencil may touch the boundary layer; stored either way
                    let q = |da: isize, db: isize| {
                        let mut m = [n[0] as isize, n[1] as isize, n[2] as isize];
                        m[a] += da;
                        m[b] += db;
                        dfield(cur, [m[0] as usize, m[1] as usize, m[2] as usize])
                    };
                    let v = (q(1, 1) - q(1, -1) - q(-1, 1) + q(-1, -1))
                        / (4.0 * grid.h[a] * grid.h[b]);
                    hess[a][b] = v;
                    hess[b][a] = v;
                }
            }
            let mut box_d = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let mut s = hess[a][b];
                    for m in 0..3 {
                        s -= c.gamma[m][a][b] * grad_d[m];
                    }
                    box_d += es.get(a, b) * s;
                }
            }
            let mut e_grad_d2 = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    e_grad_d2 += es.get(a, b) * grad_d[a] * grad_d[b];
                }
            }
            let d = c.det_e;
            let devil2 = cur.third.get(n).devil_norm2_v;
            let rhs_d = box_d
                - (e_grad_d2 / (2.0 * d * d) - 0.5 * devil2 + 2.0 * c.trace_cross) * d;
            let res_d = (dtd - rhs_d).abs();

            (worst_e, res_d)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    (res_e, res_d)
}

/// Public form of the evolution-residual op on three consecutive raw states.
pub fn evolution_residuals(
    prev: &FlowState,
    cur: &FlowState,
    next: &FlowState,
    order: StencilOrder,
) -> Result<(f64, f64)> {
    let same_grid = prev.metric.dims == cur.metric.dims
        && cur.metric.dims == next.metric.dims
        && prev.metric.h == cur.metric.h
        && cur.metric.h == next.metric.h;
    let dt1 = cur.t - prev.t;
    let dt2 = next.t - cur.t;
    if !same_grid || dt1 <= 0.0 || (dt1 - dt2).abs() > 1e-12 * dt1.max(dt2) {
        return Err(XcfError::MismatchedGrids);
    }
    let ap = analyze_state(prev, FlowVariant::Raw, order)?;
    let ac = analyze_state(cur, FlowVariant::Raw, order)?;
    let an = analyze_state(next, FlowVariant::Raw, order)?;
    Ok(evolution_residuals_from(&cur.metric, &ap, &ac, &an, dt1))
}

// ---- the runner -----------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowStatus {
    Completed,
    EinDegenerate { t: f64 },
    CflStall { t: f64 },
}

impl FlowStatus {
    pub fn label(&self) -> String {
        match self {
            FlowStatus::Completed => "completed".into(),
            FlowStatus::EinDegenerate { t } => format!("ein-degenerate({t:.6})"),
            FlowStatus::CflStall { t } => format!("cfl-stall({t:.6})"),
        }
    }
}

pub struct FlowRun {
    pub monitors: Vec<MonitorRow>,
    pub status: FlowStatus,
    pub final_state: FlowState,
    pub dt: f64,
}

pub struct RunOptions<'a> {
    pub variant: FlowVariant,
    pub t_end: f64,
    pub dt: DtSpec,
    pub order: StencilOrder,
    pub cfl: f64,
    /// Write a snapshot every `cadence` accepted steps (0 = never).
    pub snapshot_cadence: usize,
    pub on_snapshot: Option<&'a mut dyn FnMut(u64, f64, &MetricGrid) -> Result<()>>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions {
            variant: FlowVariant::Raw,
            t_end: 0.1,
            dt: DtSpec::Cfl(DEFAULT_CFL),
            order: StencilOrder::Two,
            cfl: DEFAULT_CFL,
            snapshot_cadence: 0,
            on_snapshot: None,
        }
    }
}

/// Run the flow from the given grid, producing the monitor series and a
/// terminal status.  Degeneracy and CFL stalls end the run with a status
/// rather than an error.
pub fn run_flow(grid: MetricGrid, mut opts: RunOptions<'_>) -> Result<FlowRun> {
    let state0 = match opts.variant {
        FlowVariant::Deturck => FlowState::with_reference(grid),
        _ => FlowState::new(grid),
    };
    let an0 = analyze_state(&state0, opts.variant, opts.order)?;
    let dt = match opts.dt {
        DtSpec::Fixed(dt) => dt,
        DtSpec::Cfl(c) => (c / DEFAULT_CFL) * stable_dt(&an0.core, &state0.metric.h, opts.order),
    };
    if !(dt > 0.0) {
        return Err(XcfError::Config(format!("non-positive dt = {dt}")));
    }
    let n_steps = ((opts.t_end / dt) + 1e-9).floor() as u64;

    let mut rows: Vec<MonitorRow> = Vec::with_capacity(n_steps as usize + 1);
    let mut status = FlowStatus::Completed;
    let variant = opts.variant;

    // rolling window (state, analysis) for centered-difference monitors
    let mut window: Vec<(FlowState, StateAnalysis)> = vec![(state0, an0)];

    let emit_row = |win: &[(FlowState, StateAnalysis)], idx: usize, rows: &mut Vec<MonitorRow>| {
        let (state, an) = &win[idx];
        let mut row = quadrature_row(&state.metric, an, state.t);
        if idx > 0 && idx + 1 < win.len() {
            let (prev, next) = (&win[idx - 1], &win[idx + 1]);
            row.harnack_min = harnack_min(&state.metric, &prev.1, an, &next.1, state.t, dt);
            if variant == FlowVariant::Raw {
                let (re, rd) =
                    evolution_residuals_from(&state.metric, &prev.1, an, &next.1, dt);
                row.res_dt_ein = Some(re);
                row.res_dt_det_e = Some(rd);
            }
        }
        rows.push(row);
    };

    for k in 0..n_steps {
        let (state, an) = window.last().expect("window never empty");
        if an.lam_min < EIN_DEGENERATE_EIG {
            status = FlowStatus::EinDegenerate { t: state.t };
            break;
        }
        let next_state = match step_with_core(state, &an.core, dt, opts.variant, opts.order, opts.cfl)
        {
            Ok(s) => s,
            Err(XcfError::EinDegenerate { t, .. }) => {
                status = FlowStatus::EinDegenerate { t };
                break;
            }
            Err(XcfError::CflViolation { .. }) => {
                status = FlowStatus::CflStall { t: state.t };
                break;
            }
            Err(XcfError::NonPositiveMetric { .. }) | Err(XcfError::NonPositiveEin { .. }) => {
                status = FlowStatus::EinDegenerate { t: state.t };
                break;
            }
            Err(e) => return Err(e),
        };
        let next_an = match analyze_state(&next_state, opts.variant, opts.order) {
            Ok(a) => a,
            Err(XcfError::NonPositiveMetric { .. }) | Err(XcfError::NonPositiveEin { .. }) => {
                status = FlowStatus::EinDegenerate { t: next_state.t };
                break;
            }
            Err(e) => return Err(e),
        };
        if opts.snapshot_cadence > 0 && (k + 1) % opts.snapshot_cadence as u64 == 0 {
            if let Some(cb) = opts.on_snapshot.as_mut() {
                cb(next_state.step, next_state.t, &next_state.metric)?;
            }
        }
        window.push((next_state, next_an));
        if window.len() == 3 {
            if rows.is_empty() {
                emit_row(&window, 0, &mut rows);
            }
            emit_row(&window, 1, &mut rows);
            window.remove(0);
        }
    }

    // flush remaining rows (short runs never reach a full window)
    match window.len() {
        1 => {
            if rows.is_empty() {
                emit_row(&window, 0, &mut rows);
            }
        }
        2 => {
            if rows.is_empty() {
                emit_row(&window, 0, &mut rows);
            }
            emit_row(&window, 1, &mut rows);
        }
        _ => {}
    }

    monitor::fill_dvol_residuals(&mut rows, dt);
    let final_state = window.pop().expect("window never empty").0;
    Ok(FlowRun {
        monitors: rows,
        status,
        final_state,
        dt,
    })
}
