//! Discretization-free backend: left-invariant metrics on a 3D Lie algebra.
//! Curvature is pure algebra (Koszul formula on left-invariant fields) and
//! the cross curvature flow reduces to an ODE on the 6 metric components.

use crate::curvature::{core_from_parts, CurvatureCore, CurvaturePack};
use crate::error::{Result, XcfError};
use crate::flow::{FlowStatus, FlowVariant};
use crate::io::fmt_g17;
use crate::monitor::{self, MonitorRow, NodeSample};
use crate::sym3::{self, SymMat3};
use crate::third_order::{third_order_point, ThirdOrder};
use serde_json::Value;

const EIN_DEGENERATE_EIG: f64 = 1e-10;

/// Structure constants c^k_{ij} (antisymmetric in i, j) plus a metric in
/// that frame.
#[derive(Clone, Debug)]
pub struct FrameMetric {
    pub c: [[[f64; 3]; 3]; 3],
    pub m: SymMat3,
}

impl FrameMetric {
    pub fn new(c: [[[f64; 3]; 3]; 3], m: SymMat3) -> Result<Self> {
        let fm = FrameMetric { c, m };
        fm.validate()?;
        Ok(fm)
    }

    /// The solvable algebra of hyperbolic space: [e3,e1] = e1, [e3,e2] = e2.
    pub fn solvable_hyperbolic(m: SymMat3) -> Self {
        let mut c = [[[0.0; 3]; 3]; 3];
        c[0][2][0] = 1.0;
        c[0][0][2] = -1.0;
        c[1][2][1] = 1.0;
        c[1][1][2] = -1.0;
        FrameMetric { c, m }
    }

    pub fn abelian(m: SymMat3) -> Self {
        FrameMetric {
            c: [[[0.0; 3]; 3]; 3],
            m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m.is_spd() {
            return Err(XcfError::NonPositiveMetric { node: [0, 0, 0] });
        }
        let mut scale: f64 = 1.0;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    scale = scale.max(self.c[k][i][j].abs());
                    if (self.c[k][i][j] + self.c[k][j][i]).abs() > 1e-12 * scale {
                        return Err(XcfError::Config(
                            "structure constants are not antisymmetric".into(),
                        ));
                    }
                }
            }
        }
        let residual = self.jacobi_residual();
        if residual > 1e-12 * scale * scale {
            return Err(XcfError::JacobiViolation { residual });
        }
        Ok(())
    }

    /// Max-norm of the cyclic sum c^m_{ij} c^l_{mk} + c^m_{jk} c^l_{mi} + c^m_{ki} c^l_{mj}.
    pub fn jacobi_residual(&self) -> f64 {
        let c = &self.c;
        let mut worst = 0.0_f64;
        for l in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        let mut s = 0.0;
                        for m in 0..3 {
                            s += c[m][i][j] * c[l][m][k]
                                + c[m][j][k] * c[l][m][i]
                                + c[m][k][i] * c[l][m][j];
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        let mut s = String::from("{\"kind\":\"frame\",\"c\":[");
        let mut first = true;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    if !first {
                        s.push(',');
                    }
                    first = false;
                    s.push_str(&fmt_g17(self.c[k][i][j]));
                }
            }
        }
        s.push_str("],\"m\":[");
        for (n, v) in self.m.m.iter().enumerate() {
            if n > 0 {
                s.push(',');
            }
            s.push_str(&fmt_g17(*v));
        }
        s.push_str("]}");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let obj = v
            .as_object()
            .ok_or_else(|| XcfError::Json("frame metric is not an object".into()))?;
        if obj.get("kind").and_then(Value::as_str) != Some("frame") {
            return Err(XcfError::Json("kind is not \"frame\"".into()));
        }
        let carr = obj
            .get("c")
            .and_then(Value::as_array)
            .ok_or_else(|| XcfError::Json("missing c".into()))?;
        let marr = obj
            .get("m")
            .and_then(Value::as_array)
            .ok_or_else(|| XcfError::Json("missing m".into()))?;
        if carr.len() != 27 || marr.len() != 6 {
            return Err(XcfError::Json("frame metric needs 27 c's and 6 m's".into()));
        }
        let mut c = [[[0.0; 3]; 3]; 3];
        let mut n = 0;
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    c[k][i][j] = carr[n].as_f64().ok_or_else(|| XcfError::Json("bad c".into()))?;
                    n += 1;
                }
            }
        }
        let mut m = [0.0; 6];
        for (slot, mv) in m.iter_mut().zip(marr.iter()) {
            *slot = mv.as_f64().ok_or_else(|| XcfError::Json("bad m".into()))?;
        }
        FrameMetric::new(c, SymMat3::new(m))
    }
}

/// Connection coefficients Γ^k_{ij} of a left-invariant metric from the
/// Koszul formula: 2 m(∇_i e_j, e_k) = cm(i,j,k) − cm(j,k,i) + cm(k,i,j).
pub fn frame_gamma(fm: &FrameMetric) -> [[[f64; 3]; 3]; 3] {
    let cm = |i: usize, j: usize, k: usize| -> f64 {
        let mut s = 0.0;
        for l in 0..3 {
            s += fm.c[l][i][j] * fm.m.get(l, k);
        }
        s
    };
    let minv = fm.m.inverse().expect("frame metric SPD");
    let mut gamma = [[[0.0; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                let low = 0.5 * (cm(i, j, k) - cm(j, k, i) + cm(k, i, j));
                for kk in 0..3 {
                    gamma[kk][i][j] += minv.get(kk, k) * low;
                }
            }
        }
    }
    gamma
}

/// Pointwise curvature pack of a left-invariant metric; purely algebraic.
pub fn frame_curvature(fm: &FrameMetric) -> Result<CurvaturePack> {
    fm.validate()?;
    let gamma = frame_gamma(fm);
    // R^l_{ijk} = Γ^m_{jk} Γ^l_{im} − Γ^m_{ik} Γ^l_{jm} − c^m_{ij} Γ^l_{mk}
    let mut rm = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for m in 0..3 {
                        s += gamma[m][j][k] * gamma[l][i][m] - gamma[m][i][k] * gamma[l][j][m]
                            - fm.c[m][i][j] * gamma[l][m][k];
                    }
                    rm[i][j][k][l] = s;
                }
            }
        }
    }
    // lower the last slot
    let mut rml = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut s = 0.0;
                    for m in 0..3 {
                        s += fm.m.get(l, m) * rm[i][j][k][m];
                    }
                    rml[i][j][k][l] = s;
                }
            }
        }
    }
    let g_inv = fm.m.inverse().expect("frame metric SPD");
    let core = core_from_parts(fm.m, g_inv, gamma, &rml);
    let (lambda, frame) = sym3::eigen_g_sym(&fm.m, &core.ein)
        .ok_or(XcfError::NonPositiveMetric { node: [0, 0, 0] })?;
    Ok(CurvaturePack {
        core,
        rm: rml,
        lambda,
        frame,
    })
}

/// Algebraic covariant derivative ∇_l E♯^{ij} of the (left-invariant)
/// raised Einstein tensor: pure connection terms.
pub fn frame_w(core: &CurvatureCore) -> [[[f64; 3]; 3]; 3] {
    let mut w = [[[0.0; 3]; 3]; 3];
    for l in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                let mut s = 0.0;
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

/// Third-order data of a left-invariant metric (algebraic route).
pub fn frame_third_order(fm: &FrameMetric) -> Result<(CurvaturePack, ThirdOrder)> {
    let pack = frame_curvature(fm)?;
    let w = frame_w(&pack.core);
    let third = third_order_point(&pack.core, &w)?;
    Ok((pack, third))
}

#[derive(Clone, Debug)]
pub struct OdeRun {
    pub times: Vec<f64>,
    pub states: Vec<FrameMetric>,
    pub monitors: Vec<MonitorRow>,
    pub status: FlowStatus,
}

fn frame_rhs(fm: &FrameMetric, variant: FlowVariant) -> Result<SymMat3> {
    let pack = frame_curvature(fm)?;
    Ok(match variant {
        FlowVariant::Raw => pack.core.adj_ein * 2.0,
        FlowVariant::Normalized { k } => pack.core.adj_ein * 2.0 - fm.m * (2.0 * k * k),
        FlowVariant::Deturck => {
            return Err(XcfError::Config(
                "the homogeneous backend has no DeTurck variant".into(),
            ))
        }
    })
}

/// Fixed-step RK4 on the 6-dimensional metric ODE ∂t m = 2 adj Ein(m)
/// (raw) or 2 adj Ein(m) − 2 K^2 m (normalized).  Structure constants are
/// frozen.  The run halts with an ein-degenerate status if the smallest
/// eigenvalue of opEin falls below 1e-10.
pub fn xcf_ode_run(
    fm0: &FrameMetric,
    t_end: f64,
    dt: f64,
    variant: FlowVariant,
) -> Result<OdeRun> {
    fm0.validate()?;
    if !(dt > 0.0) {
        return Err(XcfError::Config(format!("non-positive dt = {dt}")));
    }
    if matches!(variant, FlowVariant::Deturck) {
        return Err(XcfError::Config(
            "the homogeneous backend has no DeTurck variant".into(),
        ));
    }
    let n_steps = ((t_end / dt) + 1e-9).floor() as usize;
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut status = FlowStatus::Completed;
    times.push(0.0);
    states.push(fm0.clone());

    let spd_guard = |fm: &FrameMetric, t: f64| -> std::result::Result<(), FlowStatus> {
        let pack = match frame_curvature(fm) {
            Ok(p) => p,
            Err(_) => return Err(FlowStatus::EinDegenerate { t }),
        };
        if pack.lambda[0] < EIN_DEGENERATE_EIG {
            return Err(FlowStatus::EinDegenerate { t });
        }
        Ok(())
    };

    'time: for k in 0..n_steps {
        let t = k as f64 * dt;
        let cur = states.last().unwrap().clone();
        if let Err(s) = spd_guard(&cur, t) {
            status = s;
            break 'time;
        }
        let stage = |m: SymMat3| FrameMetric { c: cur.c, m };
        let k1 = match frame_rhs(&cur, variant) {
            Ok(v) => v,
            Err(_) => {
                status = FlowStatus::EinDegenerate { t };
                break 'time;
            }
        };
        let try_rhs = |m: SymMat3| frame_rhs(&stage(m), variant);
        let k2 = match try_rhs(cur.m + k1 * (0.5 * dt)) {
            Ok(v) => v,
            Err(_) => {
                status = FlowStatus::EinDegenerate { t };
                break 'time;
            }
        };
        let k3 = match try_rhs(cur.m + k2 * (0.5 * dt)) {
            Ok(v) => v,
            Err(_) => {
                status = FlowStatus::EinDegenerate { t };
                break 'time;
            }
        };
        let k4 = match try_rhs(cur.m + k3 * dt) {
            Ok(v) => v,
            Err(_) => {
                status = FlowStatus::EinDegenerate { t };
                break 'time;
            }
        };
        let m_new = cur.m + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !m_new.is_spd() {
            status = FlowStatus::EinDegenerate { t: t + dt };
            break 'time;
        }
        times.push(t + dt);
        states.push(FrameMetric { c: cur.c, m: m_new });
    }

    let monitors = frame_monitors(&times, &states, dt)?;
    Ok(OdeRun {
        times,
        states,
        monitors,
        status,
    })
}

/// Monitor rows for a homogeneous series.  All functionals are densities per
/// unit cell volume sqrt(det m); spatial gradients vanish.
pub fn frame_monitors(times: &[f64], states: &[FrameMetric], dt: f64) -> Result<Vec<MonitorRow>> {
    struct P {
        core: CurvatureCore,
        third: ThirdOrder,
        w: [[[f64; 3]; 3]; 3],
    }
    let points: Vec<P> = states
        .iter()
        .map(|fm| {
            let pack = frame_curvature(fm)?;
            let w = frame_w(&pack.core);
            let third = third_order_point(&pack.core, &w)?;
            Ok(P {
                core: pack.core,
                third,
                w,
            })
        })
        .collect::<Result<Vec<P>>>()?;

    let mut rows: Vec<MonitorRow> = Vec::with_capacity(points.len());
    for (k, p) in points.iter().enumerate() {
        let weight = p.core.g.det().max(0.0).sqrt();
        let sample = NodeSample {
            weight,
            det_e: p.core.det_e,
            tr_e: p.core.tr_e,
            trace_cross: p.core.trace_cross,
            devil_norm2_v: p.third.devil_norm2_v,
        };
        let mut row = monitor::row_from_samples(times[k], std::iter::once(sample));
        if k > 0 && k + 1 < points.len() {
            let t = times[k];
            if t > 0.0 {
                let sq = |q: &P| q.core.det_e.max(0.0).sqrt();
                let dts = (sq(&points[k + 1]) - sq(&points[k - 1])) / (2.0 * dt);
                row.harnack_min = Some(dts + 3.0 / (4.0 * t) * sq(p));
            }
            // evolution equation residuals, algebraic spatial parts
            let es = p.core.e_sharp;
            let gi = p.core.g_inv;
            let w = &p.w;
            let gamma = &p.core.gamma;
            let mut worst_e = 0.0_f64;
            for i in 0..3 {
                for j in 0..3 {
                    let dte = (points[k + 1].core.e_sharp.get(i, j)
                        - points[k - 1].core.e_sharp.get(i, j))
                        / (2.0 * dt);
                    // Box E♯: second covariant derivative with vanishing frame derivatives
                    let mut boxed = 0.0;
                    for a in 0..3 {
                        for b in 0..3 {
                            let mut s = 0.0;
                            for m in 0..3 {
                                s -= gamma[m][a][b] * w[m][i][j];
                                s += gamma[i][a][m] * w[b][m][j] + gamma[j][a][m] * w[b][i][m];
                            }
                            boxed += es.get(a, b) * s;
                        }
                    }
                    let mut grad_sq = 0.0;
                    for kk in 0..3 {
                        for l in 0..3 {
                            grad_sq += w[l][kk][i] * w[kk][l][j];
                        }
                    }
                    let rhs = boxed - grad_sq - 4.0 * p.core.det_e * gi.get(i, j);
                    worst_e = worst_e.max((dte - rhs).abs());
                }
            }
            row.res_dt_ein = Some(worst_e);
            let dtd =
                (points[k + 1].core.det_e - points[k - 1].core.det_e) / (2.0 * dt);
            let rhs_d = -(-0.5 * p.third.devil_norm2_v + 2.0 * p.core.trace_cross)
                * p.core.det_e;
            row.res_dt_det_e = Some((dtd - rhs_d).abs());
        }
        rows.push(row);
    }
    monitor::fill_dvol_residuals(&mut rows, dt);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::sectional;
    use approx::assert_relative_eq;

    #[test]
    fn solvable_identity_is_unit_hyperbolic() {
        let fm = FrameMetric::solvable_hyperbolic(SymMat3::identity());
        let pack = frame_curvature(&fm).unwrap();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_relative_eq!(sectional(&pack, i, j).unwrap(), -1.0, epsilon = 1e-13);
        }
        // Ein = m
        for k in 0..6 {
            assert_relative_eq!(pack.core.ein.m[k], fm.m.m[k], epsilon = 1e-13);
        }
        assert_relative_eq!(pack.core.det_e, 1.0, epsilon = 1e-13);
    }

    #[test]
    fn abelian_is_flat() {
        let fm = FrameMetric::abelian(SymMat3::diag(2.0, 1.0, 0.5));
        let pack = frame_curvature(&fm).unwrap();
        assert!(crate::curvature::rm_max_abs(&pack.rm) < 1e-15);
    }

    #[test]
    fn jacobi_violation_detected() {
        let mut c = [[[0.0; 3]; 3]; 3];
        // [e1,e2] = e1, [e2,e3] = e2, [e3,e1] = e3: cyclic sum is -(e1+e2+e3)
        c[0][0][1] = 1.0;
        c[0][1][0] = -1.0;
        c[1][1][2] = 1.0;
        c[1][2][1] = -1.0;
        c[2][2][0] = 1.0;
        c[2][0][2] = -1.0;
        assert!(matches!(
            FrameMetric::new(c, SymMat3::identity()),
            Err(XcfError::JacobiViolation { .. })
        ));
    }

    #[test]
    fn exact_hyperbolic_ode_solution() {
        // m(t) = sqrt(4t+1) I; at t = 2 the factor is 3.
        let fm = FrameMetric::solvable_hyperbolic(SymMat3::identity());
        let run = xcf_ode_run(&fm, 2.0, 1e-3, FlowVariant::Raw).unwrap();
        assert_eq!(run.status, FlowStatus::Completed);
        let m_end = run.states.last().unwrap().m;
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 3.0 } else { 0.0 };
                assert!(
                    (m_end.get(i, j) - expect).abs() <= 1e-8 * 3.0,
                    "m(2) = {:?}",
                    m_end
                );
            }
        }
    }

    #[test]
    fn normalized_fixed_point_has_no_drift() {
        let fm = FrameMetric::solvable_hyperbolic(SymMat3::identity());
        let run = xcf_ode_run(&fm, 10.0, 1e-2, FlowVariant::Normalized { k: -1.0 }).unwrap();
        assert_eq!(run.status, FlowStatus::Completed);
        let m_end = run.states.last().unwrap().m;
        let drift = (m_end - SymMat3::identity()).max_abs();
        assert!(drift <= 1e-10, "drift {drift}");
        for row in &run.monitors {
            assert!(row.j_fun.abs() <= 1e-10);
        }
    }

    #[test]
    fn rk4_error_scales_as_dt4() {
        let fm = FrameMetric::solvable_hyperbolic(SymMat3::identity());
        let exact = 3.0_f64; // sqrt(4*2+1)
        let err = |dt: f64| {
            let run = xcf_ode_run(&fm, 2.0, dt, FlowVariant::Raw).unwrap();
            (run.states.last().unwrap().m.get(0, 0) - exact).abs()
        };
        let e1 = err(0.05);
        let e2 = err(0.025);
        let ratio = e1 / e2;
        assert!(
            ratio > 12.0 && ratio < 20.0,
            "expected ~16x error drop per dt halving, got {ratio} ({e1} / {e2})"
        );
    }

    #[test]
    fn scaling_covariance_of_adj_ein() {
        // scaling m by r scales adjEin by 1/r
        let fm = FrameMetric::solvable_hyperbolic(SymMat3::new([1.0, 0.1, 0.0, 1.3, -0.2, 2.0]));
        let p1 = frame_curvature(&fm).unwrap();
        let r = 2.7;
        let fm2 = FrameMetric {
            c: fm.c,
            m: fm.m * r,
        };
        let p2 = frame_curvature(&fm2).unwrap();
        for k in 0..6 {
            assert_relative_eq!(
                p2.core.adj_ein.m[k],
                p1.core.adj_ein.m[k] / r,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn frame_json_round_trip() {
        let fm = FrameMetric::solvable_hyperbolic(SymMat3::diag(1.0, 1.0, 4.0));
        let text = fm.to_json();
        let fm2 = FrameMetric::from_json(&text).unwrap();
        assert_eq!(fm.m, fm2.m);
        assert_eq!(fm.c, fm2.c);
    }
}
