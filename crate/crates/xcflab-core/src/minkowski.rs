//! The extrinsic side: Weingarten/second-fundamental-form dictionary for
//! spacelike hypersurfaces of Minkowski R^{3,1}, Gauss-equation residuals,
//! numerical frame integration of the embedding, and the Gauss curvature
//! flow correspondence.
//!
//! Signature (+,+,+,-); the unit normal is timelike with <nu,nu> = -1.
//! Differentiating <e_j, nu> = 0 fixes the normal transport sign:
//! d_k nu = +W^m_k e_m.

use crate::curvature::{rm_from_ein, CurvaturePack, StencilOrder};
use crate::error::{Result, XcfError};
use crate::grid::{Field, MetricGrid, TimeCtx};
use crate::io::fmt_g17;
use crate::sym3::{self, Mat3, SymMat3};
use crate::third_order::third_order_field;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MinkVec(pub [f64; 4]);

impl MinkVec {
    pub const ZERO: MinkVec = MinkVec([0.0; 4]);

    /// <x,y> = x1 y1 + x2 y2 + x3 y3 - x4 y4.
    pub fn dot(&self, other: &MinkVec) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
            - self.0[3] * other.0[3]
    }

    pub fn add(&self, other: &MinkVec) -> MinkVec {
        MinkVec([
            self.0[0] + other.0[0],
            self.0[1] + other.0[1],
            self.0[2] + other.0[2],
            self.0[3] + other.0[3],
        ])
    }

    pub fn sub(&self, other: &MinkVec) -> MinkVec {
        MinkVec([
            self.0[0] - other.0[0],
            self.0[1] - other.0[1],
            self.0[2] - other.0[2],
            self.0[3] - other.0[3],
        ])
    }

    pub fn scale(&self, s: f64) -> MinkVec {
        MinkVec([self.0[0] * s, self.0[1] * s, self.0[2] * s, self.0[3] * s])
    }

    pub fn is_spacelike(&self) -> bool {
        self.dot(self) > 0.0
    }

    pub fn is_timelike(&self) -> bool {
        self.dot(self) < 0.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }
}

/// Shape-operator data of one point: W = sqrt(det E) opEin^{-1}, A = g W,
/// K_gauss = det W = sqrt(det E).
#[derive(Clone, Copy, Debug)]
pub struct Weingarten {
    /// W^i_j (mixed).
    pub w: Mat3,
    /// Second fundamental form A = g W; equals Ob.
    pub a: SymMat3,
    pub k_gauss: f64,
    /// Principal curvatures, ascending.
    pub kappa: [f64; 3],
}

pub fn weingarten_from_intrinsic(pack: &CurvaturePack) -> Result<Weingarten> {
    let core = &pack.core;
    if !core.ein_spd {
        return Err(XcfError::NonPositiveEin { node: [0, 0, 0] });
    }
    let sq = core.sqrt_det_e;
    // opEin^{-1} = E^{-1} g
    let e_inv = core.ein.inverse().ok_or(XcfError::NonPositiveEin { node: [0, 0, 0] })?;
    let w = sym3::mat_mul(&e_inv.to_mat(), &core.g.to_mat());
    let mut wm = w;
    for row in wm.iter_mut().flatten() {
        *row *= sq;
    }
    let a = core.ob;
    // kappa: eigenvalues of W = sqrt(detE)/lambda_i
    let mut kappa = [
        sq / pack.lambda[2],
        sq / pack.lambda[1],
        sq / pack.lambda[0],
    ];
    kappa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(Weingarten {
        w: wm,
        a,
        k_gauss: sq,
        kappa,
    })
}

/// Max-norm residuals of the Gauss equations for a candidate second
/// fundamental form A (pointwise algebra; the full equation is checked
/// against the Ricci-decomposed curvature, so for A = Ob all three vanish
/// identically in 3D).
pub fn gauss_residual(pack: &CurvaturePack, a: &SymMat3) -> (f64, f64, f64) {
    let core = &pack.core;
    let g_inv = core.g_inv;
    let w = sym3::mat_mul(&g_inv.to_mat(), &a.to_mat()); // W^i_j from A
    let h_mean = sym3::mat_trace(&w);

    // full: Rm(X,Y,Z,T) = A(X,Z) A(Y,T) - A(Y,Z) A(X,T)
    let rm = rm_from_ein(&core.g, &core.ein, core.tr_e);
    let mut full = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let rhs = a.get(i, k) * a.get(j, l) - a.get(j, k) * a.get(i, l);
                    full = full.max((rm[i][j][k][l] - rhs).abs());
                }
            }
        }
    }

    // contracted: Ric = g(W^2 ., .) - H A  i.e. Ric_ij = (A W)_ij - H A_ij
    let aw = sym3::mat_mul(&a.to_mat(), &w);
    let mut contracted = 0.0_f64;
    for i in 0..3 {
        for j in 0..3 {
            let rhs = aw[i][j] - h_mean * a.get(i, j);
            contracted = contracted.max((core.ric.get(i, j) - rhs).abs());
        }
    }

    // scalar: Sc = |A|^2 - H^2 with |A|^2 = A_ij A_kl g^{ik} g^{jl} = Tr(W^2)
    let w2 = sym3::mat_mul(&w, &w);
    let scalar = (core.sc - (sym3::mat_trace(&w2) - h_mean * h_mean)).abs();

    (full, contracted, scalar)
}

/// Embedding of the chart into R^{3,1} by integrating the frame transport
/// equations, plus the integrability residuals.
#[derive(Clone, Debug)]
pub struct EmbeddingState {
    pub dims: [usize; 3],
    pub position: Vec<MinkVec>,
    /// frame[n][i] = pushed-forward coordinate field e_i at node n.
    pub frame: Vec<[MinkVec; 3]>,
    pub normal: Vec<MinkVec>,
    pub metric_residual: f64,
    pub path_residual: f64,
    pub normal_residual: f64,
}

impl EmbeddingState {
    pub fn to_json(&self) -> String {
        let mut s = String::from("{\"F\":[");
        let mut first = true;
        let mut push = |s: &mut String, v: f64, first: &mut bool| {
            if !*first {
                s.push(',');
            }
            *first = false;
            s.push_str(&fmt_g17(v));
        };
        for p in &self.position {
            for c in 0..4 {
                push(&mut s, p.0[c], &mut first);
            }
        }
        s.push_str("],\"frame\":[");
        first = true;
        for f in &self.frame {
            for e in f {
                for c in 0..4 {
                    push(&mut s, e.0[c], &mut first);
                }
            }
        }
        s.push_str("],\"nu\":[");
        first = true;
        for n in &self.normal {
            for c in 0..4 {
                push(&mut s, n.0[c], &mut first);
            }
        }
        s.push_str("],\"residuals\":{\"metricResidual\":");
        s.push_str(&fmt_g17(self.metric_residual));
        s.push_str(",\"pathResidual\":");
        s.push_str(&fmt_g17(self.path_residual));
        s.push_str(",\"normalResidual\":");
        s.push_str(&fmt_g17(self.normal_residual));
        s.push_str("}}");
        s
    }
}

/// Transport state along one coordinate line.
#[derive(Clone, Copy)]
struct FrameState {
    f: MinkVec,
    e: [MinkVec; 3],
    nu: MinkVec,
}

/// Coefficients of the transport ODE along axis `a` at one node.
#[derive(Clone, Copy)]
struct LineCoeff {
    /// gamma[j][m] = Γ^m_{a j}
    gamma: [[f64; 3]; 3],
    /// arow[j] = A_{a j}
    arow: [f64; 3],
    /// wcol[m] = W^m_a
    wcol: [f64; 3],
}

fn line_coeff(pack: &CurvaturePack, a_form: &SymMat3, axis: usize) -> LineCoeff {
    let g_inv = pack.core.g_inv;
    let w = sym3::mat_mul(&g_inv.to_mat(), &a_form.to_mat());
    let mut gamma = [[0.0; 3]; 3];
    let mut arow = [0.0; 3];
    let mut wcol = [0.0; 3];
    for j in 0..3 {
        for m in 0..3 {
            gamma[j][m] = pack.core.gamma[m][axis][j];
        }
        arow[j] = a_form.get(axis, j);
        wcol[j] = w[j][axis];
    }
    LineCoeff { gamma, arow, wcol }
}

fn transport_rhs(y: &FrameState, c: &LineCoeff, axis: usize) -> FrameState {
    let mut de = [MinkVec::ZERO; 3];
    for j in 0..3 {
        let mut v = y.nu.scale(c.arow[j]);
        for m in 0..3 {
            v = v.add(&y.e[m].scale(c.gamma[j][m]));
        }
        de[j] = v;
    }
    let mut dnu = MinkVec::ZERO;
    for m in 0..3 {
        dnu = dnu.add(&y.e[m].scale(c.wcol[m]));
    }
    FrameState {
        f: y.e[axis],
        e: de,
        nu: dnu,
    }
}

fn blend(a: &LineCoeff, b: &LineCoeff, s: f64) -> LineCoeff {
    let mut out = *a;
    for j in 0..3 {
        for m in 0..3 {
            out.gamma[j][m] = (1.0 - s) * a.gamma[j][m] + s * b.gamma[j][m];
        }
        out.arow[j] = (1.0 - s) * a.arow[j] + s * b.arow[j];
        out.wcol[j] = (1.0 - s) * a.wcol[j] + s * b.wcol[j];
    }
    out
}

/// One RK4 transport step from coefficients c0 (here) to c1 (next node),
/// over coordinate distance `h` (signed).
fn rk4_transport(y: &FrameState, c0: &LineCoeff, c1: &LineCoeff, h: f64, axis: usize) -> FrameState {
    let add = |y: &FrameState, k: &FrameState, s: f64| FrameState {
        f: y.f.add(&k.f.scale(s)),
        e: [
            y.e[0].add(&k.e[0].scale(s)),
            y.e[1].add(&k.e[1].scale(s)),
            y.e[2].add(&k.e[2].scale(s)),
        ],
        nu: y.nu.add(&k.nu.scale(s)),
    };
    let mid = blend(c0, c1, 0.5);
    let k1 = transport_rhs(y, c0, axis);
    let k2 = transport_rhs(&add(y, &k1, 0.5 * h), &mid, axis);
    let k3 = transport_rhs(&add(y, &k2, 0.5 * h), &mid, axis);
    let k4 = transport_rhs(&add(y, &k3, h), c1, axis);
    let mut out = add(y, &k1, h / 6.0);
    out = add(&out, &k2, h / 3.0);
    out = add(&out, &k3, h / 3.0);
    add(&out, &k4, h / 6.0)
}

fn sweep(
    grid: &MetricGrid,
    packs: &Field<CurvaturePack>,
    a_field: &Field<SymMat3>,
    order: [usize; 3],
    base: [usize; 3],
    start: FrameState,
) -> Vec<FrameState> {
    let mut states: Vec<Option<FrameState>> = vec![None; grid.node_count()];
    states[grid.idx(base)] = Some(start);

    let coeff = |n: [usize; 3], axis: usize| line_coeff(packs.get(n), a_field.get(n), axis);

    // walk +/- along `axis` from every already-filled node of the lower-dim slab
    let mut filled: Vec<[usize; 3]> = vec![base];
    for &axis in &order {
        let mut new_filled = filled.clone();
        for &from in &filled {
            // increasing
            let mut n = from;
            while n[axis] + 1 < grid.dims[axis] {
                let mut next = n;
                next[axis] += 1;
                let y = states[grid.idx(n)].expect("walk from filled node");
                let y2 = rk4_transport(&y, &coeff(n, axis), &coeff(next, axis), grid.h[axis], axis);
                states[grid.idx(next)] = Some(y2);
                new_filled.push(next);
                n = next;
            }
            // decreasing
            let mut n = from;
            while n[axis] > 0 {
                let mut next = n;
                next[axis] -= 1;
                let y = states[grid.idx(n)].expect("walk from filled node");
                let y2 =
                    rk4_transport(&y, &coeff(n, axis), &coeff(next, axis), -grid.h[axis], axis);
                states[grid.idx(next)] = Some(y2);
                new_filled.push(next);
                n = next;
            }
        }
        filled = new_filled;
    }
    states.into_iter().map(|s| s.expect("grid covered")).collect()
}

/// Integrate the over-determined frame system d_k F = e_k,
/// d_k e_j = Γ^m_{kj} e_m + A_{kj} nu, d_k nu = W^m_k e_m from the chart
/// center outward, axes in `path_order`; the path residual compares against
/// the reversed ordering.
pub fn integrate_embedding(
    grid: &MetricGrid,
    packs: &Field<CurvaturePack>,
    a_field: &Field<SymMat3>,
    path_order: [usize; 3],
) -> Result<EmbeddingState> {
    for n in grid.nodes() {
        if !packs.get(n).core.ein_spd {
            return Err(XcfError::NonPositiveEin { node: n });
        }
    }
    let base = [grid.dims[0] / 2, grid.dims[1] / 2, grid.dims[2] / 2];
    // base gauge: rows of the Cholesky factor in {x4 = 0}, nu on the time axis
    let l = packs
        .get(base)
        .core
        .g
        .cholesky()
        .ok_or(XcfError::NonPositiveMetric { node: base })?;
    let start = FrameState {
        f: MinkVec::ZERO,
        e: [
            MinkVec([l[0][0], l[0][1], l[0][2], 0.0]),
            MinkVec([l[1][0], l[1][1], l[1][2], 0.0]),
            MinkVec([l[2][0], l[2][1], l[2][2], 0.0]),
        ],
        nu: MinkVec([0.0, 0.0, 0.0, 1.0]),
    };

    let fwd = sweep(grid, packs, a_field, path_order, base, start);
    let rev_order = [path_order[2], path_order[1], path_order[0]];
    let rev = sweep(grid, packs, a_field, rev_order, base, start);

    let mut metric_residual = 0.0_f64;
    let mut path_residual = 0.0_f64;
    let mut normal_residual = 0.0_f64;
    for n in grid.nodes() {
        let idx = grid.idx(n);
        let y = &fwd[idx];
        let g = packs.get(n).core.g;
        for i in 0..3 {
            for j in 0..3 {
                metric_residual =
                    metric_residual.max((y.e[i].dot(&y.e[j]) - g.get(i, j)).abs());
            }
            normal_residual = normal_residual.max(y.e[i].dot(&y.nu).abs());
        }
        normal_residual = normal_residual.max((y.nu.dot(&y.nu) + 1.0).abs());
        path_residual = path_residual.max(y.f.sub(&rev[idx].f).max_abs());
    }

    Ok(EmbeddingState {
        dims: grid.dims,
        position: fwd.iter().map(|y| y.f).collect(),
        frame: fwd.iter().map(|y| y.e).collect(),
        normal: fwd.iter().map(|y| y.nu).collect(),
        metric_residual,
        path_residual,
        normal_residual,
    })
}

/// Least-squares center c minimizing the variance of <F - c, F - c>, and the
/// max deviation of that quadratic from -radius2.
pub fn quadric_fit(points: &[MinkVec], radius2: f64) -> (MinkVec, f64) {
    // model: q(F) - 2 <F, c> + mu ~ const; unknowns (c, mu)
    let n = points.len();
    let mut ata = nalgebra::DMatrix::<f64>::zeros(5, 5);
    let mut atb = nalgebra::DVector::<f64>::zeros(5);
    let eta = [1.0, 1.0, 1.0, -1.0];
    for p in points {
        let q = p.dot(p);
        let mut row = [0.0; 5];
        for c in 0..4 {
            row[c] = -2.0 * eta[c] * p.0[c];
        }
        row[4] = 1.0;
        for i in 0..5 {
            for j in 0..5 {
                ata[(i, j)] += row[i] * row[j];
            }
            atb[i] += row[i] * (-q);
        }
        let _ = n;
    }
    let sol = ata
        .lu()
        .solve(&atb)
        .unwrap_or_else(|| nalgebra::DVector::zeros(5));
    let c = MinkVec([sol[0], sol[1], sol[2], sol[3]]);
    let mut worst = 0.0_f64;
    for p in points {
        let d = p.sub(&c);
        worst = worst.max((d.dot(&d) - (-radius2)).abs());
    }
    (c, worst)
}

/// Closed forms for the expanding-hyperboloid family under the Gauss
/// curvature flow dF/dt = K nu: r(t) = (4t + r0^4)^{1/4}, induced metric
/// r^2 g_H, K_gauss = r^{-3}, principal curvatures (1/r, 1/r, 1/r).
#[derive(Clone, Copy, Debug)]
pub struct HyperboloidFamily {
    pub r0: f64,
}

impl HyperboloidFamily {
    pub fn r(&self, t: f64) -> f64 {
        (4.0 * t + self.r0.powi(4)).powf(0.25)
    }

    pub fn induced_coeff(&self, t: f64) -> f64 {
        self.r(t).powi(2)
    }

    pub fn k_gauss(&self, t: f64) -> f64 {
        self.r(t).powi(-3)
    }

    pub fn principal_curvatures(&self, t: f64) -> [f64; 3] {
        let k = 1.0 / self.r(t);
        [k, k, k]
    }

    /// d/dt of r(t) must equal K = r^{-3} (the oracle for the closed form).
    pub fn r_dot(&self, t: f64) -> f64 {
        (4.0 * t + self.r0.powi(4)).powf(-0.75)
    }
}

/// Both evaluation routes of dg/dt on the hyperboloid family, as
/// coefficients of the unit-hyperboloid metric g_H.
#[derive(Clone, Copy, Debug)]
pub struct GcfXcfReport {
    pub r: f64,
    pub induced_coeff: f64,
    pub k_gauss: f64,
    /// 2 K_gauss A = 2 r^{-3} * r = 2 r^{-2}.
    pub extrinsic_dt_coeff: f64,
    /// 2 adj Ein of r^2 g_H, through the curvature pack.
    pub intrinsic_dt_coeff: f64,
    /// The exact XCF solution sqrt(4 K0^2 t + 1) r0^2 with K0 = -1/r0^2.
    pub xcf_scale: f64,
}

pub fn gcf_xcf_correspondence(r0: f64, t: f64) -> Result<GcfXcfReport> {
    if !(r0 > 0.0) || t < 0.0 {
        return Err(XcfError::Config("need r0 > 0, t >= 0".into()));
    }
    let fam = HyperboloidFamily { r0 };
    let r = fam.r(t);
    let induced = fam.induced_coeff(t);
    let kg = fam.k_gauss(t);
    let extrinsic = 2.0 * kg * r; // * g_H
    // intrinsic: run g = r^2 g_H through the pack (point model: g_H = I,
    // Ein = -K g with K = -1/r^2)
    let g = SymMat3::identity() * induced;
    let ein = g * (1.0 / (r * r));
    let pack = crate::curvature::pack_from_g_ein(g, ein)
        .ok_or_else(|| XcfError::Config("bad hyperboloid pack".into()))?;
    let intrinsic = 2.0 * pack.core.adj_ein.get(0, 0);
    let k0 = -1.0 / (r0 * r0);
    let xcf_scale = (4.0 * k0 * k0 * t + 1.0).sqrt() * r0 * r0;
    Ok(GcfXcfReport {
        r,
        induced_coeff: induced,
        k_gauss: kg,
        extrinsic_dt_coeff: extrinsic,
        intrinsic_dt_coeff: intrinsic,
        xcf_scale,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct IntegrabilityReport {
    pub integrable: bool,
    pub defect: f64,
    pub scale: f64,
}

/// Codazzi-defect classification of a chart metric: integrable iff the
/// max-norm defect of Ob is below tol times the scale of ∇Ob.
pub fn is_integrable(
    grid: &MetricGrid,
    order: StencilOrder,
    ctx: &TimeCtx,
    tol: f64,
) -> Result<IntegrabilityReport> {
    let core = crate::curvature::curvature_core_field(grid, order, ctx)?;
    let third = third_order_field(grid, &core, order, ctx)?;
    let mut defect = 0.0_f64;
    let mut scale = 0.0_f64;
    for n in grid.interior_nodes() {
        let th = third.get(n);
        for v in th.codazzi_defect.iter().flatten().flatten() {
            defect = defect.max(v.abs());
        }
        scale = scale.max(th.max_grad_ob);
    }
    Ok(IntegrabilityReport {
        integrable: defect <= tol * scale.max(1e-30),
        defect,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::pack_from_g_ein;
    use approx::assert_relative_eq;

    #[test]
    fn weingarten_eigen_dictionary() {
        // lambda = (6,3,2) -> principal curvatures (1,2,3), K = 6
        let pack = pack_from_g_ein(SymMat3::identity(), SymMat3::diag(6.0, 3.0, 2.0)).unwrap();
        let w = weingarten_from_intrinsic(&pack).unwrap();
        assert_relative_eq!(w.k_gauss, 6.0, epsilon = 1e-12);
        assert_relative_eq!(w.kappa[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(w.kappa[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(w.kappa[2], 3.0, epsilon = 1e-12);
        // kappa_i kappa_j = lambda_k for all index triples
        let lam = pack.lambda;
        assert_relative_eq!(w.kappa[0] * w.kappa[1], lam[0], epsilon = 1e-12);
        assert_relative_eq!(w.kappa[0] * w.kappa[2], lam[1], epsilon = 1e-12);
        assert_relative_eq!(w.kappa[1] * w.kappa[2], lam[2], epsilon = 1e-12);
    }

    #[test]
    fn unit_hyperbolic_is_unit_hyperboloid_data() {
        let g = SymMat3::new([1.1, 0.1, 0.0, 0.9, -0.05, 1.3]);
        let pack = pack_from_g_ein(g, g).unwrap(); // Ein = g: constant curvature -1
        let w = weingarten_from_intrinsic(&pack).unwrap();
        assert_relative_eq!(w.k_gauss, 1.0, epsilon = 1e-10);
        for k in 0..3 {
            assert_relative_eq!(w.kappa[k], 1.0, epsilon = 1e-10);
        }
        for c in 0..6 {
            assert_relative_eq!(w.a.m[c], g.m[c], epsilon = 1e-10);
        }
    }

    #[test]
    fn gauss_residual_vanishes_for_ob_and_detects_wrong_a() {
        let g = SymMat3::new([1.2, 0.15, -0.1, 1.0, 0.2, 0.8]);
        let ein = SymMat3::new([0.9, 0.1, 0.0, 1.4, -0.1, 0.7]);
        let pack = pack_from_g_ein(g, ein).unwrap();
        let ob = pack.core.ob;
        let (full, contracted, scalar) = gauss_residual(&pack, &ob);
        assert!(full < 1e-12, "full {full}");
        assert!(contracted < 1e-12, "contracted {contracted}");
        assert!(scalar < 1e-12, "scalar {scalar}");

        let mut bad = ob;
        bad.set(0, 1, ob.get(0, 1) + 0.1);
        let (_, contracted, _) = gauss_residual(&pack, &bad);
        assert!(contracted > 1e-3, "negative control {contracted}");
    }

    #[test]
    fn gcf_xcf_closed_forms() {
        // r0 = 1, t = 2: r^2 = 3 = sqrt(4*1*2+1); both routes 2/r^2 * g_H
        let rep = gcf_xcf_correspondence(1.0, 2.0).unwrap();
        assert_relative_eq!(rep.induced_coeff, 3.0, epsilon = 1e-12);
        assert_relative_eq!(rep.xcf_scale, 3.0, epsilon = 1e-12);
        assert_relative_eq!(rep.extrinsic_dt_coeff, rep.intrinsic_dt_coeff, epsilon = 1e-12);

        // r0 = 2, t = 0: both routes 0.5 g_H
        let rep = gcf_xcf_correspondence(2.0, 0.0).unwrap();
        assert_relative_eq!(rep.extrinsic_dt_coeff, 0.5, epsilon = 1e-12);
        assert_relative_eq!(rep.intrinsic_dt_coeff, 0.5, epsilon = 1e-12);
        assert_relative_eq!(rep.induced_coeff, 4.0, epsilon = 1e-12);

        // r_dot = K oracle
        let fam = HyperboloidFamily { r0: 1.3 };
        for t in [0.0, 0.7, 2.0] {
            assert_relative_eq!(fam.r_dot(t), fam.k_gauss(t), epsilon = 1e-12);
        }
    }
}
