//! Sampled metrics on a 3D coordinate box, with the analytic families used
//! for Dirichlet boundary data.
//!
//! In `DirichletAnalytic` mode a stencil that reaches past the stored box is
//! fed from the family's closed form at the current flow time; in `Periodic`
//! mode indices wrap.  The periodic mode is a pure stencil test harness (a
//! 3-torus carries no negatively curved metric); the Dirichlet families are
//! the geometric ones.

use crate::error::{Result, XcfError};
use crate::io;
use crate::sym3::SymMat3;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// How a constant-curvature family evolves in time: the raw XCF scaling or
/// the normalized flow with fixed point at curvature K.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FlowLaw {
    Raw,
    Normalized { k: f64 },
}

/// Evaluation context threaded through boundary sampling.
#[derive(Clone, Copy, Debug)]
pub struct TimeCtx {
    pub t: f64,
    pub law: FlowLaw,
}

impl TimeCtx {
    pub const ZERO: TimeCtx = TimeCtx {
        t: 0.0,
        law: FlowLaw::Raw,
    };

    pub fn at(t: f64) -> Self {
        TimeCtx {
            t,
            law: FlowLaw::Raw,
        }
    }
}

/// Scale factor s(t) with s(0) = 1 for a constant-curvature metric of
/// sectional curvature k0 under the given flow law, and its time derivative.
///
/// Raw XCF: g(t) = sqrt(4 k0^2 t + 1) g0.  Normalized flow dg/dt =
/// 2 adj Ein - 2 K^2 g: d(s^2)/dt = 4 k0^2 - 4 K^2 s^2.
pub fn hyperbolic_scale(k0: f64, t: f64, law: FlowLaw) -> (f64, f64) {
    match law {
        FlowLaw::Raw => {
            let s = (4.0 * k0 * k0 * t + 1.0).sqrt();
            (s, 2.0 * k0 * k0 / s)
        }
        FlowLaw::Normalized { k } => {
            let r = (k0 * k0) / (k * k);
            let s2 = r + (1.0 - r) * (-4.0 * k * k * t).exp();
            let s = s2.sqrt();
            (s, (2.0 * k0 * k0 - 2.0 * k * k * s2) / s)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryMode {
    #[serde(rename = "dirichlet-analytic")]
    DirichletAnalytic,
    #[serde(rename = "periodic")]
    Periodic,
}

/// Analytic metric families.  Closed forms in chart coordinates; the
/// constant-curvature ones are exact solutions of the flows they feed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Family {
    /// g = s(t) / (|k0| z^2) * delta on the upper half space z > 0,
    /// constant sectional curvature k0 < 0 at t = 0.
    HyperbolicHalfspace { k0: f64 },
    /// Hyperbolic half space times (1 + eps * w^2 * exp(-|x-c|^2 / 2w^2)),
    /// extended self-similarly in time (boundary model, exact at eps = 0).
    /// The w^2 factor puts eps in curvature units: the Einstein eigenvalue
    /// deficit is O(eps) regardless of the bump width, so narrow bumps with
    /// negligible boundary tails stay negatively curved.
    PerturbedHyperbolic {
        k0: f64,
        eps: f64,
        bump_center: [f64; 3],
        bump_width: f64,
    },
    /// Left-invariant metric m on the solvable group [e3,e1]=e1, [e3,e2]=e2
    /// in horospherical coordinates: theta^1 = e^{-z} dx, theta^2 = e^{-z} dy,
    /// theta^3 = dz.  Static chart realization of the frame backend.
    SolvableChart { m: [f64; 6] },
    /// Hyperbolic half space pulled back by a fixed diffeomorphism of the box
    /// [lo, hi] that is the identity on the boundary.  Still an exact XCF
    /// solution; used for gauge-equivalence runs.
    PullbackHyperbolic {
        k0: f64,
        alpha: f64,
        lo: [f64; 3],
        hi: [f64; 3],
    },
    /// Flat metric plus periodic trigonometric wiggles; stencil tests only.
    PeriodicSynthetic { amp: f64, period: [f64; 3] },
}

impl Family {
    pub fn eval(&self, x: [f64; 3], ctx: &TimeCtx) -> SymMat3 {
        match self {
            Family::HyperbolicHalfspace { k0 } => {
                let (s, _) = hyperbolic_scale(*k0, ctx.t, ctx.law);
                hyperbolic_base(*k0, x) * s
            }
            Family::PerturbedHyperbolic {
                k0,
                eps,
                bump_center,
                bump_width,
            } => {
                let (s, _) = hyperbolic_scale(*k0, ctx.t, ctx.law);
                hyperbolic_base(*k0, x)
                    * (s * (1.0 + eps * bump_width * bump_width * gauss_bump(x, bump_center, *bump_width)))
            }
            Family::SolvableChart { m } => solvable_chart(&SymMat3::new(*m), x),
            Family::PullbackHyperbolic { k0, alpha, lo, hi } => {
                let (psi, dpsi) = box_diffeo(x, *alpha, lo, hi);
                let g = {
                    let (s, _) = hyperbolic_scale(*k0, ctx.t, ctx.law);
                    hyperbolic_base(*k0, psi) * s
                };
                pullback(&g, &dpsi)
            }
            Family::PeriodicSynthetic { amp, period } => periodic_synthetic(*amp, period, x),
        }
    }

    /// Time derivative of the family metric (Dirichlet boundary forcing).
    pub fn eval_dt(&self, x: [f64; 3], ctx: &TimeCtx) -> SymMat3 {
        match self {
            Family::HyperbolicHalfspace { k0 } => {
                let (_, sd) = hyperbolic_scale(*k0, ctx.t, ctx.law);
                hyperbolic_base(*k0, x) * sd
            }
            Family::PerturbedHyperbolic {
                k0,
                eps,
                bump_center,
                bump_width,
            } => {
                let (_, sd) = hyperbolic_scale(*k0, ctx.t, ctx.law);
                hyperbolic_base(*k0, x)
                    * (sd * (1.0 + eps * bump_width * bump_width * gauss_bump(x, bump_center, *bump_width)))
            }
            Family::SolvableChart { .. } | Family::PeriodicSynthetic { .. } => SymMat3::ZERO,
            Family::PullbackHyperbolic { k0, alpha, lo, hi } => {
                let (psi, dpsi) = box_diffeo(x, *alpha, lo, hi);
                let gdot = {
                    let (_, sd) = hyperbolic_scale(*k0, ctx.t, ctx.law);
                    hyperbolic_base(*k0, psi) * sd
                };
                pullback(&gdot, &dpsi)
            }
        }
    }
}

fn hyperbolic_base(k0: f64, x: [f64; 3]) -> SymMat3 {
    let z = x[2];
    let c = 1.0 / (k0.abs() * z * z);
    SymMat3::diag(c, c, c)
}

fn gauss_bump(x: [f64; 3], c: &[f64; 3], w: f64) -> f64 {
    let r2 = (x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2);
    (-r2 / (2.0 * w * w)).exp()
}

fn solvable_chart(m: &SymMat3, x: [f64; 3]) -> SymMat3 {
    let ez = (-x[2]).exp();
    SymMat3::new([
        m.get(0, 0) * ez * ez,
        m.get(0, 1) * ez * ez,
        m.get(0, 2) * ez,
        m.get(1, 1) * ez * ez,
        m.get(1, 2) * ez,
        m.get(2, 2),
    ])
}

/// psi(x) = x + alpha * c * B(x) with B = prod_i sin^2(pi u_i); B and dB
/// vanish on the box boundary so psi is the identity there.
fn box_diffeo(x: [f64; 3], alpha: f64, lo: &[f64; 3], hi: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    const DIR: [f64; 3] = [1.0, -0.7, 0.5];
    let mut u = [0.0; 3];
    let mut s2 = [0.0; 3]; // sin^2(pi u_i)
    let mut ds = [0.0; 3]; // d/dx_i sin^2(pi u_i)
    for i in 0..3 {
        let len = hi[i] - lo[i];
        u[i] = ((x[i] - lo[i]) / len).clamp(0.0, 1.0);
        let sp = (std::f64::consts::PI * u[i]).sin();
        s2[i] = sp * sp;
        ds[i] = std::f64::consts::PI * (2.0 * std::f64::consts::PI * u[i]).sin() / len;
    }
    let b = s2[0] * s2[1] * s2[2];
    let db = [
        ds[0] * s2[1] * s2[2],
        s2[0] * ds[1] * s2[2],
        s2[0] * s2[1] * ds[2],
    ];
    let mut psi = x;
    let mut dpsi = [[0.0; 3]; 3]; // dpsi[a][j] = d psi_a / d x_j
    for a in 0..3 {
        psi[a] += alpha * DIR[a] * b;
        for j in 0..3 {
            dpsi[a][j] = if a == j { 1.0 } else { 0.0 } + alpha * DIR[a] * db[j];
        }
    }
    (psi, dpsi)
}

/// (psi^* g)_{ij} = dpsi^a_i dpsi^b_j g_ab.
fn pullback(g: &SymMat3, dpsi: &[[f64; 3]; 3]) -> SymMat3 {
    SymMat3::from_fn(|i, j| {
        let mut s = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                s += dpsi[a][i] * dpsi[b][j] * g.get(a, b);
            }
        }
        s
    })
}

fn periodic_synthetic(amp: f64, period: &[f64; 3], x: [f64; 3]) -> SymMat3 {
    let w = [
        2.0 * std::f64::consts::PI * x[0] / period[0],
        2.0 * std::f64::consts::PI * x[1] / period[1],
        2.0 * std::f64::consts::PI * x[2] / period[2],
    ];
    SymMat3::new([
        1.0 + amp * w[0].sin() * w[1].cos(),
        0.5 * amp * w[0].sin() * w[2].sin(),
        0.25 * amp * w[1].sin() * w[2].cos(),
        1.0 + amp * w[1].cos() * w[2].sin(),
        0.5 * amp * w[0].cos() * w[1].sin(),
        1.0 + amp * w[2].cos() * w[0].sin(),
    ])
}

/// A dense per-node field on the same index layout as its grid.
#[derive(Clone, Debug)]
pub struct Field<T> {
    pub dims: [usize; 3],
    pub data: Vec<T>,
}

impl<T> Field<T> {
    pub fn idx(&self, n: [usize; 3]) -> usize {
        n[0] + self.dims[0] * (n[1] + self.dims[1] * n[2])
    }

    pub fn get(&self, n: [usize; 3]) -> &T {
        &self.data[self.idx(n)]
    }
}

#[derive(Clone, Debug)]
pub struct MetricGrid {
    pub dims: [usize; 3],
    pub h: [f64; 3],
    pub origin: [f64; 3],
    pub boundary: BoundaryMode,
    pub family: Family,
    pub values: Vec<SymMat3>,
}

impl MetricGrid {
    pub fn from_family(
        dims: [usize; 3],
        h: [f64; 3],
        origin: [f64; 3],
        boundary: BoundaryMode,
        family: Family,
    ) -> Result<Self> {
        let mut grid = MetricGrid {
            dims,
            h,
            origin,
            boundary,
            family,
            values: Vec::new(),
        };
        let mut values = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    values.push(grid.family.eval(grid.pos([i, j, k]), &TimeCtx::ZERO));
                }
            }
        }
        grid.values = values;
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for &d in &self.dims {
            if d < 5 {
                return Err(XcfError::Config(format!(
                    "grid dims must be >= 5 per axis, got {:?}",
                    self.dims
                )));
            }
        }
        for &hh in &self.h {
            if !(hh > 0.0) {
                return Err(XcfError::Config(format!("spacing must be > 0, got {:?}", self.h)));
            }
        }
        if self.values.len() != self.node_count() {
            return Err(XcfError::Config(format!(
                "value count {} does not match dims {:?}",
                self.values.len(),
                self.dims
            )));
        }
        for n in self.nodes() {
            if !self.values[self.idx(n)].is_spd() {
                return Err(XcfError::NonPositiveMetric { node: n });
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    #[inline]
    pub fn idx(&self, n: [usize; 3]) -> usize {
        n[0] + self.dims[0] * (n[1] + self.dims[1] * n[2])
    }

    pub fn pos(&self, n: [usize; 3]) -> [f64; 3] {
        [
            self.origin[0] + n[0] as f64 * self.h[0],
            self.origin[1] + n[1] as f64 * self.h[1],
            self.origin[2] + n[2] as f64 * self.h[2],
        ]
    }

    fn pos_i(&self, p: [isize; 3]) -> [f64; 3] {
        [
            self.origin[0] + p[0] as f64 * self.h[0],
            self.origin[1] + p[1] as f64 * self.h[1],
            self.origin[2] + p[2] as f64 * self.h[2],
        ]
    }

    /// Node value with ghost handling: periodic wrap or analytic Dirichlet pad.
    pub fn sample(&self, p: [isize; 3], ctx: &TimeCtx) -> SymMat3 {
        let inside = (0..3).all(|a| p[a] >= 0 && (p[a] as usize) < self.dims[a]);
        if inside {
            return self.values[self.idx([p[0] as usize, p[1] as usize, p[2] as usize])];
        }
        match self.boundary {
            BoundaryMode::Periodic => {
                let n = [
                    p[0].rem_euclid(self.dims[0] as isize) as usize,
                    p[1].rem_euclid(self.dims[1] as isize) as usize,
                    p[2].rem_euclid(self.dims[2] as isize) as usize,
                ];
                self.values[self.idx(n)]
            }
            BoundaryMode::DirichletAnalytic => self.family.eval(self.pos_i(p), ctx),
        }
    }

    /// All stored nodes, i1 fastest.
    pub fn nodes(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [n1, n2, n3] = self.dims;
        (0..n3).flat_map(move |k| (0..n2).flat_map(move |j| (0..n1).map(move |i| [i, j, k])))
    }

    /// Nodes with the outermost layer stripped (the interior box used by all
    /// quadratures).
    pub fn interior_nodes(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let [n1, n2, n3] = self.dims;
        (1..n3 - 1).flat_map(move |k| {
            (1..n2 - 1).flat_map(move |j| (1..n1 - 1).map(move |i| [i, j, k]))
        })
    }

    pub fn is_boundary(&self, n: [usize; 3]) -> bool {
        (0..3).any(|a| n[a] == 0 || n[a] == self.dims[a] - 1)
    }

    /// Reset the outermost layer from the family at the given time.
    pub fn reset_boundary(&mut self, ctx: &TimeCtx) {
        let nodes: Vec<[usize; 3]> = self.nodes().filter(|&n| self.is_boundary(n)).collect();
        for n in nodes {
            let x = self.pos(n);
            let v = self.family.eval(x, ctx);
            let id = self.idx(n);
            self.values[id] = v;
        }
    }

    // ---- snapshot JSON ------------------------------------------------------

    pub fn to_json(&self) -> String {
        let mut s = String::with_capacity(64 + self.node_count() * 6 * 26);
        s.push_str("{\"kind\":\"grid\",\"dims\":[");
        s.push_str(&format!("{},{},{}", self.dims[0], self.dims[1], self.dims[2]));
        s.push_str("],\"h\":[");
        s.push_str(&format!(
            "{},{},{}",
            io::fmt_g17(self.h[0]),
            io::fmt_g17(self.h[1]),
            io::fmt_g17(self.h[2])
        ));
        s.push_str("],\"origin\":[");
        s.push_str(&format!(
            "{},{},{}",
            io::fmt_g17(self.origin[0]),
            io::fmt_g17(self.origin[1]),
            io::fmt_g17(self.origin[2])
        ));
        s.push_str("],\"boundary\":");
        s.push_str(match self.boundary {
            BoundaryMode::DirichletAnalytic => "\"dirichlet-analytic\"",
            BoundaryMode::Periodic => "\"periodic\"",
        });
        s.push_str(",\"family\":");
        let fam = serde_json::to_value(&self.family).expect("family serializes");
        io::write_value(&mut s, &fam);
        s.push_str(",\"g\":[");
        for (kn, v) in self.values.iter().enumerate() {
            for (kc, c) in v.m.iter().enumerate() {
                if kn + kc > 0 {
                    s.push(',');
                }
                s.push_str(&io::fmt_g17(*c));
            }
        }
        s.push_str("]}");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let obj = v
            .as_object()
            .ok_or_else(|| XcfError::Json("snapshot is not an object".into()))?;
        if obj.get("kind").and_then(Value::as_str) != Some("grid") {
            return Err(XcfError::Json("snapshot kind is not \"grid\"".into()));
        }
        let arr_usize = |key: &str| -> Result<[usize; 3]> {
            let a = obj
                .get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| XcfError::Json(format!("missing array {key}")))?;
            if a.len() != 3 {
                return Err(XcfError::Json(format!("{key} must have 3 entries")));
            }
            Ok([
                a[0].as_u64().unwrap_or(0) as usize,
                a[1].as_u64().unwrap_or(0) as usize,
                a[2].as_u64().unwrap_or(0) as usize,
            ])
        };
        let arr_f64 = |key: &str| -> Result<[f64; 3]> {
            let a = obj
                .get(key)
                .and_then(Value::as_array)
                .ok_or_else(|| XcfError::Json(format!("missing array {key}")))?;
            if a.len() != 3 {
                return Err(XcfError::Json(format!("{key} must have 3 entries")));
            }
            Ok([
                a[0].as_f64().unwrap_or(f64::NAN),
                a[1].as_f64().unwrap_or(f64::NAN),
                a[2].as_f64().unwrap_or(f64::NAN),
            ])
        };
        let dims = arr_usize("dims")?;
        let h = arr_f64("h")?;
        let origin = arr_f64("origin")?;
        let boundary = match obj.get("boundary").and_then(Value::as_str) {
            Some("dirichlet-analytic") => BoundaryMode::DirichletAnalytic,
            Some("periodic") => BoundaryMode::Periodic,
            other => return Err(XcfError::Json(format!("bad boundary {other:?}"))),
        };
        let family: Family = serde_json::from_value(
            obj.get("family")
                .cloned()
                .ok_or_else(|| XcfError::Json("missing family".into()))?,
        )?;
        let g = obj
            .get("g")
            .and_then(Value::as_array)
            .ok_or_else(|| XcfError::Json("missing g array".into()))?;
        let n = dims[0] * dims[1] * dims[2];
        if g.len() != 6 * n {
            return Err(XcfError::Json(format!(
                "g has {} entries, expected {}",
                g.len(),
                6 * n
            )));
        }
        let mut values = Vec::with_capacity(n);
        for node in 0..n {
            let mut m = [0.0; 6];
            for c in 0..6 {
                m[c] = g[6 * node + c]
                    .as_f64()
                    .ok_or_else(|| XcfError::Json("non-numeric g entry".into()))?;
            }
            values.push(SymMat3::new(m));
        }
        let grid = MetricGrid {
            dims,
            h,
            origin,
            boundary,
            family,
            values,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_hyp() -> MetricGrid {
        MetricGrid::from_family(
            [5, 5, 5],
            [0.1, 0.1, 0.1],
            [0.0, 0.0, 1.0],
            BoundaryMode::DirichletAnalytic,
            Family::HyperbolicHalfspace { k0: -1.0 },
        )
        .unwrap()
    }

    #[test]
    fn hyperbolic_scale_matches_closed_form() {
        let (s, sd) = hyperbolic_scale(-1.0, 2.0, FlowLaw::Raw);
        assert_relative_eq!(s, 3.0, epsilon = 1e-15);
        assert_relative_eq!(sd, 2.0 / 3.0, epsilon = 1e-15);
        // normalized flow at the fixed point: s == 1 forever
        let (s, sd) = hyperbolic_scale(-1.0, 5.0, FlowLaw::Normalized { k: -1.0 });
        assert_relative_eq!(s, 1.0, epsilon = 1e-15);
        assert_relative_eq!(sd, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn dirichlet_ghost_matches_family() {
        let g = small_hyp();
        let ctx = TimeCtx::at(0.3);
        let ghost = g.sample([-1, 2, 2], &ctx);
        let expect = g.family.eval([-0.1, 0.2, 1.2], &ctx);
        assert_relative_eq!(ghost.m[0], expect.m[0], epsilon = 1e-15);
    }

    #[test]
    fn periodic_wraps() {
        let g = MetricGrid::from_family(
            [6, 6, 6],
            [0.25, 0.25, 0.25],
            [0.0, 0.0, 0.0],
            BoundaryMode::Periodic,
            Family::PeriodicSynthetic {
                amp: 0.05,
                period: [1.5, 1.5, 1.5],
            },
        )
        .unwrap();
        let a = g.sample([-1, 0, 0], &TimeCtx::ZERO);
        let b = g.sample([5, 0, 0], &TimeCtx::ZERO);
        assert_eq!(a, b);
    }

    #[test]
    fn snapshot_json_round_trip_is_exact() {
        let g = small_hyp();
        let text = g.to_json();
        let g2 = MetricGrid::from_json(&text).unwrap();
        assert_eq!(g.dims, g2.dims);
        assert_eq!(g.values, g2.values);
        assert_eq!(text, g2.to_json());
    }

    #[test]
    fn pullback_is_identity_on_boundary() {
        let fam = Family::PullbackHyperbolic {
            k0: -1.0,
            alpha: 0.02,
            lo: [0.0, 0.0, 1.0],
            hi: [0.5, 0.5, 1.5],
        };
        let plain = Family::HyperbolicHalfspace { k0: -1.0 };
        let ctx = TimeCtx::at(0.1);
        let x = [0.0, 0.25, 1.25]; // on the x1 = lo face
        let a = fam.eval(x, &ctx);
        let b = plain.eval(x, &ctx);
        for k in 0..6 {
            assert_relative_eq!(a.m[k], b.m[k], epsilon = 1e-14);
        }
        // and genuinely different inside
        let xin = [0.25, 0.25, 1.25];
        assert!((fam.eval(xin, &ctx) - plain.eval(xin, &ctx)).max_abs() > 1e-6);
    }
}
