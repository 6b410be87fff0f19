//! Monitor rows: the scalar functionals tracked along every run, shared
//! between the grid PDE backend and the homogeneous ODE backend.
//!
//! Quadrature is midpoint over interior nodes: sum f sqrt(det g) h1 h2 h3.
//! Homogeneous runs report densities over one fundamental cell of frame
//! volume sqrt(det m).  Time-derivative entries use centered differences and
//! are null on the first/last row of a series.

use crate::io::fmt_g17;

#[derive(Clone, Copy, Debug, Default)]
pub struct MonitorRow {
    pub t: f64,
    pub vol: f64,
    pub int_h: f64,
    pub j_fun: f64,
    pub i_fun: f64,
    pub min_det_e: f64,
    pub max_trace_cross: f64,
    pub devil_l2: f64,
    pub harnack_min: Option<f64>,
    pub res_dt_ein: Option<f64>,
    pub res_dt_det_e: Option<f64>,
    pub d_vol_residual: Option<f64>,
}

pub const CSV_HEADER: &str =
    "t,vol,intH,J,I,minDetE,maxTraceCross,devilL2,harnackMin,resDtEin,resDtDetE,dVolResidual";

fn opt(v: Option<f64>) -> String {
    v.map(fmt_g17).unwrap_or_default()
}

pub fn monitors_to_csv(rows: &[MonitorRow]) -> String {
    let mut s = String::with_capacity(32 + rows.len() * 200);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_g17(r.t),
            fmt_g17(r.vol),
            fmt_g17(r.int_h),
            fmt_g17(r.j_fun),
            fmt_g17(r.i_fun),
            fmt_g17(r.min_det_e),
            fmt_g17(r.max_trace_cross),
            fmt_g17(r.devil_l2),
            opt(r.harnack_min),
            opt(r.res_dt_ein),
            opt(r.res_dt_det_e),
            opt(r.d_vol_residual),
        ));
    }
    s
}

/// Per-node integrand sample feeding a row.
#[derive(Clone, Copy, Debug)]
pub struct NodeSample {
    /// sqrt(det g) * cell volume.
    pub weight: f64,
    pub det_e: f64,
    pub tr_e: f64,
    pub trace_cross: f64,
    pub devil_norm2_v: f64,
}

/// Assemble the quadrature part of a row (time-derivative entries stay null).
pub fn row_from_samples(t: f64, samples: impl Iterator<Item = NodeSample>) -> MonitorRow {
    let mut row = MonitorRow {
        t,
        min_det_e: f64::INFINITY,
        max_trace_cross: f64::NEG_INFINITY,
        ..Default::default()
    };
    for s in samples {
        row.vol += s.weight;
        row.int_h += s.trace_cross * s.weight;
        row.j_fun += (s.tr_e / 3.0 - s.det_e.cbrt()) * s.weight;
        row.i_fun += s.det_e.max(0.0).sqrt() * s.weight;
        row.devil_l2 += s.devil_norm2_v * s.det_e.max(0.0).sqrt() * s.weight;
        row.min_det_e = row.min_det_e.min(s.det_e);
        row.max_trace_cross = row.max_trace_cross.max(s.trace_cross);
    }
    row
}

/// dVolResidual = |centered dVol/dt - intH| over a finished series.
pub fn fill_dvol_residuals(rows: &mut [MonitorRow], dt: f64) {
    for k in 1..rows.len().saturating_sub(1) {
        let dv = (rows[k + 1].vol - rows[k - 1].vol) / (2.0 * dt);
        rows[k].d_vol_residual = Some((dv - rows[k].int_h).abs());
    }
}
