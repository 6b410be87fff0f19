//! Resolution scan for the dI/dt = devilL2/4 identity and the criterion-1
//! order-4 hyperbolic run.

use xcflab_core::curvature::StencilOrder;
use xcflab_core::flow::{run_flow, DtSpec, FlowVariant, RunOptions};
use xcflab_core::grid::{BoundaryMode, Family, MetricGrid, TimeCtx};

fn identity_error(w: f64, h: f64, steps_t: f64) -> (f64, f64, f64) {
    // quiet faces: extent 6w puts them 3 sigma out
    let extent = 6.0 * w;
    let n = (extent / h).round() as usize + 1;
    let grid = MetricGrid::from_family(
        [n, n, n],
        [h, h, h],
        [0.0, 0.0, 1.0],
        BoundaryMode::DirichletAnalytic,
        Family::PerturbedHyperbolic {
            k0: -1.0,
            eps: 0.05,
            bump_center: [extent / 2.0, extent / 2.0, 1.0 + extent / 2.0],
            bump_width: w,
        },
    )
    .unwrap();
    let run = run_flow(
        grid,
        RunOptions {
            variant: FlowVariant::Raw,
            t_end: steps_t,
            dt: DtSpec::Cfl(0.2),
            order: StencilOrder::Two,
            ..Default::default()
        },
    )
    .unwrap();
    let rows = &run.monitors;
    let k = rows.len() / 2;
    let didt = (rows[k + 1].i_fun - rows[k - 1].i_fun) / (2.0 * run.dt);
    let d4 = 0.25 * rows[k].devil_l2;
    let rel = (didt - d4).abs() / didt.abs().max(d4.abs()).max(1e-12);
    (rel, didt, d4)
}

fn main() {
    let t0 = std::time::Instant::now();
    // w/h in {8, 16, 32}: extract the h^2 constant of the identity error
    for (w, h) in [(0.25, 1.0 / 32.0), (0.25, 1.0 / 64.0)] {
        let ti = std::time::Instant::now();
        // ~14 steps at each resolution
        let dt_est = 0.24 * h * h / (3.0 * 2.0);
        let (rel, didt, d4) = identity_error(w, h, 14.0 * dt_est);
        println!(
            "w/h = {:5.1}: rel = {:.3e} (dI/dt = {:.5e}, devilL2/4 = {:.5e})  [{:?}]",
            w / h,
            rel,
            didt,
            d4,
            ti.elapsed()
        );
    }
    println!("scan elapsed {:?}", t0.elapsed());

    // criterion-1 style run at order 4
    let t1 = std::time::Instant::now();
    let n = 13;
    let h = 1.0 / 32.0;
    let grid = MetricGrid::from_family(
        [n, n, n],
        [h, h, h],
        [0.0, 0.0, 1.0],
        BoundaryMode::DirichletAnalytic,
        Family::HyperbolicHalfspace { k0: -1.0 },
    )
    .unwrap();
    let run = run_flow(
        grid,
        RunOptions {
            variant: FlowVariant::Raw,
            t_end: 0.1,
            dt: DtSpec::Cfl(0.2),
            order: StencilOrder::Four,
            ..Default::default()
        },
    )
    .unwrap();
    println!(
        "order-4 hyperbolic run: status {:?}, dt = {:.3e}, rows = {}, elapsed {:?}",
        run.status,
        run.dt,
        run.monitors.len(),
        t1.elapsed()
    );
    let fin = &run.final_state;
    let s_exact = (4.0 * fin.t + 1.0_f64).sqrt();
    let mut worst = 0.0_f64;
    for node in fin.metric.nodes() {
        let x = fin.metric.pos(node);
        let g0 = Family::HyperbolicHalfspace { k0: -1.0 }.eval(x, &TimeCtx::ZERO);
        let got = fin.metric.values[fin.metric.idx(node)];
        for c in 0..6 {
            worst = worst.max((got.m[c] - s_exact * g0.m[c]).abs() / g0.m[0].abs());
        }
    }
    println!("  final metric max rel error: {worst:.3e}");
    let mid = &run.monitors[run.monitors.len() / 2];
    println!(
        "  mid: dVolRes = {:?} / intH = {:.5}, resDtEin = {:?}, resDtDetE = {:?}",
        mid.d_vol_residual, mid.int_h, mid.res_dt_ein, mid.res_dt_det_e
    );
    println!("total elapsed {:?}", t0.elapsed());
}
