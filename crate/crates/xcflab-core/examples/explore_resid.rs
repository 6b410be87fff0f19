//! Early-time evolution residuals (h-refinement) and static Bianchi ratios.

use xcflab_core::curvature::{curvature_core_field, StencilOrder};
use xcflab_core::flow::{run_flow, DtSpec, FlowVariant, RunOptions};
use xcflab_core::grid::{BoundaryMode, Family, MetricGrid, TimeCtx};
use xcflab_core::third_order::bianchi_cross_residual;

fn resid_at(n: usize, h: f64) -> (f64, f64, f64) {
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
            t_end: 12.5 * 0.24 * h * h / 6.75, // ~12 steps
            dt: DtSpec::Cfl(0.2),
            order: StencilOrder::Two,
            ..Default::default()
        },
    )
    .unwrap();
    let k = run.monitors.len() - 2;
    (
        run.monitors[k].res_dt_ein.unwrap(),
        run.monitors[k].res_dt_det_e.unwrap(),
        run.dt,
    )
}

fn main() {
    let t0 = std::time::Instant::now();
    let (e1, d1, dt1) = resid_at(17, 1.0 / 32.0);
    println!("h=1/32: resDtEin = {e1:.4e}, resDtDetE = {d1:.4e} (dt = {dt1:.3e}) [{:?}]", t0.elapsed());
    let t1 = std::time::Instant::now();
    let (e2, d2, dt2) = resid_at(33, 1.0 / 64.0);
    println!(
        "h=1/64: resDtEin = {e2:.4e}, resDtDetE = {d2:.4e} (dt = {dt2:.3e}) ratios {:.2} {:.2} [{:?}]",
        e1 / e2,
        d1 / d2,
        t1.elapsed()
    );

    // static bianchi ratios on the perturbed family, order 2 and 4
    for order in [StencilOrder::Two, StencilOrder::Four] {
        let mut vals = Vec::new();
        for &(n, h) in &[(17usize, 1.0 / 16.0), (33, 1.0 / 32.0)] {
            let grid = MetricGrid::from_family(
                [n, n, n],
                [h, h, h],
                [0.0, 0.0, 1.0],
                BoundaryMode::DirichletAnalytic,
                Family::PerturbedHyperbolic {
                    k0: -1.0,
                    eps: 0.05,
                    bump_center: [0.5, 0.5, 1.5],
                    bump_width: 0.4,
                },
            )
            .unwrap();
            let core = curvature_core_field(&grid, order, &TimeCtx::ZERO).unwrap();
            let r = bianchi_cross_residual(&grid, &core, order, &TimeCtx::ZERO).unwrap();
            vals.push(r);
        }
        println!("bianchi order {order:?}: coarse {:.4e} fine {:.4e} ratio {:.2}", vals[0], vals[1], vals[0] / vals[1]);
    }

    // w = 0.15 variant of the monotonicity run for margin comparison
    let t2 = std::time::Instant::now();
    let grid = MetricGrid::from_family(
        [25, 25, 25],
        [1.0 / 32.0; 3],
        [0.0, 0.0, 1.0],
        BoundaryMode::DirichletAnalytic,
        Family::PerturbedHyperbolic {
            k0: -1.0,
            eps: 0.05,
            bump_center: [0.375, 0.375, 1.375],
            bump_width: 0.15,
        },
    )
    .unwrap();
    let run = run_flow(
        grid,
        RunOptions {
            variant: FlowVariant::Raw,
            t_end: 0.05,
            dt: DtSpec::Cfl(0.2),
            order: StencilOrder::Two,
            ..Default::default()
        },
    )
    .unwrap();
    let mut j_viol = 0.0_f64;
    let mut i_viol = 0.0_f64;
    for w in run.monitors.windows(2) {
        j_viol = j_viol.max(w[1].j_fun - w[0].j_fun);
        i_viol = i_viol.max(w[0].i_fun - w[1].i_fun);
    }
    println!(
        "w=0.15 run: status {:?}, J viol {:.2e}, I viol {:.2e}, minDetE(end) {:.4}, J(0) {:.3e}, [{:?}]",
        run.status,
        j_viol,
        i_viol,
        run.monitors.last().unwrap().min_det_e,
        run.monitors[0].j_fun,
        t2.elapsed()
    );
}
