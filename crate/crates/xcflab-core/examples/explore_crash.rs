//! Track where det E crashes in the perturbed run.

use xcflab_core::curvature::{curvature_core_field, StencilOrder};
use xcflab_core::flow::{step_with_core, FlowState, FlowVariant};
use xcflab_core::grid::{BoundaryMode, Family, MetricGrid};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dt: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(1.861e-5);
    let nsteps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(40);

    let grid = MetricGrid::from_family(
        [17, 17, 17],
        [1.0 / 32.0; 3],
        [0.0, 0.0, 1.4],
        BoundaryMode::DirichletAnalytic,
        Family::HyperbolicHalfspace { k0: -1.0 },
    )
    .unwrap();
    let mut state = FlowState::new(grid);
    for k in 0..nsteps {
        let ctx = state.ctx(FlowVariant::Raw);
        let core = curvature_core_field(&state.metric, StencilOrder::Two, &ctx).unwrap();
        // find min detE and its node
        let mut min_d = f64::INFINITY;
        let mut argmin = [0usize; 3];
        for n in state.metric.nodes() {
            let d = core.get(n).det_e;
            if d < min_d {
                min_d = d;
                argmin = n;
            }
        }
        if k % 400 == 0 || min_d < 0.3 {
            println!(
                "step {k:3} t={:.3e} minDetE={min_d:.5} at {argmin:?} (dims 33)",
                state.t
            );
        }
        if min_d < 0.05 {
            // look at the neighborhood values of detE along the offending line
            let [i, j, kk] = argmin;
            print!("  detE along x1 through argmin: ");
            for di in -3i64..=3 {
                let ii = (i as i64 + di).clamp(0, 32) as usize;
                print!("{:.4} ", core.get([ii, j, kk]).det_e);
            }
            println!();
            break;
        }
        state = match step_with_core(&state, &core, dt, FlowVariant::Raw, StencilOrder::Two, 0.2) {
            Ok(s) => s,
            Err(e) => {
                println!("step failed at k={k}: {e}");
                break;
            }
        };
    }
}
