//! Gradient verification against central finite differences.
//!
//! Runs in 64-bit mode: the analytic backward pass is compared with
//! `(L(p+h) - L(p-h)) / 2h` on a random subset of parameters.

use super::model::{loss_and_grads, loss_only, NetError, NetParams};
use super::tensor::{Feat2, Feat3};
use crate::rng::Pcg32;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckReport {
    /// Largest relative error among parameters with a non-negligible
    /// gradient.
    pub max_rel_err: f64,
    /// Largest absolute disagreement among near-zero-gradient parameters.
    pub max_abs_near_zero: f64,
    pub n_checked: usize,
    pub n_near_zero: usize,
}

/// Threshold below which a gradient pair is compared absolutely; relative
/// error is meaningless against finite-difference noise there.
pub const NEAR_ZERO_GRAD: f64 = 1e-7;

/// Compares analytic gradients with central differences of step `step` on
/// `n_params` randomly chosen parameters.
pub fn gradient_check(
    params: &NetParams<f64>,
    voxels: &Feat3<f64>,
    visual: &Feat2<f64>,
    target: usize,
    n_params: usize,
    step: f64,
    seed: u64,
) -> Result<GradCheckReport, NetError> {
    let mut analytic = NetParams::<f64>::zeros(params.config);
    loss_and_grads(params, voxels, visual, target, &mut analytic)?;
    let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = Pcg32::new(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        max_abs_near_zero: 0.0,
        n_checked: 0,
        n_near_zero: 0,
    };
    let mut work = params.clone();
    for _ in 0..n_params {
        let flat = rng.below(total);
        let (ti, ei) = locate(&sizes, flat);
        let a = analytic.tensors()[ti].1[ei];
        let base = params.tensors()[ti].1[ei];
        work.tensors_mut()[ti].1[ei] = base + step;
        let up = loss_only(&work, voxels, visual, target)?;
        work.tensors_mut()[ti].1[ei] = base - step;
        let down = loss_only(&work, voxels, visual, target)?;
        work.tensors_mut()[ti].1[ei] = base;
        let numeric = (up - down) / (2.0 * step);
        let mag = a.abs().max(numeric.abs());
        if mag < NEAR_ZERO_GRAD {
            report.n_near_zero += 1;
            report.max_abs_near_zero = report.max_abs_near_zero.max((a - numeric).abs());
        } else {
            report.n_checked += 1;
            report.max_rel_err = report.max_rel_err.max((a - numeric).abs() / mag);
        }
    }
    Ok(report)
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (ti, s) in sizes.iter().enumerate() {
        if flat < *s {
            return (ti, flat);
        }
        flat -= s;
    }
    unreachable!("flat index within total size")
}

/// Smallest margin of any ReLU pre-activation and any max-pool decision of
/// one forward pass. Finite differences are only trustworthy when this is
/// comfortably larger than the step.
pub fn activation_margin(
    params: &NetParams<f64>,
    voxels: &Feat3<f64>,
    visual: &Feat2<f64>,
) -> Result<f64, NetError> {
    let trace = super::model::forward_trace(params, voxels, visual)?;
    let mut margin = f64::INFINITY;
    for v in trace
        .v_pre1
        .data
        .iter()
        .chain(trace.v_pre2.data.iter())
        .chain(trace.v_pre3.data.iter())
        .chain(trace.g_pre_fc.iter())
    {
        margin = margin.min(v.abs());
    }
    // Max-pool ties: margin between the winner and the runner-up.
    for (pool, input) in [
        (&trace.g_pool1, &trace.g_conv1),
        (&trace.g_pool2, &trace.g_conv2),
    ] {
        for (o, &best_i) in pool.argmax.iter().enumerate() {
            let c = o / (pool.out.nx * pool.out.ny * pool.out.nz);
            let rem = o % (pool.out.nx * pool.out.ny * pool.out.nz);
            let oxi = rem / (pool.out.ny * pool.out.nz);
            let rem = rem % (pool.out.ny * pool.out.nz);
            let oyi = rem / pool.out.nz;
            let ozi = rem % pool.out.nz;
            let best = input.data[best_i];
            for dx in 0..2 {
                for dy in 0..2 {
                    for dz in 0..2 {
                        let i = input.idx(c, 2 * oxi + dx, 2 * oyi + dy, 2 * ozi + dz);
                        if i != best_i {
                            margin = margin.min(best - input.data[i]);
                        }
                    }
                }
            }
        }
    }
    Ok(margin)
}
