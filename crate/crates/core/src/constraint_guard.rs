//! Event-triggered constraint handling for the learned operator: the
//! predicted input/output trajectories are checked against their boxes and,
//! only on a violation, the operator is replaced by its closest feasible
//! neighbour.

use std::time::{Duration, Instant};

use log::debug;
use ndarray::{Array1, ArrayView1, Axis};

use crate::deepc::{solve_qp, DeePCConfig, QpProblem, QpStatus};
use crate::error::{DeepcError, Result};
use crate::hankel::HankelSet;
use crate::operator_net::OperatorNetwork;
use crate::runtime::ControllerContext;

/// Whether `U_f g` or `Y_f g` leaves its box by more than `cfg.feas_tol`.
pub fn violates(h: &HankelSet, g: ArrayView1<f64>, cfg: &DeePCConfig) -> bool {
    max_violation(h, g, cfg) > cfg.feas_tol
}

/// Largest box violation of the trajectories predicted by `g`.
pub fn max_violation(h: &HankelSet, g: ArrayView1<f64>, cfg: &DeePCConfig) -> f64 {
    let (ulb, uub) = cfg.u_bounds();
    let (ylb, yub) = cfg.y_bounds();
    let u = h.u_f().dot(&g);
    let y = h.y_f().dot(&g);
    let mut worst = 0.0_f64;
    for i in 0..u.len() {
        worst = worst.max(ulb[i] - u[i]).max(u[i] - uub[i]);
    }
    for i in 0..y.len() {
        worst = worst.max(ylb[i] - y[i]).max(y[i] - yub[i]);
    }
    worst
}

/// Closest operator (Euclidean) whose predicted trajectories satisfy the
/// boxes. Operators already within `cfg.feas_tol` are returned unchanged.
pub fn project(h: &HankelSet, g_hat: ArrayView1<f64>, cfg: &DeePCConfig) -> Result<Array1<f64>> {
    let n = g_hat.len();
    if n != h.dims().cols() {
        return Err(DeepcError::dim(format!(
            "operator has {n} entries, Hankel set has {} columns",
            h.dims().cols()
        )));
    }
    if !violates(h, g_hat, cfg) {
        return Ok(g_hat.to_owned());
    }
    let (ulb, uub) = cfg.u_bounds();
    let (ylb, yub) = cfg.y_bounds();
    let prob = QpProblem::unconstrained(ndarray::Array2::eye(n), g_hat.mapv(|v| -2.0 * v))
        .with_ineq(
            h.future(),
            ndarray::concatenate(Axis(0), &[ulb.view(), ylb.view()]).expect("vectors"),
            ndarray::concatenate(Axis(0), &[uub.view(), yub.view()]).expect("vectors"),
        );
    let sol = solve_qp(&prob, cfg.qp_tol, cfg.qp_max_iter)?;
    match sol.status {
        QpStatus::Infeasible => Err(DeepcError::Infeasible(
            "no operator satisfies the input and output boxes".into(),
        )),
        QpStatus::MaxIter if max_violation(h, sol.x.view(), cfg) <= cfg.feas_tol => {
            debug!(
                "projection stopped after {} iterations with a feasible iterate (dual residual {:.3e})",
                sol.iterations, sol.dual_residual
            );
            Ok(sol.x)
        }
        QpStatus::MaxIter => Err(DeepcError::Convergence {
            iterations: sol.iterations,
            residual: sol.primal_residual.max(sol.dual_residual),
        }),
        QpStatus::Solved => Ok(sol.x),
    }
}

#[derive(Debug, Clone)]
pub struct GuardedOutput {
    pub g: Array1<f64>,
    pub u_seq: Array1<f64>,
    pub y_pred: Array1<f64>,
    /// The projection was triggered.
    pub event: bool,
    /// Time spent in the projection, when triggered.
    pub projection_time: Option<Duration>,
    /// `||U_p g - u_ini||_inf` after projection (diagnostic only).
    pub ini_drift: f64,
}

/// Learned operator followed, if needed, by the feasibility projection.
pub fn guarded_control(
    net: &OperatorNetwork,
    h: &HankelSet,
    cfg: &DeePCConfig,
    ctx: &ControllerContext,
) -> Result<GuardedOutput> {
    let x = net.variant.context_vector(&ctx.u_ini_vec(), &ctx.y_ini_vec(), &ctx.e_u, &ctx.e_y);
    let g_hat = net.forward(ArrayView1::from(&x))?;
    guard_operator(h, cfg, ctx, g_hat)
}

/// Guard applied to an already computed operator.
pub fn guard_operator(
    h: &HankelSet,
    cfg: &DeePCConfig,
    ctx: &ControllerContext,
    g_hat: Array1<f64>,
) -> Result<GuardedOutput> {
    let (g, event, projection_time) = if violates(h, g_hat.view(), cfg) {
        let t0 = Instant::now();
        let g = project(h, g_hat.view(), cfg)?;
        (g, true, Some(t0.elapsed()))
    } else {
        (g_hat, false, None)
    };
    let ini_drift = if event {
        let u_ini = Array1::from(ctx.u_ini_vec());
        let d = (h.u_p().dot(&g) - u_ini).iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        debug!("projection moved the initial-input fit by {d:.3e}");
        d
    } else {
        0.0
    };
    Ok(GuardedOutput {
        u_seq: h.u_f().dot(&g),
        y_pred: h.y_f().dot(&g),
        g,
        event,
        projection_time,
        ini_drift,
    })
}
