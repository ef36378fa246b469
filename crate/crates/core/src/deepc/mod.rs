//! Conventional data-enabled predictive control: the operator-only QP solved
//! in receding horizon, and the dense QP solver it shares with the guard.

pub mod qp;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DeepcError, Result};
use crate::hankel::HankelSet;
use crate::linalg;
use crate::runtime::ControllerContext;

pub use qp::{solve_qp, QpProblem, QpSolution, QpStatus};

/// Weighting matrix given as a scalar times identity, or by its diagonal
/// (either per channel or per predicted entry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Diagonal(Vec<f64>),
}

impl Weight {
    /// Diagonal over `channels * horizon` stacked entries.
    pub fn diagonal(&self, channels: usize, horizon: usize) -> Result<Array1<f64>> {
        let d = match self {
            Weight::Scalar(w) => Array1::from_elem(channels * horizon, *w),
            Weight::Diagonal(v) if v.len() == channels => {
                Array1::from_iter((0..channels * horizon).map(|i| v[i % channels]))
            }
            Weight::Diagonal(v) if v.len() == channels * horizon => Array1::from(v.clone()),
            Weight::Diagonal(v) => {
                return Err(DeepcError::Config(format!(
                    "weight diagonal has {} entries, expected {channels} or {}",
                    v.len(),
                    channels * horizon
                )))
            }
        };
        if d.iter().any(|w| !(*w >= 0.0)) {
            return Err(DeepcError::Config("weights must be non-negative".into()));
        }
        Ok(d)
    }

    pub fn scaled(&self, k: f64) -> Weight {
        match self {
            Weight::Scalar(w) => Weight::Scalar(w * k),
            Weight::Diagonal(v) => Weight::Diagonal(v.iter().map(|w| w * k).collect()),
        }
    }
}

fn default_reg_eps() -> f64 {
    1e-8
}
fn default_qp_tol() -> f64 {
    1e-6
}
fn default_qp_max_iter() -> usize {
    20000
}
fn default_feas_tol() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeePCConfig {
    pub t: usize,
    pub t_ini: usize,
    pub n_p: usize,
    pub q_weight: Weight,
    pub r_weight: Weight,
    pub p_u: Weight,
    pub p_y: Weight,
    pub u_lb: Vec<f64>,
    pub u_ub: Vec<f64>,
    pub y_lb: Vec<f64>,
    pub y_ub: Vec<f64>,
    #[serde(default = "default_reg_eps")]
    pub reg_eps: f64,
    #[serde(default = "default_qp_tol")]
    pub qp_tol: f64,
    #[serde(default = "default_qp_max_iter")]
    pub qp_max_iter: usize,
    /// Violation threshold that triggers the guard's projection.
    #[serde(default = "default_feas_tol")]
    pub feas_tol: f64,
}

impl DeePCConfig {
    /// Horizons and weights used for the gene-network study, with the given boxes.
    pub fn grn_defaults(u_box: (Vec<f64>, Vec<f64>), y_box: (Vec<f64>, Vec<f64>)) -> Self {
        Self {
            t: 200,
            t_ini: 10,
            n_p: 10,
            q_weight: Weight::Scalar(5.0),
            r_weight: Weight::Scalar(1.0),
            p_u: Weight::Scalar(10.0),
            p_y: Weight::Scalar(10.0),
            u_lb: u_box.0,
            u_ub: u_box.1,
            y_lb: y_box.0,
            y_ub: y_box.1,
            reg_eps: default_reg_eps(),
            qp_tol: default_qp_tol(),
            qp_max_iter: default_qp_max_iter(),
            feas_tol: default_feas_tol(),
        }
    }

    pub fn n_u(&self) -> usize {
        self.u_lb.len()
    }

    pub fn n_y(&self) -> usize {
        self.y_lb.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.u_lb.len() != self.u_ub.len() || self.y_lb.len() != self.y_ub.len() {
            return Err(DeepcError::Config("bound vectors have mismatched lengths".into()));
        }
        for (i, (l, u)) in self.u_lb.iter().zip(&self.u_ub).enumerate() {
            if !(l < u) {
                return Err(DeepcError::Config(format!("input bound {i}: {l} >= {u}")));
            }
        }
        for (i, (l, u)) in self.y_lb.iter().zip(&self.y_ub).enumerate() {
            if !(l < u) {
                return Err(DeepcError::Config(format!("output bound {i}: {l} >= {u}")));
            }
        }
        if self.t_ini == 0 || self.n_p == 0 || self.t < self.t_ini + self.n_p {
            return Err(DeepcError::Config(format!(
                "need T >= T_ini + N_p with positive horizons, got T = {}, T_ini = {}, N_p = {}",
                self.t, self.t_ini, self.n_p
            )));
        }
        if !(self.reg_eps >= 0.0) || !(self.qp_tol > 0.0) || !(self.feas_tol >= 0.0) {
            return Err(DeepcError::Config("reg_eps/feas_tol must be >= 0 and qp_tol > 0".into()));
        }
        for w in [&self.q_weight, &self.r_weight, &self.p_u, &self.p_y] {
            if let Weight::Scalar(s) = w {
                if !(*s >= 0.0) {
                    return Err(DeepcError::Config("weights must be non-negative".into()));
                }
            }
        }
        Ok(())
    }

    /// Rejects pairing with a Hankel set of different dimensions.
    pub fn check_hankel(&self, h: &HankelSet) -> Result<()> {
        let d = h.dims();
        if d.t != self.t || d.t_ini != self.t_ini || d.n_p != self.n_p || d.n_u != self.n_u() || d.n_y != self.n_y() {
            return Err(DeepcError::Mismatch {
                left: "config".into(),
                right: "hankel".into(),
                detail: format!(
                    "config T={} T_ini={} N_p={} n_u={} n_y={}, hankel {}",
                    self.t,
                    self.t_ini,
                    self.n_p,
                    self.n_u(),
                    self.n_y(),
                    d.fingerprint()
                ),
            });
        }
        Ok(())
    }

    /// Input bounds repeated over the horizon.
    pub fn u_bounds(&self) -> (Array1<f64>, Array1<f64>) {
        (broadcast(&self.u_lb, self.n_p), broadcast(&self.u_ub, self.n_p))
    }

    pub fn y_bounds(&self) -> (Array1<f64>, Array1<f64>) {
        (broadcast(&self.y_lb, self.n_p), broadcast(&self.y_ub, self.n_p))
    }
}

pub(crate) fn broadcast(per_channel: &[f64], horizon: usize) -> Array1<f64> {
    Array1::from_iter((0..per_channel.len() * horizon).map(|i| per_channel[i % per_channel.len()]))
}

/// `M' diag(w) M`.
fn weighted_gram(m: ArrayView2<f64>, w: &Array1<f64>) -> Array2<f64> {
    let wm = &m * &w.view().insert_axis(Axis(1));
    m.t().dot(&wm)
}

#[derive(Debug, Clone)]
pub struct DeepcStep {
    pub g: Array1<f64>,
    pub u_seq: Array1<f64>,
    pub y_pred: Array1<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    /// The output box had to be softened to find a solution.
    pub soft_output: bool,
}

/// The tracking QP over the operator `g` alone.
pub fn deepc_problem(
    h: &HankelSet,
    cfg: &DeePCConfig,
    ctx: &ControllerContext,
    u_ref_win: &[f64],
    y_ref_win: &[f64],
) -> Result<QpProblem> {
    cfg.check_hankel(h)?;
    let (n_u, n_y, n_p) = (cfg.n_u(), cfg.n_y(), cfg.n_p);
    if u_ref_win.len() != n_u * n_p || y_ref_win.len() != n_y * n_p {
        return Err(DeepcError::dim(format!(
            "reference windows have {} / {} entries, expected {} / {}",
            u_ref_win.len(),
            y_ref_win.len(),
            n_u * n_p,
            n_y * n_p
        )));
    }
    let u_ini = ctx.u_ini_vec();
    let y_ini = ctx.y_ini_vec();
    if u_ini.len() != n_u * cfg.t_ini || y_ini.len() != n_y * cfg.t_ini {
        return Err(DeepcError::dim(format!(
            "context holds {} / {} initial entries, expected {} / {}",
            u_ini.len(),
            y_ini.len(),
            n_u * cfg.t_ini,
            n_y * cfg.t_ini
        )));
    }
    let q = cfg.q_weight.diagonal(n_y, n_p)?;
    let r = cfg.r_weight.diagonal(n_u, n_p)?;
    let (uf, yf) = (h.u_f(), h.y_f());
    let ng = uf.ncols();
    let mut hess = weighted_gram(yf, &q) + weighted_gram(uf, &r);
    for i in 0..ng {
        hess[[i, i]] += cfg.reg_eps;
    }
    // Symmetrize away round-off from the two products.
    let hess = (&hess + &hess.t()) * 0.5;
    let yr = Array1::from(y_ref_win.to_vec());
    let ur = Array1::from(u_ref_win.to_vec());
    let f = (yf.t().dot(&(&q * &yr)) + uf.t().dot(&(&r * &ur))) * -2.0;
    let (ulb, uub) = cfg.u_bounds();
    let (ylb, yub) = cfg.y_bounds();
    let b_eq = ndarray::concatenate(Axis(0), &[Array1::from(u_ini).view(), Array1::from(y_ini).view()])
        .expect("vectors");
    Ok(QpProblem::unconstrained(hess, f)
        .with_eq(h.past(), b_eq)
        .with_ineq(
            h.future(),
            ndarray::concatenate(Axis(0), &[ulb.view(), ylb.view()]).expect("vectors"),
            ndarray::concatenate(Axis(0), &[uub.view(), yub.view()]).expect("vectors"),
        ))
}

/// Relative singular-value cutoff of the row-space coordinates.
const ROW_SPACE_TOL: f64 = 1e-10;

/// Coordinates of the row space of `M = [U_p; Y_p; U_f; Y_f]`: with
/// `M = U S V'`, every `g = V S^-1 w` and `M g = U w`. Since the
/// regularizer penalizes any null-space component of `g`, the optimum lies
/// in this space, where the program is small and well conditioned.
struct RowSpace {
    u_past: Array2<f64>,
    u_uf: Array2<f64>,
    u_yf: Array2<f64>,
    g_of_w: Array2<f64>,
    inv_s2: Array1<f64>,
}

impl RowSpace {
    fn new(h: &HankelSet) -> Self {
        let m = ndarray::concatenate(Axis(0), &[h.past().view(), h.future().view()]).expect("same cols");
        let (u, sv, v) = linalg::thin_svd(m.view(), ROW_SPACE_TOL);
        let np = h.u_p().nrows() + h.y_p().nrows();
        let nuf = h.u_f().nrows();
        let g_of_w = &v / &sv.view().insert_axis(Axis(0));
        Self {
            u_past: u.slice(ndarray::s![..np, ..]).to_owned(),
            u_uf: u.slice(ndarray::s![np..np + nuf, ..]).to_owned(),
            u_yf: u.slice(ndarray::s![np + nuf.., ..]).to_owned(),
            g_of_w,
            inv_s2: sv.mapv(|x| 1.0 / (x * x)),
        }
    }
}

/// Optional slack columns softening the output rows.
fn soft_output(base: &QpProblem, n_u_rows: usize, cfg: &DeePCConfig) -> Result<QpProblem> {
    let (n_y, n_p) = (cfg.n_y(), cfg.n_p);
    let ns = n_y * n_p;
    let nv = base.n();
    let n = nv + ns;
    let w = cfg.p_y.scaled(1e3).diagonal(n_y, n_p)?;
    let mut hess = Array2::zeros((n, n));
    hess.slice_mut(ndarray::s![..nv, ..nv]).assign(&base.h);
    for i in 0..ns {
        hess[[nv + i, nv + i]] = w[i].max(1e-12);
    }
    let mut f = Array1::zeros(n);
    f.slice_mut(ndarray::s![..nv]).assign(&base.f);
    let mut a_eq = Array2::zeros((base.a_eq.nrows(), n));
    a_eq.slice_mut(ndarray::s![.., ..nv]).assign(&base.a_eq);
    let mut a_in = Array2::zeros((base.a_in.nrows(), n));
    a_in.slice_mut(ndarray::s![.., ..nv]).assign(&base.a_in);
    for i in 0..ns {
        a_in[[n_u_rows + i, nv + i]] = 1.0;
    }
    Ok(QpProblem::unconstrained(hess, f)
        .with_eq(a_eq, base.b_eq.clone())
        .with_ineq(a_in, base.lb_in.clone(), base.ub_in.clone()))
}

/// The tracking program of [`deepc_problem`] in row-space coordinates.
fn reduced_problem(rs: &RowSpace, full: &QpProblem, cfg: &DeePCConfig, u_ref: &[f64], y_ref: &[f64]) -> Result<QpProblem> {
    let (n_u, n_y, n_p) = (cfg.n_u(), cfg.n_y(), cfg.n_p);
    let q = cfg.q_weight.diagonal(n_y, n_p)?;
    let r = cfg.r_weight.diagonal(n_u, n_p)?;
    let mut hess = weighted_gram(rs.u_yf.view(), &q) + weighted_gram(rs.u_uf.view(), &r);
    for (i, v) in rs.inv_s2.iter().enumerate() {
        hess[[i, i]] += cfg.reg_eps * v;
    }
    let hess = (&hess + &hess.t()) * 0.5;
    let yr = Array1::from(y_ref.to_vec());
    let ur = Array1::from(u_ref.to_vec());
    let f = (rs.u_yf.t().dot(&(&q * &yr)) + rs.u_uf.t().dot(&(&r * &ur))) * -2.0;
    let fut = ndarray::concatenate(Axis(0), &[rs.u_uf.view(), rs.u_yf.view()]).expect("same cols");
    Ok(QpProblem::unconstrained(hess, f)
        .with_eq(rs.u_past.clone(), full.b_eq.clone())
        .with_ineq(fut, full.lb_in.clone(), full.ub_in.clone()))
}

/// One receding-horizon DeePC solve of the program built by
/// [`deepc_problem`]. When the hard output box is infeasible the step is
/// retried with a soft output box; if that also fails an
/// [`DeepcError::Infeasible`] is returned.
pub fn deepc_step(
    h: &HankelSet,
    cfg: &DeePCConfig,
    ctx: &ControllerContext,
    u_ref_win: &[f64],
    y_ref_win: &[f64],
) -> Result<DeepcStep> {
    let full = deepc_problem(h, cfg, ctx, u_ref_win, y_ref_win)?;
    let rs = RowSpace::new(h);
    let prob = reduced_problem(&rs, &full, cfg, u_ref_win, y_ref_win)?;
    let sol = solve_qp(&prob, cfg.qp_tol, cfg.qp_max_iter)?;
    let (w, status, iterations, soft) = match sol.status {
        QpStatus::Infeasible => {
            let soft = soft_output(&prob, h.u_f().nrows(), cfg)?;
            let s2 = solve_qp(&soft, cfg.qp_tol, cfg.qp_max_iter)?;
            if s2.status == QpStatus::Infeasible {
                return Err(DeepcError::Infeasible(
                    "DeePC step infeasible even with a soft output box".into(),
                ));
            }
            (
                s2.x.slice(ndarray::s![..prob.n()]).to_owned(),
                s2.status,
                sol.iterations + s2.iterations,
                true,
            )
        }
        st => (sol.x, st, sol.iterations, false),
    };
    let g = rs.g_of_w.dot(&w);
    Ok(DeepcStep {
        u_seq: h.u_f().dot(&g),
        y_pred: h.y_f().dot(&g),
        g,
        status,
        iterations,
        soft_output: soft,
    })
}
