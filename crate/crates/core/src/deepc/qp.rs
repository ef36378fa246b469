//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    x' H x + f' x
//! subject to  A_eq x = b_eq
//!             lb_in <= A_in x <= ub_in
//! ```
//!
//! with a primal-dual interior-point method (Mehrotra predictor-corrector) on
//! a Ruiz-equilibrated copy of the problem. On convergence the active set read
//! off the multipliers is used to solve the reduced KKT system directly
//! ("polishing"), which yields solutions accurate to near machine precision.

use nalgebra::{DMatrix, DVector};
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{DeepcError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: Array2<f64>,
    pub f: Array1<f64>,
    pub a_eq: Array2<f64>,
    pub b_eq: Array1<f64>,
    pub a_in: Array2<f64>,
    pub lb_in: Array1<f64>,
    pub ub_in: Array1<f64>,
}

impl QpProblem {
    /// Problem with only a quadratic and linear term.
    pub fn unconstrained(h: Array2<f64>, f: Array1<f64>) -> Self {
        let n = f.len();
        Self {
            h,
            f,
            a_eq: Array2::zeros((0, n)),
            b_eq: Array1::zeros(0),
            a_in: Array2::zeros((0, n)),
            lb_in: Array1::zeros(0),
            ub_in: Array1::zeros(0),
        }
    }

    pub fn with_eq(mut self, a: Array2<f64>, b: Array1<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_ineq(mut self, a: Array2<f64>, lb: Array1<f64>, ub: Array1<f64>) -> Self {
        self.a_in = a;
        self.lb_in = lb;
        self.ub_in = ub;
        self
    }

    pub fn n(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: ArrayView1<f64>) -> f64 {
        x.dot(&self.h.dot(&x)) + self.f.dot(&x)
    }

    /// Largest equality or two-sided inequality violation.
    pub fn primal_violation(&self, x: ArrayView1<f64>) -> f64 {
        let mut v = 0.0_f64;
        if self.a_eq.nrows() > 0 {
            let r = self.a_eq.dot(&x) - &self.b_eq;
            v = v.max(r.iter().fold(0.0, |m: f64, e| m.max(e.abs())));
        }
        if self.a_in.nrows() > 0 {
            let ax = self.a_in.dot(&x);
            for i in 0..ax.len() {
                v = v.max(self.lb_in[i] - ax[i]).max(ax[i] - self.ub_in[i]);
            }
        }
        v
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.h.dim() != (n, n) {
            return Err(DeepcError::dim(format!(
                "QP: H is {:?} but f has length {n}",
                self.h.dim()
            )));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(DeepcError::dim(format!(
                "QP: A_eq is {:?}, b_eq has length {} (n = {n})",
                self.a_eq.dim(),
                self.b_eq.len()
            )));
        }
        let m = self.a_in.nrows();
        if self.a_in.ncols() != n || self.lb_in.len() != m || self.ub_in.len() != m {
            return Err(DeepcError::dim(format!(
                "QP: A_in is {:?}, bounds have lengths {} / {} (n = {n})",
                self.a_in.dim(),
                self.lb_in.len(),
                self.ub_in.len()
            )));
        }
        let scale = self.h.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for i in 0..n {
            for j in 0..i {
                if (self.h[[i, j]] - self.h[[j, i]]).abs() > 1e-12 * scale {
                    return Err(DeepcError::Numeric(format!(
                        "QP: H is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let finite = self
            .h
            .iter()
            .chain(&self.f)
            .chain(&self.a_eq)
            .chain(&self.b_eq)
            .chain(&self.a_in)
            .all(|v| v.is_finite());
        if !finite {
            return Err(DeepcError::Numeric("QP data contains non-finite entries".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Solved,
    MaxIter,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: Array1<f64>,
    /// Multipliers of the equality rows.
    pub y_eq: Array1<f64>,
    /// Multipliers of the inequality rows (negative at the lower bound).
    pub y_in: Array1<f64>,
    pub status: QpStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub objective: f64,
    pub polished: bool,
}

const SCALING_ITERS: usize = 10;
const POLISH_DELTA: f64 = 1e-9;
const POLISH_REFINE: usize = 8;
const KKT_DELTA: f64 = 1e-10;
const KKT_REFINE: usize = 3;
const STEP_FRACTION: f64 = 0.99;
const INFEASIBILITY_TOL: f64 = 1e-8;
const RAY_NORM: f64 = 1e8;

/// Equilibrated copy of the problem in the form `0.5 x'Px + q'x`,
/// `l <= Ax <= u`, equality rows first.
struct Scaled {
    p: Array2<f64>,
    q: Array1<f64>,
    a: Array2<f64>,
    l: Array1<f64>,
    u: Array1<f64>,
    d: Array1<f64>,
    e: Array1<f64>,
    c: f64,
}

fn col_inf_norms(m: ArrayView2<f64>) -> Array1<f64> {
    m.map_axis(Axis(0), |c| c.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
}

fn row_inf_norms(m: ArrayView2<f64>) -> Array1<f64> {
    m.map_axis(Axis(1), |r| r.iter().fold(0.0_f64, |a, v| a.max(v.abs())))
}

fn limit_scale(v: f64) -> f64 {
    if v < 1e-4 {
        1.0
    } else {
        v.clamp(1e-4, 1e4)
    }
}

fn inf(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

fn equilibrate(p: Array2<f64>, q: Array1<f64>, a: Array2<f64>, l: Array1<f64>, u: Array1<f64>) -> Scaled {
    let (n, m) = (q.len(), a.nrows());
    let mut s = Scaled {
        p,
        q,
        a,
        l,
        u,
        d: Array1::ones(n),
        e: Array1::ones(m),
        c: 1.0,
    };
    for _ in 0..SCALING_ITERS {
        let pn = col_inf_norms(s.p.view());
        let an = col_inf_norms(s.a.view());
        let dd: Array1<f64> = (0..n)
            .map(|j| 1.0 / limit_scale(pn[j].max(an[j])).sqrt())
            .collect();
        let en = row_inf_norms(s.a.view());
        let de: Array1<f64> = (0..m).map(|i| 1.0 / limit_scale(en[i]).sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                s.p[[i, j]] *= dd[i] * dd[j];
            }
        }
        for i in 0..m {
            for j in 0..n {
                s.a[[i, j]] *= de[i] * dd[j];
            }
        }
        s.q = &s.q * &dd;
        s.d = &s.d * &dd;
        s.e = &s.e * &de;

        let pn = col_inf_norms(s.p.view());
        let mean = if n > 0 { pn.sum() / n as f64 } else { 0.0 };
        let gamma = 1.0 / limit_scale(mean.max(inf(s.q.view())));
        s.p *= gamma;
        s.q *= gamma;
        s.c *= gamma;
    }
    s.l = &s.l * &s.e;
    s.u = &s.u * &s.e;
    s
}

/// Regularized Newton system `[P + C'DC, A'; A, 0]` of one interior-point
/// iteration, factored once and reused for predictor and corrector.
struct Newton {
    k: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

impl Newton {
    fn new(p: &Array2<f64>, a_eq: ArrayView2<f64>, c: ArrayView2<f64>, dweight: &Array1<f64>) -> Self {
        let (n, me) = (p.nrows(), a_eq.nrows());
        let dc = &c * &dweight.view().insert_axis(Axis(1));
        let kx = p + &c.t().dot(&dc);
        let dim = n + me;
        let mut k = DMatrix::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                k[(i, j)] = kx[[i, j]];
            }
        }
        for r in 0..me {
            for j in 0..n {
                k[(n + r, j)] = a_eq[[r, j]];
                k[(j, n + r)] = a_eq[[r, j]];
            }
        }
        let mut reg = k.clone();
        for i in 0..n {
            reg[(i, i)] += KKT_DELTA;
        }
        for r in n..dim {
            reg[(r, r)] -= KKT_DELTA;
        }
        Self {
            lu: reg.lu(),
            k,
            n,
        }
    }

    fn solve(&self, rx: &Array1<f64>, ry: &Array1<f64>) -> Option<(Array1<f64>, Array1<f64>)> {
        let n = self.n;
        let rhs = DVector::from_iterator(n + ry.len(), rx.iter().chain(ry.iter()).copied());
        let mut sol = self.lu.solve(&rhs)?;
        let mut best = (&rhs - &self.k * &sol).amax();
        for _ in 0..KKT_REFINE {
            let resid = &rhs - &self.k * &sol;
            let Some(step) = self.lu.solve(&resid) else { break };
            let cand = &sol + step;
            let r = (&rhs - &self.k * &cand).amax();
            if !(r < best) {
                break;
            }
            best = r;
            sol = cand;
        }
        if sol.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((
            Array1::from_iter(sol.rows(0, n).iter().copied()),
            Array1::from_iter(sol.rows(n, ry.len()).iter().copied()),
        ))
    }
}

/// Largest step in `(0, 1]` keeping `v + t dv` positive, shortened by the
/// fraction-to-boundary rule.
fn max_step(v: &Array1<f64>, dv: &Array1<f64>) -> f64 {
    let mut t = 1.0_f64;
    for (x, d) in v.iter().zip(dv) {
        if *d < 0.0 {
            t = t.min(-x / d);
        }
    }
    t
}

/// Interior-point state in the scaled space. Slacks and multipliers exist
/// only for finite bounds: `s_l = Cx - l`, `s_u = u - Cx`.
struct Ipm<'a> {
    sc: &'a Scaled,
    me: usize,
    lo: Vec<usize>,
    up: Vec<usize>,
    x: Array1<f64>,
    y: Array1<f64>,
    s_l: Array1<f64>,
    z_l: Array1<f64>,
    s_u: Array1<f64>,
    z_u: Array1<f64>,
}

struct IpmResiduals {
    r_d: Array1<f64>,
    r_p: Array1<f64>,
    r_l: Array1<f64>,
    r_u: Array1<f64>,
    cx: Array1<f64>,
}

impl<'a> Ipm<'a> {
    fn c(&self) -> ArrayView2<'a, f64> {
        self.sc.a.view().slice_move(s![self.me.., ..])
    }

    fn a_eq(&self) -> ArrayView2<'a, f64> {
        self.sc.a.view().slice_move(s![..self.me, ..])
    }

    fn pairs(&self) -> usize {
        self.lo.len() + self.up.len()
    }

    fn mu(&self) -> f64 {
        let k = self.pairs();
        if k == 0 {
            return 0.0;
        }
        (self.s_l.dot(&self.z_l) + self.s_u.dot(&self.z_u)) / k as f64
    }

    /// Inequality multipliers as one signed vector (negative at lower bounds).
    fn z_signed(&self) -> Array1<f64> {
        let mut z = Array1::zeros(self.sc.a.nrows() - self.me);
        for (k, &i) in self.lo.iter().enumerate() {
            z[i] -= self.z_l[k];
        }
        for (k, &i) in self.up.iter().enumerate() {
            z[i] += self.z_u[k];
        }
        z
    }

    fn scatter(&self, v_l: &Array1<f64>, v_u: &Array1<f64>) -> Array1<f64> {
        let mut z = Array1::zeros(self.sc.a.nrows() - self.me);
        for (k, &i) in self.lo.iter().enumerate() {
            z[i] += v_l[k];
        }
        for (k, &i) in self.up.iter().enumerate() {
            z[i] += v_u[k];
        }
        z
    }

    fn residuals(&self) -> IpmResiduals {
        let sc = self.sc;
        let cx = self.c().dot(&self.x);
        let r_d = sc.p.dot(&self.x) + &sc.q + self.a_eq().t().dot(&self.y) + self.c().t().dot(&self.z_signed());
        let r_p = self.a_eq().dot(&self.x) - sc.l.slice(s![..self.me]);
        let r_l = Array1::from_iter(
            self.lo
                .iter()
                .enumerate()
                .map(|(k, &i)| cx[i] - sc.l[self.me + i] - self.s_l[k]),
        );
        let r_u = Array1::from_iter(
            self.up
                .iter()
                .enumerate()
                .map(|(k, &i)| sc.u[self.me + i] - cx[i] - self.s_u[k]),
        );
        IpmResiduals { r_d, r_p, r_l, r_u, cx }
    }

    fn weights(&self) -> Array1<f64> {
        let w_l = &self.z_l / &self.s_l;
        let w_u = &self.z_u / &self.s_u;
        self.scatter(&w_l, &w_u)
    }

    /// Search direction for complementarity targets `s z = -rc` (per pair).
    #[allow(clippy::type_complexity)]
    fn direction(
        &self,
        nw: &Newton,
        r: &IpmResiduals,
        rc_l: &Array1<f64>,
        rc_u: &Array1<f64>,
    ) -> Option<(Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>, Array1<f64>)> {
        let v_l = (rc_l + &(&self.z_l * &r.r_l)) / &self.s_l;
        let v_u = (rc_u + &(&self.z_u * &r.r_u)) / &self.s_u;
        let v = self.scatter(&v_l, &v_u.mapv(|t| -t));
        let rx = -&r.r_d - self.c().t().dot(&v);
        let ry = -&r.r_p;
        let (dx, dy) = nw.solve(&rx, &ry)?;
        let cdx = self.c().dot(&dx);
        let cdx_l = Array1::from_iter(self.lo.iter().map(|&i| cdx[i]));
        let cdx_u = Array1::from_iter(self.up.iter().map(|&i| cdx[i]));
        let ds_l = &cdx_l + &r.r_l;
        let ds_u = &r.r_u - &cdx_u;
        let dz_l = -(rc_l + &(&self.z_l * &ds_l)) / &self.s_l;
        let dz_u = -(rc_u + &(&self.z_u * &ds_u)) / &self.s_u;
        Some((dx, dy, ds_l, dz_l, ds_u, dz_u))
    }
}

/// Solves `p` to absolute primal, stationarity and complementarity
/// residuals below `tol`.
pub fn solve_qp(p: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(DeepcError::Config(format!("QP tolerance must be positive, got {tol}")));
    }
    for i in 0..p.lb_in.len() {
        if p.lb_in[i] > p.ub_in[i] {
            return Ok(infeasible(p, 0));
        }
    }
    let n = p.n();
    let me = p.a_eq.nrows();
    let mi = p.a_in.nrows();
    let a = ndarray::concatenate(Axis(0), &[p.a_eq.view(), p.a_in.view()]).expect("same cols");
    let l = ndarray::concatenate(Axis(0), &[p.b_eq.view(), p.lb_in.view()]).expect("vectors");
    let u = ndarray::concatenate(Axis(0), &[p.b_eq.view(), p.ub_in.view()]).expect("vectors");
    let p2 = &p.h * 2.0;
    let sc = equilibrate(p2.clone(), p.f.clone(), a.clone(), l.clone(), u.clone());

    let finish = |x: Array1<f64>, yv: Array1<f64>, status, it, polished| {
        let stat = &p2.dot(&x) + &p.f + &a.t().dot(&yv);
        QpSolution {
            objective: p.objective(x.view()),
            primal_residual: p.primal_violation(x.view()),
            dual_residual: inf(stat.view()),
            y_eq: yv.slice(s![..me]).to_owned(),
            y_in: yv.slice(s![me..]).to_owned(),
            x,
            status,
            iterations: it,
            polished,
        }
    };

    let lo: Vec<usize> = (0..mi).filter(|&i| sc.l[me + i] > f64::NEG_INFINITY).collect();
    let up: Vec<usize> = (0..mi).filter(|&i| sc.u[me + i] < f64::INFINITY).collect();
    let mut st = Ipm {
        sc: &sc,
        me,
        x: Array1::zeros(n),
        y: Array1::zeros(me),
        s_l: Array1::ones(lo.len()),
        z_l: Array1::ones(lo.len()),
        s_u: Array1::ones(up.len()),
        z_u: Array1::ones(up.len()),
        lo,
        up,
    };

    // Start from the equality-constrained minimizer pulled toward the box
    // centres, with slacks shifted into the interior.
    {
        let c = st.c();
        let mut target = Array1::zeros(mi);
        let mut w = Array1::zeros(mi);
        for i in 0..mi {
            let (li, ui) = (sc.l[me + i], sc.u[me + i]);
            let (t, has) = match (li.is_finite(), ui.is_finite()) {
                (true, true) => (0.5 * (li + ui), true),
                (true, false) => (li + 1.0, true),
                (false, true) => (ui - 1.0, true),
                (false, false) => (0.0, false),
            };
            target[i] = t;
            w[i] = if has { 1.0 } else { 0.0 };
        }
        let nw = Newton::new(&sc.p, st.a_eq(), c, &w);
        let rx = -&sc.q + c.t().dot(&(&target * &w));
        let ry = sc.l.slice(s![..me]).to_owned();
        let (x0, y0) = nw
            .solve(&rx, &ry)
            .ok_or_else(|| DeepcError::Numeric("QP: singular initial system".into()))?;
        st.x = x0;
        st.y = y0;
        let cx = c.dot(&st.x);
        let s_l = Array1::from_iter(st.lo.iter().map(|&i| cx[i] - sc.l[me + i]));
        let s_u = Array1::from_iter(st.up.iter().map(|&i| sc.u[me + i] - cx[i]));
        let min_s = s_l.iter().chain(s_u.iter()).fold(f64::INFINITY, |m, v| m.min(*v));
        let shift = if min_s < 1.0 { 1.0 - min_s } else { 0.0 };
        st.s_l = s_l + shift;
        st.s_u = s_u + shift;
    }

    let einv_eq = sc.e.slice(s![..me]).mapv(|v| 1.0 / v);
    let einv_in = sc.e.slice(s![me..]).mapv(|v| 1.0 / v);
    let dinv = sc.d.mapv(|v| 1.0 / v);
    let target = 0.1 * tol;
    let mut last_it = max_iter;
    for it in 1..=max_iter {
        let r = st.residuals();
        // Unscaled measures: constraint violation, stationarity, gap.
        let eq_viol = inf((&r.r_p * &einv_eq).view());
        let mut box_viol = 0.0_f64;
        for i in 0..mi {
            let v = r.cx[i] * einv_in[i];
            box_viol = box_viol.max(p.lb_in[i] - v).max(v - p.ub_in[i]);
        }
        let prim = eq_viol.max(box_viol);
        let dual = inf((&r.r_d * &dinv).view()) / sc.c;
        let gap = st.mu() / sc.c;
        if prim <= target && dual <= target && gap <= target {
            let xu = &st.x * &sc.d;
            let yu = ndarray::concatenate(Axis(0), &[st.y.view(), st.z_signed().view()]).expect("vectors")
                * &sc.e
                / sc.c;
            if let Some(sol) = try_polish(p, &p2, &a, &l, &u, &xu, &yu, tol) {
                return Ok(finish(sol.0, sol.1, QpStatus::Solved, it, true));
            }
            return Ok(finish(xu, yu, QpStatus::Solved, it, false));
        }
        if certifies_infeasibility(&st, p) {
            return Ok(infeasible(p, it));
        }

        let nw = Newton::new(&sc.p, st.a_eq(), st.c(), &st.weights());
        let mu = st.mu();
        // Predictor.
        let rc_l = &st.s_l * &st.z_l;
        let rc_u = &st.s_u * &st.z_u;
        // A breakdown of the Newton solve ends the run with the last iterate.
        let Some(aff) = st.direction(&nw, &r, &rc_l, &rc_u) else {
            last_it = it;
            break;
        };
        let (_, _, ds_l, dz_l, ds_u, dz_u) = &aff;
        let t_p = max_step(&st.s_l, ds_l).min(max_step(&st.s_u, ds_u));
        let t_d = max_step(&st.z_l, dz_l).min(max_step(&st.z_u, dz_u));
        let t_aff = t_p.min(t_d);
        let sigma = if st.pairs() > 0 {
            let mu_aff = ((&st.s_l + &(ds_l * t_aff)).dot(&(&st.z_l + &(dz_l * t_aff)))
                + (&st.s_u + &(ds_u * t_aff)).dot(&(&st.z_u + &(dz_u * t_aff))))
                / st.pairs() as f64;
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        // Corrector with centring.
        let rc_l = &rc_l + &(ds_l * dz_l) - sigma * mu;
        let rc_u = &rc_u + &(ds_u * dz_u) - sigma * mu;
        let Some((dx, dy, ds_l, dz_l, ds_u, dz_u)) = st.direction(&nw, &r, &rc_l, &rc_u) else {
            last_it = it;
            break;
        };
        let t_p = (STEP_FRACTION * max_step(&st.s_l, &ds_l).min(max_step(&st.s_u, &ds_u))).min(1.0);
        let t_d = (STEP_FRACTION * max_step(&st.z_l, &dz_l).min(max_step(&st.z_u, &dz_u))).min(1.0);
        let t = t_p.min(t_d);
        st.x = &st.x + &(dx * t);
        st.y = &st.y + &(dy * t);
        st.s_l = &st.s_l + &(ds_l * t);
        st.s_u = &st.s_u + &(ds_u * t);
        st.z_l = &st.z_l + &(dz_l * t);
        st.z_u = &st.z_u + &(dz_u * t);
    }
    let xu = &st.x * &sc.d;
    let yu = ndarray::concatenate(Axis(0), &[st.y.view(), st.z_signed().view()]).expect("vectors") * &sc.e / sc.c;
    Ok(finish(xu, yu, QpStatus::MaxIter, last_it, false))
}

/// Farkas test on the (diverging) multipliers: a nonzero ray with
/// `A_eq'y + A_in'z = 0` whose support value is negative proves that no
/// point satisfies the constraints.
fn certifies_infeasibility(st: &Ipm, p: &QpProblem) -> bool {
    let sc = st.sc;
    let me = st.me;
    let y = &st.y * &sc.e.slice(s![..me]);
    let z_l = Array1::from_iter(st.lo.iter().enumerate().map(|(k, &i)| st.z_l[k] * sc.e[me + i]));
    let z_u = Array1::from_iter(st.up.iter().enumerate().map(|(k, &i)| st.z_u[k] * sc.e[me + i]));
    let norm = inf(y.view()).max(inf(z_l.view())).max(inf(z_u.view()));
    if norm < RAY_NORM * sc.c {
        return false;
    }
    let mut z = Array1::zeros(p.a_in.nrows());
    let mut support = p.b_eq.dot(&y);
    for (k, &i) in st.lo.iter().enumerate() {
        z[i] -= z_l[k];
        support -= p.lb_in[i] * z_l[k];
    }
    for (k, &i) in st.up.iter().enumerate() {
        z[i] += z_u[k];
        support += p.ub_in[i] * z_u[k];
    }
    let ray = p.a_eq.t().dot(&y) + p.a_in.t().dot(&z);
    inf(ray.view()) <= INFEASIBILITY_TOL * norm && support < -INFEASIBILITY_TOL * norm
}

/// Reduced KKT solve on the active set guessed from `(z, y)`. Returns the
/// unscaled primal point and full multiplier vector.
fn polish(
    prob_p: &Array2<f64>,
    prob_q: &Array1<f64>,
    a: &Array2<f64>,
    l: &Array1<f64>,
    u: &Array1<f64>,
    z: &Array1<f64>,
    y: &Array1<f64>,
) -> Option<(Array1<f64>, Array1<f64>)> {
    let n = prob_q.len();
    let m = a.nrows();
    let mut active: Vec<(usize, f64)> = Vec::new();
    for i in 0..m {
        if (u[i] - l[i]).abs() < 1e-12 {
            active.push((i, l[i]));
        } else if l[i] > f64::NEG_INFINITY && z[i] - l[i] < -y[i] {
            active.push((i, l[i]));
        } else if u[i] < f64::INFINITY && u[i] - z[i] < y[i] {
            active.push((i, u[i]));
        }
    }
    let k = active.len();
    let dim = n + k;
    let mut kkt = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in 0..n {
            kkt[(i, j)] = prob_p[[i, j]];
        }
    }
    for (r, &(row, _)) in active.iter().enumerate() {
        for j in 0..n {
            kkt[(n + r, j)] = a[[row, j]];
            kkt[(j, n + r)] = a[[row, j]];
        }
    }
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += POLISH_DELTA;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= POLISH_DELTA;
    }
    let lu = reg.lu();
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        rhs[i] = -prob_q[i];
    }
    for (r, &(_, b)) in active.iter().enumerate() {
        rhs[n + r] = b;
    }
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..POLISH_REFINE {
        let resid = &rhs - &kkt * &sol;
        let Some(step) = lu.solve(&resid) else { break };
        sol += step;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let x = Array1::from_iter(sol.rows(0, n).iter().copied());
    let mut yfull = Array1::zeros(m);
    for (r, &(row, _)) in active.iter().enumerate() {
        yfull[row] = sol[n + r];
    }
    Some((x, yfull))
}

#[allow(clippy::too_many_arguments)]
fn try_polish(
    p: &QpProblem,
    p2: &Array2<f64>,
    a: &Array2<f64>,
    l: &Array1<f64>,
    u: &Array1<f64>,
    x: &Array1<f64>,
    y: &Array1<f64>,
    tol: f64,
) -> Option<(Array1<f64>, Array1<f64>)> {
    let z = a.dot(x);
    let (xp, yp) = polish(p2, &p.f, a, l, u, &z, y)?;
    let stat = p2.dot(&xp) + &p.f + a.t().dot(&yp);
    let m_eq = p.a_eq.nrows();
    // Multiplier signs must match the bound each active row sits on.
    let az = a.dot(&xp);
    for i in m_eq..a.nrows() {
        let at_lower = (az[i] - l[i]).abs() <= (az[i] - u[i]).abs();
        if (yp[i] < -tol && !at_lower) || (yp[i] > tol && at_lower) {
            return None;
        }
    }
    (p.primal_violation(xp.view()) < tol && inf(stat.view()) < tol).then_some((xp, yp))
}

fn infeasible(p: &QpProblem, it: usize) -> QpSolution {
    let n = p.n();
    QpSolution {
        x: Array1::zeros(n),
        y_eq: Array1::zeros(p.a_eq.nrows()),
        y_in: Array1::zeros(p.a_in.nrows()),
        status: QpStatus::Infeasible,
        iterations: it,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        objective: f64::INFINITY,
        polished: false,
    }
}
