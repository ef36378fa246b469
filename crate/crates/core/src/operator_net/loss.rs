use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};

use super::network::{Gradients, OperatorNetwork, Variant};
use crate::dataset::TrainingSample;
use crate::deepc::DeePCConfig;
use crate::error::{DeepcError, Result};
use crate::hankel::HankelSet;

/// Diagonal weights and horizon-broadcast bounds of the training objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWeights {
    pub q: Array1<f64>,
    pub r: Array1<f64>,
    pub p_u: Array1<f64>,
    pub p_y: Array1<f64>,
    pub u_lb: Array1<f64>,
    pub u_ub: Array1<f64>,
    pub y_lb: Array1<f64>,
    pub y_ub: Array1<f64>,
}

impl LossWeights {
    pub fn from_config(cfg: &DeePCConfig) -> Result<Self> {
        let (n_u, n_y, n_p) = (cfg.n_u(), cfg.n_y(), cfg.n_p);
        let (u_lb, u_ub) = cfg.u_bounds();
        let (y_lb, y_ub) = cfg.y_bounds();
        Ok(Self {
            q: cfg.q_weight.diagonal(n_y, n_p)?,
            r: cfg.r_weight.diagonal(n_u, n_p)?,
            p_u: cfg.p_u.diagonal(n_u, n_p)?,
            p_y: cfg.p_y.diagonal(n_y, n_p)?,
            u_lb,
            u_ub,
            y_lb,
            y_ub,
        })
    }

    fn check(&self, nu: usize, ny: usize) -> Result<()> {
        let ok_u = [&self.r, &self.p_u, &self.u_lb, &self.u_ub].iter().all(|v| v.len() == nu);
        let ok_y = [&self.q, &self.p_y, &self.y_lb, &self.y_ub].iter().all(|v| v.len() == ny);
        if !(ok_u && ok_y) {
            return Err(DeepcError::dim(format!(
                "loss weights do not match predicted lengths {nu} (inputs) / {ny} (outputs)"
            )));
        }
        Ok(())
    }
}

/// Squared hinge on bound violations: zero inside the box, quadratic outside.
pub fn soft_penalty(u_hat: ArrayView1<f64>, y_hat: ArrayView1<f64>, w: &LossWeights) -> f64 {
    fn side(v: ArrayView1<f64>, lb: &Array1<f64>, ub: &Array1<f64>, p: &Array1<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..v.len() {
            let lo = (lb[i] - v[i]).max(0.0);
            let hi = (v[i] - ub[i]).max(0.0);
            acc += p[i] * (lo * lo + hi * hi);
        }
        acc
    }
    side(u_hat, &w.u_lb, &w.u_ub, &w.p_u) + side(y_hat, &w.y_lb, &w.y_ub, &w.p_y)
}

/// Gradient of [`soft_penalty`] w.r.t. its argument, one side at a time.
fn penalty_grad(v: f64, lb: f64, ub: f64, p: f64) -> f64 {
    if v < lb {
        -2.0 * p * (lb - v)
    } else if v > ub {
        2.0 * p * (v - ub)
    } else {
        0.0
    }
}

/// Network inputs and labels of a batch as dense row matrices.
#[derive(Debug, Clone)]
pub struct BatchMatrices {
    pub x: Array2<f64>,
    pub u_ref: Array2<f64>,
    pub y_ref: Array2<f64>,
}

impl BatchMatrices {
    pub fn from_samples(variant: Variant, samples: &[TrainingSample]) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| DeepcError::dim("batch must contain at least one sample"))?;
        let xin = variant
            .context_vector(&first.u_ini, &first.y_ini, &first.e_u, &first.e_y)
            .len();
        let (nu, ny) = (first.u_ref.len(), first.y_ref.len());
        let b = samples.len();
        let mut x = Array2::zeros((b, xin));
        let mut u_ref = Array2::zeros((b, nu));
        let mut y_ref = Array2::zeros((b, ny));
        for (i, s) in samples.iter().enumerate() {
            let v = variant.context_vector(&s.u_ini, &s.y_ini, &s.e_u, &s.e_y);
            if v.len() != xin || s.u_ref.len() != nu || s.y_ref.len() != ny {
                return Err(DeepcError::dim(format!("sample {i} has inconsistent dimensions")));
            }
            x.row_mut(i).assign(&ArrayView1::from(&v));
            u_ref.row_mut(i).assign(&ArrayView1::from(&s.u_ref));
            y_ref.row_mut(i).assign(&ArrayView1::from(&s.y_ref));
        }
        Ok(Self { x, u_ref, y_ref })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            x: self.x.select(Axis(0), idx),
            u_ref: self.u_ref.select(Axis(0), idx),
            y_ref: self.y_ref.select(Axis(0), idx),
        }
    }
}

fn check_shapes(net: &OperatorNetwork, b: &BatchMatrices, h: &HankelSet, w: &LossWeights) -> Result<()> {
    let dims = h.dims();
    net.check_dims(&dims)?;
    let (nu, ny) = (h.u_f().nrows(), h.y_f().nrows());
    if b.u_ref.ncols() != nu || b.y_ref.ncols() != ny {
        return Err(DeepcError::Mismatch {
            left: "dataset".into(),
            right: "hankel".into(),
            detail: format!(
                "references have {} / {} entries, Hankel future blocks have {nu} / {ny} rows",
                b.u_ref.ncols(),
                b.y_ref.ncols()
            ),
        });
    }
    if b.is_empty() {
        return Err(DeepcError::dim("batch must contain at least one sample"));
    }
    w.check(nu, ny)
}

/// Mean objective of the operator predictions `g` (rows) for a batch.
fn objective_of(
    variant: Variant,
    g: ArrayView2<f64>,
    b: &BatchMatrices,
    uf: ArrayView2<f64>,
    yf: ArrayView2<f64>,
    w: &LossWeights,
    want_grad: bool,
) -> (f64, Option<Array2<f64>>) {
    let n = g.nrows() as f64;
    let u_hat = g.dot(&uf.t());
    let y_hat = g.dot(&yf.t());
    let ey = &y_hat - &b.y_ref;
    let eu = &u_hat - &b.u_ref;
    let q = w.q.view().insert_axis(Axis(0));
    let r = w.r.view().insert_axis(Axis(0));
    let mut total = (&ey * &ey * q).sum();
    if variant == Variant::I {
        total += (&eu * &eu * r).sum();
    }
    for i in 0..g.nrows() {
        total += soft_penalty(u_hat.row(i), y_hat.row(i), w);
    }
    let grad = want_grad.then(|| {
        let mut gy = &ey * &q * 2.0;
        let mut gu = if variant == Variant::I {
            &eu * &r * 2.0
        } else {
            Array2::zeros(eu.dim())
        };
        Zip::indexed(&mut gu).and(&u_hat).for_each(|(_, j), d, &v| {
            *d += penalty_grad(v, w.u_lb[j], w.u_ub[j], w.p_u[j]);
        });
        Zip::indexed(&mut gy).and(&y_hat).for_each(|(_, j), d, &v| {
            *d += penalty_grad(v, w.y_lb[j], w.y_ub[j], w.p_y[j]);
        });
        (gu.dot(&uf) + gy.dot(&yf)) / n
    });
    (total / n, grad)
}

pub fn batch_loss(net: &OperatorNetwork, b: &BatchMatrices, h: &HankelSet, w: &LossWeights) -> Result<f64> {
    check_shapes(net, b, h, w)?;
    let g = net.forward_batch(b.x.view())?;
    Ok(objective_of(net.variant, g.view(), b, h.u_f(), h.y_f(), w, false).0)
}

pub fn batch_grad(
    net: &OperatorNetwork,
    b: &BatchMatrices,
    h: &HankelSet,
    w: &LossWeights,
) -> Result<(f64, Gradients)> {
    check_shapes(net, b, h, w)?;
    let acts = net.forward_cached(b.x.view())?;
    let g = acts.last().expect("output");
    let (l, dg) = objective_of(net.variant, g.view(), b, h.u_f(), h.y_f(), w, true);
    Ok((l, net.backward(b.x.view(), &acts, dg.expect("requested"))))
}

/// Mean training objective over `batch`.
pub fn loss(net: &OperatorNetwork, batch: &[TrainingSample], h: &HankelSet, w: &LossWeights) -> Result<f64> {
    batch_loss(net, &BatchMatrices::from_samples(net.variant, batch)?, h, w)
}

/// Exact gradient of [`loss`] w.r.t. all weights and biases.
pub fn grad(
    net: &OperatorNetwork,
    batch: &[TrainingSample],
    h: &HankelSet,
    w: &LossWeights,
) -> Result<Gradients> {
    Ok(batch_grad(net, &BatchMatrices::from_samples(net.variant, batch)?, h, w)?.1)
}
