//! Simulated plants: the three-gene regulatory network, a generic LTI system,
//! and closure-backed plants for externally supplied models.

use std::io::Read;

use log::debug;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::error::{DeepcError, Result};
use crate::hankel::Trajectory;
use crate::linalg;

/// Discrete-time plant `x+ = f(x, u) + noise`, `y = h(x, u)`.
pub trait Plant {
    fn n_x(&self) -> usize;
    fn n_u(&self) -> usize;
    fn n_y(&self) -> usize;

    /// One step; `noise` is added to the state update.
    fn step(&self, x: &[f64], u: &[f64], noise: &[f64]) -> Result<Vec<f64>>;

    /// Measured output at state `x` while input `u` is applied.
    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64>;

    /// Half-width of the uniform process noise (0 for deterministic plants).
    fn noise_half_width(&self) -> f64 {
        0.0
    }

    /// True when the output depends on the current input. Closed-loop runs
    /// measure before choosing the input, so they require `false`.
    fn has_feedthrough(&self) -> bool {
        false
    }
}

impl<P: Plant + ?Sized> Plant for Box<P> {
    fn n_x(&self) -> usize {
        (**self).n_x()
    }
    fn n_u(&self) -> usize {
        (**self).n_u()
    }
    fn n_y(&self) -> usize {
        (**self).n_y()
    }
    fn step(&self, x: &[f64], u: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        (**self).step(x, u, noise)
    }
    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (**self).output(x, u)
    }
    fn noise_half_width(&self) -> f64 {
        (**self).noise_half_width()
    }
    fn has_feedthrough(&self) -> bool {
        (**self).has_feedthrough()
    }
}

/// Wraps a plant so that its measured outputs are min-max scaled.
#[derive(Debug, Clone)]
pub struct ScaledOutput<P> {
    pub inner: P,
    pub scaler: Scaler,
}

impl<P: Plant> ScaledOutput<P> {
    pub fn new(inner: P, scaler: Scaler) -> Result<Self> {
        if scaler.channels() != inner.n_y() {
            return Err(DeepcError::dim("scaler channels differ from plant outputs"));
        }
        Ok(Self { inner, scaler })
    }
}

impl<P: Plant> Plant for ScaledOutput<P> {
    fn n_x(&self) -> usize {
        self.inner.n_x()
    }
    fn n_u(&self) -> usize {
        self.inner.n_u()
    }
    fn n_y(&self) -> usize {
        self.inner.n_y()
    }
    fn step(&self, x: &[f64], u: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        self.inner.step(x, u, noise)
    }
    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        self.scaler.apply(&self.inner.output(x, u))
    }
    fn noise_half_width(&self) -> f64 {
        self.inner.noise_half_width()
    }
    fn has_feedthrough(&self) -> bool {
        self.inner.has_feedthrough()
    }
}

/// Draws one noise vector from U(-delta, delta)^n.
pub fn sample_noise<R: Rng + ?Sized>(rng: &mut R, n: usize, delta: f64) -> Vec<f64> {
    if delta > 0.0 {
        (0..n).map(|_| rng.random_range(-delta..=delta)).collect()
    } else {
        vec![0.0; n]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrnParams {
    /// Dissociation constants.
    pub k: [f64; 3],
    /// Maximum promoter strengths.
    pub a: [f64; 3],
    /// mRNA degradation rates (1/min).
    pub gamma: [f64; 3],
    /// Protein production rates (1/min).
    pub beta: [f64; 3],
    /// Protein degradation rates (1/min).
    pub c: [f64; 3],
    /// Uniform noise half-width.
    pub delta: f64,
    /// Sampling period (min).
    pub dt: f64,
}

impl Default for GrnParams {
    fn default() -> Self {
        Self {
            k: [1.0; 3],
            a: [1.6; 3],
            gamma: [0.16; 3],
            beta: [0.16; 3],
            c: [0.06; 3],
            delta: 0.0,
            dt: 1.0,
        }
    }
}

impl GrnParams {
    pub fn validate(&self) -> Result<()> {
        let positive = self
            .k
            .iter()
            .chain(&self.a)
            .chain(&self.gamma)
            .chain(&self.beta)
            .chain(&self.c)
            .all(|v| *v > 0.0 && v.is_finite());
        if !positive {
            return Err(DeepcError::Config(
                "GRN rate constants must be finite and positive".into(),
            ));
        }
        if !(self.delta >= 0.0) || !(self.dt > 0.0) {
            return Err(DeepcError::Config(format!(
                "GRN needs delta >= 0 and dt > 0, got delta = {}, dt = {}",
                self.delta, self.dt
            )));
        }
        Ok(())
    }
}

/// mRNA i is repressed by protein `REPRESSOR[i]` (0-based state indices).
const REPRESSOR: [usize; 3] = [5, 3, 4];

/// One explicit step of the repressilator-type network without clamping.
/// States 0..3 are mRNA, 3..6 proteins; protein `3 + i` is translated from mRNA `i`.
pub fn grn_step(x: &[f64; 6], u: &[f64; 3], p: &GrnParams, noise: &[f64; 6]) -> Result<[f64; 6]> {
    if x.iter().chain(u).chain(noise).any(|v| !v.is_finite()) {
        return Err(DeepcError::Numeric(format!(
            "non-finite GRN state or input: x = {x:?}, u = {u:?}"
        )));
    }
    let mut next = [0.0; 6];
    for i in 0..3 {
        let rep = x[REPRESSOR[i]];
        let drift = -p.gamma[i] * x[i] + p.a[i] / (p.k[i] + rep * rep) + u[i];
        next[i] = x[i] + drift * p.dt + noise[i];
    }
    for i in 0..3 {
        let drift = -p.c[i] * x[3 + i] + p.beta[i] * x[i];
        next[3 + i] = x[3 + i] + drift * p.dt + noise[3 + i];
    }
    Ok(next)
}

/// Protein concentrations.
pub fn grn_output(x: &[f64; 6]) -> [f64; 3] {
    [x[3], x[4], x[5]]
}

#[derive(Debug, Clone, Default)]
pub struct GrnPlant {
    pub params: GrnParams,
}

impl GrnPlant {
    pub fn new(params: GrnParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

fn fixed<const N: usize>(v: &[f64], what: &str) -> Result<[f64; N]> {
    v.try_into().map_err(|_| {
        DeepcError::dim(format!("{what}: expected length {N}, got {}", v.len()))
    })
}

impl Plant for GrnPlant {
    fn n_x(&self) -> usize {
        6
    }
    fn n_u(&self) -> usize {
        3
    }
    fn n_y(&self) -> usize {
        3
    }

    fn step(&self, x: &[f64], u: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let mut next = grn_step(
            &fixed(x, "GRN state")?,
            &fixed(u, "GRN input")?,
            &self.params,
            &fixed(noise, "GRN noise")?,
        )?;
        for (i, v) in next.iter_mut().enumerate() {
            if *v < 0.0 {
                debug!("GRN state {i} clamped from {v:e} to 0");
                *v = 0.0;
            }
        }
        Ok(next.to_vec())
    }

    fn output(&self, x: &[f64], _u: &[f64]) -> Vec<f64> {
        vec![x[3], x[4], x[5]]
    }

    fn noise_half_width(&self) -> f64 {
        self.params.delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiPlant {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub c: Array2<f64>,
    pub d: Array2<f64>,
    #[serde(default)]
    pub delta: f64,
}

impl LtiPlant {
    pub fn new(a: Array2<f64>, b: Array2<f64>, c: Array2<f64>, d: Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n || c.ncols() != n || d.nrows() != c.nrows() || d.ncols() != b.ncols()
        {
            return Err(DeepcError::dim(format!(
                "inconsistent LTI shapes: A {:?}, B {:?}, C {:?}, D {:?}",
                a.dim(),
                b.dim(),
                c.dim(),
                d.dim()
            )));
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            delta: 0.0,
        })
    }

    /// `[B, AB, ..., A^{n-1}B]`.
    pub fn controllability_matrix(&self) -> Array2<f64> {
        let n = self.a.nrows();
        let m = self.b.ncols();
        let mut out = Array2::zeros((n, n * m));
        let mut blk = self.b.clone();
        for k in 0..n {
            out.slice_mut(ndarray::s![.., k * m..(k + 1) * m]).assign(&blk);
            blk = self.a.dot(&blk);
        }
        out
    }

    pub fn is_controllable(&self) -> bool {
        linalg::rank(self.controllability_matrix().view(), 1e-10) == self.a.nrows()
    }

    /// Noise-free rollout from `x0` under the input sequence `u`.
    pub fn simulate(&self, x0: &[f64], u: &Trajectory) -> Result<(Trajectory, Vec<f64>)> {
        let mut x = Array1::from(x0.to_vec());
        let mut ys = Vec::with_capacity(u.len());
        for t in 0..u.len() {
            let ut = u.sample(t);
            ys.push((self.c.dot(&x) + self.d.dot(&ut)).to_vec());
            x = self.a.dot(&x) + self.b.dot(&ut);
        }
        Ok((Trajectory::from_samples(&ys)?, x.to_vec()))
    }
}

impl Plant for LtiPlant {
    fn n_x(&self) -> usize {
        self.a.nrows()
    }
    fn n_u(&self) -> usize {
        self.b.ncols()
    }
    fn n_y(&self) -> usize {
        self.c.nrows()
    }

    fn step(&self, x: &[f64], u: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_x() || u.len() != self.n_u() || noise.len() != self.n_x() {
            return Err(DeepcError::dim(format!(
                "LTI step: state {} / input {} / noise {} vs n_x = {}, n_u = {}",
                x.len(),
                u.len(),
                noise.len(),
                self.n_x(),
                self.n_u()
            )));
        }
        let xv = ndarray::ArrayView1::from(x);
        let uv = ndarray::ArrayView1::from(u);
        let next = self.a.dot(&xv) + self.b.dot(&uv) + ndarray::ArrayView1::from(noise);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(DeepcError::Numeric("LTI state diverged".into()));
        }
        Ok(next.to_vec())
    }

    fn output(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.c.dot(&ndarray::ArrayView1::from(x)) + self.d.dot(&ndarray::ArrayView1::from(u)))
            .to_vec()
    }

    fn noise_half_width(&self) -> f64 {
        self.delta
    }

    fn has_feedthrough(&self) -> bool {
        self.d.iter().any(|v| *v != 0.0)
    }
}

type StepFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;
type OutputFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// A plant supplied as user-registered step and output functions.
pub struct FnPlant {
    n_x: usize,
    n_u: usize,
    n_y: usize,
    delta: f64,
    step_fn: Box<StepFn>,
    output_fn: Box<OutputFn>,
}

impl FnPlant {
    pub fn new(
        n_x: usize,
        n_u: usize,
        n_y: usize,
        step_fn: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
        output_fn: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            n_x,
            n_u,
            n_y,
            delta: 0.0,
            step_fn: Box::new(step_fn),
            output_fn: Box::new(output_fn),
        }
    }

    pub fn with_noise(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }
}

impl Plant for FnPlant {
    fn n_x(&self) -> usize {
        self.n_x
    }
    fn n_u(&self) -> usize {
        self.n_u
    }
    fn n_y(&self) -> usize {
        self.n_y
    }

    fn step(&self, x: &[f64], u: &[f64], noise: &[f64]) -> Result<Vec<f64>> {
        let mut next = (self.step_fn)(x, u);
        if next.len() != self.n_x {
            return Err(DeepcError::dim(format!(
                "registered step returned {} states, expected {}",
                next.len(),
                self.n_x
            )));
        }
        for (v, w) in next.iter_mut().zip(noise) {
            *v += w;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(DeepcError::Numeric("registered plant produced non-finite state".into()));
        }
        Ok(next)
    }

    fn output(&self, x: &[f64], _u: &[f64]) -> Vec<f64> {
        (self.output_fn)(x)
    }

    fn noise_half_width(&self) -> f64 {
        self.delta
    }
}

fn step_residual<P: Plant + ?Sized>(plant: &P, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let zeros = vec![0.0; plant.n_x()];
    let next = plant.step(x, u, &zeros)?;
    Ok(next.iter().zip(x).map(|(a, b)| a - b).collect())
}

fn inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Fixed point of the noise-free step map under a constant input, by damped
/// Newton iteration on `step(x) - x` with a finite-difference Jacobian.
pub fn find_steady_state<P: Plant + ?Sized>(
    plant: &P,
    u_ss: &[f64],
    x_guess: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    const MAX_ITER: usize = 200;
    let n = plant.n_x();
    if x_guess.len() != n || u_ss.len() != plant.n_u() {
        return Err(DeepcError::dim(format!(
            "steady state: guess has {} states (n_x = {n}), input has {} (n_u = {})",
            x_guess.len(),
            u_ss.len(),
            plant.n_u()
        )));
    }
    let mut x = x_guess.to_vec();
    let mut r = step_residual(plant, &x, u_ss)?;
    let mut res = inf(&r);
    for _ in 0..MAX_ITER {
        if res < tol {
            return Ok(x);
        }
        let mut jac = Array2::zeros((n, n));
        for j in 0..n {
            let h = 1e-7 * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let rp = step_residual(plant, &xp, u_ss)?;
            for i in 0..n {
                jac[[i, j]] = (rp[i] - r[i]) / h;
            }
        }
        let rhs = Array1::from_iter(r.iter().map(|v| -v));
        let dx = match linalg::solve_square(jac.view(), rhs.view()) {
            Ok(d) => d.to_vec(),
            // Singular Jacobian: fall back to a plain fixed-point step.
            Err(_) => r.clone(),
        };
        let mut alpha = 1.0;
        loop {
            let cand: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            if let Ok(rc) = step_residual(plant, &cand, u_ss) {
                let rc_norm = inf(&rc);
                if rc_norm < res || alpha < 1e-4 {
                    x = cand;
                    r = rc;
                    res = rc_norm;
                    break;
                }
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return Err(DeepcError::Convergence {
                    iterations: MAX_ITER,
                    residual: res,
                });
            }
        }
    }
    if res < tol {
        Ok(x)
    } else {
        Err(DeepcError::Convergence {
            iterations: MAX_ITER,
            residual: res,
        })
    }
}

/// Per-channel interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxBounds {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl BoxBounds {
    pub fn new(lb: Vec<f64>, ub: Vec<f64>) -> Result<Self> {
        let b = Self { lb, ub };
        b.validate()?;
        Ok(b)
    }

    pub fn uniform(n: usize, lb: f64, ub: f64) -> Self {
        Self {
            lb: vec![lb; n],
            ub: vec![ub; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lb.len() != self.ub.len() {
            return Err(DeepcError::Config(format!(
                "box has {} lower and {} upper bounds",
                self.lb.len(),
                self.ub.len()
            )));
        }
        if let Some(i) = (0..self.lb.len()).find(|&i| !(self.lb[i] <= self.ub[i])) {
            return Err(DeepcError::Config(format!(
                "box channel {i}: lower bound {} exceeds upper bound {}",
                self.lb[i], self.ub[i]
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.lb.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lb.is_empty()
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        v.iter()
            .zip(self.lb.iter().zip(&self.ub))
            .all(|(x, (l, u))| *x >= l - tol && *x <= u + tol)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.lb
            .iter()
            .zip(&self.ub)
            .map(|(l, u)| if l < u { rng.random_range(*l..*u) } else { *l })
            .collect()
    }
}

/// Open-loop experiment with piecewise-constant random inputs held for
/// `hold` steps. Returns `(u, y)` with `y_t` measured at `x_t` under `u_t`.
pub fn generate_open_loop<P: Plant + ?Sized>(
    plant: &P,
    x0: &[f64],
    steps: usize,
    hold: usize,
    input_box: &BoxBounds,
    seed: u64,
) -> Result<(Trajectory, Trajectory)> {
    input_box.validate()?;
    if hold == 0 {
        return Err(DeepcError::Config("input hold must be at least 1 step".into()));
    }
    if steps == 0 {
        return Err(DeepcError::Config("open-loop run needs at least 1 step".into()));
    }
    if input_box.len() != plant.n_u() || x0.len() != plant.n_x() {
        return Err(DeepcError::dim(format!(
            "open loop: box has {} channels (n_u = {}), x0 has {} (n_x = {})",
            input_box.len(),
            plant.n_u(),
            x0.len(),
            plant.n_x()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta = plant.noise_half_width();
    let mut x = x0.to_vec();
    let mut us = Vec::with_capacity(steps);
    let mut ys = Vec::with_capacity(steps);
    let mut level = input_box.sample(&mut rng);
    for t in 0..steps {
        if t > 0 && t % hold == 0 {
            level = input_box.sample(&mut rng);
        }
        ys.push(plant.output(&x, &level));
        let noise = sample_noise(&mut rng, plant.n_x(), delta);
        x = plant.step(&x, &level, &noise)?;
        us.push(level.clone());
    }
    Ok((Trajectory::from_samples(&us)?, Trajectory::from_samples(&ys)?))
}

/// Plant description file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlantConfig {
    Grn {
        #[serde(default)]
        params: GrnParams,
        input_box: BoxBounds,
        output_box: BoxBounds,
        #[serde(default)]
        noise: f64,
        /// Initial state; defaults to the steady state of `x0_input`.
        #[serde(default)]
        x0: Option<Vec<f64>>,
        #[serde(default)]
        x0_input: Option<Vec<f64>>,
    },
    Lti {
        params: LtiPlant,
        input_box: BoxBounds,
        output_box: BoxBounds,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        x0: Option<Vec<f64>>,
    },
    /// Pre-recorded data only; no simulator.
    External {
        n_u: usize,
        n_y: usize,
        input_box: BoxBounds,
        output_box: BoxBounds,
    },
}

impl PlantConfig {
    pub fn load<R: Read>(r: R) -> Result<Self> {
        let cfg: PlantConfig = serde_json::from_reader(r)?;
        cfg.input_box().validate()?;
        cfg.output_box().validate()?;
        Ok(cfg)
    }

    pub fn input_box(&self) -> &BoxBounds {
        match self {
            PlantConfig::Grn { input_box, .. }
            | PlantConfig::Lti { input_box, .. }
            | PlantConfig::External { input_box, .. } => input_box,
        }
    }

    pub fn output_box(&self) -> &BoxBounds {
        match self {
            PlantConfig::Grn { output_box, .. }
            | PlantConfig::Lti { output_box, .. }
            | PlantConfig::External { output_box, .. } => output_box,
        }
    }

    /// Instantiates the simulator and its initial state.
    pub fn build(&self) -> Result<(Box<dyn Plant + Send + Sync>, Vec<f64>)> {
        match self {
            PlantConfig::Grn {
                params,
                noise,
                x0,
                x0_input,
                ..
            } => {
                let mut p = params.clone();
                if *noise > 0.0 {
                    p.delta = *noise;
                }
                let plant = GrnPlant::new(p)?;
                let x0 = match (x0, x0_input) {
                    (Some(x), _) => x.clone(),
                    (None, u) => {
                        let u = u.clone().unwrap_or_else(|| GRN_INITIAL_INPUT.to_vec());
                        grn_steady_state(&plant.params, &u)?
                    }
                };
                Ok((Box::new(plant), x0))
            }
            PlantConfig::Lti {
                params, noise, x0, ..
            } => {
                let mut p = params.clone();
                p.delta = *noise;
                let n = p.a.nrows();
                let x0 = x0.clone().unwrap_or_else(|| vec![0.0; n]);
                Ok((Box::new(p), x0))
            }
            PlantConfig::External { .. } => Err(DeepcError::Config(
                "external plants have no built-in simulator; supply recorded trajectories".into(),
            )),
        }
    }
}

/// Steady inputs of the four GRN set-points (tabulated in the source study).
pub const GRN_SETPOINT_INPUTS: [[f64; 3]; 4] = [
    [0.7189, 0.5536, 0.3725],
    [0.5070, 0.4620, 0.4989],
    [0.5332, 0.2266, 0.4233],
    [0.1998, 0.2632, 0.5783],
];

/// Input whose steady state is used as the GRN initial state; it places the
/// start above the first set-point on every channel.
pub const GRN_INITIAL_INPUT: [f64; 3] = [0.94, 0.79, 0.65];

/// Noise-free GRN fixed point for a constant input, solved to 1e-11.
pub fn grn_steady_state(params: &GrnParams, u: &[f64]) -> Result<Vec<f64>> {
    let mut p = params.clone();
    p.delta = 0.0;
    let plant = GrnPlant::new(p)?;
    // Unrepressed guess: mRNA = u / gamma, protein = beta / c * mRNA.
    let mut guess = vec![0.0; 6];
    for i in 0..3 {
        guess[i] = (u[i] + 0.01) / params.gamma[i];
        guess[3 + i] = params.beta[i] / params.c[i] * guess[i];
    }
    find_steady_state(&plant, u, &guess, 1e-11)
}

/// Uniform multiplicative perturbation of each state within `+-frac`.
pub fn perturb_state(x: &[f64], frac: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    x.iter()
        .map(|v| v * (1.0 + rng.random_range(-frac..=frac)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn grn_fixed_point_unchanged() {
        let p = GrnParams::default();
        let u = GRN_SETPOINT_INPUTS[0];
        let xs = grn_steady_state(&p, &u).unwrap();
        let x: [f64; 6] = xs.clone().try_into().unwrap();
        let next = grn_step(&x, &u, &p, &[0.0; 6]).unwrap();
        for i in 0..6 {
            assert!((next[i] - x[i]).abs() < 1e-12, "{i}: {} vs {}", next[i], x[i]);
        }
        for i in 0..3 {
            assert!((x[3 + i] - p.beta[i] * x[i] / p.c[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn protein_equilibrium_relation() {
        // beta / c * mRNA for the first tabulated set-point.
        let p = GrnParams::default();
        let x4 = p.beta[0] * 22.47 / p.c[0];
        assert!((x4 - 59.92).abs() < 0.01);
        assert!((x4 - 59.93).abs() < 0.02);
    }

    #[test]
    fn step_from_origin() {
        let p = GrnParams::default();
        let next = grn_step(&[0.0; 6], &[1.0; 3], &p, &[0.0; 6]).unwrap();
        for i in 0..3 {
            assert!((next[i] - 2.6).abs() < 1e-15);
            assert_eq!(next[3 + i], 0.0);
        }
    }

    #[test]
    fn non_finite_rejected() {
        let p = GrnParams::default();
        let mut x = [0.0; 6];
        x[2] = f64::NAN;
        assert!(matches!(
            grn_step(&x, &[0.0; 3], &p, &[0.0; 6]),
            Err(DeepcError::Numeric(_))
        ));
    }

    #[test]
    fn output_projection() {
        let x0 = [29.36, 24.60, 20.30, 78.29, 65.61, 54.12];
        assert_eq!(grn_output(&x0), [78.29, 65.61, 54.12]);
        assert_eq!(grn_output(&[0.0; 6]), [0.0; 3]);
        let scaled: [f64; 6] = x0.map(|v| 2.5 * v);
        let y = grn_output(&scaled);
        for i in 0..3 {
            assert_eq!(y[i], 2.5 * grn_output(&x0)[i]);
        }
    }

    #[test]
    fn lti_steady_state_matches_closed_form() {
        let plant = LtiPlant::new(
            array![[0.5, 0.1], [0.0, 0.8]],
            array![[1.0], [0.5]],
            array![[1.0, 0.0]],
            array![[0.0]],
        )
        .unwrap();
        let x = find_steady_state(&plant, &[2.0], &[0.0, 0.0], 1e-12).unwrap();
        let i_minus_a = Array2::eye(2) - &plant.a;
        let rhs = plant.b.dot(&array![2.0]);
        let expect = linalg::solve_square(i_minus_a.view(), rhs.view()).unwrap();
        for i in 0..2 {
            assert!((x[i] - expect[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn steady_state_residual_reverified() {
        let p = GrnParams::default();
        let plant = GrnPlant::new(p.clone()).unwrap();
        for u in GRN_SETPOINT_INPUTS {
            let x = find_steady_state(&plant, &u, &[1.0; 6], 1e-9).unwrap();
            let next = plant.step(&x, &u, &[0.0; 6]).unwrap();
            assert!(inf(&next.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-9);
            for i in 0..3 {
                assert!((x[3 + i] - p.beta[i] * x[i] / p.c[i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn steady_state_reports_divergence() {
        // x+ = 2x + 1 has the repelling fixed point -1; Newton finds it, so
        // use a map with no fixed point at all instead.
        let plant = FnPlant::new(1, 1, 1, |x, _| vec![x[0] + 1.0], |x| x.to_vec());
        let err = find_steady_state(&plant, &[0.0], &[0.0], 1e-9).unwrap_err();
        assert!(matches!(err, DeepcError::Convergence { .. }), "{err}");
    }

    #[test]
    fn open_loop_hold_and_determinism() {
        let plant = GrnPlant::default();
        let bx = BoxBounds::uniform(3, 0.0, 1.0);
        let x0 = vec![1.0; 6];
        let (u, y) = generate_open_loop(&plant, &x0, 40, 40, &bx, 9).unwrap();
        assert_eq!(u.len(), 40);
        assert_eq!(y.len(), 40);
        for t in 1..40 {
            assert_eq!(u.sample(t), u.sample(0));
        }
        let (u2, y2) = generate_open_loop(&plant, &x0, 40, 40, &bx, 9).unwrap();
        assert_eq!(u, u2);
        assert_eq!(y, y2);
        let (u3, _) = generate_open_loop(&plant, &x0, 90, 30, &bx, 9).unwrap();
        assert_ne!(u3.sample(29), u3.sample(30));
        assert_eq!(u3.sample(30), u3.sample(59));
        for t in 0..90 {
            assert!(bx.contains(&u3.sample(t).to_vec(), 0.0));
        }
    }

    #[test]
    fn invalid_box_rejected() {
        let plant = GrnPlant::default();
        let bx = BoxBounds {
            lb: vec![0.0, 1.0, 0.0],
            ub: vec![1.0, 0.5, 1.0],
        };
        assert!(matches!(
            generate_open_loop(&plant, &[0.0; 6], 10, 2, &bx, 0),
            Err(DeepcError::Config(_))
        ));
    }

    #[test]
    fn noise_within_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let n = sample_noise(&mut rng, 6, 0.3);
            assert!(n.iter().all(|v| v.abs() <= 0.3));
        }
    }

    #[test]
    fn grn_deterministic_without_noise() {
        let plant = GrnPlant::default();
        let x = vec![3.0, 1.0, 2.0, 5.0, 4.0, 6.0];
        let a = plant.step(&x, &[0.3, 0.2, 0.1], &[0.0; 6]).unwrap();
        let b = plant.step(&x, &[0.3, 0.2, 0.1], &[0.0; 6]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn plant_config_parses() {
        let text = r#"{"kind":"grn","input_box":{"lb":[0,0,0],"ub":[1,1,1]},
                       "output_box":{"lb":[0,0,0],"ub":[40,40,40]}}"#;
        let cfg = PlantConfig::load(text.as_bytes()).unwrap();
        let (plant, x0) = cfg.build().unwrap();
        assert_eq!(plant.n_x(), 6);
        assert_eq!(x0.len(), 6);
    }
}
