//! Ready-made gene-network setup: Hankel data, training data, scaler and the
//! four-set-point schedule, all derived from one seed.

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{extract_samples, fit_scaler_many, Scaler, TrainingSample};
use crate::deepc::DeePCConfig;
use crate::error::Result;
use crate::hankel::{is_persistently_exciting, partition, HankelSet, Trajectory};
use crate::plants::{
    generate_open_loop, grn_steady_state, BoxBounds, GrnParams, GrnPlant, Plant, ScaledOutput,
    GRN_INITIAL_INPUT,
};
use crate::runtime::{grn_schedule, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrnOptions {
    pub t: usize,
    pub t_ini: usize,
    pub n_p: usize,
    pub hold: usize,
    /// Independent open-loop episodes for the training set.
    pub episodes: usize,
    pub episode_len: usize,
    pub steps_per_setpoint: usize,
    pub output_ub: f64,
    pub seed: u64,
    /// Run the controllers on min-max-scaled outputs; `false` keeps plant units.
    #[serde(default = "scaled_default")]
    pub scaled_outputs: bool,
}

fn scaled_default() -> bool {
    true
}

impl Default for GrnOptions {
    fn default() -> Self {
        Self {
            t: 200,
            t_ini: 10,
            n_p: 10,
            hold: 30,
            episodes: 50,
            episode_len: 219,
            steps_per_setpoint: 100,
            output_ub: 40.0,
            seed: 7,
            scaled_outputs: true,
        }
    }
}

/// Everything downstream of the plant works in the units of `working`:
/// `plant` measures `working.apply(y)`, and the Hankel data, output box,
/// schedule and training samples are all mapped the same way. `working` is
/// the fitted `scaler` by default and the identity with raw outputs.
pub struct GrnExperiment {
    pub opts: GrnOptions,
    pub raw_plant: GrnPlant,
    pub plant: ScaledOutput<GrnPlant>,
    pub scaler: Scaler,
    pub working: Scaler,
    pub x0: Vec<f64>,
    pub input_box: BoxBounds,
    pub output_box: BoxBounds,
    pub cfg: DeePCConfig,
    pub hankel: HankelSet,
    pub schedule: Schedule,
}

impl GrnExperiment {
    pub fn new(opts: GrnOptions) -> Result<Self> {
        let params = GrnParams::default();
        let raw_plant = GrnPlant::new(params.clone())?;
        let input_box = BoxBounds::uniform(3, 0.0, 1.0);
        let x0 = grn_steady_state(&params, &GRN_INITIAL_INPUT)?;
        let steady = |u: &[f64]| grn_steady_state(&params, u);
        let (u, y) =
            run_from_random_steady_state(&raw_plant, &steady, &input_box, opts.t, opts.hold, opts.seed, opts.seed)?;
        let order = opts.t_ini + opts.n_p + 6;
        if !is_persistently_exciting(&u, order, 1e-10)? {
            warn!("Hankel input data is not persistently exciting of order {order}");
        }

        let mut ys = vec![y.clone()];
        ys.extend(raw_episodes(&raw_plant, &input_box, &opts, opts.seed)?.into_iter().map(|(_, y)| y));
        let scaler = fit_scaler_many(&ys)?;
        let working = if opts.scaled_outputs {
            scaler.clone()
        } else {
            Scaler::identity(3)
        };
        let hankel = partition(&u, &working.apply_trajectory(&y)?, opts.t_ini, opts.n_p)?;

        let raw_box = BoxBounds::uniform(3, 0.0, opts.output_ub);
        let output_box = BoxBounds::new(working.apply(&raw_box.lb), working.apply(&raw_box.ub))?;
        let mut cfg = DeePCConfig::grn_defaults(
            (input_box.lb.clone(), input_box.ub.clone()),
            (output_box.lb.clone(), output_box.ub.clone()),
        );
        cfg.t = opts.t;
        cfg.t_ini = opts.t_ini;
        cfg.n_p = opts.n_p;
        cfg.validate()?;
        let schedule = grn_schedule(&params, opts.steps_per_setpoint)?.scaled(&working)?;
        let plant = ScaledOutput::new(raw_plant.clone(), working.clone())?;
        Ok(Self {
            opts,
            raw_plant,
            plant,
            scaler,
            working,
            x0,
            input_box,
            output_box,
            cfg,
            hankel,
            schedule,
        })
    }

    /// Scaler that maps recorded outputs to the scaled units used by the
    /// RMSE and steady-state metrics.
    pub fn metric_scaler(&self) -> Scaler {
        if self.opts.scaled_outputs {
            Scaler::identity(3)
        } else {
            self.scaler.clone()
        }
    }

    /// Open-loop episodes from random steady states, seeds derived from
    /// `seed`, in working units.
    pub fn episodes(&self, seed: u64) -> Result<Vec<(Trajectory, Trajectory)>> {
        raw_episodes(&self.raw_plant, &self.input_box, &self.opts, seed)?
            .into_iter()
            .map(|(u, y)| Ok((u, self.working.apply_trajectory(&y)?)))
            .collect()
    }

    /// Training samples cut from [`Self::episodes`].
    pub fn training_data(&self, seed: u64) -> Result<Vec<TrainingSample>> {
        let eps = self.episodes(seed)?;
        let mut samples = Vec::new();
        for (u, y) in &eps {
            samples.extend(extract_samples(u, y, self.opts.t_ini, self.opts.n_p)?);
        }
        info!("{} training samples from {} episodes", samples.len(), eps.len());
        Ok(samples)
    }
}

fn raw_episodes(
    plant: &GrnPlant,
    input_box: &BoxBounds,
    opts: &GrnOptions,
    seed: u64,
) -> Result<Vec<(Trajectory, Trajectory)>> {
    let steady = |u: &[f64]| grn_steady_state(&plant.params, u);
    open_loop_episodes(plant, &steady, input_box, opts.episodes, opts.episode_len, opts.hold, seed)
}

/// Seed of episode `e` in a multi-episode data set.
pub fn episode_seed(seed: u64, e: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(e as u64 + 1)
}

/// Open-loop run from the steady state of a random input drawn with
/// `start_seed`; the excitation uses `input_seed`.
#[allow(clippy::too_many_arguments)]
pub fn run_from_random_steady_state<P: Plant + ?Sized>(
    plant: &P,
    steady: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    input_box: &BoxBounds,
    steps: usize,
    hold: usize,
    start_seed: u64,
    input_seed: u64,
) -> Result<(Trajectory, Trajectory)> {
    let mut rng = ChaCha8Rng::seed_from_u64(start_seed);
    let start = steady(&input_box.sample(&mut rng))?;
    generate_open_loop(plant, &start, steps, hold, input_box, input_seed)
}

/// `episodes` independent runs of [`run_from_random_steady_state`], seeded
/// by [`episode_seed`].
pub fn open_loop_episodes<P: Plant + ?Sized>(
    plant: &P,
    steady: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    input_box: &BoxBounds,
    episodes: usize,
    len: usize,
    hold: usize,
    seed: u64,
) -> Result<Vec<(Trajectory, Trajectory)>> {
    (0..episodes)
        .map(|e| {
            let s = episode_seed(seed, e);
            run_from_random_steady_state(plant, steady, input_box, len, hold, s, s ^ 0x5eed)
        })
        .collect()
}
