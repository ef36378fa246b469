//! Closed-loop simulation of the controllers, run records, and metrics.

mod context;
mod controller;
mod schedule;

use std::io::Write;
use std::time::Instant;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use context::ControllerContext;
pub use controller::{
    ControlOutput, Controller, ControllerKind, DeepcController, NetController, OpenLoopController, StepStatus,
};
pub use schedule::{grn_schedule, Schedule, SetPoint};

use crate::dataset::Scaler;
use crate::error::{DeepcError, Result};
use crate::plants::{perturb_state, sample_noise, Plant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub k: usize,
    pub u: Vec<f64>,
    /// Output measured at `k`, before `u` is applied.
    pub y: Vec<f64>,
    pub y_ref: Vec<f64>,
    pub event: bool,
    /// Controller computation time in seconds.
    pub solve_s: f64,
    pub status: StepStatus,
    pub qp_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub controller: ControllerKind,
    pub seed: u64,
    pub fingerprint: String,
    pub t_ini: usize,
    /// Steps taken before the controller had a full initial window.
    pub warmup: Vec<StepRecord>,
    pub steps: Vec<StepRecord>,
    /// Output after the last applied input.
    pub y_final: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub controller: ControllerKind,
    pub seed: u64,
    pub fingerprint: String,
    pub controlled_steps: usize,
    pub rmse: Option<f64>,
    pub event_rate: f64,
    pub mean_step_s: f64,
    pub max_step_s: f64,
    pub failures: usize,
    pub soft_output_steps: usize,
}

impl RunRecord {
    pub fn event_rate(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().filter(|s| s.event).count() as f64 / self.steps.len() as f64
    }

    pub fn mean_step_s(&self) -> f64 {
        if self.steps.is_empty() {
            return 0.0;
        }
        self.steps.iter().map(|s| s.solve_s).sum::<f64>() / self.steps.len() as f64
    }

    pub fn failures(&self) -> usize {
        self.steps.iter().filter(|s| s.status == StepStatus::Failed).count()
    }

    pub fn summary(&self, scaler: Option<&Scaler>) -> RunSummary {
        RunSummary {
            controller: self.controller,
            seed: self.seed,
            fingerprint: self.fingerprint.clone(),
            controlled_steps: self.steps.len(),
            rmse: scaler.and_then(|s| rmse(self, s).ok()),
            event_rate: self.event_rate(),
            mean_step_s: self.mean_step_s(),
            max_step_s: self.steps.iter().map(|s| s.solve_s).fold(0.0, f64::max),
            failures: self.failures(),
            soft_output_steps: self
                .steps
                .iter()
                .filter(|s| s.status == StepStatus::SoftOutput)
                .count(),
        }
    }

    /// One row per step, warm-up included (`controlled = 0`).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let first = self
            .steps
            .first()
            .or(self.warmup.first())
            .ok_or_else(|| DeepcError::Format("empty run record".into()))?;
        let (nu, ny) = (first.u.len(), first.y.len());
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["k".to_string(), "controlled".to_string()];
        header.extend((1..=nu).map(|i| format!("u{i}")));
        header.extend((1..=ny).map(|i| format!("y{i}")));
        header.extend((1..=ny).map(|i| format!("yref{i}")));
        header.extend(["event", "solve_s", "status", "qp_iterations"].map(String::from));
        wtr.write_record(&header)?;
        for (controlled, s) in self
            .warmup
            .iter()
            .map(|s| (false, s))
            .chain(self.steps.iter().map(|s| (true, s)))
        {
            let mut row = vec![s.k.to_string(), (controlled as u8).to_string()];
            row.extend(s.u.iter().chain(&s.y).chain(&s.y_ref).map(|v| format!("{v:e}")));
            row.push((s.event as u8).to_string());
            row.push(format!("{:e}", s.solve_s));
            row.push(serde_json::to_value(s.status)?.as_str().unwrap_or("").to_string());
            row.push(s.qp_iterations.to_string());
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Root-mean-square scaled tracking error over the controlled steps.
pub fn rmse(record: &RunRecord, scaler: &Scaler) -> Result<f64> {
    if record.steps.is_empty() {
        return Err(DeepcError::dim("run has no controlled steps"));
    }
    let ny = record.steps[0].y.len();
    if scaler.channels() != ny {
        return Err(DeepcError::dim(format!(
            "scaler has {} channels, outputs have {ny}",
            scaler.channels()
        )));
    }
    let mut acc = 0.0;
    for s in &record.steps {
        let y = scaler.apply(&s.y);
        let r = scaler.apply(&s.y_ref);
        acc += y.iter().zip(&r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok((acc / (ny * record.steps.len()) as f64).sqrt())
}

/// Per-segment steady-state tracking error: the mean absolute scaled error
/// over the last `window` steps of each segment, per channel, together with
/// the scaled set-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentError {
    pub segment: usize,
    pub setpoint_scaled: Vec<f64>,
    pub mean_abs_error: Vec<f64>,
}

impl SegmentError {
    pub fn relative(&self) -> Vec<f64> {
        self.mean_abs_error
            .iter()
            .zip(&self.setpoint_scaled)
            .map(|(e, r)| e / r.abs().max(f64::MIN_POSITIVE))
            .collect()
    }
}

pub fn steady_state_errors(
    record: &RunRecord,
    schedule: &Schedule,
    scaler: &Scaler,
    window: usize,
) -> Vec<SegmentError> {
    let mut out = Vec::new();
    for seg in 0..schedule.setpoints.len() {
        let (start, end) = schedule.segment_range(seg);
        let lo = end.saturating_sub(window).max(start);
        let rows: Vec<&StepRecord> = record.steps.iter().filter(|s| s.k >= lo && s.k < end).collect();
        if rows.is_empty() {
            continue;
        }
        let r = scaler.apply(&schedule.setpoints[seg].y);
        let mut err = vec![0.0; r.len()];
        for s in &rows {
            for (e, (y, r)) in err.iter_mut().zip(scaler.apply(&s.y).iter().zip(&r)) {
                *e += (y - r).abs();
            }
        }
        err.iter_mut().for_each(|e| *e /= rows.len() as f64);
        out.push(SegmentError {
            segment: seg,
            setpoint_scaled: r,
            mean_abs_error: err,
        });
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub steps: usize,
    pub seed: u64,
    pub fingerprint: String,
}

/// Simulates `controller` on `plant` from `x0` for `opts.steps` absolute
/// steps. The first `T_ini` steps apply the warm-up input; afterwards the
/// controller's first predicted input is applied in receding horizon. A
/// failing controller holds the previous input.
pub fn run_closed_loop(
    plant: &dyn Plant,
    x0: &[f64],
    controller: &mut dyn Controller,
    schedule: &Schedule,
    opts: &RunOptions,
) -> Result<RunRecord> {
    if plant.has_feedthrough() {
        return Err(DeepcError::Config(
            "closed-loop runs need a strictly proper plant (no direct feedthrough)".into(),
        ));
    }
    let (nx, nu, ny) = (plant.n_x(), plant.n_u(), plant.n_y());
    if x0.len() != nx || schedule.n_y() != ny {
        return Err(DeepcError::dim(format!(
            "plant has {nx} states / {ny} outputs, got x0 of {} and references of {}",
            x0.len(),
            schedule.n_y()
        )));
    }
    let kind = controller.kind();
    if kind.needs_input_reference() && !schedule.has_inputs() {
        return Err(DeepcError::Config(format!("controller {kind} needs input references")));
    }
    let warm = schedule
        .warmup()
        .ok_or_else(|| DeepcError::Config("schedule has no warm-up input".into()))?
        .to_vec();
    if warm.len() != nu {
        return Err(DeepcError::dim(format!("warm-up input has {} entries, plant has {nu}", warm.len())));
    }
    let (t_ini, n_p) = (controller.t_ini(), controller.n_p());
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let delta = plant.noise_half_width();
    let mut ctx = ControllerContext::new(t_ini, nu, ny);
    let mut x = x0.to_vec();
    let mut rec = RunRecord {
        controller: kind,
        seed: opts.seed,
        fingerprint: opts.fingerprint.clone(),
        t_ini,
        warmup: Vec::new(),
        steps: Vec::new(),
        y_final: Vec::new(),
    };
    let mut y = plant.output(&x, &warm);
    let mut u_prev = warm.clone();
    for k in 0..opts.steps {
        let (u, event, solve_s, status, iters) = if k < t_ini {
            (warm.clone(), false, 0.0, StepStatus::Direct, 0)
        } else {
            ctx.k = k;
            ctx.e_u = match schedule.u_ref(k) {
                Some(r) => r.iter().zip(&u_prev).map(|(a, b)| a - b).collect(),
                None => vec![0.0; nu],
            };
            ctx.e_y = schedule.y_ref(k + 1).iter().zip(&y).map(|(a, b)| a - b).collect();
            let u_win = schedule.u_window(k, n_p).unwrap_or_else(|| vec![0.0; nu * n_p]);
            let y_win = schedule.y_window(k, n_p);
            let t0 = Instant::now();
            let out = controller.compute(&ctx, &u_win, &y_win);
            let dt = t0.elapsed().as_secs_f64();
            match out {
                Ok(o) if o.u_seq.len() >= nu && o.u_seq[..nu].iter().all(|v| v.is_finite()) => {
                    (o.u_seq[..nu].to_vec(), o.event, dt, o.status, o.qp_iterations)
                }
                Ok(_) => {
                    warn!("step {k}: {kind} returned an unusable input; holding the previous one");
                    (u_prev.clone(), false, dt, StepStatus::Failed, 0)
                }
                Err(e) => {
                    warn!("step {k}: {kind} failed ({e}); holding the previous input");
                    (u_prev.clone(), false, dt, StepStatus::Failed, 0)
                }
            }
        };
        let entry = StepRecord {
            k,
            u: u.clone(),
            y: y.clone(),
            y_ref: schedule.y_ref(k).to_vec(),
            event,
            solve_s,
            status,
            qp_iterations: iters,
        };
        if k < t_ini {
            rec.warmup.push(entry);
        } else {
            rec.steps.push(entry);
        }
        let noise = sample_noise(&mut rng, nx, delta);
        x = plant.step(&x, &u, &noise)?;
        ctx.push(&u, &y);
        y = plant.output(&x, &u);
        u_prev = u;
    }
    debug!(
        "{kind}: {} controlled steps, {} failures",
        rec.steps.len(),
        rec.failures()
    );
    rec.y_final = y;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub controller: ControllerKind,
    /// Mean per-step computation time of each trial, seconds.
    pub per_trial_s: Vec<f64>,
    pub mean_step_s: f64,
    pub event_rate: f64,
    /// `mean_step_s` relative to DeePC, when DeePC was timed.
    pub ratio_vs_deepc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingTable {
    pub trials: usize,
    pub steps: usize,
    pub perturbation: f64,
    pub rows: Vec<TimingRow>,
}

impl TimingTable {
    pub fn row(&self, kind: ControllerKind) -> Option<&TimingRow> {
        self.rows.iter().find(|r| r.controller == kind)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["controller", "mean_step_s", "event_rate", "ratio_vs_deepc"])?;
        for r in &self.rows {
            wtr.write_record(&[
                r.controller.name().to_string(),
                format!("{:e}", r.mean_step_s),
                format!("{}", r.event_rate),
                r.ratio_vs_deepc.map(|v| format!("{v:e}")).unwrap_or_default(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Repeats closed-loop runs from `x0` perturbed by up to `perturbation`
/// (relative, per state) and averages the per-step computation time. Trial
/// `i` uses seed `seed + i` for both the perturbation and the plant noise,
/// so every controller sees the same initial states.
#[allow(clippy::too_many_arguments)]
pub fn time_comparison<'a>(
    plant: &dyn Plant,
    x0: &[f64],
    kinds: &[ControllerKind],
    make: &mut dyn FnMut(ControllerKind) -> Result<Box<dyn Controller + 'a>>,
    schedule: &Schedule,
    trials: usize,
    steps: usize,
    perturbation: f64,
    seed: u64,
    fingerprint: &str,
) -> Result<TimingTable> {
    if trials == 0 {
        return Err(DeepcError::Config("need at least one trial".into()));
    }
    let mut rows = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let mut per_trial = Vec::with_capacity(trials);
        let mut events = 0.0;
        for i in 0..trials {
            let s = seed.wrapping_add(i as u64);
            let xi = perturb_state(x0, perturbation, s);
            let mut c = make(kind)?;
            let opts = RunOptions {
                steps,
                seed: s,
                fingerprint: fingerprint.to_string(),
            };
            let rec = run_closed_loop(plant, &xi, c.as_mut(), schedule, &opts)?;
            per_trial.push(rec.mean_step_s());
            events += rec.event_rate();
        }
        rows.push(TimingRow {
            controller: kind,
            mean_step_s: per_trial.iter().sum::<f64>() / trials as f64,
            per_trial_s: per_trial,
            event_rate: events / trials as f64,
            ratio_vs_deepc: None,
        });
    }
    let base = rows
        .iter()
        .find(|r| r.controller == ControllerKind::DeePC)
        .map(|r| r.mean_step_s);
    if let Some(b) = base.filter(|b| *b > 0.0) {
        for r in &mut rows {
            r.ratio_vs_deepc = Some(r.mean_step_s / b);
        }
    }
    Ok(TimingTable {
        trials,
        steps,
        perturbation,
        rows,
    })
}
