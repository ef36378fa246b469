//! End-to-end gene-network run: open loop, DeePC and a freshly trained
//! operator network with and without the guard.
//! `cargo run --release --example grn_pipeline -- [epochs] [variant]`

use std::time::Instant;

use deepc_core::experiment::{GrnExperiment, GrnOptions};
use deepc_core::operator_net::{train, LossWeights, OperatorNetwork, TrainConfig, Variant};
use deepc_core::runtime::{
    rmse, run_closed_loop, steady_state_errors, Controller, DeepcController, NetController, OpenLoopController,
    RunOptions,
};

fn main() -> deepc_core::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let variant = match args.next().as_deref() {
        Some("II") => Variant::II,
        _ => Variant::I,
    };
    let exp = GrnExperiment::new(GrnOptions::default())?;
    let samples = exp.training_data(exp.opts.seed)?;
    let unit = exp.metric_scaler();
    let opts = RunOptions {
        steps: exp.schedule.total_steps(),
        seed: 0,
        fingerprint: exp.hankel.dims().fingerprint(),
    };
    let report = |c: &mut dyn Controller| -> deepc_core::Result<()> {
        let rec = run_closed_loop(&exp.plant, &exp.x0, c, &exp.schedule, &opts)?;
        println!(
            "{:>14}: rmse {:.5}  mean step {:.3e} s  failures {}  events {:.3}",
            c.kind().name(),
            rmse(&rec, &unit)?,
            rec.mean_step_s(),
            rec.failures(),
            rec.event_rate()
        );
        for e in steady_state_errors(&rec, &exp.schedule, &unit, 20) {
            println!("    segment {} relative error {:.4?}", e.segment, e.relative());
        }
        Ok(())
    };
    report(&mut OpenLoopController {
        t_ini: exp.cfg.t_ini,
        n_p: exp.cfg.n_p,
    })?;
    report(&mut DeepcController {
        hankel: &exp.hankel,
        cfg: &exp.cfg,
    })?;

    let w = LossWeights::from_config(&exp.cfg)?;
    let tc = TrainConfig {
        epochs,
        ..TrainConfig::default()
    };
    let mut net = OperatorNetwork::for_dims(variant, exp.hankel.dims(), &tc.hidden, tc.seed)?;
    let t0 = Instant::now();
    let log = train(&mut net, &samples, &[], &exp.hankel, &w, &tc)?;
    println!(
        "trained {epochs} epochs in {:.1} s, loss {:.4e} -> {:.4e}",
        t0.elapsed().as_secs_f64(),
        log.first().map(|l| l.train_loss).unwrap_or(0.0),
        log.last().map(|l| l.train_loss).unwrap_or(0.0)
    );
    report(&mut NetController::new(&net, &exp.hankel, &exp.cfg, false)?)?;
    report(&mut NetController::new(&net, &exp.hankel, &exp.cfg, true)?)?;
    Ok(())
}
