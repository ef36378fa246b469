//! `deepc-lab`: file-based front end for the DeePC / Deep DeePC pipeline.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use deepc_core::dataset::{extract_samples, fit_scaler_many, read_dataset, split, write_dataset, SampleDims, Scaler};
use deepc_core::deepc::DeePCConfig;
use deepc_core::experiment::{open_loop_episodes, run_from_random_steady_state};
use deepc_core::hankel::{excitation_order, is_persistently_exciting, partition, HankelSet, Trajectory};
use deepc_core::operator_net::{train, write_training_log, LossWeights, OperatorNetwork, Variant};
use deepc_core::plants::{find_steady_state, grn_steady_state, Plant, PlantConfig, ScaledOutput};
use deepc_core::runtime::{
    grn_schedule, rmse, run_closed_loop, time_comparison, Controller, ControllerKind, DeepcController,
    NetController, OpenLoopController, RunOptions, Schedule,
};
use deepc_core::DeepcError;

use config::{LabConfig, TrainOverrides};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] DeepcError),
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Parser)]
#[command(name = "deepc-lab", version, about = "Data-driven predictive control with a learned operator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Open-loop excitation data from a simulated plant.
    GenData(GenData),
    /// Min-max scaler fitted on one or more output trajectories.
    FitScaler(FitScaler),
    /// Partitioned Hankel matrices from one input/output record.
    BuildHankel(BuildHankel),
    /// Training samples cut from trajectories.
    MakeDataset(MakeDataset),
    /// Trains the operator network.
    Train(TrainCmd),
    /// Four-set-point gene-network reference schedule.
    GrnSchedule(GrnScheduleCmd),
    /// One closed-loop run.
    Run(RunCmd),
    /// Per-step timing over perturbed initial states.
    Bench(BenchCmd),
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    plant: PathBuf,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 30)]
    hold: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Independent episodes, each from a random steady state.
    #[arg(long, default_value_t = 1)]
    episodes: usize,
    /// Start episode 0 from the plant's configured initial state instead of a random steady state.
    #[arg(long)]
    from_x0: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitScaler {
    #[arg(long = "y", required = true)]
    y: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BuildHankel {
    #[arg(long)]
    u: PathBuf,
    #[arg(long)]
    y: PathBuf,
    /// Data length; defaults to the whole record.
    #[arg(long = "T")]
    t: Option<usize>,
    #[arg(long, default_value_t = 10)]
    tini: usize,
    #[arg(long = "np", default_value_t = 10)]
    n_p: usize,
    /// State dimension used for the excitation check (order L + n_x).
    #[arg(long)]
    nx: Option<usize>,
    /// Outputs are mapped through this scaler first.
    #[arg(long)]
    scaler: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MakeDataset {
    #[arg(long = "u", required = true)]
    u: Vec<PathBuf>,
    #[arg(long = "y", required = true)]
    y: Vec<PathBuf>,
    #[arg(long, default_value_t = 10)]
    tini: usize,
    #[arg(long = "np", default_value_t = 10)]
    n_p: usize,
    /// Outputs are mapped through this scaler before cutting samples.
    #[arg(long)]
    scaler: Option<PathBuf>,
    /// Where to write the scaler fitted on the given outputs (default `<out>.scaler.json`).
    #[arg(long)]
    scaler_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long, default_value = "I")]
    variant: Variant,
    #[arg(long)]
    hankel: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    cfg: Option<PathBuf>,
    /// Supplies box bounds the config leaves out.
    #[arg(long)]
    plant: Option<PathBuf>,
    #[arg(long)]
    scaler: Option<PathBuf>,
    #[command(flatten)]
    overrides: TrainOverrides,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GrnScheduleCmd {
    #[arg(long, default_value_t = 100)]
    steps_each: usize,
    /// GRN plant config whose parameters define the fixed points.
    #[arg(long)]
    plant: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    hankel: PathBuf,
    #[arg(long)]
    plant: PathBuf,
    #[arg(long)]
    schedule: PathBuf,
    #[arg(long)]
    cfg: Option<PathBuf>,
    /// Run in scaled output coordinates: the plant's measurements, the
    /// schedule and the output box are mapped through this scaler.
    #[arg(long)]
    scaler: Option<PathBuf>,
    /// Closed-loop steps including warm-up; defaults to the schedule length.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RunCmd {
    /// deepc | deep | guarded | open, or a full controller name.
    #[arg(long)]
    controller: String,
    #[arg(long, default_value = "I")]
    variant: Variant,
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchCmd {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    /// Comma-separated controller names.
    #[arg(long, value_delimiter = ',', default_value = "deepc,deep_deepc_I")]
    controllers: Vec<String>,
    /// Trained models; each is used for the controllers of its variant.
    #[arg(long = "model")]
    models: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    perturbation: f64,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match threads().and_then(|_| dispatch(Cli::parse().cmd)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

/// Worker cap from `DEEPC_LAB_THREADS`. Every subcommand currently runs on
/// one thread, which satisfies any valid cap.
fn threads() -> Result<usize> {
    match std::env::var("DEEPC_LAB_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => {
                info!("worker cap {n}; running single-threaded");
                Ok(n)
            }
            _ => Err(CliError::Usage(format!(
                "DEEPC_LAB_THREADS must be a positive integer, got `{v}`"
            ))),
        },
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::FitScaler(a) => fit_scaler_cmd(a),
        Cmd::BuildHankel(a) => build_hankel(a),
        Cmd::MakeDataset(a) => make_dataset(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::GrnSchedule(a) => grn_schedule_cmd(a),
        Cmd::Run(a) => run_cmd(a),
        Cmd::Bench(a) => bench_cmd(a),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

/// `run.csv` -> `run.<suffix>`.
fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, v)?;
    writeln!(w).and_then(|_| w.flush()).map_err(|source| CliError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn read_traj(path: &Path) -> Result<Trajectory> {
    Ok(Trajectory::read_csv(open(path)?)?.0)
}

fn write_traj(path: &Path, t: &Trajectory, prefix: char) -> Result<()> {
    t.write_csv(create(path)?, prefix)?;
    Ok(())
}

fn load_scaler(path: &Option<PathBuf>) -> Result<Option<Scaler>> {
    path.as_deref().map(|p| Ok(Scaler::load(open(p)?)?)).transpose()
}

fn load_hankel(path: &Path) -> Result<HankelSet> {
    Ok(HankelSet::load_json(open(path)?)?)
}

fn load_plant(path: &Path) -> Result<PlantConfig> {
    Ok(PlantConfig::load(open(path)?)?)
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn gen_data(a: GenData) -> Result<()> {
    let cfg = load_plant(&a.plant)?;
    let (plant, x0) = cfg.build()?;
    let input_box = cfg.input_box();
    let steady = |u: &[f64]| match &cfg {
        PlantConfig::Grn { params, .. } => grn_steady_state(params, u),
        _ => find_steady_state(plant.as_ref(), u, &x0, 1e-12),
    };
    let runs = if a.episodes == 1 {
        vec![if a.from_x0 {
            deepc_core::plants::generate_open_loop(plant.as_ref(), &x0, a.steps, a.hold, input_box, a.seed)?
        } else {
            run_from_random_steady_state(plant.as_ref(), &steady, input_box, a.steps, a.hold, a.seed, a.seed)?
        }]
    } else {
        open_loop_episodes(plant.as_ref(), &steady, input_box, a.episodes, a.steps, a.hold, a.seed)?
    };
    let mut files = Vec::new();
    let mut report = Vec::new();
    for (e, (u, y)) in runs.iter().enumerate() {
        let (up, yp) = if runs.len() == 1 {
            (a.out.join("u.csv"), a.out.join("y.csv"))
        } else {
            (a.out.join(format!("u_{e:03}.csv")), a.out.join(format!("y_{e:03}.csv")))
        };
        write_traj(&up, u, 'u')?;
        write_traj(&yp, y, 'y')?;
        report.push(json!({
            "u": path_str(&up),
            "y": path_str(&yp),
            "steps": u.len(),
            "excitation_order": excitation_order(u, deepc_core::hankel::DEFAULT_RANK_TOL),
        }));
        files.push((up, yp));
    }
    let meta = json!({
        "command": "gen-data",
        "plant": cfg,
        "steps": a.steps,
        "hold": a.hold,
        "seed": a.seed,
        "episodes": a.episodes,
        "from_x0": a.from_x0,
        "n_x": plant.n_x(),
        "records": report,
    });
    write_json(&a.out.join("pe.json"), &meta)?;
    println!("wrote {} record(s) to {}", files.len(), a.out.display());
    Ok(())
}

fn fit_scaler_cmd(a: FitScaler) -> Result<()> {
    let ys = a.y.iter().map(|p| read_traj(p)).collect::<Result<Vec<_>>>()?;
    let s = fit_scaler_many(&ys)?;
    s.save(create(&a.out)?)?;
    println!("scaler over {} trajectories written to {}", ys.len(), a.out.display());
    Ok(())
}

fn build_hankel(a: BuildHankel) -> Result<()> {
    let mut u = read_traj(&a.u)?;
    let mut y = read_traj(&a.y)?;
    if let Some(t) = a.t {
        if t > u.len() {
            return Err(CliError::Usage(format!("--T {t} exceeds the record length {}", u.len())));
        }
        u = u.slice(0, t)?;
        y = y.slice(0, t)?;
    }
    if let Some(s) = load_scaler(&a.scaler)? {
        y = s.apply_trajectory(&y)?;
    }
    let h = partition(&u, &y, a.tini, a.n_p)?;
    let order = a.tini + a.n_p + a.nx.unwrap_or(0);
    let pe = is_persistently_exciting(&u, order, deepc_core::hankel::DEFAULT_RANK_TOL)?;
    if !pe {
        warn!("input data is not persistently exciting of order {order}");
    }
    h.save_json(create(&a.out)?)?;
    write_json(
        &sidecar(&a.out, "meta.json"),
        &json!({
            "command": "build-hankel",
            "u": path_str(&a.u),
            "y": path_str(&a.y),
            "scaler": a.scaler.as_deref().map(path_str),
            "dims": h.dims(),
            "fingerprint": h.dims().fingerprint(),
            "pe_order_checked": order,
            "persistently_exciting": pe,
        }),
    )?;
    println!("{} (persistently exciting of order {order}: {pe})", h.dims().fingerprint());
    Ok(())
}

fn make_dataset(a: MakeDataset) -> Result<()> {
    if a.u.len() != a.y.len() {
        return Err(CliError::Usage(format!(
            "{} input files but {} output files",
            a.u.len(),
            a.y.len()
        )));
    }
    let scaler = load_scaler(&a.scaler)?;
    let mut samples = Vec::new();
    let mut raw_y = Vec::new();
    let mut dims = None;
    for (up, yp) in a.u.iter().zip(&a.y) {
        let u = read_traj(up)?;
        let y = read_traj(yp)?;
        let d = SampleDims {
            n_u: u.channels(),
            n_y: y.channels(),
            t_ini: a.tini,
            n_p: a.n_p,
        };
        if dims.is_some_and(|p| p != d) {
            return Err(DeepcError::Mismatch {
                left: path_str(up),
                right: path_str(&a.u[0]),
                detail: "channel counts differ".into(),
            }
            .into());
        }
        dims = Some(d);
        let ys = match &scaler {
            Some(s) => s.apply_trajectory(&y)?,
            None => y.clone(),
        };
        samples.extend(extract_samples(&u, &ys, a.tini, a.n_p)?);
        raw_y.push(y);
    }
    let dims = dims.expect("at least one file");
    write_dataset(create(&a.out)?, dims, &samples)?;
    let fitted = fit_scaler_many(&raw_y)?;
    let scaler_out = a.scaler_out.clone().unwrap_or_else(|| sidecar(&a.out, "scaler.json"));
    fitted.save(create(&scaler_out)?)?;
    write_json(
        &sidecar(&a.out, "meta.json"),
        &json!({
            "command": "make-dataset",
            "u": a.u.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
            "y": a.y.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
            "applied_scaler": a.scaler.as_deref().map(path_str),
            "dims": dims,
            "samples": samples.len(),
            "scaler_out": path_str(&scaler_out),
        }),
    )?;
    println!("{} samples written to {}", samples.len(), a.out.display());
    Ok(())
}

/// Output box of the plant file in the coordinates selected by `scaler`.
fn plant_boxes(plant: &PlantConfig, scaler: Option<&Scaler>) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let (ib, ob) = (plant.input_box(), plant.output_box());
    let (ylb, yub) = match scaler {
        Some(s) => (s.apply(&ob.lb), s.apply(&ob.ub)),
        None => (ob.lb.clone(), ob.ub.clone()),
    };
    (ib.lb.clone(), ib.ub.clone(), ylb, yub)
}

fn effective_deepc(
    lab: &LabConfig,
    h: &HankelSet,
    plant: Option<&PlantConfig>,
    scaler: Option<&Scaler>,
) -> Result<DeePCConfig> {
    let boxes = plant.map(|p| plant_boxes(p, scaler));
    Ok(lab.deepc.resolve(h.dims(), boxes)?)
}

fn train_cmd(a: TrainCmd) -> Result<()> {
    let mut lab = LabConfig::load(a.cfg.as_deref())?;
    a.overrides.apply(&mut lab);
    let h = load_hankel(&a.hankel)?;
    let plant = a.plant.as_deref().map(load_plant).transpose()?;
    let scaler = load_scaler(&a.scaler)?;
    let cfg = effective_deepc(&lab, &h, plant.as_ref(), scaler.as_ref())?;
    let (sd, samples) = read_dataset(open(&a.data)?)?;
    let d = h.dims();
    if (sd.n_u, sd.n_y, sd.t_ini, sd.n_p) != (d.n_u, d.n_y, d.t_ini, d.n_p) {
        return Err(DeepcError::Mismatch {
            left: "dataset".into(),
            right: "hankel".into(),
            detail: format!("dataset {sd:?}, hankel {}", d.fingerprint()),
        }
        .into());
    }
    if samples.is_empty() {
        return Err(CliError::Usage("dataset holds no samples".into()));
    }
    let (train_set, val_set) = split(samples, lab.val_frac, lab.train.seed);
    let w = LossWeights::from_config(&cfg)?;
    let tc = &lab.train;
    let mut net = OperatorNetwork::for_dims(a.variant, d, &tc.hidden, tc.seed)?;
    let log = train(&mut net, &train_set, &val_set, &h, &w, tc)?;
    net.save(create(&a.out)?)?;
    write_training_log(create(&sidecar(&a.out, "log.csv"))?, &log)?;
    let last = log.last();
    write_json(
        &sidecar(&a.out, "meta.json"),
        &json!({
            "command": "train",
            "variant": a.variant,
            "hankel": path_str(&a.hankel),
            "data": path_str(&a.data),
            "fingerprint": d.fingerprint(),
            "train_samples": train_set.len(),
            "val_samples": val_set.len(),
            "config": { "deepc": cfg, "train": tc, "val_frac": lab.val_frac },
            "final_train_loss": last.map(|l| l.train_loss),
            "final_val_loss": last.and_then(|l| l.val_loss),
        }),
    )?;
    println!(
        "trained {} epochs, final loss {:?}",
        log.len(),
        last.map(|l| l.train_loss)
    );
    Ok(())
}

fn grn_schedule_cmd(a: GrnScheduleCmd) -> Result<()> {
    let params = match a.plant.as_deref().map(load_plant).transpose()? {
        Some(PlantConfig::Grn { params, .. }) => params,
        Some(_) => return Err(CliError::Usage("--plant must describe a GRN plant".into())),
        None => Default::default(),
    };
    let s = grn_schedule(&params, a.steps_each)?;
    write_json(&a.out, &serde_json::to_value(&s)?)?;
    println!("{} set-points, {} steps", s.setpoints.len(), s.total_steps());
    Ok(())
}

/// Everything a closed-loop run needs, resolved from files.
struct Setup {
    lab: LabConfig,
    hankel: HankelSet,
    plant_cfg: PlantConfig,
    cfg: DeePCConfig,
    scaler: Option<Scaler>,
    schedule: Schedule,
    plant: Box<dyn Plant + Send + Sync>,
    x0: Vec<f64>,
    steps: usize,
}

impl Setup {
    fn load(c: &Common) -> Result<Self> {
        let lab = LabConfig::load(c.cfg.as_deref())?;
        let hankel = load_hankel(&c.hankel)?;
        let plant_cfg = load_plant(&c.plant)?;
        let scaler = load_scaler(&c.scaler)?;
        let cfg = effective_deepc(&lab, &hankel, Some(&plant_cfg), scaler.as_ref())?;
        let mut schedule = Schedule::load(open(&c.schedule)?)?;
        let (raw, x0) = plant_cfg.build()?;
        let plant: Box<dyn Plant + Send + Sync> = match &scaler {
            Some(s) => {
                schedule = schedule.scaled(s)?;
                Box::new(ScaledOutput::new(raw, s.clone())?)
            }
            None => raw,
        };
        let d = hankel.dims();
        if plant.n_u() != d.n_u || plant.n_y() != d.n_y {
            return Err(DeepcError::Mismatch {
                left: "plant".into(),
                right: "hankel".into(),
                detail: format!(
                    "plant has {} inputs / {} outputs, hankel {}",
                    plant.n_u(),
                    plant.n_y(),
                    d.fingerprint()
                ),
            }
            .into());
        }
        if schedule.n_y() != d.n_y {
            return Err(DeepcError::Mismatch {
                left: "schedule".into(),
                right: "hankel".into(),
                detail: format!("schedule has {} outputs, hankel {}", schedule.n_y(), d.fingerprint()),
            }
            .into());
        }
        let steps = c.steps.unwrap_or_else(|| schedule.total_steps());
        Ok(Self {
            lab,
            hankel,
            plant_cfg,
            cfg,
            scaler,
            schedule,
            plant,
            x0,
            steps,
        })
    }

    fn controller<'a>(&'a self, kind: ControllerKind, nets: &'a [OperatorNetwork]) -> Result<Box<dyn Controller + 'a>> {
        if kind.needs_input_reference() && kind != ControllerKind::DeePC && !self.schedule.has_inputs() {
            return Err(CliError::Usage(format!("{kind} needs steady inputs in the schedule")));
        }
        Ok(match kind {
            ControllerKind::DeePC => Box::new(DeepcController {
                hankel: &self.hankel,
                cfg: &self.cfg,
            }),
            ControllerKind::OpenLoop => Box::new(OpenLoopController {
                t_ini: self.cfg.t_ini,
                n_p: self.cfg.n_p,
            }),
            k => {
                let variant = k.variant().expect("network controller");
                let net = nets.iter().find(|n| n.variant == variant).ok_or_else(|| {
                    CliError::Usage(format!("{k} needs a --model of variant {variant:?}"))
                })?;
                Box::new(NetController::new(net, &self.hankel, &self.cfg, k.is_guarded())?)
            }
        })
    }

    /// RMSE scaler: identity when already running in scaled coordinates.
    fn rmse_scaler(&self) -> Scaler {
        Scaler::identity(self.hankel.dims().n_y)
    }

    fn config_json(&self) -> serde_json::Value {
        json!({ "deepc": self.cfg, "train": self.lab.train, "val_frac": self.lab.val_frac })
    }
}

fn load_models(paths: &[PathBuf], h: &HankelSet) -> Result<Vec<OperatorNetwork>> {
    paths
        .iter()
        .map(|p| {
            let net = OperatorNetwork::load(open(p)?)?;
            net.check_dims(&h.dims())?;
            Ok(net)
        })
        .collect()
}

fn parse_kind(name: &str, variant: Variant) -> Result<ControllerKind> {
    Ok(match (name, variant) {
        ("deep", Variant::I) => ControllerKind::DeepI,
        ("deep", Variant::II) => ControllerKind::DeepII,
        ("guarded", Variant::I) => ControllerKind::GuardedI,
        ("guarded", Variant::II) => ControllerKind::GuardedII,
        (other, _) => other.parse()?,
    })
}

fn run_cmd(a: RunCmd) -> Result<()> {
    let setup = Setup::load(&a.common)?;
    let kind = parse_kind(&a.controller, a.variant)?;
    let nets = load_models(a.model.as_slice(), &setup.hankel)?;
    let mut c = setup.controller(kind, &nets)?;
    let opts = RunOptions {
        steps: setup.steps,
        seed: a.common.seed,
        fingerprint: setup.hankel.dims().fingerprint(),
    };
    let rec = run_closed_loop(setup.plant.as_ref(), &setup.x0, c.as_mut(), &setup.schedule, &opts)?;
    rec.write_csv(create(&a.out)?)?;
    let mut summary = rec.summary(Some(&setup.rmse_scaler()));
    summary.rmse = Some(rmse(&rec, &setup.rmse_scaler())?);
    write_json(
        &sidecar(&a.out, "summary.json"),
        &json!({
            "summary": summary,
            "rmse_units": if setup.scaler.is_some() { "scaled" } else { "plant" },
            "meta": {
                "command": "run",
                "controller": kind,
                "model": a.model.as_deref().map(path_str),
                "hankel": path_str(&a.common.hankel),
                "plant": setup.plant_cfg,
                "schedule": path_str(&a.common.schedule),
                "scaler": a.common.scaler.as_deref().map(path_str),
                "steps": setup.steps,
                "seed": a.common.seed,
                "config": setup.config_json(),
            },
        }),
    )?;
    println!(
        "{kind}: rmse {:.5}, event rate {:.3}, mean step {:.3e} s, failures {}",
        summary.rmse.unwrap_or(f64::NAN),
        summary.event_rate,
        summary.mean_step_s,
        summary.failures
    );
    Ok(())
}

fn bench_cmd(a: BenchCmd) -> Result<()> {
    let setup = Setup::load(&a.common)?;
    let nets = load_models(&a.models, &setup.hankel)?;
    let kinds = a
        .controllers
        .iter()
        .map(|s| s.parse::<ControllerKind>().map_err(CliError::from))
        .collect::<Result<Vec<_>>>()?;
    let mut make = |k: ControllerKind| -> deepc_core::Result<Box<dyn Controller + '_>> {
        setup.controller(k, &nets).map_err(|e| match e {
            CliError::Core(c) => c,
            other => DeepcError::Config(other.to_string()),
        })
    };
    let table = time_comparison(
        setup.plant.as_ref(),
        &setup.x0,
        &kinds,
        &mut make,
        &setup.schedule,
        a.trials,
        setup.steps,
        a.perturbation,
        a.common.seed,
        &setup.hankel.dims().fingerprint(),
    )?;
    write_json(
        &a.out,
        &json!({
            "timing": table,
            "meta": {
                "command": "bench",
                "models": a.models.iter().map(|p| path_str(p)).collect::<Vec<_>>(),
                "hankel": path_str(&a.common.hankel),
                "plant": setup.plant_cfg,
                "schedule": path_str(&a.common.schedule),
                "scaler": a.common.scaler.as_deref().map(path_str),
                "steps": setup.steps,
                "seed": a.common.seed,
                "config": setup.config_json(),
            },
        }),
    )?;
    for r in &table.rows {
        println!(
            "{:>14}: mean step {:.3e} s, events {:.3}, ratio vs deepc {:?}",
            r.controller.name(),
            r.mean_step_s,
            r.event_rate,
            r.ratio_vs_deepc
        );
    }
    Ok(())
}
