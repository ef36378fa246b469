use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use super::ControllerContext;
use crate::constraint_guard::guard_operator;
use crate::deepc::{deepc_step, DeePCConfig, QpStatus};
use crate::error::{DeepcError, Result};
use crate::hankel::HankelSet;
use crate::operator_net::{OperatorNetwork, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(rename = "deepc")]
    DeePC,
    #[serde(rename = "deep_deepc_I")]
    DeepI,
    #[serde(rename = "deep_deepc_II")]
    DeepII,
    #[serde(rename = "guarded_I")]
    GuardedI,
    #[serde(rename = "guarded_II")]
    GuardedII,
    #[serde(rename = "open_loop")]
    OpenLoop,
}

impl ControllerKind {
    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::DeePC => "deepc",
            ControllerKind::DeepI => "deep_deepc_I",
            ControllerKind::DeepII => "deep_deepc_II",
            ControllerKind::GuardedI => "guarded_I",
            ControllerKind::GuardedII => "guarded_II",
            ControllerKind::OpenLoop => "open_loop",
        }
    }

    pub fn is_guarded(self) -> bool {
        matches!(self, ControllerKind::GuardedI | ControllerKind::GuardedII)
    }

    pub fn variant(self) -> Option<Variant> {
        match self {
            ControllerKind::DeepI | ControllerKind::GuardedI => Some(Variant::I),
            ControllerKind::DeepII | ControllerKind::GuardedII => Some(Variant::II),
            _ => None,
        }
    }

    pub fn needs_input_reference(self) -> bool {
        !matches!(self, ControllerKind::DeepII | ControllerKind::GuardedII)
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = DeepcError;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "deepc" => ControllerKind::DeePC,
            "deep_deepc_I" | "deep_I" => ControllerKind::DeepI,
            "deep_deepc_II" | "deep_II" => ControllerKind::DeepII,
            "guarded_I" => ControllerKind::GuardedI,
            "guarded_II" => ControllerKind::GuardedII,
            "open_loop" | "open" => ControllerKind::OpenLoop,
            _ => return Err(DeepcError::Config(format!("unknown controller `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    /// No optimization was needed.
    Direct,
    Solved,
    MaxIter,
    /// Solved after softening the output box.
    SoftOutput,
    /// Controller failed; the previous input was held.
    Failed,
}

#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub u_seq: Vec<f64>,
    pub y_pred: Option<Vec<f64>>,
    pub event: bool,
    pub status: StepStatus,
    pub qp_iterations: usize,
    /// Seconds spent in an event-triggered projection.
    pub projection_s: Option<f64>,
}

pub trait Controller {
    fn kind(&self) -> ControllerKind;
    fn t_ini(&self) -> usize;
    fn n_p(&self) -> usize;
    fn compute(&mut self, ctx: &ControllerContext, u_ref_win: &[f64], y_ref_win: &[f64]) -> Result<ControlOutput>;
}

/// Conventional DeePC solving the tracking QP every step.
pub struct DeepcController<'a> {
    pub hankel: &'a HankelSet,
    pub cfg: &'a DeePCConfig,
}

impl Controller for DeepcController<'_> {
    fn kind(&self) -> ControllerKind {
        ControllerKind::DeePC
    }
    fn t_ini(&self) -> usize {
        self.cfg.t_ini
    }
    fn n_p(&self) -> usize {
        self.cfg.n_p
    }

    fn compute(&mut self, ctx: &ControllerContext, u_ref_win: &[f64], y_ref_win: &[f64]) -> Result<ControlOutput> {
        let step = deepc_step(self.hankel, self.cfg, ctx, u_ref_win, y_ref_win)?;
        let status = match (step.status, step.soft_output) {
            (_, true) => StepStatus::SoftOutput,
            (QpStatus::Solved, false) => StepStatus::Solved,
            (QpStatus::MaxIter, false) => StepStatus::MaxIter,
            (QpStatus::Infeasible, false) => StepStatus::Failed,
        };
        Ok(ControlOutput {
            u_seq: step.u_seq.to_vec(),
            y_pred: Some(step.y_pred.to_vec()),
            event: false,
            status,
            qp_iterations: step.iterations,
            projection_s: None,
        })
    }
}

/// Learned-operator controller, optionally guarded by the projection.
pub struct NetController<'a> {
    pub net: &'a OperatorNetwork,
    pub hankel: &'a HankelSet,
    pub cfg: &'a DeePCConfig,
    pub guarded: bool,
}

impl<'a> NetController<'a> {
    pub fn new(net: &'a OperatorNetwork, hankel: &'a HankelSet, cfg: &'a DeePCConfig, guarded: bool) -> Result<Self> {
        net.check_dims(&hankel.dims())?;
        cfg.check_hankel(hankel)?;
        Ok(Self {
            net,
            hankel,
            cfg,
            guarded,
        })
    }
}

impl Controller for NetController<'_> {
    fn kind(&self) -> ControllerKind {
        match (self.net.variant, self.guarded) {
            (Variant::I, false) => ControllerKind::DeepI,
            (Variant::II, false) => ControllerKind::DeepII,
            (Variant::I, true) => ControllerKind::GuardedI,
            (Variant::II, true) => ControllerKind::GuardedII,
        }
    }
    fn t_ini(&self) -> usize {
        self.cfg.t_ini
    }
    fn n_p(&self) -> usize {
        self.cfg.n_p
    }

    fn compute(&mut self, ctx: &ControllerContext, _u: &[f64], _y: &[f64]) -> Result<ControlOutput> {
        let x = self
            .net
            .variant
            .context_vector(&ctx.u_ini_vec(), &ctx.y_ini_vec(), &ctx.e_u, &ctx.e_y);
        let g_hat = self.net.forward(ArrayView1::from(&x))?;
        if !self.guarded {
            return Ok(ControlOutput {
                u_seq: self.hankel.u_f().dot(&g_hat).to_vec(),
                y_pred: Some(self.hankel.y_f().dot(&g_hat).to_vec()),
                event: false,
                status: StepStatus::Direct,
                qp_iterations: 0,
                projection_s: None,
            });
        }
        let out = guard_operator(self.hankel, self.cfg, ctx, g_hat)?;
        Ok(ControlOutput {
            u_seq: out.u_seq.to_vec(),
            y_pred: Some(out.y_pred.to_vec()),
            event: out.event,
            status: if out.event { StepStatus::Solved } else { StepStatus::Direct },
            qp_iterations: 0,
            projection_s: out.projection_time.map(|d| d.as_secs_f64()),
        })
    }
}

/// Applies the schedule's steady input directly.
pub struct OpenLoopController {
    pub t_ini: usize,
    pub n_p: usize,
}

impl Controller for OpenLoopController {
    fn kind(&self) -> ControllerKind {
        ControllerKind::OpenLoop
    }
    fn t_ini(&self) -> usize {
        self.t_ini
    }
    fn n_p(&self) -> usize {
        self.n_p
    }

    fn compute(&mut self, _ctx: &ControllerContext, u_ref_win: &[f64], _y: &[f64]) -> Result<ControlOutput> {
        Ok(ControlOutput {
            u_seq: u_ref_win.to_vec(),
            y_pred: None,
            event: false,
            status: StepStatus::Direct,
            qp_iterations: 0,
            projection_s: None,
        })
    }
}
