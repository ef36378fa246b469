//! The JSON config file shared by `train`, `run` and `bench`. Every field is
//! optional; horizons always come from the Hankel file.

use std::path::Path;

use clap::Args;
use serde::{Deserialize, Serialize};

use deepc_core::deepc::{DeePCConfig, Weight};
use deepc_core::hankel::Dims;
use deepc_core::operator_net::TrainConfig;
use deepc_core::DeepcError;

fn default_val_frac() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabConfig {
    #[serde(default)]
    pub deepc: DeepcOverrides,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_val_frac")]
    pub val_frac: f64,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            deepc: DeepcOverrides::default(),
            train: TrainConfig::default(),
            val_frac: default_val_frac(),
        }
    }
}

impl LabConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, DeepcError> {
        let cfg: LabConfig = match path {
            None => LabConfig::default(),
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| {
                    DeepcError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", p.display())))
                })?;
                serde_json::from_reader(std::io::BufReader::new(f))?
            }
        };
        if !(0.0..1.0).contains(&cfg.val_frac) {
            return Err(DeepcError::Config(format!("val_frac must lie in [0, 1), got {}", cfg.val_frac)));
        }
        Ok(cfg)
    }
}

/// DeePC settings; unset weights take the study defaults (Q = 5, R = 1,
/// P_u = P_y = 10) and unset bounds come from the plant file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeepcOverrides {
    pub q_weight: Option<Weight>,
    pub r_weight: Option<Weight>,
    pub p_u: Option<Weight>,
    pub p_y: Option<Weight>,
    pub u_lb: Option<Vec<f64>>,
    pub u_ub: Option<Vec<f64>>,
    pub y_lb: Option<Vec<f64>>,
    pub y_ub: Option<Vec<f64>>,
    pub reg_eps: Option<f64>,
    pub qp_tol: Option<f64>,
    pub qp_max_iter: Option<usize>,
    pub feas_tol: Option<f64>,
}

type Boxes = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

impl DeepcOverrides {
    pub fn resolve(&self, dims: Dims, plant_boxes: Option<Boxes>) -> Result<DeePCConfig, DeepcError> {
        let (pul, puu, pyl, pyu) = match plant_boxes {
            Some(b) => (Some(b.0), Some(b.1), Some(b.2), Some(b.3)),
            None => (None, None, None, None),
        };
        let pick = |own: &Option<Vec<f64>>, plant: Option<Vec<f64>>, name: &str| {
            own.clone().or(plant).ok_or_else(|| {
                DeepcError::Config(format!("{name} is neither in the config nor given by a plant file"))
            })
        };
        let mut cfg = DeePCConfig::grn_defaults(
            (pick(&self.u_lb, pul, "u_lb")?, pick(&self.u_ub, puu, "u_ub")?),
            (pick(&self.y_lb, pyl, "y_lb")?, pick(&self.y_ub, pyu, "y_ub")?),
        );
        cfg.t = dims.t;
        cfg.t_ini = dims.t_ini;
        cfg.n_p = dims.n_p;
        for (dst, src) in [
            (&mut cfg.q_weight, &self.q_weight),
            (&mut cfg.r_weight, &self.r_weight),
            (&mut cfg.p_u, &self.p_u),
            (&mut cfg.p_y, &self.p_y),
        ] {
            if let Some(w) = src {
                *dst = w.clone();
            }
        }
        if let Some(v) = self.reg_eps {
            cfg.reg_eps = v;
        }
        if let Some(v) = self.qp_tol {
            cfg.qp_tol = v;
        }
        if let Some(v) = self.qp_max_iter {
            cfg.qp_max_iter = v;
        }
        if let Some(v) = self.feas_tol {
            cfg.feas_tol = v;
        }
        if cfg.n_u() != dims.n_u || cfg.n_y() != dims.n_y {
            return Err(DeepcError::Mismatch {
                left: "config bounds".into(),
                right: "hankel".into(),
                detail: format!(
                    "bounds for {} inputs / {} outputs, hankel {}",
                    cfg.n_u(),
                    cfg.n_y(),
                    dims.fingerprint()
                ),
            });
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Training flags that override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub val_frac: Option<f64>,
}

impl TrainOverrides {
    pub fn apply(&self, lab: &mut LabConfig) {
        if let Some(v) = self.epochs {
            lab.train.epochs = v;
        }
        if let Some(v) = self.batch {
            lab.train.batch = v;
        }
        if let Some(v) = self.lr {
            lab.train.learning_rate = v;
        }
        if let Some(v) = self.seed {
            lab.train.seed = v;
        }
        if let Some(v) = self.val_frac {
            lab.val_frac = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> Dims {
        Dims {
            t: 40,
            t_ini: 3,
            n_p: 4,
            n_u: 1,
            n_y: 1,
        }
    }

    #[test]
    fn file_values_beat_plant_boxes() {
        let o: DeepcOverrides = serde_json::from_str(r#"{"u_ub": [0.5], "q_weight": 2.0}"#).unwrap();
        let cfg = o
            .resolve(dims(), Some((vec![0.0], vec![1.0], vec![-1.0], vec![1.0])))
            .unwrap();
        assert_eq!(cfg.u_ub, vec![0.5]);
        assert_eq!(cfg.u_lb, vec![0.0]);
        assert_eq!(cfg.q_weight, Weight::Scalar(2.0));
        assert_eq!((cfg.t, cfg.t_ini, cfg.n_p), (40, 3, 4));
    }

    #[test]
    fn missing_bounds_are_reported() {
        let err = DeepcOverrides::default().resolve(dims(), None).unwrap_err();
        assert!(err.to_string().contains("u_lb"));
    }

    #[test]
    fn flags_override_file() {
        let mut lab: LabConfig = serde_json::from_str(r#"{"train": {"epochs": 5, "seed": 3}}"#).unwrap();
        TrainOverrides {
            epochs: Some(2),
            ..Default::default()
        }
        .apply(&mut lab);
        assert_eq!((lab.train.epochs, lab.train.seed), (2, 3));
        assert!(serde_json::from_str::<LabConfig>(r#"{"bogus": 1}"#).is_err());
    }
}
