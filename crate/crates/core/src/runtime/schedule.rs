use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::dataset::Scaler;
use crate::error::{DeepcError, Result};
use crate::plants::{grn_output, grn_steady_state, GrnParams, GRN_SETPOINT_INPUTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetPoint {
    pub y: Vec<f64>,
    /// Steady input producing `y`; required by controllers that track inputs.
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    pub steps: usize,
}

/// Piecewise-constant reference indexed by absolute time `k`. Times past the
/// end repeat the last set-point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub setpoints: Vec<SetPoint>,
    /// Input applied while the initial window fills; defaults to the first
    /// set-point's input.
    #[serde(default)]
    pub warmup_input: Option<Vec<f64>>,
}

impl Schedule {
    pub fn new(setpoints: Vec<SetPoint>) -> Result<Self> {
        let s = Self {
            setpoints,
            warmup_input: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let s: Schedule = serde_json::from_reader(r)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .setpoints
            .first()
            .ok_or_else(|| DeepcError::Config("schedule has no set-points".into()))?;
        let (ny, nu) = (first.y.len(), first.u.as_ref().map(Vec::len));
        for (i, sp) in self.setpoints.iter().enumerate() {
            if sp.y.len() != ny || sp.u.as_ref().map(Vec::len) != nu {
                return Err(DeepcError::Config(format!("set-point {i} has inconsistent dimensions")));
            }
            if sp.steps == 0 {
                return Err(DeepcError::Config(format!("set-point {i} lasts zero steps")));
            }
        }
        if let (Some(w), Some(n)) = (&self.warmup_input, nu) {
            if w.len() != n {
                return Err(DeepcError::Config("warm-up input has the wrong length".into()));
            }
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.setpoints.iter().map(|s| s.steps).sum()
    }

    pub fn n_y(&self) -> usize {
        self.setpoints[0].y.len()
    }

    pub fn has_inputs(&self) -> bool {
        self.setpoints[0].u.is_some()
    }

    /// Index of the set-point active at time `k`.
    pub fn segment_at(&self, k: usize) -> usize {
        let mut end = 0;
        for (i, sp) in self.setpoints.iter().enumerate() {
            end += sp.steps;
            if k < end {
                return i;
            }
        }
        self.setpoints.len() - 1
    }

    /// Half-open time range `[start, end)` of segment `i`.
    pub fn segment_range(&self, i: usize) -> (usize, usize) {
        let start: usize = self.setpoints[..i].iter().map(|s| s.steps).sum();
        (start, start + self.setpoints[i].steps)
    }

    pub fn y_ref(&self, k: usize) -> &[f64] {
        &self.setpoints[self.segment_at(k)].y
    }

    pub fn u_ref(&self, k: usize) -> Option<&[f64]> {
        self.setpoints[self.segment_at(k)].u.as_deref()
    }

    /// Stacked `y_ref` over `k..k + n`.
    pub fn y_window(&self, k: usize, n: usize) -> Vec<f64> {
        (k..k + n).flat_map(|t| self.y_ref(t).iter().copied()).collect()
    }

    /// Stacked `u_ref` over `k..k + n`, or `None` without input references.
    pub fn u_window(&self, k: usize, n: usize) -> Option<Vec<f64>> {
        if !self.has_inputs() {
            return None;
        }
        Some(
            (k..k + n)
                .flat_map(|t| self.u_ref(t).expect("inputs present").iter().copied())
                .collect(),
        )
    }

    /// Same schedule with every output set-point mapped through `scaler`.
    pub fn scaled(&self, scaler: &Scaler) -> Result<Self> {
        if scaler.channels() != self.n_y() {
            return Err(DeepcError::dim("scaler channels differ from set-point outputs"));
        }
        let mut s = self.clone();
        for sp in &mut s.setpoints {
            sp.y = scaler.apply(&sp.y);
        }
        Ok(s)
    }

    pub fn warmup(&self) -> Option<&[f64]> {
        self.warmup_input.as_deref().or(self.setpoints[0].u.as_deref())
    }
}

/// The four GRN set-points, each the fixed point of its tabulated input and
/// held for `steps_each` steps.
pub fn grn_schedule(params: &GrnParams, steps_each: usize) -> Result<Schedule> {
    let mut sps = Vec::with_capacity(GRN_SETPOINT_INPUTS.len());
    for u in GRN_SETPOINT_INPUTS {
        let xs = grn_steady_state(params, &u)?;
        let x: [f64; 6] = xs.try_into().expect("six states");
        sps.push(SetPoint {
            y: grn_output(&x).to_vec(),
            u: Some(u.to_vec()),
            steps: steps_each,
        });
    }
    Schedule::new(sps)
}
