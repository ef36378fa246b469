use std::collections::VecDeque;

use crate::error::{DeepcError, Result};

/// Rolling initial trajectories and tracking errors seen by a controller at
/// its current prediction origin `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerContext {
    t_ini: usize,
    u_ini: VecDeque<Vec<f64>>,
    y_ini: VecDeque<Vec<f64>>,
    pub e_u: Vec<f64>,
    pub e_y: Vec<f64>,
    pub k: usize,
}

impl ControllerContext {
    pub fn new(t_ini: usize, n_u: usize, n_y: usize) -> Self {
        Self {
            t_ini,
            u_ini: VecDeque::with_capacity(t_ini + 1),
            y_ini: VecDeque::with_capacity(t_ini + 1),
            e_u: vec![0.0; n_u],
            e_y: vec![0.0; n_y],
            k: 0,
        }
    }

    /// Context from stacked windows (oldest sample first).
    pub fn from_stacked(
        u_ini: &[f64],
        y_ini: &[f64],
        e_u: Vec<f64>,
        e_y: Vec<f64>,
        t_ini: usize,
    ) -> Result<Self> {
        let (n_u, n_y) = (e_u.len(), e_y.len());
        if t_ini == 0 || u_ini.len() != n_u * t_ini || y_ini.len() != n_y * t_ini {
            return Err(DeepcError::dim(format!(
                "context windows of {} / {} entries do not match T_ini = {t_ini}, n_u = {n_u}, n_y = {n_y}",
                u_ini.len(),
                y_ini.len()
            )));
        }
        let mut ctx = Self::new(t_ini, n_u, n_y);
        for t in 0..t_ini {
            ctx.push(&u_ini[t * n_u..(t + 1) * n_u], &y_ini[t * n_y..(t + 1) * n_y]);
        }
        ctx.e_u = e_u;
        ctx.e_y = e_y;
        ctx.k = t_ini;
        Ok(ctx)
    }

    pub fn t_ini(&self) -> usize {
        self.t_ini
    }

    /// Appends one applied input and its measured output, dropping the oldest.
    pub fn push(&mut self, u: &[f64], y: &[f64]) {
        self.u_ini.push_back(u.to_vec());
        self.y_ini.push_back(y.to_vec());
        while self.u_ini.len() > self.t_ini {
            self.u_ini.pop_front();
        }
        while self.y_ini.len() > self.t_ini {
            self.y_ini.pop_front();
        }
    }

    pub fn is_warm(&self) -> bool {
        self.u_ini.len() == self.t_ini && self.y_ini.len() == self.t_ini
    }

    pub fn u_ini_vec(&self) -> Vec<f64> {
        self.u_ini.iter().flatten().copied().collect()
    }

    pub fn y_ini_vec(&self) -> Vec<f64> {
        self.y_ini.iter().flatten().copied().collect()
    }

    pub fn last_input(&self) -> Option<&[f64]> {
        self.u_ini.back().map(|v| v.as_slice())
    }

    pub fn last_output(&self) -> Option<&[f64]> {
        self.y_ini.back().map(|v| v.as_slice())
    }
}
