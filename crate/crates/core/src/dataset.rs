//! Supervised samples cut from open-loop trajectories, and min-max scaling.
//!
//! Binary dataset layout (all integers and floats little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `DPCDSET1` |
//! | 5 x 8 | `n_u`, `n_y`, `t_ini`, `n_p`, `count` as `u64` |
//! | rest  | `count` rows of `f64`: `u_ini`, `y_ini`, `e_u`, `e_y`, `u_ref`, `y_ref` |
//!
//! A row therefore holds `(n_u + n_y) * (t_ini + n_p + 1)` values.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DeepcError, Result};
use crate::hankel::Trajectory;

const MAGIC: &[u8; 8] = b"DPCDSET1";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub u_ini: Vec<f64>,
    pub y_ini: Vec<f64>,
    pub e_u: Vec<f64>,
    pub e_y: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub y_ref: Vec<f64>,
}

/// Dimensions shared by every sample of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleDims {
    pub n_u: usize,
    pub n_y: usize,
    pub t_ini: usize,
    pub n_p: usize,
}

impl SampleDims {
    fn row_len(&self) -> usize {
        (self.n_u + self.n_y) * (self.t_ini + self.n_p + 1)
    }
}

/// Cuts every `(t_ini + n_p)`-step window of `(u, y)` into a sample. The
/// window starting at `s` has its prediction origin at `k = s + t_ini`;
/// `e_u = u_k - u_{k-1}` and `e_y = y_{k+1} - y_k`.
pub fn extract_samples(
    u: &Trajectory,
    y: &Trajectory,
    t_ini: usize,
    n_p: usize,
) -> Result<Vec<TrainingSample>> {
    if u.len() != y.len() {
        return Err(DeepcError::dim(format!(
            "input length {} differs from output length {}",
            u.len(),
            y.len()
        )));
    }
    if t_ini == 0 || n_p < 2 {
        return Err(DeepcError::dim(format!(
            "need T_ini >= 1 and N_p >= 2 to form tracking errors, got {t_ini}, {n_p}"
        )));
    }
    let n = u.len();
    let window = t_ini + n_p;
    if n < window {
        return Err(DeepcError::dim(format!(
            "trajectory length {n} is shorter than T_ini + N_p = {window}"
        )));
    }
    let (n_u, n_y) = (u.channels(), y.channels());
    let samples = (0..=n - window)
        .map(|s| {
            let u_ini = u.stacked(s, t_ini);
            let y_ini = y.stacked(s, t_ini);
            let u_ref = u.stacked(s + t_ini, n_p);
            let y_ref = y.stacked(s + t_ini, n_p);
            let e_u = (0..n_u)
                .map(|c| u_ref[c] - u_ini[(t_ini - 1) * n_u + c])
                .collect();
            let e_y = (0..n_y).map(|c| y_ref[n_y + c] - y_ref[c]).collect();
            TrainingSample {
                u_ini,
                y_ini,
                e_u,
                e_y,
                u_ref,
                y_ref,
            }
        })
        .collect();
    Ok(samples)
}

/// Deterministic shuffled split; `val_frac` of the samples go to validation.
pub fn split(
    samples: Vec<TrainingSample>,
    val_frac: f64,
    seed: u64,
) -> (Vec<TrainingSample>, Vec<TrainingSample>) {
    let mut idx: Vec<usize> = (0..samples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((samples.len() as f64) * val_frac).round() as usize;
    let mut slots: Vec<Option<TrainingSample>> = samples.into_iter().map(Some).collect();
    let mut take = |i: usize| slots[i].take().expect("each index once");
    let val = idx[..n_val].iter().map(|&i| take(i)).collect();
    let train = idx[n_val..].iter().map(|&i| take(i)).collect();
    (train, val)
}

pub fn write_dataset<W: Write>(mut w: W, dims: SampleDims, samples: &[TrainingSample]) -> Result<()> {
    w.write_all(MAGIC)?;
    for v in [dims.n_u, dims.n_y, dims.t_ini, dims.n_p, samples.len()] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for (i, s) in samples.iter().enumerate() {
        let parts = [&s.u_ini, &s.y_ini, &s.e_u, &s.e_y, &s.u_ref, &s.y_ref];
        let len: usize = parts.iter().map(|p| p.len()).sum();
        if len != dims.row_len() {
            return Err(DeepcError::dim(format!(
                "sample {i} has {len} values, expected {}",
                dims.row_len()
            )));
        }
        for p in parts {
            for v in p.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset<R: Read>(mut r: R) -> Result<(SampleDims, Vec<TrainingSample>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(DeepcError::Format("not a dataset file (bad magic)".into()));
    }
    let mut header = [0usize; 5];
    for h in header.iter_mut() {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        *h = u64::from_le_bytes(b) as usize;
    }
    let [n_u, n_y, t_ini, n_p, count] = header;
    let dims = SampleDims {
        n_u,
        n_y,
        t_ini,
        n_p,
    };
    let mut read_vec = |n: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut b = [0u8; 8];
        for _ in 0..n {
            r.read_exact(&mut b)?;
            out.push(f64::from_le_bytes(b));
        }
        Ok(out)
    };
    let mut samples = Vec::with_capacity(count);
    for _ in 0..count {
        samples.push(TrainingSample {
            u_ini: read_vec(n_u * t_ini)?,
            y_ini: read_vec(n_y * t_ini)?,
            e_u: read_vec(n_u)?,
            e_y: read_vec(n_y)?,
            u_ref: read_vec(n_u * n_p)?,
            y_ref: read_vec(n_y * n_p)?,
        });
    }
    Ok((dims, samples))
}

/// Per-channel min-max map onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(DeepcError::dim("scaler min/max lengths differ"));
        }
        for (c, (lo, hi)) in min.iter().zip(&max).enumerate() {
            if !(hi > lo) {
                return Err(DeepcError::DegenerateChannel {
                    channel: c,
                    value: *lo,
                });
            }
        }
        Ok(Self { min, max })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            min: vec![0.0; n],
            max: vec![1.0; n],
        }
    }

    pub fn channels(&self) -> usize {
        self.min.len()
    }

    /// Channel-wise [`Self::apply`] over a whole trajectory.
    pub fn apply_trajectory(&self, y: &Trajectory) -> Result<Trajectory> {
        if y.channels() != self.channels() {
            return Err(DeepcError::dim("trajectory and scaler channel counts differ"));
        }
        let mut d = y.data().to_owned();
        for (c, mut row) in d.rows_mut().into_iter().enumerate() {
            row.mapv_inplace(|x| (x - self.min[c]) / (self.max[c] - self.min[c]));
        }
        Trajectory::new(d)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                let c = i % self.min.len();
                (x - self.min[c]) / (self.max[c] - self.min[c])
            })
            .collect()
    }

    pub fn invert(&self, v: &[f64]) -> Vec<f64> {
        v.iter()
            .enumerate()
            .map(|(i, x)| {
                let c = i % self.min.len();
                x * (self.max[c] - self.min[c]) + self.min[c]
            })
            .collect()
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let s: Scaler = serde_json::from_reader(r)?;
        Scaler::new(s.min, s.max)
    }
}

pub fn fit_scaler(y: &Trajectory) -> Result<Scaler> {
    let data = y.data();
    let min = data
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let max = data
        .rows()
        .into_iter()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Scaler::new(min, max)
}

/// Scaler over several trajectories with the same channels.
pub fn fit_scaler_many(ys: &[Trajectory]) -> Result<Scaler> {
    let first = ys
        .first()
        .ok_or_else(|| DeepcError::dim("no trajectories to fit a scaler on"))?;
    let mut min = vec![f64::INFINITY; first.channels()];
    let mut max = vec![f64::NEG_INFINITY; first.channels()];
    for y in ys {
        let s = fit_scaler(y).or_else(|_| {
            // One flat trajectory is fine as long as the union is not flat.
            let d = y.data();
            let lo: Vec<f64> = d.rows().into_iter().map(|r| r[0]).collect();
            Ok::<_, DeepcError>(Scaler {
                min: lo.clone(),
                max: lo,
            })
        })?;
        if s.channels() != min.len() {
            return Err(DeepcError::dim("trajectories have different channel counts"));
        }
        for c in 0..min.len() {
            min[c] = min[c].min(s.min[c]);
            max[c] = max[c].max(s.max[c]);
        }
    }
    Scaler::new(min, max)
}
