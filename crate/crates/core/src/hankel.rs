//! Block-Hankel matrices built from recorded input/output trajectories and
//! their split into past and future blocks.

use std::io::{Read, Write};

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{DeepcError, Result};
use crate::linalg;

/// Default relative singular-value threshold for the excitation test.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// A multichannel sampled signal. Column `t` holds the sample at step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    data: Array2<f64>,
}

impl Trajectory {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.ncols() == 0 || data.nrows() == 0 {
            return Err(DeepcError::dim(format!(
                "trajectory needs at least one channel and one step, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !x.is_finite()) {
            return Err(DeepcError::Numeric(format!(
                "trajectory contains non-finite entry {bad}"
            )));
        }
        Ok(Self { data })
    }

    /// Builds a trajectory from per-step sample vectors.
    pub fn from_samples<V: AsRef<[f64]>>(samples: &[V]) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(DeepcError::dim("trajectory needs at least one step"));
        };
        let channels = first.as_ref().len();
        let mut data = Array2::zeros((channels, samples.len()));
        for (t, s) in samples.iter().enumerate() {
            let s = s.as_ref();
            if s.len() != channels {
                return Err(DeepcError::dim(format!(
                    "step {t} has {} channels, expected {channels}",
                    s.len()
                )));
            }
            for (c, v) in s.iter().enumerate() {
                data[[c, t]] = *v;
            }
        }
        Self::new(data)
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn len(&self) -> usize {
        self.data.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.data.ncols() == 0
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn sample(&self, t: usize) -> ArrayView1<'_, f64> {
        self.data.column(t)
    }

    /// Steps `[start, end)` as a new trajectory.
    pub fn slice(&self, start: usize, end: usize) -> Result<Trajectory> {
        if start >= end || end > self.len() {
            return Err(DeepcError::dim(format!(
                "slice [{start}, {end}) out of range for length {}",
                self.len()
            )));
        }
        Trajectory::new(self.data.slice(s![.., start..end]).to_owned())
    }

    /// Stacked column vector `[x_start; x_start+1; ...]` of `len` steps.
    pub fn stacked(&self, start: usize, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(len * self.channels());
        for t in start..start + len {
            out.extend(self.data.column(t).iter());
        }
        out
    }

    /// Writes the CSV layout `t,<prefix>1,...,<prefix>n`.
    pub fn write_csv<W: Write>(&self, w: W, prefix: char) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.channels()).map(|i| format!("{prefix}{i}")));
        wtr.write_record(&header)?;
        for t in 0..self.len() {
            let mut row = vec![t.to_string()];
            row.extend(self.data.column(t).iter().map(|v| format!("{v:e}")));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads the CSV layout written by [`Trajectory::write_csv`]. Returns the
    /// trajectory and the channel prefix found in the header.
    pub fn read_csv<R: Read>(r: R) -> Result<(Trajectory, char)> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "t" {
            return Err(DeepcError::Format(format!(
                "trajectory header must start with `t` and name at least one channel, got {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let prefix = header[1]
            .chars()
            .next()
            .ok_or_else(|| DeepcError::Format("empty channel name".into()))?;
        for (i, name) in header.iter().skip(1).enumerate() {
            if name != format!("{prefix}{}", i + 1) {
                return Err(DeepcError::Format(format!(
                    "unexpected channel column `{name}`, expected `{prefix}{}`",
                    i + 1
                )));
            }
        }
        let mut samples = Vec::new();
        for (row_idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .skip(1)
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| {
                        DeepcError::Format(format!("row {row_idx}: bad number `{f}`: {e}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            samples.push(vals);
        }
        Ok((Trajectory::from_samples(&samples)?, prefix))
    }
}

/// Depth-`depth` block-Hankel matrix. Block row `i`, column `j` holds sample
/// `i + j`; channels of one sample are contiguous within a block.
pub fn build_hankel(seq: &Trajectory, depth: usize) -> Result<Array2<f64>> {
    let len = seq.len();
    if depth == 0 || len < depth {
        return Err(DeepcError::dim(format!(
            "Hankel depth {depth} needs 1 <= depth <= trajectory length {len}"
        )));
    }
    let ch = seq.channels();
    let cols = len - depth + 1;
    let data = seq.data();
    let mut h = Array2::zeros((ch * depth, cols));
    for i in 0..depth {
        h.slice_mut(s![i * ch..(i + 1) * ch, ..])
            .assign(&data.slice(s![.., i..i + cols]));
    }
    Ok(h)
}

/// Problem dimensions shared by every artifact derived from one data set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub t: usize,
    pub t_ini: usize,
    pub n_p: usize,
    pub n_u: usize,
    pub n_y: usize,
}

impl Dims {
    pub fn depth(&self) -> usize {
        self.t_ini + self.n_p
    }

    /// Number of Hankel columns, i.e. the operator dimension.
    pub fn cols(&self) -> usize {
        self.t - self.depth() + 1
    }

    /// Short stable tag for artifact pairing checks.
    pub fn fingerprint(&self) -> String {
        // FNV-1a over the five dimensions.
        let mut h: u64 = 0xcbf29ce484222325;
        for v in [self.t, self.t_ini, self.n_p, self.n_u, self.n_y] {
            for b in (v as u64).to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        }
        format!(
            "T{}-Tini{}-Np{}-nu{}-ny{}-{:016x}",
            self.t, self.t_ini, self.n_p, self.n_u, self.n_y, h
        )
    }
}

/// The past/future split of the input and output Hankel matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HankelSet {
    dims: Dims,
    u_p: Array2<f64>,
    y_p: Array2<f64>,
    u_f: Array2<f64>,
    y_f: Array2<f64>,
    // Source data kept so the set can be persisted and rebuilt exactly.
    u: Trajectory,
    y: Trajectory,
}

impl HankelSet {
    pub fn dims(&self) -> Dims {
        self.dims
    }
    pub fn u_p(&self) -> ArrayView2<'_, f64> {
        self.u_p.view()
    }
    pub fn y_p(&self) -> ArrayView2<'_, f64> {
        self.y_p.view()
    }
    pub fn u_f(&self) -> ArrayView2<'_, f64> {
        self.u_f.view()
    }
    pub fn y_f(&self) -> ArrayView2<'_, f64> {
        self.y_f.view()
    }
    pub fn source(&self) -> (&Trajectory, &Trajectory) {
        (&self.u, &self.y)
    }

    /// `[U_p; Y_p]`, the block fixing the initial condition.
    pub fn past(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.u_p.view(), self.y_p.view()]).expect("same cols")
    }

    /// `[U_f; Y_f]`.
    pub fn future(&self) -> Array2<f64> {
        ndarray::concatenate(Axis(0), &[self.u_f.view(), self.y_f.view()]).expect("same cols")
    }

    pub fn save_json<W: Write>(&self, w: W) -> Result<()> {
        #[derive(Serialize)]
        struct Stored<'a> {
            format: &'static str,
            fingerprint: String,
            t_ini: usize,
            n_p: usize,
            u: &'a Trajectory,
            y: &'a Trajectory,
        }
        serde_json::to_writer(
            w,
            &Stored {
                format: "deepc-hankel-v1",
                fingerprint: self.dims.fingerprint(),
                t_ini: self.dims.t_ini,
                n_p: self.dims.n_p,
                u: &self.u,
                y: &self.y,
            },
        )?;
        Ok(())
    }

    pub fn load_json<R: Read>(r: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Stored {
            format: String,
            fingerprint: String,
            t_ini: usize,
            n_p: usize,
            u: Trajectory,
            y: Trajectory,
        }
        let s: Stored = serde_json::from_reader(r)?;
        if s.format != "deepc-hankel-v1" {
            return Err(DeepcError::Format(format!(
                "unknown Hankel file format `{}`",
                s.format
            )));
        }
        let u = Trajectory::new(s.u.data)?;
        let y = Trajectory::new(s.y.data)?;
        let set = partition(&u, &y, s.t_ini, s.n_p)?;
        if set.dims.fingerprint() != s.fingerprint {
            return Err(DeepcError::Mismatch {
                left: "hankel header".into(),
                right: "hankel data".into(),
                detail: format!("{} vs {}", s.fingerprint, set.dims.fingerprint()),
            });
        }
        Ok(set)
    }
}

/// Splits the depth-`t_ini + n_p` Hankel matrices of `u` and `y` into past
/// and future blocks.
pub fn partition(u: &Trajectory, y: &Trajectory, t_ini: usize, n_p: usize) -> Result<HankelSet> {
    if t_ini == 0 || n_p == 0 {
        return Err(DeepcError::dim(format!(
            "T_ini and N_p must be positive, got T_ini = {t_ini}, N_p = {n_p}"
        )));
    }
    if u.len() != y.len() {
        return Err(DeepcError::dim(format!(
            "input length {} differs from output length {}",
            u.len(),
            y.len()
        )));
    }
    let depth = t_ini + n_p;
    if u.len() < depth {
        return Err(DeepcError::dim(format!(
            "data length T = {} is shorter than L = T_ini + N_p = {depth}",
            u.len()
        )));
    }
    let (n_u, n_y) = (u.channels(), y.channels());
    let hu = build_hankel(u, depth)?;
    let hy = build_hankel(y, depth)?;
    Ok(HankelSet {
        dims: Dims {
            t: u.len(),
            t_ini,
            n_p,
            n_u,
            n_y,
        },
        u_p: hu.slice(s![..n_u * t_ini, ..]).to_owned(),
        u_f: hu.slice(s![n_u * t_ini.., ..]).to_owned(),
        y_p: hy.slice(s![..n_y * t_ini, ..]).to_owned(),
        y_f: hy.slice(s![n_y * t_ini.., ..]).to_owned(),
        u: u.clone(),
        y: y.clone(),
    })
}

/// Full-row-rank test of the depth-`order` Hankel matrix of `u`.
pub fn is_persistently_exciting(u: &Trajectory, order: usize, rank_tol: f64) -> Result<bool> {
    let h = build_hankel(u, order)?;
    if h.ncols() < h.nrows() {
        return Ok(false);
    }
    let sv = linalg::singular_values(h.view());
    let smax = sv[0];
    let smin = sv[h.nrows() - 1];
    Ok(smax > 0.0 && smin > rank_tol * smax)
}

/// Largest order for which `u` is persistently exciting (0 if none).
pub fn excitation_order(u: &Trajectory, rank_tol: f64) -> usize {
    let mut order = 0;
    for k in 1..=u.len() {
        match is_persistently_exciting(u, k, rank_tol) {
            Ok(true) => order = k,
            _ => break,
        }
    }
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: &[f64]) -> Trajectory {
        Trajectory::new(Array2::from_shape_vec((1, v.len()), v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn scalar_depth_two() {
        let h = build_hankel(&scalar(&[1., 2., 3., 4.]), 2).unwrap();
        assert_eq!(h, array![[1., 2., 3.], [2., 3., 4.]]);
    }

    #[test]
    fn depth_one_is_identity() {
        let t = Trajectory::new(array![[1., 2., 3.], [4., 5., 6.]]).unwrap();
        assert_eq!(build_hankel(&t, 1).unwrap(), t.data());
    }

    #[test]
    fn two_channel_matches_loop_oracle() {
        let t = Trajectory::new(array![[1., 2., 3., 4., 5.], [10., 20., 30., 40., 50.]]).unwrap();
        let h = build_hankel(&t, 3).unwrap();
        assert_eq!(h.dim(), (6, 3));
        for i in 0..3 {
            for j in 0..3 {
                for c in 0..2 {
                    assert_eq!(h[[i * 2 + c, j]], t.data()[[c, i + j]]);
                }
            }
        }
    }

    #[test]
    fn too_short_names_both_values() {
        let err = build_hankel(&scalar(&[1., 2.]), 3).unwrap_err().to_string();
        assert!(err.contains('3') && err.contains('2'), "{err}");
    }

    #[test]
    fn partition_paper_dimensions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = Trajectory::new(Array2::from_shape_fn((3, 200), |_| rng.random())).unwrap();
        let y = Trajectory::new(Array2::from_shape_fn((3, 200), |_| rng.random())).unwrap();
        let h = partition(&u, &y, 10, 10).unwrap();
        for m in [h.u_p(), h.y_p(), h.u_f(), h.y_f()] {
            assert_eq!(m.dim(), (30, 181));
        }
        let restacked =
            ndarray::concatenate(Axis(0), &[h.u_p(), h.u_f()]).unwrap();
        assert_eq!(restacked, build_hankel(&u, 20).unwrap());
    }

    #[test]
    fn partition_rejects_bad_input() {
        let u = scalar(&[1., 2., 3., 4.]);
        let y = scalar(&[1., 2., 3.]);
        assert!(partition(&u, &u, 0, 2).is_err());
        assert!(partition(&u, &y, 1, 1).is_err());
        assert!(partition(&u, &u, 3, 2).is_err());
    }

    #[test]
    fn constant_not_exciting() {
        assert!(!is_persistently_exciting(&scalar(&[2.0; 10]), 2, DEFAULT_RANK_TOL).unwrap());
    }

    #[test]
    fn random_sequence_exciting() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let v: Vec<f64> = (0..50).map(|_| rng.random()).collect();
        assert!(is_persistently_exciting(&scalar(&v), 5, DEFAULT_RANK_TOL).unwrap());
        assert!(is_persistently_exciting(&scalar(&v), 60, DEFAULT_RANK_TOL).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let t = Trajectory::new(array![[0.1, -2.5e-7], [3.0, 1.0 / 3.0]]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf, 'y').unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,y1,y2\n"));
        let (back, prefix) = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(prefix, 'y');
        assert_eq!(back, t);
    }

    #[test]
    fn hankel_file_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = Trajectory::new(Array2::from_shape_fn((2, 30), |_| rng.random())).unwrap();
        let y = Trajectory::new(Array2::from_shape_fn((1, 30), |_| rng.random())).unwrap();
        let h = partition(&u, &y, 3, 4).unwrap();
        let mut buf = Vec::new();
        h.save_json(&mut buf).unwrap();
        assert_eq!(HankelSet::load_json(buf.as_slice()).unwrap(), h);
    }
}
