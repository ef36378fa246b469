use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DeepcError, Result};
use crate::hankel::Dims;

/// Which tracking signals the network receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    /// Initial trajectories plus input and output tracking errors.
    I,
    /// Initial trajectories plus the output tracking error only; no
    /// steady-state input reference is needed.
    II,
}

impl Variant {
    pub fn input_dim(self, dims: &Dims) -> usize {
        let base = (dims.n_u + dims.n_y) * dims.t_ini;
        match self {
            Variant::I => base + dims.n_u + dims.n_y,
            Variant::II => base + dims.n_y,
        }
    }

    /// Network input in the order `[u_ini; y_ini; e_u; e_y]` (I) or
    /// `[u_ini; y_ini; e_y]` (II).
    pub fn context_vector(self, u_ini: &[f64], y_ini: &[f64], e_u: &[f64], e_y: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(u_ini.len() + y_ini.len() + e_u.len() + e_y.len());
        v.extend_from_slice(u_ini);
        v.extend_from_slice(y_ini);
        if self == Variant::I {
            v.extend_from_slice(e_u);
        }
        v.extend_from_slice(e_y);
        v
    }
}

impl std::str::FromStr for Variant {
    type Err = DeepcError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(Variant::I),
            "II" | "ii" | "2" => Ok(Variant::II),
            _ => Err(DeepcError::Config(format!("unknown variant `{s}` (expected I or II)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully connected network with rectifier hidden layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNetwork {
    pub variant: Variant,
    pub layers: Vec<Dense>,
    /// Dimensions of the Hankel data the network was built for.
    pub dims: Option<Dims>,
}

/// Per-layer parameter gradients, same shapes as the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &OperatorNetwork) -> Self {
        Self {
            weights: net.layers.iter().map(|l| Array2::zeros(l.weights.dim())).collect(),
            bias: net.layers.iter().map(|l| Array1::zeros(l.bias.len())).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

/// Scale of the output layer's initial weights relative to the hidden layers,
/// so that training starts from a near-zero operator.
pub const OUTPUT_INIT_GAIN: f64 = 0.01;

impl OperatorNetwork {
    /// He-style uniform fan-in initialization with zero biases; the output
    /// layer is shrunk by [`OUTPUT_INIT_GAIN`].
    pub fn new(variant: Variant, sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(DeepcError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let gain = if i == last { OUTPUT_INIT_GAIN } else { 1.0 };
                let limit = gain * (6.0 / fan_in as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_fn((fan_out, fan_in), |_| {
                        rng.random_range(-limit..limit)
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Self {
            variant,
            layers,
            dims: None,
        })
    }

    /// Network sized for the given Hankel dimensions with the given hidden widths.
    pub fn for_dims(variant: Variant, dims: Dims, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut sizes = vec![variant.input_dim(&dims)];
        sizes.extend_from_slice(hidden);
        sizes.push(dims.cols());
        let mut net = Self::new(variant, &sizes, seed)?;
        net.dims = Some(dims);
        Ok(net)
    }

    pub fn from_layers(variant: Variant, layers: Vec<Dense>) -> Result<Self> {
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].weights.nrows() != w[1].weights.ncols() {
                return Err(DeepcError::dim(format!(
                    "layer {i} emits {} values but layer {} takes {}",
                    w[0].weights.nrows(),
                    i + 1,
                    w[1].weights.ncols()
                )));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(DeepcError::dim(format!("layer {i}: bias length mismatch")));
            }
        }
        if layers.is_empty() {
            return Err(DeepcError::Config("network needs at least one layer".into()));
        }
        Ok(Self {
            variant,
            layers,
            dims: None,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.ncols()];
        s.extend(self.layers.iter().map(|l| l.weights.nrows()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weights.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    /// Mutable access to the `idx`-th parameter in [`Self::params_flat`] order.
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            let nw = l.weights.len();
            if idx < nw {
                return l.weights.as_slice_mut().expect("standard layout").get_mut(idx).unwrap();
            }
            idx -= nw;
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, ctx_vec: ArrayView1<f64>) -> Result<Array1<f64>> {
        if ctx_vec.len() != self.input_dim() {
            return Err(DeepcError::dim(format!(
                "network input has {} entries, expected {}",
                ctx_vec.len(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut a = ctx_vec.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            a = l.weights.dot(&a) + &l.bias;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Row-wise forward pass over a `batch x input` matrix.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_cached(x)?.pop().expect("output layer"))
    }

    /// Activations of every layer (post-rectifier for hidden layers).
    pub(crate) fn forward_cached(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>> {
        if x.ncols() != self.input_dim() {
            return Err(DeepcError::dim(format!(
                "network input has {} columns, expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let input = if i == 0 { x } else { acts[i - 1].view() };
            let mut z = input.dot(&l.weights.t());
            z += &l.bias.view().insert_axis(Axis(0));
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Back-propagates `d_out` (gradient w.r.t. the batch output) given the
    /// cached activations of the same batch.
    pub(crate) fn backward(
        &self,
        x: ArrayView2<f64>,
        acts: &[Array2<f64>],
        d_out: Array2<f64>,
    ) -> Gradients {
        let n = self.layers.len();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = d_out;
        for i in (0..n).rev() {
            let input = if i == 0 { x } else { acts[i - 1].view() };
            grads.weights[i] = delta.t().dot(&input);
            grads.bias[i] = delta.sum_axis(Axis(0));
            if i > 0 {
                let mut d_prev = delta.dot(&self.layers[i].weights);
                // Rectifier derivative; zero at the kink.
                ndarray::Zip::from(&mut d_prev)
                    .and(&acts[i - 1])
                    .for_each(|d, &a| {
                        if a <= 0.0 {
                            *d = 0.0;
                        }
                    });
                delta = d_prev;
            }
        }
        grads
    }

    pub fn check_dims(&self, dims: &Dims) -> Result<()> {
        let expect_in = self.variant.input_dim(dims);
        if self.input_dim() != expect_in || self.output_dim() != dims.cols() {
            return Err(DeepcError::Mismatch {
                left: "model".into(),
                right: "hankel".into(),
                detail: format!(
                    "network is {}->{}, hankel {} needs {}->{}",
                    self.input_dim(),
                    self.output_dim(),
                    dims.fingerprint(),
                    expect_in,
                    dims.cols()
                ),
            });
        }
        if let Some(own) = &self.dims {
            if own != dims {
                return Err(DeepcError::Mismatch {
                    left: "model".into(),
                    right: "hankel".into(),
                    detail: format!("model built for {}, got {}", own.fingerprint(), dims.fingerprint()),
                });
            }
        }
        Ok(())
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            variant: self.variant,
            layer_sizes: self.layer_sizes(),
            fingerprint: self.dims.map(|d| d.fingerprint()),
            dims: self.dims,
            layers: self
                .layers
                .iter()
                .map(|l| StoredLayer {
                    rows: l.weights.nrows(),
                    cols: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r)?;
        if file.format != MODEL_FORMAT {
            return Err(DeepcError::Format(format!("unknown model format `{}`", file.format)));
        }
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                Ok(Dense {
                    weights: Array2::from_shape_vec((l.rows, l.cols), l.weights)
                        .map_err(|e| DeepcError::Format(e.to_string()))?,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::from_layers(file.variant, layers)?;
        if net.layer_sizes() != file.layer_sizes {
            return Err(DeepcError::Format("layer sizes disagree with stored weights".into()));
        }
        if let (Some(d), Some(fp)) = (file.dims, &file.fingerprint) {
            if &d.fingerprint() != fp {
                return Err(DeepcError::Format("model fingerprint does not match its dims".into()));
            }
        }
        net.dims = file.dims;
        if net.layers.iter().any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite())) {
            return Err(DeepcError::Numeric("model contains non-finite parameters".into()));
        }
        Ok(net)
    }
}

const MODEL_FORMAT: &str = "deepc-operator-v1";

#[derive(Serialize, Deserialize)]
struct StoredLayer {
    rows: usize,
    cols: usize,
    /// Row-major weights.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    variant: Variant,
    layer_sizes: Vec<usize>,
    fingerprint: Option<String>,
    dims: Option<Dims>,
    layers: Vec<StoredLayer>,
}
