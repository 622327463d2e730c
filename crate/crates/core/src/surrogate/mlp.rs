use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::geometry::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
}

/// Componentwise affine map `x = shift + scale * z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalizer {
    pub fn identity(n: usize) -> Self {
        Self { shift: vec![0.0; n], scale: vec![1.0; n] }
    }

    /// Maps the per-component range of `samples` onto `[-1, 1]`.
    pub fn min_max(samples: &[Vec<f64>]) -> Self {
        let n = samples.first().map_or(0, Vec::len);
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![f64::NEG_INFINITY; n];
        for s in samples {
            for k in 0..n {
                lo[k] = lo[k].min(s[k]);
                hi[k] = hi[k].max(s[k]);
            }
        }
        let shift = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let scale = lo.iter().zip(&hi).map(|(a, b)| positive_or_one(0.5 * (b - a))).collect();
        Self { shift, scale }
    }

    /// Per-component mean and standard deviation.
    pub fn z_score(samples: &[Vec<f64>]) -> Self {
        let n = samples.first().map_or(0, Vec::len);
        let count = samples.len().max(1) as f64;
        let mut mean = vec![0.0; n];
        for s in samples {
            for k in 0..n {
                mean[k] += s[k] / count;
            }
        }
        let mut var = vec![0.0; n];
        for s in samples {
            for k in 0..n {
                var[k] += (s[k] - mean[k]).powi(2) / count;
            }
        }
        Self { shift: mean, scale: var.into_iter().map(|v| positive_or_one(v.sqrt())).collect() }
    }

    pub fn len(&self) -> usize {
        self.shift.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shift.is_empty()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.shift).zip(&self.scale).map(|((x, s), c)| (x - s) / c).collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter().zip(&self.shift).zip(&self.scale).map(|((z, s), c)| s + c * z).collect()
    }

    fn validate(&self, n: usize, what: &str) -> Result<()> {
        if self.shift.len() != n || self.scale.len() != n {
            return Err(Error::Input(format!("{what} normalizer has the wrong dimension")));
        }
        if !self.scale.iter().all(|&s| s > 0.0 && s.is_finite()) || !self.shift.iter().all(|s| s.is_finite()) {
            return Err(Error::Input(format!("{what} normalizer scales must be positive and finite")));
        }
        Ok(())
    }
}

fn positive_or_one(s: f64) -> f64 {
    if s > 0.0 && s.is_finite() {
        s
    } else {
        1.0
    }
}

/// Affine layer `z = W a + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub input: Normalizer,
    pub output: Normalizer,
    /// Hash of the POD basis whose coefficients the network predicts.
    pub basis_hash: Option<String>,
}

/// Squared relative error `|r - p|^2 / |r|^2`; `None` for a zero reference.
pub fn relative_loss(reference: &[f64], prediction: &[f64]) -> Option<f64> {
    let den: f64 = reference.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return None;
    }
    let num: f64 = reference.iter().zip(prediction).map(|(a, b)| (a - b).powi(2)).sum();
    Some(num / den)
}

/// Cached activations of one batch (columns are samples).
pub(crate) struct Tape {
    /// Layer inputs: normalized input, then each hidden activation.
    inputs: Vec<DMatrix<f64>>,
    /// Hidden pre-activations.
    pre: Vec<DMatrix<f64>>,
    /// De-normalized outputs.
    pub(crate) output: DMatrix<f64>,
}

impl MlpModel {
    /// He-uniform weights, zero biases, identity normalizers.
    pub fn new(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self {
            layers,
            activation: Activation::Relu,
            input: Normalizer::identity(layer_sizes[0]),
            output: Normalizer::identity(*layer_sizes.last().unwrap()),
            basis_hash: None,
        })
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].weights.ncols()];
        s.extend(self.layers.iter().map(|l| l.weights.nrows()));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Input("network has no layers".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].weights.nrows() != w[1].weights.ncols() {
                return Err(Error::Input("incompatible consecutive layers".into()));
            }
        }
        for l in &self.layers {
            if l.bias.len() != l.weights.nrows() {
                return Err(Error::Input("bias length differs from layer width".into()));
            }
        }
        self.input.validate(self.n_inputs(), "input")?;
        self.output.validate(self.n_outputs(), "output")
    }

    /// Parameters in file order: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for l in &self.layers {
            for i in 0..l.weights.nrows() {
                out.extend(l.weights.row(i).iter());
            }
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_parameters() {
            return Err(Error::Input(format!(
                "{} parameters given, network has {}",
                theta.len(),
                self.n_parameters()
            )));
        }
        let mut k = 0;
        for l in &mut self.layers {
            let (r, c) = l.weights.shape();
            for i in 0..r {
                for j in 0..c {
                    l.weights[(i, j)] = theta[k];
                    k += 1;
                }
            }
            for i in 0..r {
                l.bias[i] = theta[k];
                k += 1;
            }
        }
        Ok(())
    }

    pub(crate) fn forward_batch(&self, x: &DMatrix<f64>) -> Tape {
        let mut a = x.clone();
        for (r, mut col) in a.row_iter_mut().enumerate() {
            col.apply(|v| *v = (*v - self.input.shift[r]) / self.input.scale[r]);
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &l.weights * &a;
            for mut col in z.column_iter_mut() {
                col += &l.bias;
            }
            inputs.push(a);
            if k < last {
                pre.push(z.clone());
                z.apply(|v| *v = v.max(0.0));
                a = z;
            } else {
                a = z;
            }
        }
        for (r, mut row) in a.row_iter_mut().enumerate() {
            row.apply(|v| *v = self.output.shift[r] + self.output.scale[r] * *v);
        }
        Tape { inputs, pre, output: a }
    }

    /// Prediction for one raw input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_inputs() {
            return Err(Error::Input(format!("expected {} inputs, got {}", self.n_inputs(), x.len())));
        }
        let tape = self.forward_batch(&DMatrix::from_column_slice(x.len(), 1, x));
        Ok(tape.output.iter().copied().collect())
    }

    pub fn predict(&self, p: &ParamVector) -> Result<Vec<f64>> {
        self.forward(&p.to_array())
    }

    /// Mean relative loss over the batch plus `l2 * |theta|^2`, and its
    /// gradient in parameter order. Samples with a zero target are skipped.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>, y: &DMatrix<f64>, l2: f64) -> (f64, Vec<f64>) {
        let tape = self.forward_batch(x);
        let den: Vec<f64> = y.column_iter().map(|c| c.norm_squared()).collect();
        let used = den.iter().filter(|&&d| d > 0.0).count().max(1) as f64;
        let mut loss = 0.0;
        let mut delta = DMatrix::zeros(y.nrows(), y.ncols());
        for j in 0..y.ncols() {
            if !(den[j] > 0.0) {
                continue;
            }
            let diff = tape.output.column(j) - y.column(j);
            loss += diff.norm_squared() / den[j] / used;
            for r in 0..y.nrows() {
                delta[(r, j)] = 2.0 * diff[r] * self.output.scale[r] / den[j] / used;
            }
        }
        let mut grads: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let gw = &delta * tape.inputs[k].transpose();
            let gb = delta.column_sum();
            grads.push((gw, gb));
            if k > 0 {
                let mut back = self.layers[k].weights.transpose() * &delta;
                back.zip_apply(&tape.pre[k - 1], |d, z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        let mut g = Vec::with_capacity(self.n_parameters());
        for (gw, gb) in &grads {
            for i in 0..gw.nrows() {
                g.extend(gw.row(i).iter());
            }
            g.extend(gb.iter());
        }
        if l2 > 0.0 {
            let theta = self.parameters();
            loss += l2 * theta.iter().map(|t| t * t).sum::<f64>();
            for (gi, t) in g.iter_mut().zip(&theta) {
                *gi += 2.0 * l2 * t;
            }
        }
        (loss, g)
    }

    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            format: FORMAT.into(),
            version: VERSION,
            layer_sizes: self.layer_sizes(),
            activation: self.activation,
            input_normalizer: self.input.clone(),
            output_normalizer: self.output.clone(),
            basis_hash: self.basis_hash.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write(path, &self.header(), &self.parameters())
    }

    /// Architecture and normalizers without reading the weights.
    pub fn read_header(path: &Path) -> Result<ModelHeader> {
        let h: ModelHeader = container::read_header(path)?;
        h.check(path)?;
        Ok(h)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, theta) = container::read(path, |h: &ModelHeader| h.n_parameters())?;
        h.check(path)?;
        let mut model = Self::new(&h.layer_sizes, 0)?;
        model.set_parameters(&theta)?;
        model.activation = h.activation;
        model.input = h.input_normalizer;
        model.output = h.output_normalizer;
        model.basis_hash = h.basis_hash;
        model.validate()?;
        Ok(model)
    }
}

const FORMAT: &str = "igapod-mlp";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub input_normalizer: Normalizer,
    pub output_normalizer: Normalizer,
    pub basis_hash: Option<String>,
}

impl ModelHeader {
    pub fn n_parameters(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check(&self, path: &Path) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::Format(format!("{} is not a network file", path.display())));
        }
        if self.version != VERSION {
            return Err(Error::Format(format!(
                "{}: unsupported network file version {} (expected {VERSION})",
                path.display(),
                self.version
            )));
        }
        if self.layer_sizes.len() < 2 || self.layer_sizes.contains(&0) {
            return Err(Error::Format(format!("{}: invalid layer sizes", path.display())));
        }
        Ok(())
    }
}
