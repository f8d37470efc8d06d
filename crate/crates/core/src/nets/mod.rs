//! Encoder/decoder networks, reparameterised sampling and masked
//! observation likelihoods, all recorded on a [`Tape`].

pub mod tape;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::LatentPrior;
use crate::linalg::Matrix;
pub use tape::{Gradients, Tape, Var};

/// Encoder and decoder variances are clamped into this interval.
pub const VARIANCE_MIN: f64 = 1e-6;
pub const VARIANCE_MAX: f64 = 1e6;
/// Bernoulli probabilities are clamped to `[P_CLAMP, 1 − P_CLAMP]` inside the log-likelihood.
pub const P_CLAMP: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    pub fn code(self) -> f64 {
        match self {
            Activation::Tanh => 0.0,
            Activation::Relu => 1.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LikelihoodFamily {
    #[default]
    Gaussian,
    Bernoulli,
}

impl LikelihoodFamily {
    pub fn code(self) -> f64 {
        match self {
            LikelihoodFamily::Gaussian => 0.0,
            LikelihoodFamily::Bernoulli => 1.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            0 => Some(LikelihoodFamily::Gaussian),
            1 => Some(LikelihoodFamily::Bernoulli),
            _ => None,
        }
    }

    /// Decoder output width for `k` observed dimensions.
    pub fn output_width(self, k: usize) -> usize {
        match self {
            LikelihoodFamily::Gaussian => 2 * k,
            LikelihoodFamily::Bernoulli => k,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `in × out`
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

/// A fully connected network; the activation sits between layers, the last
/// layer is linear.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

impl MlpParams {
    /// Uniform `±sqrt(6/(fan_in+fan_out))` weights and zero biases.
    pub fn init(widths: &[usize], activation: Activation, rng: &mut impl Rng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let layers = widths
            .windows(2)
            .map(|w| {
                let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer { weight: Matrix::from_fn(w[0], w[1], |_, _| rng.random_range(-bound..bound)), bias: Matrix::zeros(1, w[1]) }
            })
            .collect();
        Self { layers, activation }
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Self {
        let layers = widths.windows(2).map(|w| Layer { weight: Matrix::zeros(w[0], w[1]), bias: Matrix::zeros(1, w[1]) }).collect();
        Self { layers, activation }
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("MLP has no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.rows() != 1 || l.bias.cols() != l.weight.cols() {
                return Err(Error::DimensionMismatch(format!("layer {i} bias is {:?} for weight {:?}", l.bias.shape(), l.weight.shape())));
            }
            if i > 0 && layers[i - 1].weight.cols() != l.weight.rows() {
                return Err(Error::DimensionMismatch(format!("layer {i} input {} does not chain", l.weight.rows())));
            }
            if !l.weight.is_finite() || !l.bias.is_finite() {
                return Err(Error::NonFinite("MLP parameters"));
            }
        }
        Ok(Self { layers, activation })
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().weight.cols()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }
}

/// Leaf (or constant) handles for an MLP recorded on a tape.
pub struct TapeMlp {
    pub layers: Vec<(Var, Var)>,
    pub activation: Activation,
}

impl TapeMlp {
    pub fn record(tape: &mut Tape, mlp: &MlpParams, trainable: bool) -> Self {
        let layers = mlp
            .layers
            .iter()
            .map(|l| {
                if trainable {
                    (tape.leaf(l.weight.clone()), tape.leaf(l.bias.clone()))
                } else {
                    (tape.constant(l.weight.clone()), tape.constant(l.bias.clone()))
                }
            })
            .collect();
        Self { layers, activation: mlp.activation }
    }

    pub fn forward(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        let in_w = tape.value(self.layers[0].0).rows();
        if tape.value(input).cols() != in_w {
            return Err(Error::DimensionMismatch(format!("network expects width {in_w}, input has {}", tape.value(input).cols())));
        }
        let mut h = input;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = tape.matmul(h, w);
            h = tape.add_row(z, b);
            if i + 1 < self.layers.len() {
                h = match self.activation {
                    Activation::Tanh => tape.tanh(h),
                    Activation::Relu => tape.relu(h),
                };
            }
        }
        Ok(h)
    }
}

/// Diagonal Gaussian posterior per row.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderOutput {
    pub mean: Matrix,
    pub variance: Matrix,
}

/// Tape handles for an encoder pass.
#[derive(Clone, Copy, Debug)]
pub struct TapeEncoding {
    pub mean: Var,
    pub variance: Var,
}

/// Splits the `2L`-wide final layer into mean and log-variance, exponentiates and clamps.
pub fn encode_on_tape(tape: &mut Tape, net: &TapeMlp, y: Var) -> Result<TapeEncoding> {
    let out = net.forward(tape, y)?;
    let width = tape.value(out).cols();
    if !width.is_multiple_of(2) {
        return Err(Error::DimensionMismatch(format!("encoder output width {width} is odd")));
    }
    let l = width / 2;
    let mean = tape.cols(out, 0, l);
    let logvar = tape.cols(out, l, l);
    let var = tape.exp(logvar);
    let variance = tape.clamp(var, VARIANCE_MIN, VARIANCE_MAX);
    Ok(TapeEncoding { mean, variance })
}

pub fn encode(phi: &MlpParams, y: &Matrix) -> Result<EncoderOutput> {
    let mut tape = Tape::new();
    let net = TapeMlp::record(&mut tape, phi, false);
    let yv = tape.constant(y.clone());
    let e = encode_on_tape(&mut tape, &net, yv)?;
    Ok(EncoderOutput { mean: tape.value(e.mean).clone(), variance: tape.value(e.variance).clone() })
}

#[derive(Clone, Debug, PartialEq)]
pub enum LikelihoodParams {
    Gaussian { mean: Matrix, variance: Matrix },
    Bernoulli { probability: Matrix },
}

impl LikelihoodParams {
    /// Expected observation under the likelihood.
    pub fn mean(&self) -> &Matrix {
        match self {
            LikelihoodParams::Gaussian { mean, .. } => mean,
            LikelihoodParams::Bernoulli { probability } => probability,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub enum TapeLikelihood {
    Gaussian {
        mean: Var,
        variance: Var,
    },
    /// Pre-sigmoid decoder outputs.
    Bernoulli {
        logits: Var,
    },
}

pub fn decode_on_tape(tape: &mut Tape, net: &TapeMlp, z: Var, family: LikelihoodFamily) -> Result<TapeLikelihood> {
    let out = net.forward(tape, z)?;
    Ok(match family {
        LikelihoodFamily::Gaussian => {
            let width = tape.value(out).cols();
            if !width.is_multiple_of(2) {
                return Err(Error::DimensionMismatch(format!("Gaussian decoder width {width} is odd")));
            }
            let k = width / 2;
            let mean = tape.cols(out, 0, k);
            let logvar = tape.cols(out, k, k);
            let var = tape.exp(logvar);
            TapeLikelihood::Gaussian { mean, variance: tape.clamp(var, VARIANCE_MIN, VARIANCE_MAX) }
        }
        LikelihoodFamily::Bernoulli => TapeLikelihood::Bernoulli { logits: out },
    })
}

pub fn decode(theta: &MlpParams, z: &Matrix, family: LikelihoodFamily) -> Result<LikelihoodParams> {
    let mut tape = Tape::new();
    let net = TapeMlp::record(&mut tape, theta, false);
    let zv = tape.constant(z.clone());
    Ok(match decode_on_tape(&mut tape, &net, zv, family)? {
        TapeLikelihood::Gaussian { mean, variance } => LikelihoodParams::Gaussian { mean: tape.value(mean).clone(), variance: tape.value(variance).clone() },
        TapeLikelihood::Bernoulli { logits } => {
            let p = tape.sigmoid(logits);
            LikelihoodParams::Bernoulli { probability: tape.value(p).clone() }
        }
    })
}

fn gaussian_logpdf(y: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (y - mean) * (y - mean) / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}

fn bernoulli_logpmf(y: f64, p: f64) -> f64 {
    let p = p.clamp(P_CLAMP, 1.0 - P_CLAMP);
    y * p.ln() + (1.0 - y) * (1.0 - p).ln()
}

/// Per-row masked log-likelihood as an `n×1` column.
pub fn log_likelihood_on_tape(tape: &mut Tape, params: TapeLikelihood, y: &Matrix, mask: &Matrix) -> Var {
    match params {
        TapeLikelihood::Gaussian { mean, variance } => {
            // −(y−μ)²/(2σ²) − ½ log(2πσ²)
            let yv = tape.constant(y.clone());
            let mv = tape.constant(mask.clone());
            let diff = tape.sub(yv, mean);
            let sq = tape.square(diff);
            let lv = tape.log(variance);
            let inv = {
                let neg = tape.affine(lv, -1.0, 0.0);
                tape.exp(neg)
            };
            let quad = tape.mul(sq, inv);
            let quad = tape.affine(quad, -0.5, 0.0);
            let norm = tape.affine(lv, -0.5, -0.5 * (2.0 * std::f64::consts::PI).ln());
            let per_entry = tape.add(quad, norm);
            let masked = tape.mul(per_entry, mv);
            tape.sum_rows(masked)
        }
        TapeLikelihood::Bernoulli { logits } => tape.bernoulli_rows(logits, y, mask, P_CLAMP),
    }
}

/// Per-row sum of masked-in log-densities.
pub fn log_likelihood(params: &LikelihoodParams, y: &Matrix, mask: &Matrix) -> Result<Vec<f64>> {
    let mean = params.mean();
    if y.shape() != mean.shape() || mask.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!("likelihood {:?}, data {:?}, mask {:?}", mean.shape(), y.shape(), mask.shape())));
    }
    let rows = (0..y.rows())
        .map(|r| {
            let (yr, mr) = (y.row(r), mask.row(r));
            (0..y.cols())
                .filter(|&c| mr[c] != 0.0)
                .map(|c| {
                    mr[c]
                        * match params {
                            LikelihoodParams::Gaussian { mean, variance } => gaussian_logpdf(yr[c], mean[(r, c)], variance[(r, c)]),
                            LikelihoodParams::Bernoulli { probability } => bernoulli_logpmf(yr[c], probability[(r, c)]),
                        }
                })
                .sum()
        })
        .collect();
    Ok(rows)
}

/// `z = mean + sqrt(variance) ∘ eps`.
pub fn reparam_on_tape(tape: &mut Tape, enc: TapeEncoding, eps: &Matrix) -> Var {
    let sd = tape.sqrt(enc.variance);
    let e = tape.constant(eps.clone());
    let noise = tape.mul(sd, e);
    tape.add(enc.mean, noise)
}

pub fn reparam_sample(enc: &EncoderOutput, eps: &Matrix) -> Result<Matrix> {
    if enc.mean.shape() != eps.shape() || enc.variance.shape() != eps.shape() {
        return Err(Error::DimensionMismatch(format!("encoder {:?} vs eps {:?}", enc.mean.shape(), eps.shape())));
    }
    let mut tape = Tape::new();
    let te = TapeEncoding { mean: tape.constant(enc.mean.clone()), variance: tape.constant(enc.variance.clone()) };
    let z = reparam_on_tape(&mut tape, te, eps);
    Ok(tape.value(z).clone())
}

/// The full trainable state: encoder φ, decoder θ, kernel parameters ψ.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub encoder: MlpParams,
    pub decoder: MlpParams,
    pub prior: LatentPrior,
    pub family: LikelihoodFamily,
}

/// The model recorded on a tape.
pub struct TapeModel {
    pub encoder: TapeMlp,
    pub decoder: TapeMlp,
    /// Raw (lengthscale, outputscale) per channel.
    pub kernels: Vec<(Var, Var)>,
}

impl ModelParams {
    pub fn new(encoder: MlpParams, decoder: MlpParams, prior: LatentPrior, family: LikelihoodFamily) -> Result<Self> {
        let l = prior.latent_dim();
        if encoder.output_width() != 2 * l {
            return Err(Error::DimensionMismatch(format!("encoder emits {} values for {l} latent channels", encoder.output_width())));
        }
        if decoder.input_width() != l {
            return Err(Error::DimensionMismatch(format!("decoder takes {} inputs for {l} latent channels", decoder.input_width())));
        }
        let k = encoder.input_width();
        if decoder.output_width() != family.output_width(k) {
            return Err(Error::DimensionMismatch(format!("decoder emits {} values for {k} observed dims ({family:?})", decoder.output_width())));
        }
        Ok(Self { encoder, decoder, prior, family })
    }

    pub fn latent_dim(&self) -> usize {
        self.prior.latent_dim()
    }

    pub fn observed_dim(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn record(&self, tape: &mut Tape, trainable: bool) -> TapeModel {
        let encoder = TapeMlp::record(tape, &self.encoder, trainable);
        let decoder = TapeMlp::record(tape, &self.decoder, trainable);
        let kernels = self
            .prior
            .channels
            .iter()
            .map(|k| {
                let (a, b) = (Matrix::scalar(k.raw_lengthscale), Matrix::scalar(k.raw_outputscale));
                if trainable {
                    (tape.leaf(a), tape.leaf(b))
                } else {
                    (tape.constant(a), tape.constant(b))
                }
            })
            .collect();
        TapeModel { encoder, decoder, kernels }
    }

    /// Named parameter tensors in a fixed order (the checkpoint layout).
    pub fn named_tensors(&self) -> Vec<(String, Matrix)> {
        let mut out = Vec::new();
        for (prefix, mlp) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, l) in mlp.layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), l.weight.clone()));
                out.push((format!("{prefix}.{i}.bias"), l.bias.clone()));
            }
        }
        for (l, k) in self.prior.channels.iter().enumerate() {
            out.push((format!("kernel.{l}.raw_lengthscale"), Matrix::scalar(k.raw_lengthscale)));
            out.push((format!("kernel.{l}.raw_outputscale"), Matrix::scalar(k.raw_outputscale)));
        }
        out
    }

    /// Mutable views of every parameter, in [`ModelParams::named_tensors`] order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for mlp in [&mut self.encoder, &mut self.decoder] {
            for l in mlp.layers.iter_mut() {
                out.push(l.weight.as_mut_slice());
                out.push(l.bias.as_mut_slice());
            }
        }
        for k in self.prior.channels.iter_mut() {
            out.push(std::slice::from_mut(&mut k.raw_lengthscale));
            out.push(std::slice::from_mut(&mut k.raw_outputscale));
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.encoder.n_params() + self.decoder.n_params() + 2 * self.prior.latent_dim()
    }
}

impl TapeModel {
    /// Leaf handles in [`ModelParams::named_tensors`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for mlp in [&self.encoder, &self.decoder] {
            for &(w, b) in &mlp.layers {
                out.push(w);
                out.push(b);
            }
        }
        for &(a, b) in &self.kernels {
            out.push(a);
            out.push(b);
        }
        out
    }
}
