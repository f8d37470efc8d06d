//! Optimiser, run configuration, training loop, evaluation and checkpoints.

pub mod adam;
pub mod config;
pub mod suites;

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::{
    apply_missingness, ball_dataset, gen_gp_series, gen_moving_ball, read_tensors, tensor_map, write_tensors, Dataset, SeriesDecoder, Tensor, BALL_FRAMES,
    BALL_SIDE,
};
use crate::elbo::{evaluate, value_and_grad, ElboEstimate, ElboInputs, MiniBatch, Objective};
use crate::error::{Error, Result};
use crate::kernels::{KernelSpec, LatentPrior};
use crate::linalg::Matrix;
use crate::neighbours::{NeighbourIndex, NeighbourSets, SpaOrdering};
use crate::nets::{decode, encode, log_likelihood, Layer, MlpParams, ModelParams};
use crate::predict::{latent_predictive, nll_from_log_likelihoods, rmse_eval, sample_latent, trajectory_projection, PredictiveGaussian};
use crate::rng::{derive_seed, standard_normal_matrix, stream, Purpose};

pub use adam::{adam_step, AdamState};
pub use config::{DataSource, EvalConfig, MissingConfig, NetConfig, OptimizerConfig, RunConfig};

pub const METRICS_HEADER: &str = "run_id,model,H,seed,epoch,elbo,recon,kl,nll,rmse,wall_seconds";
pub const LOSS_HEADER: &str = "epoch,batch,loss,elbo,recon,kl";
/// Predictions use this many neighbours when the model itself has none.
pub const DEFAULT_PREDICT_H: usize = 10;
const CONFIG_TENSOR: &str = "meta.config_json";
const MISSING_EVAL_INDEX: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub elbo: f64,
    pub recon: f64,
    pub kl: f64,
    pub nll: f64,
    pub rmse: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRow {
    pub epoch: usize,
    pub batch: usize,
    /// Negative ELBO per data point.
    pub loss: f64,
    pub elbo: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: ModelParams,
    pub metrics: Metrics,
    pub loss_trace: Vec<LossRow>,
    /// Number of neighbour-structure builds during training.
    pub index_builds: usize,
    pub eval_data: Dataset,
    pub wall_seconds: f64,
}

/// How a checkpoint is scored; everything is taken from the run config.
#[derive(Clone, Copy, Debug)]
pub struct EvalSpec {
    pub objective: Objective,
    pub h: usize,
    pub beta: f64,
    pub ordering: SpaOrdering,
    pub samples: usize,
    pub seed: u64,
    /// Moving-ball test batches: videos sharing one projection.
    pub projection_videos: Option<usize>,
}

impl EvalSpec {
    pub fn from_config(c: &RunConfig) -> Self {
        let projection_videos = match c.data {
            DataSource::MovingBall { videos_per_epoch, .. } => Some(videos_per_epoch),
            _ => None,
        };
        Self { objective: c.model, h: c.h, beta: c.beta, ordering: c.spa_ordering, samples: c.eval.samples, seed: c.seed, projection_videos }
    }
}

pub fn init_params(c: &RunConfig, observed_dim: usize) -> Result<ModelParams> {
    let l = c.latent_dim;
    let mut rng = stream(c.seed, Purpose::Init, 0);
    let widths = |first: usize, hidden: &[usize], last: usize| {
        let mut w = vec![first];
        w.extend_from_slice(hidden);
        w.push(last);
        w
    };
    let encoder = MlpParams::init(&widths(observed_dim, &c.encoder.hidden, 2 * l), c.encoder.activation, &mut rng);
    let decoder = MlpParams::init(&widths(l, &c.decoder.hidden, c.likelihood.output_width(observed_dim)), c.decoder.activation, &mut rng);
    let prior = LatentPrior::new((0..l).map(|i| KernelSpec::from_config(c.kernel(i))).collect::<Result<_>>()?)?;
    ModelParams::new(encoder, decoder, prior, c.likelihood)
}

/// Neighbour sets for an objective, or `None` when it needs none.
pub fn build_sets(objective: Objective, h: usize, ordering: SpaOrdering, data: &Dataset) -> Result<Option<NeighbourSets>> {
    let index = || -> Result<NeighbourIndex> { Ok(NeighbourIndex::new(data.x.clone(), h).with_groups(&data.groups)?.with_spa_ordering(ordering)) };
    match objective {
        Objective::GpvaeHpa => Ok(Some(NeighbourSets::hpa(&index()?)?)),
        Objective::GpvaeSpa => Ok(Some(NeighbourSets::spa(&index()?))),
        Objective::Vae | Objective::GpvaeFull => Ok(None),
    }
}

fn with_missing(c: &RunConfig, data: Dataset, index: u64) -> Result<Dataset> {
    match c.missing {
        Some(m) => apply_missingness(&data, m.rate, m.mode, derive_seed(c.seed, Purpose::Missing, index)),
        None => Ok(data),
    }
}

enum TrainingData {
    Fixed(Box<Dataset>),
    Ball { seed: u64, videos: usize, lengthscale: f64 },
}

impl TrainingData {
    fn new(c: &RunConfig) -> Result<Self> {
        match &c.data {
            DataSource::Path(p) => Ok(Self::Fixed(Box::new(with_missing(c, Dataset::load(p)?, 0)?))),
            DataSource::GpSeries { n, d, grid, kernel, noise } => {
                let prior = LatentPrior::new(vec![KernelSpec::from_config(kernel)?; c.latent_dim])?;
                let ds = gen_gp_series(derive_seed(c.seed, Purpose::GpLatent, 0), &prior, SeriesDecoder::Identity, *n, *d, *grid, *noise)?;
                Ok(Self::Fixed(Box::new(with_missing(c, ds, 0)?)))
            }
            DataSource::MovingBall { videos_per_epoch, lengthscale, .. } => {
                Ok(Self::Ball { seed: c.seed, videos: *videos_per_epoch, lengthscale: *lengthscale })
            }
        }
    }

    fn observed_dim(&self) -> usize {
        match self {
            Self::Fixed(d) => d.y.cols(),
            Self::Ball { .. } => BALL_SIDE * BALL_SIDE,
        }
    }

    fn epoch(&self, c: &RunConfig, epoch: usize) -> Result<Cow<'_, Dataset>> {
        match self {
            Self::Fixed(d) => Ok(Cow::Borrowed(d)),
            Self::Ball { seed, videos, lengthscale } => {
                let v = gen_moving_ball(derive_seed(*seed, Purpose::EpochSeed, epoch as u64), *videos, *lengthscale)?;
                Ok(Cow::Owned(with_missing(c, ball_dataset(&v)?, epoch as u64 + 1)?))
            }
        }
    }
}

/// The training data seen in `epoch`.
pub fn training_dataset(c: &RunConfig, epoch: usize) -> Result<Dataset> {
    Ok(TrainingData::new(c)?.epoch(c, epoch)?.into_owned())
}

/// The data a finished run is scored on: held-out test batches for the
/// moving ball, the training data otherwise.
pub fn eval_dataset(c: &RunConfig) -> Result<Dataset> {
    match &c.data {
        DataSource::MovingBall { videos_per_epoch, lengthscale, test_batches } => {
            let v = gen_moving_ball(derive_seed(c.seed, Purpose::EvalSample, 0), videos_per_epoch * test_batches, *lengthscale)?;
            with_missing(c, ball_dataset(&v)?, MISSING_EVAL_INDEX)
        }
        _ => match TrainingData::new(c)? {
            TrainingData::Fixed(d) => Ok(*d),
            TrainingData::Ball { .. } => unreachable!(),
        },
    }
}

fn neg_per_point(g: &[Matrix], n: usize) -> Vec<Vec<f64>> {
    let s = -1.0 / n as f64;
    g.iter().map(|m| m.as_slice().iter().map(|v| v * s).collect()).collect()
}

pub fn train(c: &RunConfig) -> Result<TrainOutput> {
    c.validate()?;
    let start = Instant::now();
    let source = TrainingData::new(c)?;
    let mut params = init_params(c, source.observed_dim())?;
    let mut adam = AdamState::new(params.named_tensors().iter().map(|(_, m)| m.len()));
    let mut sets: Option<(Matrix, Vec<usize>, Option<NeighbourSets>)> = None;
    let mut index_builds = 0;
    let mut loss_trace = Vec::new();
    let mut step = 0u64;
    let l = c.latent_dim;

    for epoch in 0..c.optimizer.epochs {
        let data = source.epoch(c, epoch)?;
        let n = data.n();
        let stale = match &sets {
            Some((x, g, _)) => x != &data.x || g != &data.groups,
            None => true,
        };
        if stale {
            let s = build_sets(c.model, c.h, c.spa_ordering, &data)?;
            if s.is_some() {
                index_builds += 1;
            }
            sets = Some((data.x.clone(), data.groups.clone(), s));
        }
        let nsets = sets.as_ref().and_then(|s| s.2.as_ref());

        let mut order: Vec<usize> = (0..n).collect();
        let bs = c.optimizer.batch_size.unwrap_or(n).min(n);
        if bs < n {
            order.shuffle(&mut stream(c.seed, Purpose::Shuffle, epoch as u64));
        }
        for (b, chunk) in order.chunks(bs).enumerate() {
            let mut idx = chunk.to_vec();
            idx.sort_unstable();
            let batch = MiniBatch::new(idx);
            let eps = standard_normal_matrix(&mut stream(c.seed, Purpose::Eps, step), n, l);
            let inp = ElboInputs { data: &data, objective: c.model, sets: nsets, batch: &batch, beta: c.beta, eps: &eps };
            let wrap = |e: Error| Error::Training { epoch, batch: b, source: Box::new(e) };
            let (est, g) = value_and_grad(&params, inp).map_err(wrap)?;
            if !est.value.is_finite() {
                return Err(wrap(Error::NonFinite("objective")));
            }
            let mut g = neg_per_point(&g, n);
            if !c.optimizer.train_kernels {
                let k = g.len() - 2 * l;
                g[k..].iter_mut().for_each(|v| v.fill(0.0));
            }
            let grefs: Vec<&[f64]> = g.iter().map(Vec::as_slice).collect();
            adam_step(&mut params.param_slices_mut(), &grefs, &mut adam, c.optimizer.lr)?;
            loss_trace.push(LossRow { epoch, batch: b, loss: -est.value / n as f64, elbo: est.value, recon: est.recon_term, kl: est.kl_term });
            step += 1;
        }
    }

    let eval_data = eval_dataset(c)?;
    let metrics = evaluate_model(&params, &EvalSpec::from_config(c), &eval_data)?;
    Ok(TrainOutput { params, metrics, loss_trace, index_builds, eval_data, wall_seconds: start.elapsed().as_secs_f64() })
}

/// Full-batch objective, Monte Carlo NLL and RMSE of a trained model.
pub fn evaluate_model(params: &ModelParams, spec: &EvalSpec, data: &Dataset) -> Result<Metrics> {
    let n = data.n();
    let l = params.latent_dim();
    let sets = build_sets(spec.objective, spec.h, spec.ordering, data)?;
    let eps = standard_normal_matrix(&mut stream(spec.seed, Purpose::EvalSample, 0), n, l);
    let batch = MiniBatch::full(n);
    let est: ElboEstimate = evaluate(params, ElboInputs { data, objective: spec.objective, sets: sets.as_ref(), batch: &batch, beta: spec.beta, eps: &eps })?;

    let enc = encode(&params.encoder, &data.y)?;
    let eval_mask = data.eval_mask();
    let target = data.eval_target();
    let (mut nll_sum, mut rows) = (0.0, 0usize);
    for i in 0..n {
        let mrow = eval_mask.select_rows(&[i]);
        if mrow.sum() == 0.0 {
            continue;
        }
        let q = PredictiveGaussian { mean: enc.mean.row(i).to_vec(), variance: enc.variance.row(i).to_vec() };
        let z = sample_latent(&q, spec.samples, &mut stream(spec.seed, Purpose::EvalSample, 1 + i as u64));
        let lik = decode(&params.decoder, &z, params.family)?;
        let y = Matrix::from_fn(spec.samples, target.cols(), |_, c| target[(i, c)]);
        let m = Matrix::from_fn(spec.samples, target.cols(), |_, c| mrow[(0, c)]);
        nll_sum += nll_from_log_likelihoods(&log_likelihood(&lik, &y, &m)?);
        rows += 1;
    }
    let nll = if rows > 0 { nll_sum / rows as f64 } else { f64::NAN };

    let rmse = match (&data.trajectory, spec.projection_videos) {
        (Some(traj), Some(videos)) => {
            let block = videos * BALL_FRAMES;
            let centre = BALL_SIDE as f64 / 2.0;
            let mut sse = 0.0;
            let mut start = 0;
            while start < n {
                let idx: Vec<usize> = (start..(start + block).min(n)).collect();
                let truth = traj.select_rows(&idx).map(|v| v - centre);
                let (_, r) = trajectory_projection(&enc.mean.select_rows(&idx), &truth)?;
                sse += r * r * truth.len() as f64;
                start += block;
            }
            (sse / traj.len() as f64).sqrt()
        }
        _ => {
            let pred = decode(&params.decoder, &enc.mean, params.family)?;
            rmse_eval(pred.mean(), target, &eval_mask)?
        }
    };
    Ok(Metrics { elbo: est.value, recon: est.recon_term, kl: est.kl_term, nll, rmse })
}

pub fn checkpoint_tensors(params: &ModelParams, c: &RunConfig) -> Vec<(String, Tensor)> {
    let mut t: Vec<(String, Tensor)> = params.named_tensors().into_iter().map(|(n, m)| (n, Tensor::from(m))).collect();
    t.push((CONFIG_TENSOR.to_owned(), Tensor::vector(c.to_json().bytes().map(f64::from).collect())));
    t
}

pub fn save_checkpoint(path: impl AsRef<Path>, params: &ModelParams, c: &RunConfig) -> Result<()> {
    write_tensors(path, &checkpoint_tensors(params, c))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams, RunConfig)> {
    let map = tensor_map(read_tensors(path)?);
    let cfg = map.get(CONFIG_TENSOR).ok_or_else(|| Error::MissingTensor(CONFIG_TENSOR.to_owned()))?;
    let bytes: Vec<u8> = cfg.data.iter().map(|&b| b as u8).collect();
    let c: RunConfig = serde_json::from_slice(&bytes)?;
    let mlp = |prefix: &str, act| -> Result<MlpParams> {
        let mut layers = Vec::new();
        while let Some(w) = map.get(&format!("{prefix}.{}.weight", layers.len())) {
            let b = map.get(&format!("{prefix}.{}.bias", layers.len())).ok_or_else(|| Error::MissingTensor(format!("{prefix}.{}.bias", layers.len())))?;
            layers.push(Layer { weight: w.to_matrix()?, bias: b.to_matrix()? });
        }
        MlpParams::from_layers(layers, act)
    };
    let scalar = |name: String| -> Result<f64> { Ok(map.get(&name).ok_or(Error::MissingTensor(name.clone()))?.to_matrix()?.item()) };
    let channels = (0..c.latent_dim)
        .map(|l| {
            Ok(KernelSpec {
                kind: c.kernel(l).kind,
                raw_lengthscale: scalar(format!("kernel.{l}.raw_lengthscale"))?,
                raw_outputscale: scalar(format!("kernel.{l}.raw_outputscale"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let params = ModelParams::new(mlp("encoder", c.encoder.activation)?, mlp("decoder", c.decoder.activation)?, LatentPrior::new(channels)?, c.likelihood)?;
    Ok((params, c))
}

pub fn metrics_row(c: &RunConfig, m: &Metrics, wall_seconds: f64) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{:.3}",
        c.run_id,
        c.model.name(),
        c.h,
        c.seed,
        c.optimizer.epochs,
        m.elbo,
        m.recon,
        m.kl,
        m.nll,
        m.rmse,
        wall_seconds
    )
}

pub fn loss_trace_csv(rows: &[LossRow]) -> String {
    let mut s = String::from(LOSS_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{},{}", r.epoch, r.batch, r.loss, r.elbo, r.recon, r.kl);
    }
    s
}

/// Writes `checkpoint.nnts`, `metrics.csv`, `loss_trace.csv`,
/// `eval_data.nnts` and `config.json` into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, c: &RunConfig, out: &TrainOutput) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    save_checkpoint(dir.join("checkpoint.nnts"), &out.params, c)?;
    std::fs::write(dir.join("metrics.csv"), format!("{METRICS_HEADER}\n{}\n", metrics_row(c, &out.metrics, out.wall_seconds)))?;
    std::fs::write(dir.join("loss_trace.csv"), loss_trace_csv(&out.loss_trace))?;
    out.eval_data.save(dir.join("eval_data.nnts"))?;
    std::fs::write(dir.join("config.json"), c.to_json())?;
    Ok(())
}

/// Scores a checkpoint on `data`, optionally overriding the sample count.
pub fn eval_checkpoint(checkpoint: impl AsRef<Path>, data: &Dataset, samples: Option<usize>) -> Result<(RunConfig, Metrics)> {
    let (params, c) = load_checkpoint(checkpoint)?;
    let mut spec = EvalSpec::from_config(&c);
    if let Some(s) = samples {
        if s == 0 {
            return Err(Error::InvalidArgument("samples must be positive".into()));
        }
        spec.samples = s;
    }
    let m = evaluate_model(&params, &spec, data)?;
    Ok((c, m))
}

/// Predictive latent moments and the Monte Carlo mean observation at each
/// row of `query`, conditioning on the encoded training data.
pub fn predict(params: &ModelParams, c: &RunConfig, data: &Dataset, query: &Matrix, samples: usize) -> Result<Vec<(String, Tensor)>> {
    if query.cols() != data.x.cols() {
        return Err(Error::DimensionMismatch(format!("queries have {} coordinates, inputs {}", query.cols(), data.x.cols())));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".into()));
    }
    let h = if c.h > 0 { c.h } else { DEFAULT_PREDICT_H }.min(data.n());
    let index = NeighbourIndex::new(data.x.clone(), h);
    let enc = encode(&params.encoder, &data.y)?;
    let l = params.latent_dim();
    let k = params.observed_dim();
    let (mut mean, mut var, mut y) = (Matrix::zeros(query.rows(), l), Matrix::zeros(query.rows(), l), Matrix::zeros(query.rows(), k));
    for r in 0..query.rows() {
        let q = latent_predictive(query.row(r), &index, &params.prior, &enc)?;
        mean.row_mut(r).copy_from_slice(&q.mean);
        var.row_mut(r).copy_from_slice(&q.variance);
        let z = sample_latent(&q, samples, &mut stream(c.seed, Purpose::Predict, r as u64));
        let lik = decode(&params.decoder, &z, params.family)?;
        for s in 0..samples {
            for (o, v) in y.row_mut(r).iter_mut().zip(lik.mean().row(s)) {
                *o += v / samples as f64;
            }
        }
    }
    Ok(vec![("latent_mean".into(), mean.into()), ("latent_variance".into(), var.into()), ("y_mean".into(), y.into())])
}
