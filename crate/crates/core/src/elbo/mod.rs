//! Training objectives: GPVAE-HPA, GPVAE-SPA, the exact full-batch GPVAE
//! bound and the standard VAE bound.
//!
//! Every objective is recorded on a [`Tape`] so the same code path yields both
//! the value and its gradient. Reparameterisation noise is passed in as an
//! `N×L` matrix indexed by data point, so estimators evaluated on different
//! batches see the same draw for the same point.

pub mod closed_form;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kernels::pairwise_distances;
use crate::linalg::Matrix;
use crate::neighbours::NeighbourSets;
use crate::nets::{decode_on_tape, encode_on_tape, log_likelihood_on_tape, reparam_on_tape, ModelParams, Tape, TapeModel, Var};

pub use closed_form::{kl_gaussian_diag_vs_full, kl_spa_expected, spa_conditional, spa_prior_logdensity};

/// Largest GP block the exact objective will factorise.
pub const FULL_GP_LIMIT: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Vae,
    GpvaeHpa,
    GpvaeSpa,
    GpvaeFull,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Vae => "vae",
            Objective::GpvaeHpa => "gpvae_hpa",
            Objective::GpvaeSpa => "gpvae_spa",
            Objective::GpvaeFull => "gpvae_full",
        }
    }

    pub fn code(self) -> f64 {
        match self {
            Objective::Vae => 0.0,
            Objective::GpvaeHpa => 1.0,
            Objective::GpvaeSpa => 2.0,
            Objective::GpvaeFull => 3.0,
        }
    }

    pub fn from_code(code: f64) -> Option<Self> {
        match code as i64 {
            0 => Some(Objective::Vae),
            1 => Some(Objective::GpvaeHpa),
            2 => Some(Objective::GpvaeSpa),
            3 => Some(Objective::GpvaeFull),
            _ => None,
        }
    }
}

/// Index sets for one stochastic step. `recon` (I) drives the likelihood
/// sum; `kl` (J) drives the SPA chain sum and defaults to I.
#[derive(Clone, Debug, PartialEq)]
pub struct MiniBatch {
    pub recon: Vec<usize>,
    pub kl: Vec<usize>,
}

impl MiniBatch {
    pub fn new(indices: Vec<usize>) -> Self {
        Self { kl: indices.clone(), recon: indices }
    }

    pub fn full(n: usize) -> Self {
        Self::new((0..n).collect())
    }

    pub fn with_kl(recon: Vec<usize>, kl: Vec<usize>) -> Self {
        Self { recon, kl }
    }

    fn validate(&self, n: usize) -> Result<()> {
        for (name, set) in [("I", &self.recon), ("J", &self.kl)] {
            if set.is_empty() {
                return Err(Error::InvalidArgument(format!("mini-batch {name} is empty")));
            }
            let mut seen = vec![false; n];
            for &i in set {
                if i >= n {
                    return Err(Error::InvalidArgument(format!("mini-batch index {i} out of range for {n} points")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!("mini-batch {name} repeats index {i}")));
                }
            }
        }
        Ok(())
    }
}

/// `value = recon_term − beta · kl_term`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboEstimate {
    pub value: f64,
    pub recon_term: f64,
    pub kl_term: f64,
    pub beta: f64,
}

/// Handles to an objective recorded on a tape.
#[derive(Clone, Copy, Debug)]
pub struct TapeElbo {
    pub value: Var,
    pub recon: Var,
    pub kl: Var,
    pub beta: f64,
}

impl TapeElbo {
    pub fn estimate(&self, tape: &Tape) -> ElboEstimate {
        ElboEstimate { value: tape.value(self.value).item(), recon_term: tape.value(self.recon).item(), kl_term: tape.value(self.kl).item(), beta: self.beta }
    }
}

/// Everything an objective needs besides the parameters.
#[derive(Clone, Copy)]
pub struct ElboInputs<'a> {
    pub data: &'a Dataset,
    pub objective: Objective,
    /// Required for HPA (`knn_full` sets) and SPA (predecessor sets).
    pub sets: Option<&'a NeighbourSets>,
    pub batch: &'a MiniBatch,
    pub beta: f64,
    /// `N×L` standard normal draws.
    pub eps: &'a Matrix,
}

struct RowMap {
    rows: Vec<usize>,
    local: Vec<usize>,
}

impl RowMap {
    fn new(n: usize, rows: impl IntoIterator<Item = usize>) -> Self {
        let mut used = vec![false; n];
        for r in rows {
            used[r] = true;
        }
        let rows: Vec<usize> = (0..n).filter(|&r| used[r]).collect();
        let mut local = vec![usize::MAX; n];
        for (k, &r) in rows.iter().enumerate() {
            local[r] = k;
        }
        Self { rows, local }
    }

    fn entries(&self, indices: &[usize], channel: usize) -> Vec<(usize, usize)> {
        indices.iter().map(|&i| (self.local[i], channel)).collect()
    }
}

/// Records the selected objective on `tape` using the recorded `model`.
pub fn record_elbo(tape: &mut Tape, model: &TapeModel, params: &ModelParams, inp: ElboInputs<'_>) -> Result<TapeElbo> {
    let data = inp.data;
    let n = data.n();
    let l = params.latent_dim();
    inp.batch.validate(n)?;
    if inp.eps.shape() != (n, l) {
        return Err(Error::DimensionMismatch(format!("eps is {:?}, expected {n}x{l}", inp.eps.shape())));
    }
    if data.y.cols() != params.observed_dim() {
        return Err(Error::DimensionMismatch(format!("data has {} columns, encoder expects {}", data.y.cols(), params.observed_dim())));
    }
    let sets = match inp.objective {
        Objective::GpvaeHpa | Objective::GpvaeSpa => {
            let s = inp.sets.ok_or_else(|| Error::InvalidArgument("neighbour sets required".into()))?;
            if s.len() != n {
                return Err(Error::DimensionMismatch(format!("{} neighbour sets for {n} points", s.len())));
            }
            Some(s)
        }
        _ => None,
    };
    if inp.objective == Objective::GpvaeFull {
        let largest = data.groups.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
        if largest > FULL_GP_LIMIT {
            return Err(Error::PrecisionGuard { n: largest, limit: FULL_GP_LIMIT });
        }
    }
    let recon_idx = &inp.batch.recon;
    let kl_idx = &inp.batch.kl;

    let rowmap = match inp.objective {
        Objective::Vae => RowMap::new(n, recon_idx.iter().copied()),
        Objective::GpvaeFull => RowMap::new(n, 0..n),
        Objective::GpvaeHpa => {
            let s = sets.unwrap();
            RowMap::new(n, recon_idx.iter().copied().chain(recon_idx.iter().flat_map(|&i| s.get(i).indices.iter().copied())))
        }
        Objective::GpvaeSpa => {
            let s = sets.unwrap();
            RowMap::new(n, recon_idx.iter().copied().chain(kl_idx.iter().copied()).chain(kl_idx.iter().flat_map(|&j| s.get(j).indices.iter().copied())))
        }
    };

    let y_enc = tape.constant(data.y.select_rows(&rowmap.rows));
    let enc = encode_on_tape(tape, &model.encoder, y_enc)?;

    // Reconstruction over I.
    let local_i: Vec<usize> = recon_idx.iter().map(|&i| rowmap.local[i]).collect();
    let batch_enc = crate::nets::TapeEncoding { mean: tape.gather_rows(enc.mean, &local_i), variance: tape.gather_rows(enc.variance, &local_i) };
    let z = reparam_on_tape(tape, batch_enc, &inp.eps.select_rows(recon_idx));
    let lik = decode_on_tape(tape, &model.decoder, z, params.family)?;
    let ll_rows = log_likelihood_on_tape(tape, lik, &data.y.select_rows(recon_idx), &data.mask.select_rows(recon_idx));
    let recon_sum = tape.sum(ll_rows);
    let recon = tape.affine(recon_sum, n as f64 / recon_idx.len() as f64, 0.0);

    let kl = match inp.objective {
        Objective::Vae => {
            let sq = tape.square(batch_enc.mean);
            let lv = tape.log(batch_enc.variance);
            let a = tape.add(sq, batch_enc.variance);
            let t = tape.sub(a, lv);
            let s = tape.sum(t);
            let count = (recon_idx.len() * l) as f64;
            let scale = n as f64 / recon_idx.len() as f64;
            tape.affine(s, 0.5 * scale, -0.5 * count * scale)
        }
        Objective::GpvaeFull => {
            let mut terms = Vec::new();
            for w in data.groups.windows(2) {
                let idx: Vec<usize> = (w[0]..w[1]).collect();
                let xs = data.x.select_rows(&idx);
                let dist = pairwise_distances(&xs, &xs)?;
                for (c, &(ls, os)) in model.kernels.iter().enumerate() {
                    let entries = rowmap.entries(&idx, c);
                    let mu = tape.gather(enc.mean, &entries);
                    let s = tape.gather(enc.variance, &entries);
                    let k = tape.gram(params.prior.channels[c].kind, ls, os, dist.clone());
                    terms.push(tape.kl_diag_vs_full(mu, s, k)?);
                }
            }
            tape.add_scalars(&terms)
        }
        Objective::GpvaeHpa => {
            let s = sets.unwrap();
            let mut terms = Vec::with_capacity(recon_idx.len() * l);
            for &i in recon_idx {
                let idx = &s.get(i).indices;
                let xs = data.x.select_rows(idx);
                let dist = pairwise_distances(&xs, &xs)?;
                for (c, &(ls, os)) in model.kernels.iter().enumerate() {
                    let entries = rowmap.entries(idx, c);
                    let mu = tape.gather(enc.mean, &entries);
                    let sv = tape.gather(enc.variance, &entries);
                    let k = tape.gram(params.prior.channels[c].kind, ls, os, dist.clone());
                    terms.push(tape.kl_diag_vs_full(mu, sv, k)?);
                }
            }
            let total = tape.add_scalars(&terms);
            tape.affine(total, 1.0 / recon_idx.len() as f64, 0.0)
        }
        Objective::GpvaeSpa => {
            let s = sets.unwrap();
            let mut terms = Vec::with_capacity(kl_idx.len() * l);
            for &j in kl_idx {
                let nset = &s.get(j).indices;
                let mut joint: Vec<usize> = nset.clone();
                joint.push(j);
                let xs = data.x.select_rows(&joint);
                let dist = pairwise_distances(&xs, &xs)?;
                for (c, &(ls, os)) in model.kernels.iter().enumerate() {
                    let mu_n = tape.gather(enc.mean, &rowmap.entries(nset, c));
                    let s_n = tape.gather(enc.variance, &rowmap.entries(nset, c));
                    let mu_j = tape.gather(enc.mean, &[(rowmap.local[j], c)]);
                    let s_j = tape.gather(enc.variance, &[(rowmap.local[j], c)]);
                    let k = tape.gram(params.prior.channels[c].kind, ls, os, dist.clone());
                    terms.push(tape.kl_spa(mu_j, s_j, mu_n, s_n, k)?);
                }
            }
            let total = tape.add_scalars(&terms);
            tape.affine(total, n as f64 / kl_idx.len() as f64, 0.0)
        }
    };

    let neg_kl = tape.affine(kl, -inp.beta, 0.0);
    let value = tape.add(recon, neg_kl);
    Ok(TapeElbo { value, recon, kl, beta: inp.beta })
}

/// Evaluates an objective without recording gradients.
pub fn evaluate(params: &ModelParams, inp: ElboInputs<'_>) -> Result<ElboEstimate> {
    let mut tape = Tape::new();
    let model = params.record(&mut tape, false);
    Ok(record_elbo(&mut tape, &model, params, inp)?.estimate(&tape))
}

/// Objective value and its gradient for every parameter, in
/// [`ModelParams::named_tensors`] order.
pub fn value_and_grad(params: &ModelParams, inp: ElboInputs<'_>) -> Result<(ElboEstimate, Vec<Matrix>)> {
    let mut tape = Tape::new();
    let model = params.record(&mut tape, true);
    let elbo = record_elbo(&mut tape, &model, params, inp)?;
    let mut grads = tape.grad(elbo.value)?;
    let g = model.vars().into_iter().map(|v| grads.take(v)).collect::<Result<Vec<_>>>()?;
    Ok((elbo.estimate(&tape), g))
}

/// Exact full-batch GPVAE bound (one reparameterised sample per point).
pub fn elbo_full(data: &Dataset, params: &ModelParams, beta: f64, eps: &Matrix) -> Result<ElboEstimate> {
    let batch = MiniBatch::full(data.n());
    evaluate(params, ElboInputs { data, objective: Objective::GpvaeFull, sets: None, batch: &batch, beta, eps })
}

/// Hierarchical-prior estimator; `sets` from [`NeighbourSets::hpa`].
pub fn elbo_hpa(data: &Dataset, params: &ModelParams, sets: &NeighbourSets, batch: &MiniBatch, beta: f64, eps: &Matrix) -> Result<ElboEstimate> {
    evaluate(params, ElboInputs { data, objective: Objective::GpvaeHpa, sets: Some(sets), batch, beta, eps })
}

/// Sparse-precision estimator; `sets` from [`NeighbourSets::spa`].
pub fn elbo_spa(data: &Dataset, params: &ModelParams, sets: &NeighbourSets, batch: &MiniBatch, beta: f64, eps: &Matrix) -> Result<ElboEstimate> {
    evaluate(params, ElboInputs { data, objective: Objective::GpvaeSpa, sets: Some(sets), batch, beta, eps })
}

pub fn elbo_vae(data: &Dataset, params: &ModelParams, batch: &MiniBatch, beta: f64, eps: &Matrix) -> Result<ElboEstimate> {
    evaluate(params, ElboInputs { data, objective: Objective::Vae, sets: None, batch, beta, eps })
}
