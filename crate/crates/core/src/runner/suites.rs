//! Self-checks exposed through the command line: finite-difference gradients
//! for every objective and the full-batch recovery identities.

use rand::Rng;

use crate::data::{gen_gp_series, Dataset, Grid, SeriesDecoder};
use crate::elbo::{evaluate, value_and_grad, ElboInputs, MiniBatch, Objective};
use crate::error::Result;
use crate::kernels::{KernelKind, KernelSpec, LatentPrior};
use crate::neighbours::{NeighbourIndex, NeighbourSets};
use crate::nets::{Activation, LikelihoodFamily, MlpParams, ModelParams};
use crate::rng::{standard_normal_matrix, stream, Purpose};

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
pub const FD_ABS_TOL: f64 = 1e-8;

/// A smooth seeded model over `k` observations and `l` latent channels.
pub fn toy_model(seed: u64, k: usize, l: usize, hidden: usize, family: LikelihoodFamily) -> Result<ModelParams> {
    let mut rng = stream(seed, Purpose::Init, 0);
    let encoder = MlpParams::init(&[k, hidden, 2 * l], Activation::Tanh, &mut rng);
    let decoder = MlpParams::init(&[l, hidden, family.output_width(k)], Activation::Tanh, &mut rng);
    let kinds = [KernelKind::Rbf, KernelKind::Matern32, KernelKind::Cauchy];
    let channels = (0..l).map(|c| KernelSpec::new(kinds[c % 3], rng.random_range(1.0..1.5), rng.random_range(0.5..2.0))).collect::<Result<Vec<_>>>()?;
    ModelParams::new(encoder, decoder, LatentPrior::new(channels)?, family)
}

/// GP draws on a unit-spaced grid, observed through the identity map.
pub fn toy_series(seed: u64, n: usize, k: usize, noise: f64) -> Result<Dataset> {
    let prior = LatentPrior::new(vec![KernelSpec::new(KernelKind::Rbf, 1.5, 1.0)?; k])?;
    gen_gp_series(seed, &prior, SeriesDecoder::Identity, n, 1, Grid::Regular { spacing: 1.0 }, noise)
}

#[derive(Clone, Debug)]
pub struct GradCheck {
    pub objective: Objective,
    pub tensor: String,
    pub entries: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub pass: bool,
}

/// Central differences against the tape gradient for every parameter entry.
pub fn check_gradients(params: &ModelParams, inp: ElboInputs<'_>) -> Result<Vec<GradCheck>> {
    let (_, grads) = value_and_grad(params, inp)?;
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (t, name) in names.iter().enumerate() {
        let (mut max_abs, mut max_rel, mut pass) = (0.0f64, 0.0f64, true);
        let len = grads[t].len();
        for e in 0..len {
            let at = |delta: f64| -> Result<f64> {
                let mut p = params.clone();
                p.param_slices_mut()[t][e] += delta;
                Ok(evaluate(&p, inp)?.value)
            };
            let fd = (at(FD_STEP)? - at(-FD_STEP)?) / (2.0 * FD_STEP);
            let an = grads[t].as_slice()[e];
            let abs = (an - fd).abs();
            let rel = abs / an.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(if abs <= FD_ABS_TOL { 0.0 } else { rel });
            pass &= rel <= FD_REL_TOL || abs <= FD_ABS_TOL;
        }
        out.push(GradCheck { objective: inp.objective, tensor: name.clone(), entries: len, max_abs_err: max_abs, max_rel_err: max_rel, pass });
    }
    Ok(out)
}

/// Gradient checks of all four objectives on a 16-point toy problem.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<GradCheck>> {
    let n = 16;
    let data = toy_series(seed, n, 3, 0.05)?;
    let params = toy_model(seed, 3, 2, 5, LikelihoodFamily::Gaussian)?;
    let eps = standard_normal_matrix(&mut stream(seed, Purpose::Eps, 0), n, 2);
    let hpa = NeighbourSets::hpa(&NeighbourIndex::new(data.x.clone(), 4))?;
    let spa = NeighbourSets::spa(&NeighbourIndex::new(data.x.clone(), 3));
    let part = MiniBatch::new(vec![0, 3, 4, 7, 9, 12, 15]);
    let full = MiniBatch::full(n);
    let mut out = Vec::new();
    for (objective, sets, batch) in
        [(Objective::Vae, None, &part), (Objective::GpvaeHpa, Some(&hpa), &part), (Objective::GpvaeSpa, Some(&spa), &part), (Objective::GpvaeFull, None, &full)]
    {
        out.extend(check_gradients(&params, ElboInputs { data: &data, objective, sets, batch, beta: 0.7, eps: &eps })?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct IdentityCheck {
    pub name: &'static str,
    pub value: f64,
    pub reference: f64,
    pub tol: f64,
    /// Relative (`true`) or absolute tolerance.
    pub relative: bool,
    pub pass: bool,
}

impl IdentityCheck {
    fn new(name: &'static str, value: f64, reference: f64, tol: f64, relative: bool) -> Self {
        let err = (value - reference).abs();
        let bound = if relative { tol * reference.abs().max(f64::MIN_POSITIVE) } else { tol };
        Self { name, value, reference, tol, relative, pass: err <= bound }
    }
}

/// The full-batch recovery identities on a 32-point series.
pub fn recovery_suite(seed: u64) -> Result<Vec<IdentityCheck>> {
    let n = 32;
    let data = toy_series(seed, n, 2, 0.01)?;
    let params = toy_model(seed, 2, 2, 16, LikelihoodFamily::Gaussian)?;
    let eps = standard_normal_matrix(&mut stream(seed, Purpose::Eps, 0), n, 2);
    let full = MiniBatch::full(n);
    let run =
        |p: &ModelParams, objective, sets: Option<&NeighbourSets>| evaluate(p, ElboInputs { data: &data, objective, sets, batch: &full, beta: 1.0, eps: &eps });

    let exact = run(&params, Objective::GpvaeFull, None)?;
    let hpa = run(&params, Objective::GpvaeHpa, Some(&NeighbourSets::hpa(&NeighbourIndex::new(data.x.clone(), n))?))?;
    let spa = run(&params, Objective::GpvaeSpa, Some(&NeighbourSets::spa(&NeighbourIndex::new(data.x.clone(), n))))?;

    let mut unit = params.clone();
    for k in unit.prior.channels.iter_mut() {
        *k = KernelSpec::new(KernelKind::Rbf, k.lengthscale(), 1.0)?;
    }
    let spa0 = run(&unit, Objective::GpvaeSpa, Some(&NeighbourSets::spa(&NeighbourIndex::new(data.x.clone(), 0))))?;
    let vae = run(&unit, Objective::Vae, None)?;

    Ok(vec![
        IdentityCheck::new("hpa_full_kl", hpa.kl_term, exact.kl_term, 1e-8, true),
        IdentityCheck::new("hpa_full_recon", hpa.recon_term, exact.recon_term, 1e-12, false),
        IdentityCheck::new("spa_full_kl", spa.kl_term, exact.kl_term, 1e-8, true),
        IdentityCheck::new("spa_h0_vae_kl", spa0.kl_term, vae.kl_term, 1e-12, false),
        IdentityCheck::new("spa_h0_vae_recon", spa0.recon_term, vae.recon_term, 1e-12, false),
    ])
}
