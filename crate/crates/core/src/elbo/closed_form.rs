//! Closed-form Gaussian quantities shared by the objectives, the tape
//! adjoints and the predictive posterior. All priors have zero mean.

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::linalg::{cholesky_default, CholeskyFactor, Matrix};
use crate::neighbours::NeighbourSets;

/// Conditional variances below `1e-6 · k(x, x)` are raised to that floor;
/// exact duplicates of a conditioning location otherwise give a zero variance.
pub const CONDITIONAL_VARIANCE_FLOOR_REL: f64 = 1e-6;

/// Pieces of `KL[N(μ, diag s) ‖ N(0, K)]` reused by the gradient.
#[derive(Clone, Debug)]
pub struct DiagFullKl {
    pub value: f64,
    /// `K⁻¹ μ`
    pub alpha: Vec<f64>,
    pub kinv: Matrix,
    pub jitter: f64,
}

pub fn kl_diag_vs_full_parts(mu: &[f64], s: &[f64], k: &Matrix) -> Result<DiagFullKl> {
    let h = mu.len();
    if s.len() != h || k.rows() != h || k.cols() != h {
        return Err(Error::DimensionMismatch(format!("KL inputs: mean {h}, variance {}, covariance {}x{}", s.len(), k.rows(), k.cols())));
    }
    let f = cholesky_default(k)?;
    let alpha = f.solve_vec(mu);
    let kinv = f.inverse();
    let quad: f64 = mu.iter().zip(&alpha).map(|(m, a)| m * a).sum();
    let trace: f64 = (0..h).map(|i| kinv[(i, i)] * s[i]).sum();
    let log_s: f64 = s.iter().map(|v| v.ln()).sum();
    let value = 0.5 * (quad + trace + f.logdet() - log_s - h as f64);
    Ok(DiagFullKl { value, alpha, kinv, jitter: f.jitter_used() })
}

/// `KL[N(μ_q, diag s_q) ‖ N(0, K_p)]` via one Cholesky of `K_p`.
pub fn kl_gaussian_diag_vs_full(mu_q: &[f64], s_q: &[f64], k_p: &Matrix) -> Result<f64> {
    Ok(kl_diag_vs_full_parts(mu_q, s_q, k_p)?.value)
}

/// `KL[N(μ, s) ‖ N(0, 1)]` for one coordinate.
pub fn kl_standard_normal(mu: f64, s: f64) -> f64 {
    0.5 * (mu * mu + s - s.ln() - 1.0)
}

/// Linear-Gaussian conditional `p(z_j | Z_n) = N(bᵀ Z_n, σ_p)`.
#[derive(Clone, Debug)]
pub struct GaussianConditional {
    pub b: Vec<f64>,
    pub sigma_p: f64,
    /// True when `σ_p` was raised to the floor.
    pub floored: bool,
    pub factor: Option<CholeskyFactor>,
}

/// Conditional moments from a joint covariance over `[n(j)…, j]` (target last).
pub fn conditional_from_joint(k: &Matrix) -> Result<GaussianConditional> {
    let h = k.rows() - 1;
    let kjj = k[(h, h)];
    let floor = CONDITIONAL_VARIANCE_FLOOR_REL * kjj;
    if h == 0 {
        let floored = kjj < floor;
        return Ok(GaussianConditional { b: Vec::new(), sigma_p: kjj.max(floor), floored, factor: None });
    }
    let knn = Matrix::from_fn(h, h, |r, c| k[(r, c)]);
    let knj: Vec<f64> = (0..h).map(|r| k[(r, h)]).collect();
    let f = cholesky_default(&knn)?;
    let b = f.solve_vec(&knj);
    let raw = kjj - knj.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>();
    let floored = !(raw >= floor);
    Ok(GaussianConditional { b, sigma_p: if floored { floor } else { raw }, floored, factor: Some(f) })
}

/// `b = K_nn⁻¹ k_nj` and `σ_p = k_jj − k_jn b` for a target location given
/// the rows `nset` of `x`. An empty set gives the marginal prior.
pub fn spa_conditional(kernel: &KernelSpec, x: &Matrix, target: &[f64], nset: &[usize]) -> Result<GaussianConditional> {
    if target.len() != x.cols() {
        return Err(Error::DimensionMismatch(format!("target has {} coordinates, inputs have {}", target.len(), x.cols())));
    }
    let mut pts = x.select_rows(nset).into_vec();
    pts.extend_from_slice(target);
    let joint = Matrix::from_vec(nset.len() + 1, x.cols(), pts)?;
    conditional_from_joint(&kernel.eval(&joint, &joint)?)
}

/// `E_{q(Z_n)} KL[N(μ_j, s_j) ‖ N(bᵀZ_n, σ_p)]` with `q(Z_n) = N(μ_n, diag s_n)`.
pub fn kl_spa_expected(mu_qj: f64, s_qj: f64, mu_qn: &[f64], s_qn: &[f64], b: &[f64], sigma_p: f64) -> f64 {
    let quad: f64 = b.iter().zip(s_qn).map(|(bi, si)| bi * bi * si).sum();
    let d = b.iter().zip(mu_qn).map(|(bi, mi)| bi * mi).sum::<f64>() - mu_qj;
    0.5 * ((quad + d * d) / sigma_p + s_qj / sigma_p + sigma_p.ln() - s_qj.ln() - 1.0)
}

pub fn normal_logpdf(z: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((z - mean) * (z - mean) / var + (2.0 * std::f64::consts::PI * var).ln())
}

/// `Σ_j log N(z_j | b_jᵀ Z_{n(j)}, σ_{p,j})` for one latent channel.
pub fn spa_prior_logdensity(kernel: &KernelSpec, x: &Matrix, z: &[f64], sets: &NeighbourSets) -> Result<f64> {
    if z.len() != x.rows() || sets.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!("{} latents, {} inputs, {} sets", z.len(), x.rows(), sets.len())));
    }
    let mut total = 0.0;
    for j in 0..x.rows() {
        let nset = &sets.get(j).indices;
        let cond = spa_conditional(kernel, x, x.row(j), nset)?;
        let mean: f64 = cond.b.iter().zip(nset).map(|(b, &n)| b * z[n]).sum();
        total += normal_logpdf(z[j], mean, cond.sigma_p);
    }
    Ok(total)
}
