//! Predictive posterior at new inputs and evaluation metrics.

use rand::Rng;

use crate::elbo::closed_form::spa_conditional;
use crate::error::{Error, Result};
use crate::kernels::LatentPrior;
use crate::linalg::Matrix;
use crate::neighbours::NeighbourIndex;
use crate::nets::{decode, log_likelihood, EncoderOutput, LikelihoodFamily, LikelihoodParams, MlpParams};
use crate::rng::standard_normal;

pub const PREDICTIVE_VARIANCE_MIN: f64 = 1e-12;
pub const DEFAULT_EVAL_SAMPLES: usize = 20;
pub const PROJECTION_PIVOT_TOL: f64 = 1e-10;

/// Independent Gaussian per latent channel at one query input.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveGaussian {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

/// `q(z_*)` from the conditioning rows `nset` of `x`: `bᵀμ_n` and
/// `σ_p + bᵀ diag(s_n) b` per channel.
pub fn latent_predictive_from_set(x_star: &[f64], x: &Matrix, nset: &[usize], prior: &LatentPrior, enc: &EncoderOutput) -> Result<PredictiveGaussian> {
    if enc.mean.rows() != x.rows() || enc.mean.cols() != prior.latent_dim() {
        return Err(Error::DimensionMismatch(format!("encoder outputs {:?} for {} inputs and {} channels", enc.mean.shape(), x.rows(), prior.latent_dim())));
    }
    let mut mean = Vec::with_capacity(prior.latent_dim());
    let mut variance = Vec::with_capacity(prior.latent_dim());
    for (c, k) in prior.channels.iter().enumerate() {
        let cond = spa_conditional(k, x, x_star, nset)?;
        let mut m = 0.0;
        let mut v = cond.sigma_p;
        for (b, &i) in cond.b.iter().zip(nset) {
            m += b * enc.mean[(i, c)];
            v += b * b * enc.variance[(i, c)];
        }
        mean.push(m);
        variance.push(v.max(PREDICTIVE_VARIANCE_MIN));
    }
    Ok(PredictiveGaussian { mean, variance })
}

/// Conditions on the `H` nearest training inputs of `x_star`.
pub fn latent_predictive(x_star: &[f64], index: &NeighbourIndex, prior: &LatentPrior, enc: &EncoderOutput) -> Result<PredictiveGaussian> {
    let set = index.knn_query(x_star)?;
    latent_predictive_from_set(x_star, index.x(), &set.indices, prior, enc)
}

/// `S` latent draws from `pred`, as an `S × L` matrix.
pub fn sample_latent(pred: &PredictiveGaussian, samples: usize, rng: &mut impl Rng) -> Matrix {
    let l = pred.mean.len();
    Matrix::from_fn(samples, l, |_, c| pred.mean[c] + pred.variance[c].sqrt() * standard_normal(rng))
}

/// `S` decoded draws, one `1 × K` likelihood each.
pub fn posterior_predict(
    pred: &PredictiveGaussian,
    samples: usize,
    theta: &MlpParams,
    family: LikelihoodFamily,
    rng: &mut impl Rng,
) -> Result<Vec<LikelihoodParams>> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let z = sample_latent(pred, samples, rng);
    let all = decode(theta, &z, family)?;
    let rows = |m: &Matrix, s: usize| m.select_rows(&[s]);
    Ok((0..samples)
        .map(|s| match &all {
            LikelihoodParams::Gaussian { mean, variance } => LikelihoodParams::Gaussian { mean: rows(mean, s), variance: rows(variance, s) },
            LikelihoodParams::Bernoulli { probability } => LikelihoodParams::Bernoulli { probability: rows(probability, s) },
        })
        .collect())
}

/// `log Σ exp(v)` with a max shift.
pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `log S − logsumexp_s ℓ_s` for per-sample log-likelihoods `ℓ_s`.
pub fn nll_from_log_likelihoods(lls: &[f64]) -> f64 {
    (lls.len() as f64).ln() - logsumexp(lls)
}

/// Monte Carlo NLL of `y` over the entries selected by `mask`.
pub fn nll_eval(y: &Matrix, mask: &Matrix, samples: &[LikelihoodParams]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let lls = samples.iter().map(|p| Ok(log_likelihood(p, y, mask)?.iter().sum())).collect::<Result<Vec<f64>>>()?;
    Ok(nll_from_log_likelihoods(&lls))
}

/// Root mean squared error over entries where `mask` is 1.
pub fn rmse_eval(pred: &Matrix, truth: &Matrix, mask: &Matrix) -> Result<f64> {
    if pred.shape() != truth.shape() || mask.shape() != truth.shape() {
        return Err(Error::DimensionMismatch(format!("prediction {:?}, truth {:?}, mask {:?}", pred.shape(), truth.shape(), mask.shape())));
    }
    let (mut se, mut count) = (0.0, 0usize);
    for ((p, t), m) in pred.as_slice().iter().zip(truth.as_slice()).zip(mask.as_slice()) {
        if *m != 0.0 {
            se += (p - t) * (p - t);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok((se / count as f64).sqrt())
}

/// Least-squares linear map (no intercept) from `latent` onto `truth`.
/// Returns the projected trajectory and the RMSE of the residual.
pub fn trajectory_projection(latent: &Matrix, truth: &Matrix) -> Result<(Matrix, f64)> {
    let (t, p) = latent.shape();
    if truth.rows() != t {
        return Err(Error::DimensionMismatch(format!("latent has {t} rows, truth {}", truth.rows())));
    }
    if t < 2 || t < p || p == 0 {
        return Err(Error::InvalidArgument(format!("cannot project {t} points of width {p}")));
    }
    let q = truth.cols();
    let mut g = latent.transpose().matmul(latent);
    let mut rhs = latent.transpose().matmul(truth);
    let scale = g.max_abs();
    // Gauss-Jordan with partial pivoting on the normal equations.
    for col in 0..p {
        let piv = (col..p).max_by(|&a, &b| g[(a, col)].abs().total_cmp(&g[(b, col)].abs())).unwrap();
        if !(g[(piv, col)].abs() > PROJECTION_PIVOT_TOL * scale) {
            return Err(Error::SingularProjection);
        }
        for c in 0..p {
            let tmp = g[(col, c)];
            g[(col, c)] = g[(piv, c)];
            g[(piv, c)] = tmp;
        }
        for c in 0..q {
            let tmp = rhs[(col, c)];
            rhs[(col, c)] = rhs[(piv, c)];
            rhs[(piv, c)] = tmp;
        }
        let d = g[(col, col)];
        for r in 0..p {
            if r == col {
                continue;
            }
            let f = g[(r, col)] / d;
            if f == 0.0 {
                continue;
            }
            for c in 0..p {
                g[(r, c)] -= f * g[(col, c)];
            }
            for c in 0..q {
                rhs[(r, c)] -= f * rhs[(col, c)];
            }
        }
    }
    let a = Matrix::from_fn(p, q, |r, c| rhs[(r, c)] / g[(r, r)]);
    let projected = latent.matmul(&a);
    let mse = projected.as_slice().iter().zip(truth.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / (t * q) as f64;
    Ok((projected, mse.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{KernelKind, KernelSpec};
    use crate::rng::{standard_normal_matrix, stream, Purpose};

    fn prior(kind: KernelKind, ls: f64, os: f64) -> LatentPrior {
        LatentPrior::new(vec![KernelSpec::new(kind, ls, os).unwrap()]).unwrap()
    }

    #[test]
    fn interpolates_a_training_point() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [2.5]]);
        let p = prior(KernelKind::Rbf, 1.0, 1.0);
        let enc = EncoderOutput { mean: Matrix::column(&[0.3, -1.2, 0.7]), variance: Matrix::column(&[0.1, 0.2, 0.05]) };
        let idx = NeighbourIndex::new(x, 1);
        let q = latent_predictive(&[1.0], &idx, &p, &enc).unwrap();
        assert!((q.mean[0] + 1.2).abs() < 1e-10);
        assert!((q.variance[0] - 0.2).abs() < 2e-6);
    }

    #[test]
    fn single_neighbour_closed_form() {
        let x = Matrix::from_rows(&[[0.0], [3.0]]);
        let p = prior(KernelKind::Matern32, 1.3, 0.8);
        let enc = EncoderOutput { mean: Matrix::column(&[0.9, -2.0]), variance: Matrix::column(&[0.4, 0.1]) };
        let idx = NeighbourIndex::new(x, 1);
        let q = latent_predictive(&[0.7], &idx, &p, &enc).unwrap();
        let k = &p.channels[0];
        let (kss, ks1, k11) = (k.of_distance(0.0), k.of_distance(0.7), k.of_distance(0.0));
        let b = ks1 / k11;
        assert!((q.mean[0] - b * 0.9).abs() < 1e-12);
        assert!((q.variance[0] - (kss - ks1 * ks1 / k11 + b * b * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn two_stage_sampler_agrees() {
        let mut rng = stream(21, Purpose::EvalSample, 0);
        let x = standard_normal_matrix(&mut rng, 12, 2);
        let p = prior(KernelKind::Rbf, 1.1, 1.4);
        let enc = EncoderOutput { mean: standard_normal_matrix(&mut rng, 12, 1), variance: Matrix::from_fn(12, 1, |_, _| rng.random_range(0.05..0.5)) };
        let idx = NeighbourIndex::new(x.clone(), 4);
        let xs = [0.2, -0.3];
        let q = latent_predictive(&xs, &idx, &p, &enc).unwrap();
        let set = idx.knn_query(&xs).unwrap();
        let cond = spa_conditional(&p.channels[0], &x, &xs, &set.indices).unwrap();
        let draws = 1_000_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let mut m = 0.0;
            for (b, &i) in cond.b.iter().zip(&set.indices) {
                m += b * (enc.mean[(i, 0)] + enc.variance[(i, 0)].sqrt() * standard_normal(&mut rng));
            }
            let z = m + cond.sigma_p.sqrt() * standard_normal(&mut rng);
            s1 += z;
            s2 += z * z;
        }
        let mean = s1 / draws as f64;
        let var = s2 / draws as f64 - mean * mean;
        let se_mean = (q.variance[0] / draws as f64).sqrt();
        let se_var = q.variance[0] * (2.0 / draws as f64).sqrt();
        assert!((mean - q.mean[0]).abs() < 3.0 * se_mean);
        assert!((var - q.variance[0]).abs() < 3.0 * se_var);
        assert!(q.variance[0] >= cond.sigma_p);
    }

    #[test]
    fn posterior_predict_draws() {
        let p = PredictiveGaussian { mean: vec![0.5, -0.5], variance: vec![1e-12, 1e-12] };
        let theta = MlpParams::init(&[2, 3, 4], crate::nets::Activation::Tanh, &mut stream(0, Purpose::Init, 0));
        let draws = posterior_predict(&p, 5, &theta, LikelihoodFamily::Bernoulli, &mut stream(0, Purpose::Predict, 0)).unwrap();
        for d in &draws {
            let a = d.mean().as_slice();
            let b = draws[0].mean().as_slice();
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-5));
            assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
        }
        let one = |s| posterior_predict(&p, 1, &theta, LikelihoodFamily::Bernoulli, &mut stream(s, Purpose::Predict, 0)).unwrap();
        assert_eq!(one(3), one(3));
        assert!(posterior_predict(&p, 0, &theta, LikelihoodFamily::Bernoulli, &mut stream(0, Purpose::Predict, 0)).is_err());
    }

    #[test]
    fn nll_cases() {
        assert!((nll_from_log_likelihoods(&[-4.2]) - 4.2).abs() < 1e-15);
        assert!((nll_from_log_likelihoods(&[-7.0; 6]) - 7.0).abs() < 1e-12);
        let expected = 3f64.ln() - ((-1f64).exp() + (-2f64).exp() + (-3f64).exp()).ln();
        let got = nll_from_log_likelihoods(&[-1.0, -2.0, -3.0]);
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 1.691006).abs() < 1e-6);
        assert!((nll_from_log_likelihoods(&[-3.0, -1.0, -2.0]) - got).abs() < 1e-12);
        // Large magnitudes stay finite thanks to the shift.
        assert!(nll_from_log_likelihoods(&[-1e4, -1e4 - 1.0]).is_finite());
    }

    #[test]
    fn nll_eval_uses_masked_entries() {
        let y = Matrix::from_rows(&[[1.0, 0.0]]);
        let mask = Matrix::from_rows(&[[1.0, 0.0]]);
        let s = vec![LikelihoodParams::Bernoulli { probability: Matrix::from_rows(&[[0.25, 0.9]]) }];
        assert!((nll_eval(&y, &mask, &s).unwrap() + 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn rmse_cases() {
        let t = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let ones = Matrix::filled(2, 2, 1.0);
        assert_eq!(rmse_eval(&t, &t, &ones).unwrap(), 0.0);
        assert!((rmse_eval(&t.map(|v| v - 0.7), &t, &ones).unwrap() - 0.7).abs() < 1e-12);
        assert!(matches!(rmse_eval(&t, &t, &Matrix::zeros(2, 2)), Err(Error::EmptyMask)));

        let mut rng = stream(2, Purpose::Noise, 0);
        let a = standard_normal_matrix(&mut rng, 30, 7);
        let b = standard_normal_matrix(&mut rng, 30, 7);
        let m = Matrix::from_fn(30, 7, |_, _| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 });
        let mut diffs = Vec::new();
        for i in 0..30 {
            for j in 0..7 {
                if m[(i, j)] == 1.0 {
                    diffs.push(a[(i, j)] - b[(i, j)]);
                }
            }
        }
        let oracle = (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt();
        assert!((rmse_eval(&a, &b, &m).unwrap() - oracle).abs() < 1e-12);
    }

    /// Householder QR least squares, used as an independent oracle.
    fn qr_lstsq(a: &Matrix, b: &Matrix) -> Matrix {
        let (m, n) = a.shape();
        let mut r = a.clone();
        let mut qtb = b.clone();
        for k in 0..n {
            let norm = (k..m).map(|i| r[(i, k)].powi(2)).sum::<f64>().sqrt();
            let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = (k..m).map(|i| r[(i, k)]).collect();
            v[0] -= alpha;
            let vn = v.iter().map(|x| x * x).sum::<f64>();
            if vn == 0.0 {
                continue;
            }
            let reflect = |mat: &mut Matrix| {
                for c in 0..mat.cols() {
                    let dot: f64 = (k..m).map(|i| v[i - k] * mat[(i, c)]).sum();
                    for i in k..m {
                        mat[(i, c)] -= 2.0 * v[i - k] * dot / vn;
                    }
                }
            };
            reflect(&mut r);
            reflect(&mut qtb);
        }
        let mut x = Matrix::zeros(n, b.cols());
        for c in 0..b.cols() {
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|j| r[(i, j)] * x[(j, c)]).sum();
                x[(i, c)] = (qtb[(i, c)] - s) / r[(i, i)];
            }
        }
        x
    }

    #[test]
    fn projection_cases() {
        let mut rng = stream(8, Purpose::Noise, 1);
        let truth = standard_normal_matrix(&mut rng, 30, 2);
        let (p, e) = trajectory_projection(&truth, &truth).unwrap();
        assert!(e < 1e-12);
        assert!(p.zip_map(&truth, |a, b| a - b).max_abs() < 1e-12);

        let r = Matrix::from_rows(&[[2.0, -0.3], [0.7, 1.1]]);
        let (_, e) = trajectory_projection(&truth.matmul(&r), &truth).unwrap();
        assert!(e < 1e-10);

        let latent = standard_normal_matrix(&mut rng, 30, 2);
        let (proj, e) = trajectory_projection(&latent, &truth).unwrap();
        let oracle = latent.matmul(&qr_lstsq(&latent, &truth));
        assert!(proj.zip_map(&oracle, |a, b| a - b).max_abs() < 1e-9);
        let oracle_rmse = (oracle.zip_map(&truth, |a, b| (a - b).powi(2)).sum() / 60.0).sqrt();
        assert!((e - oracle_rmse).abs() < 1e-9);
        let (_, e2) = trajectory_projection(&latent.matmul(&r), &truth).unwrap();
        assert!((e - e2).abs() < 1e-9);

        let rank1 = Matrix::from_fn(30, 2, |i, c| (i as f64) * (c as f64 + 1.0));
        assert!(matches!(trajectory_projection(&rank1, &truth), Err(Error::SingularProjection)));
    }
}
