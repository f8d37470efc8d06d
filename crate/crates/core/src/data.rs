//! Datasets, synthetic generators, missingness masks and the NNTS tensor
//! file format.
//!
//! NNTS layout (little-endian): `b"NNTS"`, `u32` version (1), `u32` tensor
//! count, then per tensor a `u32` name length, the UTF-8 name, a `u32` rank,
//! `rank × u64` dimensions and a row-major `f64` payload.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::elbo::FULL_GP_LIMIT;
use crate::error::{Error, Result};
use crate::kernels::{KernelKind, KernelSpec, LatentPrior};
use crate::linalg::{cholesky_default, Matrix};
use crate::nets::{decode, LikelihoodFamily, MlpParams};
use crate::rng::{standard_normal_matrix, stream, Purpose};

pub const NNTS_MAGIC: &[u8; 4] = b"NNTS";
pub const NNTS_VERSION: u32 = 1;

pub const BALL_FRAMES: usize = 30;
pub const BALL_SIDE: usize = 32;
pub const BALL_RADIUS: f64 = 2.0;
/// Pixels per GP standard deviation; ±2.5 sd lands on `[6, 26]`.
pub const BALL_SCALE: f64 = 4.0;

/// An n-dimensional tensor as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch(format!("shape {shape:?} holds {n} values, got {}", data.len())));
        }
        Ok(Self { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    /// Rank 0, 1 or 2 as a matrix; vectors become columns.
    pub fn to_matrix(&self) -> Result<Matrix> {
        let (r, c) = match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (*n, 1),
            [r, c] => (*r, *c),
            s => return Err(Error::ShapeMismatch(format!("rank-{} tensor is not a matrix", s.len()))),
        };
        Matrix::from_vec(r, c, self.data.clone())
    }
}

impl From<&Matrix> for Tensor {
    fn from(m: &Matrix) -> Self {
        Self { shape: vec![m.rows(), m.cols()], data: m.as_slice().to_vec() }
    }
}

impl From<Matrix> for Tensor {
    fn from(m: Matrix) -> Self {
        Self { shape: vec![m.rows(), m.cols()], data: m.into_vec() }
    }
}

pub fn encode_tensors(tensors: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(NNTS_MAGIC);
    out.extend_from_slice(&NNTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::TruncatedFile)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| Error::BadMagic)? != NNTS_MAGIC {
        return Err(Error::BadMagic);
    }
    let version = r.u32()?;
    if version != NNTS_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let count = r.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::InvalidArgument("tensor name is not UTF-8".into()))?.to_owned();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(16));
        for _ in 0..rank {
            shape.push(usize::try_from(r.u64()?).map_err(|_| Error::TruncatedFile)?);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or(Error::TruncatedFile)?;
        let payload = r.take(n.checked_mul(8).ok_or(Error::TruncatedFile)?)?;
        let data = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        out.push((name, Tensor { shape, data }));
    }
    Ok(out)
}

pub fn write_tensors(path: impl AsRef<Path>, tensors: &[(String, Tensor)]) -> Result<()> {
    std::fs::write(path, encode_tensors(tensors))?;
    Ok(())
}

pub fn read_tensors(path: impl AsRef<Path>) -> Result<Vec<(String, Tensor)>> {
    decode_tensors(&std::fs::read(path)?)
}

/// Name-keyed view used by loaders.
pub fn tensor_map(tensors: Vec<(String, Tensor)>) -> BTreeMap<String, Tensor> {
    tensors.into_iter().collect()
}

pub fn take_matrix(map: &BTreeMap<String, Tensor>, name: &str) -> Result<Matrix> {
    map.get(name).ok_or_else(|| Error::MissingTensor(name.to_owned()))?.to_matrix()
}

/// Observations `Y` at auxiliary inputs `X`, with a `1 = observed` mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
    pub mask: Matrix,
    /// Complete observations, kept for scoring held-out entries.
    pub truth: Option<Matrix>,
    /// Offsets `[0, …, N]` of independent sequences.
    pub groups: Vec<usize>,
    /// Ground-truth ball centres (moving-ball data).
    pub trajectory: Option<Matrix>,
    /// Ground-truth latent draws (synthetic GP data).
    pub latent: Option<Matrix>,
}

impl Dataset {
    /// A single-sequence, fully observed dataset.
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        let mask = Matrix::filled(y.rows(), y.cols(), 1.0);
        let n = y.rows();
        let d = Self { x, y, mask, truth: None, groups: vec![0, n], trajectory: None, latent: None };
        d.validate()?;
        Ok(d)
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.rows();
        if n == 0 {
            return Err(Error::InvalidArgument("dataset has no rows".into()));
        }
        if self.x.rows() != n {
            return Err(Error::ShapeMismatch(format!("X has {} rows, Y has {n}", self.x.rows())));
        }
        if self.mask.shape() != self.y.shape() {
            return Err(Error::ShapeMismatch(format!("mask {:?} vs Y {:?}", self.mask.shape(), self.y.shape())));
        }
        if let Some(t) = &self.truth {
            if t.shape() != self.y.shape() {
                return Err(Error::ShapeMismatch(format!("truth {:?} vs Y {:?}", t.shape(), self.y.shape())));
            }
        }
        if self.groups.first() != Some(&0) || self.groups.last() != Some(&n) || self.groups.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("group offsets {:?} do not partition {n} rows", self.groups)));
        }
        for (m, y) in self.mask.as_slice().iter().zip(self.y.as_slice()) {
            if *m != 0.0 && *m != 1.0 {
                return Err(Error::InvalidArgument("mask must be binary".into()));
            }
            if *m == 0.0 && *y != 0.0 {
                return Err(Error::InvalidArgument("masked-out entries of Y must be zero".into()));
            }
        }
        if !self.x.is_finite() || !self.y.is_finite() {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(())
    }

    /// Entries held out for scoring: masked-out entries when a truth is
    /// present, otherwise every entry.
    pub fn eval_mask(&self) -> Matrix {
        match &self.truth {
            Some(_) if self.mask.as_slice().contains(&0.0) => self.mask.map(|m| 1.0 - m),
            _ => Matrix::filled(self.y.rows(), self.y.cols(), 1.0),
        }
    }

    /// Values the eval mask is scored against.
    pub fn eval_target(&self) -> &Matrix {
        self.truth.as_ref().unwrap_or(&self.y)
    }

    pub fn to_tensors(&self) -> Vec<(String, Tensor)> {
        let mut t = vec![
            ("X".to_owned(), Tensor::from(&self.x)),
            ("Y".to_owned(), Tensor::from(&self.y)),
            ("mask".to_owned(), Tensor::from(&self.mask)),
            ("truth".to_owned(), Tensor::from(self.truth.as_ref().unwrap_or(&self.y))),
            ("groups".to_owned(), Tensor::vector(self.groups.iter().map(|&g| g as f64).collect())),
        ];
        if let Some(tr) = &self.trajectory {
            t.push(("trajectory".to_owned(), Tensor::from(tr)));
        }
        if let Some(z) = &self.latent {
            t.push(("latent".to_owned(), Tensor::from(z)));
        }
        t
    }

    pub fn from_tensors(tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let map = tensor_map(tensors);
        let y = take_matrix(&map, "Y")?;
        let groups = match map.get("groups") {
            Some(g) => g.data.iter().map(|&v| v as usize).collect(),
            None => vec![0, y.rows()],
        };
        let truth = map.get("truth").map(Tensor::to_matrix).transpose()?;
        let d = Self {
            x: take_matrix(&map, "X")?,
            mask: take_matrix(&map, "mask")?,
            truth: truth.filter(|t| t != &y),
            y,
            groups,
            trajectory: map.get("trajectory").map(Tensor::to_matrix).transpose()?,
            latent: map.get("latent").map(Tensor::to_matrix).transpose()?,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensors(path, &self.to_tensors())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_tensors(read_tensors(path)?)
    }
}

/// One moving-ball video.
#[derive(Clone, Debug, PartialEq)]
pub struct BallVideo {
    /// `30 × 1024`, one flattened 32×32 frame per row.
    pub frames: Matrix,
    /// `30 × 2` centre in pixel coordinates (column, row).
    pub trajectory: Matrix,
}

/// Maps a GP path value to a pixel coordinate.
pub fn path_to_pixel(v: f64) -> f64 {
    (BALL_SIDE as f64 / 2.0 + BALL_SCALE * v).clamp(0.0, BALL_SIDE as f64)
}

/// Hard disc of radius 2 around `(cx, cy)`, sampled at pixel centres.
pub fn render_ball(cx: f64, cy: f64) -> Vec<f64> {
    let mut frame = vec![0.0; BALL_SIDE * BALL_SIDE];
    for r in 0..BALL_SIDE {
        for c in 0..BALL_SIDE {
            let dx = c as f64 + 0.5 - cx;
            let dy = r as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= BALL_RADIUS * BALL_RADIUS {
                frame[r * BALL_SIDE + c] = 1.0;
            }
        }
    }
    frame
}

/// Unit-variance RBF paths over timestamps `1..=30`, one video per stream.
pub fn gen_moving_ball(seed: u64, n_videos: usize, lengthscale: f64) -> Result<Vec<BallVideo>> {
    let kernel = KernelSpec::new(KernelKind::Rbf, lengthscale, 1.0)?;
    let t = Matrix::from_fn(BALL_FRAMES, 1, |i, _| (i + 1) as f64);
    let chol = cholesky_default(&kernel.eval(&t, &t)?)?;
    let videos = (0..n_videos)
        .map(|v| {
            let mut rng = stream(seed, Purpose::BallPath, v as u64);
            let eps = standard_normal_matrix(&mut rng, BALL_FRAMES, 2);
            let path = chol.l().matmul(&eps);
            let trajectory = path.map(path_to_pixel);
            let mut frames = Vec::with_capacity(BALL_FRAMES * BALL_SIDE * BALL_SIDE);
            for f in 0..BALL_FRAMES {
                frames.extend(render_ball(trajectory[(f, 0)], trajectory[(f, 1)]));
            }
            BallVideo { frames: Matrix::from_vec(BALL_FRAMES, BALL_SIDE * BALL_SIDE, frames).unwrap(), trajectory }
        })
        .collect();
    Ok(videos)
}

/// Stacks videos into one dataset with frame timestamps as inputs.
pub fn ball_dataset(videos: &[BallVideo]) -> Result<Dataset> {
    if videos.is_empty() {
        return Err(Error::InvalidArgument("no videos".into()));
    }
    let n = videos.len() * BALL_FRAMES;
    let x = Matrix::from_fn(n, 1, |i, _| (i % BALL_FRAMES + 1) as f64);
    let mut y = Vec::with_capacity(n * BALL_SIDE * BALL_SIDE);
    let mut traj = Vec::with_capacity(n * 2);
    for v in videos {
        y.extend_from_slice(v.frames.as_slice());
        traj.extend_from_slice(v.trajectory.as_slice());
    }
    let mut d = Dataset::new(x, Matrix::from_vec(n, BALL_SIDE * BALL_SIDE, y)?)?;
    d.groups = (0..=videos.len()).map(|v| v * BALL_FRAMES).collect();
    d.trajectory = Some(Matrix::from_vec(n, 2, traj)?);
    Ok(d)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Grid {
    /// Lattice with the given spacing, filled in row-major order.
    Regular { spacing: f64 },
    /// Independent uniform coordinates on `[low, high)`.
    Uniform { low: f64, high: f64 },
}

pub enum SeriesDecoder<'a> {
    Identity,
    /// Observations are the decoded likelihood mean.
    Mlp(&'a MlpParams, LikelihoodFamily),
}

pub fn grid_points(seed: u64, n: usize, d: usize, grid: Grid) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::InvalidArgument("input dimension must be positive".into()));
    }
    match grid {
        Grid::Regular { spacing } => {
            let side = (1..).find(|s: &usize| s.pow(d as u32) >= n).unwrap();
            Ok(Matrix::from_fn(n, d, |i, k| {
                let digit = (i / side.pow((d - 1 - k) as u32)) % side;
                digit as f64 * spacing
            }))
        }
        Grid::Uniform { low, high } => {
            if !(high > low) {
                return Err(Error::InvalidArgument(format!("empty uniform range [{low}, {high})")));
            }
            let mut rng = stream(seed, Purpose::GridPoints, 0);
            Ok(Matrix::from_fn(n, d, |_, _| rng.random_range(low..high)))
        }
    }
}

/// Latent channels drawn exactly from the full GP prior, decoded, plus
/// Gaussian noise of the given variance.
pub fn gen_gp_series(seed: u64, prior: &LatentPrior, decoder: SeriesDecoder<'_>, n: usize, d: usize, grid: Grid, noise: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("series needs at least one point".into()));
    }
    if n > FULL_GP_LIMIT {
        return Err(Error::PrecisionGuard { n, limit: FULL_GP_LIMIT });
    }
    if !(noise >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise variance {noise} is negative")));
    }
    let x = grid_points(seed, n, d, grid)?;
    let l = prior.latent_dim();
    let mut latent = Matrix::zeros(n, l);
    for (c, k) in prior.channels.iter().enumerate() {
        let chol = cholesky_default(&k.eval(&x, &x)?)?;
        let eps = standard_normal_matrix(&mut stream(seed, Purpose::GpLatent, c as u64), n, 1);
        let z = chol.l().matmul(&eps);
        for i in 0..n {
            latent[(i, c)] = z[(i, 0)];
        }
    }
    let clean = match decoder {
        SeriesDecoder::Identity => latent.clone(),
        SeriesDecoder::Mlp(theta, family) => decode(theta, &latent, family)?.mean().clone(),
    };
    let mut y = clean;
    if noise > 0.0 {
        let e = standard_normal_matrix(&mut stream(seed, Purpose::Noise, 0), y.rows(), y.cols());
        y.axpy(noise.sqrt(), &e);
    }
    let mut ds = Dataset::new(x, y)?;
    ds.latent = Some(latent);
    Ok(ds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingMode {
    #[default]
    Entrywise,
    Framewise,
}

/// Drops entries (or whole rows) with probability `rate`; dropped values
/// are zeroed in `Y` and kept in `truth`.
pub fn apply_missingness(data: &Dataset, rate: f64, mode: MissingMode, seed: u64) -> Result<Dataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("missing rate {rate} outside [0, 1)")));
    }
    let mut out = data.clone();
    out.truth = Some(data.truth.clone().unwrap_or_else(|| data.y.clone()));
    let k = data.y.cols();
    for i in 0..data.n() {
        let mut rng = stream(seed, Purpose::Missing, i as u64);
        let drop_row = mode == MissingMode::Framewise && rng.random::<f64>() < rate;
        for c in 0..k {
            let drop = match mode {
                MissingMode::Entrywise => rng.random::<f64>() < rate,
                MissingMode::Framewise => drop_row,
            };
            if drop {
                out.mask[(i, c)] = 0.0;
                out.y[(i, c)] = 0.0;
            }
        }
    }
    if out.mask.as_slice().iter().all(|&m| m == 0.0) {
        return Err(Error::AllMissing);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_header_only() {
        let bytes = encode_tensors(&[]);
        assert_eq!(bytes.len(), 12);
        assert!(decode_tensors(&bytes).unwrap().is_empty());
    }

    #[test]
    fn identity_round_trip() {
        let t = vec![("I".to_owned(), Tensor::from(Matrix::identity(2)))];
        let back = decode_tensors(&encode_tensors(&t)).unwrap();
        assert_eq!(back, t);
        let bytes = encode_tensors(&t);
        assert_eq!(&bytes[..4], b"NNTS");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    }

    #[test]
    fn large_round_trip_is_bitwise() {
        let mut rng = stream(5, Purpose::Noise, 0);
        let data: Vec<f64> = (0..1_000_000).map(|_| rng.random::<f64>() * 1e3 - 5e2).collect();
        let t = vec![("big".to_owned(), Tensor::new(vec![1000, 1000], data).unwrap())];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.nnts");
        write_tensors(&p, &t).unwrap();
        let back = read_tensors(&p).unwrap();
        let a: Vec<u64> = t[0].1.data.iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back[0].1.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back[0].1.shape, vec![1000, 1000]);
    }

    #[test]
    fn corrupt_files() {
        let t = vec![("a".to_owned(), Tensor::vector(vec![1.0, 2.0]))];
        let bytes = encode_tensors(&t);
        assert!(matches!(decode_tensors(b"NOPE\x01\0\0\0\0\0\0\0"), Err(Error::BadMagic)));
        assert!(matches!(decode_tensors(b"NN"), Err(Error::BadMagic)));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_tensors(&v2), Err(Error::VersionMismatch(2))));
        assert!(matches!(decode_tensors(&bytes[..bytes.len() - 1]), Err(Error::TruncatedFile)));
    }

    #[test]
    fn moving_ball_shape_and_determinism() {
        let a = gen_moving_ball(3, 35, 2.0).unwrap();
        let b = gen_moving_ball(3, 35, 2.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 35);
        for v in &a {
            assert_eq!(v.frames.shape(), (30, 1024));
            assert!(v.frames.as_slice().iter().all(|&p| p == 0.0 || p == 1.0));
            assert!(v.trajectory.as_slice().iter().all(|&p| (0.0..=32.0).contains(&p)));
        }
        assert_ne!(a[0], gen_moving_ball(4, 1, 2.0).unwrap()[0]);
        let ds = ball_dataset(&a).unwrap();
        assert_eq!(ds.n(), 1050);
        assert_eq!(ds.groups.len(), 36);
    }

    #[test]
    fn centred_ball_lights_the_disc() {
        let f = render_ball(16.0, 16.0);
        // Pixel centres within radius 2 of (16, 16): 12 of them.
        assert_eq!(f.iter().filter(|&&p| p == 1.0).count(), 12);
    }

    #[test]
    fn trajectory_covariance_matches_kernel() {
        // Unclamped paths: invert the pixel map, then compare lag covariances.
        let ls = 2.0;
        let n = 10_000;
        let videos = gen_moving_ball(11, n, ls).unwrap();
        for lag in [0usize, 1, 3] {
            let (t0, t1) = (5, 5 + lag);
            let mut prods = Vec::with_capacity(n);
            for v in &videos {
                let a = (v.trajectory[(t0, 0)] - 16.0) / BALL_SCALE;
                let b = (v.trajectory[(t1, 0)] - 16.0) / BALL_SCALE;
                prods.push(a * b);
            }
            let mean = prods.iter().sum::<f64>() / n as f64;
            let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (var / n as f64).sqrt();
            let expected = (-(lag as f64).powi(2) / (2.0 * ls * ls)).exp();
            // Clamping at the frame edge shrinks the tails slightly; allow an extra 1%.
            assert!((mean - expected).abs() < 3.0 * se + 0.01, "lag {lag}: {mean} vs {expected}");
        }
    }

    fn prior(ls: f64, os: f64, l: usize) -> LatentPrior {
        LatentPrior::new(vec![KernelSpec::new(KernelKind::Rbf, ls, os).unwrap(); l]).unwrap()
    }

    #[test]
    fn identity_series_is_the_latent() {
        let d = gen_gp_series(1, &prior(1.5, 1.0, 2), SeriesDecoder::Identity, 20, 1, Grid::Regular { spacing: 1.0 }, 0.0).unwrap();
        assert_eq!(&d.y, d.latent.as_ref().unwrap());
        assert_eq!(d.x[(3, 0)], 3.0);
        let one = gen_gp_series(1, &prior(1.0, 2.0, 1), SeriesDecoder::Identity, 1, 2, Grid::Uniform { low: 0.0, high: 1.0 }, 0.0).unwrap();
        assert_eq!(one.n(), 1);
        assert!(matches!(
            gen_gp_series(1, &prior(1.0, 1.0, 1), SeriesDecoder::Identity, 5000, 1, Grid::Regular { spacing: 1.0 }, 0.0),
            Err(Error::PrecisionGuard { .. })
        ));
    }

    #[test]
    fn regular_grid_in_two_dimensions() {
        let g = grid_points(0, 5, 2, Grid::Regular { spacing: 0.5 }).unwrap();
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(1), &[0.0, 0.5]);
        assert_eq!(g.row(3), &[0.5, 0.0]);
    }

    #[test]
    fn series_marginal_variance() {
        let (os, noise) = (1.7, 0.3);
        let reps = 100_000;
        let p = prior(1.0, os, 1);
        let mut sum_sq = 0.0;
        for s in 0..reps {
            let d = gen_gp_series(s, &p, SeriesDecoder::Identity, 1, 1, Grid::Regular { spacing: 1.0 }, noise).unwrap();
            sum_sq += d.y[(0, 0)].powi(2);
        }
        let var = sum_sq / reps as f64;
        let expected = os + noise;
        let se = expected * (2.0 / reps as f64).sqrt();
        assert!((var - expected).abs() < 4.0 * se, "{var} vs {expected}");
    }

    #[test]
    fn missingness() {
        let y = Matrix::filled(1000, 1000, 2.0);
        let d = Dataset::new(Matrix::zeros(1000, 1), y).unwrap();
        let none = apply_missingness(&d, 0.0, MissingMode::Entrywise, 1).unwrap();
        assert!(none.mask.as_slice().iter().all(|&m| m == 1.0));

        let m = apply_missingness(&d, 0.6, MissingMode::Entrywise, 1).unwrap();
        let frac = m.mask.sum() / 1e6;
        assert!((frac - 0.4).abs() < 0.002, "{frac}");
        m.validate().unwrap();
        assert_eq!(m.truth.as_ref().unwrap(), &d.y);

        let f = apply_missingness(&d, 0.6, MissingMode::Framewise, 2).unwrap();
        for i in 0..1000 {
            let r = f.mask.row(i);
            assert!(r.iter().all(|&v| v == r[0]));
        }

        let tiny = Dataset::new(Matrix::zeros(1, 1), Matrix::scalar(1.0)).unwrap();
        let all_gone = (0..200).any(|s| matches!(apply_missingness(&tiny, 0.99, MissingMode::Entrywise, s), Err(Error::AllMissing)));
        assert!(all_gone);
        assert!(apply_missingness(&tiny, 1.0, MissingMode::Entrywise, 0).is_err());
    }

    #[test]
    fn dataset_round_trip() {
        let videos = gen_moving_ball(0, 2, 2.0).unwrap();
        let d = apply_missingness(&ball_dataset(&videos).unwrap(), 0.3, MissingMode::Framewise, 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.nnts");
        d.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), d);
    }
}
