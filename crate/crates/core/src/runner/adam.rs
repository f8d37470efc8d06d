use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(sizes: impl IntoIterator<Item = usize>) -> Self {
        let (m, v) = sizes.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self { m, v, t: 0 }
    }
}

/// One bias-corrected Adam update, descending `grads`.
pub fn adam_step(params: &mut [&mut [f64]], grads: &[&[f64]], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!("{} parameters, {} gradients, {} moment buffers", params.len(), grads.len(), state.m.len())));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(Error::ShapeMismatch(format!("tensor {i}: {} values, {} gradients, {} moments", p.len(), g.len(), state.m[i].len())));
        }
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powf(state.t as f64);
    let c2 = 1.0 - ADAM_BETA2.powf(state.t as f64);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..p.len() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            p[k] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = [3.0, -0.2, 1e3];
        let mut s = AdamState::new([3]);
        adam_step(&mut [&mut p], &[&g], &mut s, 0.01).unwrap();
        for (after, (before, gi)) in p.iter().zip([1.0, -2.0, 0.5].iter().zip(g)) {
            assert!((after - (before - 0.01 * gi.signum())).abs() < 1e-8);
        }
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = vec![0.3; 4];
        let mut s = AdamState::new([4]);
        for _ in 0..10 {
            adam_step(&mut [&mut p], &[&[0.0; 4]], &mut s, 0.1).unwrap();
        }
        assert_eq!(p, vec![0.3; 4]);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut p = vec![0.0];
        let mut s = AdamState::new([1]);
        for _ in 0..200 {
            let g = [2.0 * (p[0] - 3.0)];
            adam_step(&mut [&mut p], &[&g], &mut s, 0.1).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 0.05, "{}", p[0]);
    }

    #[test]
    fn shape_errors() {
        let mut p = vec![0.0; 2];
        let mut s = AdamState::new([2]);
        assert!(matches!(adam_step(&mut [&mut p], &[&[0.0]], &mut s, 0.1), Err(Error::ShapeMismatch(_))));
        assert!(matches!(adam_step(&mut [&mut p], &[], &mut s, 0.1), Err(Error::ShapeMismatch(_))));
    }
}
