use super::Tensor;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Adam with bias-corrected moments, one moment pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f32>>,
    second_moment: Vec<Vec<f32>>,
}

impl AdamState {
    pub fn new<'a>(config: AdamConfig, params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first_moment: Vec<Vec<f32>> = params.into_iter().map(|p| vec![0.0; p.len()]).collect();
        let second_moment = first_moment.clone();
        Self { config, step: 0, first_moment, second_moment }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self, index: usize) -> Option<(&[f32], &[f32])> {
        Some((self.first_moment.get(index)?, self.second_moment.get(index)?))
    }

    /// Applies one update; `grads[i]` belongs to `params[i]`.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&[f32]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::Dimension(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first_moment[i].len() || g.len() != p.len() {
                return Err(Error::Dimension(format!(
                    "parameter {i}: shape {:?} with {} grads vs state of {}",
                    p.shape(),
                    g.len(),
                    self.first_moment[i].len()
                )));
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, epsilon } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for (((w, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let m_hat = *mv / c1;
                let v_hat = *vv / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let before = p.clone();
        let mut adam = AdamState::new(AdamConfig::default(), [&p]);
        adam.step(&mut [&mut p], &[&[0.0; 3]]).unwrap();
        assert_eq!(p, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = Tensor::new(&[2], vec![1.0, 1.0]).unwrap();
        let mut adam = AdamState::new(AdamConfig::default(), [&p]);
        adam.step(&mut [&mut p], &[&[0.3, -7.0]]).unwrap();
        assert!((p.data()[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p.data()[1] - (1.0 + 1e-3)).abs() < 1e-6);
    }

    #[test]
    fn moments_start_at_zero() {
        let p = Tensor::zeros(&[4]);
        let adam = AdamState::new(AdamConfig::default(), [&p]);
        let (m, v) = adam.moments(0).unwrap();
        assert!(m.iter().chain(v).all(|&x| x == 0.0));
    }

    #[test]
    fn descends_a_parabola() {
        // f(w) = w², f'(w) = 2w
        let mut w = Tensor::scalar(1.0);
        let mut adam = AdamState::new(AdamConfig { lr: 0.05, ..Default::default() }, [&w]);
        for _ in 0..10 {
            let g = [2.0 * w.data()[0]];
            adam.step(&mut [&mut w], &[&g]).unwrap();
        }
        assert!(w.data()[0].abs() < 1.0);
        assert!(w.data()[0].abs() < 0.6, "|w| = {}", w.data()[0]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut p = Tensor::zeros(&[3]);
        let mut adam = AdamState::new(AdamConfig::default(), [&Tensor::zeros(&[2])]);
        assert!(matches!(adam.step(&mut [&mut p], &[&[0.0; 3]]), Err(Error::Dimension(_))));
    }
}
