use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub warmup_epochs: usize,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub betas: (f64, f64),
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            base_lr: 5e-4,
            min_lr: 1e-5,
            warmup_epochs: 5,
            weight_decay: 0.05,
            clip_norm: 1.0,
            batch_size: 128,
            seed: 0,
            betas: (0.9, 0.999),
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be positive"));
        }
        if self.warmup_epochs >= self.epochs {
            return Err(Error::config(format!("warmup_epochs={} must be below epochs={}", self.warmup_epochs, self.epochs)));
        }
        if !(self.base_lr >= 0.0 && self.min_lr >= 0.0 && self.min_lr <= self.base_lr) {
            return Err(Error::config(format!("need 0 <= min_lr <= base_lr, got min_lr={} base_lr={}", self.min_lr, self.base_lr)));
        }
        if !(self.weight_decay >= 0.0) || !(self.clip_norm > 0.0) || !(self.eps > 0.0) {
            return Err(Error::config("weight_decay must be >= 0, clip_norm and eps > 0"));
        }
        let (b1, b2) = self.betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::config(format!("betas must lie in [0, 1), got ({b1}, {b2})")));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        Ok(())
    }
}

/// Per-epoch learning rate: linear warmup to `base_lr`, then a cosine that
/// lands exactly on `min_lr` at the last epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let w = cfg.warmup_epochs;
    if epoch < w {
        return cfg.base_lr * ((epoch + 1) as f64 / w as f64);
    }
    let span = cfg.epochs.saturating_sub(w + 1).max(1) as f64;
    let t = ((epoch - w) as f64 / span).min(1.0);
    if t == 0.0 {
        return cfg.base_lr;
    }
    cfg.min_lr + 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 + (PI * t).cos())
}

/// Scales all tensors so their joint L2 norm is at most `max_norm`.
/// Returns the applied factor.
pub fn clip_global_norm<'a>(grads: impl IntoIterator<Item = &'a mut Tensor>, max_norm: f64) -> f64 {
    let mut grads: Vec<&mut Tensor> = grads.into_iter().collect();
    let norm = grads.iter().map(|g| g.sq_norm()).sum::<f64>().sqrt();
    if norm <= max_norm {
        return 1.0;
    }
    let scale = max_norm / norm;
    for g in grads.iter_mut() {
        g.scale_in_place(scale);
    }
    scale
}

/// [`clip_global_norm`] over the gradients of trainable parameters.
pub fn clip_store_grads(store: &mut ParamStore, max_norm: f64) -> f64 {
    clip_global_norm(store.iter_mut().filter(|p| p.tensor.requires_grad).map(|p| &mut p.tensor.grad), max_norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub t: u64,
}

impl OptimizerState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.tensor.value.shape())).collect();
        OptimizerState { m: zeros.clone(), v: zeros, t: 0 }
    }
}

/// Bias-corrected Adam with decoupled weight decay (`p -= lr·wd·p` before the
/// Adam delta, only for parameters flagged for decay). Gradients are read
/// from the store. Any non-finite gradient aborts before anything changes.
pub fn adam_step(store: &mut ParamStore, state: &mut OptimizerState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    if state.m.len() != store.len() {
        return Err(Error::Usage(format!("optimizer state has {} slots, store has {} parameters", state.m.len(), store.len())));
    }
    if let Some((_, p)) = store.iter().find(|(_, p)| !p.tensor.grad.all_finite()) {
        return Err(Error::Numerical(format!("non-finite gradient in parameter {}", p.name)));
    }
    state.t += 1;
    let (b1, b2) = cfg.betas;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (i, p) in store.iter_mut().enumerate() {
        if !p.tensor.requires_grad {
            continue;
        }
        let decay = if p.decay { lr * cfg.weight_decay } else { 0.0 };
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let g = p.tensor.grad.data();
        let x = p.tensor.value.data_mut();
        for j in 0..x.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            x[j] -= decay * x[j];
            x[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let cfg = TrainConfig::default();
        assert!((lr_at(2, &cfg) - 3e-4).abs() < 1e-18);
        assert_eq!(lr_at(cfg.epochs - 1, &cfg), 1e-5);
        assert!((lr_at(152, &cfg) - 2.55e-4).abs() < 1e-15);
        assert_eq!(lr_at(4, &cfg), lr_at(5, &cfg));
    }

    #[test]
    fn clip_examples() {
        let mut a = [Tensor::from_vec(vec![3.0, 0.0]), Tensor::from_vec(vec![0.0, 4.0])];
        assert!((clip_global_norm(a.iter_mut(), 1.0) - 0.2).abs() < 1e-15);
        let mut b = [Tensor::from_vec(vec![0.3, 0.4])];
        assert_eq!(clip_global_norm(b.iter_mut(), 1.0), 1.0);
        assert_eq!(b[0].data(), &[0.3, 0.4]);
        let mut z = [Tensor::zeros(&[3])];
        assert_eq!(clip_global_norm(z.iter_mut(), 1.0), 1.0);
    }

    fn one_param(value: f64, grad: f64, decay: bool) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::from_vec(vec![value]), decay);
        s.get_mut(id).tensor.grad = Tensor::from_vec(vec![grad]);
        s
    }

    #[test]
    fn first_adam_step() {
        let cfg = TrainConfig { weight_decay: 0.0, ..TrainConfig::default() };
        let mut s = one_param(0.0, 0.1, true);
        let mut st = OptimizerState::new(&s);
        adam_step(&mut s, &mut st, 1e-3, &cfg).unwrap();
        let delta = -s.value(s.find("w").unwrap()).data()[0];
        assert!((delta - 1e-3 * 0.1 / (0.1 + 1e-8)).abs() < 1e-18);
        assert!((delta - 9.99999e-4).abs() < 1e-9);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn decay_only_step() {
        let cfg = TrainConfig::default();
        let mut s = one_param(1.0, 0.0, true);
        let mut st = OptimizerState::new(&s);
        adam_step(&mut s, &mut st, 1e-3, &cfg).unwrap();
        assert!((s.value(s.find("w").unwrap()).data()[0] - 0.99995).abs() < 1e-15);
        let mut s = one_param(1.0, 0.0, false);
        let mut st = OptimizerState::new(&s);
        adam_step(&mut s, &mut st, 1e-3, &cfg).unwrap();
        assert_eq!(s.value(s.find("w").unwrap()).data()[0], 1.0);
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut s = one_param(1.0, f64::NAN, true);
        let mut st = OptimizerState::new(&s);
        match adam_step(&mut s, &mut st, 1e-3, &TrainConfig::default()) {
            Err(Error::Numerical(msg)) => assert!(msg.contains('w')),
            other => panic!("expected numerical error, got {other:?}"),
        }
        assert_eq!(st.t, 0);
        assert_eq!(s.value(s.find("w").unwrap()).data()[0], 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { warmup_epochs: 300, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { base_lr: 0.0, min_lr: 0.0, ..TrainConfig::default() }.validate().is_ok());
        assert!(TrainConfig { min_lr: 1.0, ..TrainConfig::default() }.validate().is_err());
    }
}
