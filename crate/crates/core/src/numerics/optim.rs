use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// AdamW hyperparameters. The learning rate itself comes from the schedule
/// at each step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.95,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// One parameter's share of an optimizer step.
pub struct ParamUpdate<'a, S: Scalar> {
    pub name: &'a str,
    pub param: &'a mut Tensor<S>,
    pub grad: &'a Tensor<S>,
    /// Multiplier on the step's learning rate (layer-wise decay).
    pub lr_scale: f64,
    /// Whether decoupled weight decay applies to this parameter.
    pub decay: bool,
}

/// First/second moment buffers for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments<S: Scalar> {
    pub m: Tensor<S>,
    pub v: Tensor<S>,
}

/// AdamW with decoupled weight decay and bias-corrected moments.
#[derive(Debug, Clone)]
pub struct AdamW<S: Scalar> {
    pub config: AdamWConfig,
    step: u64,
    moments: BTreeMap<String, Moments<S>>,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Number of completed steps.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> &BTreeMap<String, Moments<S>> {
        &self.moments
    }

    /// Restores state saved from [`AdamW::moments`] and [`AdamW::step_count`].
    pub fn restore(&mut self, step: u64, moments: BTreeMap<String, Moments<S>>) {
        self.step = step;
        self.moments = moments;
    }

    /// Applies one step at learning rate `lr` to every listed parameter.
    pub fn step<'a>(
        &mut self,
        lr: f64,
        updates: impl IntoIterator<Item = ParamUpdate<'a, S>>,
    ) -> Result<()>
    where
        S: 'a,
    {
        let updates: Vec<ParamUpdate<'a, S>> = updates.into_iter().collect();
        for u in &updates {
            if u.param.dims() != u.grad.dims() {
                return Err(Error::shape(
                    "adamw_step",
                    format!("{}: param {:?} vs grad {:?}", u.name, u.param.dims(), u.grad.dims()),
                ));
            }
            if !u.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", u.name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.config.beta1.powi(t);
        let bc2 = 1.0 - self.config.beta2.powi(t);
        let (b1, b2) = (S::of(self.config.beta1), S::of(self.config.beta2));
        let eps = S::of(self.config.eps);
        for u in updates {
            let entry = self
                .moments
                .entry(u.name.to_string())
                .or_insert_with(|| Moments {
                    m: Tensor::zeros(u.param.dims().to_vec()),
                    v: Tensor::zeros(u.param.dims().to_vec()),
                });
            let lr_eff = lr * u.lr_scale;
            let wd = if u.decay { self.config.weight_decay } else { 0.0 };
            let step_size = S::of(lr_eff);
            let decay = S::of(lr_eff * wd);
            let (inv_bc1, inv_bc2) = (S::of(1.0 / bc1), S::of(1.0 / bc2));
            let m = entry.m.data_mut();
            let v = entry.v.data_mut();
            let p = u.param.data_mut();
            for i in 0..p.len() {
                let g = u.grad.data()[i];
                m[i] = b1 * m[i] + (S::one() - b1) * g;
                v[i] = b2 * v[i] + (S::one() - b2) * g * g;
                let m_hat = m[i] * inv_bc1;
                let v_hat = v[i] * inv_bc2;
                p[i] = p[i] - step_size * (m_hat / (v_hat.sqrt() + eps)) - decay * p[i];
            }
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum and coupled L2 weight decay, used for
/// linear probes.
#[derive(Debug, Clone)]
pub struct Sgd<S: Scalar> {
    pub momentum: f64,
    pub weight_decay: f64,
    buffers: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Sgd<S> {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            buffers: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, name: &str, param: &mut Tensor<S>, grad: &Tensor<S>, lr: f64) -> Result<()> {
        if param.dims() != grad.dims() {
            return Err(Error::shape("sgd", format!("{name}: {:?} vs {:?}", param.dims(), grad.dims())));
        }
        if !grad.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
        let buf = self
            .buffers
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(param.dims().to_vec()));
        let (mu, wd, lr) = (S::of(self.momentum), S::of(self.weight_decay), S::of(lr));
        let b = buf.data_mut();
        let p = param.data_mut();
        for i in 0..p.len() {
            let g = grad.data()[i] + wd * p[i];
            b[i] = mu * b[i] + g;
            p[i] -= lr * b[i];
        }
        Ok(())
    }
}

/// Global L2 norm over a set of gradients.
pub fn global_norm<'a, S: Scalar>(grads: impl IntoIterator<Item = &'a Tensor<S>>) -> f64 {
    grads
        .into_iter()
        .flat_map(|g| g.data().iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<S: Scalar>(grads: &mut [&mut Tensor<S>], max_norm: f64) -> f64 {
    let norm = global_norm(grads.iter().map(|g| &**g));
    if norm > max_norm && norm > 0.0 {
        let s = S::of(max_norm / norm);
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(theta: f64, g: f64, lr: f64, wd: f64) -> f64 {
        let cfg = AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: wd,
        };
        let mut opt = AdamW::<f64>::new(cfg);
        let mut p = Tensor::new([1], vec![theta]).unwrap();
        let grad = Tensor::new([1], vec![g]).unwrap();
        opt.step(
            lr,
            [ParamUpdate {
                name: "p",
                param: &mut p,
                grad: &grad,
                lr_scale: 1.0,
                decay: true,
            }],
        )
        .unwrap();
        p.data()[0]
    }

    #[test]
    fn hand_computed_first_step() {
        // m̂ = 0.5, v̂ = 0.25, so the Adam direction is 0.5 / (0.5 + 1e-8)
        let expected = 1.0 - 0.1 * (0.5 / (0.5 + 1e-8) + 0.05 * 1.0);
        let got = one_step(1.0, 0.5, 0.1, 0.05);
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.895).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_fixed_point() {
        assert_eq!(one_step(0.7, 0.0, 0.1, 0.0), 0.7);
    }

    #[test]
    fn pure_decoupled_decay() {
        let theta = 2.5;
        assert_eq!(one_step(theta, 0.0, 0.1, 0.05), theta - (0.1 * 0.05) * theta);
        assert!((one_step(theta, 0.0, 0.1, 0.05) - theta * (1.0 - 0.1 * 0.05)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut opt = AdamW::<f32>::new(AdamWConfig::default());
        let mut p = Tensor::new([1], vec![1.0f32]).unwrap();
        let grad = Tensor::new([1], vec![f32::NAN]).unwrap();
        let res = opt.step(
            0.1,
            [ParamUpdate {
                name: "p",
                param: &mut p,
                grad: &grad,
                lr_scale: 1.0,
                decay: true,
            }],
        );
        assert!(matches!(res, Err(Error::NonFinite(_))));
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn clipping_caps_norm() {
        let mut a = Tensor::new([2], vec![3.0f64, 4.0]).unwrap();
        let norm = clip_global_norm(&mut [&mut a], 1.0);
        assert_eq!(norm, 5.0);
        assert!((a.l2_norm() - 1.0).abs() < 1e-12);
    }
}
