use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{NumError, Tensor};

/// Named parameter tensors in deterministic (sorted) order.
pub type ParamStore = BTreeMap<String, Tensor>;

/// Optimizer hyper-parameters as they appear in run configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// StepLR period in epochs.
    pub step_size: usize,
    /// StepLR multiplicative factor.
    pub gamma: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_size: 30,
            gamma: 0.5,
        }
    }
}

/// AdamW state with decoupled weight decay and a StepLR schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub config: OptimConfig,
    /// Learning rate currently in effect.
    pub lr: f64,
    pub step: u64,
    pub first_moment: ParamStore,
    pub second_moment: ParamStore,
}

impl OptimState {
    pub fn new(config: OptimConfig) -> Result<Self, NumError> {
        if config.lr.is_nan() || config.lr <= 0.0 {
            return Err(NumError::InvalidConfig(format!(
                "learning rate {} must be > 0",
                config.lr
            )));
        }
        if config.step_size == 0 {
            return Err(NumError::InvalidConfig("step_size must be >= 1".into()));
        }
        Ok(Self {
            lr: config.lr,
            config,
            step: 0,
            first_moment: ParamStore::new(),
            second_moment: ParamStore::new(),
        })
    }

    /// `base_lr · gamma^floor(epoch / step_size)`; also stores the result.
    pub fn steplr(&mut self, epoch: usize) -> f64 {
        self.lr = steplr(&self.config, epoch);
        self.lr
    }

    /// One AdamW update of every parameter that has a gradient.
    ///
    /// Parameters first shrink by `lr·wd·p`, then move by the
    /// bias-corrected moment ratio.
    pub fn adamw_step(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<(), NumError> {
        for (name, g) in grads {
            let p = params.get(name).ok_or_else(|| NumError::UnknownParam(name.clone()))?;
            if p.shape() != g.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "adamw_step",
                    detail: format!("{name}: param {:?} grad {:?}", p.shape(), g.shape()),
                });
            }
        }
        self.step += 1;
        let OptimConfig {
            weight_decay,
            beta1,
            beta2,
            eps,
            ..
        } = self.config;
        let lr = self.lr;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            if m.shape() != g.shape() || v.shape() != g.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "adamw_step",
                    detail: format!("{name}: moment shape differs from gradient"),
                });
            }
            let pd = p.data_mut();
            let md = m.data_mut();
            let vd = v.data_mut();
            for i in 0..pd.len() {
                let gi = g.data()[i];
                pd[i] -= lr * weight_decay * pd[i];
                md[i] = beta1 * md[i] + (1.0 - beta1) * gi;
                vd[i] = beta2 * vd[i] + (1.0 - beta2) * gi * gi;
                let mhat = md[i] / bc1;
                let vhat = vd[i] / bc2;
                pd[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

pub fn steplr(config: &OptimConfig, epoch: usize) -> f64 {
    config.lr * config.gamma.powi((epoch / config.step_size) as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(name: &str, v: f64) -> ParamStore {
        [(name.to_string(), Tensor::from_vec(vec![v]))].into_iter().collect()
    }

    #[test]
    fn zero_grad_no_decay_leaves_params() {
        let mut st = OptimState::new(OptimConfig {
            weight_decay: 0.0,
            ..Default::default()
        })
        .unwrap();
        let mut p = one("w", 0.7);
        st.adamw_step(&mut p, &one("w", 0.0)).unwrap();
        assert_eq!(p["w"].item(), 0.7);
    }

    #[test]
    fn decoupled_decay_only() {
        let mut st = OptimState::new(OptimConfig {
            weight_decay: 0.01,
            lr: 0.001,
            ..Default::default()
        })
        .unwrap();
        let mut p = one("w", 1.0);
        st.adamw_step(&mut p, &one("w", 0.0)).unwrap();
        assert!((p["w"].item() - 0.99999).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // hand-computed: m = 0.1, v = 0.001, mhat = 1, vhat = 1
        let mut st = OptimState::new(OptimConfig {
            lr: 0.001,
            ..Default::default()
        })
        .unwrap();
        let mut p = one("w", 0.0);
        st.adamw_step(&mut p, &one("w", 1.0)).unwrap();
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((p["w"].item() - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut st = OptimState::new(OptimConfig::default()).unwrap();
        let mut p = one("w", 0.0);
        let g: ParamStore = [("w".to_string(), Tensor::zeros(&[2]))].into_iter().collect();
        assert!(st.adamw_step(&mut p, &g).is_err());
        assert_eq!(st.step, 0);
    }

    #[test]
    fn steplr_schedule() {
        let cfg = OptimConfig {
            lr: 0.001,
            step_size: 30,
            gamma: 0.5,
            ..Default::default()
        };
        assert_eq!(steplr(&cfg, 0), 0.001);
        assert_eq!(steplr(&cfg, 29), 0.001);
        assert_eq!(steplr(&cfg, 30), 0.0005);
        assert_eq!(steplr(&cfg, 65), 0.00025);
    }

    #[test]
    fn nonpositive_lr_rejected() {
        assert!(OptimState::new(OptimConfig {
            lr: 0.0,
            ..Default::default()
        })
        .is_err());
    }
}
