use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Rescale the gradient so its global L2 norm is at most this; 0 disables.
    #[serde(default)]
    pub clip_norm: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 0.0,
            clip_norm: 0.0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay >= 0.0
            && self.weight_decay.is_finite()
            && self.clip_norm >= 0.0
            && self.clip_norm.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid SGD configuration {self:?}")))
        }
    }
}

/// Anything exposing its trainable parameters as a fixed list of flat buffers.
pub trait ParamSet {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;
}

impl ParamSet for Vec<f64> {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.as_slice()]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.as_mut_slice()]
    }
}

/// Momentum buffers, one per parameter buffer. Empty until the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SgdState {
    pub velocity: Vec<Vec<f64>>,
}

/// Global L2 norm over all gradient buffers.
pub fn grad_norm<P: ParamSet>(grads: &P) -> f64 {
    grads
        .param_slices()
        .iter()
        .flat_map(|g| g.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

/// `v <- momentum·v + c·grad + weight_decay·param; param <- param - lr·v`,
/// where `c` shrinks the gradient to `clip_norm` when clipping is on.
pub fn sgd_step<P: ParamSet>(params: &mut P, grads: &P, cfg: &SgdConfig, state: &mut SgdState) -> Result<()> {
    cfg.validate()?;
    let grads = grads.param_slices();
    let mut params = params.param_slices_mut();
    let aligned = params.len() == grads.len() && params.iter().zip(&grads).all(|(p, g)| p.len() == g.len());
    if !aligned {
        return Err(Error::Shape("parameter and gradient buffers are not aligned".into()));
    }
    if state.velocity.is_empty() {
        state.velocity = params.iter().map(|p| vec![0.0; p.len()]).collect();
    }
    let state_ok = state.velocity.len() == params.len()
        && state.velocity.iter().zip(&params).all(|(v, p)| v.len() == p.len());
    if !state_ok {
        return Err(Error::Shape("momentum state does not match parameters".into()));
    }
    let mut scale = 1.0;
    if cfg.clip_norm > 0.0 {
        let norm = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum::<f64>().sqrt();
        if norm > cfg.clip_norm {
            scale = cfg.clip_norm / norm;
        }
    }
    for ((p, g), v) in params.iter_mut().zip(&grads).zip(&mut state.velocity) {
        for ((p, &g), v) in p.iter_mut().zip(g.iter()).zip(v.iter_mut()) {
            *v = cfg.momentum * *v + scale * g + cfg.weight_decay * *p;
            *p -= cfg.learning_rate * *v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(lr: f64) -> SgdConfig {
        SgdConfig {
            learning_rate: lr,
            momentum: 0.0,
            weight_decay: 0.0,
            clip_norm: 0.0,
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0, 3.5];
        let g = vec![0.0; 3];
        let mut s = SgdState::default();
        sgd_step(&mut p, &g, &plain(0.5), &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn single_plain_step() {
        let mut p = vec![1.0, -2.0];
        let g = vec![0.25, 4.0];
        sgd_step(&mut p, &g, &plain(0.1), &mut SgdState::default()).unwrap();
        assert_eq!(p, vec![1.0 - 0.1 * 0.25, -2.0 - 0.1 * 4.0]);
    }

    #[test]
    fn quadratic_converges() {
        let mut w = vec![1.0];
        let mut s = SgdState::default();
        for _ in 0..50 {
            let g = vec![2.0 * w[0]];
            sgd_step(&mut w, &g, &plain(0.1), &mut s).unwrap();
        }
        assert!(w[0].abs() < 1e-4);
        assert!((w[0] - 0.8f64.powi(50)).abs() < 1e-15);
    }

    #[test]
    fn momentum_and_decay() {
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.5,
            weight_decay: 0.1,
            clip_norm: 0.0,
        };
        let mut p = vec![1.0];
        let mut s = SgdState::default();
        sgd_step(&mut p, &vec![1.0], &cfg, &mut s).unwrap();
        // v = 1 + 0.1 = 1.1, p = 1 - 0.11
        assert!((p[0] - 0.89).abs() < 1e-15);
        sgd_step(&mut p, &vec![1.0], &cfg, &mut s).unwrap();
        // v = 0.55 + 1 + 0.089 = 1.639
        assert!((s.velocity[0][0] - 1.639).abs() < 1e-15);
    }

    #[test]
    fn misaligned_is_shape_error() {
        let mut p = vec![1.0, 2.0];
        let g = vec![1.0];
        assert!(matches!(
            sgd_step(&mut p, &g, &plain(0.1), &mut SgdState::default()),
            Err(Error::Shape(_))
        ));
        assert!(SgdConfig { momentum: 1.0, ..plain(0.1) }.validate().is_err());
    }

    #[test]
    fn clipping_caps_the_step() {
        let mut p = vec![0.0, 0.0];
        let g = vec![3.0, 4.0];
        let cfg = SgdConfig {
            clip_norm: 1.0,
            ..plain(1.0)
        };
        assert_eq!(grad_norm(&g), 5.0);
        sgd_step(&mut p, &g, &cfg, &mut SgdState::default()).unwrap();
        assert!((p[0] + 0.6).abs() < 1e-15 && (p[1] + 0.8).abs() < 1e-15);
        // Small gradients pass through untouched.
        let mut q = vec![0.0];
        sgd_step(&mut q, &vec![0.5], &cfg, &mut SgdState::default()).unwrap();
        assert_eq!(q, vec![-0.5]);
    }
}
