use super::Tensor5;
use crate::error::{Error, Result};

pub const DEFAULT_ETA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Charbonnier smoothing constant, `rho(x) = sqrt(x^2 + eta^2)`.
    pub eta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { eta: DEFAULT_ETA }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eta > 0.0 && self.eta.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("Charbonnier eta must be > 0, got {}", self.eta)))
        }
    }
}

/// Mean Charbonnier penalty over all elements and its gradient w.r.t. `pred`.
pub fn charbonnier(pred: &Tensor5, target: &Tensor5, cfg: &LossConfig) -> Result<(f64, Tensor5)> {
    cfg.validate()?;
    if pred.dims() != target.dims() {
        return Err(Error::Shape(format!(
            "charbonnier: prediction {} vs target {}",
            pred.dims(),
            target.dims()
        )));
    }
    let count = pred.len() as f64;
    let eta2 = cfg.eta * cfg.eta;
    let mut total = 0.0;
    let grad = pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(&p, &t)| {
            let d = p - t;
            let r = (d * d + eta2).sqrt();
            total += r;
            d / r / count
        })
        .collect();
    Ok((total / count, Tensor5::from_raw(pred.dims(), grad)))
}
