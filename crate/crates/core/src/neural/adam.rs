use crate::error::{ensure, Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// Moment estimates for every parameter group plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> AdamState<T> {
    /// Fresh state shaped like `params`.
    pub fn new(params: &[&[T]], config: AdamConfig) -> Self {
        let zeros = |p: &&[T]| vec![T::zero(); p.len()];
        Self { config, step: 0, m: params.iter().map(zeros).collect(), v: params.iter().map(zeros).collect() }
    }
}

/// One bias-corrected Adam update. A non-finite gradient aborts before anything changes.
pub fn adam_step<T: Real>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut AdamState<T>) -> Result<()> {
    let cfg = state.config;
    ensure!(cfg.lr > 0.0, Error::InvalidArgument(format!("learning rate {} must be positive", cfg.lr)));
    ensure!(
        params.len() == grads.len() && params.len() == state.m.len(),
        Error::Shape(format!(
            "{} parameter groups, {} gradient groups, {} state groups",
            params.len(),
            grads.len(),
            state.m.len()
        ))
    );
    for (i, ((p, g), m)) in params.iter().zip(grads).zip(&state.m).enumerate() {
        ensure!(
            p.len() == g.len() && p.len() == m.len(),
            Error::Shape(format!("group {i}: {} params, {} grads, {} moments", p.len(), g.len(), m.len()))
        );
        ensure!(g.iter().all(|v| v.is_finite()), Error::NonFinite(format!("gradient group {i}")));
    }

    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    let corr1 = T::one() - b1.powi(t);
    let corr2 = T::one() - b2.powi(t);
    let (lr, eps) = (T::lit(cfg.lr), T::lit(cfg.epsilon));
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(state.m.iter_mut()).zip(state.v.iter_mut()) {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let m_hat = m[i] / corr1;
            let v_hat = v[i] / corr2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
