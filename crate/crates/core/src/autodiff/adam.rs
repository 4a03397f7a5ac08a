use super::params::{Param, ParamStore};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` in place.
///
/// A step whose gradient is identically zero only advances `t`; the moments
/// and the parameter are left untouched.
pub fn adam_step(param: &mut Param, state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    let grad = param
        .grad
        .as_ref()
        .ok_or_else(|| Error::Contract(format!("parameter {} has no gradient", param.name)))?;
    if state.m.len() != grad.len() || state.v.len() != grad.len() {
        return Err(Error::shape(
            "adam_step",
            param.value.shape(),
            &[state.m.len()],
        ));
    }
    state.t += 1;
    if grad.data().iter().all(|&g| g == 0.0) {
        return Ok(());
    }
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let values = param.value.data_mut();
    for (i, &g) in grad.data().iter().enumerate() {
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        values[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over every trainable parameter of a store. Frozen parameters are
/// skipped entirely.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let states = store
            .iter()
            .map(|(_, p)| AdamState::new(p.value.len()))
            .collect();
        Adam { config, states }
    }

    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        for (p, s) in store.iter_mut().zip(self.states.iter_mut()) {
            if p.trainable {
                adam_step(p, s, &self.config)?;
            }
        }
        Ok(())
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }
}
