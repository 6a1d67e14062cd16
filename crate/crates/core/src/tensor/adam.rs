use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Mat,
    pub v: Mat,
    pub t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            m: Mat::zeros(rows, cols),
            v: Mat::zeros(rows, cols),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update followed by decoupled weight decay
/// `p ← p − lr·wd·p`.
pub fn adam_step(param: &mut Mat, grad: &Mat, state: &mut AdamState, cfg: &AdamConfig) {
    assert_eq!(param.shape(), grad.shape(), "adam: gradient shape mismatch");
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let decay = cfg.lr * cfg.weight_decay;
    let p = param.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (k, g) in grad.as_slice().iter().enumerate() {
        m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
        v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
        let mhat = m[k] / c1;
        let vhat = v[k] / c2;
        p[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        p[k] -= decay * p[k];
    }
}

/// Adam over an ordered list of parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Mat]) -> Self {
        Adam {
            config,
            states: params
                .iter()
                .map(|p| AdamState::new(p.rows(), p.cols()))
                .collect(),
        }
    }

    pub fn step(&mut self, params: &mut [Mat], grads: &[Mat]) {
        for ((p, g), s) in params.iter_mut().zip(grads).zip(&mut self.states) {
            adam_step(p, g, s, &self.config);
        }
    }
}
