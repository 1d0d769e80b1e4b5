use super::params::ParamStore;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;
pub const NESTEROV_MOMENTUM: f64 = 0.9;

/// Bias-corrected Adam update of one parameter slice in place.
/// `t` is the 1-based step count after this update.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    t: u64,
    beta1: f64,
    beta2: f64,
) {
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for i in 0..p.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let mhat = m[i] / bc1;
        let vhat = v[i] / bc2;
        p[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
}

/// First and second moment estimates, aligned with `ParamStore::arrays`.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> Self {
        let zero: Vec<Vec<f64>> = params.arrays().iter().map(|a| vec![0.0; a.len()]).collect();
        AdamState {
            m: zero.clone(),
            v: zero,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite("parameter gradients".into()));
        }
        self.t += 1;
        let garrays = grads.arrays();
        for (ai, p) in params.arrays_mut().into_iter().enumerate() {
            adam_update(
                p,
                garrays[ai],
                &mut self.m[ai],
                &mut self.v[ai],
                lr,
                self.t,
                ADAM_BETA1,
                ADAM_BETA2,
            );
        }
        Ok(())
    }
}

/// Velocity buffers for classical Nesterov momentum:
/// v <- mu*v - lr*g(theta + mu*v); theta <- theta + v.
#[derive(Debug, Clone)]
pub struct NesterovState {
    v: Vec<Vec<f64>>,
    pub momentum: f64,
}

impl NesterovState {
    pub fn new(params: &ParamStore) -> Self {
        NesterovState {
            v: params.arrays().iter().map(|a| vec![0.0; a.len()]).collect(),
            momentum: NESTEROV_MOMENTUM,
        }
    }

    /// Parameters shifted to the lookahead point theta + mu*v, where the
    /// gradient must be evaluated.
    pub fn lookahead(&self, params: &ParamStore) -> ParamStore {
        let mut shifted = params.clone();
        for (ai, arr) in shifted.arrays_mut().into_iter().enumerate() {
            for (p, &vel) in arr.iter_mut().zip(&self.v[ai]) {
                *p += self.momentum * vel;
            }
        }
        shifted
    }

    /// Applies the velocity update given gradients taken at the lookahead
    /// point.
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore, lr: f64) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite("parameter gradients".into()));
        }
        let garrays = grads.arrays();
        for (ai, p) in params.arrays_mut().into_iter().enumerate() {
            for i in 0..p.len() {
                self.v[ai][i] = self.momentum * self.v[ai][i] - lr * garrays[ai][i];
                p[i] += self.v[ai][i];
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_magnitude_is_lr() {
        // p=1, g=1, lr=0.1, t=1: bias correction makes mhat=vhat=1, so the
        // step is lr/(1+eps) and p lands at ~0.9
        let mut p = vec![1.0];
        let mut m = vec![0.0];
        let mut v = vec![0.0];
        adam_update(&mut p, &[1.0], &mut m, &mut v, 0.1, 1, ADAM_BETA1, ADAM_BETA2);
        assert!((p[0] - 0.9).abs() < 1e-8, "got {}", p[0]);
    }

    #[test]
    fn adam_is_scale_invariant_in_gradient_magnitude() {
        let mut p1 = vec![0.0];
        let (mut m1, mut v1) = (vec![0.0], vec![0.0]);
        let mut p2 = vec![0.0];
        let (mut m2, mut v2) = (vec![0.0], vec![0.0]);
        for t in 1..=5 {
            adam_update(&mut p1, &[2.0], &mut m1, &mut v1, 0.01, t, ADAM_BETA1, ADAM_BETA2);
            adam_update(&mut p2, &[200.0], &mut m2, &mut v2, 0.01, t, ADAM_BETA1, ADAM_BETA2);
        }
        assert!((p1[0] - p2[0]).abs() < 1e-6);
    }

    #[test]
    fn nesterov_first_step_from_rest_is_plain_sgd() {
        let mut v = NesterovState {
            v: vec![vec![0.0]],
            momentum: 0.9,
        };
        // fake single-array stores by hand
        let g = 0.5;
        let lr = 0.1;
        let mut p = 1.0;
        // lookahead with zero velocity is the identity
        v.v[0][0] = v.momentum * v.v[0][0] - lr * g;
        p += v.v[0][0];
        assert!((p - (1.0 - lr * g)).abs() < 1e-12);
    }

    #[test]
    fn nesterov_quadratic_converges_faster_than_heavy_ball_start() {
        // minimize f(x)=x^2/2 (grad x); classical Nesterov evaluates the
        // gradient at the lookahead point, so after two steps from x=1:
        // step1: v=-lr*1, x=1-lr
        // step2: v=mu*v - lr*(x+mu*v), x+=v
        let (lr, mu) = (0.1, 0.9);
        let mut x = 1.0f64;
        let mut v = 0.0f64;
        for _ in 0..2 {
            let g = x + mu * v; // gradient of x^2/2 at lookahead
            v = mu * v - lr * g;
            x += v;
        }
        let expected = {
            let x1: f64 = 1.0 - 0.1;
            let v1: f64 = -0.1;
            let g = x1 + 0.9 * v1;
            let v2 = 0.9 * v1 - 0.1 * g;
            x1 + v2
        };
        assert!((x - expected).abs() < 1e-12);
    }
}
