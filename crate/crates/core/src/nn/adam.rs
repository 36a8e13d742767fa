//! Adam optimiser over the model's parameter tensors.

use ndarray::ArrayD;

use super::model::{ModelError, UmModel};
use super::UmGradients;

/// Adam hyperparameters. Defaults are the standard values with the
/// learning rate used throughout this crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// First/second moment accumulators, shaped like the model parameters, plus
/// the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub(crate) hyper: AdamHyper,
    pub(crate) t: u64,
    pub(crate) m: Vec<ArrayD<f64>>,
    pub(crate) v: Vec<ArrayD<f64>>,
}

impl AdamState {
    pub fn new(model: &UmModel, hyper: AdamHyper) -> Self {
        let zeros: Vec<ArrayD<f64>> = model
            .param_views()
            .iter()
            .map(|p| ArrayD::zeros(p.shape()))
            .collect();
        Self {
            hyper,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn hyper(&self) -> AdamHyper {
        self.hyper
    }
}

/// One bias-corrected Adam update on a flat parameter slice.
pub fn adam_update_slice(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    hyper: &AdamHyper,
) {
    let b1 = hyper.beta1;
    let b2 = hyper.beta2;
    let bias1 = 1.0 - b1.powi(t as i32);
    let bias2 = 1.0 - b2.powi(t as i32);
    for i in 0..params.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grads[i] * grads[i];
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        params[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
    }
}

/// Applies one Adam step to every parameter tensor.
pub fn adam_step(
    model: &mut UmModel,
    grads: &UmGradients,
    state: &mut AdamState,
) -> Result<(), ModelError> {
    let mut params = model.param_views_mut();
    if grads.tensors.len() != params.len() || state.m.len() != params.len() {
        return Err(ModelError::TensorCount {
            expected: params.len(),
            got: grads.tensors.len(),
        });
    }
    state.t += 1;
    let t = state.t;
    let hyper = state.hyper;
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        adam_update_slice(
            p.as_slice_mut().expect("standard layout"),
            g.as_slice().expect("standard layout"),
            m.as_slice_mut().expect("standard layout"),
            v.as_slice_mut().expect("standard layout"),
            t,
            &hyper,
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bn::LayerSizes;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut model = UmModel::init(LayerSizes::new(1, 1, 1).unwrap(), 2);
        let before = model.clone();
        let zeros = UmGradients {
            tensors: model
                .param_views()
                .iter()
                .map(|p| ArrayD::zeros(p.shape()))
                .collect(),
        };
        let mut state = AdamState::new(&model, AdamHyper::default());
        adam_step(&mut model, &zeros, &mut state).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate_times_sign() {
        let hyper = AdamHyper::default();
        let before = [1.0, -2.0, 0.5];
        let mut params = before;
        let grads = [0.3, -0.7, 2.0];
        let mut m = [0.0; 3];
        let mut v = [0.0; 3];
        adam_update_slice(&mut params, &grads, &mut m, &mut v, 1, &hyper);
        for i in 0..3 {
            let step = before[i] - params[i];
            // After bias correction, step ≈ lr * sign(g).
            let ideal = hyper.learning_rate * grads[i].signum();
            assert!((step - ideal).abs() < hyper.learning_rate * 1e-3);
        }
    }

    #[test]
    fn converges_on_a_convex_quadratic() {
        // Minimise f(x) = Σ xᵢ² with gradients 2x. Momentum makes single
        // steps wobble at sign crossings, so monotonicity is asserted on a
        // coarse grid after warm-up, until the floor is reached.
        let hyper = AdamHyper::with_learning_rate(0.05);
        let mut x = vec![1.5, -2.0, 0.7, 3.0];
        let mut m = vec![0.0; 4];
        let mut v = vec![0.0; 4];
        let f = |x: &[f64]| x.iter().map(|&a| a * a).sum::<f64>();
        let mut checkpoints = vec![f(&x)];
        for t in 1..=1000u64 {
            let g: Vec<f64> = x.iter().map(|&a| 2.0 * a).collect();
            adam_update_slice(&mut x, &g, &mut m, &mut v, t, &hyper);
            if t % 100 == 0 {
                checkpoints.push(f(&x));
            }
        }
        for pair in checkpoints.windows(2) {
            if pair[0] > 1e-4 {
                assert!(pair[1] < pair[0], "objective rose: {pair:?}");
            }
        }
        assert!(*checkpoints.last().unwrap() < 1e-3);
    }

    #[test]
    fn mismatched_tensor_count_is_rejected() {
        let mut model = UmModel::init(LayerSizes::new(1, 1, 1).unwrap(), 2);
        let grads = UmGradients { tensors: vec![] };
        let mut state = AdamState::new(&model, AdamHyper::default());
        assert!(matches!(
            adam_step(&mut model, &grads, &mut state),
            Err(ModelError::TensorCount { .. })
        ));
    }
}
