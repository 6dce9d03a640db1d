use crate::model::{Gradients, Parameters};
use crate::numerics::l2_norm_squared;

use super::OptimizerConfig;

/// First and second moment estimates, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Parameters,
    pub v: Parameters,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam step, in place.
pub fn adam_update(params: &mut Parameters, grads: &Gradients, state: &mut AdamState, config: &OptimizerConfig) {
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2) = (config.beta1, config.beta2);
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    let arrays = params
        .arrays_mut()
        .into_iter()
        .zip(grads.arrays())
        .zip(state.m.arrays_mut().into_iter().zip(state.v.arrays_mut()));
    for (((_, theta), (_, _, g)), ((_, m), (_, v))) in arrays {
        for k in 0..theta.len() {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            let m_hat = m[k] / correction1;
            let v_hat = v[k] / correction2;
            theta[k] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.epsilon);
        }
    }
}

pub fn global_norm(grads: &Gradients) -> f64 {
    grads.arrays().iter().map(|(_, _, v)| l2_norm_squared(v)).sum::<f64>().sqrt()
}

/// Rescales all arrays together so the global L2 norm is at most
/// `clip_norm`. Returns the norm before clipping.
pub fn clip_gradients(grads: &mut Gradients, clip_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::numerics::SeededRng;
    use proptest::prelude::*;

    fn one_of_each() -> ModelConfig {
        ModelConfig::new(1, 1, 1, 1).unwrap()
    }

    fn filled(config: &ModelConfig, value: f64) -> Parameters {
        let mut p = Parameters::zeros(config);
        for (_, v) in p.arrays_mut() {
            v.fill(value);
        }
        p
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let c = ModelConfig::new(3, 2, 2, 4).unwrap();
        let mut p = Parameters::init(&c, &mut SeededRng::new(0));
        let before = p.clone();
        let mut state = AdamState::new(&p);
        let zero = p.zeros_like();
        for _ in 0..25 {
            adam_update(&mut p, &zero, &mut state, &OptimizerConfig::default());
        }
        assert_eq!(p, before);
        assert_eq!(state.step, 25);
    }

    #[test]
    fn first_scalar_step() {
        let c = one_of_each();
        let mut p = filled(&c, 1.0);
        let g = filled(&c, 1.0);
        let mut state = AdamState::new(&p);
        let cfg = OptimizerConfig {
            learning_rate: 0.1,
            epsilon: 1e-8,
            ..Default::default()
        };
        adam_update(&mut p, &g, &mut state, &cfg);
        for (_, _, v) in p.arrays() {
            for &x in v {
                assert!((x - 0.9).abs() < 1e-8, "{x}");
            }
        }
        assert_eq!(state.step, 1);
    }

    #[test]
    fn clipping_cases() {
        let c = one_of_each();
        // 13 arrays of one or two entries; build a gradient of norm 10.
        let mut g = Parameters::zeros(&c);
        g.cls_b = vec![6.0, 8.0];
        let norm = clip_gradients(&mut g, 5.0);
        assert!((norm - 10.0).abs() < 1e-12);
        assert_eq!(g.cls_b, vec![3.0, 4.0]);

        let mut g = Parameters::zeros(&c);
        g.proj_b = vec![3.0];
        clip_gradients(&mut g, 5.0);
        assert_eq!(g.proj_b, vec![3.0]);
    }

    proptest! {
        #[test]
        fn clipped_norm_is_min_of_norm_and_threshold(seed in any::<u64>(), clip in 0.01f64..20.0) {
            let c = ModelConfig::new(3, 2, 3, 4).unwrap();
            let mut rng = SeededRng::new(seed);
            let scale = rng.uniform_range(0.0, 5.0);
            let mut g = Parameters::zeros(&c);
            for (_, v) in g.arrays_mut() {
                v.iter_mut().for_each(|x| *x = scale * rng.gaussian());
            }
            let before = global_norm(&g);
            clip_gradients(&mut g, clip);
            let after = global_norm(&g);
            prop_assert!((after - before.min(clip)).abs() <= 1e-10);
            prop_assert!(after <= clip + 1e-9);
        }
    }
}
