use crate::error::{Error, Result};
use crate::numerics::params::{Gradients, ModelParams};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one buffer per parameter section.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = |p: &ModelParams| {
            p.sections()
                .iter()
                .map(|s| vec![0.0; s.values.len()])
                .collect::<Vec<_>>()
        };
        AdamState {
            m: zeros(params),
            v: zeros(params),
            step: 0,
        }
    }
}

/// One bias-corrected adaptive-moment update. Nothing is modified when any
/// gradient entry is non-finite.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if !(cfg.lr >= 0.0) || !cfg.lr.is_finite() {
        return Err(Error::invalid(format!("learning rate must be >= 0, got {}", cfg.lr)));
    }
    if grads.sections.len() != params.sections().len() || state.m.len() != grads.sections.len() {
        return Err(Error::shape(
            "adam_step",
            "gradient/state section count differs from parameters",
        ));
    }
    for (si, (sec, g)) in params.sections().iter().zip(&grads.sections).enumerate() {
        if sec.values.len() != g.len() || state.m[si].len() != g.len() {
            return Err(Error::shape(
                "adam_step",
                format!("section '{}' length mismatch", sec.name),
            ));
        }
        for t in &sec.tensors {
            if g[t.offset..t.offset + t.len()].iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient(format!("{}.{}", sec.name, t.name)));
            }
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (si, sec) in params.sections_mut().iter_mut().enumerate() {
        let g = &grads.sections[si];
        let m = &mut state.m[si];
        let v = &mut state.v[si];
        for i in 0..g.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            sec.values[i] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::Section;

    fn scalar_params(w: f64) -> ModelParams {
        let mut s = Section::with_layout("w", &[("w", 1, 1)]);
        s.values[0] = w;
        let mut p = ModelParams::new();
        p.push(s).unwrap();
        p
    }

    fn grads(g: f64) -> Gradients {
        Gradients {
            sections: vec![vec![g]],
        }
    }

    #[test]
    fn zero_gradient_leaves_params_and_decays_moments() {
        let mut p = scalar_params(1.5);
        let mut st = AdamState::new(&p);
        st.m[0][0] = 0.2;
        st.v[0][0] = 0.04;
        adam_step(&mut p, &grads(0.0), &mut st, &AdamConfig::default()).unwrap();
        // Moments decay, so the update is nonzero unless they start at zero.
        assert!((st.m[0][0] - 0.18).abs() < 1e-15);
        assert!((st.v[0][0] - 0.04 * 0.999).abs() < 1e-15);

        let mut p = scalar_params(1.5);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &grads(0.0), &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p.sections()[0].values[0], 1.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = scalar_params(0.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::with_lr(0.01);
        adam_step(&mut p, &grads(3.7), &mut st, &cfg).unwrap();
        let moved = p.sections()[0].values[0];
        assert!((moved + 0.01).abs() < 1e-9, "{moved}");
    }

    #[test]
    fn quadratic_converges() {
        // Oracle: the same recurrence evaluated with plain scalars.
        let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.1);
        for t in 1..=100 {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            w -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }

        let mut p = scalar_params(1.0);
        let mut st = AdamState::new(&p);
        let cfg = AdamConfig::with_lr(0.1);
        for _ in 0..100 {
            let w = p.sections()[0].values[0];
            adam_step(&mut p, &grads(2.0 * w), &mut st, &cfg).unwrap();
        }
        let got = p.sections()[0].values[0];
        assert_eq!(got, w);
        assert!(got.abs() < 0.05, "{got}");
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut p = scalar_params(1.0);
        let mut st = AdamState::new(&p);
        let err = adam_step(&mut p, &grads(f64::NAN), &mut st, &AdamConfig::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains("w.w"), "{err}");
        assert_eq!(st.step, 0);
    }
}
