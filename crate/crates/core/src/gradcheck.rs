//! Central finite-difference gradient checking.
//!
//! The numeric side only evaluates the forward pass, so it stays independent
//! of every backward rule it is used to verify.

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

/// Smallest magnitude used as the denominator of the relative error, so that
/// entries whose true gradient is near zero are compared absolutely.
pub const REL_ERR_FLOOR: f64 = 1e-3;

/// Worst-case discrepancy between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

/// Compares the tape gradient of `f` with central differences at step `h`.
///
/// `f` receives a fresh tape and one tracked leaf per entry of `inputs` and
/// must return a scalar.
pub fn check<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let analytic: Vec<Tensor> = {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
        let loss = f(&tape, &vars)?;
        let grads = tape.backward(loss)?;
        vars.iter().map(|v| grads.get_or_zeros(*v)).collect()
    };

    let eval = |probe: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = probe.iter().map(|t| tape.constant(t.clone())).collect();
        f(&tape, &vars)?.value().item()
    };

    let mut worst = GradCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        for i in 0..input.numel() {
            let orig = input.data()[i];
            probe[which].data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe[which].data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe[which].data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * h);
            let exact = analytic[which].data()[i];
            let abs = (numeric - exact).abs();
            let rel = abs / numeric.abs().max(exact.abs()).max(REL_ERR_FLOOR);
            worst.max_abs_err = worst.max_abs_err.max(abs);
            worst.max_rel_err = worst.max_rel_err.max(rel);
        }
    }
    Ok(worst)
}
