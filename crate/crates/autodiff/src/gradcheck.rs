use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Compares tape gradients of a scalar function against central finite
/// differences and returns the largest relative error over every input
/// element, using `max(|analytic|, |numeric|, 1e-8)` as denominator.
pub fn grad_check<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(AutodiffError::InvalidHyperparameter(format!(
            "step must be positive, got {h}"
        )));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape
            .value(out)
            .item()
            .ok_or_else(|| AutodiffError::NonScalarRoot(tape.shape(out).to_vec()))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(AutodiffError::NonFiniteValue)
        }
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.leaf(t.clone().requiring_grad()))
        .collect();
    let out = f(&mut tape, &vars)?;
    if !tape.value(out).is_finite() {
        return Err(AutodiffError::NonFiniteValue);
    }
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (idx, &v) in vars.iter().enumerate() {
        let analytic = grads.get(v).expect("leaf requires grad").data().to_vec();
        for (j, &a) in analytic.iter().enumerate() {
            let orig = work[idx].data()[j];
            work[idx].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[idx].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[idx].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
