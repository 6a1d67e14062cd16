use super::{Tape, Var};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Compares reverse-mode gradients of a scalar program against central
/// differences. Returns `max |analytic − numeric| / max(1, |analytic|)` over
/// every coordinate of every input.
///
/// `f` receives a fresh tape and one trainable leaf per input and must be
/// deterministic (seed any randomness inside it).
pub fn finite_difference_check_multi<F>(f: F, inputs: &[Mat], step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if step <= 0.0 {
        return Err(Error::Config(format!("finite-difference step {step} must be positive")));
    }
    let eval = |xs: &[Mat]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out)[(0, 0)];
        if !v.is_finite() {
            return Err(Error::Numeric("program output is not finite".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Mat> = vars
        .iter()
        .zip(inputs)
        .map(|(v, x)| grads.get_or_zeros(*v, x.shape()))
        .collect();

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Mat> = inputs.to_vec();
    for (t, input) in inputs.iter().enumerate() {
        for k in 0..input.as_slice().len() {
            let orig = input.as_slice()[k];
            probe[t].as_mut_slice()[k] = orig + step;
            let plus = eval(&probe)?;
            probe[t].as_mut_slice()[k] = orig - step;
            let minus = eval(&probe)?;
            probe[t].as_mut_slice()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[t].as_slice()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Single-input form of [`finite_difference_check_multi`].
pub fn finite_difference_check<F>(f: F, x: &Mat, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    finite_difference_check_multi(|t, v| f(t, v[0]), std::slice::from_ref(x), step)
}
