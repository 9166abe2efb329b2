use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares tape gradients of a scalar function against central finite
/// differences.
///
/// Returns `max |numeric - analytic| / max(1, |analytic|)` over every
/// coordinate of every input.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor<f64>], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |xs: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.param(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite("grad_check objective".into()));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, var) in vars.iter().enumerate() {
        let analytic = grads
            .get(*var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(inputs[i].dims().to_vec()));
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            probe[i].data_mut()[j] = orig + h;
            let plus = eval(&probe)?;
            probe[i].data_mut()[j] = orig - h;
            let minus = eval(&probe)?;
            probe[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let g = analytic.data()[j];
            worst = worst.max((numeric - g).abs() / g.abs().max(1.0));
        }
    }
    Ok(worst)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    grad_check_many(|t, v| f(t, v[0]), std::slice::from_ref(x), h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_has_zero_error() {
        let x = Tensor::new([3], vec![0.25, -1.5, 2.0]).unwrap();
        let err = grad_check(|t, v| t.sum_all(v), &x, 0.5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn half_squared_norm() {
        let x = Tensor::new([2], vec![3.0, 4.0]).unwrap();
        let f = |t: &mut Tape<f64>, v: Var| {
            let sq = t.square(v)?;
            let s = t.sum_all(sq)?;
            t.scale(s, 0.5)
        };
        let mut tape = Tape::new();
        let v = tape.param(x.clone());
        let out = f(&mut tape, v).unwrap();
        let g = tape.backward(out).unwrap();
        assert_eq!(g.get(v).unwrap().data(), &[3.0, 4.0]);
        assert!(grad_check(f, &x, 1e-5).unwrap() < 1e-8);
    }
}
