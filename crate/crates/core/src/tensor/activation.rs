use super::Tensor5;
use crate::error::{Error, Result};

/// `y = x` for `x >= 0`, `slope * x` otherwise.
pub fn leaky_relu(input: &Tensor5, slope: f64) -> Tensor5 {
    let data = input
        .as_slice()
        .iter()
        .map(|&x| if x >= 0.0 { x } else { slope * x })
        .collect();
    Tensor5::from_raw(input.dims(), data)
}

/// Gradient of [`leaky_relu`].
///
/// `activation` may be either the layer input or its output: with a positive
/// slope both have the same sign pattern, and zero takes the identity branch.
pub fn leaky_relu_backward(activation: &Tensor5, grad_output: &Tensor5, slope: f64) -> Result<Tensor5> {
    if activation.dims() != grad_output.dims() {
        return Err(Error::Shape(format!(
            "leaky_relu_backward: {} vs {}",
            activation.dims(),
            grad_output.dims()
        )));
    }
    let data = activation
        .as_slice()
        .iter()
        .zip(grad_output.as_slice())
        .map(|(&a, &g)| if a >= 0.0 { g } else { slope * g })
        .collect();
    Ok(Tensor5::from_raw(activation.dims(), data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims5;

    #[test]
    fn forward_examples() {
        let d = Dims5::new(1, 1, 1, 1, 3);
        let x = Tensor5::from_vec(d, vec![0.0, 2.5, -2.0]).unwrap();
        let y = leaky_relu(&x, 0.1);
        assert_eq!(y.as_slice()[..2], [0.0, 2.5]);
        assert!((y.as_slice()[2] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let d = Dims5::new(1, 1, 1, 1, 2);
        let x = Tensor5::from_vec(d, vec![0.5, -0.5]).unwrap();
        let ones = Tensor5::filled(d, 1.0).unwrap();
        let g = leaky_relu_backward(&x, &ones, 0.1).unwrap();
        let h = 1e-4;
        for i in 0..2 {
            let mut p = x.clone();
            p.as_mut_slice()[i] += h;
            let mut m = x.clone();
            m.as_mut_slice()[i] -= h;
            let fd = (leaky_relu(&p, 0.1).as_slice()[i] - leaky_relu(&m, 0.1).as_slice()[i]) / (2.0 * h);
            assert!((fd - g.as_slice()[i]).abs() < 1e-6);
        }
        // Post-activation tensor gives the same gradient.
        let y = leaky_relu(&x, 0.1);
        assert_eq!(leaky_relu_backward(&y, &ones, 0.1).unwrap(), g);
    }
}
