use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn relu<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    t.map(|v| if v > S::zero() { v } else { S::zero() })
}

/// Gradient through ReLU given either its input or its output (both are
/// positive at exactly the same positions). The derivative at 0 is 0.
pub fn relu_backward<S: Scalar>(activation: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    activation.same_shape(grad_out, "relu_backward")?;
    let data = activation
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&a, &g)| if a > S::zero() { g } else { S::zero() })
        .collect();
    Ok(Tensor::raw(activation.shape().to_vec(), data))
}

pub fn sigmoid_scalar<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub fn sigmoid<S: Scalar>(t: &Tensor<S>) -> Tensor<S> {
    t.map(sigmoid_scalar)
}

/// Gradient through the logistic function given its output `σ(x)`.
pub fn sigmoid_backward<S: Scalar>(output: &Tensor<S>, grad_out: &Tensor<S>) -> Result<Tensor<S>> {
    output.same_shape(grad_out, "sigmoid_backward")?;
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (S::one() - s))
        .collect();
    Ok(Tensor::raw(output.shape().to_vec(), data))
}
