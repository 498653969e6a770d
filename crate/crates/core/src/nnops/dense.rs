use crate::error::{Error, Result};
use crate::scalar::{MatRef, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct DenseGrads<S = f64> {
    pub input: Tensor<S>,
    pub weights: Tensor<S>,
    pub bias: Tensor<S>,
}

fn dims<S: Scalar>(input: &Tensor<S>, weights: &Tensor<S>, bias: &Tensor<S>) -> Result<(usize, usize, usize)> {
    let (n, d) = match input.shape() {
        &[n, d] => (n, d),
        s => return Err(Error::shape(format!("fully_connected input must be [N, D], got {s:?}"))),
    };
    let m = match weights.shape() {
        &[m, wd] if wd == d => m,
        s => return Err(Error::shape(format!("fully_connected weights {s:?} do not match input width {d}"))),
    };
    if bias.shape() != [m] {
        return Err(Error::shape(format!("fully_connected bias {:?} should be [{m}]", bias.shape())));
    }
    Ok((n, d, m))
}

/// `out[n, m] = Σ_d w[m, d] · in[n, d] + b[m]`.
pub fn fully_connected<S: Scalar>(input: &Tensor<S>, weights: &Tensor<S>, bias: &Tensor<S>) -> Result<Tensor<S>> {
    let (n, d, m) = dims(input, weights, bias)?;
    let mut out = Vec::with_capacity(n * m);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    S::gemm(
        n,
        d,
        m,
        S::one(),
        MatRef::rows(input.data(), d),
        MatRef::transposed(weights.data(), d),
        S::one(),
        &mut out,
    );
    Ok(Tensor::raw(vec![n, m], out))
}

pub fn fully_connected_backward<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    grad_out: &Tensor<S>,
) -> Result<DenseGrads<S>> {
    let (n, d, m) = dims(input, weights, bias)?;
    if grad_out.shape() != [n, m] {
        return Err(Error::shape(format!(
            "fully_connected_backward: grad_out {:?} should be [{n}, {m}]",
            grad_out.shape()
        )));
    }
    let mut gi = vec![S::zero(); n * d];
    S::gemm(
        n,
        m,
        d,
        S::one(),
        MatRef::rows(grad_out.data(), m),
        MatRef::rows(weights.data(), d),
        S::zero(),
        &mut gi,
    );
    let mut gw = vec![S::zero(); m * d];
    S::gemm(
        m,
        n,
        d,
        S::one(),
        MatRef::transposed(grad_out.data(), m),
        MatRef::rows(input.data(), d),
        S::zero(),
        &mut gw,
    );
    let mut gb = vec![S::zero(); m];
    for row in grad_out.data().chunks(m) {
        for (a, &b) in gb.iter_mut().zip(row) {
            *a = *a + b;
        }
    }
    Ok(DenseGrads {
        input: Tensor::raw(vec![n, d], gi),
        weights: Tensor::raw(vec![m, d], gw),
        bias: Tensor::raw(vec![m], gb),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights() {
        let x = Tensor::from_vec(&[2, 3], vec![1., -2., 3., 4., 5., -6.]).unwrap();
        let mut w = Tensor::zeros(&[3, 3]).unwrap();
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let b = Tensor::zeros(&[3]).unwrap();
        assert_eq!(fully_connected(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn small_arithmetic() {
        let x = Tensor::from_vec(&[1, 2], vec![1., 2.]).unwrap();
        let w = Tensor::from_vec(&[1, 2], vec![3., 4.]).unwrap();
        let b = Tensor::from_vec(&[1], vec![1.]).unwrap();
        assert_eq!(fully_connected(&x, &w, &b).unwrap().data(), &[12.0]);
    }

    #[test]
    fn mismatch_rejected() {
        let x = Tensor::<f64>::zeros(&[1, 3]).unwrap();
        let w = Tensor::zeros(&[2, 2]).unwrap();
        let b = Tensor::zeros(&[2]).unwrap();
        assert!(fully_connected(&x, &w, &b).is_err());
    }
}
