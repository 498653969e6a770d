use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Flat input index of the maximum of every 2×2 window, in output order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    pub input_shape: Vec<usize>,
    pub argmax: Vec<usize>,
}

/// 2×2 max pooling with stride 2. Ties resolve to the first element of the
/// window in row-major order.
pub fn max_pool2<S: Scalar>(input: &Tensor<S>) -> Result<(Tensor<S>, PoolIndices)> {
    let (n, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("max_pool2 needs even height and width, got {h}x{w}")));
    }
    let (ho, wo) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let tl = base + 2 * oy * w + 2 * ox;
                let mut best = tl;
                for idx in [tl + 1, tl + w, tl + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::raw(vec![n, c, ho, wo], out),
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

pub fn max_pool2_backward<S: Scalar>(grad_out: &Tensor<S>, indices: &PoolIndices) -> Result<Tensor<S>> {
    if grad_out.len() != indices.argmax.len() {
        return Err(Error::shape(format!(
            "max_pool2_backward: grad_out has {} elements, pooling produced {}",
            grad_out.len(),
            indices.argmax.len()
        )));
    }
    let mut grad = Tensor::zeros_raw(&indices.input_shape);
    let g = grad.data_mut();
    for (&idx, &v) in indices.argmax.iter().zip(grad_out.data()) {
        g[idx] = g[idx] + v;
    }
    Ok(grad)
}
