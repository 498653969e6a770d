use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn concat_channels<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    concat_many(&[a, b])
}

/// Inverse of [`concat_channels`]: the first `ca` channels and the rest.
pub fn split_channels<S: Scalar>(t: &Tensor<S>, ca: usize) -> Result<(Tensor<S>, Tensor<S>)> {
    let (_, c, _, _) = t.dims4()?;
    if ca == 0 || ca >= c {
        return Err(Error::shape(format!("cannot split {c} channels at {ca}")));
    }
    let mut parts = split_many(t, &[ca, c - ca])?.into_iter();
    Ok((parts.next().unwrap(), parts.next().unwrap()))
}

/// Channel concatenation of any number of `[N, Ci, H, W]` tensors.
pub fn concat_many<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    let first = parts.first().ok_or_else(|| Error::shape("concat of nothing"))?;
    let (n, _, h, w) = first.dims4()?;
    let mut widths = Vec::with_capacity(parts.len());
    for p in parts {
        let (pn, pc, ph, pw) = p.dims4()?;
        if (pn, ph, pw) != (n, h, w) {
            return Err(Error::shape(format!(
                "concat: {:?} is incompatible with {:?}",
                p.shape(),
                first.shape()
            )));
        }
        widths.push(pc);
    }
    let total: usize = widths.iter().sum();
    let plane = h * w;
    let mut data = Vec::with_capacity(n * total * plane);
    for ni in 0..n {
        for (p, &c) in parts.iter().zip(&widths) {
            data.extend_from_slice(&p.data()[ni * c * plane..(ni + 1) * c * plane]);
        }
    }
    Ok(Tensor::raw(vec![n, total, h, w], data))
}

pub fn split_many<S: Scalar>(t: &Tensor<S>, widths: &[usize]) -> Result<Vec<Tensor<S>>> {
    let (n, c, h, w) = t.dims4()?;
    if widths.iter().sum::<usize>() != c || widths.contains(&0) {
        return Err(Error::shape(format!("cannot split {c} channels into {widths:?}")));
    }
    let plane = h * w;
    let mut out: Vec<Vec<S>> = widths.iter().map(|&wc| Vec::with_capacity(n * wc * plane)).collect();
    for ni in 0..n {
        let mut offset = ni * c * plane;
        for (buf, &wc) in out.iter_mut().zip(widths) {
            buf.extend_from_slice(&t.data()[offset..offset + wc * plane]);
            offset += wc * plane;
        }
    }
    Ok(out
        .into_iter()
        .zip(widths)
        .map(|(d, &wc)| Tensor::raw(vec![n, wc, h, w], d))
        .collect())
}
