use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Source sample positions and weights along one axis, half-pixel-center
/// aligned: output pixel `o` samples input coordinate `(o + 0.5)·in/out - 0.5`,
/// clamped to the valid range.
fn taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

/// Bilinear resize of `[C, H, W]`.
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = match *t.shape() {
        [c, h, w] => (c, h, w),
        ref s => return Err(Error::shape(format!("resize expects [C, H, W], got {s:?}"))),
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidShape(vec![c, out_h, out_w]));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(t.clone());
    }
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &t.data()[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bottom = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Tensor::from_vec(&[c, out_h, out_w], out)
}

/// Resize a binary mask and re-binarize at 0.5.
pub fn resize_mask(mask: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    Ok(resize_bilinear(mask, out_h, out_w)?.map(|v| if v > 0.5 { 1.0 } else { 0.0 }))
}
