//! Dense row-major n-dimensional arrays.
//!
//! Tensors are plain values: every operation returns a fresh tensor, shapes
//! never broadcast, and any mismatch is reported as [`Error::Shape`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S = f64> {
    shape: Vec<usize>,
    data: Vec<S>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape(shape.to_vec()));
    }
    Ok(shape.iter().product())
}

impl<S: Scalar> Tensor<S> {
    pub fn new(shape: &[usize], fill: S) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![fill; len],
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::new(shape, S::zero())
    }

    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {len} elements but {} were given",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for shapes already known to be valid.
    pub(crate) fn raw(shape: Vec<usize>, data: Vec<S>) -> Self {
        debug_assert!(!shape.is_empty() && !shape.contains(&0));
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub(crate) fn zeros_raw(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Self::raw(shape.to_vec(), vec![S::zero(); len])
    }

    pub fn zeros_like(&self) -> Self {
        Self::raw(self.shape.clone(), vec![S::zero(); self.data.len()])
    }

    /// Elements drawn independently from `uniform(lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let len = check_shape(shape)?;
        let data = (0..len).map(|_| S::from_real(rng.gen_range(lo..hi))).collect();
        Ok(Self::raw(shape.to_vec(), data))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(N, C, H, W)` of a 4-D tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(format!("expected a 4-D tensor, got shape {:?}", self.shape))),
        }
    }

    pub fn index4(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let (_, cs, hs, ws) = (self.shape[0], self.shape[1], self.shape[2], self.shape[3]);
        ((n * cs + c) * hs + h) * ws + w
    }

    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize) -> S {
        self.data[self.index4(n, c, h, w)]
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        Self::raw(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip_with(&self, other: &Self, what: &str, f: impl Fn(S, S) -> S) -> Result<Self> {
        self.same_shape(other, what)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self::raw(self.shape.clone(), data))
    }

    pub fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, k: S) -> Self {
        self.map(|v| v * k)
    }

    /// `self += other`, used for gradient accumulation.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "accumulate")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: S) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn reduce(&self, op: ReduceOp) -> S {
        match op {
            ReduceOp::Sum => compensated_sum(self.data.iter().copied()),
            ReduceOp::Mean => {
                // Shifting by the first element makes the mean of a constant
                // tensor exact.
                let first = self.data[0];
                let n = S::from_usize(self.data.len()).unwrap();
                first + compensated_sum(self.data.iter().map(|&v| v - first)) / n
            }
            ReduceOp::Max => self.data.iter().copied().fold(S::neg_infinity(), S::max),
        }
    }

    pub fn sum(&self) -> S {
        self.reduce(ReduceOp::Sum)
    }

    pub fn mean(&self) -> S {
        self.reduce(ReduceOp::Mean)
    }

    pub fn max(&self) -> S {
        self.reduce(ReduceOp::Max)
    }

    pub fn min(&self) -> S {
        self.data.iter().copied().fold(S::infinity(), S::min)
    }

    /// Inner product of two same-shaped tensors.
    pub fn dot(&self, other: &Self) -> Result<S> {
        self.same_shape(other, "dot")?;
        Ok(compensated_sum(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b)))
    }

    pub fn reshape(&self, new_shape: &[usize]) -> Result<Self> {
        self.clone().into_reshaped(new_shape)
    }

    pub fn into_reshaped(mut self, new_shape: &[usize]) -> Result<Self> {
        let len = check_shape(new_shape)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elements) into {new_shape:?} ({len} elements)",
                self.shape,
                self.data.len()
            )));
        }
        self.shape = new_shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sample `n` of a batched tensor as its own batch-of-one tensor.
    pub fn batch_item(&self, n: usize) -> Self {
        let per = self.data.len() / self.shape[0];
        let mut shape = self.shape.clone();
        shape[0] = 1;
        Self::raw(shape, self.data[n * per..(n + 1) * per].to_vec())
    }

    /// Stack same-shaped tensors along a new leading (batch) dimension,
    /// or along the existing leading dimension when `shape[0] == 1`.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("cannot stack an empty list"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.same_shape(t, "stack")?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = first.shape.clone();
        if shape[0] == 1 && shape.len() == 4 {
            shape[0] = items.len();
        } else {
            shape.insert(0, items.len());
        }
        Ok(Self::raw(shape, data))
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor::raw(
            self.shape.clone(),
            self.data.iter().map(|&v| T::from_real(v.to_real())).collect(),
        )
    }
}

/// Neumaier-compensated summation; the result does not depend on how the
/// caller chunks the input, only on its order.
pub fn compensated_sum<S: Scalar>(values: impl IntoIterator<Item = S>) -> S {
    let mut sum = S::zero();
    let mut comp = S::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn constant_constructors() {
        assert_eq!(Tensor::new(&[2, 2], 0.0).unwrap().data(), &[0.0; 4]);
        assert_eq!(Tensor::new(&[1, 1, 2, 2], 1.0).unwrap().data(), &[1.0; 4]);
        assert_eq!(Tensor::new(&[3], 0.5).unwrap().data(), &[0.5; 3]);
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(matches!(Tensor::<f64>::new(&[2, 0], 0.0), Err(Error::InvalidShape(_))));
        assert!(Tensor::<f64>::new(&[], 0.0).is_err());
    }

    #[test]
    fn elementwise() {
        assert_eq!(t(&[2], &[1., 2.]).add(&t(&[2], &[3., 4.])).unwrap().data(), &[4., 6.]);
        assert_eq!(t(&[2], &[2., 3.]).mul(&t(&[2], &[0., 1.])).unwrap().data(), &[0., 3.]);
        assert_eq!(t(&[2], &[-1., 2.]).map(f64::abs).data(), &[1., 2.]);
        assert!(t(&[2], &[1., 2.]).add(&t(&[1, 2], &[1., 2.])).is_err());
    }

    #[test]
    fn reductions() {
        assert_eq!(t(&[2], &[0., 1.]).mean(), 0.5);
        assert_eq!(t(&[3], &[1., 2., 3.]).sum(), 6.0);
        assert_eq!(t(&[3], &[-5., 2., 1.]).max(), 2.0);
    }

    #[test]
    fn reshape_rules() {
        let a = t(&[6], &[1., 2., 3., 4., 5., 6.]);
        let b = a.reshape(&[2, 3]).unwrap();
        assert_eq!(b.shape(), &[2, 3]);
        assert_eq!(b.data(), a.data());
        let fc = Tensor::<f64>::zeros(&[6272]).unwrap();
        assert!(fc.reshape(&[32, 14, 14]).is_ok());
        assert!(matches!(fc.reshape(&[64, 28, 28]), Err(Error::Shape(_))));
    }

    #[test]
    fn row_major_index() {
        let x = Tensor::<f64>::zeros(&[2, 3, 4, 5]).unwrap();
        assert_eq!(x.index4(1, 2, 3, 4), ((3 + 2) * 4 + 3) * 5 + 4);
    }

    proptest! {
        #[test]
        fn reshape_round_trip(data in prop::collection::vec(-1e6f64..1e6, 12)) {
            let a = t(&[12], &data);
            for s in [&[3usize, 4][..], &[2, 2, 3], &[1, 12], &[12, 1, 1]] {
                prop_assert_eq!(&a.reshape(s).unwrap().reshape(&[12]).unwrap(), &a);
            }
        }

        #[test]
        fn add_commutes(a in prop::collection::vec(-1e6f64..1e6, 8), b in prop::collection::vec(-1e6f64..1e6, 8)) {
            let (a, b) = (t(&[8], &a), t(&[8], &b));
            prop_assert_eq!(a.add(&b).unwrap(), b.add(&a).unwrap());
        }

        #[test]
        fn mean_of_constant_is_exact(c in -1e6f64..1e6, n in 1usize..500) {
            prop_assert_eq!(Tensor::new(&[n], c).unwrap().mean(), c);
        }
    }
}
