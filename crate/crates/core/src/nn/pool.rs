use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Max pooling with window 2 along every spatial axis longer than 1.
///
/// Accepts `[batch, channels, len]` (1-D) or `[batch, channels, d1, d2, d3]` (3-D).
/// Odd lengths are floored; axes of length 1 pass through unpooled.
#[derive(Clone, Debug, Default)]
pub struct MaxPool {
    cache: Option<(Vec<usize>, Vec<usize>)>,
}

fn pooled_dim(d: usize) -> (usize, usize) {
    if d > 1 {
        (2, d / 2)
    } else {
        (1, d)
    }
}

/// Output shape of [`MaxPool`] for a given input shape.
pub fn pooled_shape(shape: &[usize]) -> Vec<usize> {
    let mut out = shape.to_vec();
    for d in out.iter_mut().skip(2) {
        *d = pooled_dim(*d).1;
    }
    out
}

impl MaxPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let spatial = match x.rank() {
            3 => [1, x.dim(2), 1],
            5 => [x.dim(2), x.dim(3), x.dim(4)],
            _ => return Err(Error::shape("maxpool", &[0, 0, 0], x.shape())),
        };
        let (w1, o1) = pooled_dim(spatial[0]);
        let (w2, o2) = pooled_dim(spatial[1]);
        let (w3, o3) = pooled_dim(spatial[2]);
        let planes = x.dim(0) * x.dim(1);
        let vol = spatial.iter().product::<usize>();
        let ovol = o1 * o2 * o3;
        let xd = x.data();
        let mut y = Vec::with_capacity(planes * ovol);
        let mut arg = Vec::with_capacity(planes * ovol);
        for p in 0..planes {
            let base = p * vol;
            for i in 0..o1 {
                for j in 0..o2 {
                    for k in 0..o3 {
                        let mut best = usize::MAX;
                        let mut bv = T::neg_infinity();
                        for a in 0..w1 {
                            for b in 0..w2 {
                                for c in 0..w3 {
                                    let idx = base
                                        + ((i * w1 + a) * spatial[1] + (j * w2 + b)) * spatial[2]
                                        + (k * w3 + c);
                                    // strict > keeps the first maximum on ties
                                    if best == usize::MAX || xd[idx] > bv {
                                        bv = xd[idx];
                                        best = idx;
                                    }
                                }
                            }
                        }
                        y.push(bv);
                        arg.push(best);
                    }
                }
            }
        }
        let out_shape = pooled_shape(x.shape());
        self.cache = Some((x.shape().to_vec(), arg));
        Tensor::from_vec(&out_shape, y)
    }

    pub fn backward<T: Scalar>(&mut self, grad: &Tensor<T>) -> Result<Tensor<T>> {
        let (shape, arg) = self
            .cache
            .take()
            .ok_or_else(|| Error::NoForwardCache("maxpool".into()))?;
        if grad.len() != arg.len() {
            return Err(Error::shape("maxpool backward", &pooled_shape(&shape), grad.shape()));
        }
        let mut dx = Tensor::zeros(&shape);
        let d = dx.data_mut();
        for (&i, &g) in arg.iter().zip(grad.data()) {
            d[i] += g;
        }
        Ok(dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool1d_example() {
        let x = Tensor::<f64>::from_f64(&[1, 1, 4], &[1., 5., 2., 4.]).unwrap();
        let mut p = MaxPool::new();
        let y = p.forward(&x).unwrap();
        assert_eq!(y.data(), &[5., 4.]);
        let dx = p.backward(&Tensor::<f64>::from_f64(&[1, 1, 2], &[1., 2.]).unwrap()).unwrap();
        assert_eq!(dx.data(), &[0., 1., 0., 2.]);
    }

    #[test]
    fn pool3d_shape_arithmetic() {
        assert_eq!(pooled_shape(&[2, 32, 40, 64, 4]), vec![2, 32, 20, 32, 2]);
        assert_eq!(pooled_shape(&[2, 64, 20, 32, 2]), vec![2, 64, 10, 16, 1]);
        assert_eq!(pooled_shape(&[2, 128, 10, 16, 1]), vec![2, 128, 5, 8, 1]);
        assert_eq!(pooled_shape(&[1, 1, 5]), vec![1, 1, 2]);
    }
}
