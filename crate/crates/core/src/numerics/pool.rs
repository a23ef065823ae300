use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Max pooling over `k×k` windows. Returns the output and, for every output
/// element, the flat index of the selected input element.
///
/// Ties go to the first maximum in row-major order within the window, so the
/// backward pass routes the whole gradient to that element.
pub fn maxpool2d<T: Scalar>(x: &Tensor<T>, k: usize, stride: usize) -> Result<(Tensor<T>, Vec<u32>)> {
    let [n, c, h, w] = x.dims4()?;
    if k == 0 || stride == 0 {
        return Err(Error::dim("pool size and stride must be at least 1"));
    }
    if k > h || k > w {
        return Err(Error::dim(format!("pool size {k} exceeds input {h}x{w}")));
    }
    let oh = (h - k) / stride + 1;
    let ow = (w - k) / stride + 1;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    let data = x.data();
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = base + oy * stride * w + ox * stride;
                let mut best = data[best_idx];
                for i in 0..k {
                    let row = base + (oy * stride + i) * w + ox * stride;
                    for j in 0..k {
                        let v = data[row + j];
                        if v > best {
                            best = v;
                            best_idx = row + j;
                        }
                    }
                }
                out.push(best);
                arg.push(best_idx as u32);
            }
        }
    }
    Ok((Tensor::from_parts(vec![n, c, oh, ow], out), arg))
}

pub fn maxpool2d_backward<T: Scalar>(input_shape: &[usize], argmax: &[u32], dy: &Tensor<T>) -> Tensor<T> {
    let mut dx = Tensor::zeros(input_shape.to_vec());
    let d = dx.data_mut();
    for (&i, &g) in argmax.iter().zip(dy.data()) {
        d[i as usize] += g;
    }
    dx
}

/// Mean over the spatial axes: `[N, C, H, W]` to `[N, C]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4()?;
    let hw = h * w;
    let inv = T::ONE / T::from_f64(hw as f64);
    let out = x
        .data()
        .chunks_exact(hw)
        .map(|plane| {
            let mut acc = T::ZERO;
            for &v in plane {
                acc += v;
            }
            acc * inv
        })
        .collect();
    Ok(Tensor::from_parts(vec![n, c], out))
}

pub fn global_avg_pool_backward<T: Scalar>(input_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
    let hw = input_shape[2] * input_shape[3];
    let inv = T::ONE / T::from_f64(hw as f64);
    let mut data = Vec::with_capacity(hw * dy.len());
    for &g in dy.data() {
        data.extend(std::iter::repeat_n(g * inv, hw));
    }
    Tensor::from_parts(input_shape.to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_window_max() {
        let x = Tensor::<f64>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, _) = maxpool2d(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn ties_route_gradient_to_first_occurrence() {
        let x = Tensor::<f64>::full([1, 1, 4, 4], 7.0);
        let (y, arg) = maxpool2d(&x, 2, 2).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
        let dx = maxpool2d_backward(x.shape(), &arg, &Tensor::full([1, 1, 2, 2], 1.0));
        let expected: Vec<f64> = (0..16)
            .map(|i| {
                let (r, c) = (i / 4, i % 4);
                if r % 2 == 0 && c % 2 == 0 { 1.0 } else { 0.0 }
            })
            .collect();
        assert_eq!(dx.data(), &expected[..]);
    }

    #[test]
    fn oversized_window_is_dimension_error() {
        let x = Tensor::<f32>::zeros([1, 1, 3, 1]);
        assert!(matches!(maxpool2d(&x, 2, 2), Err(Error::Dimension(_))));
    }
}
