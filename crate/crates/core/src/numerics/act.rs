use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};

pub const LEAKY_SLOPE: f64 = 0.01;

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    /// Tanh approximation of GELU.
    Gelu,
    /// `x · clamp(x + 3, 0, 6) / 6`.
    Hswish,
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_C: f64 = 0.044_715;

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::ZERO),
            Activation::LeakyRelu => {
                if x > T::ZERO {
                    x
                } else {
                    x * T::from_f64(LEAKY_SLOPE)
                }
            }
            Activation::Gelu => {
                let inner = T::from_f64(GELU_K) * (x + T::from_f64(GELU_C) * x * x * x);
                T::from_f64(0.5) * x * (T::ONE + inner.tanh())
            }
            Activation::Hswish => {
                let r = (x + T::from_f64(3.0)).max(T::ZERO).min(T::from_f64(6.0));
                x * r / T::from_f64(6.0)
            }
        }
    }

    /// Derivative at `x` (right derivative at kinks).
    #[inline]
    pub fn derivative<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x > T::ZERO {
                    T::ONE
                } else {
                    T::ZERO
                }
            }
            Activation::LeakyRelu => {
                if x > T::ZERO {
                    T::ONE
                } else {
                    T::from_f64(LEAKY_SLOPE)
                }
            }
            Activation::Gelu => {
                let k = T::from_f64(GELU_K);
                let c = T::from_f64(GELU_C);
                let half = T::from_f64(0.5);
                let t = (k * (x + c * x * x * x)).tanh();
                let dinner = k * (T::ONE + T::from_f64(3.0) * c * x * x);
                half * (T::ONE + t) + half * x * (T::ONE - t * t) * dinner
            }
            Activation::Hswish => {
                let three = T::from_f64(3.0);
                if x < -three {
                    T::ZERO
                } else if x > three {
                    T::ONE
                } else {
                    (T::from_f64(2.0) * x + three) / T::from_f64(6.0)
                }
            }
        }
    }

    pub fn forward<T: Scalar>(self, x: &Tensor<T>) -> Tensor<T> {
        x.map(|v| self.apply(v))
    }

    pub fn backward<T: Scalar>(self, x: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
        let data = x
            .data()
            .iter()
            .zip(dy.data())
            .map(|(&v, &g)| g * self.derivative(v))
            .collect();
        Tensor::from_parts(x.shape().to_vec(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_values() {
        assert_eq!(Activation::Relu.apply(-1.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(2.0f64), 2.0);
        assert_eq!(Activation::Hswish.apply(3.0f64), 3.0);
        assert_eq!(Activation::Hswish.apply(-3.0f64), 0.0);
        assert_eq!(Activation::LeakyRelu.apply(-2.0f64), -0.02);
        assert!(Activation::Gelu.apply(0.0f64).abs() < 1e-15);
        assert!((Activation::Gelu.apply(10.0f64) - 10.0).abs() < 1e-9);
    }
}
