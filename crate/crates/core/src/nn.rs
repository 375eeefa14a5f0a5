//! Dense layers over a shared [`ParamSet`].

use rand::Rng;

use crate::autodiff::{ParamId, ParamSet, Tensor};
use crate::error::Result;
use crate::scalar::Scalar;

/// Affine map `x·W + b` with `W: in×out`.
#[derive(Debug, Clone)]
pub struct Linear {
    weight: ParamId,
    bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Uniform init in `±1/√in`, the usual fan-in scheme for dense layers.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<T> {
            (0..n).map(|_| T::lit(rng.random_range(-bound..bound))).collect()
        };
        let w = draw(in_dim * out_dim);
        let b = draw(out_dim);
        Self {
            weight: params.push(format!("{name}.weight"), &[in_dim, out_dim], w),
            bias: params.push(format!("{name}.bias"), &[1, out_dim], b),
            in_dim,
            out_dim,
        }
    }

    pub fn forward<T: Scalar>(&self, leaves: &[Tensor<T>], x: &Tensor<T>) -> Result<Tensor<T>> {
        x.matmul(&leaves[self.weight.0])?.add(&leaves[self.bias.0])
    }
}

/// Stack of [`Linear`] layers with LeakyReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
    slope: f64,
    activate_output: bool,
}

impl Mlp {
    /// `sizes` lists every width including input and output.
    pub fn new<T: Scalar, R: Rng + ?Sized>(
        params: &mut ParamSet<T>,
        name: &str,
        sizes: &[usize],
        slope: f64,
        activate_output: bool,
        rng: &mut R,
    ) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Self {
            layers,
            slope,
            activate_output,
        }
    }

    pub fn out_dim(&self) -> Option<usize> {
        self.layers.last().map(|l| l.out_dim)
    }

    pub fn forward<T: Scalar>(&self, leaves: &[Tensor<T>], x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(leaves, &h)?;
            if i < last || self.activate_output {
                h = h.leaky_relu(T::lit(self.slope))?;
            }
        }
        Ok(h)
    }
}
