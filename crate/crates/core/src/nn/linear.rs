use rand::Rng;

use super::{uniform_init, Module};

/// Affine map `y = W x + b` on a single vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub input: usize,
    pub output: usize,
    /// `[output][input]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Self {
            input,
            output,
            weight: uniform_init(rng, input * output, input),
            bias: uniform_init(rng, output, input),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input);
        self.weight
            .chunks(self.input)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Returns `d loss / d x`; accumulates parameter gradients into `grad`.
    pub fn backward(&self, x: &[f64], gy: &[f64], grad: Option<&mut Linear>) -> Vec<f64> {
        if let Some(g) = grad {
            for (o, &d) in gy.iter().enumerate() {
                g.bias[o] += d;
                for (gw, v) in g.weight[o * self.input..(o + 1) * self.input].iter_mut().zip(x) {
                    *gw += d * v;
                }
            }
        }
        let mut gx = vec![0.0; self.input];
        for (row, &d) in self.weight.chunks(self.input).zip(gy) {
            for (g, w) in gx.iter_mut().zip(row) {
                *g += d * w;
            }
        }
        gx
    }
}

impl Module for Linear {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}
