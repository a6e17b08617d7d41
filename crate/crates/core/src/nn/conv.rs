use rand::Rng;

use super::tensor::{gemm, Tensor3};
use super::{uniform_init, Module};

/// 1-D convolution with symmetric zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    /// `[cout][cin * kernel]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    cols: Vec<f64>,
    lin: usize,
    lout: usize,
}

impl Conv1d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = cin * kernel;
        Self {
            cin,
            cout,
            kernel,
            stride,
            padding,
            weight: uniform_init(rng, cout * fan_in, fan_in),
            bias: uniform_init(rng, cout, fan_in),
        }
    }

    pub fn out_len(&self, lin: usize) -> usize {
        (lin + 2 * self.padding).saturating_sub(self.kernel) / self.stride + 1
    }

    fn im2col(&self, x: &[f64], lin: usize, lout: usize, cols: &mut [f64]) {
        let k = self.kernel;
        for ci in 0..self.cin {
            let xrow = &x[ci * lin..(ci + 1) * lin];
            for kk in 0..k {
                let row = &mut cols[(ci * k + kk) * lout..(ci * k + kk + 1) * lout];
                for (t, r) in row.iter_mut().enumerate() {
                    let idx = (t * self.stride + kk) as isize - self.padding as isize;
                    *r = if idx >= 0 && (idx as usize) < lin {
                        xrow[idx as usize]
                    } else {
                        0.0
                    };
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor3) -> (Tensor3, ConvCache) {
        assert_eq!(x.c, self.cin, "conv input channels");
        assert!(x.l + 2 * self.padding >= self.kernel, "input shorter than kernel");
        let lout = self.out_len(x.l);
        let rows = self.cin * self.kernel;
        let mut cols = vec![0.0; x.b * rows * lout];
        let mut y = Tensor3::zeros(x.b, self.cout, lout);
        for b in 0..x.b {
            let c = &mut cols[b * rows * lout..(b + 1) * rows * lout];
            self.im2col(x.item(b), x.l, lout, c);
            let out = y.item_mut(b);
            for (co, row) in out.chunks_mut(lout).enumerate() {
                row.fill(self.bias[co]);
            }
            gemm(self.cout, rows, lout, &self.weight, false, c, false, out, 1.0);
        }
        (y, ConvCache { cols, lin: x.l, lout })
    }

    /// Accumulates parameter gradients into `grad` when given; returns the
    /// input gradient when `input_grad` is set.
    pub fn backward(
        &self,
        cache: &ConvCache,
        gy: &Tensor3,
        grad: Option<&mut Conv1d>,
        input_grad: bool,
    ) -> Option<Tensor3> {
        let (lin, lout) = (cache.lin, cache.lout);
        assert_eq!(gy.l, lout);
        let rows = self.cin * self.kernel;
        if let Some(g) = grad {
            for b in 0..gy.b {
                let c = &cache.cols[b * rows * lout..(b + 1) * rows * lout];
                let gyb = gy.item(b);
                gemm(self.cout, lout, rows, gyb, false, c, true, &mut g.weight, 1.0);
                for (co, row) in gyb.chunks(lout).enumerate() {
                    g.bias[co] += row.iter().sum::<f64>();
                }
            }
        }
        if !input_grad {
            return None;
        }
        let mut gx = Tensor3::zeros(gy.b, self.cin, lin);
        let mut dcols = vec![0.0; rows * lout];
        let k = self.kernel;
        for b in 0..gy.b {
            gemm(rows, self.cout, lout, &self.weight, true, gy.item(b), false, &mut dcols, 0.0);
            let gxb = gx.item_mut(b);
            for ci in 0..self.cin {
                for kk in 0..k {
                    let row = &dcols[(ci * k + kk) * lout..(ci * k + kk + 1) * lout];
                    for (t, &d) in row.iter().enumerate() {
                        let idx = (t * self.stride + kk) as isize - self.padding as isize;
                        if idx >= 0 && (idx as usize) < lin {
                            gxb[ci * lin + idx as usize] += d;
                        }
                    }
                }
            }
        }
        Some(gx)
    }
}

impl Module for Conv1d {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}

/// 1-D transposed convolution; output length
/// `(lin - 1) * stride - 2 * padding + kernel + output_padding`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose1d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
    /// `[cin][cout * kernel]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvTransposeCache {
    input: Tensor3,
    lout: usize,
}

impl ConvTranspose1d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = cout * kernel;
        Self {
            cin,
            cout,
            kernel,
            stride,
            padding,
            output_padding,
            weight: uniform_init(rng, cin * cout * kernel, fan_in),
            bias: uniform_init(rng, cout, fan_in),
        }
    }

    pub fn out_len(&self, lin: usize) -> usize {
        (lin - 1) * self.stride + self.kernel + self.output_padding - 2 * self.padding
    }

    #[inline]
    fn target(&self, t: usize, kk: usize, lout: usize) -> Option<usize> {
        let idx = (t * self.stride + kk) as isize - self.padding as isize;
        (idx >= 0 && (idx as usize) < lout).then_some(idx as usize)
    }

    pub fn forward(&self, x: &Tensor3) -> (Tensor3, ConvTransposeCache) {
        assert_eq!(x.c, self.cin, "transposed conv input channels");
        let lout = self.out_len(x.l);
        let rows = self.cout * self.kernel;
        let mut cols = vec![0.0; rows * x.l];
        let mut y = Tensor3::zeros(x.b, self.cout, lout);
        let k = self.kernel;
        for b in 0..x.b {
            gemm(rows, self.cin, x.l, &self.weight, true, x.item(b), false, &mut cols, 0.0);
            let out = y.item_mut(b);
            for co in 0..self.cout {
                let orow = &mut out[co * lout..(co + 1) * lout];
                orow.fill(self.bias[co]);
                for kk in 0..k {
                    let crow = &cols[(co * k + kk) * x.l..(co * k + kk + 1) * x.l];
                    for (t, &v) in crow.iter().enumerate() {
                        if let Some(i) = self.target(t, kk, lout) {
                            orow[i] += v;
                        }
                    }
                }
            }
        }
        (
            y,
            ConvTransposeCache {
                input: x.clone(),
                lout,
            },
        )
    }

    pub fn backward(
        &self,
        cache: &ConvTransposeCache,
        gy: &Tensor3,
        mut grad: Option<&mut ConvTranspose1d>,
        input_grad: bool,
    ) -> Option<Tensor3> {
        let x = &cache.input;
        let lout = cache.lout;
        assert_eq!(gy.l, lout);
        let rows = self.cout * self.kernel;
        let k = self.kernel;
        let mut gcols = vec![0.0; rows * x.l];
        let mut gx = input_grad.then(|| Tensor3::zeros(x.b, self.cin, x.l));
        for b in 0..x.b {
            let gyb = gy.item(b);
            for co in 0..self.cout {
                let grow = &gyb[co * lout..(co + 1) * lout];
                for kk in 0..k {
                    let crow = &mut gcols[(co * k + kk) * x.l..(co * k + kk + 1) * x.l];
                    for (t, c) in crow.iter_mut().enumerate() {
                        *c = self.target(t, kk, lout).map_or(0.0, |i| grow[i]);
                    }
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                gemm(self.cin, x.l, rows, x.item(b), false, &gcols, true, &mut g.weight, 1.0);
                for (co, row) in gyb.chunks(lout).enumerate() {
                    g.bias[co] += row.iter().sum::<f64>();
                }
            }
            if let Some(gx) = gx.as_mut() {
                gemm(self.cin, rows, x.l, &self.weight, false, &gcols, false, gx.item_mut(b), 0.0);
            }
        }
        gx
    }
}

impl Module for ConvTranspose1d {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }
}
