use super::tensor::Tensor3;
use super::Module;

/// Per-channel batch normalization over `(batch, time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub channels: usize,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug, Clone)]
pub struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    count: usize,
    train: bool,
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Batch statistics when `train`, running statistics otherwise.
    pub fn forward(&self, x: &Tensor3, train: bool) -> (Tensor3, BnCache) {
        assert_eq!(x.c, self.channels);
        let (b, c, l) = (x.b, x.c, x.l);
        let count = b * l;
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        if train {
            for bi in 0..b {
                for ci in 0..c {
                    mean[ci] += x.data[(bi * c + ci) * l..(bi * c + ci + 1) * l].iter().sum::<f64>();
                }
            }
            mean.iter_mut().for_each(|m| *m /= count as f64);
            for bi in 0..b {
                for ci in 0..c {
                    var[ci] += x.data[(bi * c + ci) * l..(bi * c + ci + 1) * l]
                        .iter()
                        .map(|v| (v - mean[ci]).powi(2))
                        .sum::<f64>();
                }
            }
            var.iter_mut().for_each(|v| *v /= count as f64);
        } else {
            mean.copy_from_slice(&self.running_mean);
            var.copy_from_slice(&self.running_var);
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; x.data.len()];
        let mut y = Tensor3::zeros(b, c, l);
        for bi in 0..b {
            for ci in 0..c {
                let r = (bi * c + ci) * l..(bi * c + ci + 1) * l;
                for ((h, o), v) in xhat[r.clone()]
                    .iter_mut()
                    .zip(&mut y.data[r.clone()])
                    .zip(&x.data[r])
                {
                    *h = (v - mean[ci]) * inv_std[ci];
                    *o = self.gamma[ci] * *h + self.beta[ci];
                }
            }
        }
        (
            y,
            BnCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                count,
                train,
            },
        )
    }

    /// Folds the batch statistics of a training-mode forward into the running averages.
    pub fn update_running(&mut self, cache: &BnCache) {
        if !cache.train {
            return;
        }
        let n = cache.count as f64;
        let unbias = if cache.count > 1 { n / (n - 1.0) } else { 1.0 };
        for ci in 0..self.channels {
            self.running_mean[ci] =
                (1.0 - self.momentum) * self.running_mean[ci] + self.momentum * cache.batch_mean[ci];
            self.running_var[ci] = (1.0 - self.momentum) * self.running_var[ci]
                + self.momentum * cache.batch_var[ci] * unbias;
        }
    }

    pub fn backward(&self, cache: &BnCache, gy: &Tensor3, grad: Option<&mut BatchNorm1d>) -> Tensor3 {
        let (b, c, l) = (gy.b, gy.c, gy.l);
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for bi in 0..b {
            for ci in 0..c {
                let r = (bi * c + ci) * l..(bi * c + ci + 1) * l;
                for (d, h) in gy.data[r.clone()].iter().zip(&cache.xhat[r]) {
                    sum_dy[ci] += d;
                    sum_dy_xhat[ci] += d * h;
                }
            }
        }
        if let Some(g) = grad {
            for ci in 0..c {
                g.gamma[ci] += sum_dy_xhat[ci];
                g.beta[ci] += sum_dy[ci];
            }
        }
        let n = cache.count as f64;
        let mut gx = Tensor3::zeros(b, c, l);
        for bi in 0..b {
            for ci in 0..c {
                let r = (bi * c + ci) * l..(bi * c + ci + 1) * l;
                let scale = self.gamma[ci] * cache.inv_std[ci];
                for ((o, d), h) in gx.data[r.clone()]
                    .iter_mut()
                    .zip(&gy.data[r.clone()])
                    .zip(&cache.xhat[r])
                {
                    *o = if cache.train {
                        scale * (d - sum_dy[ci] / n - h * sum_dy_xhat[ci] / n)
                    } else {
                        scale * d
                    };
                }
            }
        }
        gx
    }
}

impl Module for BatchNorm1d {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.gamma, &self.beta]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.gamma, &mut self.beta]
    }

    fn buffers(&self) -> Vec<&[f64]> {
        vec![&self.running_mean, &self.running_var]
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.running_mean, &mut self.running_var]
    }
}
