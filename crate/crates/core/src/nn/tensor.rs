/// Dense `[batch, channel, time]` activation, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    pub b: usize,
    pub c: usize,
    pub l: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(b: usize, c: usize, l: usize) -> Self {
        Self {
            b,
            c,
            l,
            data: vec![0.0; b * c * l],
        }
    }

    pub fn from_vec(b: usize, c: usize, l: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), b * c * l, "tensor shape mismatch");
        Self { b, c, l, data }
    }

    /// Stacks equal-length signals as single-channel batch items.
    pub fn from_signals(signals: &[&[f64]]) -> Self {
        let l = signals.first().map_or(0, |s| s.len());
        let mut data = Vec::with_capacity(signals.len() * l);
        for s in signals {
            assert_eq!(s.len(), l, "signals must share a length");
            data.extend_from_slice(s);
        }
        Self::from_vec(signals.len(), 1, l, data)
    }

    pub fn item(&self, b: usize) -> &[f64] {
        let n = self.c * self.l;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn item_mut(&mut self, b: usize) -> &mut [f64] {
        let n = self.c * self.l;
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor3) -> bool {
        self.b == other.b && self.c == other.c && self.l == other.l
    }

    pub fn add_assign(&mut self, other: &Tensor3) {
        assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = op(a) * op(b) + beta * c` where `op(a)` is `m x k` and `op(b)` is `k x n`.
///
/// `a` is stored `m x k` row-major, or `k x m` when `trans_a`; likewise `b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every index the strides can reach.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
