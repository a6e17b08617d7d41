//! Elementwise activations. Backward functions take the forward *outputs*.

pub fn relu(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.max(0.0));
}

pub fn relu_backward(y: &[f64], g: &mut [f64]) {
    for (g, y) in g.iter_mut().zip(y) {
        if *y <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn tanh(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.tanh());
}

pub fn tanh_backward(y: &[f64], g: &mut [f64]) {
    for (g, y) in g.iter_mut().zip(y) {
        *g *= 1.0 - y * y;
    }
}

pub fn sigmoid(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
}

pub fn sigmoid_backward(y: &[f64], g: &mut [f64]) {
    for (g, y) in g.iter_mut().zip(y) {
        *g *= y * (1.0 - y);
    }
}
