//! Minimal dense-layer primitives shared by the task models and the
//! attestation classifier: row-major matrices, affine layers with rectifier
//! activations, logistic loss, and plain SGD. Everything is `f64` and
//! deterministic given a seeded generator.

use rand::Rng;

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c));
        Self { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// `y = W x + b` with `W` of shape `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Mat,
    pub b: Vec<f64>,
}

impl Affine {
    /// Weights uniform in ±sqrt(6 / (fan_in + fan_out)), biases zero.
    pub fn glorot<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut w = Mat::zeros(fan_out, fan_in);
        for v in &mut w.data {
            *v = rng.gen_range(-bound..bound);
        }
        Self { w, b: vec![0.0; fan_out] }
    }

    pub fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.w.cols);
        out.clear();
        for r in 0..self.w.rows {
            let row = self.w.row(r);
            let mut acc = self.b[r];
            for (wv, xv) in row.iter().zip(x) {
                acc += wv * xv;
            }
            out.push(acc);
        }
    }
}

/// A stack of affine layers with rectifier activations between them and an
/// affine (linear) final layer. A nonzero `leak` turns the rectifiers leaky,
/// which keeps gradient flowing through units that start inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub layers: Vec<Affine>,
    pub leak: f64,
}

/// Per-layer pre-activations recorded during a forward pass, for backprop.
pub struct Trace {
    /// `acts[0]` is the input; `acts[l+1]` is the activation fed to layer l+1.
    pub acts: Vec<Vec<f64>>,
    /// Pre-activation of each layer (before the rectifier / identity).
    pub pre: Vec<Vec<f64>>,
}

/// Accumulated parameter gradients, same shapes as the net.
#[derive(Debug, Clone)]
pub struct Grads {
    pub w: Vec<Mat>,
    pub b: Vec<Vec<f64>>,
    pub count: usize,
}

impl Net {
    pub fn glorot<R: Rng>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        let layers = dims
            .windows(2)
            .map(|w| Affine::glorot(w[0], w[1], rng))
            .collect();
        Self { layers, leak: 0.0 }
    }

    pub fn with_leak(mut self, leak: f64) -> Self {
        self.leak = leak;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.w.rows));
        dims
    }

    /// Forward pass; rectifier on all but the last layer.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&cur, &mut next);
            if i != last {
                for v in &mut next {
                    if *v < 0.0 {
                        *v *= self.leak;
                    }
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        cur
    }

    pub fn forward_trace(&self, x: &[f64]) -> Trace {
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(acts.last().unwrap(), &mut z);
            pre.push(z.clone());
            if i != last {
                for v in &mut z {
                    if *v < 0.0 {
                        *v *= self.leak;
                    }
                }
            }
            acts.push(z);
        }
        Trace { acts, pre }
    }

    /// Backpropagates `d_out` (gradient at the final pre-activation) through
    /// the trace, accumulating parameter gradients and returning the gradient
    /// with respect to the input.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut Grads) -> Vec<f64> {
        let mut delta = d_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.acts[l];
            let layer = &self.layers[l];
            for r in 0..layer.w.rows {
                let dr = delta[r];
                grads.b[l][r] += dr;
                let gw = grads.w[l].row_mut_internal(r);
                for (g, x) in gw.iter_mut().zip(input) {
                    *g += dr * x;
                }
            }
            // gradient wrt the layer input
            let mut prev = vec![0.0; layer.w.cols];
            for r in 0..layer.w.rows {
                let dr = delta[r];
                for (p, wv) in prev.iter_mut().zip(layer.w.row(r)) {
                    *p += dr * wv;
                }
            }
            if l > 0 {
                // through the rectifier of layer l-1
                for (p, z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                    if *z <= 0.0 {
                        *p *= self.leak;
                    }
                }
            }
            delta = prev;
        }
        grads.count += 1;
        delta
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            w: self.layers.iter().map(|l| Mat::zeros(l.w.rows, l.w.cols)).collect(),
            b: self.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
            count: 0,
        }
    }

    /// SGD step with the batch-mean gradient. `frozen_below` layers (from the
    /// input side) are left untouched.
    pub fn apply_grads(&mut self, grads: &Grads, lr: f64, frozen_below: usize) {
        if grads.count == 0 {
            return;
        }
        let scale = lr / grads.count as f64;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            if l < frozen_below {
                continue;
            }
            for (wv, gv) in layer.w.data.iter_mut().zip(&grads.w[l].data) {
                *wv -= scale * gv;
            }
            for (bv, gv) in layer.b.iter_mut().zip(&grads.b[l]) {
                *bv -= scale * gv;
            }
        }
    }

    pub fn params_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.w.data.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite())
        })
    }
}

/// First and second moment accumulators for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Mat>,
    v_w: Vec<Mat>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub fn new(net: &Net) -> Self {
        Self {
            m_w: net.layers.iter().map(|l| Mat::zeros(l.w.rows, l.w.cols)).collect(),
            v_w: net.layers.iter().map(|l| Mat::zeros(l.w.rows, l.w.cols)).collect(),
            m_b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
            v_b: net.layers.iter().map(|l| vec![0.0; l.b.len()]).collect(),
            t: 0,
        }
    }
}

impl Net {
    /// Adam step with the batch-mean gradient.
    pub fn apply_grads_adam(&mut self, grads: &Grads, lr: f64, state: &mut AdamState) {
        if grads.count == 0 {
            return;
        }
        state.t += 1;
        let denom = grads.count as f64;
        let bc1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            for (i, wv) in layer.w.data.iter_mut().enumerate() {
                let g = grads.w[l].data[i] / denom;
                let m = &mut state.m_w[l].data[i];
                let v = &mut state.v_w[l].data[i];
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *wv -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
            for (i, bv) in layer.b.iter_mut().enumerate() {
                let g = grads.b[l][i] / denom;
                let m = &mut state.m_b[l][i];
                let v = &mut state.v_b[l][i];
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *bv -= lr * (*m / bc1) / ((*v / bc2).sqrt() + ADAM_EPS);
            }
        }
    }
}

impl Mat {
    fn row_mut_internal(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy of a logit against a 0/1 target.
#[inline]
pub fn bce_loss(logit: f64, y: f64) -> f64 {
    logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn forward_zero_net_is_zero() {
        let net = Net {
            layers: vec![
                Affine { w: Mat::zeros(3, 2), b: vec![0.0; 3] },
                Affine { w: Mat::zeros(1, 3), b: vec![0.0] },
            ],
            leak: 0.0,
        };
        assert_eq!(net.forward(&[1.0, -2.0]), vec![0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Net::glorot(&[3, 4, 1], &mut rng);
        let x = [0.3, -0.7, 1.2];
        let y = 1.0;

        let loss_of = |n: &Net| {
            let z = n.forward(&x)[0];
            bce_loss(z, y)
        };

        let trace = net.forward_trace(&x);
        let z = trace.acts.last().unwrap()[0];
        let mut grads = net.zero_grads();
        let d_input = net.backward(&trace, &[sigmoid(z) - y], &mut grads);

        let eps = 1e-6;
        // parameter gradient check (first layer, a few entries)
        for idx in [0usize, 3, 7] {
            let mut plus = net.clone();
            plus.layers[0].w.data[idx] += eps;
            let mut minus = net.clone();
            minus.layers[0].w.data[idx] -= eps;
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * eps);
            assert!(
                (fd - grads.w[0].data[idx]).abs() < 1e-6,
                "param grad mismatch: fd={fd} analytic={}",
                grads.w[0].data[idx]
            );
        }
        // input gradient check
        for i in 0..x.len() {
            let mut xp = x;
            xp[i] += eps;
            let mut xm = x;
            xm[i] -= eps;
            let fd = (bce_loss(net.forward(&xp)[0], y) - bce_loss(net.forward(&xm)[0], y))
                / (2.0 * eps);
            assert!((fd - d_input[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn leaky_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Net::glorot(&[3, 4, 1], &mut rng).with_leak(0.01);
        let x = [-0.9, 0.4, -0.2];
        let y = 0.0;
        let trace = net.forward_trace(&x);
        let z = trace.acts.last().unwrap()[0];
        let mut grads = net.zero_grads();
        let d_input = net.backward(&trace, &[sigmoid(z) - y], &mut grads);
        let eps = 1e-6;
        for i in 0..x.len() {
            let mut xp = x;
            xp[i] += eps;
            let mut xm = x;
            xm[i] -= eps;
            let fd = (bce_loss(net.forward(&xp)[0], y) - bce_loss(net.forward(&xm)[0], y))
                / (2.0 * eps);
            assert!((fd - d_input[i]).abs() < 1e-6, "fd {fd} vs {}", d_input[i]);
        }
    }

    #[test]
    fn sigmoid_is_stable_and_centered() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.999);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-3);
    }
}
