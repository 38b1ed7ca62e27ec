//! Fully connected networks with hand-written backpropagation.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputActivation {
    Linear,
    Tanh,
}

/// ReLU hidden layers, configurable output squashing. Weights are stored
/// `(fan_in, fan_out)` so a batch is one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub output: OutputActivation,
}

/// Parameter-shaped buffer; also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Layer inputs and pre-activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Mlp {
    /// Fan-in uniform initialization; the last layer is drawn from
    /// `U(±final_scale)` instead.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, final_scale: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least an input and an output size");
        let layers = sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (l, w) in sizes.windows(2).enumerate() {
            let bound = if l + 1 == layers { final_scale } else { 1.0 / (w[0] as f64).sqrt() };
            let mut draw = || if bound > 0.0 { rng.random_range(-bound..bound) } else { 0.0 };
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), &mut draw));
            biases.push(Array1::from_shape_simple_fn(w[1], &mut draw));
        }
        Self { weights, biases, output }
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        let p = Params::zeros_for(sizes);
        Self { weights: p.weights, biases: p.biases, output }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.weights[0].nrows()];
        s.extend(self.weights.iter().map(|w| w.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.last().map_or(0, |w| w.ncols())
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let last = self.weights.len() - 1;
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            h = self.activate(z, l == last);
        }
        h
    }

    pub fn forward_one(&self, x: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row vector");
        self.forward(&x).into_raw_vec_and_offset().0
    }

    pub fn forward_cached(&self, x: &Array2<f64>) -> ForwardCache {
        let last = self.weights.len() - 1;
        let mut inputs = Vec::with_capacity(self.weights.len());
        let mut pre = Vec::with_capacity(self.weights.len());
        let mut h = x.clone();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = h.dot(w);
            z += b;
            inputs.push(h);
            h = self.activate(z.clone(), l == last);
            pre.push(z);
        }
        ForwardCache { inputs, pre, output: h }
    }

    fn activate(&self, mut z: Array2<f64>, last: bool) -> Array2<f64> {
        if !last {
            z.mapv_inplace(|v| v.max(0.0));
        } else if self.output == OutputActivation::Tanh {
            z.mapv_inplace(f64::tanh);
        }
        z
    }

    /// Gradients of `Σ grad_out ⊙ output` with respect to the parameters and
    /// the input batch.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &Array2<f64>) -> (Params, Array2<f64>) {
        let layers = self.weights.len();
        let mut g = grad_out.clone();
        if self.output == OutputActivation::Tanh {
            Zip::from(&mut g).and(&cache.output).for_each(|g, y| *g *= 1.0 - y * y);
        }
        let mut gw = vec![Array2::zeros((0, 0)); layers];
        let mut gb = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            gw[l] = cache.inputs[l].t().dot(&g);
            gb[l] = g.sum_axis(Axis(0));
            let mut gin = g.dot(&self.weights[l].t());
            if l > 0 {
                Zip::from(&mut gin).and(&cache.pre[l - 1]).for_each(|g, z| {
                    if *z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            g = gin;
        }
        (Params { weights: gw, biases: gb }, g)
    }

    /// `θ' ← τθ + (1−τ)θ'` with `self` as the target.
    pub fn soft_update_from(&mut self, src: &Mlp, tau: f64) {
        for (t, s) in self.weights.iter_mut().zip(&src.weights) {
            Zip::from(t).and(s).for_each(|t, s| *t = tau * s + (1.0 - tau) * *t);
        }
        for (t, s) in self.biases.iter_mut().zip(&src.biases) {
            Zip::from(t).and(s).for_each(|t, s| *t = tau * s + (1.0 - tau) * *t);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Euclidean distance between two networks of the same shape.
    pub fn distance(&self, other: &Mlp) -> f64 {
        let w: f64 = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (a - b).mapv(|v| v * v).sum())
            .sum();
        let b: f64 = self
            .biases
            .iter()
            .zip(&other.biases)
            .map(|(a, b)| (a - b).mapv(|v| v * v).sum())
            .sum();
        (w + b).sqrt()
    }
}

impl Params {
    pub fn zeros_for(sizes: &[usize]) -> Self {
        Self {
            weights: sizes.windows(2).map(|w| Array2::zeros((w[0], w[1]))).collect(),
            biases: sizes.windows(2).map(|w| Array1::zeros(w[1])).collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }
}

/// Row-wise concatenation `[a | b]`.
pub fn hstack(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("same row count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[5, 8, 8, 3], OutputActivation::Tanh);
        let y = net.forward_one(&[0.3, -1.0, 2.0, 0.1, 0.0]);
        assert_eq!(y, vec![0.0; 3]);
    }

    #[test]
    fn tanh_output_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::new(&[4, 16, 2], OutputActivation::Tanh, 5.0, &mut rng);
        for _ in 0..200 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-50.0..50.0)).collect();
            assert!(net.forward_one(&x).iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn final_layer_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = Mlp::new(&[3, 6, 1], OutputActivation::Linear, 0.5, &mut rng);
        let x = [0.2, -0.4, 0.9];
        let mut doubled = net.clone();
        doubled.weights[1] *= 2.0;
        doubled.biases[1] *= 2.0;
        assert!((doubled.forward_one(&x)[0] - 2.0 * net.forward_one(&x)[0]).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for act in [OutputActivation::Linear, OutputActivation::Tanh] {
            let net = Mlp::new(&[3, 7, 5, 2], act, 0.5, &mut rng);
            let x = Array2::from_shape_fn((4, 3), |_| rng.random_range(-1.0..1.0));
            let g_out = Array2::from_shape_fn((4, 2), |_| rng.random_range(-1.0..1.0));
            let f = |n: &Mlp, x: &Array2<f64>| (n.forward(x) * &g_out).sum();
            let cache = net.forward_cached(&x);
            let (g, gx) = net.backward(&cache, &g_out);
            let eps = 1e-6;
            for l in 0..net.weights.len() {
                for idx in [(0, 0), (net.weights[l].nrows() - 1, net.weights[l].ncols() - 1)] {
                    let mut p = net.clone();
                    p.weights[l][idx] += eps;
                    let mut m = net.clone();
                    m.weights[l][idx] -= eps;
                    let fd = (f(&p, &x) - f(&m, &x)) / (2.0 * eps);
                    assert!(rel_err(fd, g.weights[l][idx]) < 1e-5, "layer {l} {idx:?}");
                }
            }
            let mut xp = x.clone();
            xp[(2, 1)] += eps;
            let mut xm = x.clone();
            xm[(2, 1)] -= eps;
            let fd = (f(&net, &xp) - f(&net, &xm)) / (2.0 * eps);
            assert!(rel_err(fd, gx[(2, 1)]) < 1e-5);
        }
    }

    #[test]
    fn soft_update_blends() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = Mlp::new(&[2, 3, 1], OutputActivation::Linear, 0.5, &mut rng);
        let b = Mlp::new(&[2, 3, 1], OutputActivation::Linear, 0.5, &mut rng);
        let mut t = b.clone();
        t.soft_update_from(&a, 1.0);
        assert_eq!(t, a);
        let mut t = b.clone();
        t.soft_update_from(&a, 0.0);
        assert_eq!(t, b);
        let mut t = b.clone();
        t.soft_update_from(&a, 0.005);
        t.soft_update_from(&a, 0.005);
        let k = 0.995f64 * 0.995;
        let expect = &a.weights[0] * (1.0 - k) + &b.weights[0] * k;
        assert!((&t.weights[0] - &expect).iter().all(|d| d.abs() < 1e-14));
    }
}
