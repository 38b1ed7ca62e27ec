//! Adaptive-moment optimizer over a network's parameters.

use ndarray::Zip;

use super::nn::{Mlp, Params};

#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let sizes = net.sizes();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: Params::zeros_for(&sizes),
            v: Params::zeros_for(&sizes),
            t: 0,
        }
    }

    /// One descent step along `grad`.
    pub fn step(&mut self, net: &mut Mlp, grad: &Params) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let lr_t = self.lr * (1.0 - b2.powi(self.t)).sqrt() / (1.0 - b1.powi(self.t));
        let upd = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr_t * *m / (v.sqrt() + eps);
        };
        for l in 0..net.weights.len() {
            Zip::from(&mut net.weights[l])
                .and(&grad.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .for_each(upd);
            Zip::from(&mut net.biases[l])
                .and(&grad.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .for_each(upd);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::nn::OutputActivation;

    #[test]
    fn first_step_moves_by_lr() {
        let mut net = Mlp::zeros(&[2, 1], OutputActivation::Linear);
        let mut g = Params::zeros_for(&[2, 1]);
        g.weights[0][(0, 0)] = 3.0;
        g.weights[0][(1, 0)] = -0.01;
        let mut opt = Adam::new(&net, 0.1);
        opt.step(&mut net, &g);
        // bias-corrected moments are g and g², so the step is lr·g/(|g| + ε/√(1−β2))
        let expect = |g: f64| -0.1 * g / (g.abs() + 1e-8 / 0.001f64.sqrt());
        assert!((net.weights[0][(0, 0)] - expect(3.0)).abs() < 1e-15);
        assert!((net.weights[0][(1, 0)] - expect(-0.01)).abs() < 1e-15);
        assert_eq!(net.biases[0][0], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut net = Mlp::zeros(&[1, 1], OutputActivation::Linear);
        let mut opt = Adam::new(&net, 0.05);
        for _ in 0..2000 {
            let mut g = Params::zeros_for(&[1, 1]);
            g.weights[0][(0, 0)] = 2.0 * (net.weights[0][(0, 0)] - 1.5);
            opt.step(&mut net, &g);
        }
        assert!((net.weights[0][(0, 0)] - 1.5).abs() < 1e-3);
    }
}
