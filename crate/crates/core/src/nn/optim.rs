//! First-order optimizers over a [`Network`]'s parameters.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Gradients, Network};

pub trait Optimizer {
    fn step(&mut self, net: &mut Network, grads: &Gradients);
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn step(&mut self, net: &mut Network, grads: &Gradients) {
        if self.m.is_empty() {
            for (w, b) in &grads.layers {
                self.m.push(alloc::vec![0.0; w.len() + b.len()]);
                self.v.push(alloc::vec![0.0; w.len() + b.len()]);
            }
        }
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, self.t as f64);
        let c2 = 1.0 - libm::pow(self.beta2, self.t as f64);
        let step = self.lr * libm::sqrt(c2) / c1;
        let eps_hat = self.eps * libm::sqrt(c2);
        for (li, layer) in net.layers_mut().iter_mut().enumerate() {
            let (gw, gb) = &grads.layers[li];
            let (m, v) = (&mut self.m[li], &mut self.v[li]);
            let params = layer.weight.iter_mut().chain(layer.bias.iter_mut());
            let gs = gw.iter().chain(gb);
            for (((p, g), mi), vi) in params.zip(gs).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                *p -= step * *mi / (libm::sqrt(*vi) + eps_hat);
            }
        }
    }
}

/// Plain stochastic gradient descent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, net: &mut Network, grads: &Gradients) {
        for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(&grads.layers) {
            layer.weight.iter_mut().zip(gw).for_each(|(p, g)| *p -= self.lr * g);
            layer.bias.iter_mut().zip(gb).for_each(|(p, g)| *p -= self.lr * g);
        }
    }
}
