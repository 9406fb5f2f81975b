use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Fully connected network: ReLU hidden layers, linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// `weights[l]` is row-major `sizes[l + 1] x sizes[l]`.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Activations of every layer from one forward pass; `pre[l]` are the
/// pre-activation values of layer `l + 1`.
#[derive(Clone, Debug)]
pub struct Trace {
    pub post: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("non-empty trace")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Mlp {
    /// He-initialized weights, zero biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(
            sizes.len() >= 2,
            "need at least an input and an output layer"
        );
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("finite std");
            weights.push((0..fan_in * fan_out).map(|_| normal.sample(rng)).collect());
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
        }
    }

    pub fn inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).post.pop().unwrap()
    }

    pub fn trace(&self, x: &[f64]) -> Trace {
        let layers = self.weights.len();
        let mut post = vec![x.to_vec()];
        let mut pre = Vec::with_capacity(layers);
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &post[l];
            let w = &self.weights[l];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    self.biases[l][o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let a = if l + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|v| v.max(0.0)).collect()
            };
            pre.push(z);
            post.push(a);
        }
        Trace { post, pre }
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            weights: self.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: self.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// Adds `d_out * d(output[index]) / d(params)` into `grads`.
    pub fn accumulate(&self, trace: &Trace, index: usize, d_out: f64, grads: &mut Gradients) {
        let layers = self.weights.len();
        let mut delta = vec![0.0; self.outputs()];
        delta[index] = d_out;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let input = &trace.post[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grads.biases[l][o] += d;
                let row = &mut grads.weights[l][o * n_in..(o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            for (p, z) in prev.iter_mut().zip(&trace.pre[l - 1]) {
                if *z <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Gradient-descent step: `params -= step * grads`.
    pub fn descend(&mut self, grads: &Gradients, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (a, b) in w.iter_mut().zip(g) {
                *a -= step * b;
            }
        }
        for (w, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (a, b) in w.iter_mut().zip(g) {
                *a -= step * b;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for trial in 0..5 {
            let net = Mlp::new(&[3, 5, 4, 2], &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let out = trial % 2;
            let mut grads = net.zero_gradients();
            net.accumulate(&net.trace(&x), out, 1.0, &mut grads);
            let h = 1e-4;
            for l in 0..net.weights.len() {
                for p in 0..net.weights[l].len() {
                    let mut plus = net.clone();
                    plus.weights[l][p] += h;
                    let mut minus = net.clone();
                    minus.weights[l][p] -= h;
                    let fd = (plus.forward(&x)[out] - minus.forward(&x)[out]) / (2.0 * h);
                    let an = grads.weights[l][p];
                    let scale = fd.abs().max(an.abs()).max(1e-6);
                    assert!(
                        (fd - an).abs() / scale < 1e-3 || (fd - an).abs() < 1e-8,
                        "{fd} vs {an}"
                    );
                }
                for p in 0..net.biases[l].len() {
                    let mut plus = net.clone();
                    plus.biases[l][p] += h;
                    let mut minus = net.clone();
                    minus.biases[l][p] -= h;
                    let fd = (plus.forward(&x)[out] - minus.forward(&x)[out]) / (2.0 * h);
                    let an = grads.biases[l][p];
                    assert!((fd - an).abs() < 1e-6 + 1e-3 * fd.abs().max(an.abs()));
                }
            }
        }
    }

    #[test]
    fn zero_step_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[2, 4, 3], &mut rng);
        let before = net.clone();
        let mut g = net.zero_gradients();
        net.accumulate(&net.trace(&[0.3, -0.2]), 1, 0.7, &mut g);
        net.descend(&g, 0.0);
        assert_eq!(net, before);
    }
}
