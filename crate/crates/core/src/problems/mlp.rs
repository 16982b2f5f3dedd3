use super::{check_dim, Objective, StochasticObjective};
use crate::rngs::rng_from;
use crate::{Error, Result, Vector};
use rand_distr::{Distribution, StandardNormal};

/// Feed-forward network with sigmoid hidden layers and a softmax /
/// cross-entropy output, trained on a small synthetic dataset.
///
/// Parameters are flattened layer by layer: the `out × in` weight matrix in
/// row-major order followed by the `out` biases.
#[derive(Clone, Debug)]
pub struct TinyMlp {
    layer_sizes: Vec<usize>,
    weights: Vector,
    inputs: Vec<Vector>,
    labels: Vec<usize>,
    offsets: Vec<usize>,
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

impl TinyMlp {
    pub fn new(layer_sizes: Vec<usize>, inputs: Vec<Vector>, labels: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidProblem(format!("invalid layer sizes {layer_sizes:?}")));
        }
        if inputs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != labels.len() {
            return Err(Error::InvalidProblem("inputs and labels differ in length".into()));
        }
        let n_in = layer_sizes[0];
        let n_out = *layer_sizes.last().expect("len >= 2");
        for x in &inputs {
            check_dim(n_in, x)?;
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_out) {
            return Err(Error::InvalidProblem(format!("label {bad} out of range for {n_out} classes")));
        }
        let mut offsets = vec![0];
        for pair in layer_sizes.windows(2) {
            let last = *offsets.last().expect("non-empty");
            offsets.push(last + (pair[0] + 1) * pair[1]);
        }
        let n_params = *offsets.last().expect("non-empty");
        Ok(Self { layer_sizes, weights: Vector::zeros(n_params), inputs, labels, offsets })
    }

    /// Gaussian inputs labelled by the argmax of a random linear teacher, with
    /// weights initialised as `N(0, 1/fan_in)`.
    pub fn synthetic(layer_sizes: Vec<usize>, n_points: usize, seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidProblem(format!("invalid layer sizes {layer_sizes:?}")));
        }
        let mut rng = rng_from(seed);
        let n_in = layer_sizes[0];
        let n_out = *layer_sizes.last().expect("len >= 2");
        let teacher: Vec<Vector> =
            (0..n_out).map(|_| Vector::from_fn(n_in, |_, _| StandardNormal.sample(&mut rng))).collect();
        let mut inputs = Vec::with_capacity(n_points);
        let mut labels = Vec::with_capacity(n_points);
        for _ in 0..n_points {
            let x = Vector::from_fn(n_in, |_, _| StandardNormal.sample(&mut rng));
            let y = teacher
                .iter()
                .map(|t| t.dot(&x))
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, s)| if s > best.1 { (k, s) } else { best })
                .0;
            inputs.push(x);
            labels.push(y);
        }
        let mut mlp = Self::new(layer_sizes, inputs, labels)?;
        mlp.weights = mlp.random_weights(seed.wrapping_add(1), 1.0);
        Ok(mlp)
    }

    /// Random parameter vector with weights `N(0, scale²/fan_in)` and zero biases.
    pub fn random_weights(&self, seed: u64, scale: f64) -> Vector {
        let mut rng = rng_from(seed);
        let mut w = Vector::zeros(self.n_params());
        for (l, pair) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (pair[0], pair[1]);
            let sd = scale / (n_in as f64).sqrt();
            for k in 0..n_in * n_out {
                let g: f64 = StandardNormal.sample(&mut rng);
                w[self.offsets[l] + k] = sd * g;
            }
        }
        w
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }
    pub fn weights(&self) -> &Vector {
        &self.weights
    }
    pub fn with_weights(mut self, w: Vector) -> Result<Self> {
        check_dim(self.n_params(), &w)?;
        self.weights = w;
        Ok(self)
    }
    pub fn n_params(&self) -> usize {
        *self.offsets.last().expect("non-empty")
    }
    pub fn n_classes(&self) -> usize {
        *self.layer_sizes.last().expect("len >= 2")
    }
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Forward pass returning every layer's activations; the last entry holds
    /// the class probabilities.
    fn forward_all(&self, w: &[f64], x: &Vector) -> Vec<Vec<f64>> {
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(n_layers + 1);
        acts.push(x.as_slice().to_vec());
        for l in 0..n_layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let wl = &w[self.offsets[l]..self.offsets[l] + n_in * n_out];
            let bl = &w[self.offsets[l] + n_in * n_out..self.offsets[l + 1]];
            let prev = &acts[l];
            let mut z: Vec<f64> = (0..n_out)
                .map(|o| bl[o] + wl[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if l + 1 < n_layers {
                z.iter_mut().for_each(|v| *v = sigmoid(*v));
            } else {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                z.iter_mut().for_each(|v| *v = (*v - m).exp());
                let s: f64 = z.iter().sum();
                z.iter_mut().for_each(|v| *v /= s);
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities for input `x` under parameters `w`.
    pub fn forward(&self, w: &Vector, x: &Vector) -> Result<Vector> {
        check_dim(self.n_params(), w)?;
        check_dim(self.layer_sizes[0], x)?;
        let acts = self.forward_all(w.as_slice(), x);
        Ok(Vector::from_vec(acts.last().expect("non-empty").clone()))
    }

    fn sample_loss(&self, w: &[f64], i: usize) -> f64 {
        // log-softmax recomputed from logits for accuracy at saturation
        let n_layers = self.layer_sizes.len() - 1;
        let acts = self.forward_all(w, &self.inputs[i]);
        let l = n_layers - 1;
        let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
        let wl = &w[self.offsets[l]..self.offsets[l] + n_in * n_out];
        let bl = &w[self.offsets[l] + n_in * n_out..self.offsets[l + 1]];
        let prev = &acts[l];
        let logits: Vec<f64> = (0..n_out)
            .map(|o| bl[o] + wl[o * n_in..(o + 1) * n_in].iter().zip(prev).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        lse - logits[self.labels[i]]
    }

    fn backprop(&self, w: &[f64], i: usize, grad: &mut [f64], scale: f64) {
        let n_layers = self.layer_sizes.len() - 1;
        let acts = self.forward_all(w, &self.inputs[i]);
        let mut delta = acts[n_layers].clone();
        delta[self.labels[i]] -= 1.0;
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = self.offsets[l];
            let prev = &acts[l];
            for o in 0..n_out {
                let d = scale * delta[o];
                for j in 0..n_in {
                    grad[off + o * n_in + j] += d * prev[j];
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let wl = &w[off..off + n_in * n_out];
                delta = (0..n_in)
                    .map(|j| {
                        let back: f64 = (0..n_out).map(|o| wl[o * n_in + j] * delta[o]).sum();
                        back * prev[j] * (1.0 - prev[j])
                    })
                    .collect();
            }
        }
    }
}

impl Objective for TinyMlp {
    fn dim(&self) -> usize {
        self.n_params()
    }

    fn value(&self, w: &Vector) -> Result<f64> {
        check_dim(self.n_params(), w)?;
        let n = self.inputs.len();
        Ok((0..n).map(|i| self.sample_loss(w.as_slice(), i)).sum::<f64>() / n as f64)
    }

    fn grad(&self, w: &Vector) -> Result<Vector> {
        check_dim(self.n_params(), w)?;
        let n = self.inputs.len();
        let mut g = vec![0.0; self.n_params()];
        for i in 0..n {
            self.backprop(w.as_slice(), i, &mut g, 1.0);
        }
        let mut g = Vector::from_vec(g);
        g /= n as f64;
        Ok(g)
    }
}

impl StochasticObjective for TinyMlp {
    fn n_samples(&self) -> usize {
        self.inputs.len()
    }

    fn sample_grad(&self, w: &Vector, index: usize) -> Result<Vector> {
        check_dim(self.n_params(), w)?;
        if index >= self.inputs.len() {
            return Err(Error::IndexOutOfRange { index, n: self.inputs.len() });
        }
        let mut g = vec![0.0; self.n_params()];
        self.backprop(w.as_slice(), index, &mut g, 1.0);
        Ok(Vector::from_vec(g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        let m = TinyMlp::synthetic(vec![4, 5, 3], 10, 0).unwrap();
        assert_eq!(m.n_params(), 5 * 5 + 6 * 3);
        let m = TinyMlp::synthetic(vec![3, 2, 2, 4], 10, 0).unwrap();
        assert_eq!(m.n_params(), 4 * 2 + 3 * 2 + 3 * 4);
    }

    #[test]
    fn outputs_are_probabilities() {
        let m = TinyMlp::synthetic(vec![4, 6, 6, 3], 15, 7).unwrap();
        let w = m.random_weights(9, 3.0);
        for x in &m.inputs {
            let p = m.forward(&w, x).unwrap();
            assert!((p.sum() - 1.0).abs() < 1e-10);
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn uniform_logits_give_log_classes() {
        let m = TinyMlp::new(vec![3, 5], vec![Vector::from_vec(vec![0.2, -1.0, 3.0])], vec![2]).unwrap();
        let v = m.value(&Vector::zeros(m.n_params())).unwrap();
        assert!((v - 5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = TinyMlp::synthetic(vec![3, 4, 3], 12, 3).unwrap();
        let h = 1e-5;
        for s in 0..10 {
            let w = m.random_weights(50 + s, 1.5);
            let g = m.grad(&w).unwrap();
            let fd = Vector::from_fn(m.n_params(), |j, _| {
                let mut wp = w.clone();
                let mut wm = w.clone();
                wp[j] += h;
                wm[j] -= h;
                (m.value(&wp).unwrap() - m.value(&wm).unwrap()) / (2.0 * h)
            });
            let rel = (&fd - &g).norm() / g.norm().max(1e-12);
            assert!(rel < 1e-4, "rel error {rel}");
        }
    }

    #[test]
    fn per_sample_gradients_average_to_full_gradient() {
        let m = TinyMlp::synthetic(vec![4, 4, 3], 20, 1).unwrap();
        let w = m.random_weights(2, 1.0);
        let full = m.grad(&w).unwrap();
        let mut mean = Vector::zeros(m.n_params());
        for i in 0..20 {
            mean += m.sample_grad(&w, i).unwrap();
        }
        mean /= 20.0;
        assert!((mean - full).amax() < 1e-13);
    }

    #[test]
    fn errors() {
        assert!(matches!(TinyMlp::new(vec![2, 2], vec![], vec![]), Err(Error::EmptyDataset)));
        let m = TinyMlp::synthetic(vec![2, 2], 3, 0).unwrap();
        assert!(matches!(m.value(&Vector::zeros(3)), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.sample_grad(m.weights(), 3), Err(Error::IndexOutOfRange { .. })));
    }
}
