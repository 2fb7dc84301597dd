use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math;

/// Fully connected ReLU network evaluated in batches.
///
/// Parameters live in one flat vector; layer `l` stores its weight matrix
/// (`out × in`, row-major) followed by its bias. The network is a fused
/// primitive of the differentiation engine: [`Mlp::backward`] maps output
/// adjoints to parameter adjoints with dense loops instead of scalar nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Activations retained from a batched forward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    batch: usize,
    /// Layer inputs followed by the final output; hidden entries are
    /// post-activation.
    acts: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

impl Mlp {
    /// He-initialised hidden layers; the output layer starts with zero
    /// weights and zero bias.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let count = Self::count_params(widths);
        let mut params = Vec::with_capacity(count);
        let layers = widths.len() - 1;
        for l in 0..layers {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let std = math::sqrt(2.0 / fan_in.max(1) as f64);
            for _ in 0..fan_in * fan_out {
                let w = if l + 1 == layers {
                    0.0
                } else {
                    let z: f64 = StandardNormal.sample(rng);
                    z * std
                };
                params.push(w);
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        Self {
            widths: widths.to_vec(),
            params,
        }
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Option<Self> {
        (widths.len() >= 2 && params.len() == Self::count_params(widths)).then(|| Self {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn count_params(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Offset of the output layer's bias within the parameter vector.
    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let out = self.output_width();
        let end = self.params.len();
        &mut self.params[end - out..]
    }

    /// Rows of `inputs` (each `input_width` long) through the network.
    pub fn forward(&self, inputs: &[f64]) -> MlpTrace {
        let n_in = self.input_width();
        assert_eq!(inputs.len() % n_in, 0, "input rows");
        let batch = inputs.len() / n_in;
        let layers = self.widths.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(inputs.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[offset..offset + fi * fo];
            let b = &self.params[offset + fi * fo..offset + fi * fo + fo];
            offset += fi * fo + fo;
            let x = &acts[l];
            let mut y = alloc::vec![0.0; batch * fo];
            for r in 0..batch {
                let xr = &x[r * fi..(r + 1) * fi];
                let yr = &mut y[r * fo..(r + 1) * fo];
                for o in 0..fo {
                    let wo = &w[o * fi..(o + 1) * fi];
                    let mut s = b[o];
                    for (a, c) in wo.iter().zip(xr) {
                        s += a * c;
                    }
                    yr[o] = if l + 1 < layers { s.max(0.0) } else { s };
                }
            }
            acts.push(y);
        }
        MlpTrace { batch, acts }
    }

    /// Parameter adjoints given adjoints of the outputs in `trace`.
    pub fn backward(&self, trace: &MlpTrace, grad_out: &[f64]) -> Vec<f64> {
        let batch = trace.batch;
        let layers = self.widths.len() - 1;
        assert_eq!(
            grad_out.len(),
            batch * self.output_width(),
            "output adjoint shape"
        );
        let mut grads = alloc::vec![0.0; self.params.len()];
        let mut delta = grad_out.to_vec();
        let mut offset = self.params.len();
        for l in (0..layers).rev() {
            let (fi, fo) = (self.widths[l], self.widths[l + 1]);
            offset -= fi * fo + fo;
            let w = &self.params[offset..offset + fi * fo];
            let x = &trace.acts[l];
            let (gw, gb) = grads[offset..offset + fi * fo + fo].split_at_mut(fi * fo);
            for r in 0..batch {
                let xr = &x[r * fi..(r + 1) * fi];
                let dr = &delta[r * fo..(r + 1) * fo];
                for o in 0..fo {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    gb[o] += d;
                    for (g, &xv) in gw[o * fi..(o + 1) * fi].iter_mut().zip(xr) {
                        *g += d * xv;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let mut prev = alloc::vec![0.0; batch * fi];
            for r in 0..batch {
                let dr = &delta[r * fo..(r + 1) * fo];
                let pr = &mut prev[r * fi..(r + 1) * fi];
                for o in 0..fo {
                    let d = dr[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &wv) in pr.iter_mut().zip(&w[o * fi..(o + 1) * fi]) {
                        *p += d * wv;
                    }
                }
                // ReLU mask from the stored post-activation values.
                for (p, &a) in pr.iter_mut().zip(&x[r * fi..(r + 1) * fi]) {
                    if a <= 0.0 {
                        *p = 0.0;
                    }
                }
            }
            delta = prev;
        }
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_mlp(widths: &[usize], seed: u64) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::new(widths, &mut rng);
        // Non-zero output layer so every parameter has a gradient.
        for p in net.params_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *p += 0.1 * z;
        }
        net
    }

    /// Loss = Σ c·y over outputs, with fixed random c.
    fn loss(net: &Mlp, x: &[f64], c: &[f64]) -> f64 {
        net.forward(x)
            .output()
            .iter()
            .zip(c)
            .map(|(y, c)| y * c)
            .sum()
    }

    #[test]
    fn two_layer_gradient_matches_central_differences() {
        let widths = [3, 8, 8, 4];
        let net = random_mlp(&widths, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..3 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..4 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let trace = net.forward(&x);
        let g = net.backward(&trace, &c);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..net.params().len() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let fp = loss(&p, &x, &c);
            p.params_mut()[i] -= 2.0 * h;
            let fm = loss(&p, &x, &c);
            let fd = (fp - fm) / (2.0 * h);
            let rel = (g[i] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-5, "max relative error {worst}");
    }

    #[test]
    fn zero_output_layer_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[2, 5, 3], &mut rng);
        net.output_bias_mut().copy_from_slice(&[1.0, -2.0, 0.5]);
        let out = net.forward(&[0.3, 0.4, -1.0, 2.0]);
        assert_eq!(out.output(), &[1.0, -2.0, 0.5, 1.0, -2.0, 0.5]);
    }
}
