//! Finite-difference gradient oracle with its own forward pass; shares no
//! code with the network implementation beyond reading its parameters.

use surro_accel_core::neural::{Layer, Minibatch, Mlp};
use surro_accel_core::stochastic::RngStream;

pub const STEP: f64 = 1e-5;

/// Output and hidden ReLU on/off pattern.
fn forward(layers: &[Layer], x: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let mut a = x.to_vec();
    let mut pattern = Vec::new();
    for (i, l) in layers.iter().enumerate() {
        let mut z = l.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            for (k, ak) in a.iter().enumerate() {
                *zo += l.weights[o * l.inputs + k] * ak;
            }
        }
        if i + 1 < layers.len() {
            pattern.extend(z.iter().map(|&v| v > 0.0));
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        a = z;
    }
    (a, pattern)
}

pub fn loss(layers: &[Layer], batch: &Minibatch) -> (f64, Vec<bool>) {
    let mut total = 0.0;
    let mut pattern = Vec::new();
    for (x, t) in batch.inputs.iter().zip(&batch.targets) {
        let (y, p) = forward(layers, x);
        total += y.iter().zip(t).map(|(y, t)| (y - t) * (y - t)).sum::<f64>() / y.len() as f64;
        pattern.extend(p);
    }
    (total / batch.inputs.len() as f64, pattern)
}

pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
    /// Parameters skipped because ±STEP crosses a ReLU kink.
    pub kinks: usize,
}

/// Relative error with a 1e-6 floor on the denominator, so gradients that
/// are zero up to rounding do not blow it up.
pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

pub fn check(net: &Mlp, batch: &Minibatch) -> GradCheck {
    let (_, grads) = net.backward(batch, None).unwrap();
    let mut layers = net.layers().to_vec();
    let (_, base) = loss(&layers, batch);
    let mut out = GradCheck { max_rel_error: 0.0, checked: 0, kinks: 0 };
    for li in 0..layers.len() {
        let n_w = layers[li].weights.len();
        for p in 0..n_w + layers[li].biases.len() {
            let (analytic, slot): (f64, fn(&mut Layer, usize) -> &mut f64) = if p < n_w {
                (grads.layers[li].weights[p], |l, i| &mut l.weights[i])
            } else {
                (grads.layers[li].biases[p - n_w], |l, i| &mut l.biases[i - l.weights.len()])
            };
            let orig = *slot(&mut layers[li], p);
            *slot(&mut layers[li], p) = orig + STEP;
            let (up, pu) = loss(&layers, batch);
            *slot(&mut layers[li], p) = orig - STEP;
            let (down, pd) = loss(&layers, batch);
            *slot(&mut layers[li], p) = orig;
            if pu != base || pd != base {
                out.kinks += 1;
                continue;
            }
            let numeric = (up - down) / (2.0 * STEP);
            out.max_rel_error = out.max_rel_error.max(rel_error(analytic, numeric));
            out.checked += 1;
        }
    }
    out
}

/// A random network of the given shape and a random batch for it.
pub fn random_case(dims: &[usize], seed: u64) -> (Mlp, Minibatch) {
    let mut s = RngStream::new(seed, 0);
    let net = Mlp::new(dims, 0.0, &mut s).unwrap();
    let (i, o) = (dims[0], dims[dims.len() - 1]);
    let rows = 4;
    let inputs = (0..rows).map(|_| (0..i).map(|_| 2.0 * s.standard_normal()).collect()).collect();
    let targets = (0..rows).map(|_| (0..o).map(|_| s.standard_normal()).collect()).collect();
    (net, Minibatch::new(inputs, targets).unwrap())
}
