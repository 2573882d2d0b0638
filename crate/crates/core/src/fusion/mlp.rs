use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::FusionError;
use crate::tensor::{self, FeatureTensor};

/// Default hidden width of the switcher.
pub const DEFAULT_HIDDEN: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `output × input`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub input: usize,
    pub output: usize,
}

/// Fully connected switcher network producing `[no-grasp, grasp]` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Linear>,
}

impl MlpParams {
    pub fn new(layers: Vec<Linear>) -> Result<Self, FusionError> {
        if layers.is_empty() {
            return Err(FusionError::InvalidParams("no layers".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weight.len() != l.input * l.output || l.bias.len() != l.output {
                return Err(FusionError::InvalidParams(format!(
                    "layer {i}: buffer sizes"
                )));
            }
            if l.weight.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(FusionError::InvalidParams(format!(
                    "layer {i}: non-finite entry"
                )));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output != w[1].input {
                return Err(FusionError::InvalidParams(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    w[0].output,
                    i + 1,
                    w[1].input
                )));
            }
        }
        if layers.last().map(|l| l.output) != Some(2) {
            return Err(FusionError::InvalidParams(
                "final layer must output 2 logits".into(),
            ));
        }
        Ok(Self { layers })
    }

    /// He-initialized weights and zero biases; `sizes` runs from input to 2.
    pub fn seeded(sizes: &[usize], seed: u64) -> Result<Self, FusionError> {
        if sizes.len() < 2 {
            return Err(FusionError::InvalidParams(
                "need at least input and output sizes".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive std");
                Linear {
                    weight: (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect(),
                    bias: vec![0.0; w[1]],
                    input: w[0],
                    output: w[1],
                }
            })
            .collect();
        Self::new(layers)
    }

    /// Two layers with the default hidden width.
    pub fn default_for(input: usize, seed: u64) -> Result<Self, FusionError> {
        Self::seeded(&[input, DEFAULT_HIDDEN, 2], seed)
    }

    pub fn layers(&self) -> &[Linear] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Linear] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input
    }

    pub fn save(&self, path: &Path) -> Result<(), FusionError> {
        let mut owned = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            owned.push((
                format!("layer{i}.weight"),
                FeatureTensor::new(vec![l.output, l.input], l.weight.clone())?,
            ));
            owned.push((
                format!("layer{i}.bias"),
                FeatureTensor::new(vec![l.output], l.bias.clone())?,
            ));
        }
        let named: Vec<(&str, &FeatureTensor)> =
            owned.iter().map(|(n, t)| (n.as_str(), t)).collect();
        Ok(tensor::save_tensors(path, &named)?)
    }

    pub fn load(path: &Path) -> Result<Self, FusionError> {
        let tensors = tensor::load_tensors(path)?;
        let find = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| FusionError::InvalidParams(format!("missing tensor `{name}`")))
        };
        let mut layers = Vec::new();
        for i in 0.. {
            let wname = format!("layer{i}.weight");
            if !tensors.iter().any(|(n, _)| *n == wname) {
                break;
            }
            let w = find(&wname)?;
            let b = find(&format!("layer{i}.bias"))?;
            let (output, input) = w
                .dims2()
                .ok_or_else(|| FusionError::InvalidParams(format!("{wname} must be rank 2")))?;
            layers.push(Linear {
                weight: w.data().to_vec(),
                bias: b.data().to_vec(),
                input,
                output,
            });
        }
        Self::new(layers)
    }
}

/// Affine layers with ReLU between them; the last layer is linear.
pub fn switcher_forward(feat: &FeatureTensor, params: &MlpParams) -> Result<[f64; 2], FusionError> {
    if feat.shape().len() != 1 || feat.len() != params.input_dim() {
        return Err(FusionError::ShapeMismatch {
            expected: vec![params.input_dim()],
            got: feat.shape().to_vec(),
        });
    }
    let mut x = feat.data().to_vec();
    let last = params.layers.len() - 1;
    for (i, l) in params.layers.iter().enumerate() {
        let mut y = l.bias.clone();
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &l.weight[o * l.input..(o + 1) * l.input];
            for (w, xi) in row.iter().zip(&x) {
                *yo += w * xi;
            }
        }
        if i != last {
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        x = y;
    }
    Ok([x[0], x[1]])
}

/// Hard switcher decision `s = argmax(logits)`: true means grasping.
/// Ties resolve to no-grasp.
pub fn switcher_decision(logits: [f64; 2]) -> bool {
    logits[1] > logits[0]
}

/// Softmax cross-entropy over the two logits and its gradient.
pub fn switcher_loss(logits: [f64; 2], grasping: bool) -> (f64, [f64; 2]) {
    let label = usize::from(grasping);
    let other = 1 - label;
    // −log softmax[label] = log(1 + exp(l_other − l_label)), evaluated stably.
    let d = logits[other] - logits[label];
    let loss = if d > 0.0 {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    };
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    let mut grad = [e[0] / z, e[1] / z];
    grad[label] -= 1.0;
    (loss, grad)
}
