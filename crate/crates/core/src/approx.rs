//! Dense tanh networks with hand-written backpropagation, an Adam
//! optimizer and a versioned JSON checkpoint format.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u64 = 1;

/// One affine layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn len(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Feedforward network: tanh on every hidden layer, linear outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Approximator {
    layers: Vec<Layer>,
}

/// Per-layer activations from a forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace has an output")
    }
}

impl Approximator {
    /// Glorot-uniform weights, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(dims);
        for layer in &mut net.layers {
            let limit = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..=limit);
            }
        }
        net
    }

    pub fn seeded(dims: &[usize], seed: u64) -> Self {
        Self::new(dims, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(dims: &[usize]) -> Self {
        assert!(dims.len() >= 2, "a network needs an input and an output size");
        Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::CheckpointDimensions("no layers".into()));
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.weights.len() != layer.inputs * layer.outputs || layer.biases.len() != layer.outputs {
                return Err(Error::CheckpointDimensions(format!("layer {i} payload size")));
            }
            if i > 0 && layers[i - 1].outputs != layer.inputs {
                return Err(Error::CheckpointDimensions(format!("layer {i} input size")));
            }
        }
        Ok(Self { layers })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].inputs];
        dims.extend(self.layers.iter().map(|l| l.outputs));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").outputs
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(Layer::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(input)?.activations.pop().expect("output layer"))
    }

    pub fn trace(&self, input: &[f64]) -> Result<Trace> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: input.len(),
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = activations.last().expect("input pushed");
            let mut z = layer.biases.clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                *zo += row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
            }
            if i != last {
                for v in &mut z {
                    *v = v.tanh();
                }
            }
            activations.push(z);
        }
        Ok(Trace { activations })
    }

    /// Accumulates `scale · ∂(d_output · output)/∂θ` into `grads`.
    pub fn backward(&self, trace: &Trace, d_output: &[f64], scale: f64, grads: &mut Gradients) {
        let last = self.layers.len() - 1;
        let mut delta: Vec<f64> = d_output.iter().map(|d| d * scale).collect();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if i != last {
                for (d, a) in delta.iter_mut().zip(&trace.activations[i + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let x = &trace.activations[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gw, xi) in row.iter_mut().zip(x) {
                    *gw += d * xi;
                }
            }
            if i > 0 {
                let mut prev = vec![0.0; layer.inputs];
                for (o, d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (p, w) in prev.iter_mut().zip(row) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }

    /// Flattened parameters, layer by layer (weights then biases).
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.biases).copied())
            .collect()
    }

    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for layer in &mut self.layers {
            for w in layer.weights.iter_mut().chain(layer.biases.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }
}

/// Parameter-shaped gradient (or moment) storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(net: &Approximator) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Layer::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases))
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.biases.iter_mut()))
    }

    pub fn flat(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    pub fn norm(&self) -> f64 {
        self.values().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values().all(|v| *v == 0.0)
    }
}

/// Mean loss over a batch and its exact parameter gradient.
///
/// `loss` maps `(sample index, network output)` to the sample's loss and
/// its derivative with respect to the output.
pub fn gradients<F>(net: &Approximator, batch: &[Vec<f64>], mut loss: F) -> Result<(f64, Gradients)>
where
    F: FnMut(usize, &[f64]) -> (f64, Vec<f64>),
{
    if batch.is_empty() {
        return Err(Error::Usage("gradient of an empty batch".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = Gradients::zeros_like(net);
    let mut total = 0.0;
    for (i, input) in batch.iter().enumerate() {
        let trace = net.trace(input)?;
        let (l, d_out) = loss(i, trace.output());
        if !l.is_finite() || d_out.iter().any(|d| !d.is_finite()) {
            return Err(Error::Numeric {
                index: i,
                detail: format!("loss {l}"),
            });
        }
        total += l;
        net.backward(&trace, &d_out, scale, &mut grads);
    }
    Ok((total * scale, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub max_grad_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: Some(0.5),
        }
    }
}

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Gradients,
    pub v: Gradients,
    pub t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, net: &Approximator) -> Self {
        Self {
            config,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
            t: 0,
        }
    }

    pub fn step(&mut self, net: &mut Approximator, mut grads: Gradients) {
        if grads.is_zero() {
            return;
        }
        if let Some(max) = self.config.max_grad_norm {
            let norm = grads.norm();
            if norm > max {
                grads.scale(max / norm);
            }
        }
        self.t += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            ..
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (li, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[li];
            let m = &mut self.m.layers[li];
            let v = &mut self.v.layers[li];
            let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
            let gs = g.weights.iter().chain(&g.biases);
            let ms = m.weights.iter_mut().chain(m.biases.iter_mut());
            let vs = v.weights.iter_mut().chain(v.biases.iter_mut());
            for (((p, g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                *p -= learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon);
            }
        }
    }
}

/// Serialized position of a ChaCha8 stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::CorruptCheckpoint("rng seed must be 32 bytes".into()))?;
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::CorruptCheckpoint("rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }
}

/// A network plus everything needed to resume training it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: Approximator,
    pub optimizer: Option<Adam>,
    pub step: u64,
    pub config_hash: String,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    pub fn new(net: Approximator) -> Self {
        Self {
            net,
            optimizer: None,
            step: 0,
            config_hash: String::new(),
            rng: None,
        }
    }

    pub fn to_json(&self) -> String {
        let doc = CheckpointDoc {
            version: CHECKPOINT_VERSION,
            dims: self.net.dims(),
            params: encode_layers(&self.net.layers),
            optimizer: self.optimizer.as_ref().map(|opt| OptimizerDoc {
                config: opt.config,
                t: opt.t,
                m: encode_layers(&opt.m.layers),
                v: encode_layers(&opt.v.layers),
            }),
            step: self.step,
            config_hash: self.config_hash.clone(),
            rng: self.rng.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::CorruptCheckpoint("missing version".into()))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let doc: CheckpointDoc =
            serde_json::from_value(value).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        if doc.dims.len() < 2 || doc.dims.contains(&0) {
            return Err(Error::CheckpointDimensions(format!("dims {:?}", doc.dims)));
        }
        let net = Approximator::from_layers(decode_layers(&doc.dims, &doc.params)?)?;
        let optimizer = match doc.optimizer {
            Some(opt) => Some(Adam {
                config: opt.config,
                t: opt.t,
                m: Gradients {
                    layers: decode_layers(&doc.dims, &opt.m)?,
                },
                v: Gradients {
                    layers: decode_layers(&doc.dims, &opt.v)?,
                },
            }),
            None => None,
        };
        Ok(Self {
            net,
            optimizer,
            step: doc.step,
            config_hash: doc.config_hash,
            rng: doc.rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    version: u64,
    dims: Vec<usize>,
    params: Vec<String>,
    optimizer: Option<OptimizerDoc>,
    step: u64,
    config_hash: String,
    rng: Option<RngState>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerDoc {
    config: AdamConfig,
    t: u64,
    m: Vec<String>,
    v: Vec<String>,
}

fn encode_layers(layers: &[Layer]) -> Vec<String> {
    layers
        .iter()
        .map(|l| {
            let bytes: Vec<u8> = l
                .weights
                .iter()
                .chain(&l.biases)
                .flat_map(|v| v.to_le_bytes())
                .collect();
            B64.encode(bytes)
        })
        .collect()
}

fn decode_layers(dims: &[usize], payload: &[String]) -> Result<Vec<Layer>> {
    if payload.len() != dims.len() - 1 {
        return Err(Error::CheckpointDimensions(format!(
            "{} layer payloads for {} layers",
            payload.len(),
            dims.len() - 1
        )));
    }
    dims.windows(2)
        .zip(payload)
        .enumerate()
        .map(|(i, (w, text))| {
            let bytes = B64
                .decode(text)
                .map_err(|e| Error::CorruptCheckpoint(format!("layer {i}: {e}")))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::CorruptCheckpoint(format!("layer {i}: ragged payload")));
            }
            let values: Vec<f64> = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let (inputs, outputs) = (w[0], w[1]);
            if values.len() != inputs * outputs + outputs {
                return Err(Error::CheckpointDimensions(format!(
                    "layer {i}: {} values for a {inputs}x{outputs} layer",
                    values.len()
                )));
            }
            let (weights, biases) = values.split_at(inputs * outputs);
            Ok(Layer {
                inputs,
                outputs,
                weights: weights.to_vec(),
                biases: biases.to_vec(),
            })
        })
        .collect()
}
