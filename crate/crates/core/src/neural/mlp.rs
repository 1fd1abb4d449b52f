use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CrnlError, Result};

use super::trig;

/// One affine layer. `weights` is `fan_in x fan_out`, so a batch `X` maps to
/// `X W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Fully-connected network whose hidden layers apply `sin(omega * (W x + b))`.
/// The last layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct SineMlp {
    widths: Vec<usize>,
    omega: f64,
    use_bias: bool,
    layers: Vec<Dense>,
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[k]` is the batch fed into layer `k`.
    inputs: Vec<Array2<f64>>,
    /// `omega * cos(omega * z_k)` for every hidden layer `k`.
    slopes: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    /// Post-activation values of hidden layer `k`.
    pub fn hidden(&self, k: usize) -> &Array2<f64> {
        &self.inputs[k + 1]
    }
}

/// Parameter gradients laid out like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<Dense>,
}

impl MlpGrad {
    pub fn zeros_like(net: &SineMlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| Dense {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerRecord {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// On-disk form of a [`SineMlp`]. Fields are written in this order:
/// `layer_widths`, `omega`, `bias`, `layers`; each layer stores its
/// `fan_in x fan_out` weight matrix row-major followed by its bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    layer_widths: Vec<usize>,
    omega: f64,
    bias: bool,
    layers: Vec<LayerRecord>,
}

impl SineMlp {
    /// Zero-initialized network. `widths` lists input, hidden and output sizes.
    pub fn zeros(widths: &[usize], omega: f64, use_bias: bool) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(CrnlError::invalid(format!(
                "layer widths {widths:?} need at least input and output sizes, all positive"
            )));
        }
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(CrnlError::invalid(format!("omega must be positive, got {omega}")));
        }
        let layers = widths
            .windows(2)
            .map(|w| Dense {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(Self {
            widths: widths.to_vec(),
            omega,
            use_bias,
            layers,
        })
    }

    /// Sine-network initialization: first layer uniform in `±1/fan_in`,
    /// later layers in `±sqrt(6/fan_in)/omega`, biases in `±1/sqrt(fan_in)`.
    /// Deterministic in `seed`.
    pub fn siren(widths: &[usize], omega: f64, use_bias: bool, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(widths, omega, use_bias)?;
        net.siren_init(seed);
        Ok(net)
    }

    pub fn siren_init(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = self.omega;
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let fan_in = layer.weights.nrows() as f64;
            let limit = if k == 0 {
                1.0 / fan_in
            } else {
                (6.0 / fan_in).sqrt() / omega
            };
            layer
                .weights
                .mapv_inplace(|_| rng.random_range(-limit..=limit));
            let blimit = 1.0 / fan_in.sqrt();
            if self.use_bias {
                layer.bias.mapv_inplace(|_| rng.random_range(-blimit..=blimit));
            } else {
                layer.bias.fill(0.0);
            }
        }
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn uses_bias(&self) -> bool {
        self.use_bias
    }

    /// Number of weight layers (`M`).
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + if self.use_bias { l.bias.len() } else { 0 })
            .sum()
    }

    /// Parameter tensors in checkpoint order: weights then bias, per layer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn param_sizes(&self) -> Vec<usize> {
        self.param_slices().iter().map(|s| s.len()).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.param_slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// Largest entrywise l1-norm over the weight matrices.
    pub fn param_l1_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(CrnlError::shape(format!(
                "network expects {} inputs, batch has {}",
                self.input_dim(),
                inputs.ncols()
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(CrnlError::NonFinite("network input".into()));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        let last = self.layers.len() - 1;
        let mut h = inputs.to_owned();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            if self.use_bias {
                z += &layer.bias;
            }
            if k < last {
                z *= self.omega;
                trig::sin_in_place(z.as_slice_mut().expect("standard layout"));
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`SineMlp::backward`] needs.
    pub fn forward_cached(&self, inputs: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&inputs)?;
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut slopes = Vec::with_capacity(last);
        layer_inputs.push(inputs.to_owned());
        let mut output = None;
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer_inputs[k].dot(&layer.weights);
            if self.use_bias {
                z += &layer.bias;
            }
            if k < last {
                z *= self.omega;
                let mut h = Array2::zeros(z.raw_dim());
                let mut slope = Array2::zeros(z.raw_dim());
                trig::sincos_checked(
                    z.as_slice().expect("standard layout"),
                    h.as_slice_mut().expect("standard layout"),
                    slope.as_slice_mut().expect("standard layout"),
                );
                slope *= self.omega;
                slopes.push(slope);
                layer_inputs.push(h);
            } else {
                output = Some(z);
            }
        }
        Ok(ForwardCache {
            inputs: layer_inputs,
            slopes,
            output: output.expect("at least one layer"),
        })
    }

    /// Reverse-mode pass. Returns parameter gradients of
    /// `sum(output_grad * output)` and, when `want_input_grad`, the gradient
    /// with respect to the inputs.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
        want_input_grad: bool,
    ) -> Result<(MlpGrad, Option<Array2<f64>>)> {
        if output_grad.dim() != cache.output.dim() {
            return Err(CrnlError::shape(format!(
                "output gradient {:?} does not match forward output {:?}",
                output_grad.dim(),
                cache.output.dim()
            )));
        }
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        let mut input_grad = None;
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let dw = cache.inputs[k].t().dot(&delta);
            let dw = if dw.is_standard_layout() { dw } else { dw.as_standard_layout().into_owned() };
            let db = if self.use_bias {
                delta.sum_axis(Axis(0))
            } else {
                Array1::zeros(layer.bias.len())
            };
            grads.push(Dense {
                weights: dw,
                bias: db,
            });
            if k > 0 || want_input_grad {
                let mut dh = delta.dot(&layer.weights.t());
                if k > 0 {
                    dh *= &cache.slopes[k - 1];
                    delta = dh;
                } else {
                    input_grad = Some(dh);
                }
            }
        }
        grads.reverse();
        Ok((MlpGrad { layers: grads }, input_grad))
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            layer_widths: self.widths.clone(),
            omega: self.omega,
            bias: self.use_bias,
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord {
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: &MlpCheckpoint) -> Result<Self> {
        let mut net = Self::zeros(&ckpt.layer_widths, ckpt.omega, ckpt.bias)?;
        if ckpt.layers.len() != net.layers.len() {
            return Err(CrnlError::shape(format!(
                "checkpoint has {} layers, widths imply {}",
                ckpt.layers.len(),
                net.layers.len()
            )));
        }
        for (layer, rec) in net.layers.iter_mut().zip(&ckpt.layers) {
            if rec.weights.len() != layer.weights.len() || rec.bias.len() != layer.bias.len() {
                return Err(CrnlError::shape("checkpoint layer size mismatch"));
            }
            layer
                .weights
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&rec.weights);
            layer.bias.as_slice_mut().unwrap().copy_from_slice(&rec.bias);
        }
        if !net.all_finite() {
            return Err(CrnlError::NonFinite("checkpoint parameters".into()));
        }
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_network_outputs_zero() {
        let net = SineMlp::zeros(&[2, 8, 3], 30.0, true).unwrap();
        let out = net.forward(array![[0.3, -0.7], [1.0, 0.5]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        assert_eq!(out.dim(), (2, 3));
    }

    #[test]
    fn single_layer_is_affine() {
        let mut net = SineMlp::zeros(&[2, 1], 30.0, true).unwrap();
        net.layers_mut()[0].weights = array![[2.0], [-3.0]];
        net.layers_mut()[0].bias = array![0.5];
        let out = net.forward(array![[1.0, 1.0], [0.5, -2.0]].view()).unwrap();
        assert_eq!(out, array![[-0.5], [7.5]]);
    }

    #[test]
    fn linear_weight_gradient_is_input() {
        let net = SineMlp::zeros(&[3, 1], 1.0, false).unwrap();
        let x = array![[0.2, -0.4, 0.9]];
        let cache = net.forward_cached(x.view()).unwrap();
        let (g, _) = net.backward(&cache, array![[1.0]].view(), false).unwrap();
        assert_eq!(g.layers[0].weights, array![[0.2], [-0.4], [0.9]]);
    }

    #[test]
    fn zero_output_gradient_gives_zero_grads() {
        let net = SineMlp::siren(&[1, 16, 2], 30.0, true, 4).unwrap();
        let x = array![[0.1], [0.6]];
        let cache = net.forward_cached(x.view()).unwrap();
        let (g, dx) = net
            .backward(&cache, Array2::zeros((2, 2)).view(), true)
            .unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
        assert!(dx.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_mismatch_and_nonfinite_input() {
        let net = SineMlp::siren(&[2, 4, 1], 30.0, true, 0).unwrap();
        assert!(matches!(
            net.forward(array![[1.0, 2.0, 3.0]].view()),
            Err(CrnlError::Shape(_))
        ));
        assert!(matches!(
            net.forward(array![[1.0, f64::NAN]].view()),
            Err(CrnlError::NonFinite(_))
        ));
    }

    #[test]
    fn siren_init_bounds_and_determinism() {
        let omega = 30.0;
        let a = SineMlp::siren(&[3, 32, 32, 1], omega, true, 9).unwrap();
        let b = SineMlp::siren(&[3, 32, 32, 1], omega, true, 9).unwrap();
        let c = SineMlp::siren(&[3, 32, 32, 1], omega, true, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (k, l) in a.layers().iter().enumerate() {
            let fan_in = l.weights.nrows() as f64;
            let limit = if k == 0 { 1.0 / fan_in } else { (6.0 / fan_in).sqrt() / omega };
            assert!(l.weights.iter().all(|w| w.abs() <= limit));
        }
    }

    #[test]
    fn param_l1_bound_hand_example() {
        let mut net = SineMlp::zeros(&[2, 2], 1.0, false).unwrap();
        assert_eq!(net.param_l1_bound(), 0.0);
        net.layers_mut()[0].weights = array![[1.0, -1.0], [2.0, 0.0]];
        assert_eq!(net.param_l1_bound(), 4.0);
    }

    #[test]
    fn hidden_activations_bounded() {
        let net = SineMlp::siren(&[2, 32, 32, 1], 30.0, true, 1).unwrap();
        let x = Array2::from_shape_fn((50, 2), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let cache = net.forward_cached(x.view()).unwrap();
        for k in 0..2 {
            assert!(cache.hidden(k).iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = SineMlp::siren(&[1, 8, 4], 12.0, true, 2).unwrap();
        let back = SineMlp::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back, net);
    }

    #[test]
    fn bias_free_network_ignores_bias_arrays() {
        let net = SineMlp::siren(&[1, 8, 2], 30.0, false, 2).unwrap();
        assert!(net.layers().iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let out = net.forward(array![[0.0]].view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }
}
