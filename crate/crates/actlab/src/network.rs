//! Fully-connected network: seeded construction, batched forward pass with
//! a tape, softmax cross-entropy, exact reverse-mode gradients, and a
//! finite-difference gradient check.
//!
//! Conventions, fixed once and used consistently:
//!
//! * **Batch-as-columns**: a batch of `B` samples is an `n_0 x B` matrix,
//!   so layer equations read exactly as `x = W y + b`.
//! * **Affine head**: the final layer produces raw logits — the activation
//!   is applied at hidden layers only. Classification losses own the
//!   output nonlinearity.
//! * **Kink convention**: activation derivatives at 0 are right-handed,
//!   matching [`crate::activations::Activation::derivative`].

use std::io::{Read, Write};
use std::path::Path;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::init::{init_bias, InitScheme};
use crate::tensor::{Matrix, Rng};

/// Magic bytes opening a saved model file.
const MODEL_MAGIC: &[u8; 8] = b"ACTLAB01";

/// Architecture plus construction parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Layer widths `n_0 .. n_L`; `widths.len() - 1` weight layers.
    pub widths: Vec<usize>,
    /// Hidden-layer activation (layers `1 .. L-1`).
    pub activation: Activation,
    pub init: InitScheme,
    /// Master seed; layer `l` draws its weights from a stream seeded
    /// `seed + l`.
    pub seed: u64,
}

impl NetworkConfig {
    fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "network needs at least input and output widths, got {}",
                self.widths.len()
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidParameter(
                "all layer widths must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Materialized parameters. `weights[l]` has shape `n_{l+1} x n_l`;
/// `biases[l]` is an `n_{l+1} x 1` column.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub config: NetworkConfig,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

/// Everything the backward pass needs from a forward pass:
/// pre-activations `x^(1) .. x^(L)` and activations `y^(0) .. y^(L)`
/// (`y^(0)` is the input batch; `y^(L)` the logits).
#[derive(Debug, Clone)]
pub struct ForwardTape {
    pub pre: Vec<Matrix>,
    pub act: Vec<Matrix>,
}

impl ForwardTape {
    /// The logits `y^(L)`.
    pub fn logits(&self) -> &Matrix {
        self.act.last().expect("tape always holds the input layer")
    }
}

/// Parameter and per-layer output gradients. Shapes mirror [`Network`];
/// `d_act[l]` is `d cost / d y^(l)`.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Matrix>,
    pub d_act: Vec<Matrix>,
}

impl Network {
    /// Draw a fresh network: weights per the scheme from per-layer derived
    /// seeds (`seed + layer_index`), biases zero.
    pub fn build(config: NetworkConfig) -> Result<Network> {
        config.validate()?;
        let depth = config.depth();
        let mut weights = Vec::with_capacity(depth);
        let mut biases = Vec::with_capacity(depth);
        for l in 0..depth {
            let mut rng = Rng::new(config.seed.wrapping_add(l as u64));
            weights.push(config.init.init_weights(
                &mut rng,
                config.widths[l + 1],
                config.widths[l],
            )?);
            biases.push(init_bias(config.widths[l + 1])?);
        }
        Ok(Network {
            config,
            weights,
            biases,
        })
    }

    /// Assemble a network from explicit parameters (used by tests and by
    /// the model loader). Shapes are validated against the config.
    pub fn from_parts(
        config: NetworkConfig,
        weights: Vec<Matrix>,
        biases: Vec<Matrix>,
    ) -> Result<Network> {
        config.validate()?;
        let depth = config.depth();
        if weights.len() != depth || biases.len() != depth {
            return Err(Error::InvalidParameter(format!(
                "expected {depth} weight and bias layers, got {} and {}",
                weights.len(),
                biases.len()
            )));
        }
        for l in 0..depth {
            let (wr, wc) = (weights[l].rows(), weights[l].cols());
            if (wr, wc) != (config.widths[l + 1], config.widths[l]) {
                return Err(Error::InvalidParameter(format!(
                    "weight layer {l} is {wr}x{wc}, expected {}x{}",
                    config.widths[l + 1],
                    config.widths[l]
                )));
            }
            if (biases[l].rows(), biases[l].cols()) != (config.widths[l + 1], 1) {
                return Err(Error::InvalidParameter(format!(
                    "bias layer {l} must be {}x1",
                    config.widths[l + 1]
                )));
            }
        }
        Ok(Network {
            config,
            weights,
            biases,
        })
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    /// Total parameter count.
    pub fn num_params(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.data().len())
            .chain(self.biases.iter().map(|b| b.data().len()))
            .sum()
    }

    /// Batched forward pass. `batch` is `n_0 x B`. Hidden layers apply the
    /// activation; the final layer is affine (logits).
    pub fn forward(&self, batch: &Matrix) -> Result<ForwardTape> {
        if batch.rows() != self.config.widths[0] {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs_rows: self.config.widths[0],
                lhs_cols: batch.cols(),
                rhs_rows: batch.rows(),
                rhs_cols: batch.cols(),
            });
        }
        let depth = self.config.depth();
        let mut pre = Vec::with_capacity(depth);
        let mut act = Vec::with_capacity(depth + 1);
        act.push(batch.clone());
        for l in 0..depth {
            let x = self.weights[l]
                .matmul(&act[l])?
                .add_col_broadcast(&self.biases[l])?;
            let y = if l + 1 == depth {
                x.clone()
            } else {
                x.map(|v| self.config.activation.apply(v))
            };
            pre.push(x);
            act.push(y);
        }
        Ok(ForwardTape { pre, act })
    }

    /// Reverse-mode gradients for every parameter and layer output, given
    /// the tape of a forward pass and the loss gradient at the logits.
    ///
    /// For the affine head `dx^(L) = dlogits`; below it,
    /// `dx^(l) = f'(x^(l)) .* dy^(l)`, then
    /// `dW^(l-1) = dx^(l) y^(l-1)^T`, `db^(l-1) = rowsum(dx^(l))`, and
    /// `dy^(l-1) = W^(l-1)^T dx^(l)` — the linear-activation special case
    /// reduces to multiplying by `alpha W^T` per layer.
    pub fn backward(&self, tape: &ForwardTape, dlogits: &Matrix) -> Result<Gradients> {
        let depth = self.config.depth();
        if tape.pre.len() != depth || tape.act.len() != depth + 1 {
            return Err(Error::TapeMismatch(format!(
                "tape has {} pre-activation and {} activation layers, network depth is {depth}",
                tape.pre.len(),
                tape.act.len()
            )));
        }
        for l in 0..depth {
            if tape.pre[l].rows() != self.config.widths[l + 1] {
                return Err(Error::TapeMismatch(format!(
                    "tape layer {l} has width {}, network expects {}",
                    tape.pre[l].rows(),
                    self.config.widths[l + 1]
                )));
            }
        }
        let logits = tape.logits();
        if dlogits.rows() != logits.rows() || dlogits.cols() != logits.cols() {
            return Err(Error::TapeMismatch(format!(
                "dlogits is {}x{}, logits are {}x{}",
                dlogits.rows(),
                dlogits.cols(),
                logits.rows(),
                logits.cols()
            )));
        }

        let mut d_weights = vec![Matrix::zeros(0, 0); depth];
        let mut d_biases = vec![Matrix::zeros(0, 0); depth];
        let mut d_act = vec![Matrix::zeros(0, 0); depth + 1];
        d_act[depth] = dlogits.clone();
        for l in (0..depth).rev() {
            // dx at layer l+1: through the activation for hidden layers,
            // pass-through for the affine head.
            let dx = if l + 1 == depth {
                d_act[depth].clone()
            } else {
                tape.pre[l]
                    .map(|v| self.config.activation.derivative(v))
                    .hadamard(&d_act[l + 1])?
            };
            d_weights[l] = dx.matmul(&tape.act[l].transpose())?;
            d_biases[l] = dx.row_sums();
            d_act[l] = self.weights[l].transpose().matmul(&dx)?;
        }
        Ok(Gradients {
            d_weights,
            d_biases,
            d_act,
        })
    }

    /// One SGD step: `param -= lr * grad` for every weight and bias.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) -> Result<()> {
        for (w, dw) in self.weights.iter_mut().zip(&grads.d_weights) {
            w.add_scaled_in_place(dw, -lr)?;
        }
        for (b, db) in self.biases.iter_mut().zip(&grads.d_biases) {
            b.add_scaled_in_place(db, -lr)?;
        }
        Ok(())
    }

    /// Maximum relative disagreement between analytic gradients and central
    /// finite differences of the loss, over **all** parameters:
    /// `|analytic - numeric| / max(|analytic|, |numeric|, 1e-12)`.
    ///
    /// The 1e-12 floor keeps dead units (both sides ~0) from producing 0/0.
    pub fn gradient_check(&self, batch: &Matrix, labels: &[usize], h: f64) -> Result<f64> {
        self.gradient_check_biased(batch, labels, h, 0.0)
    }

    /// [`Self::gradient_check`] with a relative perturbation applied to the
    /// analytic gradients before comparison. A nonzero `corruption` is a
    /// negative control: it must make the check fail, proving the harness
    /// can detect a wrong gradient. `corruption = 0` is the real check.
    pub fn gradient_check_biased(
        &self,
        batch: &Matrix,
        labels: &[usize],
        h: f64,
        corruption: f64,
    ) -> Result<f64> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        let tape = self.forward(batch)?;
        let (_, dlogits) = softmax_cross_entropy(tape.logits(), labels)?;
        let grads = self.backward(&tape, &dlogits)?;

        let mut probe = self.clone();
        let mut max_rel = 0.0f64;
        for layer in 0..self.config.depth() {
            for param_kind in 0..2 {
                let count = if param_kind == 0 {
                    self.weights[layer].data().len()
                } else {
                    self.biases[layer].data().len()
                };
                for idx in 0..count {
                    let analytic = if param_kind == 0 {
                        grads.d_weights[layer].data()[idx]
                    } else {
                        grads.d_biases[layer].data()[idx]
                    } * (1.0 + corruption);

                    let original = {
                        let p = probe.param_mut(layer, param_kind);
                        let v = p[idx];
                        p[idx] = v + h;
                        v
                    };
                    let loss_plus = probe.loss_only(batch, labels)?;
                    probe.param_mut(layer, param_kind)[idx] = original - h;
                    let loss_minus = probe.loss_only(batch, labels)?;
                    probe.param_mut(layer, param_kind)[idx] = original;

                    let numeric = (loss_plus - loss_minus) / (2.0 * h);
                    let denom = analytic.abs().max(numeric.abs()).max(1e-12);
                    max_rel = max_rel.max((analytic - numeric).abs() / denom);
                }
            }
        }
        Ok(max_rel)
    }

    fn param_mut(&mut self, layer: usize, param_kind: usize) -> &mut [f64] {
        if param_kind == 0 {
            self.weights[layer].data_mut()
        } else {
            self.biases[layer].data_mut()
        }
    }

    fn loss_only(&self, batch: &Matrix, labels: &[usize]) -> Result<f64> {
        let tape = self.forward(batch)?;
        Ok(softmax_cross_entropy(tape.logits(), labels)?.0)
    }

    /// Serialize to a flat little-endian binary file: the magic
    /// `ACTLAB01`, a header (widths, activation name + leak, init name +
    /// gain, seed), then the raw `f64` weight and bias arrays in layer
    /// order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out: Vec<u8> = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        write_u32(&mut out, self.config.widths.len() as u32);
        for &w in &self.config.widths {
            write_u32(&mut out, w as u32);
        }
        write_str(&mut out, self.config.activation.name());
        out.extend_from_slice(&self.config.activation.leak().unwrap_or(0.0).to_le_bytes());
        write_str(&mut out, self.config.init.name());
        out.extend_from_slice(&self.config.init.gain.to_le_bytes());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        for m in self.weights.iter().chain(&self.biases) {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }

    /// Inverse of [`Self::save`].
    pub fn load(path: &Path) -> Result<Network> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = ByteReader::new(&bytes);

        let magic = r.take(8, "magic")?;
        if magic != MODEL_MAGIC {
            return Err(Error::ModelFormat(format!(
                "bad magic {:02x?}, expected {:02x?}",
                magic, MODEL_MAGIC
            )));
        }
        let n_widths = r.u32("width count")? as usize;
        if n_widths < 2 {
            return Err(Error::ModelFormat(format!(
                "model declares {n_widths} layer widths"
            )));
        }
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            widths.push(r.u32("width")? as usize);
        }
        let act_name = r.string("activation name")?;
        let leak = r.f64("leak")?;
        let activation = Activation::from_name(&act_name, if leak == 0.0 { 0.25 } else { leak })
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let init_name = r.string("init name")?;
        let gain = r.f64("init gain")?;
        let init = InitScheme::from_name(&init_name, gain)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        let seed = r.u64("seed")?;

        let config = NetworkConfig {
            widths: widths.clone(),
            activation,
            init,
            seed,
        };
        let depth = config.depth();
        let mut weights = Vec::with_capacity(depth);
        for l in 0..depth {
            weights.push(r.matrix(widths[l + 1], widths[l], "weights")?);
        }
        let mut biases = Vec::with_capacity(depth);
        for l in 0..depth {
            biases.push(r.matrix(widths[l + 1], 1, "biases")?);
        }
        if !r.done() {
            return Err(Error::ModelFormat(
                "trailing bytes after parameters".to_string(),
            ));
        }
        Network::from_parts(config, weights, biases).map_err(|e| Error::ModelFormat(e.to_string()))
    }
}

fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn write_str(out: &mut Vec<u8>, s: &str) {
    write_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

/// Cursor over a model file's bytes with contextual error messages.
struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> ByteReader<'a> {
        ByteReader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelFormat(format!(
                "file truncated while reading {what}"
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        if len > 256 {
            return Err(Error::ModelFormat(format!(
                "unreasonable {what} length {len}"
            )));
        }
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::ModelFormat(format!("{what} is not valid UTF-8")))
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64(what)?);
        }
        Matrix::from_vec(rows, cols, data).map_err(|e| Error::ModelFormat(e.to_string()))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Mean softmax cross-entropy over a batch of logit columns, and its exact
/// gradient `(softmax - onehot) / B`.
///
/// Numerically stabilized by subtracting each column's maximum before
/// exponentiating, so arbitrarily large logits cannot overflow.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if labels.len() != logits.cols() {
        return Err(Error::ShapeMismatch {
            op: "softmax_cross_entropy",
            lhs_rows: logits.rows(),
            lhs_cols: logits.cols(),
            rhs_rows: labels.len(),
            rhs_cols: 1,
        });
    }
    let classes = logits.rows();
    for &label in labels {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
    }
    let batch = logits.cols();
    let inv_b = 1.0 / batch as f64;
    let mut dlogits = Matrix::zeros(classes, batch);
    let mut loss = 0.0;
    for (j, &label) in labels.iter().enumerate() {
        let mut max = f64::NEG_INFINITY;
        for i in 0..classes {
            max = max.max(logits.get(i, j));
        }
        let mut denom = 0.0;
        for i in 0..classes {
            denom += (logits.get(i, j) - max).exp();
        }
        let log_denom = denom.ln();
        loss += -(logits.get(label, j) - max - log_denom);
        for i in 0..classes {
            let p = (logits.get(i, j) - max).exp() / denom;
            let grad = if i == label { p - 1.0 } else { p };
            dlogits.set(i, j, grad * inv_b);
        }
    }
    Ok((loss * inv_b, dlogits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::InitKind;

    fn tanh_config(widths: &[usize], seed: u64) -> NetworkConfig {
        NetworkConfig {
            widths: widths.to_vec(),
            activation: Activation::Tanh,
            init: InitScheme::fan_in(),
            seed,
        }
    }

    #[test]
    fn build_is_deterministic_and_biases_zero() {
        let a = Network::build(tanh_config(&[2, 3, 2], 11)).unwrap();
        let b = Network::build(tanh_config(&[2, 3, 2], 11)).unwrap();
        assert_eq!(a, b);
        assert!(a
            .biases()
            .iter()
            .all(|b| b.data().iter().all(|&v| v == 0.0)));
        let c = Network::build(tanh_config(&[2, 3, 2], 12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn build_weight_variance_matches_scheme() {
        let net = Network::build(tanh_config(&[500, 500], 1)).unwrap();
        let w = &net.weights()[0];
        let n = w.data().len() as f64;
        let mean: f64 = w.data().iter().sum::<f64>() / n;
        let var: f64 = w.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0 / 500.0).abs() < 0.1 / 500.0, "variance {var}");
    }

    #[test]
    fn forward_zero_input_tanh_everything_zero() {
        let net = Network::build(tanh_config(&[3, 4, 4, 2], 5)).unwrap();
        let tape = net.forward(&Matrix::zeros(3, 2)).unwrap();
        for x in &tape.pre {
            assert!(x.data().iter().all(|&v| v == 0.0));
        }
        for y in &tape.act {
            assert!(y.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forward_zero_input_sigmoid_first_hidden_is_half() {
        let mut cfg = tanh_config(&[3, 4, 2], 5);
        cfg.activation = Activation::Sigmoid;
        let net = Network::build(cfg).unwrap();
        let tape = net.forward(&Matrix::zeros(3, 2)).unwrap();
        assert!(tape.act[1].data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forward_hand_computed_2_2_1() {
        // Hidden: tanh(W0 x), W0 = [[1, -1], [0.5, 0.5]]; head: W1 = [[2, -1]],
        // bias 0.25. For x = (1, 2):
        //   x1 = (-1, 1.5), y1 = (tanh(-1), tanh(1.5))
        //   logit = 2 tanh(-1) - tanh(1.5) + 0.25
        let cfg = tanh_config(&[2, 2, 1], 0);
        let w0 = Matrix::from_vec(2, 2, vec![1.0, -1.0, 0.5, 0.5]).unwrap();
        let w1 = Matrix::from_vec(1, 2, vec![2.0, -1.0]).unwrap();
        let b0 = Matrix::zeros(2, 1);
        let b1 = Matrix::from_vec(1, 1, vec![0.25]).unwrap();
        let net = Network::from_parts(cfg, vec![w0, w1], vec![b0, b1]).unwrap();
        let tape = net
            .forward(&Matrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap())
            .unwrap();
        let want = 2.0 * (-1.0f64).tanh() - 1.5f64.tanh() + 0.25;
        assert!((tape.logits().get(0, 0) - want).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_input_width() {
        let net = Network::build(tanh_config(&[3, 2], 1)).unwrap();
        assert!(net.forward(&Matrix::zeros(4, 1)).is_err());
    }

    #[test]
    fn softmax_uniform_logits_lose_ln_k() {
        let logits = Matrix::zeros(5, 3);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 2, 4]).unwrap();
        assert!((loss - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softmax_confident_correct_logit_loses_nothing() {
        let mut logits = Matrix::zeros(3, 1);
        logits.set(1, 0, 500.0);
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.abs() < 1e-12, "loss {loss}");
        // And enormous logits stay finite thanks to max-subtraction.
        logits.set(1, 0, 1e308);
        let (loss, _) = softmax_cross_entropy(&logits, &[1]).unwrap();
        assert!(loss.is_finite());
    }

    #[test]
    fn softmax_rejects_out_of_range_label() {
        let logits = Matrix::zeros(3, 1);
        assert!(matches!(
            softmax_cross_entropy(&logits, &[3]),
            Err(Error::LabelOutOfRange {
                label: 3,
                classes: 3
            })
        ));
    }

    #[test]
    fn softmax_gradient_matches_finite_difference() {
        let mut rng = Rng::new(8);
        let logits = rng.sample_normal(0.0, 2.0, 4, 3).unwrap();
        let labels = [1usize, 0, 3];
        let (_, dlogits) = softmax_cross_entropy(&logits, &labels).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            for j in 0..3 {
                let mut plus = logits.clone();
                plus.set(i, j, logits.get(i, j) + h);
                let mut minus = logits.clone();
                minus.set(i, j, logits.get(i, j) - h);
                let fd = (softmax_cross_entropy(&plus, &labels).unwrap().0
                    - softmax_cross_entropy(&minus, &labels).unwrap().0)
                    / (2.0 * h);
                let an = dlogits.get(i, j);
                let denom = an.abs().max(fd.abs()).max(1e-12);
                assert!(((an - fd) / denom).abs() < 1e-6, "entry ({i},{j})");
            }
        }
    }

    #[test]
    fn backward_linear_net_is_w_transpose_chain() {
        // With the identity activation, dy^(l-1) = W^T dy^(l) exactly.
        let cfg = NetworkConfig {
            widths: vec![3, 4, 2],
            activation: Activation::leaky_relu(1.0).unwrap(),
            init: InitScheme::fan_in(),
            seed: 3,
        };
        let net = Network::build(cfg).unwrap();
        let mut rng = Rng::new(4);
        let batch = rng.sample_normal(0.0, 1.0, 3, 5).unwrap();
        let tape = net.forward(&batch).unwrap();
        let dlogits = rng.sample_normal(0.0, 1.0, 2, 5).unwrap();
        let grads = net.backward(&tape, &dlogits).unwrap();

        let d1 = net.weights()[1].transpose().matmul(&dlogits).unwrap();
        let d0 = net.weights()[0].transpose().matmul(&d1).unwrap();
        assert_eq!(grads.d_act[1], d1);
        assert_eq!(grads.d_act[0], d0);
    }

    #[test]
    fn backward_zero_dlogits_zero_gradients() {
        let net = Network::build(tanh_config(&[3, 4, 2], 9)).unwrap();
        let batch = Rng::new(1).sample_normal(0.0, 1.0, 3, 4).unwrap();
        let tape = net.forward(&batch).unwrap();
        let grads = net.backward(&tape, &Matrix::zeros(2, 4)).unwrap();
        for g in grads.d_weights.iter().chain(&grads.d_biases) {
            assert!(g.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn backward_rejects_foreign_tape() {
        let net = Network::build(tanh_config(&[3, 4, 2], 9)).unwrap();
        let other = Network::build(tanh_config(&[3, 5, 2], 9)).unwrap();
        let batch = Rng::new(1).sample_normal(0.0, 1.0, 3, 4).unwrap();
        let tape = other.forward(&batch).unwrap();
        assert!(matches!(
            net.backward(&tape, &Matrix::zeros(2, 4)),
            Err(Error::TapeMismatch(_))
        ));
    }

    #[test]
    fn gradient_check_four_layer_tanh() {
        let net = Network::build(tanh_config(&[5, 8, 7, 6, 3], 21)).unwrap();
        let batch = Rng::new(22).sample_normal(0.0, 1.0, 5, 6).unwrap();
        let labels = [0usize, 1, 2, 0, 1, 2];
        let err = net.gradient_check(&batch, &labels, 1e-5).unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn gradient_check_relu_away_from_kinks() {
        let mut cfg = tanh_config(&[4, 6, 6, 3], 33);
        cfg.activation = Activation::Relu;
        // Search deterministically for a seed whose pre-activations all sit
        // at least 1e-3 from the kink, so finite differences never straddle it.
        let (net, batch) = (0u64..200)
            .find_map(|s| {
                let mut c = cfg.clone();
                c.seed = 33 + s;
                let net = Network::build(c).ok()?;
                let batch = Rng::new(1000 + s).sample_normal(0.0, 1.0, 4, 5).ok()?;
                let tape = net.forward(&batch).ok()?;
                let clear = tape
                    .pre
                    .iter()
                    .all(|x| x.data().iter().all(|&v| v.abs() > 1e-3));
                clear.then_some((net, batch))
            })
            .expect("a kink-free configuration exists in the first 200 seeds");
        let labels = [0usize, 1, 2, 0, 1];
        let err = net.gradient_check(&batch, &labels, 1e-5).unwrap();
        assert!(err < 1e-6, "max relative error {err}");
    }

    #[test]
    fn gradient_check_degrades_when_h_too_small() {
        let net = Network::build(tanh_config(&[3, 5, 5, 2], 7)).unwrap();
        let batch = Rng::new(70).sample_normal(0.0, 1.0, 3, 4).unwrap();
        let labels = [0usize, 1, 0, 1];
        let good = net.gradient_check(&batch, &labels, 1e-5).unwrap();
        // At h = 1e-12 the difference quotient is pure cancellation noise.
        let bad = net.gradient_check(&batch, &labels, 1e-12).unwrap();
        assert!(good < 1e-6);
        assert!(bad > 100.0 * good, "good {good}, bad {bad}");
    }

    #[test]
    fn gradient_check_biased_detects_corruption() {
        let net = Network::build(tanh_config(&[3, 5, 2], 7)).unwrap();
        let batch = Rng::new(70).sample_normal(0.0, 1.0, 3, 4).unwrap();
        let labels = [0usize, 1, 0, 1];
        let err = net
            .gradient_check_biased(&batch, &labels, 1e-5, 0.01)
            .unwrap();
        assert!(err > 1e-3, "corrupted gradients must fail: {err}");
    }

    #[test]
    fn penalized_tanh_unit_leak_equals_tanh_net() {
        let mut cfg_pt = tanh_config(&[4, 6, 5, 3], 13);
        cfg_pt.activation = Activation::penalized_tanh(1.0).unwrap();
        let net_pt = Network::build(cfg_pt).unwrap();
        let net_tanh = Network::build(tanh_config(&[4, 6, 5, 3], 13)).unwrap();

        let batch = Rng::new(14).sample_normal(0.0, 1.0, 4, 6).unwrap();
        let tape_pt = net_pt.forward(&batch).unwrap();
        let tape_tanh = net_tanh.forward(&batch).unwrap();
        assert_eq!(tape_pt.act, tape_tanh.act);

        let labels = [0usize, 1, 2, 0, 1, 2];
        let (_, d) = softmax_cross_entropy(tape_pt.logits(), &labels).unwrap();
        let g_pt = net_pt.backward(&tape_pt, &d).unwrap();
        let g_tanh = net_tanh.backward(&tape_tanh, &d).unwrap();
        assert_eq!(g_pt.d_weights, g_tanh.d_weights);
        assert_eq!(g_pt.d_biases, g_tanh.d_biases);
    }

    #[test]
    fn relu_equals_leaky_relu_on_positive_preactivations() {
        // Small positive weights, bias 1, nonnegative inputs: every
        // pre-activation is strictly positive, so the negative branches
        // never fire.
        let widths = [2usize, 3, 2];
        let mk = |activation| {
            let cfg = NetworkConfig {
                widths: widths.to_vec(),
                activation,
                init: InitScheme::fan_in(),
                seed: 0,
            };
            let w0 = Matrix::from_vec(3, 2, vec![0.1, 0.2, 0.05, 0.1, 0.2, 0.15]).unwrap();
            let w1 = Matrix::from_vec(2, 3, vec![0.1, 0.1, 0.2, 0.3, 0.05, 0.1]).unwrap();
            let b0 = Matrix::from_vec(3, 1, vec![1.0; 3]).unwrap();
            let b1 = Matrix::from_vec(2, 1, vec![1.0; 2]).unwrap();
            Network::from_parts(cfg, vec![w0, w1], vec![b0, b1]).unwrap()
        };
        let relu = mk(Activation::Relu);
        let leaky = mk(Activation::leaky_relu(0.25).unwrap());
        let batch = Matrix::from_vec(2, 2, vec![0.5, 0.1, 0.3, 0.9]).unwrap();
        let t_relu = relu.forward(&batch).unwrap();
        let t_leaky = leaky.forward(&batch).unwrap();
        assert!(t_relu.pre.iter().all(|x| x.data().iter().all(|&v| v > 0.0)));
        assert_eq!(t_relu.act, t_leaky.act);

        let labels = [0usize, 1];
        let (_, d) = softmax_cross_entropy(t_relu.logits(), &labels).unwrap();
        let g_relu = relu.backward(&t_relu, &d).unwrap();
        let g_leaky = leaky.backward(&t_leaky, &d).unwrap();
        assert_eq!(g_relu.d_weights, g_leaky.d_weights);
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let cfg = NetworkConfig {
            widths: vec![4, 7, 3],
            activation: Activation::penalized_tanh(0.25).unwrap(),
            init: InitScheme::new(InitKind::XavierGlorot, 1.5).unwrap(),
            seed: 77,
        };
        let mut net = Network::build(cfg).unwrap();
        // Dirty the parameters so the file carries more than the build state.
        net.weights[0].set(0, 0, 1.234567891234);
        net.biases[1].set(2, 0, -0.5);
        net.save(&path).unwrap();
        let loaded = Network::load(&path).unwrap();
        assert_eq!(net, loaded);
    }

    #[test]
    fn load_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        std::fs::write(&path, b"NOTMODEL plus junk").unwrap();
        assert!(matches!(Network::load(&path), Err(Error::ModelFormat(_))));

        let net = Network::build(tanh_config(&[2, 2], 1)).unwrap();
        net.save(&path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 3]).unwrap();
        assert!(matches!(Network::load(&path), Err(Error::ModelFormat(_))));
    }
}
