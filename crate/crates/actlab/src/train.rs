//! SGD training harness, synthetic cluster datasets, IDX file loading, and
//! seeded multi-activation comparisons.
//!
//! Determinism is the organizing principle: datasets, shuffles, and weight
//! draws all derive from explicit seeds, so two runs with the same
//! configuration produce identical records — and two runs differing *only*
//! in the activation share bit-identical initial weights, which is what
//! makes activation comparisons meaningful.

use std::io::Read;
use std::path::Path;

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::network::{softmax_cross_entropy, Network, NetworkConfig};
use crate::tensor::{Matrix, Rng};

/// IDX magic for a 3-dimensional unsigned-byte tensor (image files).
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// IDX magic for a 1-dimensional unsigned-byte tensor (label files).
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` every `every` epochs.
    Step {
        factor: f64,
        every: usize,
    },
}

/// Hyperparameters for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    /// Seed for epoch shuffles; epoch `e` shuffles with `seed + e`.
    pub seed: u64,
    /// Evaluate and record every this many epochs (the last epoch is
    /// always recorded).
    pub eval_every: usize,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidParameter(
                "epochs, batch_size and eval_every must be at least 1".to_string(),
            ));
        }
        // Zero is allowed: a no-update run is the cheapest way to check
        // that evaluation itself is deterministic.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "learning_rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if let LrSchedule::Step { factor, every } = self.lr_schedule {
            if !(factor > 0.0) || !factor.is_finite() || every == 0 {
                return Err(Error::InvalidParameter(
                    "step schedule needs a positive factor and period".to_string(),
                ));
            }
        }
        Ok(())
    }

    fn rate_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Step { factor, every } => {
                self.learning_rate * factor.powi((epoch / every) as i32)
            }
        }
    }
}

/// Which side of the split a dataset belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// A labeled dataset: `inputs` is `dims x N` (samples as columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.labels.len() != self.inputs.cols() {
            return Err(Error::InvalidParameter(format!(
                "{} labels for {} input columns",
                self.labels.len(),
                self.inputs.cols()
            )));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.classes) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                classes: self.classes,
            });
        }
        Ok(())
    }
}

/// One evaluated epoch.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrainRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
}

/// Terminal state of a run. Divergence (a non-finite loss) is an expected
/// outcome of the experiments, not an error: the run stops, keeps the
/// records gathered so far, and reports where it died.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainStatus {
    Completed,
    Diverged { epoch: usize },
}

/// Result of [`train`]: per-epoch records plus the terminal status.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub records: Vec<TrainRecord>,
    pub status: TrainStatus,
}

impl TrainRun {
    pub fn final_record(&self) -> Option<&TrainRecord> {
        self.records.last()
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, TrainStatus::Diverged { .. })
    }
}

/// First recorded epoch whose training loss is at or below `target`.
pub fn epochs_to_reach_loss(records: &[TrainRecord], target: f64) -> Option<usize> {
    records
        .iter()
        .find(|r| r.train_loss <= target)
        .map(|r| r.epoch)
}

/// Synthetic Gaussian-cluster classification data.
///
/// Class `c` is an isotropic unit-variance Gaussian centered at `margin`
/// times a unit direction: the `c`-th coordinate axis while `c < dims`,
/// and a random unit vector beyond that. The train split holds
/// `per_class` samples per class; the test split `max(per_class / 4, 1)`.
pub fn synth_classification(
    rng: &mut Rng,
    classes: usize,
    dims: usize,
    per_class: usize,
    margin: f64,
) -> Result<(Dataset, Dataset)> {
    if classes < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    if dims == 0 || per_class == 0 {
        return Err(Error::InvalidParameter(
            "dims and per_class must be positive".to_string(),
        ));
    }
    if !margin.is_finite() || margin < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "margin must be finite and nonnegative, got {margin}"
        )));
    }

    // Class centers.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut dir = vec![0.0; dims];
        if c < dims {
            dir[c] = 1.0;
        } else {
            let mut norm = 0.0;
            for v in dir.iter_mut() {
                *v = rng.next_normal();
                norm += *v * *v;
            }
            let norm = norm.sqrt().max(1e-12);
            for v in dir.iter_mut() {
                *v /= norm;
            }
        }
        centers.push(dir.iter().map(|v| v * margin).collect());
    }

    let per_class_test = (per_class / 4).max(1);
    let mut make_split = |count: usize, split: Split| -> Result<Dataset> {
        let n = count * classes;
        let mut inputs = Matrix::zeros(dims, n);
        let mut labels = Vec::with_capacity(n);
        let mut col = 0;
        for (c, center) in centers.iter().enumerate() {
            for _ in 0..count {
                for (d, mu) in center.iter().enumerate() {
                    inputs.set(d, col, mu + rng.next_normal());
                }
                labels.push(c);
                col += 1;
            }
        }
        // Shuffle columns so mini-batches are class-mixed from epoch one.
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        let inputs = inputs.select_columns(&order);
        let labels = order.iter().map(|&i| labels[i]).collect();
        Ok(Dataset {
            inputs,
            labels,
            classes,
            split,
        })
    };

    let train = make_split(per_class, Split::Train)?;
    let test = make_split(per_class_test, Split::Test)?;
    Ok((train, test))
}

/// Load an IDX image/label file pair into a dataset with pixels scaled to
/// `[0, 1]` and images flattened into columns.
///
/// The two files must agree on the sample count; magic numbers, header
/// completeness, and payload lengths are each checked with a distinct
/// error so a malformed download is easy to diagnose.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images_bytes = read_file(images_path)?;
    let labels_bytes = read_file(labels_path)?;

    // --- image header ---
    let magic = read_be_u32(&images_bytes, 0, images_path, "magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxBadMagic {
            path: images_path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        });
    }
    let n_images = read_be_u32(&images_bytes, 4, images_path, "image count")? as usize;
    let rows = read_be_u32(&images_bytes, 8, images_path, "row count")? as usize;
    let cols = read_be_u32(&images_bytes, 12, images_path, "column count")? as usize;
    let pixels = rows * cols;
    let expected = 16 + n_images * pixels;
    if images_bytes.len() < expected {
        return Err(Error::IdxTruncated {
            path: images_path.to_path_buf(),
            context: format!(
                "payload needs {expected} bytes for {n_images} images of {rows}x{cols}, file has {}",
                images_bytes.len()
            ),
        });
    }

    // --- label header ---
    let magic = read_be_u32(&labels_bytes, 0, labels_path, "magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxBadMagic {
            path: labels_path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: magic,
        });
    }
    let n_labels = read_be_u32(&labels_bytes, 4, labels_path, "label count")? as usize;
    if labels_bytes.len() < 8 + n_labels {
        return Err(Error::IdxTruncated {
            path: labels_path.to_path_buf(),
            context: format!(
                "payload needs {} bytes for {n_labels} labels, file has {}",
                8 + n_labels,
                labels_bytes.len()
            ),
        });
    }

    if n_images != n_labels {
        return Err(Error::IdxCountMismatch {
            images: n_images,
            labels: n_labels,
        });
    }

    let mut inputs = Matrix::zeros(pixels, n_images);
    for img in 0..n_images {
        for p in 0..pixels {
            let byte = images_bytes[16 + img * pixels + p];
            inputs.set(p, img, byte as f64 / 255.0);
        }
    }
    let labels: Vec<usize> = labels_bytes[8..8 + n_labels]
        .iter()
        .map(|&b| b as usize)
        .collect();
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(Dataset {
        inputs,
        labels,
        classes,
        split: Split::Train,
    })
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Ok(bytes)
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path, what: &str) -> Result<u32> {
    if bytes.len() < offset + 4 {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            context: format!("header ended before the {what} field"),
        });
    }
    Ok(u32::from_be_bytes(
        bytes[offset..offset + 4].try_into().unwrap(),
    ))
}

/// Full-dataset loss and accuracy under the current parameters.
fn evaluate(net: &Network, data: &Dataset) -> Result<(f64, f64)> {
    let tape = net.forward(&data.inputs)?;
    let (loss, _) = softmax_cross_entropy(tape.logits(), &data.labels)?;
    let predictions = tape.logits().argmax_per_column();
    let correct = predictions
        .iter()
        .zip(&data.labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok((loss, correct as f64 / data.len() as f64))
}

/// Train `net` in place with mini-batch SGD.
///
/// Each epoch shuffles the training set with a stream seeded
/// `cfg.seed + epoch`, steps through it in `batch_size` chunks, then — on
/// recording epochs — measures loss and accuracy with a full pass over
/// each split *after* the epoch's updates (so a zero learning rate yields
/// bit-identical records every epoch).
///
/// A non-finite mini-batch or evaluation loss ends the run immediately
/// with [`TrainStatus::Diverged`]; records gathered so far are kept.
pub fn train(
    net: &mut Network,
    cfg: &TrainConfig,
    train_data: &Dataset,
    test_data: &Dataset,
) -> Result<TrainRun> {
    cfg.validate()?;
    train_data.validate()?;
    test_data.validate()?;
    if train_data.inputs.rows() != net.config.widths[0] {
        return Err(Error::ShapeMismatch {
            op: "train",
            lhs_rows: net.config.widths[0],
            lhs_cols: 1,
            rhs_rows: train_data.inputs.rows(),
            rhs_cols: train_data.inputs.cols(),
        });
    }
    let n = train_data.len();
    let mut records = Vec::new();
    for epoch in 1..=cfg.epochs {
        let lr = cfg.rate_at(epoch - 1);
        let mut order: Vec<usize> = (0..n).collect();
        Rng::new(cfg.seed.wrapping_add(epoch as u64)).shuffle(&mut order);

        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_data.inputs.select_columns(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_data.labels[i]).collect();
            let tape = net.forward(&batch)?;
            let (loss, dlogits) = softmax_cross_entropy(tape.logits(), &labels)?;
            if !loss.is_finite() {
                return Ok(TrainRun {
                    records,
                    status: TrainStatus::Diverged { epoch },
                });
            }
            let grads = net.backward(&tape, &dlogits)?;
            net.apply_gradients(&grads, lr)?;
        }

        if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            let (train_loss, train_acc) = evaluate(net, train_data)?;
            let (_, test_acc) = evaluate(net, test_data)?;
            if !train_loss.is_finite() {
                return Ok(TrainRun {
                    records,
                    status: TrainStatus::Diverged { epoch },
                });
            }
            records.push(TrainRecord {
                epoch,
                train_loss,
                train_acc,
                test_acc,
            });
        }
    }
    Ok(TrainRun {
        records,
        status: TrainStatus::Completed,
    })
}

/// One arm of an activation comparison.
#[derive(Debug, Clone)]
pub struct CompareArm {
    pub activation: Activation,
    pub run: TrainRun,
}

/// Train one fresh network per activation under *identical* seeds, widths,
/// initialization, and schedule. Because weight draws never consume from
/// an activation-dependent stream, every arm starts from bit-identical
/// parameters — the activation is the only varying factor.
pub fn compare_activations(
    widths: &[usize],
    init: InitScheme,
    net_seed: u64,
    cfg: &TrainConfig,
    activations: &[Activation],
    train_data: &Dataset,
    test_data: &Dataset,
) -> Result<Vec<CompareArm>> {
    if activations.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "comparison needs at least 2 activations, got {}",
            activations.len()
        )));
    }
    let mut arms = Vec::with_capacity(activations.len());
    for &activation in activations {
        let mut net = Network::build(NetworkConfig {
            widths: widths.to_vec(),
            activation,
            init,
            seed: net_seed,
        })?;
        let run = train(&mut net, cfg, train_data, test_data)?;
        arms.push(CompareArm { activation, run });
    }
    Ok(arms)
}
