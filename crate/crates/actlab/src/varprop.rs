//! Variance propagation through deep networks: analytic recursions for the
//! linear regime, and Monte Carlo estimators that verify them.
//!
//! Setting: a fully-connected chain `x^(l) = W^(l-1) y^(l-1)`,
//! `y^(l) = f(x^(l))`, with weights drawn i.i.d. zero-mean at variance
//! `sigma_l^2` and the activation replaced by its linear regime
//! `f(x) = alpha*x + beta`. Writing `c_l` for the per-unit activation
//! variance and `d_l` for the per-unit variance of the cost gradient
//! `d cost / d y^(l)`, the recursions are:
//!
//! ```text
//! forward:   c_l     = alpha^2 * n_{l-1} * sigma_{l-1}^2 * (c_{l-1} + beta^2)
//! backward:  d_{l-1} = alpha^2 * n_l     * sigma_{l-1}^2 * d_l
//! ```
//!
//! Both follow from the second-moment identity for a random projection
//! (see [`wy_second_moment_analytic`]): for `W` with i.i.d. zero-mean
//! entries of variance `sigma^2` and an independent `y` with independent
//! coordinates (variance `C`, mean vector `mu`),
//!
//! ```text
//! E[(Wy)(Wy)^T] = (C * n * sigma^2 + sigma^2 * |mu|^2) * I_m
//! ```
//!
//! The per-layer factor `alpha^2 * n * sigma^2` tells the whole
//! vanishing/exploding-gradient story: with fan-in initialization
//! (`n * sigma^2 = 1`) a unit-slope activation keeps both recursions at a
//! fixed point, while the plain sigmoid's `alpha = 1/4` shrinks gradients
//! by `1/16` per layer.
//!
//! The Monte Carlo side deliberately exists in two flavors:
//! [`empirical_linear_profile`] uses exactly the affine activation so the
//! recursions should match to sampling error (a verification), while
//! [`empirical_profile`] pushes samples through the true nonlinearity, so
//! its deviation from the analytic prediction is itself the diagnostic.

use crate::activations::Activation;
use crate::error::{Error, Result};
use crate::init::InitScheme;
use crate::tensor::{Matrix, Rng};

/// A linear-regime network: widths, the affine activation coefficients,
/// per-layer weight variances, and the two boundary variances (input
/// activation variance `c_0` and top gradient variance `d_L`).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearNetSpec {
    /// Layer widths `n_0 .. n_L` (so `widths.len() - 1` weight layers).
    pub widths: Vec<usize>,
    /// Activation slope at the origin.
    pub alpha: f64,
    /// Activation value at the origin.
    pub beta: f64,
    /// Weight variances `sigma_0^2 .. sigma_{L-1}^2`, one per weight layer.
    pub sigma_sq: Vec<f64>,
    /// Variance of the synthetic top gradient, `d_L`.
    pub grad_top_var: f64,
    /// Variance of the network input, `c_0`.
    pub input_var: f64,
}

impl LinearNetSpec {
    /// Check the structural invariants: at least one weight layer, positive
    /// widths, matching `sigma_sq` length, strictly positive variances.
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "spec needs at least 2 layer widths, got {}",
                self.widths.len()
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidParameter(
                "all layer widths must be positive".to_string(),
            ));
        }
        if self.sigma_sq.len() != self.widths.len() - 1 {
            return Err(Error::InvalidParameter(format!(
                "expected {} weight variances for {} widths, got {}",
                self.widths.len() - 1,
                self.widths.len(),
                self.sigma_sq.len()
            )));
        }
        if self.sigma_sq.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter(
                "all weight variances must be positive and finite".to_string(),
            ));
        }
        for (name, v) in [
            ("grad_top_var", self.grad_top_var),
            ("input_var", self.input_var),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !self.alpha.is_finite() || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(
                "alpha and beta must be finite".to_string(),
            ));
        }
        Ok(())
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }
}

/// Where a profile's numbers came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileSource {
    Analytic,
    Empirical,
}

/// Per-layer scalar variances, indexed by layer: `act_var[l] = c_l` for
/// `l = 0..=L` and `grad_var[l] = d_l` (so the top gradient variance sits
/// at index `L` and the input gradient at index 0).
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    pub act_var: Vec<f64>,
    pub grad_var: Vec<f64>,
    pub source: ProfileSource,
}

impl VarianceProfile {
    /// Number of layers including the input, `L + 1`.
    pub fn len(&self) -> usize {
        self.act_var.len()
    }

    pub fn is_empty(&self) -> bool {
        self.act_var.is_empty()
    }
}

/// Analytic forward recursion. Returns `c_0 .. c_L`.
pub fn forward_variance(spec: &LinearNetSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut c = Vec::with_capacity(spec.widths.len());
    c.push(spec.input_var);
    let a2 = spec.alpha * spec.alpha;
    let b2 = spec.beta * spec.beta;
    for l in 1..spec.widths.len() {
        let n_prev = spec.widths[l - 1] as f64;
        let prev = c[l - 1];
        c.push(a2 * n_prev * spec.sigma_sq[l - 1] * (prev + b2));
    }
    Ok(c)
}

/// Analytic backward recursion. Returns `d_0 .. d_L` (layer-ascending, so
/// the seed value `grad_top_var` is the last element).
pub fn backward_variance(spec: &LinearNetSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let depth = spec.depth();
    let a2 = spec.alpha * spec.alpha;
    let mut d = vec![0.0; depth + 1];
    d[depth] = spec.grad_top_var;
    for l in (1..=depth).rev() {
        let n_l = spec.widths[l] as f64;
        d[l - 1] = a2 * n_l * spec.sigma_sq[l - 1] * d[l];
    }
    Ok(d)
}

/// Closed-form second moment of a random projection: for `W` (`m x n`) with
/// i.i.d. zero-mean entries of variance `sigma_sq`, independent of `y`
/// whose coordinates are independent with variance `c` and mean `mean_y`,
///
/// ```text
/// E[(Wy)(Wy)^T] = (c * n * sigma_sq + sigma_sq * |mean_y|^2) * I_m
/// ```
///
/// The off-diagonals vanish because distinct rows of `W` are independent
/// and zero-mean — this is what keeps layer covariances scalar multiples
/// of the identity throughout the recursions.
pub fn wy_second_moment_analytic(
    c: f64,
    n: usize,
    m: usize,
    sigma_sq: f64,
    mean_y: &[f64],
) -> Result<Matrix> {
    if c < 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "coordinate variance must be >= 0, got {c}"
        )));
    }
    if !(sigma_sq > 0.0) || !sigma_sq.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "weight variance must be positive, got {sigma_sq}"
        )));
    }
    if mean_y.len() != n {
        return Err(Error::InvalidParameter(format!(
            "mean vector length {} does not match n = {}",
            mean_y.len(),
            n
        )));
    }
    if n == 0 || m == 0 {
        return Err(Error::InvalidParameter(
            "dimensions must be positive".to_string(),
        ));
    }
    let norm_sq: f64 = mean_y.iter().map(|v| v * v).sum();
    let diag = c * n as f64 * sigma_sq + sigma_sq * norm_sq;
    Ok(Matrix::from_fn(
        m,
        m,
        |i, j| if i == j { diag } else { 0.0 },
    ))
}

/// Monte Carlo counterpart of [`wy_second_moment_analytic`]: sample mean of
/// `(Wy)(Wy)^T` over independent draws of `W` and Gaussian `y`.
pub fn wy_second_moment_empirical(
    rng: &mut Rng,
    c: f64,
    n: usize,
    m: usize,
    sigma_sq: f64,
    mean_y: &[f64],
    trials: usize,
) -> Result<Matrix> {
    // Validate via the analytic path so both share one domain.
    wy_second_moment_analytic(c, n, m, sigma_sq, mean_y)?;
    if trials == 0 {
        return Err(Error::InvalidParameter(
            "trials must be at least 1".to_string(),
        ));
    }
    let w_std = sigma_sq.sqrt();
    let y_std = c.sqrt();
    let mut acc = Matrix::zeros(m, m);
    let mut x = vec![0.0; m];
    let mut y = vec![0.0; n];
    for _ in 0..trials {
        for (yk, mu) in y.iter_mut().zip(mean_y) {
            *yk = mu + y_std * rng.next_normal();
        }
        let w = rng.sample_normal(0.0, w_std, m, n)?;
        for (i, xi) in x.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, yk) in y.iter().enumerate() {
                s += w.get(i, k) * yk;
            }
            *xi = s;
        }
        for i in 0..m {
            for j in 0..m {
                let v = acc.get(i, j) + x[i] * x[j];
                acc.set(i, j, v);
            }
        }
    }
    Ok(acc.map(|v| v / trials as f64))
}

/// Streaming per-unit moment accumulator used by the empirical profiles:
/// pooled sums and sums of squares per unit, across every trial and batch
/// column.
struct LayerMoments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
}

impl LayerMoments {
    fn new(units: usize) -> LayerMoments {
        LayerMoments {
            sum: vec![0.0; units],
            sum_sq: vec![0.0; units],
            count: 0,
        }
    }

    fn record(&mut self, batch: &Matrix) {
        debug_assert_eq!(batch.rows(), self.sum.len());
        for i in 0..batch.rows() {
            let mut s = 0.0;
            let mut ss = 0.0;
            for j in 0..batch.cols() {
                let v = batch.get(i, j);
                s += v;
                ss += v * v;
            }
            self.sum[i] += s;
            self.sum_sq[i] += ss;
        }
        self.count += batch.cols();
    }

    /// Mean over units of the per-unit unbiased variance. Pooling across
    /// trials first matters: per-trial variances would miss the
    /// between-trial spread contributed by the random weights (the law of
    /// total variance is what makes the estimator match the recursion).
    fn mean_unit_variance(&self) -> f64 {
        let n = self.count as f64;
        let per_unit: Vec<f64> = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(&s, &ss)| (ss - s * s / n) / (n - 1.0))
            .collect();
        per_unit.iter().sum::<f64>() / per_unit.len() as f64
    }
}

/// Monte Carlo profile for an exactly affine activation `f(x) = alpha*x +
/// beta`, matched to the analytic recursions' assumptions:
///
/// * fresh i.i.d. zero-mean weights at `sigma_sq[l]` per trial;
/// * inputs drawn with mean `beta` and variance `input_var`, mirroring a
///   hidden activation (whose mean is `beta` under the recursion), so the
///   first layer obeys the same algebra as every other;
/// * backward pass seeded with an i.i.d. `N(0, grad_top_var)` gradient,
///   independent of the forward pass.
///
/// Each of the `trials` networks processes a batch of `batch` samples;
/// statistics are pooled across all `trials * batch` columns.
pub fn empirical_linear_profile(
    rng: &mut Rng,
    spec: &LinearNetSpec,
    batch: usize,
    trials: usize,
) -> Result<VarianceProfile> {
    spec.validate()?;
    if batch * trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 samples per layer, got {batch} x {trials}"
        )));
    }
    let depth = spec.depth();
    let mut act_moments: Vec<LayerMoments> =
        spec.widths.iter().map(|&w| LayerMoments::new(w)).collect();
    let mut grad_moments: Vec<LayerMoments> =
        spec.widths.iter().map(|&w| LayerMoments::new(w)).collect();

    for _ in 0..trials {
        let weights: Vec<Matrix> = (0..depth)
            .map(|l| {
                rng.sample_normal(
                    0.0,
                    spec.sigma_sq[l].sqrt(),
                    spec.widths[l + 1],
                    spec.widths[l],
                )
            })
            .collect::<Result<_>>()?;

        // Forward: y_0 ~ N(beta, input_var), then y_l = alpha * W y + beta.
        let mut y = rng.sample_normal(spec.beta, spec.input_var.sqrt(), spec.widths[0], batch)?;
        act_moments[0].record(&y);
        for (l, w) in weights.iter().enumerate() {
            let x = w.matmul(&y)?;
            y = x.map(|v| spec.alpha * v + spec.beta);
            act_moments[l + 1].record(&y);
        }

        // Backward: d_L ~ N(0, grad_top_var), then d_{l-1} = alpha * W^T d_l.
        let mut d = rng.sample_normal(0.0, spec.grad_top_var.sqrt(), spec.widths[depth], batch)?;
        grad_moments[depth].record(&d);
        for (l, w) in weights.iter().enumerate().rev() {
            d = w.transpose().matmul(&d)?.map(|v| spec.alpha * v);
            grad_moments[l].record(&d);
        }
    }

    Ok(VarianceProfile {
        act_var: act_moments
            .iter()
            .map(LayerMoments::mean_unit_variance)
            .collect(),
        grad_var: grad_moments
            .iter()
            .map(LayerMoments::mean_unit_variance)
            .collect(),
        source: ProfileSource::Empirical,
    })
}

/// Monte Carlo profile through a **real** activation function.
///
/// `trials` networks are drawn through `scheme` (biases zero, per-trial
/// fresh weights), each forwarding a Gaussian batch (`mean 0`, variance
/// `input_var`) with the activation applied after every weight layer, and
/// backpropagating a synthetic i.i.d. standard-normal top gradient through
/// the activation derivatives. Per-layer variances are pooled as in
/// [`empirical_linear_profile`].
///
/// Unlike the recursions, nothing here is linear: comparing this profile
/// against [`forward_variance`]/[`backward_variance`] at the activation's
/// `(alpha, beta)` shows how far the real function departs from its
/// linear regime — that gap is the point of the measurement.
pub fn empirical_profile(
    rng: &mut Rng,
    widths: &[usize],
    act: Activation,
    scheme: InitScheme,
    batch: usize,
    trials: usize,
    input_var: f64,
) -> Result<VarianceProfile> {
    if widths.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "need at least 2 layer widths, got {}",
            widths.len()
        )));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidParameter(
            "all layer widths must be positive".to_string(),
        ));
    }
    if batch * trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 samples per layer, got {batch} x {trials}"
        )));
    }
    if !(input_var > 0.0) || !input_var.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "input_var must be positive, got {input_var}"
        )));
    }
    let depth = widths.len() - 1;
    let mut act_moments: Vec<LayerMoments> = widths.iter().map(|&w| LayerMoments::new(w)).collect();
    let mut grad_moments: Vec<LayerMoments> =
        widths.iter().map(|&w| LayerMoments::new(w)).collect();

    for _ in 0..trials {
        let weights: Vec<Matrix> = (0..depth)
            .map(|l| scheme.init_weights(rng, widths[l + 1], widths[l]))
            .collect::<Result<_>>()?;

        let mut y = rng.sample_normal(0.0, input_var.sqrt(), widths[0], batch)?;
        act_moments[0].record(&y);
        // Keep the pre-activations: the backward pass needs f'(x^(l)).
        let mut pre = Vec::with_capacity(depth);
        for (l, w) in weights.iter().enumerate() {
            let x = w.matmul(&y)?;
            y = x.map(|v| act.apply(v));
            act_moments[l + 1].record(&y);
            pre.push(x);
        }

        let mut d = rng.sample_normal(0.0, 1.0, widths[depth], batch)?;
        grad_moments[depth].record(&d);
        for (l, w) in weights.iter().enumerate().rev() {
            let dx = pre[l].map(|v| act.derivative(v)).hadamard(&d)?;
            d = w.transpose().matmul(&dx)?;
            grad_moments[l].record(&d);
        }
    }

    Ok(VarianceProfile {
        act_var: act_moments
            .iter()
            .map(LayerMoments::mean_unit_variance)
            .collect(),
        grad_var: grad_moments
            .iter()
            .map(LayerMoments::mean_unit_variance)
            .collect(),
        source: ProfileSource::Empirical,
    })
}

/// Scalar-covariance diagnostic for the linear Monte Carlo setting: for
/// each layer, the largest off-diagonal covariance magnitude among the
/// first `min(width, probe)` units, relative to the mean diagonal
/// (variance). Small values support treating layer covariances as scalar
/// multiples of the identity.
pub fn linear_offdiag_ratios(
    rng: &mut Rng,
    spec: &LinearNetSpec,
    batch: usize,
    trials: usize,
    probe: usize,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if batch * trials < 100 {
        return Err(Error::InvalidParameter(format!(
            "need at least 100 samples per layer, got {batch} x {trials}"
        )));
    }
    if probe < 2 {
        return Err(Error::InvalidParameter(
            "probe must cover at least 2 units".to_string(),
        ));
    }
    let depth = spec.depth();
    // Pooled cross-moment accumulators over the probed units of each layer.
    struct Cross {
        k: usize,
        sum: Vec<f64>,
        cross: Vec<f64>, // k x k, row-major
        count: usize,
    }
    impl Cross {
        fn new(k: usize) -> Cross {
            Cross {
                k,
                sum: vec![0.0; k],
                cross: vec![0.0; k * k],
                count: 0,
            }
        }
        fn record(&mut self, m: &Matrix) {
            for j in 0..m.cols() {
                for a in 0..self.k {
                    let va = m.get(a, j);
                    self.sum[a] += va;
                    for b in 0..self.k {
                        self.cross[a * self.k + b] += va * m.get(b, j);
                    }
                }
            }
            self.count += m.cols();
        }
        fn max_offdiag_ratio(&self) -> f64 {
            let n = self.count as f64;
            let cov = |a: usize, b: usize| {
                (self.cross[a * self.k + b] - self.sum[a] * self.sum[b] / n) / (n - 1.0)
            };
            let mean_diag: f64 = (0..self.k).map(|a| cov(a, a)).sum::<f64>() / self.k as f64;
            let mut max_off: f64 = 0.0;
            for a in 0..self.k {
                for b in 0..self.k {
                    if a != b {
                        max_off = max_off.max(cov(a, b).abs());
                    }
                }
            }
            max_off / mean_diag
        }
    }

    let mut layers: Vec<Cross> = spec
        .widths
        .iter()
        .map(|&w| Cross::new(w.min(probe)))
        .collect();

    for _ in 0..trials {
        let weights: Vec<Matrix> = (0..depth)
            .map(|l| {
                rng.sample_normal(
                    0.0,
                    spec.sigma_sq[l].sqrt(),
                    spec.widths[l + 1],
                    spec.widths[l],
                )
            })
            .collect::<Result<_>>()?;
        let mut y = rng.sample_normal(spec.beta, spec.input_var.sqrt(), spec.widths[0], batch)?;
        layers[0].record(&y);
        for (l, w) in weights.iter().enumerate() {
            y = w.matmul(&y)?.map(|v| spec.alpha * v + spec.beta);
            layers[l + 1].record(&y);
        }
    }

    Ok(layers.iter().map(Cross::max_offdiag_ratio).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    // The proptest prelude re-exports a trait named `Rng`; pin the name to
    // the concrete generator.
    use crate::tensor::Rng;

    fn fixed_point_spec() -> LinearNetSpec {
        // alpha = 1, beta = 0, n * sigma^2 = 1 exactly: both recursions
        // sit at a fixed point.
        LinearNetSpec {
            widths: vec![64, 64, 64, 64],
            alpha: 1.0,
            beta: 0.0,
            sigma_sq: vec![1.0 / 64.0; 3],
            grad_top_var: 1.0,
            input_var: 1.0,
        }
    }

    #[test]
    fn forward_fixed_point() {
        let c = forward_variance(&fixed_point_spec()).unwrap();
        assert_eq!(c, vec![1.0; 4]);
    }

    #[test]
    fn backward_fixed_point() {
        let d = backward_variance(&fixed_point_spec()).unwrap();
        assert_eq!(d, vec![1.0; 4]);
    }

    #[test]
    fn forward_sigmoid_regime_hand_numbers() {
        // alpha = 1/4, beta = 1/2, n = 100, sigma^2 = 0.01:
        // c_1 = (1/16)(1 + 0.25) = 0.078125, c_2 = (1/16)(c_1 + 0.25).
        let spec = LinearNetSpec {
            widths: vec![100, 100, 100],
            alpha: 0.25,
            beta: 0.5,
            sigma_sq: vec![0.01; 2],
            grad_top_var: 1.0,
            input_var: 1.0,
        };
        let c = forward_variance(&spec).unwrap();
        assert!((c[1] - 0.078125).abs() < 1e-12);
        assert!((c[2] - (0.078125 + 0.25) / 16.0).abs() < 1e-12);
        assert!((c[2] - 0.020508).abs() < 1e-6);
    }

    #[test]
    fn forward_geometric_growth() {
        // alpha = 1, beta = 0, sigma^2 = 2/n: c_l = 2^l * c_0.
        let spec = LinearNetSpec {
            widths: vec![32, 32, 32, 32, 32],
            alpha: 1.0,
            beta: 0.0,
            sigma_sq: vec![2.0 / 32.0; 4],
            grad_top_var: 1.0,
            input_var: 0.5,
        };
        let c = forward_variance(&spec).unwrap();
        for (l, &cl) in c.iter().enumerate() {
            assert!((cl - 0.5 * 2f64.powi(l as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_sixteenth_per_layer_over_twenty_layers() {
        // alpha = 1/4 with n*sigma^2 = 1 shrinks gradients 16x per layer:
        // d_0 = (1/16)^20.
        let spec = LinearNetSpec {
            widths: vec![64; 21],
            alpha: 0.25,
            beta: 0.5,
            sigma_sq: vec![1.0 / 64.0; 20],
            grad_top_var: 1.0,
            input_var: 1.0,
        };
        let d = backward_variance(&spec).unwrap();
        let want = (1.0f64 / 16.0).powi(20);
        assert!((d[0] / want - 1.0).abs() < 1e-12, "d_0 = {}", d[0]);
        assert!(d[0] < 1e-24);
    }

    #[test]
    fn backward_single_layer_hand_number() {
        // alpha = 2, n_1 = 3, sigma^2 = 0.5, d_1 = 1 gives d_0 = 4*3*0.5 = 6.
        let spec = LinearNetSpec {
            widths: vec![5, 3],
            alpha: 2.0,
            beta: 0.0,
            sigma_sq: vec![0.5],
            grad_top_var: 1.0,
            input_var: 1.0,
        };
        let d = backward_variance(&spec).unwrap();
        assert_eq!(d, vec![6.0, 1.0]);
    }

    #[test]
    fn beta_drift_adds_beta_squared_per_layer() {
        // alpha = 1, n*sigma^2 = 1: c_l = c_0 + l * beta^2 exactly.
        let beta = 0.5;
        let spec = LinearNetSpec {
            widths: vec![16; 7],
            alpha: 1.0,
            beta,
            sigma_sq: vec![1.0 / 16.0; 6],
            grad_top_var: 1.0,
            input_var: 1.0,
        };
        let c = forward_variance(&spec).unwrap();
        for (l, &cl) in c.iter().enumerate() {
            assert_eq!(cl, 1.0 + l as f64 * beta * beta);
        }
    }

    #[test]
    fn spec_validation_rejects_inconsistent_lengths() {
        let mut spec = fixed_point_spec();
        spec.sigma_sq.pop();
        assert!(forward_variance(&spec).is_err());
        let mut spec = fixed_point_spec();
        spec.input_var = 0.0;
        assert!(forward_variance(&spec).is_err());
        let mut spec = fixed_point_spec();
        spec.widths = vec![64];
        assert!(backward_variance(&spec).is_err());
    }

    #[test]
    fn second_moment_analytic_trivial_cases() {
        // c = 1, n = 3, sigma^2 = 0.5, zero mean: 1.5 * I.
        let m = wy_second_moment_analytic(1.0, 3, 4, 0.5, &[0.0; 3]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), if i == j { 1.5 } else { 0.0 });
            }
        }
        // Adding a mean (0.5, 0.5, 0.5): 1.5 + 0.5 * 0.75 = 1.875 on the diagonal.
        let m = wy_second_moment_analytic(1.0, 3, 2, 0.5, &[0.5; 3]).unwrap();
        assert_eq!(m.get(0, 0), 1.875);
        assert_eq!(m.get(1, 1), 1.875);
        // c = 0 with zero mean: the zero matrix.
        let m = wy_second_moment_analytic(0.0, 3, 2, 0.5, &[0.0; 3]).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn second_moment_analytic_rejects_bad_dims() {
        assert!(wy_second_moment_analytic(1.0, 3, 2, 0.5, &[0.0; 4]).is_err());
        assert!(wy_second_moment_analytic(-1.0, 3, 2, 0.5, &[0.0; 3]).is_err());
    }

    #[test]
    fn second_moment_empirical_matches_analytic() {
        let mean_y = [0.5, 0.5, 0.5];
        let analytic = wy_second_moment_analytic(1.0, 3, 4, 0.5, &mean_y).unwrap();
        let mut rng = Rng::new(7041);
        let empirical =
            wy_second_moment_empirical(&mut rng, 1.0, 3, 4, 0.5, &mean_y, 100_000).unwrap();
        let diag = analytic.get(0, 0);
        for i in 0..4 {
            for j in 0..4 {
                let err = (empirical.get(i, j) - analytic.get(i, j)).abs();
                assert!(
                    err < 0.03 * diag,
                    "entry ({i},{j}): analytic {}, empirical {}",
                    analytic.get(i, j),
                    empirical.get(i, j)
                );
            }
        }
    }

    #[test]
    fn second_moment_empirical_single_trial_shape() {
        let m = wy_second_moment_empirical(&mut Rng::new(1), 1.0, 3, 2, 0.5, &[0.0; 3], 1).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 2));
        // One trial of (Wy)(Wy)^T is symmetric by construction.
        assert_eq!(m.get(0, 1), m.get(1, 0));
    }

    #[test]
    fn second_moment_empirical_is_seed_deterministic() {
        let a =
            wy_second_moment_empirical(&mut Rng::new(5), 1.0, 3, 3, 0.5, &[0.1; 3], 100).unwrap();
        let b =
            wy_second_moment_empirical(&mut Rng::new(5), 1.0, 3, 3, 0.5, &[0.1; 3], 100).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn linear_profile_matches_recursions() {
        let spec = LinearNetSpec {
            widths: vec![60, 80, 50, 70],
            alpha: 0.6,
            beta: 0.3,
            sigma_sq: vec![1.2 / 60.0, 0.9 / 80.0, 1.1 / 50.0],
            grad_top_var: 1.0,
            input_var: 1.0,
        };
        let c = forward_variance(&spec).unwrap();
        let d = backward_variance(&spec).unwrap();
        let profile = empirical_linear_profile(&mut Rng::new(2024), &spec, 100, 100).unwrap();
        for l in 0..spec.widths.len() {
            let c_err = (profile.act_var[l] / c[l] - 1.0).abs();
            let d_err = (profile.grad_var[l] / d[l] - 1.0).abs();
            assert!(c_err < 0.05, "layer {l}: act rel err {c_err}");
            assert!(d_err < 0.05, "layer {l}: grad rel err {d_err}");
        }
    }

    #[test]
    fn linear_profile_rejects_tiny_sample_budget() {
        assert!(empirical_linear_profile(&mut Rng::new(1), &fixed_point_spec(), 9, 9).is_err());
    }

    #[test]
    fn identity_activation_profile_matches_recursions() {
        // LeakyRelu(a = 1) is the identity, so the nonlinear estimator must
        // agree with the alpha = 1, beta = 0 recursion.
        let widths = [40usize, 60, 50, 40];
        let scheme = InitScheme::fan_in();
        let spec = LinearNetSpec {
            widths: widths.to_vec(),
            alpha: 1.0,
            beta: 0.0,
            sigma_sq: (0..3)
                .map(|l| scheme.variance(widths[l + 1], widths[l]))
                .collect(),
            grad_top_var: 1.0,
            input_var: 1.0,
        };
        let c = forward_variance(&spec).unwrap();
        let d = backward_variance(&spec).unwrap();
        let profile = empirical_profile(
            &mut Rng::new(99),
            &widths,
            Activation::leaky_relu(1.0).unwrap(),
            scheme,
            100,
            100,
            1.0,
        )
        .unwrap();
        for l in 0..widths.len() {
            assert!(
                (profile.act_var[l] / c[l] - 1.0).abs() < 0.05,
                "act layer {l}"
            );
            assert!(
                (profile.grad_var[l] / d[l] - 1.0).abs() < 0.05,
                "grad layer {l}"
            );
        }
    }

    #[test]
    fn tanh_and_scaled_sigmoid_profiles_stay_commensurate() {
        // Both have (alpha, beta) = (1, 0), so neither can collapse the way
        // the plain sigmoid does: the two profiles must stay within a factor
        // of two of each other at every layer. Their cubic terms differ,
        // though — tanh bends away from the identity four times faster — so
        // tanh must attenuate strictly more by the bottom of the stack.
        let widths = vec![48; 11];
        let mk = |act| {
            empirical_profile(
                &mut Rng::new(505),
                &widths,
                act,
                InitScheme::fan_in(),
                50,
                60,
                0.04,
            )
            .unwrap()
        };
        let tanh = mk(Activation::Tanh);
        let scaled = mk(Activation::ScaledSigmoid);
        for l in 0..widths.len() {
            let act_ratio = tanh.act_var[l] / scaled.act_var[l];
            let grad_ratio = tanh.grad_var[l] / scaled.grad_var[l];
            assert!(
                (0.5..=2.0).contains(&act_ratio),
                "act layer {l}: ratio {act_ratio}"
            );
            assert!(
                (0.5..=2.0).contains(&grad_ratio),
                "grad layer {l}: ratio {grad_ratio}"
            );
        }
        // Bottom-of-stack gradients: tanh attenuates more than the scaled
        // sigmoid, but nowhere near the plain sigmoid's orders of magnitude.
        let bottom_ratio = tanh.grad_var[0] / scaled.grad_var[0];
        assert!(bottom_ratio < 0.95, "ratio {bottom_ratio}");
    }

    #[test]
    fn deep_sigmoid_gradient_collapses() {
        let widths = vec![48; 21];
        let profile = empirical_profile(
            &mut Rng::new(310),
            &widths,
            Activation::Sigmoid,
            InitScheme::fan_in(),
            40,
            30,
            0.04,
        )
        .unwrap();
        let top = profile.grad_var[20];
        assert!(
            profile.grad_var[1] < 1e-12 * top,
            "layer-1 gradient variance {} vs top {top}",
            profile.grad_var[1]
        );
    }

    #[test]
    fn offdiag_ratios_stay_small_for_linear_nets() {
        let spec = LinearNetSpec {
            widths: vec![50, 60, 40],
            alpha: 1.0,
            beta: 0.2,
            sigma_sq: vec![1.0 / 50.0, 1.0 / 60.0],
            grad_top_var: 1.0,
            input_var: 1.0,
        };
        let ratios = linear_offdiag_ratios(&mut Rng::new(808), &spec, 100, 100, 10).unwrap();
        for (l, r) in ratios.iter().enumerate() {
            assert!(*r < 0.05, "layer {l}: off-diagonal ratio {r}");
        }
    }

    proptest! {
        // With alpha < 1 and n*sigma^2 = 1 the backward variance strictly
        // decreases toward the input.
        #[test]
        fn monotone_vanishing_when_alpha_below_one(
            alpha in 0.1f64..0.95,
            depth in 2usize..8,
            width in 4usize..64,
        ) {
            let spec = LinearNetSpec {
                widths: vec![width; depth + 1],
                alpha,
                beta: 0.0,
                sigma_sq: vec![1.0 / width as f64; depth],
                grad_top_var: 1.0,
                input_var: 1.0,
            };
            let d = backward_variance(&spec).unwrap();
            for l in 0..depth {
                prop_assert!(d[l] < d[l + 1]);
            }
        }

        // Profile entries are nonnegative and the lengths line up.
        #[test]
        fn recursion_outputs_are_nonnegative(
            seed in 0u64..500,
            depth in 1usize..6,
        ) {
            let mut r = Rng::new(seed);
            let widths: Vec<usize> = (0..=depth).map(|_| 2 + r.next_below(60) as usize).collect();
            let sigma_sq: Vec<f64> = (0..depth).map(|_| 0.01 + r.next_f64()).collect();
            let spec = LinearNetSpec {
                widths,
                alpha: 0.1 + r.next_f64(),
                beta: r.next_f64(),
                sigma_sq,
                grad_top_var: 0.1 + r.next_f64(),
                input_var: 0.1 + r.next_f64(),
            };
            let c = forward_variance(&spec).unwrap();
            let d = backward_variance(&spec).unwrap();
            prop_assert_eq!(c.len(), spec.widths.len());
            prop_assert_eq!(d.len(), spec.widths.len());
            prop_assert!(c.iter().all(|&v| v >= 0.0));
            prop_assert!(d.iter().all(|&v| v >= 0.0));
        }
    }
}
