//! Minimal sigmoid feed-forward network trained by minibatch SGD on
//! cross-entropy. Weight layout is plain vectors so fitted models serialize
//! directly for audit.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{
    sigmoid, transformed_design, validate_inputs, ClassifierKind, FitConfig, FitError,
    ModelParams, ProbClassifier, TrainDiagnostics,
};

/// One dense layer: `weights[r]` holds the fan-in row of output unit `r`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(row, b)| b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>())
            .collect()
    }
}

/// All layers of the network; the last layer has a single output unit whose
/// sigmoid is the class-1 probability.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<DenseLayer>,
}

impl MlpParams {
    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)], zero biases.
    pub fn init(input_dim: usize, hidden: &[usize], rng: &mut impl Rng) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(1);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_out)
                    .map(|_| (0..fan_in).map(|_| rng.random_range(-bound..bound)).collect())
                    .collect();
                DenseLayer {
                    weights,
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        MlpParams { layers }
    }

    /// Class-1 probability for one (transformed) input row.
    pub fn forward(&self, input: &[f64]) -> f64 {
        sigmoid(self.final_preactivation(input))
    }

    /// Pre-sigmoid output, used for numerically stable loss.
    fn final_preactivation(&self, input: &[f64]) -> f64 {
        let mut a = input.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&a);
            if i + 1 == self.layers.len() {
                return z[0];
            }
            a = z.into_iter().map(sigmoid).collect();
        }
        unreachable!("network has at least one layer")
    }

    fn zeros_like(&self) -> Vec<DenseLayer> {
        self.layers
            .iter()
            .map(|l| DenseLayer {
                weights: l.weights.iter().map(|r| vec![0.0; r.len()]).collect(),
                biases: vec![0.0; l.biases.len()],
            })
            .collect()
    }

    fn step(&mut self, grads: &[DenseLayer], lr: f64) {
        for (layer, g) in self.layers.iter_mut().zip(grads) {
            for (wrow, grow) in layer.weights.iter_mut().zip(&g.weights) {
                for (w, d) in wrow.iter_mut().zip(grow) {
                    *w -= lr * d;
                }
            }
            for (b, d) in layer.biases.iter_mut().zip(&g.biases) {
                *b -= lr * d;
            }
        }
    }
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

/// Mean cross-entropy over the given rows and its gradient with respect to
/// every weight and bias, by backpropagation.
pub fn mlp_loss_and_grads(
    params: &MlpParams,
    x: &Array2<f64>,
    labels: &[u8],
    rows: &[usize],
) -> (f64, Vec<DenseLayer>) {
    let b = rows.len() as f64;
    let mut grads = params.zeros_like();
    let mut loss = 0.0;
    let n_layers = params.layers.len();

    for &i in rows {
        let input: Vec<f64> = x.row(i).to_vec();
        let y = f64::from(labels[i]);

        // forward, keeping every activation
        let mut activations: Vec<Vec<f64>> = vec![input];
        let mut final_z = 0.0;
        for (li, layer) in params.layers.iter().enumerate() {
            let z = layer.forward(activations.last().expect("input present"));
            if li + 1 == n_layers {
                final_z = z[0];
            } else {
                activations.push(z.into_iter().map(sigmoid).collect());
            }
        }
        loss += (softplus(final_z) - y * final_z) / b;

        // backward
        let p = sigmoid(final_z);
        let mut delta = vec![(p - y) / b];
        for li in (0..n_layers).rev() {
            let a_in = &activations[li];
            for (r, d) in delta.iter().enumerate() {
                for (c, g) in grads[li].weights[r].iter_mut().enumerate() {
                    *g += d * a_in[c];
                }
                grads[li].biases[r] += d;
            }
            if li > 0 {
                let layer = &params.layers[li];
                delta = (0..a_in.len())
                    .map(|c| {
                        let back: f64 = delta
                            .iter()
                            .enumerate()
                            .map(|(r, d)| d * layer.weights[r][c])
                            .sum();
                        back * a_in[c] * (1.0 - a_in[c])
                    })
                    .collect();
            }
        }
    }
    (loss, grads)
}

/// Fit the network by minibatch SGD. A non-finite loss restores the weights
/// from the start of the epoch, halves the learning rate, and retries, at
/// most three times.
pub fn fit_mlp(
    features: &Array2<f64>,
    labels: &[u8],
    config: &FitConfig,
) -> Result<ProbClassifier, FitError> {
    config.validate()?;
    if config.hidden_layers.is_empty() {
        return Err(FitError::BadConfig("hidden_layers must be non-empty".into()));
    }
    validate_inputs(features, labels)?;
    let (x, transform) = transformed_design(features, config);
    let n = x.nrows();

    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut params = MlpParams::init(x.ncols(), &config.hidden_layers, &mut rng);
    let mut diag = TrainDiagnostics::default();
    let mut lr = config.learning_rate;
    let mut order: Vec<usize> = (0..n).collect();
    let all: Vec<usize> = (0..n).collect();

    let mut epoch = 0;
    while epoch < config.epochs {
        let snapshot = params.clone();
        order.shuffle(&mut rng);
        let mut failed = false;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let (loss, grads) = mlp_loss_and_grads(&params, &x, labels, chunk);
            if !loss.is_finite() {
                failed = true;
                break;
            }
            params.step(&grads, lr);
        }
        if failed {
            diag.lr_restarts += 1;
            if diag.lr_restarts > 3 {
                return Err(FitError::Divergence(format!(
                    "non-finite loss persisted after {} learning-rate halvings",
                    diag.lr_restarts - 1
                )));
            }
            params = snapshot;
            lr /= 2.0;
            continue;
        }
        let (epoch_loss, _) = mlp_loss_and_grads(&params, &x, labels, &all);
        diag.objective_trace.push(epoch_loss);
        epoch += 1;
    }

    diag.iterations = config.epochs;
    diag.converged = diag
        .objective_trace
        .last()
        .is_some_and(|l| l.is_finite());
    diag.final_objective = diag.objective_trace.last().copied().unwrap_or(f64::NAN);

    Ok(ProbClassifier {
        kind: ClassifierKind::Nn,
        transform,
        params: ModelParams::Network { params },
        diagnostics: diag,
    })
}
