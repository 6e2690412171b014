//! Probabilistic binary classifiers used as density-ratio engines.
//!
//! Four estimators are provided: linear logistic (LL), quadratic logistic
//! (QL, a logistic fit on the quadratic feature expansion), a small sigmoid
//! feed-forward network (NN), and an L1-penalized logistic (SparseLL) for
//! high-dimensional problems. All expose a clamped probability through
//! [`ProbClassifier::predict_proba`], which is what the ratio layer turns
//! into density-ratio estimates via the odds.
//!
//! A fitted classifier is self-contained: the feature transform (optional
//! quadratic expansion, then per-feature standardization constants estimated
//! on the fitting sample) is stored with the coefficients, so prediction
//! needs nothing but the raw input row.

mod logistic;
mod mlp;

pub use logistic::{fit_logistic, fit_sparse_logistic, loglik_and_grad};
pub use mlp::{fit_mlp, mlp_loss_and_grads, MlpParams};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Probabilities are clamped to [PROB_CLAMP, 1 - PROB_CLAMP] so the odds
/// stay finite downstream.
pub const PROB_CLAMP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("non-finite value in fitting data")]
    NonFinite,
    #[error("label vector length {labels} does not match {rows} rows")]
    LabelLength { labels: usize, rows: usize },
    #[error("input has {got} features, classifier was fitted on {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid fit configuration: {0}")]
    BadConfig(String),
    #[error("training diverged: {0}")]
    Divergence(String),
}

/// Which estimator to fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierKind {
    /// Linear logistic regression fitted by IRLS.
    Ll,
    /// Logistic regression on the quadratic feature expansion.
    Ql,
    /// Feed-forward network, sigmoid activations throughout.
    Nn,
    /// L1-penalized logistic regression fitted by proximal gradient.
    SparseLl,
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ClassifierKind::Ll => "ll",
            ClassifierKind::Ql => "ql",
            ClassifierKind::Nn => "nn",
            ClassifierKind::SparseLl => "sparse-ll",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ll" => Ok(ClassifierKind::Ll),
            "ql" => Ok(ClassifierKind::Ql),
            "nn" => Ok(ClassifierKind::Nn),
            "sparse-ll" | "sparsell" => Ok(ClassifierKind::SparseLl),
            other => Err(format!(
                "unknown estimator '{other}', expected one of ll, ql, nn, sparse-ll"
            )),
        }
    }
}

/// Training hyperparameters. The defaults suit the simulation models; the
/// network settings follow the one-hidden-layer/ten-node setup and are
/// overridable per call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iterations: usize,
    /// Objective-change stopping rule for IRLS and proximal gradient.
    pub tolerance: f64,
    /// L1 penalty weight, SparseLL only.
    pub l1_lambda: f64,
    /// Hidden layer widths, NN only.
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Standardize features (per-feature mean/sd from the fitting sample).
    pub standardize: bool,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-8,
            l1_lambda: 0.0,
            hidden_layers: vec![10],
            learning_rate: 0.1,
            epochs: 200,
            batch_size: 32,
            standardize: true,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub(crate) fn validate(&self) -> Result<(), FitError> {
        if self.tolerance <= 0.0 {
            return Err(FitError::BadConfig("tolerance must be > 0".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(FitError::BadConfig("learning_rate must be > 0".into()));
        }
        if self.l1_lambda < 0.0 {
            return Err(FitError::BadConfig("l1_lambda must be >= 0".into()));
        }
        if self.hidden_layers.contains(&0) {
            return Err(FitError::BadConfig("hidden layer widths must be >= 1".into()));
        }
        Ok(())
    }

    /// Same settings with a different seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Input mapping applied before the model proper: optional quadratic
/// expansion, then optional standardization of the (expanded) columns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureTransform {
    pub input_dim: usize,
    pub expansion: bool,
    pub means: Option<Vec<f64>>,
    pub sds: Option<Vec<f64>>,
}

impl FeatureTransform {
    fn identity(input_dim: usize) -> Self {
        Self {
            input_dim,
            expansion: false,
            means: None,
            sds: None,
        }
    }

    /// Transformed dimensionality.
    pub fn output_dim(&self) -> usize {
        if self.expansion {
            let p = self.input_dim;
            p + p * (p + 1) / 2
        } else {
            self.input_dim
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut row = if self.expansion {
            expand_quadratic_row(x)
        } else {
            x.to_vec()
        };
        if let (Some(means), Some(sds)) = (&self.means, &self.sds) {
            for ((v, m), s) in row.iter_mut().zip(means).zip(sds) {
                *v = (*v - m) / s;
            }
        }
        row
    }
}

/// Fitted model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum ModelParams {
    /// Intercept first, then one coefficient per transformed feature.
    Linear { coefficients: Vec<f64> },
    /// Dense layers, sigmoid activations.
    Network { params: MlpParams },
    /// Externally supplied probabilities, keyed by row index. Adapter for
    /// experimenting with predictions from classifiers this crate does not
    /// implement.
    Precomputed { probabilities: Vec<f64> },
}

/// What the optimizer did, kept for reproducibility audits.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
    /// Perfect separation detected; coefficients are the last stable iterate.
    pub separation: bool,
    /// Ridge jitter was applied to a singular weighted normal system.
    pub ridge_jitter: bool,
    /// Learning-rate halvings after a non-finite loss (NN only).
    pub lr_restarts: usize,
    /// Objective value after each iteration/epoch, for audit.
    pub objective_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

/// A fitted probabilistic binary classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbClassifier {
    pub kind: ClassifierKind,
    pub transform: FeatureTransform,
    pub params: ModelParams,
    pub diagnostics: TrainDiagnostics,
}

impl ProbClassifier {
    /// P(class 1 | x), clamped to [1e-6, 1 - 1e-6]. `x` is a raw,
    /// pre-transform feature row.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64, FitError> {
        if x.len() != self.transform.input_dim {
            return Err(FitError::DimensionMismatch {
                expected: self.transform.input_dim,
                got: x.len(),
            });
        }
        let z = self.transform.apply(x);
        let raw = match &self.params {
            ModelParams::Linear { coefficients } => {
                let eta = coefficients[0]
                    + coefficients[1..]
                        .iter()
                        .zip(&z)
                        .map(|(c, v)| c * v)
                        .sum::<f64>();
                sigmoid(eta)
            }
            ModelParams::Network { params } => params.forward(&z),
            ModelParams::Precomputed { .. } => {
                return Err(FitError::BadConfig(
                    "precomputed classifier predicts by row index, use predict_row".into(),
                ))
            }
        };
        Ok(clamp_prob(raw))
    }

    /// Probability for row `i` of a precomputed-probability adapter.
    pub fn predict_row(&self, i: usize) -> Result<f64, FitError> {
        match &self.params {
            ModelParams::Precomputed { probabilities } => probabilities
                .get(i)
                .map(|&p| clamp_prob(p))
                .ok_or_else(|| FitError::BadConfig(format!("row {i} out of range"))),
            _ => Err(FitError::BadConfig(
                "predict_row is only for precomputed classifiers".into(),
            )),
        }
    }

    /// Wrap externally computed probabilities.
    pub fn from_probabilities(probabilities: Vec<f64>) -> Self {
        ProbClassifier {
            kind: ClassifierKind::Ll,
            transform: FeatureTransform::identity(0),
            params: ModelParams::Precomputed { probabilities },
            diagnostics: TrainDiagnostics::default(),
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Quadratic expansion of one row: linear terms, then squares, then cross
/// terms (i, j) with i < j in lexicographic order.
pub fn expand_quadratic_row(x: &[f64]) -> Vec<f64> {
    let p = x.len();
    let mut out = Vec::with_capacity(p + p * (p + 1) / 2);
    out.extend_from_slice(x);
    for &v in x {
        out.push(v * v);
    }
    for i in 0..p {
        for j in (i + 1)..p {
            out.push(x[i] * x[j]);
        }
    }
    out
}

/// Quadratic expansion of an n x p matrix to n x (p + p(p+1)/2).
pub fn expand_quadratic(features: &Array2<f64>) -> Array2<f64> {
    let n = features.nrows();
    let p = features.ncols();
    let q = p + p * (p + 1) / 2;
    let mut out = Array2::zeros((n, q));
    for (i, row) in features.rows().into_iter().enumerate() {
        let expanded = expand_quadratic_row(&row.to_vec());
        for (j, v) in expanded.into_iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    out
}

/// Fit a classifier of the requested kind. QL expands features first and
/// records the expansion in the stored transform.
pub fn fit(
    kind: ClassifierKind,
    features: &Array2<f64>,
    labels: &[u8],
    config: &FitConfig,
) -> Result<ProbClassifier, FitError> {
    match kind {
        ClassifierKind::Ll => fit_logistic(features, labels, config),
        ClassifierKind::Ql => {
            let expanded = expand_quadratic(features);
            let mut clf = fit_logistic(&expanded, labels, config)?;
            clf.kind = ClassifierKind::Ql;
            clf.transform.expansion = true;
            clf.transform.input_dim = features.ncols();
            Ok(clf)
        }
        ClassifierKind::Nn => fit_mlp(features, labels, config),
        ClassifierKind::SparseLl => fit_sparse_logistic(features, labels, config.l1_lambda, config),
    }
}

pub(crate) fn validate_inputs(
    features: &Array2<f64>,
    labels: &[u8],
) -> Result<(), FitError> {
    if labels.len() != features.nrows() {
        return Err(FitError::LabelLength {
            labels: labels.len(),
            rows: features.nrows(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let ones = labels.iter().filter(|&&l| l == 1).count();
    if ones == 0 || ones == labels.len() {
        return Err(FitError::SingleClass);
    }
    Ok(())
}

/// Standardize columns in place; returns (means, sds). Constant columns get
/// sd 1 so they pass through unscaled.
pub(crate) fn standardize_columns(x: &mut Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / sd);
        means.push(mean);
        sds.push(sd);
    }
    (means, sds)
}

pub(crate) fn transformed_design(
    features: &Array2<f64>,
    config: &FitConfig,
) -> (Array2<f64>, FeatureTransform) {
    let mut x = features.clone();
    let mut transform = FeatureTransform::identity(features.ncols());
    if config.standardize {
        let (means, sds) = standardize_columns(&mut x);
        transform.means = Some(means);
        transform.sds = Some(sds);
    }
    (x, transform)
}

/// Labels as f64 responses.
pub(crate) fn labels_f64(labels: &[u8]) -> Array1<f64> {
    Array1::from_iter(labels.iter().map(|&l| f64::from(l)))
}
