//! The simulation lab: generators for four synthetic regression models under
//! null and alternative, the extreme-ratio filtering rule, evaluation
//! metrics, and a replication harness that reproduces the reference tables
//! at desk scale.
//!
//! Sizing follows the standard recipe: K = ceil(n2 / ln n2) ranking batches,
//! fitting subsamples of size n2 - K in both populations, and therefore
//! n1 = n2 + (m - 1) K training points overall.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, StudentT};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::classifier::{ClassifierKind, FitConfig, FitError, ProbClassifier};
use crate::conformal::{
    build_minibatches, t_statistic, weighted_pvalue, TestError,
};
use crate::dataset::{plan_split, DatasetError, LabeledSample, Population, SplitPlan};
use crate::linalg::{cholesky, cholesky_solve};
use crate::ratio::{
    estimate_conditional_ratio, estimate_marginal_ratio, oracle_ratio, MarginalFn, RatioModel,
    CLIP_HI, CLIP_LO,
};
use crate::rng::{stream_rng, Stream};
use crate::stats::normal_quantile;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("filter acceptance rate below 1% ({accepted}/{attempts} accepted); review model parameters")]
    FilterRejection { accepted: usize, attempts: usize },
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error("{context}: {source}")]
    Fit {
        context: String,
        #[source]
        source: FitError,
    },
    #[error(transparent)]
    Test(#[from] TestError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("weight row sums to {0}, expected 1")]
    BadWeights(f64),
    #[error("resampling weights are all zero after exponentiation")]
    DegenerateWeights,
    #[error("invalid argument: {0}")]
    BadArg(String),
}

/// The four synthetic regression models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Gaussian covariates, linear mean, N(0,1) noise; mean-shift covariates.
    A,
    /// Nonlinear mean (squares and a cube), heavy-tailed t(5) noise.
    B,
    /// Correlated covariates, heteroskedastic noise tied to the first
    /// coordinate.
    C,
    /// Covariate scale shift N(0,I) vs N(0,2I); variance-only response shift
    /// under the alternative.
    D,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Model::A => write!(f, "a"),
            Model::B => write!(f, "b"),
            Model::C => write!(f, "c"),
            Model::D => write!(f, "d"),
        }
    }
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Model::A),
            "b" => Ok(Model::B),
            "c" => Ok(Model::C),
            "d" => Ok(Model::D),
            other => Err(format!("unknown model '{other}', expected one of a, b, c, d")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    Null,
    Alt,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::Null => write!(f, "null"),
            Hypothesis::Alt => write!(f, "alt"),
        }
    }
}

impl std::str::FromStr for Hypothesis {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "null" | "h0" => Ok(Hypothesis::Null),
            "alt" | "alternative" | "h1" => Ok(Hypothesis::Alt),
            other => Err(format!("unknown hypothesis '{other}', expected null or alt")),
        }
    }
}

/// Exponents of the nonlinear mean in Model B, by coordinate.
const MODEL_B_POWERS: [i32; 5] = [1, 1, 2, 2, 3];
/// Mean-shift pattern of the testing covariates in Models A-C.
const MU_PATTERN: [f64; 5] = [1.0, 1.0, -1.0, -1.0, 0.0];

/// Full parameterization of one simulation setting. Regression coefficients
/// are +-1 with random signs drawn once from the setting's seed and recorded here
/// for audit.
#[derive(Debug, Clone, Serialize)]
pub struct ModelSpec {
    pub model: Model,
    pub hypothesis: Hypothesis,
    /// Covariate dimension.
    pub p: usize,
    /// Number of leading nonzero regression coefficients.
    pub s: usize,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    /// Intercepts (alpha_1, alpha_2).
    pub alphas: (f64, f64),
    /// Human-readable noise law, for reports.
    pub noise: String,
    pub seed: u64,
    #[serde(skip)]
    chol: Option<Array2<f64>>,
    #[serde(skip)]
    sigma_inv_mu: Vec<f64>,
    #[serde(skip)]
    mu_quad: f64,
}

impl ModelSpec {
    /// The standard five-dimensional setting.
    pub fn new(model: Model, hypothesis: Hypothesis, seed: u64) -> Self {
        Self::with_dim(model, hypothesis, 5, 5, seed)
    }

    /// General dimension p with s leading signal coefficients (the high
    /// dimensional variant pads mu and beta with zeros).
    pub fn with_dim(model: Model, hypothesis: Hypothesis, p: usize, s: usize, seed: u64) -> Self {
        assert!(p >= 1 && (1..=p).contains(&s), "need 1 <= s <= p");
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let beta: Vec<f64> = (0..p)
            .map(|j| {
                if j < s {
                    if rng.random::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                } else {
                    0.0
                }
            })
            .collect();
        let mu: Vec<f64> = match model {
            Model::A | Model::B | Model::C => (0..p)
                .map(|j| if j < 5 { MU_PATTERN[j] } else { 0.0 })
                .collect(),
            Model::D => vec![0.0; p],
        };
        let alphas = match (model, hypothesis) {
            (Model::A, Hypothesis::Alt) => (0.0, 0.5),
            (Model::B, Hypothesis::Alt) => (0.0, 1.0),
            _ => (0.0, 0.0),
        };
        let noise = match (model, hypothesis) {
            (Model::A, _) => "N(0,1)".to_string(),
            (Model::B, _) => "t(5)".to_string(),
            (Model::C, Hypothesis::Null) => "N(0, 4/(1+x1^2)) both".to_string(),
            (Model::C, Hypothesis::Alt) => {
                "N(0, 4/(1+x1^2)) train, N(0, 1/(1+x1^2)) test".to_string()
            }
            (Model::D, Hypothesis::Null) => "N(0,1) both".to_string(),
            (Model::D, Hypothesis::Alt) => "N(0,1) train, N(0,2) test".to_string(),
        };

        let (chol, sigma_inv_mu, mu_quad) = match model {
            Model::C => {
                let sigma = model_c_covariance(p);
                let l = cholesky(&sigma).expect("model C covariance is positive definite");
                let mu_vec = Array1::from_vec(mu.clone());
                let siv = cholesky_solve(&l, &mu_vec);
                let quad = mu_vec.dot(&siv);
                (Some(l), siv.to_vec(), quad)
            }
            _ => {
                let quad = mu.iter().map(|v| v * v).sum();
                (None, mu.clone(), quad)
            }
        };

        ModelSpec {
            model,
            hypothesis,
            p,
            s,
            beta,
            mu,
            alphas,
            noise,
            seed,
            chol,
            sigma_inv_mu,
            mu_quad,
        }
    }

    /// The regression function of the response mean (without intercept).
    pub fn regression(&self, x: &[f64]) -> f64 {
        match self.model {
            Model::A | Model::C | Model::D => {
                self.beta.iter().zip(x).map(|(b, v)| b * v).sum()
            }
            Model::B => self
                .beta
                .iter()
                .zip(x)
                .enumerate()
                .map(|(j, (b, v))| {
                    let e = if j < 5 { MODEL_B_POWERS[j] } else { 1 };
                    b * v.powi(e)
                })
                .sum(),
        }
    }

    /// Sigma^-1 mu of the covariate laws (equal to mu when Sigma = I).
    pub fn sigma_inv_mu(&self) -> Vec<f64> {
        self.sigma_inv_mu.clone()
    }

    /// mu' Sigma^-1 mu.
    pub fn mu_quad_form(&self) -> f64 {
        self.mu_quad
    }
}

/// Sigma_ii = 1, Sigma_ij = 1/max(i, j) with 1-based indices.
fn model_c_covariance(p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| {
        if i == j {
            1.0
        } else {
            1.0 / (i.max(j) + 1) as f64
        }
    })
}

pub(crate) fn draw_covariate(
    spec: &ModelSpec,
    population: Population,
    rng: &mut ChaCha20Rng,
) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let z: Vec<f64> = (0..spec.p).map(|_| normal.sample(rng)).collect();
    match spec.model {
        Model::A | Model::B => match population {
            Population::Train => z,
            Population::Test => z.iter().zip(&spec.mu).map(|(a, b)| a + b).collect(),
        },
        Model::C => {
            let l = spec.chol.as_ref().expect("model C stores its factor");
            let mut x = vec![0.0; spec.p];
            for i in 0..spec.p {
                let mut s = 0.0;
                for j in 0..=i {
                    s += l[(i, j)] * z[j];
                }
                x[i] = s
                    + match population {
                        Population::Train => 0.0,
                        Population::Test => spec.mu[i],
                    };
            }
            x
        }
        Model::D => match population {
            Population::Train => z,
            Population::Test => z.iter().map(|v| v * std::f64::consts::SQRT_2).collect(),
        },
    }
}

#[cfg(test)]
pub(crate) fn draw_train_covariate(spec: &ModelSpec, rng: &mut ChaCha20Rng) -> Vec<f64> {
    draw_covariate(spec, Population::Train, rng)
}

pub(crate) fn draw_response(
    spec: &ModelSpec,
    population: Population,
    x: &[f64],
    rng: &mut ChaCha20Rng,
) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let alpha = match population {
        Population::Train => spec.alphas.0,
        Population::Test => spec.alphas.1,
    };
    let noise = match (spec.model, spec.hypothesis, population) {
        (Model::A, _, _) => normal.sample(rng),
        (Model::B, _, _) => StudentT::new(5.0).expect("valid dof").sample(rng),
        (Model::C, hyp, pop) => {
            let scale_sq = match (hyp, pop) {
                (Hypothesis::Alt, Population::Test) => 1.0 / (1.0 + x[0] * x[0]),
                _ => 4.0 / (1.0 + x[0] * x[0]),
            };
            normal.sample(rng) * scale_sq.sqrt()
        }
        (Model::D, Hypothesis::Alt, Population::Test) => {
            normal.sample(rng) * std::f64::consts::SQRT_2
        }
        (Model::D, _, _) => normal.sample(rng),
    };
    alpha + spec.regression(x) + noise
}

fn in_clip_band(v: f64) -> bool {
    (CLIP_LO..=CLIP_HI).contains(&v)
}

fn draw_filtered(
    spec: &ModelSpec,
    oracle: &RatioModel,
    population: Population,
    n: usize,
    mut rng: ChaCha20Rng,
) -> Result<LabeledSample, SimError> {
    let mut feats = Array2::zeros((n, spec.p));
    let mut resp = Array1::zeros(n);
    let mut accepted = 0usize;
    let mut attempts = 0usize;
    while accepted < n {
        attempts += 1;
        let x = draw_covariate(spec, population, &mut rng);
        let y = draw_response(spec, population, &x, &mut rng);
        let g = oracle.g(&x);
        let joint = oracle.v(&x, y) / g;
        if in_clip_band(g) && in_clip_band(joint) {
            for (j, v) in x.iter().enumerate() {
                feats[(accepted, j)] = *v;
            }
            resp[accepted] = y;
            accepted += 1;
        }
        if attempts >= 1000 && (accepted as f64) < 0.01 * attempts as f64 {
            return Err(SimError::FilterRejection { accepted, attempts });
        }
    }
    Ok(LabeledSample::new(feats, resp, population)?)
}

/// Draw filtered samples of the requested sizes together with their exact
/// oracle ratios. Points whose true marginal or joint density ratio falls
/// outside [1/100, 100] are rejected and redrawn.
pub fn generate(
    spec: &ModelSpec,
    n1: usize,
    n2: usize,
    seed: u64,
) -> Result<(LabeledSample, LabeledSample, RatioModel), SimError> {
    let oracle = oracle_ratio(spec);
    let train = draw_filtered(
        spec,
        &oracle,
        Population::Train,
        n1,
        stream_rng(seed, Stream::GenerateTrain),
    )?;
    let test = draw_filtered(
        spec,
        &oracle,
        Population::Test,
        n2,
        stream_rng(seed, Stream::GenerateTest),
    )?;
    Ok((train, test, oracle))
}

/// Mean over batches of the L1 distance between estimated and oracle weight
/// rows. Every row must sum to one within 1e-10.
pub fn err_p(estimated: &[Vec<f64>], oracle: &[Vec<f64>]) -> Result<f64, SimError> {
    if estimated.len() != oracle.len() || estimated.is_empty() {
        return Err(SimError::Shape(format!(
            "{} estimated rows vs {} oracle rows",
            estimated.len(),
            oracle.len()
        )));
    }
    let mut total = 0.0;
    for (e, o) in estimated.iter().zip(oracle) {
        if e.len() != o.len() {
            return Err(SimError::Shape(format!(
                "row width {} vs {}",
                e.len(),
                o.len()
            )));
        }
        for row in [e, o] {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(SimError::BadWeights(s));
            }
        }
        total += e.iter().zip(o).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(total / estimated.len() as f64)
}

/// Mean squared difference between estimated and oracle conformity scores
/// over all (m+1) K slots.
pub fn err_v(estimated: &[Vec<f64>], oracle: &[Vec<f64>]) -> Result<f64, SimError> {
    if estimated.len() != oracle.len() || estimated.is_empty() {
        return Err(SimError::Shape(format!(
            "{} estimated rows vs {} oracle rows",
            estimated.len(),
            oracle.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (e, o) in estimated.iter().zip(oracle) {
        if e.len() != o.len() {
            return Err(SimError::Shape(format!(
                "row width {} vs {}",
                e.len(),
                o.len()
            )));
        }
        total += e.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        count += e.len();
    }
    Ok(total / count as f64)
}

/// Fraction of holdout points where the 0.5-thresholded prediction differs
/// from the label. The holdout must be disjoint from the fitting sample.
pub fn mce(
    classifier: &ProbClassifier,
    holdout_features: &Array2<f64>,
    holdout_labels: &[u8],
) -> Result<f64, SimError> {
    if holdout_features.nrows() != holdout_labels.len() || holdout_labels.is_empty() {
        return Err(SimError::Shape("empty or mismatched holdout".into()));
    }
    let mut wrong = 0usize;
    for (row, &label) in holdout_features.rows().into_iter().zip(holdout_labels) {
        let p = classifier
            .predict_proba(row.to_slice().expect("contiguous row"))
            .map_err(|source| SimError::Fit {
                context: "holdout prediction".into(),
                source,
            })?;
        wrong += ((p > 0.5) != (label == 1)) as usize;
    }
    Ok(wrong as f64 / holdout_labels.len() as f64)
}

/// Which marginal ratio feeds the conformal weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Exact oracle g.
    Oracle,
    /// Classifier-estimated g.
    Estimated,
    /// Deliberately miscalibrated weights: the estimated odds are inverted
    /// (the classifier's probabilities are flipped), while the conformity
    /// scores stay honestly fitted. Diagnoses the failure mode where weight
    /// miscalibration, not score misfit, breaks the size.
    Miscalibrated,
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightMode::Oracle => write!(f, "oracle"),
            WeightMode::Estimated => write!(f, "estimated"),
            WeightMode::Miscalibrated => write!(f, "miscalibrated"),
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "oracle" => Ok(WeightMode::Oracle),
            "estimated" => Ok(WeightMode::Estimated),
            "miscalibrated" => Ok(WeightMode::Miscalibrated),
            other => Err(format!(
                "unknown weight mode '{other}', expected oracle, estimated or miscalibrated"
            )),
        }
    }
}

/// The grid of one experiment: every combination is run for every
/// replication. The lambda grid applies to the sparse estimator only.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentGrid {
    pub n2_values: Vec<usize>,
    pub m_values: Vec<usize>,
    pub estimators: Vec<ClassifierKind>,
    pub weight_modes: Vec<WeightMode>,
    pub l1_lambdas: Vec<f64>,
}

impl ExperimentGrid {
    pub fn single(n2: usize, m: usize, estimator: ClassifierKind, mode: WeightMode) -> Self {
        Self {
            n2_values: vec![n2],
            m_values: vec![m],
            estimators: vec![estimator],
            weight_modes: vec![mode],
            l1_lambdas: vec![],
        }
    }
}

/// Detail of one replication, behind the full-report flag.
#[derive(Debug, Clone, Serialize)]
pub struct RepDetail {
    pub seed: u64,
    pub t: f64,
    pub p_value: f64,
    pub reject: bool,
    pub err_p: Option<f64>,
    pub err_v: Option<f64>,
    pub mce: Option<f64>,
}

/// Aggregates of one grid cell.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub model: Model,
    pub hypothesis: Hypothesis,
    pub estimator: ClassifierKind,
    pub weight_mode: WeightMode,
    pub n2: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub reps: usize,
    pub reject_frac: f64,
    pub err_p: Option<f64>,
    pub err_v: Option<f64>,
    pub mce: Option<f64>,
    pub failures: usize,
    pub lambda: Option<f64>,
    pub detail: Vec<RepDetail>,
}

/// A full experiment: the resolved model parameters, one row per grid cell,
/// and the seeds needed to replay it.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub spec: ModelSpec,
    pub alpha: f64,
    pub reps: usize,
    pub base_seed: u64,
    pub version: String,
    pub rows: Vec<ReportRow>,
    pub wall_time_s: f64,
}

impl ExperimentReport {
    /// One CSV row per grid cell; optional metrics are left empty.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "model,hypothesis,estimator,weight_mode,n2,m,K,reps,reject_frac,err_p,err_v,mce,failures,lambda\n",
        );
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.6},{},{},{},{},{}\n",
                r.model,
                r.hypothesis,
                r.estimator,
                r.weight_mode,
                r.n2,
                r.m,
                r.k,
                r.reps,
                r.reject_frac,
                opt(r.err_p),
                opt(r.err_v),
                opt(r.mce),
                r.failures,
                r.lambda.map(|l| format!("{l}")).unwrap_or_default(),
            ));
        }
        out
    }

    /// JSON form; per-replication detail is stripped unless `full` is set.
    pub fn to_json_value(&self, full: bool) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if !full {
            if let Some(rows) = v.get_mut("rows").and_then(|r| r.as_array_mut()) {
                for row in rows {
                    if let Some(obj) = row.as_object_mut() {
                        obj.remove("detail");
                    }
                }
            }
        }
        v
    }
}

struct RepOutcome {
    reject: bool,
    t: f64,
    p_value: f64,
    err_p: Option<f64>,
    err_v: Option<f64>,
    mce: Option<f64>,
}

fn weight_rows(
    train: &LabeledSample,
    test: &LabeledSample,
    plan: &SplitPlan,
    g_fn: &MarginalFn,
) -> Vec<Vec<f64>> {
    plan.rank_test_idx
        .iter()
        .zip(&plan.batches)
        .map(|(&test_idx, batch)| {
            let mut g: Vec<f64> = batch.iter().map(|&i| g_fn(train.row(i))).collect();
            g.push(g_fn(test.row(test_idx)));
            let denom: f64 = g.iter().sum();
            g.iter().map(|v| v / denom).collect()
        })
        .collect()
}

fn score_rows(
    train: &LabeledSample,
    test: &LabeledSample,
    plan: &SplitPlan,
    v_fn: &dyn Fn(&[f64], f64) -> f64,
) -> Vec<Vec<f64>> {
    plan.rank_test_idx
        .iter()
        .zip(&plan.batches)
        .map(|(&test_idx, batch)| {
            let mut row: Vec<f64> = batch
                .iter()
                .map(|&i| v_fn(train.row(i), train.response()[i]))
                .collect();
            row.push(v_fn(test.row(test_idx), test.response()[test_idx]));
            row
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn one_replication(
    spec: &ModelSpec,
    n1: usize,
    n2: usize,
    m: usize,
    k: usize,
    estimator: ClassifierKind,
    mode: WeightMode,
    lambda: Option<f64>,
    fit_base: &FitConfig,
    alpha: f64,
    seed: u64,
) -> Result<RepOutcome, SimError> {
    let (train, test, oracle) = generate(spec, n1, n2, seed)?;
    let plan = plan_split(n1, n2, m, k, seed)?;
    debug_assert_eq!(plan.fit_train_idx.len(), n2 - k);
    debug_assert_eq!(plan.fit_test_idx.len(), n2 - k);
    let fit_train = train.subset(&plan.fit_train_idx);
    let fit_test = test.subset(&plan.fit_test_idx);

    let mut fit_cfg = fit_base.clone();
    if let Some(l) = lambda {
        fit_cfg.l1_lambda = l;
    }

    // marginal ratio estimate, when the weight mode needs one
    let estimated_g = match mode {
        WeightMode::Oracle => None,
        WeightMode::Estimated | WeightMode::Miscalibrated => {
            let cfg = fit_cfg
                .clone()
                .with_seed(stream_rng(seed, Stream::MarginalFit).random());
            Some(
                estimate_marginal_ratio(&fit_train, &fit_test, estimator, &cfg).map_err(
                    |source| SimError::Fit {
                        context: "marginal ratio fit".into(),
                        source,
                    },
                )?,
            )
        }
    };

    // scores always compose with an honest marginal; only the weights are
    // perturbed in miscalibrated mode
    let g_honest: MarginalFn = match &estimated_g {
        Some((g, _)) => g.clone(),
        None => oracle.marginal_fn(),
    };
    let g_weights: MarginalFn = match mode {
        WeightMode::Oracle => oracle.marginal_fn(),
        WeightMode::Estimated => g_honest.clone(),
        WeightMode::Miscalibrated => {
            let inner = g_honest.clone();
            std::sync::Arc::new(move |x: &[f64]| 1.0 / inner(x))
        }
    };

    let cfg = fit_cfg
        .clone()
        .with_seed(stream_rng(seed, Stream::JointFit).random());
    let (v_fn, _) = estimate_conditional_ratio(&fit_train, &fit_test, estimator, &cfg, g_honest)
        .map_err(|source| SimError::Fit {
            context: "conditional ratio fit".into(),
            source,
        })?;

    let batches = build_minibatches(&train, &test, &plan, &v_fn, &g_weights, seed)?;
    let u_values: Vec<f64> = batches.iter().map(weighted_pvalue).collect();
    let t = t_statistic(&u_values);
    let p_value = crate::stats::normal_cdf(-t);
    let reject = t >= normal_quantile(1.0 - alpha);

    // diagnostics against the oracle
    let err_p_val = match mode {
        WeightMode::Oracle => None,
        _ => {
            let est = weight_rows(&train, &test, &plan, &g_weights);
            let tru = weight_rows(&train, &test, &plan, &oracle.marginal_fn());
            Some(err_p(&est, &tru)?)
        }
    };
    let err_v_val = match spec.hypothesis {
        Hypothesis::Alt => {
            let est = score_rows(&train, &test, &plan, &*v_fn);
            let oracle_v = oracle.conditional_fn();
            let tru = score_rows(&train, &test, &plan, &*oracle_v);
            Some(err_v(&est, &tru)?)
        }
        Hypothesis::Null => None,
    };
    let mce_val = match &estimated_g {
        Some((_, clf)) => {
            // out-of-sample: the ranking points never touch the fit
            let mut rows = Array2::zeros((plan.rank_train_idx.len() + k, spec.p));
            let mut labels = Vec::with_capacity(plan.rank_train_idx.len() + k);
            for (out, &i) in plan.rank_train_idx.iter().enumerate() {
                rows.row_mut(out).assign(&train.features().row(i));
                labels.push(1u8);
            }
            for (off, &j) in plan.rank_test_idx.iter().enumerate() {
                rows.row_mut(plan.rank_train_idx.len() + off)
                    .assign(&test.features().row(j));
                labels.push(0u8);
            }
            Some(mce(clf, &rows, &labels)?)
        }
        None => None,
    };

    Ok(RepOutcome {
        reject,
        t,
        p_value,
        err_p: err_p_val,
        err_v: err_v_val,
        mce: mce_val,
    })
}

/// K = ceil(n2 / ln n2), the experiment sizing rule.
pub fn experiment_k(n2: usize) -> usize {
    (n2 as f64 / (n2 as f64).ln()).ceil() as usize
}

/// Run every grid cell for `reps` replications. Per-replication seeds are
/// base_seed + replication index; replications run in parallel and a failed
/// replication is excluded from the aggregates and counted, never retried.
pub fn run_experiment(
    spec: &ModelSpec,
    grid: &ExperimentGrid,
    reps: usize,
    alpha: f64,
    base_seed: u64,
    fit_base: &FitConfig,
) -> Result<ExperimentReport, SimError> {
    if reps < 1 {
        return Err(SimError::BadArg("reps must be >= 1".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::BadArg(format!("alpha must be in (0,1), got {alpha}")));
    }
    let started = std::time::Instant::now();
    let mut rows = Vec::new();

    for &n2 in &grid.n2_values {
        if n2 < 3 {
            return Err(SimError::BadArg(format!("n2 = {n2} is too small")));
        }
        let k = experiment_k(n2);
        for &m in &grid.m_values {
            let n1 = n2 + (m - 1) * k;
            if n2 <= k {
                return Err(SimError::BadArg(format!(
                    "n2 = {n2} leaves no fitting subsample with K = {k}"
                )));
            }
            for &estimator in &grid.estimators {
                let lambdas: Vec<Option<f64>> =
                    if estimator == ClassifierKind::SparseLl && !grid.l1_lambdas.is_empty() {
                        grid.l1_lambdas.iter().map(|&l| Some(l)).collect()
                    } else {
                        vec![None]
                    };
                for &mode in &grid.weight_modes {
                    for &lambda in &lambdas {
                        let outcomes: Vec<Result<RepOutcome, SimError>> = (0..reps)
                            .into_par_iter()
                            .map(|r| {
                                one_replication(
                                    spec,
                                    n1,
                                    n2,
                                    m,
                                    k,
                                    estimator,
                                    mode,
                                    lambda,
                                    fit_base,
                                    alpha,
                                    base_seed + r as u64,
                                )
                            })
                            .collect();

                        let mut detail = Vec::new();
                        let mut rejects = 0usize;
                        let mut failures = 0usize;
                        let mut sums = (0.0, 0.0, 0.0);
                        let mut counts = (0usize, 0usize, 0usize);
                        for (r, outcome) in outcomes.into_iter().enumerate() {
                            match outcome {
                                Ok(o) => {
                                    rejects += o.reject as usize;
                                    if let Some(v) = o.err_p {
                                        sums.0 += v;
                                        counts.0 += 1;
                                    }
                                    if let Some(v) = o.err_v {
                                        sums.1 += v;
                                        counts.1 += 1;
                                    }
                                    if let Some(v) = o.mce {
                                        sums.2 += v;
                                        counts.2 += 1;
                                    }
                                    detail.push(RepDetail {
                                        seed: base_seed + r as u64,
                                        t: o.t,
                                        p_value: o.p_value,
                                        reject: o.reject,
                                        err_p: o.err_p,
                                        err_v: o.err_v,
                                        mce: o.mce,
                                    });
                                }
                                Err(_) => failures += 1,
                            }
                        }
                        let ok = reps - failures;
                        let mean = |sum: f64, count: usize| {
                            (count > 0).then(|| sum / count as f64)
                        };
                        rows.push(ReportRow {
                            model: spec.model,
                            hypothesis: spec.hypothesis,
                            estimator,
                            weight_mode: mode,
                            n2,
                            m,
                            k,
                            reps: ok,
                            reject_frac: if ok > 0 {
                                rejects as f64 / ok as f64
                            } else {
                                f64::NAN
                            },
                            err_p: mean(sums.0, counts.0),
                            err_v: mean(sums.1, counts.1),
                            mce: mean(sums.2, counts.2),
                            failures,
                            lambda,
                            detail,
                        });
                    }
                }
            }
        }
    }

    Ok(ExperimentReport {
        spec: spec.clone(),
        alpha,
        reps,
        base_seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        rows,
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

/// Resample ceil(fraction * n) rows with replacement, with probabilities
/// proportional to exp(x' alpha). Builds covariate-shifted datasets that
/// still satisfy the null.
pub fn exponential_tilt_resample(
    sample: &LabeledSample,
    alpha_vector: &[f64],
    fraction: f64,
    seed: u64,
) -> Result<LabeledSample, SimError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SimError::BadArg(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    if alpha_vector.len() != sample.p() {
        return Err(SimError::Shape(format!(
            "alpha has {} entries for p = {}",
            alpha_vector.len(),
            sample.p()
        )));
    }
    let n = sample.n();
    let logw: Vec<f64> = (0..n)
        .map(|i| {
            sample
                .row(i)
                .iter()
                .zip(alpha_vector)
                .map(|(x, a)| x * a)
                .sum()
        })
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(SimError::DegenerateWeights);
    }
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for v in &w {
        acc += v;
        cum.push(acc);
    }

    let target = (fraction * n as f64).ceil() as usize;
    let mut rng = stream_rng(seed, Stream::Resample);
    let idx: Vec<usize> = (0..target)
        .map(|_| {
            let u = rng.random::<f64>() * total;
            cum.partition_point(|&c| c < u).min(n - 1)
        })
        .collect();
    Ok(sample.subset(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::oracle_ratio;

    fn sample_moments(values: &[f64]) -> (f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        (mean, var)
    }

    #[test]
    fn beta_signs_are_seeded_and_recorded() {
        let a = ModelSpec::new(Model::A, Hypothesis::Null, 5);
        let b = ModelSpec::new(Model::A, Hypothesis::Null, 5);
        assert_eq!(a.beta, b.beta);
        assert!(a.beta.iter().all(|&v| v == 1.0 || v == -1.0));
        let c = ModelSpec::new(Model::A, Hypothesis::Null, 6);
        // different seeds give different signs with high probability
        assert!(a.beta != c.beta || a.seed != c.seed);
    }

    #[test]
    fn high_dim_spec_pads_with_zeros() {
        let spec = ModelSpec::with_dim(Model::A, Hypothesis::Alt, 500, 5, 1);
        assert_eq!(spec.beta.len(), 500);
        assert!(spec.beta[..5].iter().all(|&v| v.abs() == 1.0));
        assert!(spec.beta[5..].iter().all(|&v| v == 0.0));
        assert_eq!(&spec.mu[..5], &[1.0, 1.0, -1.0, -1.0, 0.0]);
        assert!(spec.mu[5..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn model_c_covariance_matches_definition() {
        let sigma = model_c_covariance(5);
        assert_eq!(sigma[(0, 0)], 1.0);
        assert_eq!(sigma[(0, 1)], 0.5);
        assert_eq!(sigma[(0, 4)], 0.2);
        assert_eq!(sigma[(3, 4)], 0.2);
        assert_eq!(sigma[(2, 1)], 1.0 / 3.0);
    }

    #[test]
    fn model_c_covariate_moments_match_sigma() {
        let spec = ModelSpec::new(Model::C, Hypothesis::Null, 2);
        let n = 100_000;
        let mut rng = stream_rng(0, Stream::GenerateTrain);
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| draw_covariate(&spec, Population::Train, &mut rng))
            .collect();
        let sigma = model_c_covariance(5);
        for i in 0..5 {
            for j in 0..5 {
                let mi: f64 = draws.iter().map(|d| d[i]).sum::<f64>() / n as f64;
                let mj: f64 = draws.iter().map(|d| d[j]).sum::<f64>() / n as f64;
                let cov: f64 = draws
                    .iter()
                    .map(|d| (d[i] - mi) * (d[j] - mj))
                    .sum::<f64>()
                    / n as f64;
                let se = ((sigma[(i, i)] * sigma[(j, j)] + sigma[(i, j)].powi(2)) / n as f64)
                    .sqrt();
                assert!(
                    (cov - sigma[(i, j)]).abs() < 3.0 * se + 1e-3,
                    "cov[{i}][{j}] = {cov} vs {}",
                    sigma[(i, j)]
                );
            }
        }
    }

    #[test]
    fn model_b_residual_variance_matches_t5() {
        let spec = ModelSpec::new(Model::B, Hypothesis::Null, 3);
        let n = 100_000;
        let mut rng = stream_rng(1, Stream::GenerateTrain);
        let resid: Vec<f64> = (0..n)
            .map(|_| {
                let x = draw_covariate(&spec, Population::Train, &mut rng);
                draw_response(&spec, Population::Train, &x, &mut rng) - spec.regression(&x)
            })
            .collect();
        let (mean, var) = sample_moments(&resid);
        // t(5): mean 0, variance 5/3, fourth moment 25 -> se(var) ~ 0.0149
        assert!(mean.abs() < 0.02, "residual mean {mean}");
        assert!((var - 5.0 / 3.0).abs() < 3.0 * 0.0149, "residual variance {var}");
    }

    #[test]
    fn model_a_alt_shifts_the_intercept_by_half() {
        // raw generator law, before the extreme-ratio filter (the filter
        // deliberately truncates the joint ratio and so perturbs moments)
        let spec = ModelSpec::new(Model::A, Hypothesis::Alt, 4);
        let n = 10_000;
        let mut rng = stream_rng(11, Stream::GenerateTrain);
        let mut resid = |pop: Population| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let x = draw_covariate(&spec, pop, &mut rng);
                    draw_response(&spec, pop, &x, &mut rng) - spec.regression(&x)
                })
                .collect()
        };
        let (m1, v1) = sample_moments(&resid(Population::Train));
        let (m2, v2) = sample_moments(&resid(Population::Test));
        let se = ((v1 + v2) / n as f64).sqrt();
        assert!(
            ((m2 - m1) - 0.5).abs() < 3.0 * se,
            "intercept shift {} vs 0.5",
            m2 - m1
        );
    }

    #[test]
    fn model_d_alt_doubles_residual_variance() {
        let spec = ModelSpec::new(Model::D, Hypothesis::Alt, 4);
        let n = 10_000;
        let mut rng = stream_rng(12, Stream::GenerateTrain);
        let mut resid = |pop: Population| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let x = draw_covariate(&spec, pop, &mut rng);
                    draw_response(&spec, pop, &x, &mut rng) - spec.regression(&x)
                })
                .collect()
        };
        let (_, v1) = sample_moments(&resid(Population::Train));
        let (_, v2) = sample_moments(&resid(Population::Test));
        let ratio = v2 / v1;
        assert!((1.8..=2.2).contains(&ratio), "variance ratio {ratio}");
    }

    #[test]
    fn filter_keeps_every_retained_point_in_band() {
        for model in [Model::A, Model::B, Model::C, Model::D] {
            for hyp in [Hypothesis::Null, Hypothesis::Alt] {
                let spec = ModelSpec::new(model, hyp, 9);
                let oracle = oracle_ratio(&spec);
                let (train, test, _) = generate(&spec, 300, 300, 13).unwrap();
                for s in [&train, &test] {
                    for i in 0..s.n() {
                        let g = oracle.g(s.row(i));
                        let joint = oracle.v(s.row(i), s.response()[i]) / g;
                        assert!(in_clip_band(g), "{model:?}/{hyp:?}: g = {g}");
                        assert!(in_clip_band(joint), "{model:?}/{hyp:?}: joint = {joint}");
                    }
                }
            }
        }
    }

    #[test]
    fn null_construction_shares_conditionals() {
        let spec = ModelSpec::new(Model::A, Hypothesis::Null, 20);
        assert_eq!(spec.alphas, (0.0, 0.0));
        let oracle = oracle_ratio(&spec);
        assert_eq!(oracle.v(&[0.3; 5], 1.7), 1.0);
    }

    #[test]
    fn err_p_identity_and_hand_value() {
        let rows = vec![vec![0.25, 0.75], vec![0.5, 0.5]];
        assert_eq!(err_p(&rows, &rows).unwrap(), 0.0);
        let est = vec![vec![1.0, 0.0]];
        let tru = vec![vec![0.5, 0.5]];
        assert!((err_p(&est, &tru).unwrap() - 1.0).abs() < 1e-15);
        // rows must be normalized
        assert!(err_p(&[vec![0.7, 0.7]], &[vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn err_v_hand_values() {
        assert_eq!(err_v(&[vec![2.0]], &[vec![1.0]]).unwrap(), 1.0);
        let est = vec![vec![2.0, 0.0], vec![1.0, 3.0]];
        let tru = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!((err_v(&est, &tru).unwrap() - 1.5).abs() < 1e-15);
        assert!(err_v(&[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn mce_is_chance_level_for_coin_classifier() {
        let n = 2000;
        let mut rng = stream_rng(3, Stream::GenerateTrain);
        let feats = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let labels: Vec<u8> = (0..n).map(|_| rng.random::<bool>() as u8).collect();
        // zero slopes and a tiny positive intercept: every prediction is
        // just above 1/2, so the classifier guesses one class throughout
        let clf = crate::classifier::ProbClassifier {
            kind: ClassifierKind::Ll,
            transform: crate::classifier::FeatureTransform {
                input_dim: 2,
                expansion: false,
                means: None,
                sds: None,
            },
            params: crate::classifier::ModelParams::Linear {
                coefficients: vec![1e-9, 0.0, 0.0],
            },
            diagnostics: Default::default(),
        };
        let e = mce(&clf, &feats, &labels).unwrap();
        let se = 0.5 / (n as f64).sqrt();
        assert!((e - 0.5).abs() < 3.0 * se, "mce {e}");
    }

    #[test]
    fn mce_is_zero_on_separable_data() {
        let n = 200;
        let mut rng = stream_rng(14, Stream::GenerateTrain);
        let feats = Array2::from_shape_simple_fn((n, 1), || rng.random::<f64>() * 2.0 - 1.0);
        let labels: Vec<u8> = (0..n).map(|i| (feats[(i, 0)] > 0.0) as u8).collect();
        let clf =
            crate::classifier::fit_logistic(&feats, &labels, &FitConfig::default()).unwrap();
        // separation flagged, but the returned iterate classifies perfectly
        let holdout = Array2::from_shape_simple_fn((400, 1), || rng.random::<f64>() * 2.0 - 1.0);
        let holdout_labels: Vec<u8> = (0..400).map(|i| (holdout[(i, 0)] > 0.0) as u8).collect();
        assert_eq!(mce(&clf, &holdout, &holdout_labels).unwrap(), 0.0);
    }

    #[test]
    fn mce_separates_estimators_on_a_response_partition() {
        // partition a nonlinear regression dataset by its response: the
        // train-vs-test boundary in covariate space is then curved, so the
        // network classifies materially better than the linear model
        let n = 1600;
        let mut rng = stream_rng(15, Stream::GenerateTrain);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut xs = Vec::with_capacity(2 * n);
        let mut ys = Vec::with_capacity(2 * n);
        for _ in 0..2 * n {
            let x = [normal.sample(&mut rng), normal.sample(&mut rng)];
            let y = x[0] * x[0] + x[1] * x[1] + 0.5 * normal.sample(&mut rng);
            xs.push(x);
            ys.push(y);
        }
        let mut sorted = ys.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let threshold = sorted[(0.75 * 2.0 * n as f64) as usize];
        // class 1 = "train" = small responses, class 0 = the rest
        let labels: Vec<u8> = ys.iter().map(|&y| (y < threshold) as u8).collect();
        let feats = Array2::from_shape_fn((2 * n, 2), |(i, j)| xs[i][j]);
        let fit_x = feats.slice(ndarray::s![..n, ..]).to_owned();
        let holdout = feats.slice(ndarray::s![n.., ..]).to_owned();

        let ll =
            crate::classifier::fit_logistic(&fit_x, &labels[..n], &FitConfig::default()).unwrap();
        let nn =
            crate::classifier::fit_mlp(&fit_x, &labels[..n], &FitConfig::default()).unwrap();
        let mce_ll = mce(&ll, &holdout, &labels[n..]).unwrap();
        let mce_nn = mce(&nn, &holdout, &labels[n..]).unwrap();
        assert!(
            mce_nn + 0.05 < mce_ll,
            "expected the network to classify materially better: nn {mce_nn} vs ll {mce_ll}"
        );
        assert!(mce_ll > 0.15, "the linear model should struggle here: {mce_ll}");
    }

    #[test]
    fn experiment_k_matches_hand_values() {
        assert_eq!(experiment_k(200), 38);
        assert_eq!(experiment_k(500), 81);
        assert_eq!(experiment_k(1000), 145);
    }

    #[test]
    fn experiment_report_is_seed_reproducible() {
        let spec = ModelSpec::new(Model::A, Hypothesis::Null, 7);
        let grid = ExperimentGrid::single(60, 2, ClassifierKind::Ll, WeightMode::Estimated);
        let fit = FitConfig::default();
        let a = run_experiment(&spec, &grid, 5, 0.05, 99, &fit).unwrap();
        let b = run_experiment(&spec, &grid, 5, 0.05, 99, &fit).unwrap();
        assert_eq!(
            serde_json::to_string(&a.rows).unwrap(),
            serde_json::to_string(&b.rows).unwrap()
        );
        assert_eq!(a.rows[0].failures, 0);
    }

    #[test]
    fn exponential_tilt_uniform_when_alpha_zero() {
        let n = 400;
        let mut rng = stream_rng(5, Stream::GenerateTrain);
        let feats = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let resp = Array1::from_shape_simple_fn(n, || rng.random::<f64>());
        let s = LabeledSample::new(feats, resp, Population::Test).unwrap();
        let out = exponential_tilt_resample(&s, &[0.0, 0.0], 0.25, 8).unwrap();
        assert_eq!(out.n(), 100);
        // with many resamples, each source row's multiplicity averages to
        // fraction
        let reps = 2000;
        let mut counts = vec![0usize; n];
        for seed in 0..reps {
            let out = exponential_tilt_resample(&s, &[0.0, 0.0], 0.25, seed).unwrap();
            for i in 0..out.n() {
                // match by response value (all distinct with probability 1)
                let target = out.response()[i];
                let j = (0..n).find(|&j| s.response()[j] == target).unwrap();
                counts[j] += 1;
            }
        }
        let mean = counts.iter().sum::<usize>() as f64 / n as f64 / reps as f64;
        assert!((mean - 0.25).abs() < 0.01, "mean multiplicity {mean}");
    }

    #[test]
    fn exponential_tilt_degenerate_support() {
        let s = LabeledSample::new(
            Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap(),
            Array1::from_vec(vec![3.0]),
            Population::Test,
        )
        .unwrap();
        let out = exponential_tilt_resample(&s, &[1.0, -1.0], 1.0, 0).unwrap();
        assert_eq!(out.n(), 1);
        assert_eq!(out.row(0), s.row(0));
    }

    #[test]
    fn exponential_tilt_shifts_the_mean() {
        // weights exp(x1) favor large first coordinates
        let n = 2000;
        let mut rng = stream_rng(6, Stream::GenerateTrain);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let feats = Array2::from_shape_simple_fn((n, 1), || normal.sample(&mut rng));
        let resp = Array1::zeros(n);
        let s = LabeledSample::new(feats, resp, Population::Test).unwrap();
        let out = exponential_tilt_resample(&s, &[1.0], 0.5, 3).unwrap();
        let before: f64 = (0..s.n()).map(|i| s.row(i)[0]).sum::<f64>() / s.n() as f64;
        let after: f64 = (0..out.n()).map(|i| out.row(i)[0]).sum::<f64>() / out.n() as f64;
        // tilting by exp(x) moves a standard normal mean toward 1
        assert!(after > before + 0.5, "mean before {before}, after {after}");
    }
}
