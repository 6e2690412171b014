//! The test engine: weighted and unweighted conformal p-values, the full
//! testing procedure, the normalized mean statistic with its one-sided
//! decision rule, and median-p aggregation across auxiliary randomizations.
//!
//! One ranking minibatch pairs m training points with a single testing
//! point. The conformity scores are conditional density-ratio evaluations
//! and the weights are normalized marginal density-ratio evaluations; under
//! the null the resulting p-value is exactly uniform when the weights are
//! exact, for any choice of score function.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{ClassifierKind, FitConfig, FitError};
use crate::dataset::{default_k, plan_split, DatasetError, LabeledSample, SplitPlan};
use crate::ratio::{
    estimate_conditional_ratio, estimate_marginal_ratio, ConditionalFn, MarginalFn,
};
use crate::rng::{stream_rng, Stream};

pub use crate::stats::{normal_cdf, normal_quantile};

#[derive(Debug, Error)]
pub enum TestError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("sample splitting failed: {0}")]
    Split(#[from] DatasetError),
    #[error("marginal ratio fit failed: {0}")]
    MarginalFit(#[source] FitError),
    #[error("conditional ratio fit failed: {0}")]
    ConditionalFit(#[source] FitError),
    #[error("invalid minibatch: {0}")]
    Batch(String),
    #[error("p-value aggregation failed: {0}")]
    Aggregate(String),
}

/// One ranking minibatch: m training scores and weights plus the paired
/// testing point's score and weight, and the uniform tiebreaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minibatch {
    pub train_scores: Vec<f64>,
    pub test_score: f64,
    pub train_g: Vec<f64>,
    pub test_g: f64,
    pub zeta: f64,
}

impl Minibatch {
    pub fn new(
        train_scores: Vec<f64>,
        test_score: f64,
        train_g: Vec<f64>,
        test_g: f64,
        zeta: f64,
    ) -> Result<Self, TestError> {
        if train_scores.len() != train_g.len() || train_scores.is_empty() {
            return Err(TestError::Batch(format!(
                "need matching non-empty score/weight vectors, got {} scores and {} weights",
                train_scores.len(),
                train_g.len()
            )));
        }
        let finite_pos = |v: f64| v.is_finite() && v > 0.0;
        if !train_scores.iter().chain(train_g.iter()).all(|&v| finite_pos(v))
            || !finite_pos(test_score)
            || !finite_pos(test_g)
        {
            return Err(TestError::Batch(
                "scores and g values must be finite and positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&zeta) {
            return Err(TestError::Batch(format!("zeta must be in [0,1), got {zeta}")));
        }
        Ok(Self {
            train_scores,
            test_score,
            train_g,
            test_g,
            zeta,
        })
    }

    pub fn m(&self) -> usize {
        self.train_scores.len()
    }

    /// Normalized weight row (m+1 entries, training points then the test
    /// point): each g divided by the batch total.
    pub fn weights(&self) -> Vec<f64> {
        let denom: f64 = self.train_g.iter().sum::<f64>() + self.test_g;
        let mut w: Vec<f64> = self.train_g.iter().map(|g| g / denom).collect();
        w.push(self.test_g / denom);
        w
    }
}

/// Weighted conformal p-value of one minibatch: the weight mass strictly
/// below the test score, plus zeta times the tied mass (the test point's own
/// weight always counts as tied). Exactly uniform under the null when the
/// weights are exact, whatever the score function.
pub fn weighted_pvalue(batch: &Minibatch) -> f64 {
    let denom: f64 = batch.train_g.iter().sum::<f64>() + batch.test_g;
    debug_assert!(denom > 0.0, "positivity invariant violated: zero weight mass");
    let mut below = 0.0;
    let mut tied = batch.test_g;
    for (&score, &g) in batch.train_scores.iter().zip(&batch.train_g) {
        if score < batch.test_score {
            below += g;
        } else if score == batch.test_score {
            tied += g;
        }
    }
    (below + batch.zeta * tied) / denom
}

/// Unweighted conformal p-value (R - 1 + zeta)/(m + 1) with the rank R drawn
/// uniformly from the tie range [R-, R+]. Counts run over all m+1 scores,
/// the test point included.
pub fn unweighted_pvalue(train_scores: &[f64], test_score: f64, zeta: f64, tie_seed: u64) -> f64 {
    let m = train_scores.len();
    let below = train_scores.iter().filter(|&&s| s < test_score).count();
    let tied = train_scores.iter().filter(|&&s| s == test_score).count();
    let r_minus = 1 + below;
    let r_plus = below + tied + 1;
    let r = if r_minus == r_plus {
        r_minus
    } else {
        stream_rng(tie_seed, Stream::Split).random_range(r_minus..=r_plus)
    };
    (r as f64 - 1.0 + zeta) / (m as f64 + 1.0)
}

/// Normalized one-sided mean statistic sqrt(12K) (1/2 - mean(U)).
pub fn t_statistic(u_values: &[f64]) -> f64 {
    let k = u_values.len() as f64;
    let mean = u_values.iter().sum::<f64>() / k;
    (12.0 * k).sqrt() * (0.5 - mean)
}

/// Median p-value aggregation: min(1, 2 * median). The median of an even
/// count is the mean of the two central order statistics.
pub fn median_p(p_values: &[f64]) -> Result<f64, TestError> {
    if p_values.is_empty() {
        return Err(TestError::Aggregate("no p-values to aggregate".into()));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(TestError::Aggregate("p-values must lie in [0,1]".into()));
    }
    let mut sorted = p_values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite p-values"));
    let b = sorted.len();
    let median = if b % 2 == 1 {
        sorted[b / 2]
    } else {
        0.5 * (sorted[b / 2 - 1] + sorted[b / 2])
    };
    Ok((2.0 * median).min(1.0))
}

/// Per-run diagnostics, filled when an oracle or holdout is available.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    /// Mean L1 distance between estimated and oracle weight rows.
    pub err_p: Option<f64>,
    /// Mean squared difference between estimated and oracle scores.
    pub err_v: Option<f64>,
    /// Out-of-sample marginal classification error of the g classifier.
    pub mce: Option<f64>,
    pub warnings: Vec<String>,
}

/// Everything one execution of the test produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConformalRun {
    pub alpha: f64,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    #[serde(rename = "t")]
    pub t_statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub u_values: Vec<f64>,
    pub diagnostics: RunDiagnostics,
    pub plan: SplitPlan,
    /// Wall time of the run in seconds.
    pub timing: f64,
}

/// Knobs of one test execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestConfig {
    pub m: usize,
    /// Number of ranking minibatches; defaulted from the sample sizes when
    /// absent.
    pub k: Option<usize>,
    pub alpha: f64,
    pub estimator: ClassifierKind,
    pub fit: FitConfig,
    /// Skip the marginal ratio fit and use exact weights 1/(m+1).
    pub equal_marginals: bool,
    pub seed: u64,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            m: 10,
            k: None,
            alpha: 0.05,
            estimator: ClassifierKind::Ll,
            fit: FitConfig::default(),
            equal_marginals: false,
            seed: 0,
        }
    }
}

impl TestConfig {
    fn validate(&self) -> Result<(), TestError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(TestError::Config(format!(
                "alpha must be in (0,1), got {}",
                self.alpha
            )));
        }
        if self.m < 1 {
            return Err(TestError::Config("m must be >= 1".into()));
        }
        Ok(())
    }
}

/// Evaluate ratio functions over the plan's minibatches. Batch k pairs the
/// k-th ranking test point with the k-th training batch in enumeration
/// order; its tiebreaker comes from the zeta stream indexed by k.
pub fn build_minibatches(
    train: &LabeledSample,
    test: &LabeledSample,
    plan: &SplitPlan,
    v_fn: &ConditionalFn,
    g_fn: &MarginalFn,
    seed: u64,
) -> Result<Vec<Minibatch>, TestError> {
    plan.rank_test_idx
        .iter()
        .zip(&plan.batches)
        .enumerate()
        .map(|(k, (&test_idx, batch))| {
            let train_scores: Vec<f64> = batch
                .iter()
                .map(|&i| v_fn(train.row(i), train.response()[i]))
                .collect();
            let train_g: Vec<f64> = batch.iter().map(|&i| g_fn(train.row(i))).collect();
            let test_score = v_fn(test.row(test_idx), test.response()[test_idx]);
            let test_g = g_fn(test.row(test_idx));
            let zeta = stream_rng(seed, Stream::Zeta(k as u64)).random::<f64>();
            Minibatch::new(train_scores, test_score, train_g, test_g, zeta)
        })
        .collect()
}

/// Assemble a run from computed p-values.
pub(crate) fn summarize_run(
    u_values: Vec<f64>,
    m: usize,
    alpha: f64,
    seed: u64,
    plan: SplitPlan,
    diagnostics: RunDiagnostics,
    timing: f64,
) -> ConformalRun {
    let t = t_statistic(&u_values);
    let p_value = normal_cdf(-t);
    let reject = t >= normal_quantile(1.0 - alpha);
    ConformalRun {
        alpha,
        m,
        k: u_values.len(),
        seed,
        t_statistic: t,
        p_value,
        reject,
        u_values,
        diagnostics,
        plan,
        timing,
    }
}

/// Run the full conformal covariate-shift test: split the samples, fit the
/// density ratios on the fitting subsamples, score the K ranking
/// minibatches, and apply the one-sided normal decision rule.
pub fn run_test(
    train: &LabeledSample,
    test: &LabeledSample,
    config: &TestConfig,
) -> Result<ConformalRun, TestError> {
    let started = std::time::Instant::now();
    config.validate()?;
    if train.p() != test.p() {
        return Err(TestError::Config(format!(
            "train has {} features but test has {}",
            train.p(),
            test.p()
        )));
    }

    let k = match config.k {
        Some(k) => k,
        None => default_k(test.n(), train.n(), config.m)?,
    };
    let plan = plan_split(train.n(), test.n(), config.m, k, config.seed)?;
    let fit_train = train.subset(&plan.fit_train_idx);
    let fit_test = test.subset(&plan.fit_test_idx);

    let mut diagnostics = RunDiagnostics::default();
    let g_fn: MarginalFn;
    let mut g_clf = None;
    if config.equal_marginals {
        diagnostics
            .warnings
            .push("equal-marginals mode: weights forced to the exact value 1/(m+1)".into());
        g_fn = std::sync::Arc::new(|_| 1.0);
    } else {
        let fit_cfg = config
            .fit
            .clone()
            .with_seed(stream_rng(config.seed, Stream::MarginalFit).random());
        let (g, clf) = estimate_marginal_ratio(&fit_train, &fit_test, config.estimator, &fit_cfg)
            .map_err(TestError::MarginalFit)?;
        g_fn = g;
        g_clf = Some(clf);
    }

    let fit_cfg = config
        .fit
        .clone()
        .with_seed(stream_rng(config.seed, Stream::JointFit).random());
    let (v_fn, _) = estimate_conditional_ratio(
        &fit_train,
        &fit_test,
        config.estimator,
        &fit_cfg,
        g_fn.clone(),
    )
    .map_err(TestError::ConditionalFit)?;

    let batches = build_minibatches(train, test, &plan, &v_fn, &g_fn, config.seed)?;
    let u_values: Vec<f64> = batches.iter().map(weighted_pvalue).collect();

    // out-of-sample error of the g classifier on the ranking points
    if let Some(clf) = &g_clf {
        let mut wrong = 0usize;
        let mut total = 0usize;
        for &i in &plan.rank_train_idx {
            let p = clf
                .predict_proba(train.row(i))
                .map_err(TestError::MarginalFit)?;
            wrong += (p <= 0.5) as usize;
            total += 1;
        }
        for &j in &plan.rank_test_idx {
            let p = clf
                .predict_proba(test.row(j))
                .map_err(TestError::MarginalFit)?;
            wrong += (p > 0.5) as usize;
            total += 1;
        }
        diagnostics.mce = Some(wrong as f64 / total as f64);
    }

    Ok(summarize_run(
        u_values,
        config.m,
        config.alpha,
        config.seed,
        plan,
        diagnostics,
        started.elapsed().as_secs_f64(),
    ))
}
