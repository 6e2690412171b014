//! Conformal two-sample test of covariate shift.
//!
//! Given labeled samples from a training and a testing population, this crate
//! tests whether the conditional distribution of the response given the
//! covariates is the same in both, while the covariate marginals are free to
//! differ. The test statistic is built from weighted conformal p-values whose
//! conformity score is a classifier-estimated conditional density ratio, and
//! whose weights come from a classifier-estimated marginal density ratio.
//!
//! The crate splits into:
//!
//! - [`dataset`]: the data model, CSV ingestion, and the randomized sample
//!   splitting into fitting subsamples and ranking minibatches;
//! - [`classifier`]: the probabilistic classifiers used as density-ratio
//!   engines (linear/quadratic logistic, a small feed-forward network, and an
//!   L1-sparse logistic for high dimensions);
//! - [`ratio`]: marginal and conditional density-ratio estimators built from
//!   those classifiers, plus closed-form oracle ratios for the simulation
//!   models;
//! - [`conformal`]: the test engine itself: weighted conformal p-values, the
//!   normalized mean statistic and decision rule, and median-p aggregation;
//! - [`sim`]: data generators for four synthetic models, evaluation metrics,
//!   and a replication harness that writes machine-readable reports;
//! - [`cli`]: the command-line front end.
//!
//! A guided tour with runnable examples lives in the `book/` directory of the
//! repository; its code snippets compile and run as this crate's doc-tests.

pub mod classifier;
pub mod cli;
pub mod conformal;
pub mod dataset;
pub mod ratio;
pub mod sim;
pub mod stats;

pub mod book;
pub(crate) mod linalg;
mod rng;

pub use classifier::{ClassifierKind, FitConfig, ProbClassifier};
pub use conformal::{median_p, run_test, weighted_pvalue, ConformalRun, Minibatch, TestConfig};
pub use dataset::{default_k, load_csv, plan_split, LabeledSample, Population, SplitPlan};
pub use ratio::{clip_ratio, oracle_ratio, RatioModel};
pub use sim::{generate, run_experiment, ExperimentReport, Hypothesis, Model, ModelSpec};
