//! Density-ratio models: classifier-backed estimates of the marginal ratio
//! g(x) = f2X(x)/f1X(x) and the conditional ratio V(x,y) = f1(y|x)/f2(y|x),
//! plus exact closed-form oracles for the simulation models.
//!
//! Both functions are defined up to a positive constant; everything
//! downstream is scale-invariant (weights are normalized, scores enter only
//! through order comparisons), so no calibration step is performed.

use std::sync::Arc;

use ndarray::{concatenate, Array2, Axis};

use crate::classifier::{self, ClassifierKind, FitConfig, FitError, ProbClassifier};
use crate::dataset::LabeledSample;
use crate::sim::{Hypothesis, Model, ModelSpec};

/// Clipping interval endpoints used both for the simulation data filter and
/// as a guard on estimated ratios before weight normalization.
pub const CLIP_LO: f64 = 1.0 / 100.0;
pub const CLIP_HI: f64 = 100.0;

/// Clamp a positive ratio into [lo, hi].
pub fn clip_ratio(value: f64, lo: f64, hi: f64) -> f64 {
    assert!(lo > 0.0 && lo < hi, "need 0 < lo < hi, got [{lo}, {hi}]");
    value.clamp(lo, hi)
}

/// Marginal density-ratio function x -> g(x).
pub type MarginalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
/// Conditional density-ratio function (x, y) -> V(x, y).
pub type ConditionalFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// Where a ratio model came from.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub enum Provenance {
    Classifier(ClassifierKind),
    Oracle(String),
    /// Equal-marginals simplification: g is identically one.
    ConstantOne,
    /// g and v from different sources (e.g. oracle weights with estimated
    /// scores).
    Mixed,
}

/// Callable estimates of g and V, each positive and finite on finite inputs.
#[derive(Clone)]
pub struct RatioModel {
    g: MarginalFn,
    v: ConditionalFn,
    provenance: Provenance,
}

impl std::fmt::Debug for RatioModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RatioModel")
            .field("provenance", &self.provenance)
            .finish_non_exhaustive()
    }
}

impl RatioModel {
    pub fn new(provenance: Provenance, g: MarginalFn, v: ConditionalFn) -> Self {
        Self { g, v, provenance }
    }

    /// g with the equal-marginals constant-one simplification.
    pub fn with_constant_marginal(v: ConditionalFn) -> Self {
        Self {
            g: Arc::new(|_| 1.0),
            v,
            provenance: Provenance::ConstantOne,
        }
    }

    /// Same conditional ratio, different marginal (used to pair estimated
    /// scores with oracle or deliberately perturbed weights).
    pub fn with_marginal(&self, g: MarginalFn, provenance: Provenance) -> Self {
        Self {
            g,
            v: self.v.clone(),
            provenance,
        }
    }

    pub fn g(&self, x: &[f64]) -> f64 {
        (self.g)(x)
    }

    pub fn v(&self, x: &[f64], y: f64) -> f64 {
        (self.v)(x, y)
    }

    pub fn marginal_fn(&self) -> MarginalFn {
        self.g.clone()
    }

    pub fn conditional_fn(&self) -> ConditionalFn {
        self.v.clone()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }
}

fn stack_features(train: &LabeledSample, test: &LabeledSample) -> (Array2<f64>, Vec<u8>) {
    let x = concatenate(Axis(0), &[train.features().view(), test.features().view()])
        .expect("matching feature widths");
    let mut labels = vec![1u8; train.n()];
    labels.extend(std::iter::repeat_n(0u8, test.n()));
    (x, labels)
}

fn stack_joint(train: &LabeledSample, test: &LabeledSample) -> (Array2<f64>, Vec<u8>) {
    let (x, labels) = stack_features(train, test);
    let mut y = train.response().clone().insert_axis(Axis(1));
    y.append(Axis(0), test.response().clone().insert_axis(Axis(1)).view())
        .expect("matching widths");
    let joint = concatenate(Axis(1), &[x.view(), y.view()]).expect("matching row counts");
    (joint, labels)
}

/// Marginal ratio from a fitted train-vs-test classifier: the odds
/// (1 - eta)/eta, clipped into [1/100, 100] as a guard before weight
/// normalization.
pub fn classifier_marginal(clf: ProbClassifier) -> MarginalFn {
    Arc::new(move |x: &[f64]| {
        let eta = clf.predict_proba(x).expect("dimension fixed at fit time");
        clip_ratio((1.0 - eta) / eta, CLIP_LO, CLIP_HI)
    })
}

/// Conditional ratio from a fitted joint classifier: the joint odds
/// eta/(1 - eta) estimates f1(x,y)/f2(x,y); multiplying by g(x) cancels the
/// marginal factor, leaving f1(y|x)/f2(y|x).
pub fn classifier_conditional(clf: ProbClassifier, g: MarginalFn) -> ConditionalFn {
    Arc::new(move |x: &[f64], y: f64| {
        let mut row = Vec::with_capacity(x.len() + 1);
        row.extend_from_slice(x);
        row.push(y);
        let eta = clf.predict_proba(&row).expect("dimension fixed at fit time");
        eta / (1.0 - eta) * g(x)
    })
}

/// Estimate g(x) = f2X(x)/f1X(x) by classifying train (class 1) against test
/// (class 0) on X alone.
pub fn estimate_marginal_ratio(
    fit_train: &LabeledSample,
    fit_test: &LabeledSample,
    kind: ClassifierKind,
    config: &FitConfig,
) -> Result<(MarginalFn, ProbClassifier), FitError> {
    let (x, labels) = stack_features(fit_train, fit_test);
    let clf = classifier::fit(kind, &x, &labels, config)?;
    Ok((classifier_marginal(clf.clone()), clf))
}

/// Estimate V(x,y) = f1(y|x)/f2(y|x) by classifying train against test on
/// the concatenated (x, y) feature.
pub fn estimate_conditional_ratio(
    fit_train: &LabeledSample,
    fit_test: &LabeledSample,
    kind: ClassifierKind,
    config: &FitConfig,
    g: MarginalFn,
) -> Result<(ConditionalFn, ProbClassifier), FitError> {
    let (xy, labels) = stack_joint(fit_train, fit_test);
    let clf = classifier::fit(kind, &xy, &labels, config)?;
    Ok((classifier_conditional(clf.clone(), g), clf))
}

/// Exact g and V for a simulation model, in closed form.
pub fn oracle_ratio(spec: &ModelSpec) -> RatioModel {
    let p = spec.p;
    let g: MarginalFn = match spec.model {
        // mean shift with known covariance: exp(mu' Sigma^-1 x - quad/2)
        Model::A | Model::B | Model::C => {
            let w = spec.sigma_inv_mu();
            let quad = spec.mu_quad_form();
            Arc::new(move |x: &[f64]| {
                let dot: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum();
                (dot - 0.5 * quad).exp()
            })
        }
        // N(0, 2I) over N(0, I)
        Model::D => Arc::new(move |x: &[f64]| {
            let sq: f64 = x.iter().map(|v| v * v).sum();
            0.5f64.powf(p as f64 / 2.0) * (sq / 4.0).exp()
        }),
    };

    let spec_v = spec.clone();
    let v: ConditionalFn = match (spec.model, spec.hypothesis) {
        // identical conditionals
        (Model::A | Model::B | Model::D, Hypothesis::Null) => Arc::new(|_, _| 1.0),
        (Model::A, Hypothesis::Alt) => Arc::new(move |x: &[f64], y: f64| {
            let r = spec_v.regression(x);
            let u1 = y - spec_v.alphas.0 - r;
            let u2 = y - spec_v.alphas.1 - r;
            (0.5 * (u2 * u2 - u1 * u1)).exp()
        }),
        (Model::B, Hypothesis::Alt) => Arc::new(move |x: &[f64], y: f64| {
            let r = spec_v.regression(x);
            let u1 = y - spec_v.alphas.0 - r;
            let u2 = y - spec_v.alphas.1 - r;
            // t(5) density ratio: the normalizing constants cancel
            ((1.0 + u2 * u2 / 5.0) / (1.0 + u1 * u1 / 5.0)).powi(3)
        }),
        (Model::C, hyp) => Arc::new(move |x: &[f64], y: f64| {
            // heteroskedastic noise in both populations
            let u = y - spec_v.regression(x);
            let s1_sq = 4.0 / (1.0 + x[0] * x[0]);
            let s2_sq = match hyp {
                Hypothesis::Null => s1_sq,
                Hypothesis::Alt => 1.0 / (1.0 + x[0] * x[0]),
            };
            (s2_sq / s1_sq).sqrt() * (0.5 * u * u * (1.0 / s2_sq - 1.0 / s1_sq)).exp()
        }),
        (Model::D, Hypothesis::Alt) => Arc::new(move |x: &[f64], y: f64| {
            let u = y - spec_v.regression(x);
            std::f64::consts::SQRT_2 * (-u * u / 4.0).exp()
        }),
    };

    RatioModel::new(
        Provenance::Oracle(format!("{}-{}", spec.model, spec.hypothesis)),
        g,
        v,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{FeatureTransform, ModelParams, TrainDiagnostics};
    use crate::dataset::Population;
    use crate::sim;
    use ndarray::Array1;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Normal};

    fn linear_clf(input_dim: usize, coefficients: Vec<f64>) -> ProbClassifier {
        ProbClassifier {
            kind: ClassifierKind::Ll,
            transform: FeatureTransform {
                input_dim,
                expansion: false,
                means: None,
                sds: None,
            },
            params: ModelParams::Linear { coefficients },
            diagnostics: TrainDiagnostics::default(),
        }
    }

    #[test]
    fn clip_ratio_endpoints() {
        assert_eq!(clip_ratio(0.001, CLIP_LO, CLIP_HI), 0.01);
        assert_eq!(clip_ratio(50.0, CLIP_LO, CLIP_HI), 50.0);
        assert_eq!(clip_ratio(1e6, CLIP_LO, CLIP_HI), 100.0);
    }

    #[test]
    #[should_panic]
    fn clip_ratio_rejects_bad_interval() {
        clip_ratio(1.0, 2.0, 1.0);
    }

    #[test]
    fn uninformative_eta_gives_unit_marginal() {
        let g = classifier_marginal(linear_clf(2, vec![0.0, 0.0, 0.0]));
        assert_eq!(g(&[1.0, -4.0]), 1.0);
    }

    #[test]
    fn marginal_follows_the_odds_formula() {
        // eta = 0.8 everywhere -> g = 0.25
        let logit = (0.8f64 / 0.2).ln();
        let g = classifier_marginal(linear_clf(1, vec![logit, 0.0]));
        assert!((g(&[3.0]) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn unit_joint_and_marginal_give_unit_conditional() {
        let g: MarginalFn = Arc::new(|_| 1.0);
        let v = classifier_conditional(linear_clf(3, vec![0.0; 4]), g);
        assert_eq!(v(&[0.5, 1.5], 2.0), 1.0);
    }

    #[test]
    fn oracle_model_a_closed_forms() {
        let spec = ModelSpec::new(Model::A, Hypothesis::Null, 7);
        let oracle = oracle_ratio(&spec);
        // g(0) = exp(-||mu||^2 / 2) with ||mu||^2 = 4
        assert!((oracle.g(&[0.0; 5]) - (-2.0f64).exp()).abs() < 1e-12);
        assert!((oracle.g(&[0.0; 5]) - 0.135_335_283_236_612_7).abs() < 1e-12);
        // V identically 1 under the null
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            assert_eq!(oracle.v(&x, rng.random::<f64>()), 1.0);
        }
    }

    #[test]
    fn oracle_model_a_alt_boundary_point() {
        let spec = ModelSpec::new(Model::A, Hypothesis::Alt, 7);
        let oracle = oracle_ratio(&spec);
        // densities cross where the residual sits halfway between intercepts
        let v = oracle.v(&[0.0; 5], 0.25);
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_model_d_marginal_at_origin() {
        for p in [2usize, 5] {
            let spec = ModelSpec::with_dim(Model::D, Hypothesis::Null, p, p, 7);
            let oracle = oracle_ratio(&spec);
            let expected = (1.0 / std::f64::consts::SQRT_2).powi(p as i32);
            assert!((oracle.g(&vec![0.0; p]) - expected).abs() < 1e-12, "p={p}");
        }
    }

    #[test]
    fn oracle_marginals_have_unit_mean_under_p1() {
        // E_{P1}[g(X)] = 1 for every model; 3-sigma Monte Carlo band
        for model in [Model::A, Model::B, Model::C, Model::D] {
            let spec = ModelSpec::new(model, Hypothesis::Null, 3);
            let oracle = oracle_ratio(&spec);
            let n = 100_000;
            let mut rng = ChaCha20Rng::seed_from_u64(9);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let x = sim::draw_train_covariate(&spec, &mut rng);
                let g = oracle.g(&x);
                sum += g;
                sum_sq += g * g;
            }
            let mean = sum / n as f64;
            let var = (sum_sq / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - 1.0).abs() < 3.0 * se,
                "{model:?}: mean {mean}, se {se}"
            );
        }
    }

    #[test]
    fn oracle_inverse_conditional_has_unit_mean_under_h1() {
        // E[1/V(X,Y)] = 1 when X ~ P1 and Y|X ~ f1
        for model in [Model::A, Model::B, Model::C, Model::D] {
            let spec = ModelSpec::new(model, Hypothesis::Alt, 3);
            let oracle = oracle_ratio(&spec);
            let n = 100_000;
            let mut rng = ChaCha20Rng::seed_from_u64(10);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let x = sim::draw_train_covariate(&spec, &mut rng);
                let y = sim::draw_response(&spec, Population::Train, &x, &mut rng);
                let w = 1.0 / oracle.v(&x, y);
                sum += w;
                sum_sq += w * w;
            }
            let mean = sum / n as f64;
            let var = (sum_sq / n as f64 - mean * mean).max(0.0);
            let se = (var / n as f64).sqrt();
            assert!(
                (mean - 1.0).abs() < 3.0 * se,
                "{model:?}: mean {mean}, se {se}"
            );
        }
    }

    #[test]
    fn estimated_marginal_tracks_oracle_ranks_on_model_a() {
        // rank correlation > 0.95 between estimated and oracle g on held-out
        // points; constants cancel downstream so ranks are what matter
        let n = 10_000;
        let spec = ModelSpec::new(Model::A, Hypothesis::Null, 5);
        let oracle = oracle_ratio(&spec);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |shift: bool| -> LabeledSample {
            let mut feats = Array2::zeros((n, 5));
            for i in 0..n {
                for j in 0..5 {
                    feats[(i, j)] = normal.sample(&mut rng) + if shift { spec.mu[j] } else { 0.0 };
                }
            }
            LabeledSample::new(
                feats,
                Array1::zeros(n),
                if shift { Population::Test } else { Population::Train },
            )
            .unwrap()
        };
        let train = draw(false);
        let test = draw(true);
        let (g_hat, _) =
            estimate_marginal_ratio(&train, &test, ClassifierKind::Ll, &FitConfig::default())
                .unwrap();

        let held: Vec<Vec<f64>> = (0..2000)
            .map(|_| (0..5).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let est: Vec<f64> = held.iter().map(|x| g_hat(x)).collect();
        let tru: Vec<f64> = held.iter().map(|x| oracle.g(x)).collect();
        let rho = spearman(&est, &tru);
        assert!(rho > 0.95, "rank correlation {rho}");
    }

    #[test]
    fn model_a_marginal_estimate_near_truth_at_origin() {
        // calibrate the constant at a reference point, then compare g_hat(0)
        // to exp(-2) within 30%
        let n = 10_000;
        let spec = ModelSpec::new(Model::A, Hypothesis::Null, 5);
        let oracle = oracle_ratio(&spec);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |shift: bool| -> LabeledSample {
            let mut feats = Array2::zeros((n, 5));
            for i in 0..n {
                for j in 0..5 {
                    feats[(i, j)] = normal.sample(&mut rng) + if shift { spec.mu[j] } else { 0.0 };
                }
            }
            LabeledSample::new(
                feats,
                Array1::zeros(n),
                if shift { Population::Test } else { Population::Train },
            )
            .unwrap()
        };
        let train = draw(false);
        let test = draw(true);
        let (g_hat, _) =
            estimate_marginal_ratio(&train, &test, ClassifierKind::Ll, &FitConfig::default())
                .unwrap();
        let reference = [0.5, 0.5, -0.5, -0.5, 0.0];
        let scale = oracle.g(&reference) / g_hat(&reference);
        let est = g_hat(&[0.0; 5]) * scale;
        let truth = (-2.0f64).exp();
        assert!(
            (est - truth).abs() / truth < 0.3,
            "calibrated estimate {est} vs {truth}"
        );
    }

    #[test]
    fn model_a_h1_conditional_estimate_near_the_crossing_point() {
        // where the two conditional densities cross, the true ratio is 1;
        // the estimate should land within 30% there
        let n = 10_000;
        let spec = ModelSpec::new(Model::A, Hypothesis::Alt, 5);
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |test_pop: bool| -> LabeledSample {
            let mut feats = Array2::zeros((n, 5));
            let mut resp = Array1::zeros(n);
            for i in 0..n {
                for j in 0..5 {
                    feats[(i, j)] =
                        normal.sample(&mut rng) + if test_pop { spec.mu[j] } else { 0.0 };
                }
                let row: Vec<f64> = feats.row(i).to_vec();
                let alpha = if test_pop { spec.alphas.1 } else { spec.alphas.0 };
                resp[i] = alpha + spec.regression(&row) + normal.sample(&mut rng);
            }
            LabeledSample::new(
                feats,
                resp,
                if test_pop { Population::Test } else { Population::Train },
            )
            .unwrap()
        };
        let train = draw(false);
        let test = draw(true);
        let cfg = FitConfig::default();
        let (g_hat, _) = estimate_marginal_ratio(&train, &test, ClassifierKind::Ll, &cfg).unwrap();
        let (v_hat, _) =
            estimate_conditional_ratio(&train, &test, ClassifierKind::Ll, &cfg, g_hat).unwrap();
        let v = v_hat(&[0.0; 5], 0.25);
        assert!((v - 1.0).abs() < 0.3, "estimate at the crossing point: {v}");
    }

    #[test]
    fn model_a_h0_conditional_estimate_is_near_constant() {
        // under H0 the true V is constant; the estimate should sit near one
        // positive constant on held-out points
        let n = 10_000;
        let spec = ModelSpec::new(Model::A, Hypothesis::Null, 5);
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut draw = |shift: bool| -> LabeledSample {
            let mut feats = Array2::zeros((n, 5));
            let mut resp = Array1::zeros(n);
            for i in 0..n {
                for j in 0..5 {
                    feats[(i, j)] = normal.sample(&mut rng) + if shift { spec.mu[j] } else { 0.0 };
                }
                let row: Vec<f64> = feats.row(i).to_vec();
                resp[i] = spec.regression(&row) + normal.sample(&mut rng);
            }
            LabeledSample::new(
                feats,
                resp,
                if shift { Population::Test } else { Population::Train },
            )
            .unwrap()
        };
        let train = draw(false);
        let test = draw(true);
        let cfg = FitConfig::default();
        let (g_hat, _) = estimate_marginal_ratio(&train, &test, ClassifierKind::Ll, &cfg).unwrap();
        let (v_hat, _) =
            estimate_conditional_ratio(&train, &test, ClassifierKind::Ll, &cfg, g_hat).unwrap();

        let mut vals: Vec<f64> = (0..2000)
            .map(|_| {
                let x: Vec<f64> = (0..5).map(|_| normal.sample(&mut rng)).collect();
                let y = spec.regression(&x) + normal.sample(&mut rng);
                v_hat(&x, y)
            })
            .collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let c = vals[vals.len() / 2]; // median as the best constant
        let med_rel_dev = {
            let mut devs: Vec<f64> = vals.iter().map(|v| (v - c).abs() / c).collect();
            devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            devs[devs.len() / 2]
        };
        assert!(med_rel_dev < 0.2, "median relative deviation {med_rel_dev}");
    }

    #[test]
    fn conditional_composition_is_joint_times_marginal() {
        let n = 400;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut mk = |pop| {
            let feats = Array2::from_shape_simple_fn((n, 2), || normal.sample(&mut rng));
            let resp = Array1::from_shape_simple_fn(n, || normal.sample(&mut rng));
            LabeledSample::new(feats, resp, pop).unwrap()
        };
        let train = mk(Population::Train);
        let test = mk(Population::Test);
        let cfg = FitConfig::default();
        let (g_hat, _) = estimate_marginal_ratio(&train, &test, ClassifierKind::Ll, &cfg).unwrap();
        let (v_hat, joint_clf) =
            estimate_conditional_ratio(&train, &test, ClassifierKind::Ll, &cfg, g_hat.clone())
                .unwrap();
        for _ in 0..50 {
            let x = [normal.sample(&mut rng), normal.sample(&mut rng)];
            let y = normal.sample(&mut rng);
            let eta = joint_clf.predict_proba(&[x[0], x[1], y]).unwrap();
            let expected = eta / (1.0 - eta) * g_hat(&x);
            assert_eq!(v_hat(&x, y), expected);
        }
    }

    #[test]
    fn ratios_stay_positive_and_clipped() {
        let spec = ModelSpec::new(Model::B, Hypothesis::Alt, 5);
        let oracle = oracle_ratio(&spec);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..100_000 {
            let x: Vec<f64> = (0..5).map(|_| rng.random::<f64>() * 6.0 - 3.0).collect();
            let y = rng.random::<f64>() * 20.0 - 10.0;
            let g = oracle.g(&x);
            let v = oracle.v(&x, y);
            assert!(g > 0.0 && g.is_finite());
            assert!(v > 0.0 && v.is_finite());
            let c = clip_ratio(g, CLIP_LO, CLIP_HI);
            assert!((CLIP_LO..=CLIP_HI).contains(&c));
        }
    }

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        fn ranks(v: &[f64]) -> Vec<f64> {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            let mut r = vec![0.0; v.len()];
            for (rank, &i) in idx.iter().enumerate() {
                r[i] = rank as f64;
            }
            r
        }
        let ra = ranks(a);
        let rb = ranks(b);
        let n = ra.len() as f64;
        let ma = ra.iter().sum::<f64>() / n;
        let mb = rb.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut da = 0.0;
        let mut db = 0.0;
        for (x, y) in ra.iter().zip(&rb) {
            num += (x - ma) * (y - mb);
            da += (x - ma) * (x - ma);
            db += (y - mb) * (y - mb);
        }
        num / (da.sqrt() * db.sqrt())
    }
}
