//! Covariate density-ratio estimation via a probabilistic classifier.
//!
//! A classifier is trained to distinguish test covariates (label 1) from
//! training covariates (label 0); the ratio estimate is the clipped odds
//! `p̂/(1 − p̂)` times the class-balance correction `n_train / n_test`.
//! The correction only matters cosmetically — the conformal p-value
//! normalizes away constant factors — but keeps the ratio on the density
//! scale.

use thiserror::Error;

use crate::forest::{ForestConfig, RandomForest};
use crate::linalg::{cholesky_solve, dot};

#[derive(Debug, Error)]
pub enum RatioError {
    #[error("both covariate samples must be non-empty")]
    EmptySample,
    #[error("covariate dimensions differ: train {train} vs test {test}")]
    DimensionMismatch { train: usize, test: usize },
    #[error("probability clip bounds ({0}, {1}) must satisfy 0 < lo < hi < 1")]
    InvalidClip(f64, f64),
}

/// A positive, `t`-independent reweighting of covariate vectors, as used by
/// the weighted conformal p-value. Implemented by [`DensityRatioModel`] and
/// by any closure `Fn(&[f64]) -> f64`.
pub trait ShiftWeight {
    fn weight(&self, x: &[f64]) -> f64;
}

impl<F> ShiftWeight for F
where
    F: Fn(&[f64]) -> f64,
{
    fn weight(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone)]
enum RatioClassifier {
    Forest(RandomForest),
    Logistic(LogisticModel),
}

/// Classifier-backed estimate of `ω(x) = f_X^test(x) / f_X(x)`.
#[derive(Debug, Clone)]
pub struct DensityRatioModel {
    classifier: RatioClassifier,
    clip: (f64, f64),
    correction: f64,
}

impl DensityRatioModel {
    /// Raw classifier probability that `x` belongs to the test sample.
    pub fn prob(&self, x: &[f64]) -> f64 {
        match &self.classifier {
            RatioClassifier::Forest(f) => f.prob(x),
            RatioClassifier::Logistic(m) => m.prob(x),
        }
    }

    /// Clipped-odds ratio estimate, always finite and positive:
    /// `correction × q / (1 − q)` with `q = clamp(p̂(x), lo, hi)`.
    pub fn ratio(&self, x: &[f64]) -> f64 {
        let q = self.prob(x).clamp(self.clip.0, self.clip.1);
        self.correction * q / (1.0 - q)
    }

    pub fn correction(&self) -> f64 {
        self.correction
    }
}

impl ShiftWeight for DensityRatioModel {
    fn weight(&self, x: &[f64]) -> f64 {
        self.ratio(x)
    }
}

fn validate(train: &[Vec<f64>], test: &[Vec<f64>], clip: (f64, f64)) -> Result<(), RatioError> {
    if train.is_empty() || test.is_empty() {
        return Err(RatioError::EmptySample);
    }
    if train[0].len() != test[0].len() {
        return Err(RatioError::DimensionMismatch {
            train: train[0].len(),
            test: test[0].len(),
        });
    }
    if !(clip.0 > 0.0 && clip.0 < clip.1 && clip.1 < 1.0) {
        return Err(RatioError::InvalidClip(clip.0, clip.1));
    }
    Ok(())
}

/// Forest settings for the ratio classifier. The probabilities are read
/// back on the classifier's own training points, so leaves are kept at
/// eight samples minimum to stop class fractions from saturating there.
fn ratio_forest_config() -> ForestConfig {
    ForestConfig {
        min_leaf: 8,
        ..ForestConfig::default()
    }
}

fn stack<'a>(train: &'a [Vec<f64>], test: &'a [Vec<f64>]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut xs = Vec::with_capacity(train.len() + test.len());
    let mut labels = Vec::with_capacity(train.len() + test.len());
    for row in train {
        xs.push(row.clone());
        labels.push(false);
    }
    for row in test {
        xs.push(row.clone());
        labels.push(true);
    }
    (xs, labels)
}

/// Fit the random-forest density-ratio model. Deterministic given `seed`.
pub fn fit_ratio(
    train: &[Vec<f64>],
    test: &[Vec<f64>],
    seed: u64,
    clip: (f64, f64),
) -> Result<DensityRatioModel, RatioError> {
    validate(train, test, clip)?;
    let (xs, labels) = stack(train, test);
    let forest = RandomForest::fit(&xs, &labels, &ratio_forest_config(), seed);
    Ok(DensityRatioModel {
        classifier: RatioClassifier::Forest(forest),
        clip,
        correction: train.len() as f64 / test.len() as f64,
    })
}

/// Fit the ridge-logistic baseline behind the same interface. Deterministic
/// with no randomness at all; handy as a smooth reference in tests.
pub fn fit_ratio_logistic(
    train: &[Vec<f64>],
    test: &[Vec<f64>],
    clip: (f64, f64),
) -> Result<DensityRatioModel, RatioError> {
    validate(train, test, clip)?;
    let (xs, labels) = stack(train, test);
    let model = LogisticModel::fit(&xs, &labels, 1e-3);
    Ok(DensityRatioModel {
        classifier: RatioClassifier::Logistic(model),
        clip,
        correction: train.len() as f64 / test.len() as f64,
    })
}

/// Ridge-regularized logistic regression fit by Newton iterations.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LogisticModel {
    pub fn fit(xs: &[Vec<f64>], labels: &[bool], ridge: f64) -> Self {
        let n = xs.len();
        let p = xs[0].len();
        let d = p + 1;
        let mut beta = vec![0.0; d];
        for _ in 0..30 {
            let mut hess = vec![vec![0.0; d]; d];
            let mut grad = vec![0.0; d];
            for (x, &y) in xs.iter().zip(labels) {
                let eta = beta[0] + dot(x, &beta[1..]);
                let pr = sigmoid(eta);
                let resid = (if y { 1.0 } else { 0.0 }) - pr;
                let wgt = (pr * (1.0 - pr)).max(1e-10);
                let mut row = Vec::with_capacity(d);
                row.push(1.0);
                row.extend_from_slice(x);
                for i in 0..d {
                    grad[i] += resid * row[i];
                    for j in 0..=i {
                        hess[i][j] += wgt * row[i] * row[j];
                    }
                }
            }
            // ridge on the coefficients, not the intercept
            for i in 1..d {
                grad[i] -= ridge * n as f64 * beta[i];
                hess[i][i] += ridge * n as f64;
            }
            for i in 0..d {
                for j in (i + 1)..d {
                    hess[i][j] = hess[j][i];
                }
            }
            let step = match cholesky_solve(&hess, &grad, 0.0) {
                Some(s) => s,
                None => break,
            };
            let mut max_move = 0.0_f64;
            for i in 0..d {
                beta[i] += step[i];
                max_move = max_move.max(step[i].abs());
            }
            if max_move < 1e-10 {
                break;
            }
        }
        Self {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        }
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.intercept + dot(x, &self.coefficients))
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    fn uniform_sample(n: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(seed);
        (0..n).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect()
    }

    #[test]
    fn clipping_bounds_the_odds() {
        let model = DensityRatioModel {
            classifier: RatioClassifier::Logistic(LogisticModel {
                intercept: 50.0, // saturates the sigmoid
                coefficients: vec![0.0],
            }),
            clip: (0.01, 0.99),
            correction: 1.0,
        };
        assert!((model.ratio(&[0.0]) - 99.0).abs() < 1e-9);
        let model_lo = DensityRatioModel {
            classifier: RatioClassifier::Logistic(LogisticModel {
                intercept: -50.0,
                coefficients: vec![0.0],
            }),
            clip: (0.01, 0.99),
            correction: 1.0,
        };
        assert!((model_lo.ratio(&[0.0]) - 1.0 / 99.0).abs() < 1e-9);
    }

    #[test]
    fn even_odds_gives_unit_ratio() {
        let model = DensityRatioModel {
            classifier: RatioClassifier::Logistic(LogisticModel {
                intercept: 0.0,
                coefficients: vec![0.0],
            }),
            clip: (0.01, 0.99),
            correction: 1.0,
        };
        assert!((model.ratio(&[0.3]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_samples_give_ratio_near_one() {
        // literally the same sample on both sides: the classes are
        // indistinguishable and only bootstrap noise moves p-hat off 1/2
        let sample = uniform_sample(500, 1);
        let model = fit_ratio(&sample, &sample, 9, (0.01, 0.99)).unwrap();
        let eval = uniform_sample(50, 3);
        for x in &eval {
            let r = model.ratio(x);
            assert!((0.5..=2.0).contains(&r), "ratio {r} outside [0.5, 2]");
        }
    }

    #[test]
    fn separable_samples_hit_the_clip_bound() {
        let train: Vec<Vec<f64>> = (0..100).map(|i| vec![-1.0 - i as f64 / 100.0]).collect();
        let test: Vec<Vec<f64>> = (0..100).map(|i| vec![1.0 + i as f64 / 100.0]).collect();
        let model = fit_ratio(&train, &test, 4, (0.01, 0.99)).unwrap();
        assert!((model.ratio(&[1.5]) - 99.0).abs() < 1e-9);
    }

    #[test]
    fn fit_is_deterministic() {
        let train = uniform_sample(200, 5);
        let test = uniform_sample(150, 6);
        let m1 = fit_ratio(&train, &test, 42, (0.01, 0.99)).unwrap();
        let m2 = fit_ratio(&train, &test, 42, (0.01, 0.99)).unwrap();
        for x in uniform_sample(30, 7) {
            assert_eq!(m1.ratio(&x), m2.ratio(&x));
        }
    }

    #[test]
    fn correction_reflects_class_sizes() {
        let train = uniform_sample(300, 8);
        let test = uniform_sample(100, 9);
        let model = fit_ratio(&train, &test, 1, (0.01, 0.99)).unwrap();
        assert!((model.correction() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let train = vec![vec![0.0, 1.0]];
        let test = vec![vec![0.0]];
        assert!(matches!(
            fit_ratio(&train, &test, 0, (0.01, 0.99)),
            Err(RatioError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn logistic_learns_a_direction() {
        // class 1 shifted right along x1
        let mut xs = uniform_sample(300, 10);
        let shifted: Vec<Vec<f64>> = uniform_sample(300, 11)
            .into_iter()
            .map(|mut v| {
                v[0] += 0.5;
                v
            })
            .collect();
        xs.extend(shifted.iter().cloned());
        let labels: Vec<bool> = (0..600).map(|i| i >= 300).collect();
        let m = LogisticModel::fit(&xs, &labels, 1e-3);
        assert!(m.coefficients[0] > 0.5);
        assert!(m.prob(&[1.4, 0.5]) > m.prob(&[0.1, 0.5]));
    }
}
