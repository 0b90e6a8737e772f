//! Nadaraya–Watson kernel weights and the localized Kaplan–Meier estimator
//! of conditional censoring / event-time distributions.
//!
//! The estimator behind both roles is the product-limit form
//!
//! ```text
//! Ĝ(t | x) = 1 − ∏_j { 1 − B_j(x) / Σ_{k: Y_k ≥ Y_j} B_k(x) }^{η_j(t)}
//! ```
//!
//! where `B_j(x)` are normalized kernel weights and `η_j(t)` selects the
//! jump observations with `Y_j ≤ t`: censored subjects for the censoring
//! distribution `G`, events for the event-time distribution `F`.

use thiserror::Error;

use crate::data::SurvivalDataset;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("bandwidth {0} must be positive and finite")]
    InvalidBandwidth(f64),
    #[error("reference sample must be non-empty")]
    EmptyReference,
    #[error("query dimension {got} does not match reference dimension {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("all kernel weights vanished (no reference point within bandwidth)")]
    DegenerateKernel,
}

/// Kernel shape used for the Nadaraya–Watson weights. Multivariate inputs
/// use the product kernel over coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Gaussian,
    Epanechnikov,
}

impl Kernel {
    fn eval_1d(self, u: f64) -> f64 {
        match self {
            // unnormalized; constants cancel in the weight normalization
            Kernel::Gaussian => (-0.5 * u * u).exp(),
            Kernel::Epanechnikov => (1.0 - u * u).max(0.0),
        }
    }

    fn eval(self, x: &[f64], r: &[f64], h: f64) -> f64 {
        let mut k = 1.0;
        for (a, b) in x.iter().zip(r) {
            k *= self.eval_1d((a - b) / h);
            if k == 0.0 {
                break;
            }
        }
        k
    }
}

/// Kernel shape and bandwidth `h_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub bandwidth: f64,
    pub kernel: Kernel,
}

impl KernelSpec {
    pub fn new(bandwidth: f64, kernel: Kernel) -> Result<Self, KernelError> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(KernelError::InvalidBandwidth(bandwidth));
        }
        Ok(Self { bandwidth, kernel })
    }

    pub fn gaussian(bandwidth: f64) -> Result<Self, KernelError> {
        Self::new(bandwidth, Kernel::Gaussian)
    }
}

/// Normalized Nadaraya–Watson weights of `x` against a reference sample:
/// `B_k(x) = K((x − x_k)/h) / Σ_i K((x − x_i)/h)`.
///
/// Fails with [`KernelError::DegenerateKernel`] when every raw kernel value
/// underflows to zero; callers fall back to uniform weights.
pub fn nw_weights(
    x: &[f64],
    reference: &[Vec<f64>],
    spec: &KernelSpec,
) -> Result<Vec<f64>, KernelError> {
    if reference.is_empty() {
        return Err(KernelError::EmptyReference);
    }
    let dim = reference[0].len();
    if x.len() != dim {
        return Err(KernelError::DimensionMismatch {
            got: x.len(),
            expected: dim,
        });
    }
    let raw: Vec<f64> = reference
        .iter()
        .map(|r| spec.kernel.eval(x, r, spec.bandwidth))
        .collect();
    let sum: f64 = raw.iter().sum();
    if sum <= 0.0 || !sum.is_finite() {
        return Err(KernelError::DegenerateKernel);
    }
    Ok(raw.into_iter().map(|k| k / sum).collect())
}

/// The effective-sample-size bandwidth rule. `n_effective` is the count of
/// observations informative for the target distribution: censored subjects
/// for `G`, uncensored subjects for `F`.
pub fn bandwidth_rule(n_effective: usize) -> f64 {
    if n_effective <= 200 {
        0.50
    } else if n_effective <= 400 {
        0.35
    } else {
        0.25
    }
}

/// A conditional cdf `t ↦ P(· ≤ t | x)` evaluated pointwise or along a grid.
///
/// Implemented by [`LocalizedKaplanMeier`] and, via the blanket impl, by any
/// closure `Fn(f64, &[f64]) -> f64` — which is how analytically known
/// censoring distributions are plugged into the conformal engine in tests.
pub trait ConditionalCdf {
    fn cdf(&self, t: f64, x: &[f64]) -> f64;

    fn cdf_curve(&self, ts: &[f64], x: &[f64]) -> Vec<f64> {
        ts.iter().map(|&t| self.cdf(t, x)).collect()
    }
}

impl<F> ConditionalCdf for F
where
    F: Fn(f64, &[f64]) -> f64,
{
    fn cdf(&self, t: f64, x: &[f64]) -> f64 {
        self(t, x)
    }
}

/// Which observations carry the product-limit jumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JumpOn {
    Censored,
    Event,
}

struct RefPoint {
    time: f64,
    event: bool,
}

/// Localized Kaplan–Meier estimator of a conditional distribution function.
///
/// Covariates are standardized to unit sample standard deviation before
/// kernel evaluation so one bandwidth serves all coordinates. The evaluated
/// cdf is a right-continuous non-decreasing step function of `t`, truncated
/// at `cap` so downstream inverse-probability weights stay finite.
pub struct LocalizedKaplanMeier {
    reference: Vec<RefPoint>,
    scaled_covariates: Vec<Vec<f64>>,
    scales: Vec<f64>,
    spec: KernelSpec,
    cap: f64,
    jump_on: JumpOn,
    /// Indices sorted by time ascending; events precede censorings at ties.
    order: Vec<usize>,
    /// Start position of each tie group in `order`, for risk-set sums.
    group_start: Vec<usize>,
}

impl LocalizedKaplanMeier {
    /// Estimator of the conditional censoring distribution `G(t | x)`:
    /// jumps at censored observation times.
    pub fn censoring(
        reference: &SurvivalDataset,
        spec: KernelSpec,
        cap: f64,
    ) -> Result<Self, KernelError> {
        Self::build(reference, spec, cap, JumpOn::Censored)
    }

    /// Estimator of the conditional event-time distribution `F(t | x)`:
    /// same product-limit form with the event/censoring roles exchanged.
    pub fn event(
        reference: &SurvivalDataset,
        spec: KernelSpec,
        cap: f64,
    ) -> Result<Self, KernelError> {
        Self::build(reference, spec, cap, JumpOn::Event)
    }

    fn build(
        reference: &SurvivalDataset,
        spec: KernelSpec,
        cap: f64,
        jump_on: JumpOn,
    ) -> Result<Self, KernelError> {
        if !(spec.bandwidth.is_finite() && spec.bandwidth > 0.0) {
            return Err(KernelError::InvalidBandwidth(spec.bandwidth));
        }
        let scales = column_scales(reference);
        let scaled_covariates: Vec<Vec<f64>> = reference
            .subjects()
            .iter()
            .map(|s| scale_row(&s.covariates, &scales))
            .collect();
        let reference: Vec<RefPoint> = reference
            .subjects()
            .iter()
            .map(|s| RefPoint {
                time: s.observed_time,
                event: s.event,
            })
            .collect();
        let mut order: Vec<usize> = (0..reference.len()).collect();
        order.sort_by(|&a, &b| {
            reference[a]
                .time
                .partial_cmp(&reference[b].time)
                .unwrap()
                .then(reference[b].event.cmp(&reference[a].event))
                .then(a.cmp(&b))
        });
        let mut group_start = vec![0; order.len()];
        for pos in 1..order.len() {
            group_start[pos] = if reference[order[pos]].time == reference[order[pos - 1]].time {
                group_start[pos - 1]
            } else {
                pos
            };
        }
        Ok(Self {
            reference,
            scaled_covariates,
            scales,
            spec,
            cap,
            jump_on,
            order,
            group_start,
        })
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn bandwidth(&self) -> f64 {
        self.spec.bandwidth
    }

    /// Precompute the step function `t ↦ cdf(t | x)` for one covariate
    /// vector, for cheap evaluation over many candidate times.
    pub fn curve(&self, x: &[f64]) -> StepCdf {
        let scaled = scale_row(x, &self.scales);
        // Epanechnikov can strand a query point with no neighbor in range;
        // per contract the caller falls back to uniform weights.
        let weights = match nw_weights(&scaled, &self.scaled_covariates, &self.spec) {
            Ok(w) => w,
            Err(KernelError::DegenerateKernel) => {
                vec![1.0 / self.reference.len() as f64; self.reference.len()]
            }
            Err(e) => panic!("kernel evaluation failed: {e}"),
        };
        // suffix[pos] = total weight of reference points with sort position >= pos
        let n = self.order.len();
        let mut suffix = vec![0.0; n + 1];
        for pos in (0..n).rev() {
            suffix[pos] = suffix[pos + 1] + weights[self.order[pos]];
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        let mut survival = 1.0;
        let mut pos = 0;
        while pos < n {
            let group = self.group_start[pos];
            let t = self.reference[self.order[pos]].time;
            let mut jumped = false;
            let mut p = pos;
            while p < n && self.reference[self.order[p]].time == t {
                let subj = &self.reference[self.order[p]];
                let is_jump = match self.jump_on {
                    JumpOn::Censored => !subj.event,
                    JumpOn::Event => subj.event,
                };
                if is_jump {
                    let risk = suffix[group];
                    if risk > 0.0 {
                        survival *= 1.0 - weights[self.order[p]] / risk;
                    }
                    jumped = true;
                }
                p += 1;
            }
            if jumped {
                times.push(t);
                values.push((1.0 - survival).clamp(0.0, 1.0));
            }
            pos = p;
        }
        StepCdf {
            times,
            values,
            cap: self.cap,
        }
    }

    /// `min(Ĝ(t | x), cap)`; zero below the smallest jump time.
    pub fn cdf(&self, t: f64, x: &[f64]) -> f64 {
        self.curve(x).eval(t)
    }
}

impl ConditionalCdf for LocalizedKaplanMeier {
    fn cdf(&self, t: f64, x: &[f64]) -> f64 {
        LocalizedKaplanMeier::cdf(self, t, x)
    }

    fn cdf_curve(&self, ts: &[f64], x: &[f64]) -> Vec<f64> {
        let curve = self.curve(x);
        ts.iter().map(|&t| curve.eval(t)).collect()
    }
}

/// A right-continuous step function with jump times and post-jump values,
/// truncated at `cap`.
pub struct StepCdf {
    times: Vec<f64>,
    values: Vec<f64>,
    cap: f64,
}

impl StepCdf {
    pub fn eval(&self, t: f64) -> f64 {
        // rightmost jump time <= t
        let idx = self.times.partition_point(|&jt| jt <= t);
        if idx == 0 {
            0.0
        } else {
            self.values[idx - 1].min(self.cap)
        }
    }
}

/// Per-column sample standard deviations (n−1 denominator); zero-variance
/// columns get scale 1 so they simply drop out of the kernel distance.
fn column_scales(data: &SurvivalDataset) -> Vec<f64> {
    let n = data.len();
    let p = data.dim();
    let mut scales = vec![1.0; p];
    if n < 2 {
        return scales;
    }
    for j in 0..p {
        let mean = data.subjects().iter().map(|s| s.covariates[j]).sum::<f64>() / n as f64;
        let ss = data
            .subjects()
            .iter()
            .map(|s| {
                let d = s.covariates[j] - mean;
                d * d
            })
            .sum::<f64>();
        let sd = (ss / (n - 1) as f64).sqrt();
        if sd.is_finite() && sd > 0.0 {
            scales[j] = sd;
        }
    }
    scales
}

fn scale_row(x: &[f64], scales: &[f64]) -> Vec<f64> {
    x.iter().zip(scales).map(|(v, s)| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Subject;

    fn dataset(ys: &[f64], events: &[bool]) -> SurvivalDataset {
        let subjects = ys
            .iter()
            .zip(events)
            .map(|(&y, &e)| Subject::new(vec![0.5], y, e))
            .collect();
        SurvivalDataset::from_subjects(subjects).unwrap()
    }

    #[test]
    fn nw_single_reference_gets_full_weight() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let w = nw_weights(&[0.3], &[vec![0.3]], &spec).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn nw_equidistant_references_split_evenly() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let w = nw_weights(&[0.0], &[vec![-1.0], vec![1.0]], &spec).unwrap();
        assert!((w[0] - 0.5).abs() < 1e-15);
        assert!((w[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn nw_gaussian_matches_direct_evaluation() {
        // raw kernels {1, e^{-1/2}} at distance {0, 1} with h = 1
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let w = nw_weights(&[0.0], &[vec![0.0], vec![1.0]], &spec).unwrap();
        let k1 = (-0.5_f64).exp();
        let expect0 = 1.0 / (1.0 + k1);
        assert!((w[0] - expect0).abs() < 1e-12);
        assert!((w[0] - 0.6225).abs() < 1e-4);
        assert!((w[1] - 0.3775).abs() < 1e-4);
    }

    #[test]
    fn nw_epanechnikov_out_of_range_is_degenerate() {
        let spec = KernelSpec::new(0.5, Kernel::Epanechnikov).unwrap();
        let res = nw_weights(&[10.0], &[vec![0.0], vec![1.0]], &spec);
        assert!(matches!(res, Err(KernelError::DegenerateKernel)));
    }

    #[test]
    fn bandwidth_rule_steps() {
        assert_eq!(bandwidth_rule(200), 0.50);
        assert_eq!(bandwidth_rule(201), 0.35);
        assert_eq!(bandwidth_rule(400), 0.35);
        assert_eq!(bandwidth_rule(401), 0.25);
        assert_eq!(bandwidth_rule(1), 0.50);
    }

    #[test]
    fn censoring_cdf_no_censored_subjects_is_zero() {
        let data = dataset(&[1.0, 2.0, 3.0], &[true, true, true]);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let g = LocalizedKaplanMeier::censoring(&data, spec, 0.99).unwrap();
        for t in [0.5, 1.5, 10.0] {
            assert_eq!(g.cdf(t, &[0.5]), 0.0);
        }
    }

    #[test]
    fn censoring_cdf_uniform_limit_matches_hand_km() {
        // Y = {1,2,3}, delta = {0,1,0}: censored jumps at 1 and 3.
        // G(1) = 1/3, G(2) = 1/3, G(3) = 1 -> capped.
        let data = dataset(&[1.0, 2.0, 3.0], &[false, true, false]);
        let spec = KernelSpec::gaussian(1e9).unwrap();
        let g = LocalizedKaplanMeier::censoring(&data, spec, 0.99).unwrap();
        assert!((g.cdf(1.0, &[0.5]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.cdf(2.0, &[0.5]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((g.cdf(3.0, &[0.5]) - 0.99).abs() < 1e-12);
        assert_eq!(g.cdf(0.5, &[0.5]), 0.0);
    }

    #[test]
    fn event_cdf_uniform_limit_matches_hand_km() {
        // Y = {1,2,3}, delta = {1,0,1}: event jumps at 1 and 3.
        let data = dataset(&[1.0, 2.0, 3.0], &[true, false, true]);
        let spec = KernelSpec::gaussian(1e9).unwrap();
        let f = LocalizedKaplanMeier::event(&data, spec, 0.99).unwrap();
        assert!((f.cdf(1.0, &[0.5]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((f.cdf(2.9, &[0.5]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((f.cdf(3.0, &[0.5]) - 0.99).abs() < 1e-12);
    }

    #[test]
    fn event_cdf_no_events_is_zero() {
        let data = dataset(&[1.0, 2.0], &[false, false]);
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let f = LocalizedKaplanMeier::event(&data, spec, 0.99).unwrap();
        assert_eq!(f.cdf(5.0, &[0.5]), 0.0);
    }

    #[test]
    fn cdf_is_monotone_in_t() {
        let ys = [0.7, 1.3, 2.1, 2.1, 3.4, 4.0, 5.5];
        let ev = [false, true, false, true, false, false, true];
        let data = dataset(&ys, &ev);
        let spec = KernelSpec::gaussian(0.5).unwrap();
        let g = LocalizedKaplanMeier::censoring(&data, spec, 0.99).unwrap();
        let curve = g.curve(&[0.5]);
        let mut last = 0.0;
        for i in 0..60 {
            let t = i as f64 * 0.1;
            let v = curve.eval(t);
            assert!(v >= last, "cdf decreased at t={t}");
            assert!(v <= 0.99);
            last = v;
        }
    }

    #[test]
    fn closure_implements_conditional_cdf() {
        let exact = |t: f64, _x: &[f64]| 1.0 - (-t).exp();
        assert!((ConditionalCdf::cdf(&exact, 1.0, &[0.0]) - (1.0 - (-1.0_f64).exp())).abs() < 1e-15);
    }
}
