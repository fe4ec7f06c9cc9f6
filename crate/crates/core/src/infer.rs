//! Moment-inequality confidence intervals for the identified set.
//!
//! Every regime's bounds are written as `lower = max_g min_{k in g} a_k` and
//! `upper = min_g max_{k in g} a_k` over a vector of smooth components `a`.
//! The bootstrap estimates the covariance of `a`, a pretest decides whether
//! the two endpoints can be treated separately, and the interval is
//! assembled from one-sided Bonferroni (or simulated) critical values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::bounds::{
    evaluate_margins, AssumptionRegime, BoundsError, MtrSign, PeriodMargins, RegimeTag, UndefinedReason,
};
use crate::data::{Arm, PanelDataset, UnitRecord};
use crate::estimate::{ArmEstimates, EstimateError};

/// Share of undefined bootstrap replicates above which the covariance is refused.
pub const MAX_DEGENERATE_SHARE: f64 = 0.10;
/// Gaps and standard errors below this are rounding noise.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferError {
    #[error("bounds are undefined: {0}")]
    Undefined(UndefinedReason),
    #[error("{dropped} of {total} bootstrap replicates were undefined")]
    TooManyDegenerate { dropped: usize, total: usize },
    #[error("need at least 2 bootstrap replications, got {0}")]
    TooFewReplicates(usize),
    #[error("probability {0} outside (0, 1)")]
    DomainError(f64),
    #[error("alpha {0} outside (0, 0.5)")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// Inverse standard-normal CDF.
pub fn normal_quantile(p: f64) -> Result<f64, InferError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(InferError::DomainError(p));
    }
    Ok(Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p))
}

fn check_alpha(alpha: f64) -> Result<(), InferError> {
    if alpha > 0.0 && alpha < 0.5 {
        Ok(())
    } else {
        Err(InferError::InvalidAlpha(alpha))
    }
}

/// Which closed form the components decompose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    NoAssumption,
    MtrCs,
    /// Positive-correlation bounds with every survival factor positive.
    Pco,
    /// Positive-correlation bounds in the trivial `[h1 - 1, h1]` branch.
    PcoTrivial,
    MtrCsPco,
    Ates,
}

impl Layout {
    fn for_margins(m: &PeriodMargins, tag: RegimeTag) -> Layout {
        match tag {
            RegimeTag::NoAssumption => Layout::NoAssumption,
            RegimeTag::MtrCs => Layout::MtrCs,
            RegimeTag::Pco if m.pco_product.is_some() => Layout::Pco,
            RegimeTag::Pco => Layout::PcoTrivial,
            RegimeTag::MtrCsPco => Layout::MtrCsPco,
            RegimeTag::Ates => Layout::Ates,
        }
    }
}

/// Component structure shared by the point estimate and every replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentLayout {
    pub layout: Layout,
    pub sign: MtrSign,
    pub labels: Vec<&'static str>,
    /// Components fixed by the regime rather than estimated.
    pub constant: Vec<bool>,
    /// `lower = max over groups of min over members`.
    pub lower: Vec<Vec<usize>>,
    /// `upper = min over groups of max over members`.
    pub upper: Vec<Vec<usize>>,
}

impl ComponentLayout {
    fn new(layout: Layout, sign: MtrSign) -> Self {
        let (labels, constant, lower, upper): (Vec<&'static str>, Vec<bool>, Vec<Vec<usize>>, Vec<Vec<usize>>) =
            match layout {
                Layout::NoAssumption => (
                    vec!["h1-1", "theorem-lower", "h1", "theorem-upper"],
                    vec![false; 4],
                    vec![vec![0], vec![1]],
                    vec![vec![2], vec![3]],
                ),
                Layout::MtrCs => (
                    vec!["h1-1", "h1-j0/s1", "h1-1+(s0-j0)/s1", "h1"],
                    vec![false; 4],
                    vec![vec![0], vec![1, 2]],
                    vec![vec![3], vec![1, 2]],
                ),
                Layout::Pco => (
                    vec!["pco-lower", "h1", "h1-1+(1-h0)s0/pi"],
                    vec![false; 3],
                    vec![vec![0]],
                    vec![vec![1], vec![2]],
                ),
                Layout::PcoTrivial => (vec!["h1-1", "h1"], vec![false; 2], vec![vec![0]], vec![vec![1]]),
                Layout::MtrCsPco => (
                    vec!["h1-h0", "h1-1+(s0-j0)/s1", "h1"],
                    vec![false; 3],
                    vec![vec![0, 1]],
                    vec![vec![2], vec![0, 1]],
                ),
                Layout::Ates => (
                    vec!["-1", "-j0/d", "(j1+s0-1)/d-1", "(j1+s0-1-j0)/d", "1", "1-(j0+s1-1)/d", "j1/d", "(j1-j0-s1+1)/d"],
                    vec![true, false, false, false, true, false, false, false],
                    vec![vec![0], vec![1], vec![2], vec![3]],
                    vec![vec![4], vec![5], vec![6], vec![7]],
                ),
            };
        let mut out = ComponentLayout {
            layout,
            sign,
            labels,
            constant,
            lower,
            upper,
        };
        match sign {
            MtrSign::Unknown => {}
            MtrSign::NonNegative => {
                let k = out.push("0", true);
                out.lower.push(vec![k]);
                let k = out.push("sign:h1-j0/s1", false);
                out.lower.push(vec![k]);
            }
            MtrSign::NonPositive => {
                let k = out.push("0", true);
                out.upper.push(vec![k]);
            }
        }
        out
    }

    fn push(&mut self, label: &'static str, constant: bool) -> usize {
        self.labels.push(label);
        self.constant.push(constant);
        self.labels.len() - 1
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Component values at the given margins, in layout order.
    pub fn values(&self, m: &PeriodMargins) -> Result<Vec<f64>, UndefinedReason> {
        use UndefinedReason::*;
        let PeriodMargins { h1, s1, s0, j1, j0, .. } = *m;
        let x = h1 - j0 / s1;
        let y = h1 - 1.0 + (s0 - j0) / s1;
        let mut v = match self.layout {
            Layout::NoAssumption => {
                vec![h1 - 1.0, h1 - (1.0 - (s0 - j0)) / s1, h1, h1 - (j0 - 1.0) / s1 - 1.0]
            }
            Layout::MtrCs => vec![h1 - 1.0, x, y, h1],
            Layout::Pco => {
                let pi = m.pco_product.ok_or(NoControlSurvivors)?;
                let h0 = m.h0.ok_or(NoControlSurvivors)?;
                vec![h1 - 1.0 + (1.0 - h0) * pi / s1, h1, h1 - 1.0 + (s0 - j0) / pi]
            }
            Layout::PcoTrivial => vec![h1 - 1.0, h1],
            Layout::MtrCsPco => {
                let h0 = m.h0.ok_or(NoControlSurvivors)?;
                vec![h1 - h0, y, h1]
            }
            Layout::Ates => {
                let d = s1 + s0 - 1.0;
                if d <= 0.0 {
                    return Err(NoCommonSurvivors);
                }
                let (a, b, c, e) = ((j1 + s0 - 1.0) / d, j0 / d, j1 / d, (j0 + s1 - 1.0) / d);
                vec![-1.0, -b, a - 1.0, a - b, 1.0, 1.0 - e, c, c - e]
            }
        };
        match self.sign {
            MtrSign::Unknown => {}
            MtrSign::NonNegative => v.extend([0.0, x]),
            MtrSign::NonPositive => v.push(0.0),
        }
        debug_assert_eq!(v.len(), self.len());
        Ok(v)
    }

    /// Non-constant one-sided events over both sides.
    pub fn bonferroni_count(&self) -> usize {
        self.lower
            .iter()
            .chain(&self.upper)
            .flatten()
            .filter(|&&k| !self.constant[k])
            .count()
    }
}

/// Bound components at one `(t, regime)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AVector {
    pub t: u32,
    pub regime: AssumptionRegime,
    pub values: Vec<f64>,
    pub layout: ComponentLayout,
}

impl AVector {
    fn component(&self, k: usize) -> Option<f64> {
        (self.layout.layout == Layout::NoAssumption).then(|| self.values[k])
    }

    /// `h1 - 1`; the named accessors exist for the no-assumption layout only.
    pub fn a1(&self) -> Option<f64> {
        self.component(0)
    }

    /// Unclamped no-assumption lower bound.
    pub fn a2(&self) -> Option<f64> {
        self.component(1)
    }

    /// Treated hazard.
    pub fn a3(&self) -> Option<f64> {
        self.component(2)
    }

    /// Unclamped no-assumption upper bound.
    pub fn a4(&self) -> Option<f64> {
        self.component(3)
    }

    /// `(index of the binding member, value)` of the lower bound.
    pub fn lower(&self) -> (usize, f64) {
        side_value(&self.values, &self.layout.lower, true)
    }

    pub fn upper(&self) -> (usize, f64) {
        side_value(&self.values, &self.layout.upper, false)
    }
}

/// Binding member of `max_g min_k` (lower) or `min_g max_k` (upper).
fn side_value(values: &[f64], groups: &[Vec<usize>], lower: bool) -> (usize, f64) {
    let group_best = |g: &Vec<usize>| -> (usize, f64) {
        let mut best = g[0];
        for &k in &g[1..] {
            if (lower && values[k] < values[best]) || (!lower && values[k] > values[best]) {
                best = k;
            }
        }
        (best, values[best])
    };
    let mut out = group_best(&groups[0]);
    for g in &groups[1..] {
        let cand = group_best(g);
        if (lower && cand.1 > out.1) || (!lower && cand.1 < out.1) {
            out = cand;
        }
    }
    out
}

/// Components of the `(t, regime)` bounds at the given estimates.
pub fn a_vector(est: &ArmEstimates, t: u32, regime: AssumptionRegime) -> Result<AVector, InferError> {
    let m = PeriodMargins::from_estimates(est, t)?.map_err(InferError::Undefined)?;
    a_vector_from_margins(&m, regime)
}

pub fn a_vector_from_margins(m: &PeriodMargins, regime: AssumptionRegime) -> Result<AVector, InferError> {
    let b = evaluate_margins(m, regime);
    match b.reason {
        None | Some(UndefinedReason::EmptyIdentifiedSet) => {}
        Some(r) => return Err(InferError::Undefined(r)),
    }
    let layout = ComponentLayout::new(Layout::for_margins(m, regime.tag), regime.mtr_sign);
    let values = layout.values(m).map_err(InferError::Undefined)?;
    Ok(AVector {
        t: m.t,
        regime,
        values,
        layout,
    })
}

/// Resampled life-table estimates, shared by every `(t, regime)`.
#[derive(Debug, Clone)]
pub struct BootstrapSample {
    pub replicates: Vec<ArmEstimates>,
    /// Units per replicate (both arms).
    pub n: usize,
    pub seed: u64,
}

/// Draws `b` nonparametric bootstrap replicates of the records. Replicate `r`
/// uses its own ChaCha stream `r` of `seed`, so the result does not depend on
/// thread scheduling.
pub fn bootstrap_sample(records: &[UnitRecord], t_max: u32, b: usize, seed: u64) -> Result<BootstrapSample, InferError> {
    if b < 2 {
        return Err(InferError::TooFewReplicates(b));
    }
    let n = records.len();
    let replicates = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let draw = (0..n).map(|_| &records[rng.gen_range(0..n)]);
            ArmEstimates::from_records(draw, t_max)
        })
        .collect();
    Ok(BootstrapSample { replicates, n, seed })
}

/// Covariance of `sqrt(n)(â - a)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovMatrix {
    pub sigma: Vec<Vec<f64>>,
    pub n: usize,
    /// Requested replications.
    pub b: usize,
    /// Replicates in which the bounds were undefined.
    pub dropped: usize,
    pub seed: u64,
}

impl CovMatrix {
    pub fn zeros(dim: usize, n: usize) -> Self {
        CovMatrix {
            sigma: vec![vec![0.0; dim]; dim],
            n,
            b: 0,
            dropped: 0,
            seed: 0,
        }
    }

    /// Standard error of `â_k`.
    pub fn se(&self, k: usize) -> f64 {
        (self.sigma[k][k].max(0.0) / self.n as f64).sqrt()
    }

    /// Standard error of `â_j - â_i`.
    pub fn se_diff(&self, i: usize, j: usize) -> f64 {
        let v = self.sigma[i][i] + self.sigma[j][j] - 2.0 * self.sigma[i][j];
        (v.max(0.0) / self.n as f64).sqrt()
    }
}

/// Bootstrap covariance of the components of `av`, with the layout held
/// fixed at the point estimate.
pub fn bootstrap_cov_from(sample: &BootstrapSample, av: &AVector) -> Result<CovMatrix, InferError> {
    let total = sample.replicates.len();
    let draws: Vec<Vec<f64>> = sample
        .replicates
        .iter()
        .filter_map(|est| {
            let m = PeriodMargins::from_estimates(est, av.t).ok()?.ok()?;
            av.layout.values(&m).ok()
        })
        .collect();
    let dropped = total - draws.len();
    if dropped as f64 > MAX_DEGENERATE_SHARE * total as f64 || draws.len() < 2 {
        return Err(InferError::TooManyDegenerate { dropped, total });
    }
    let dim = av.values.len();
    let used = draws.len() as f64;
    let mut mean = vec![0.0; dim];
    for d in &draws {
        for (m, v) in mean.iter_mut().zip(d) {
            *m += v / used;
        }
    }
    let mut sigma = vec![vec![0.0; dim]; dim];
    for d in &draws {
        for i in 0..dim {
            let di = d[i] - mean[i];
            for j in i..dim {
                sigma[i][j] += di * (d[j] - mean[j]);
            }
        }
    }
    let scale = sample.n as f64 / (used - 1.0);
    for i in 0..dim {
        for j in i..dim {
            // Constant components carry exact zeros rather than rounding noise.
            let v = if av.layout.constant[i] || av.layout.constant[j] {
                0.0
            } else {
                sigma[i][j] * scale
            };
            sigma[i][j] = v;
            sigma[j][i] = v;
        }
    }
    Ok(CovMatrix {
        sigma,
        n: sample.n,
        b: total,
        dropped,
        seed: sample.seed,
    })
}

/// Bootstrap covariance at `(t, regime)` for a dataset randomized in period 1.
pub fn bootstrap_cov(
    ds: &PanelDataset,
    t: u32,
    regime: AssumptionRegime,
    b: usize,
    seed: u64,
) -> Result<CovMatrix, InferError> {
    let est = crate::estimate::arm_estimates(ds, ds.t_max())?;
    let av = a_vector(&est, t, regime)?;
    let sample = bootstrap_sample(ds.records(), ds.t_max(), b, seed)?;
    bootstrap_cov_from(&sample, &av)
}

/// How the critical values are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "method")]
pub enum CriticalMethod {
    /// `Φ⁻¹(1 - α/K)` with `K` the number of active one-sided events.
    Bonferroni,
    /// Simulated `1 - α` quantile of `max_k [Z_k]₊` over the active events.
    Simulated { draws: usize, seed: u64 },
}

/// Outcome of the moment-selection pretests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BindingPattern {
    /// Surviving groups and their surviving members, by component index.
    pub lower_active: Vec<Vec<usize>>,
    pub upper_active: Vec<Vec<usize>>,
    pub decoupled: bool,
    /// The endpoints differ but their difference has no sampling variation,
    /// so the pattern was set without a test.
    pub zero_variance: bool,
    /// Studentized `û - ℓ̂`, when it could be computed.
    pub statistic: Option<f64>,
    pub pretest_critical: f64,
    /// Active non-constant one-sided events per side.
    pub events_lower: usize,
    pub events_upper: usize,
}

/// Pretest of `ℓ = u` followed, when rejected, by within-side selection.
pub fn pretest_decouple(av: &AVector, cov: &CovMatrix, alpha_pre: f64) -> Result<BindingPattern, InferError> {
    if !(alpha_pre > 0.0 && alpha_pre < 1.0) {
        return Err(InferError::DomainError(alpha_pre));
    }
    let z = normal_quantile(1.0 - alpha_pre)?;
    let lay = &av.layout;
    let (i, l) = av.lower();
    let (j, u) = av.upper();
    let se = cov.se_diff(i, j);
    let (decoupled, zero_variance, statistic) = if u - l <= TIE_EPS {
        (false, false, (se > TIE_EPS).then(|| (u - l) / se))
    } else if se > TIE_EPS {
        let s = (u - l) / se;
        (s > z, false, Some(s))
    } else {
        (true, true, None)
    };
    let count = |groups: &[Vec<usize>]| groups.iter().flatten().filter(|&&k| !lay.constant[k]).count();
    if !decoupled {
        return Ok(BindingPattern {
            lower_active: lay.lower.clone(),
            upper_active: lay.upper.clone(),
            decoupled,
            zero_variance,
            statistic,
            pretest_critical: z,
            events_lower: count(&lay.lower),
            events_upper: count(&lay.upper),
        });
    }
    let lower_active = select(&av.values, cov, &lay.lower, z, true);
    let upper_active = select(&av.values, cov, &lay.upper, z, false);
    Ok(BindingPattern {
        events_lower: count(&lower_active),
        events_upper: count(&upper_active),
        lower_active,
        upper_active,
        decoupled,
        zero_variance,
        statistic,
        pretest_critical: z,
    })
}

/// `a` exceeds `b` by more than sampling noise.
fn significantly_above(values: &[f64], cov: &CovMatrix, a: usize, b: usize, z: f64) -> bool {
    let diff = values[a] - values[b];
    let se = cov.se_diff(a, b);
    if diff <= TIE_EPS {
        false
    } else if se > TIE_EPS {
        diff / se > z
    } else {
        true
    }
}

/// Drops members well inside their group's extremum, then groups well inside
/// the side's extremum.
fn select(values: &[f64], cov: &CovMatrix, groups: &[Vec<usize>], z: f64, lower: bool) -> Vec<Vec<usize>> {
    let slack = |a: usize, b: usize| {
        if lower {
            significantly_above(values, cov, a, b, z)
        } else {
            significantly_above(values, cov, b, a, z)
        }
    };
    let pruned: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| {
            let (best, _) = side_value(values, std::slice::from_ref(g), lower);
            g.iter().copied().filter(|&k| k == best || !slack(k, best)).collect()
        })
        .collect();
    let (star, _) = side_value(values, &pruned, lower);
    pruned
        .into_iter()
        .filter(|g| {
            let (b, _) = side_value(values, std::slice::from_ref(g), lower);
            b == star || !slack(star, b)
        })
        .collect()
}

/// The interval estimate and how it was built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
    pub critical_lower: f64,
    pub critical_upper: f64,
    pub pattern: BindingPattern,
    /// `lo > hi`: the inequalities are jointly rejected at level `alpha`.
    pub empty: bool,
}

/// Assembles the interval from the pattern's active components.
pub fn confidence_interval(
    av: &AVector,
    cov: &CovMatrix,
    alpha: f64,
    pattern: &BindingPattern,
) -> Result<ConfidenceInterval, InferError> {
    confidence_interval_with(av, cov, alpha, pattern, CriticalMethod::Bonferroni)
}

pub fn confidence_interval_with(
    av: &AVector,
    cov: &CovMatrix,
    alpha: f64,
    pattern: &BindingPattern,
    method: CriticalMethod,
) -> Result<ConfidenceInterval, InferError> {
    check_alpha(alpha)?;
    let (critical_lower, critical_upper) = if pattern.decoupled {
        (
            side_critical(av, cov, alpha, &pattern.lower_active, &[], method)?,
            side_critical(av, cov, alpha, &[], &pattern.upper_active, method)?,
        )
    } else {
        let c = side_critical(av, cov, alpha, &pattern.lower_active, &pattern.upper_active, method)?;
        (c, c)
    };
    let shifted = |c: f64, sign: f64| -> Vec<f64> {
        av.values
            .iter()
            .enumerate()
            .map(|(k, &a)| a + sign * c * cov.se(k))
            .collect()
    };
    let (_, lo) = side_value(&shifted(critical_lower, -1.0), &pattern.lower_active, true);
    let (_, hi) = side_value(&shifted(critical_upper, 1.0), &pattern.upper_active, false);
    Ok(ConfidenceInterval {
        lo,
        hi,
        alpha,
        critical_lower,
        critical_upper,
        pattern: pattern.clone(),
        empty: lo > hi,
    })
}

/// Critical value for the one-sided events in `lower` and `upper`.
fn side_critical(
    av: &AVector,
    cov: &CovMatrix,
    alpha: f64,
    lower: &[Vec<usize>],
    upper: &[Vec<usize>],
    method: CriticalMethod,
) -> Result<f64, InferError> {
    let events: Vec<(usize, f64)> = lower
        .iter()
        .flatten()
        .map(|&k| (k, 1.0))
        .chain(upper.iter().flatten().map(|&k| (k, -1.0)))
        .filter(|&(k, _)| !av.layout.constant[k])
        .collect();
    let count = events.len().max(1);
    match method {
        CriticalMethod::Bonferroni => normal_quantile(1.0 - alpha / count as f64),
        CriticalMethod::Simulated { draws, seed } => {
            let live: Vec<(usize, f64)> = events.into_iter().filter(|&(k, _)| cov.sigma[k][k] > 0.0).collect();
            if live.is_empty() {
                return normal_quantile(1.0 - alpha);
            }
            let corr: Vec<Vec<f64>> = live
                .iter()
                .map(|&(a, sa)| {
                    live.iter()
                        .map(|&(b, sb)| sa * sb * cov.sigma[a][b] / (cov.sigma[a][a] * cov.sigma[b][b]).sqrt())
                        .collect()
                })
                .collect();
            Ok(simulated_critical_value(&corr, alpha, draws, seed))
        }
    }
}

/// Lower-triangular `L` with `L Lᵀ = a` for a positive semidefinite `a`;
/// columns with a non-positive pivot are left at zero.
fn semidefinite_cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= 1e-12 * a[j][j].abs().max(1.0) {
            continue;
        }
        let root = d.sqrt();
        l[j][j] = root;
        for i in j + 1..n {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = s / root;
        }
    }
    l
}

/// `1 - α` quantile of `‖[Z]₊‖_∞` for `Z ~ N(0, sigma_m)` by simulation.
pub fn simulated_critical_value(sigma_m: &[Vec<f64>], alpha: f64, draws: usize, seed: u64) -> f64 {
    const CHUNK: usize = 16_384;
    let l = semidefinite_cholesky(sigma_m);
    let dim = l.len();
    let chunks = draws.div_ceil(CHUNK);
    let mut maxima: Vec<f64> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = CHUNK.min(draws - c * CHUNK);
            let l = &l;
            let mut e = vec![0.0; dim];
            (0..len)
                .map(move |_| {
                    for v in e.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let mut best = 0.0f64;
                    for row in l {
                        let z: f64 = row.iter().zip(&e).map(|(a, b)| a * b).sum();
                        best = best.max(z);
                    }
                    best
                })
                .collect::<Vec<_>>()
        })
        .collect();
    maxima.sort_by(f64::total_cmp);
    let idx = ((1.0 - alpha) * draws as f64).ceil() as usize;
    maxima[idx.clamp(1, draws) - 1]
}

/// Sign of the first-period effect, where it is point identified: a
/// one-sided significant difference at level `alpha` fixes the MTR direction.
pub fn auto_mtr_sign(est: &ArmEstimates, alpha: f64) -> Result<MtrSign, InferError> {
    let z = normal_quantile(1.0 - alpha)?;
    let (Some(h1), Some(h0)) = (est.hazard(Arm::Treated, 1), est.hazard(Arm::Control, 1)) else {
        return Ok(MtrSign::Unknown);
    };
    let (n1, n0) = (est.risk(Arm::Treated, 1) as f64, est.risk(Arm::Control, 1) as f64);
    let se = (h1 * (1.0 - h1) / n1 + h0 * (1.0 - h0) / n0).sqrt();
    let diff = h1 - h0;
    Ok(if se > 0.0 && diff / se > z || se == 0.0 && diff > 0.0 {
        MtrSign::NonNegative
    } else if se > 0.0 && diff / se < -z || se == 0.0 && diff < 0.0 {
        MtrSign::NonPositive
    } else {
        MtrSign::Unknown
    })
}

/// Confidence interval at `(t, regime)` from a shared bootstrap sample.
pub fn interval_at(
    est: &ArmEstimates,
    sample: &BootstrapSample,
    t: u32,
    regime: AssumptionRegime,
    alpha: f64,
    alpha_pre: f64,
    method: CriticalMethod,
) -> Result<(AVector, CovMatrix, ConfidenceInterval), InferError> {
    let av = a_vector(est, t, regime)?;
    let cov = bootstrap_cov_from(sample, &av)?;
    let pattern = pretest_decouple(&av, &cov, alpha_pre)?;
    let ci = confidence_interval_with(&av, &cov, alpha, &pattern, method)?;
    Ok((av, cov, ci))
}
