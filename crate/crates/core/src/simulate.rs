//! Structural data-generating processes and the Monte Carlo coverage harness.
//!
//! Both models reduce to a finite mixture of unit types. Within a type, each
//! period draws the pair `(Y_t¹, Y_t⁰)` of latent transition indicators from
//! a four-cell law. Without serial correlation the periods are independent
//! given the type, so population quantities are exact finite sums. With
//! serial correlation the uniforms driving the shocks follow a Gaussian AR(1)
//! copula and population quantities come from an auxiliary simulation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, LogNormal, Normal};
use thiserror::Error;

use crate::bounds::{evaluate, AssumptionRegime, BoundsError, MtrSign, RegimeTag};
use crate::data::{Arm, DataError, PanelDataset, UnitRecord};
use crate::estimate::{arm_estimates, ArmEstimates};
use crate::infer::{bootstrap_sample, interval_at, CriticalMethod, InferError};

/// Units in the auxiliary simulation used when no closed form exists.
pub const DEFAULT_AUX_UNITS: usize = 10_000_000;
/// Grid points for a discretized normal frailty.
const NORMAL_GRID: usize = 41;
const NORMAL_GRID_HALF_WIDTH: f64 = 5.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn invalid(msg: impl Into<String>) -> SimError {
    SimError::InvalidParams(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShockMode {
    /// `ε¹ = ε⁰`.
    Shared,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ShockDist {
    Logistic,
    Normal,
}

impl ShockDist {
    fn cdf(self, x: f64) -> f64 {
        match self {
            ShockDist::Logistic => 1.0 / (1.0 + (-x).exp()),
            ShockDist::Normal => std_normal_cdf(x),
        }
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

/// Discrete or discretized distribution of a scalar type component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ScalarDist {
    Point { value: f64 },
    TwoPoint { low: f64, high: f64, p_high: f64 },
    /// Mean-zero normal on an equally spaced grid of `41` points over ±5 sd.
    Normal { sd: f64 },
}

impl ScalarDist {
    fn support(self) -> Vec<(f64, f64)> {
        match self {
            ScalarDist::Point { value } => vec![(value, 1.0)],
            ScalarDist::TwoPoint { low, high, p_high } => vec![(low, 1.0 - p_high), (high, p_high)],
            ScalarDist::Normal { sd } if sd == 0.0 => vec![(0.0, 1.0)],
            ScalarDist::Normal { sd } => {
                let step = 2.0 * NORMAL_GRID_HALF_WIDTH / (NORMAL_GRID - 1) as f64;
                let raw: Vec<(f64, f64)> = (0..NORMAL_GRID)
                    .map(|i| {
                        let z = -NORMAL_GRID_HALF_WIDTH + i as f64 * step;
                        (z * sd, (-0.5 * z * z).exp())
                    })
                    .collect();
                let total: f64 = raw.iter().map(|p| p.1).sum();
                raw.into_iter().map(|(v, w)| (v, w / total)).collect()
            }
        }
    }

    fn validate(self, name: &str) -> Result<(), SimError> {
        let ok = match self {
            ScalarDist::Point { value } => value.is_finite(),
            ScalarDist::TwoPoint { low, high, p_high } => {
                low.is_finite() && high.is_finite() && (0.0..=1.0).contains(&p_high)
            }
            ScalarDist::Normal { sd } => sd.is_finite() && sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("{name}: {self}")))
        }
    }

    fn min_max(self) -> (f64, f64) {
        let s = self.support();
        let vals = s.iter().filter(|p| p.1 > 0.0).map(|p| p.0);
        vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }
}

impl fmt::Display for ScalarDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ScalarDist::Point { value } => write!(f, "point:{value}"),
            ScalarDist::TwoPoint { low, high, p_high } => write!(f, "two-point:{low},{high},{p_high}"),
            ScalarDist::Normal { sd } => write!(f, "normal:{sd}"),
        }
    }
}

impl FromStr for ScalarDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        let nums = parse_list(args)?;
        match (kind.trim(), nums.as_slice()) {
            ("point", [v]) => Ok(ScalarDist::Point { value: *v }),
            ("two-point", [lo, hi, p]) => Ok(ScalarDist::TwoPoint {
                low: *lo,
                high: *hi,
                p_high: *p,
            }),
            ("normal", [sd]) => Ok(ScalarDist::Normal { sd: *sd }),
            _ => {
                // A bare number is a point mass.
                s.trim()
                    .parse::<f64>()
                    .map(|value| ScalarDist::Point { value })
                    .map_err(|_| format!("expected point:v, two-point:lo,hi,p or normal:sd, got `{s}`"))
            }
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| format!("not a number: `{}`", x.trim())))
        .collect()
}

/// Discrete duration model `Y_t^d = 1{α_t + d·γ + V - ε_t^d >= 0}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DurationDgpParams {
    pub t_max: u32,
    /// Time effects `α_1..α_T`.
    pub alpha: Vec<f64>,
    pub gamma: ScalarDist,
    /// Last period in which `γ` applies; zero effect afterwards.
    pub gamma_until: Option<u32>,
    pub v: ScalarDist,
    pub shock_mode: ShockMode,
    pub shock_dist: ShockDist,
    /// Lag-one correlation of the Gaussian copula driving the shocks.
    pub serial_corr: f64,
}

impl DurationDgpParams {
    /// No treatment effect, shared logistic shocks, normal frailty.
    pub fn null(t_max: u32) -> Self {
        DurationDgpParams {
            t_max,
            alpha: vec![-1.5; t_max as usize],
            gamma: ScalarDist::Point { value: 0.0 },
            gamma_until: None,
            v: ScalarDist::Normal { sd: 1.0 },
            shock_mode: ShockMode::Shared,
            shock_dist: ShockDist::Logistic,
            serial_corr: 0.0,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.t_max == 0 || self.alpha.len() != self.t_max as usize {
            return Err(invalid("alpha must list one value per period"));
        }
        if self.alpha.iter().any(|a| !a.is_finite()) {
            return Err(invalid("alpha must be finite"));
        }
        if !(self.serial_corr > -1.0 && self.serial_corr < 1.0) {
            return Err(invalid("serial_corr must lie in (-1, 1)"));
        }
        self.gamma.validate("gamma")?;
        self.v.validate("v")
    }

    /// `γ` keeps one sign across units (zero counts as either).
    pub fn gamma_sign(&self) -> Option<MtrSign> {
        let (lo, hi) = self.gamma.min_max();
        if lo >= 0.0 {
            Some(MtrSign::NonNegative)
        } else if hi <= 0.0 {
            Some(MtrSign::NonPositive)
        } else {
            None
        }
    }
}

/// Wage-offer distribution `H`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum WageDist {
    Normal { mean: f64, sd: f64 },
    #[serde(rename = "lognormal")]
    LogNormal { mu: f64, sigma: f64 },
}

impl WageDist {
    fn cdf(self, x: f64) -> f64 {
        match self {
            WageDist::Normal { mean, sd } => Normal::new(mean, sd).map_or(f64::NAN, |d| d.cdf(x)),
            WageDist::LogNormal { mu, sigma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    LogNormal::new(mu, sigma).map_or(f64::NAN, |d| d.cdf(x))
                }
            }
        }
    }
}

impl FromStr for WageDist {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        match (kind.trim(), parse_list(args)?.as_slice()) {
            ("normal", [m, sd]) if *sd > 0.0 => Ok(WageDist::Normal { mean: *m, sd: *sd }),
            ("lognormal", [mu, sg]) if *sg > 0.0 => Ok(WageDist::LogNormal { mu: *mu, sigma: *sg }),
            _ => Err(format!("expected normal:mean,sd or lognormal:mu,sigma, got `{s}`")),
        }
    }
}

impl fmt::Display for WageDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            WageDist::Normal { mean, sd } => write!(f, "normal:{mean},{sd}"),
            WageDist::LogNormal { mu, sigma } => write!(f, "lognormal:{mu},{sigma}"),
        }
    }
}

/// Search model: an offer arrives with probability
/// `F_logistic(logit(offer_prob_t) + V)` and is accepted when the wage
/// exceeds the arm's reservation wage. The offer and the wage are shared
/// across arms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobSearchParams {
    pub t_max: u32,
    pub offer_prob: Vec<f64>,
    pub v: ScalarDist,
    pub xi_treated: Vec<f64>,
    pub xi_control: Vec<f64>,
    pub wage: WageDist,
}

impl JobSearchParams {
    /// Bonus lowering the reservation wage for `bonus_periods` periods.
    pub fn eligibility_window(t_max: u32, bonus_periods: u32) -> Self {
        let tm = t_max as usize;
        JobSearchParams {
            t_max,
            offer_prob: vec![0.3; tm],
            v: ScalarDist::TwoPoint {
                low: -1.0,
                high: 1.0,
                p_high: 0.5,
            },
            xi_treated: (1..=t_max).map(|t| if t <= bonus_periods { -0.5 } else { 0.5 }).collect(),
            xi_control: vec![0.5; tm],
            wage: WageDist::Normal { mean: 0.0, sd: 1.0 },
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let tm = self.t_max as usize;
        if tm == 0 || self.offer_prob.len() != tm || self.xi_treated.len() != tm || self.xi_control.len() != tm {
            return Err(invalid("offer_prob, xi_treated and xi_control need one value per period"));
        }
        if self.offer_prob.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(invalid("offer_prob must lie in (0, 1)"));
        }
        if self.xi_treated.iter().zip(&self.xi_control).any(|(a, b)| a > b) {
            return Err(invalid("the treated reservation wage may not exceed the control one"));
        }
        self.v.validate("v")
    }
}

/// A parameterized data-generating process.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "model")]
pub enum Dgp {
    Duration(DurationDgpParams),
    JobSearch(JobSearchParams),
}

impl Dgp {
    pub fn t_max(&self) -> u32 {
        match self {
            Dgp::Duration(p) => p.t_max,
            Dgp::JobSearch(p) => p.t_max,
        }
    }

    pub fn latent(&self) -> Result<LatentModel, SimError> {
        match self {
            Dgp::Duration(p) => LatentModel::duration(p),
            Dgp::JobSearch(p) => LatentModel::job_search(p),
        }
    }
}

/// Per-type transition probabilities and shock dependence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentModel {
    pub t_max: u32,
    pub weights: Vec<f64>,
    /// `p1[k][t - 1] = Pr(Y_t¹ = 1 | type k)`.
    pub p1: Vec<Vec<f64>>,
    pub p0: Vec<Vec<f64>>,
    pub shock_mode: ShockMode,
    pub serial_corr: f64,
    /// Type values `(V, γ)` for reporting.
    pub types: Vec<(f64, f64)>,
}

/// Four-cell law of `(Y_t¹, Y_t⁰)`, indexed `2·y1 + y0`.
pub type Cells = [f64; 4];

impl LatentModel {
    fn duration(p: &DurationDgpParams) -> Result<Self, SimError> {
        p.validate()?;
        let mut weights = Vec::new();
        let mut types = Vec::new();
        let (mut p1, mut p0) = (Vec::new(), Vec::new());
        for (v, wv) in p.v.support() {
            for (g, wg) in p.gamma.support() {
                if wv * wg == 0.0 {
                    continue;
                }
                weights.push(wv * wg);
                types.push((v, g));
                let row = |d: f64| -> Vec<f64> {
                    (1..=p.t_max)
                        .map(|t| {
                            let effect = if p.gamma_until.map_or(true, |u| t <= u) { g } else { 0.0 };
                            p.shock_dist.cdf(p.alpha[t as usize - 1] + d * effect + v)
                        })
                        .collect()
                };
                p1.push(row(1.0));
                p0.push(row(0.0));
            }
        }
        Ok(LatentModel {
            t_max: p.t_max,
            weights,
            p1,
            p0,
            shock_mode: p.shock_mode,
            serial_corr: p.serial_corr,
            types,
        })
    }

    fn job_search(p: &JobSearchParams) -> Result<Self, SimError> {
        p.validate()?;
        let mut out = LatentModel {
            t_max: p.t_max,
            weights: Vec::new(),
            p1: Vec::new(),
            p0: Vec::new(),
            shock_mode: ShockMode::Shared,
            serial_corr: 0.0,
            types: Vec::new(),
        };
        for (v, w) in p.v.support() {
            if w == 0.0 {
                continue;
            }
            let offer: Vec<f64> = p
                .offer_prob
                .iter()
                .map(|&q| ShockDist::Logistic.cdf((q / (1.0 - q)).ln() + v))
                .collect();
            let accept = |xi: &[f64]| -> Vec<f64> {
                offer.iter().zip(xi).map(|(o, &x)| o * (1.0 - p.wage.cdf(x))).collect()
            };
            out.weights.push(w);
            out.types.push((v, 0.0));
            out.p1.push(accept(&p.xi_treated));
            out.p0.push(accept(&p.xi_control));
        }
        Ok(out)
    }

    /// Periods are independent given the type.
    pub fn is_exact(&self) -> bool {
        self.serial_corr == 0.0
    }

    /// Joint cell law of type `k` in period `t`.
    pub fn cells(&self, k: usize, t: u32) -> Cells {
        let (a, b) = (self.p1[k][t as usize - 1], self.p0[k][t as usize - 1]);
        match self.shock_mode {
            ShockMode::Shared => {
                let (lo, hi) = (a.min(b), a.max(b));
                [1.0 - hi, (b - a).max(0.0), (a - b).max(0.0), lo]
            }
            ShockMode::Independent => [(1.0 - a) * (1.0 - b), (1.0 - a) * b, a * (1.0 - b), a * b],
        }
    }

    /// `Σ_k w_k ∏_s Σ_{c allowed(s, c)} cells(k, s)[c]` over periods `1..=horizon`.
    pub fn path_prob<F: Fn(u32, usize) -> bool>(&self, horizon: u32, allowed: F) -> f64 {
        (0..self.weights.len())
            .map(|k| self.weights[k] * self.type_path_prob(k, horizon, &allowed))
            .sum()
    }

    fn type_path_prob<F: Fn(u32, usize) -> bool>(&self, k: usize, horizon: u32, allowed: &F) -> f64 {
        let mut prob = 1.0;
        for s in 1..=horizon {
            let c = self.cells(k, s);
            prob *= (0..4).filter(|&i| allowed(s, i)).map(|i| c[i]).sum::<f64>();
            if prob == 0.0 {
                break;
            }
        }
        prob
    }

    /// Exact population hazards and effects (periods independent given type).
    pub fn exact_population(&self) -> Population {
        let tm = self.t_max as usize;
        let mut h = [vec![0.0; tm], vec![0.0; tm]];
        let mut atets = vec![None; tm];
        let mut ates = vec![None; tm];
        for t in 1..=self.t_max {
            let ti = t as usize - 1;
            let (mut s1, mut s0, mut both) = (0.0, 0.0, 0.0);
            let (mut e1, mut e0, mut eff1, mut eff_both) = (0.0, 0.0, 0.0, 0.0);
            for k in 0..self.weights.len() {
                let w = self.weights[k];
                let (mut a1, mut a0, mut ab) = (w, w, w);
                for s in 1..t {
                    let c = self.cells(k, s);
                    a1 *= 1.0 - self.p1[k][s as usize - 1];
                    a0 *= 1.0 - self.p0[k][s as usize - 1];
                    ab *= c[0];
                }
                let (q1, q0) = (self.p1[k][ti], self.p0[k][ti]);
                s1 += a1;
                s0 += a0;
                both += ab;
                e1 += a1 * q1;
                e0 += a0 * q0;
                eff1 += a1 * (q1 - q0);
                eff_both += ab * (q1 - q0);
            }
            h[1][ti] = if s1 > 0.0 { e1 / s1 } else { 0.0 };
            h[0][ti] = if s0 > 0.0 { e0 / s0 } else { 0.0 };
            atets[ti] = (s1 > 0.0).then(|| eff1 / s1);
            ates[ti] = (both > 0.0).then(|| eff_both / both);
        }
        Population {
            estimates: ArmEstimates::from_hazards(&h[1], &h[0]),
            truth: TrueEffects {
                atets,
                ates,
                auxiliary_units: None,
            },
        }
    }

    /// Population quantities, exact when possible and otherwise from
    /// `aux_units` simulated units.
    pub fn population(&self, aux_units: usize, seed: u64) -> Population {
        if self.is_exact() {
            return self.exact_population();
        }
        const CHUNK: usize = 65_536;
        let tm = self.t_max as usize;
        let chunks = aux_units.div_ceil(CHUNK);
        // Per period: [treated at risk, treated exits, control at risk,
        // control exits, sum of Y¹-Y⁰ over treated survivors, joint
        // survivors, sum of Y¹-Y⁰ over joint survivors].
        let totals = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let mut acc = vec![[0.0f64; 7]; tm];
                let sampler = TypeSampler::new(&self.weights);
                for _ in 0..CHUNK.min(aux_units - c * CHUNK) {
                    let (_, y1, y0) = self.draw_paths(&sampler, &mut rng);
                    let (mut alive1, mut alive0) = (true, true);
                    for (t, a) in acc.iter_mut().enumerate() {
                        let (b1, b0) = (y1 >> t & 1, y0 >> t & 1);
                        if alive1 {
                            a[0] += 1.0;
                            a[1] += b1 as f64;
                            a[4] += b1 as f64 - b0 as f64;
                        }
                        if alive0 {
                            a[2] += 1.0;
                            a[3] += b0 as f64;
                        }
                        if alive1 && alive0 {
                            a[5] += 1.0;
                            a[6] += b1 as f64 - b0 as f64;
                        }
                        alive1 &= b1 == 0;
                        alive0 &= b0 == 0;
                    }
                }
                acc
            })
            .reduce(
                || vec![[0.0f64; 7]; tm],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(&b) {
                        for i in 0..7 {
                            x[i] += y[i];
                        }
                    }
                    a
                },
            );
        let ratio = |num: f64, den: f64| (den > 0.0).then(|| num / den);
        let h1: Vec<f64> = totals.iter().map(|a| ratio(a[1], a[0]).unwrap_or(0.0)).collect();
        let h0: Vec<f64> = totals.iter().map(|a| ratio(a[3], a[2]).unwrap_or(0.0)).collect();
        Population {
            estimates: ArmEstimates::from_hazards(&h1, &h0),
            truth: TrueEffects {
                atets: totals.iter().map(|a| ratio(a[4], a[0])).collect(),
                ates: totals.iter().map(|a| ratio(a[6], a[5])).collect(),
                auxiliary_units: Some(aux_units),
            },
        }
    }

    /// Two-period joint table of potential outcomes (exact models only).
    pub fn joint_table_t2(&self) -> Option<crate::oracle::JointOutcomeTable> {
        if !self.is_exact() || self.t_max < 2 {
            return None;
        }
        let mut p = [0.0; 16];
        for k in 0..self.weights.len() {
            let (c1, c2) = (self.cells(k, 1), self.cells(k, 2));
            for (d1, d3, d2, d4) in (0..16).map(|i| (i >> 3 & 1, i >> 2 & 1, i >> 1 & 1, i & 1)) {
                let idx = crate::oracle::JointOutcomeTable::index(d1 as u8, d2 as u8, d3 as u8, d4 as u8);
                p[idx] += self.weights[k] * c1[2 * d1 + d3] * c2[2 * d2 + d4];
            }
        }
        crate::oracle::JointOutcomeTable::new(p).ok()
    }

    /// One unit's type and latent paths; bit `t - 1` is period `t`.
    fn draw_paths<R: Rng>(&self, sampler: &TypeSampler, rng: &mut R) -> (usize, u32, u32) {
        let k = sampler.draw(rng);
        let (mut y1, mut y0) = (0u32, 0u32);
        if self.is_exact() {
            for t in 1..=self.t_max {
                let c = self.cells(k, t);
                let u: f64 = rng.gen();
                let cell = if u < c[0] {
                    0
                } else if u < c[0] + c[1] {
                    1
                } else if u < c[0] + c[1] + c[2] {
                    2
                } else {
                    3
                };
                y1 |= ((cell >> 1) as u32) << (t - 1);
                y0 |= ((cell & 1) as u32) << (t - 1);
            }
        } else {
            let rho = self.serial_corr;
            let innov = (1.0 - rho * rho).sqrt();
            let mut z1: f64 = rng.sample(StandardNormal);
            let mut z0: f64 = match self.shock_mode {
                ShockMode::Shared => z1,
                ShockMode::Independent => rng.sample(StandardNormal),
            };
            for t in 1..=self.t_max {
                if t > 1 {
                    z1 = rho * z1 + innov * rng.sample::<f64, _>(StandardNormal);
                    z0 = match self.shock_mode {
                        ShockMode::Shared => z1,
                        ShockMode::Independent => rho * z0 + innov * rng.sample::<f64, _>(StandardNormal),
                    };
                }
                let ti = t as usize - 1;
                if std_normal_cdf(z1) <= self.p1[k][ti] {
                    y1 |= 1 << ti;
                }
                if std_normal_cdf(z0) <= self.p0[k][ti] {
                    y0 |= 1 << ti;
                }
            }
        }
        (k, y1, y0)
    }

    /// Latent paths for `n` units plus an exactly balanced random assignment.
    pub fn draw_units(&self, n: usize, seed: u64) -> Vec<PotentialPaths> {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sampler = TypeSampler::new(&self.weights);
        let mut arms: Vec<Arm> = (0..n).map(|i| if i < n / 2 { Arm::Treated } else { Arm::Control }).collect();
        arms.shuffle(&mut rng);
        arms.into_iter()
            .map(|arm| {
                let (kind, y1, y0) = self.draw_paths(&sampler, &mut rng);
                PotentialPaths { kind, y1, y0, arm }
            })
            .collect()
    }
}

/// Categorical sampler over type weights.
struct TypeSampler {
    cumulative: Vec<f64>,
}

impl TypeSampler {
    fn new(weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        TypeSampler { cumulative }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("at least one type");
        let u: f64 = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

/// Both latent paths of one unit (bit `t - 1` is period `t`) and its arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PotentialPaths {
    pub kind: usize,
    pub y1: u32,
    pub y0: u32,
    pub arm: Arm,
}

impl PotentialPaths {
    /// Path under the assigned arm.
    pub fn realized(&self) -> u32 {
        match self.arm {
            Arm::Treated => self.y1,
            Arm::Control => self.y0,
        }
    }

    /// Observed record: first transition of the realized path, or censoring
    /// at the horizon.
    pub fn observe(&self, id: String, t_max: u32) -> UnitRecord {
        let path = self.realized();
        let (duration, event) = if path == 0 {
            (t_max, false)
        } else {
            (path.trailing_zeros() + 1, true)
        };
        UnitRecord {
            id,
            arm: self.arm,
            duration: duration.min(t_max),
            event: event && duration <= t_max,
            treat_start: None,
        }
    }
}

/// Population estimands of a DGP.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrueEffects {
    /// Indexed by `t - 1`; `None` when no treated unit survives to `t`.
    pub atets: Vec<Option<f64>>,
    pub ates: Vec<Option<f64>>,
    /// Set when the values come from an auxiliary simulation of this size.
    pub auxiliary_units: Option<usize>,
}

impl TrueEffects {
    pub fn for_regime(&self, tag: RegimeTag, t: u32) -> Option<f64> {
        let v = if tag == RegimeTag::Ates { &self.ates } else { &self.atets };
        v.get(t as usize - 1).copied().flatten()
    }
}

/// Population life-table quantities together with the true effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub estimates: ArmEstimates,
    pub truth: TrueEffects,
}

fn simulate_latent(model: &LatentModel, n: usize, seed: u64) -> Result<PanelDataset, SimError> {
    let records = model
        .draw_units(n, seed)
        .iter()
        .enumerate()
        .map(|(i, p)| p.observe(format!("u{i}"), model.t_max))
        .collect();
    Ok(PanelDataset::new(records, model.t_max)?)
}

/// Simulated sample of `n` units and the population effects.
pub fn simulate_duration_model(
    p: &DurationDgpParams,
    n: usize,
    seed: u64,
) -> Result<(PanelDataset, TrueEffects), SimError> {
    simulate(&Dgp::Duration(p.clone()), n, seed, DEFAULT_AUX_UNITS)
}

pub fn simulate_job_search(p: &JobSearchParams, n: usize, seed: u64) -> Result<(PanelDataset, TrueEffects), SimError> {
    simulate(&Dgp::JobSearch(p.clone()), n, seed, DEFAULT_AUX_UNITS)
}

pub fn simulate(dgp: &Dgp, n: usize, seed: u64, aux_units: usize) -> Result<(PanelDataset, TrueEffects), SimError> {
    if n < 2 {
        return Err(invalid("need at least two units, one per arm"));
    }
    let model = dgp.latent()?;
    let ds = simulate_latent(&model, n, seed)?;
    Ok((ds, model.population(aux_units, seed ^ 0x5eed).truth))
}

/// Outcome of the structural-assumption checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StructuralReport {
    pub mtr_nonneg: bool,
    pub mtr_nonpos: bool,
    pub cs: bool,
    pub pco: bool,
    /// Computed from the exact law rather than simulated paths.
    pub exact: bool,
}

impl StructuralReport {
    pub fn mtr(&self) -> bool {
        self.mtr_nonneg || self.mtr_nonpos
    }

    pub fn satisfies(&self, tag: RegimeTag) -> bool {
        match tag {
            RegimeTag::NoAssumption | RegimeTag::Ates => true,
            RegimeTag::MtrCs => self.mtr() && self.cs,
            RegimeTag::Pco => self.pco,
            RegimeTag::MtrCsPco => self.mtr() && self.cs && self.pco,
        }
    }
}

/// Probabilities of path events, either exact or from simulated paths.
trait PathLaw {
    fn t_max(&self) -> u32;
    fn n_types(&self) -> usize;
    /// `(probability, effective sample size)` of the event within type `k`,
    /// or over all types when `k` is `None`.
    fn prob<F: Fn(u32, usize) -> bool + Sync>(&self, k: Option<usize>, horizon: u32, allowed: F) -> (f64, f64);
}

impl PathLaw for LatentModel {
    fn t_max(&self) -> u32 {
        self.t_max
    }

    fn n_types(&self) -> usize {
        self.weights.len()
    }

    fn prob<F: Fn(u32, usize) -> bool + Sync>(&self, k: Option<usize>, horizon: u32, allowed: F) -> (f64, f64) {
        let p = match k {
            Some(k) => self.type_path_prob(k, horizon, &allowed),
            None => self.path_prob(horizon, allowed),
        };
        (p, f64::INFINITY)
    }
}

/// Simulated latent paths for the empirical checks.
pub struct PathSample {
    t_max: u32,
    n_types: usize,
    units: Vec<PotentialPaths>,
}

impl PathSample {
    pub fn new(model: &LatentModel, n: usize, seed: u64) -> Self {
        PathSample {
            t_max: model.t_max,
            n_types: model.weights.len(),
            units: model.draw_units(n, seed),
        }
    }
}

impl PathLaw for PathSample {
    fn t_max(&self) -> u32 {
        self.t_max
    }

    fn n_types(&self) -> usize {
        self.n_types
    }

    fn prob<F: Fn(u32, usize) -> bool + Sync>(&self, k: Option<usize>, horizon: u32, allowed: F) -> (f64, f64) {
        let (hits, total) = self
            .units
            .par_iter()
            .filter(|u| k.map_or(true, |k| u.kind == k))
            .map(|u| {
                let ok = (1..=horizon).all(|s| {
                    let c = 2 * (u.y1 >> (s - 1) & 1) + (u.y0 >> (s - 1) & 1);
                    allowed(s, c as usize)
                });
                (usize::from(ok), 1usize)
            })
            .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
        if total == 0 {
            (0.0, 0.0)
        } else {
            (hits as f64 / total as f64, total as f64)
        }
    }
}

/// Conditional probability and the count it rests on.
fn conditional<L: PathLaw, F, G>(law: &L, k: Option<usize>, horizon: u32, event: F, given: G) -> Option<(f64, f64)>
where
    F: Fn(u32, usize) -> bool + Sync,
    G: Fn(u32, usize) -> bool + Sync,
{
    let (den, n) = law.prob(k, horizon, &given);
    if den <= 0.0 {
        return None;
    }
    let (num, _) = law.prob(k, horizon, |s, c| given(s, c) && event(s, c));
    Some((num / den, n * den))
}

const Y1: fn(usize) -> bool = |c| c >> 1 == 1;
const Y0: fn(usize) -> bool = |c| c & 1 == 1;

/// Slack allowed when comparing two estimated proportions.
fn slack(n_a: f64, n_b: f64) -> f64 {
    if n_a.is_infinite() && n_b.is_infinite() {
        1e-12
    } else {
        4.0 * (0.25 / n_a + 0.25 / n_b).sqrt()
    }
}

fn check_structure_with<L: PathLaw>(law: &L, exact: bool) -> StructuralReport {
    let tm = law.t_max();
    let (mut nonneg, mut nonpos, mut cs) = (true, true, true);
    for k in 0..law.n_types() {
        for t in 1..=tm {
            let survived = |s: u32, c: usize| s == t || c == 0;
            let Some((q1, n1)) = conditional(law, Some(k), t, |s, c| s < t || Y1(c), survived) else {
                continue;
            };
            let (q0, _) = conditional(law, Some(k), t, |s, c| s < t || Y0(c), survived).expect("same event");
            let tol = slack(n1, n1);
            nonneg &= q1 >= q0 - tol;
            nonpos &= q1 <= q0 + tol;
            // Within S_{t-1}, the arm with the larger survival probability
            // survives whenever the other does.
            let (only1, _) = conditional(law, Some(k), t, |s, c| s < t || c == 2, survived).expect("same event");
            let (only0, _) = conditional(law, Some(k), t, |s, c| s < t || c == 1, survived).expect("same event");
            let tiny = if exact { 1e-12 } else { 0.0 };
            if q1 <= q0 - tol && only1 > tiny || q1 >= q0 + tol && only0 > tiny {
                cs = false;
            }
            if exact && q1 == q0 && (only1 > tiny || only0 > tiny) {
                // Equal survival: both implications apply.
                cs = false;
            }
            if !exact && (q1 - q0).abs() < tol && only1 > tiny && only0 > tiny {
                cs = false;
            }
        }
    }
    StructuralReport {
        mtr_nonneg: nonneg,
        mtr_nonpos: nonpos,
        cs,
        pco: check_pco(law),
        exact,
    }
}

/// The four positive-correlation inequalities for every `t` and `m < t`.
fn check_pco<L: PathLaw>(law: &L) -> bool {
    for t in 2..=law.t_max() {
        let base = |s: u32, c: usize| s == t || c == 0;
        let Some((b0, nb)) = conditional(law, None, t, |s, c| s < t || Y0(c), base) else {
            continue;
        };
        let (b1, _) = conditional(law, None, t, |s, c| s < t || Y1(c), base).expect("same event");
        for m in 1..t {
            let treated_exit = |s: u32, c: usize| {
                s == t || (s < m && c == 0) || (s == m && c == 2) || (s > m && !Y0(c))
            };
            let control_exit = |s: u32, c: usize| {
                s == t || (s < m && c == 0) || (s == m && c == 1) || (s > m && !Y1(c))
            };
            for given in [&treated_exit as &(dyn Fn(u32, usize) -> bool + Sync), &control_exit] {
                let Some((a0, na)) = conditional(law, None, t, |s, c| s < t || Y0(c), given) else {
                    continue;
                };
                let (a1, _) = conditional(law, None, t, |s, c| s < t || Y1(c), given).expect("same event");
                let tol = slack(na, nb);
                if a0 < b0 - tol || a1 < b1 - tol {
                    return false;
                }
            }
        }
    }
    true
}

/// Checks MTR (either sign), CS and PCO, exactly when periods are
/// independent given the type and otherwise on `paths` simulated units.
pub fn check_structure(model: &LatentModel, paths: usize, seed: u64) -> StructuralReport {
    if model.is_exact() {
        check_structure_with(model, true)
    } else {
        check_structure_with(&PathSample::new(model, paths, seed), false)
    }
}

/// Monte Carlo design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageConfig {
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub alpha_pre: f64,
    pub bootstrap: usize,
    pub seed: u64,
    pub regimes: Vec<AssumptionRegime>,
    pub method: CriticalMethod,
    pub aux_units: usize,
}

impl CoverageConfig {
    pub fn new(n: usize, reps: usize, seed: u64) -> Self {
        CoverageConfig {
            n,
            reps,
            alpha: 0.05,
            alpha_pre: 0.001,
            bootstrap: 399,
            seed,
            regimes: RegimeTag::ATETS.iter().map(|&t| t.into()).collect(),
            method: CriticalMethod::Bonferroni,
            aux_units: DEFAULT_AUX_UNITS,
        }
    }
}

/// Coverage of one `(t, regime)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageRow {
    pub t: u32,
    pub regime: String,
    pub mtr_sign: MtrSign,
    /// Population effect; rows without one are skipped in the counts.
    pub truth: Option<f64>,
    /// Whether the DGP satisfies the regime's assumptions.
    pub assumptions_hold: bool,
    pub population_lb: Option<f64>,
    pub population_ub: Option<f64>,
    pub population_bounds_cover: Option<bool>,
    /// Replications with a defined interval.
    pub defined: usize,
    /// Replications where inference failed (counted as not covering).
    pub failed: usize,
    pub ci_covered: usize,
    pub bounds_covered: usize,
    pub ci_coverage: f64,
    pub bounds_coverage: f64,
    /// Monte Carlo standard error at the observed coverage.
    pub mcse: f64,
    /// `1 - α - 3·sqrt(α(1 - α)/reps)`.
    pub threshold: f64,
    pub meets_threshold: bool,
    pub mean_ci_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub schema_version: u32,
    pub dgp: Dgp,
    pub config: CoverageConfig,
    pub structure: StructuralReport,
    pub truth: TrueEffects,
    pub rows: Vec<CoverageRow>,
}

pub const COVERAGE_SCHEMA_VERSION: u32 = 1;

/// Per replication: `(covered by CI, covered by plug-in bounds, ci width)`
/// for every `(t, regime)`, or `None` when inference failed there.
type RepOutcome = Vec<Option<(bool, bool, f64)>>;

/// Simulates `cfg.reps` samples, builds intervals for every period and
/// regime, and tallies how often they contain the population effect.
pub fn coverage_study(dgp: &Dgp, cfg: &CoverageConfig) -> Result<CoverageReport, SimError> {
    if cfg.reps < 1 || cfg.n < 2 {
        return Err(invalid("need reps >= 1 and n >= 2"));
    }
    let model = dgp.latent()?;
    let population = model.population(cfg.aux_units, cfg.seed ^ 0x5eed);
    let structure = check_structure(&model, 1_000_000.min(cfg.aux_units.max(100_000)), cfg.seed);
    let tm = model.t_max;
    let cells: Vec<(u32, AssumptionRegime)> =
        (1..=tm).flat_map(|t| cfg.regimes.iter().map(move |&r| (t, r))).collect();

    let outcomes: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(r as u64);
            let (sim_seed, boot_seed): (u64, u64) = (rng.gen(), rng.gen());
            let ds = match simulate_latent(&model, cfg.n, sim_seed) {
                Ok(ds) => ds,
                Err(_) => return vec![None; cells.len()],
            };
            let Ok(est) = arm_estimates(&ds, tm) else {
                return vec![None; cells.len()];
            };
            let Ok(sample) = bootstrap_sample(ds.records(), tm, cfg.bootstrap, boot_seed) else {
                return vec![None; cells.len()];
            };
            cells
                .iter()
                .map(|&(t, regime)| {
                    let truth = population.truth.for_regime(regime.tag, t)?;
                    let b = evaluate(&est, t, regime).ok()?;
                    let (_, _, ci) = interval_at(&est, &sample, t, regime, cfg.alpha, cfg.alpha_pre, cfg.method).ok()?;
                    let tol = 1e-12;
                    let in_ci = !ci.empty && ci.lo - tol <= truth && truth <= ci.hi + tol;
                    Some((in_ci, b.contains(truth, tol), ci.hi - ci.lo))
                })
                .collect()
        })
        .collect();

    let nominal_se = (cfg.alpha * (1.0 - cfg.alpha) / cfg.reps as f64).sqrt();
    let threshold = 1.0 - cfg.alpha - 3.0 * nominal_se;
    let rows = cells
        .iter()
        .enumerate()
        .map(|(i, &(t, regime))| {
            let truth = population.truth.for_regime(regime.tag, t);
            let pop = evaluate(&population.estimates, t, regime).ok().filter(|b| !b.undefined);
            let defined = outcomes.iter().filter(|o| o[i].is_some()).count();
            let failed = if truth.is_some() { cfg.reps - defined } else { 0 };
            let ci_covered = outcomes.iter().filter(|o| matches!(o[i], Some((true, _, _)))).count();
            let bounds_covered = outcomes.iter().filter(|o| matches!(o[i], Some((_, true, _)))).count();
            let counted = (defined + failed).max(1) as f64;
            let ci_coverage = ci_covered as f64 / counted;
            let widths: Vec<f64> = outcomes.iter().filter_map(|o| o[i].map(|x| x.2)).collect();
            CoverageRow {
                t,
                regime: regime.tag.name().to_string(),
                mtr_sign: regime.mtr_sign,
                truth,
                assumptions_hold: structure.satisfies(regime.tag)
                    && match regime.mtr_sign {
                        MtrSign::Unknown => true,
                        MtrSign::NonNegative => structure.mtr_nonneg,
                        MtrSign::NonPositive => structure.mtr_nonpos,
                    },
                population_lb: pop.map(|b| b.lb),
                population_ub: pop.map(|b| b.ub),
                population_bounds_cover: match (pop, truth) {
                    (Some(b), Some(v)) => Some(b.contains(v, 1e-9)),
                    _ => None,
                },
                defined,
                failed,
                ci_covered,
                bounds_covered,
                ci_coverage,
                bounds_coverage: bounds_covered as f64 / counted,
                mcse: (ci_coverage * (1.0 - ci_coverage) / counted).sqrt(),
                threshold,
                meets_threshold: truth.is_none() || ci_coverage >= threshold,
                mean_ci_width: if widths.is_empty() {
                    f64::NAN
                } else {
                    widths.iter().sum::<f64>() / widths.len() as f64
                },
            }
        })
        .collect();
    Ok(CoverageReport {
        schema_version: COVERAGE_SCHEMA_VERSION,
        dgp: dgp.clone(),
        config: cfg.clone(),
        structure,
        truth: population.truth,
        rows,
    })
}

/// Parses the plain-text DGP format: `key = value` lines, `#` comments.
/// A `preset` line (`null` or `eligibility-window`) supplies defaults that
/// later keys override.
pub fn parse_dgp(text: &str) -> Result<Dgp, SimError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| SimError::Parse {
            line: i + 1,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        entries.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    let lookup = |key: &str| entries.iter().rev().find(|e| e.1 == key);
    let t_max = match lookup("t_max") {
        Some((line, _, v)) => Some(v.parse::<u32>().map_err(|_| SimError::Parse {
            line: *line,
            reason: format!("t_max must be a positive integer, got `{v}`"),
        })?),
        None => None,
    };
    let preset = lookup("preset").map(|e| e.2.clone());
    let model = lookup("model").map(|e| e.2.clone()).unwrap_or_else(|| match preset.as_deref() {
        Some("eligibility-window") => "job-search".into(),
        _ => "duration".into(),
    });
    let mut dgp = match (model.as_str(), preset.as_deref()) {
        ("duration", None | Some("null")) => Dgp::Duration(DurationDgpParams::null(t_max.unwrap_or(6))),
        ("job-search", None | Some("eligibility-window")) => {
            let bonus = match lookup("bonus_periods") {
                Some((line, _, v)) => v.parse().map_err(|_| SimError::Parse {
                    line: *line,
                    reason: format!("bonus_periods must be an integer, got `{v}`"),
                })?,
                None => 5,
            };
            Dgp::JobSearch(JobSearchParams::eligibility_window(t_max.unwrap_or(10), bonus))
        }
        (m, p) => return Err(invalid(format!("unknown model/preset combination `{m}`/`{p:?}`"))),
    };
    let tm = dgp.t_max() as usize;
    for (line, key, value) in &entries {
        let err = |reason: String| SimError::Parse { line: *line, reason };
        let per_period = |v: &str| -> Result<Vec<f64>, SimError> {
            let xs = parse_list(v).map_err(err)?;
            match xs.len() {
                1 => Ok(vec![xs[0]; tm]),
                n if n == tm => Ok(xs),
                n => Err(err(format!("`{key}` needs 1 or {tm} values, got {n}"))),
            }
        };
        match (&mut dgp, key.as_str()) {
            (_, "model" | "preset" | "t_max" | "bonus_periods") => {}
            (Dgp::Duration(p), "alpha") => p.alpha = per_period(value)?,
            (Dgp::Duration(p), "gamma") => p.gamma = value.parse().map_err(err)?,
            (Dgp::Duration(p), "gamma_until") => {
                p.gamma_until = Some(value.parse().map_err(|_| err(format!("not an integer: `{value}`")))?)
            }
            (Dgp::Duration(p), "v") => p.v = value.parse().map_err(err)?,
            (Dgp::Duration(p), "shock_mode") => {
                p.shock_mode = match value.as_str() {
                    "shared" => ShockMode::Shared,
                    "independent" => ShockMode::Independent,
                    _ => return Err(err(format!("shock_mode must be shared or independent, got `{value}`"))),
                }
            }
            (Dgp::Duration(p), "shock_dist") => {
                p.shock_dist = match value.as_str() {
                    "logistic" => ShockDist::Logistic,
                    "normal" => ShockDist::Normal,
                    _ => return Err(err(format!("shock_dist must be logistic or normal, got `{value}`"))),
                }
            }
            (Dgp::Duration(p), "serial_corr") => {
                p.serial_corr = value.parse().map_err(|_| err(format!("not a number: `{value}`")))?
            }
            (Dgp::JobSearch(p), "offer_prob") => p.offer_prob = per_period(value)?,
            (Dgp::JobSearch(p), "xi_treated") => p.xi_treated = per_period(value)?,
            (Dgp::JobSearch(p), "xi_control") => p.xi_control = per_period(value)?,
            (Dgp::JobSearch(p), "v") => p.v = value.parse().map_err(err)?,
            (Dgp::JobSearch(p), "wage") => p.wage = value.parse().map_err(err)?,
            (_, other) => return Err(err(format!("unknown key `{other}` for model `{model}`"))),
        }
    }
    dgp.latent()?;
    Ok(dgp)
}
