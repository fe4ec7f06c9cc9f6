//! Closed-form bounds on the average treatment effect on treated survivors
//! (ATETS) and on survivors (ATES) in period `t`.
//!
//! Notation used in comments: `h1`, `h0` are the period-`t` hazards,
//! `s1`, `s0` the survival fractions through `t - 1`, `j0 = h0 * s0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Arm;
use crate::estimate::ArmEstimates;

/// Crossing endpoints closer than this are treated as a single point.
const CROSSING_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error("period {t} is outside 1..={t_max}")]
    PeriodOutOfRange { t: u32, t_max: u32 },
    #[error("an MTR sign is only meaningful for the mtr-cs and mtr-cs-pco regimes")]
    SignWithoutMtr,
    #[error("unknown regime `{0}` (expected none, mtr-cs, pco, mtr-cs-pco or ates)")]
    UnknownRegime(String),
    #[error("unknown MTR sign `{0}` (expected unknown, nonneg or nonpos)")]
    UnknownSign(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeTag {
    #[serde(rename = "none")]
    NoAssumption,
    MtrCs,
    Pco,
    MtrCsPco,
    Ates,
}

impl RegimeTag {
    pub const ATETS: [RegimeTag; 4] = [
        RegimeTag::NoAssumption,
        RegimeTag::MtrCs,
        RegimeTag::Pco,
        RegimeTag::MtrCsPco,
    ];

    pub fn involves_mtr(self) -> bool {
        matches!(self, RegimeTag::MtrCs | RegimeTag::MtrCsPco)
    }

    pub fn name(self) -> &'static str {
        match self {
            RegimeTag::NoAssumption => "none",
            RegimeTag::MtrCs => "mtr-cs",
            RegimeTag::Pco => "pco",
            RegimeTag::MtrCsPco => "mtr-cs-pco",
            RegimeTag::Ates => "ates",
        }
    }

    /// Panel heading used in table output.
    pub fn title(self) -> &'static str {
        match self {
            RegimeTag::NoAssumption => "No assumption bounds [A]",
            RegimeTag::MtrCs => "MTR+CS [B]",
            RegimeTag::Pco => "PCO [C]",
            RegimeTag::MtrCsPco => "MTR+CS+PCO [D]",
            RegimeTag::Ates => "ATES",
        }
    }
}

impl FromStr for RegimeTag {
    type Err = BoundsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "none" => Ok(RegimeTag::NoAssumption),
            "mtr-cs" => Ok(RegimeTag::MtrCs),
            "pco" => Ok(RegimeTag::Pco),
            "mtr-cs-pco" => Ok(RegimeTag::MtrCsPco),
            "ates" => Ok(RegimeTag::Ates),
            other => Err(BoundsError::UnknownRegime(other.to_string())),
        }
    }
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Known sign of the treatment effect under monotone treatment response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MtrSign {
    #[default]
    Unknown,
    #[serde(rename = "nonneg")]
    NonNegative,
    #[serde(rename = "nonpos")]
    NonPositive,
}

impl FromStr for MtrSign {
    type Err = BoundsError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "unknown" => Ok(MtrSign::Unknown),
            "nonneg" => Ok(MtrSign::NonNegative),
            "nonpos" => Ok(MtrSign::NonPositive),
            other => Err(BoundsError::UnknownSign(other.to_string())),
        }
    }
}

impl fmt::Display for MtrSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MtrSign::Unknown => "unknown",
            MtrSign::NonNegative => "nonneg",
            MtrSign::NonPositive => "nonpos",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssumptionRegime {
    pub tag: RegimeTag,
    pub mtr_sign: MtrSign,
}

impl AssumptionRegime {
    pub fn new(tag: RegimeTag, mtr_sign: MtrSign) -> Result<Self, BoundsError> {
        if mtr_sign != MtrSign::Unknown && !tag.involves_mtr() {
            return Err(BoundsError::SignWithoutMtr);
        }
        Ok(AssumptionRegime { tag, mtr_sign })
    }

    /// Regime with an unknown MTR sign.
    pub fn plain(tag: RegimeTag) -> Self {
        AssumptionRegime {
            tag,
            mtr_sign: MtrSign::Unknown,
        }
    }
}

impl From<RegimeTag> for AssumptionRegime {
    fn from(tag: RegimeTag) -> Self {
        AssumptionRegime::plain(tag)
    }
}

/// Why a bound could not be reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "arm")]
pub enum UndefinedReason {
    /// No treated unit survives to `t`; the estimand has no population.
    NoTreatedSurvivors,
    /// `s1 + s0 - 1 <= 0`: survival under both arms is not guaranteed.
    NoCommonSurvivors,
    /// The formula needs the control hazard but no control unit survives.
    NoControlSurvivors,
    /// Survival is no longer identified because censoring emptied the risk set.
    CensoredOut(Arm),
    /// The sign restriction contradicts the data (lower bound above upper).
    EmptyIdentifiedSet,
}

impl UndefinedReason {
    /// Undefined as a matter of identification rather than an estimation failure.
    pub fn is_by_theorem(self) -> bool {
        !matches!(self, UndefinedReason::CensoredOut(_))
    }
}

impl fmt::Display for UndefinedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UndefinedReason::NoTreatedSurvivors => f.write_str("no treated survivors"),
            UndefinedReason::NoCommonSurvivors => f.write_str("no guaranteed common survivors"),
            UndefinedReason::NoControlSurvivors => f.write_str("no control survivors"),
            UndefinedReason::CensoredOut(arm) => write!(f, "{arm} risk set censored out"),
            UndefinedReason::EmptyIdentifiedSet => f.write_str("sign restriction rejected"),
        }
    }
}

/// Identified quantities entering the period-`t` formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodMargins {
    pub t: u32,
    pub h1: f64,
    /// `None` only when no control unit survives to `t`.
    pub h0: Option<f64>,
    pub s1: f64,
    pub s0: f64,
    /// `Pr(Y_t = 1, survived to t | D = 1)`.
    pub j1: f64,
    /// `Pr(Y_t = 1, survived to t | D = 0)`.
    pub j0: f64,
    /// Product over `s < t` of `(1 - h1(s)) + (1 - h0(s)) - 1`, or `None` as
    /// soon as one factor is non-positive.
    pub pco_product: Option<f64>,
}

impl PeriodMargins {
    /// Extracts the margins for period `t`; fails with the reason the treated
    /// survivor population (or its estimates) is unavailable.
    pub fn from_estimates(est: &ArmEstimates, t: u32) -> Result<Result<Self, UndefinedReason>, BoundsError> {
        if t == 0 || t > est.t_max() {
            return Err(BoundsError::PeriodOutOfRange { t, t_max: est.t_max() });
        }
        Ok(Self::extract(est, t))
    }

    fn extract(est: &ArmEstimates, t: u32) -> Result<Self, UndefinedReason> {
        use UndefinedReason::*;
        let s1 = est
            .survival(Arm::Treated, t - 1)
            .ok_or(CensoredOut(Arm::Treated))?;
        if s1 == 0.0 {
            return Err(NoTreatedSurvivors);
        }
        let h1 = est.hazard(Arm::Treated, t).ok_or(CensoredOut(Arm::Treated))?;
        let s0 = est
            .survival(Arm::Control, t - 1)
            .ok_or(CensoredOut(Arm::Control))?;
        let h0 = est.hazard(Arm::Control, t);
        if h0.is_none() && s0 > 0.0 {
            return Err(CensoredOut(Arm::Control));
        }
        let j0 = if s0 == 0.0 { 0.0 } else { h0.unwrap_or(0.0) * s0 };

        let mut product = Some(1.0);
        for s in 1..t {
            let f = match (est.hazard(Arm::Treated, s), est.hazard(Arm::Control, s)) {
                (Some(a), Some(b)) => (1.0 - a) + (1.0 - b) - 1.0,
                // An exhausted control arm has already produced a factor <= 0.
                _ => {
                    product = None;
                    break;
                }
            };
            if f <= 0.0 {
                product = None;
                break;
            }
            product = product.map(|p| p * f);
        }

        Ok(PeriodMargins {
            t,
            h1,
            h0,
            s1,
            s0,
            j1: h1 * s1,
            j0,
            pco_product: product,
        })
    }

    fn h0_or(&self, reason: UndefinedReason) -> Result<f64, UndefinedReason> {
        self.h0.ok_or(reason)
    }

    /// Both survival fractions equal one: every regime is point identified.
    pub fn no_attrition(&self) -> bool {
        self.s1 == 1.0 && self.s0 == 1.0
    }
}

/// Bounds on the period-`t` effect under one assumption regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsResult {
    pub t: u32,
    pub regime: AssumptionRegime,
    /// NaN when undefined, except for an empty identified set where the
    /// crossed endpoints are kept.
    pub lb: f64,
    pub ub: f64,
    pub point_identified: bool,
    pub undefined: bool,
    pub reason: Option<UndefinedReason>,
    /// `ub - lb`, NaN when undefined.
    pub width: f64,
    pub margins: Option<PeriodMargins>,
}

impl BoundsResult {
    fn interval(regime: AssumptionRegime, m: PeriodMargins, lb: f64, ub: f64) -> Self {
        BoundsResult {
            t: m.t,
            regime,
            lb,
            ub,
            point_identified: lb == ub,
            undefined: false,
            reason: None,
            width: ub - lb,
            margins: Some(m),
        }
    }

    fn point(regime: AssumptionRegime, m: PeriodMargins, value: f64) -> Self {
        Self::interval(regime, m, value, value)
    }

    fn undefined(t: u32, regime: AssumptionRegime, reason: UndefinedReason, m: Option<PeriodMargins>) -> Self {
        BoundsResult {
            t,
            regime,
            lb: f64::NAN,
            ub: f64::NAN,
            point_identified: false,
            undefined: true,
            reason: Some(reason),
            width: f64::NAN,
            margins: m,
        }
    }

    pub fn contains(&self, value: f64, tol: f64) -> bool {
        !self.undefined && self.lb - tol <= value && value <= self.ub + tol
    }

    /// `self ⊆ other`, with `tol` slack on each endpoint.
    pub fn is_within(&self, other: &BoundsResult, tol: f64) -> bool {
        !self.undefined && !other.undefined && other.lb <= self.lb + tol && self.ub <= other.ub + tol
    }
}

/// Bounds under random assignment only.
pub fn bounds_no_assumption(est: &ArmEstimates, t: u32) -> Result<BoundsResult, BoundsError> {
    evaluate(est, t, AssumptionRegime::plain(RegimeTag::NoAssumption))
}

/// Bounds under monotone treatment response and common shocks.
pub fn bounds_mtr_cs(est: &ArmEstimates, t: u32, sign: MtrSign) -> Result<BoundsResult, BoundsError> {
    evaluate(est, t, AssumptionRegime::new(RegimeTag::MtrCs, sign)?)
}

/// Bounds under positively correlated outcomes.
pub fn bounds_pco(est: &ArmEstimates, t: u32) -> Result<BoundsResult, BoundsError> {
    evaluate(est, t, AssumptionRegime::plain(RegimeTag::Pco))
}

/// Bounds under MTR, common shocks and positively correlated outcomes.
pub fn bounds_mtr_cs_pco(est: &ArmEstimates, t: u32, sign: MtrSign) -> Result<BoundsResult, BoundsError> {
    evaluate(est, t, AssumptionRegime::new(RegimeTag::MtrCsPco, sign)?)
}

/// Bounds on the effect for units surviving under both arms.
pub fn bounds_ates(est: &ArmEstimates, t: u32) -> Result<BoundsResult, BoundsError> {
    evaluate(est, t, AssumptionRegime::plain(RegimeTag::Ates))
}

/// Dispatches on the regime.
pub fn evaluate(est: &ArmEstimates, t: u32, regime: AssumptionRegime) -> Result<BoundsResult, BoundsError> {
    let margins = PeriodMargins::from_estimates(est, t)?;
    Ok(match margins {
        Ok(m) => evaluate_margins(&m, regime),
        Err(reason) => BoundsResult::undefined(t, regime, reason, None),
    })
}

/// Evaluates the closed forms on already-extracted margins.
pub fn evaluate_margins(m: &PeriodMargins, regime: AssumptionRegime) -> BoundsResult {
    // Period 1 and the no-attrition case are point identified in every regime.
    if m.t == 1 || m.no_attrition() {
        return match m.h0 {
            Some(h0) => {
                let p = m.h1 - h0;
                match apply_sign(m, regime.mtr_sign, p, p) {
                    Some((lb, ub)) => BoundsResult::point(regime, *m, 0.5 * (lb + ub)),
                    None => {
                        let mut b = BoundsResult::undefined(m.t, regime, UndefinedReason::EmptyIdentifiedSet, Some(*m));
                        (b.lb, b.ub) = signed_endpoints(m, regime.mtr_sign, p, p);
                        b
                    }
                }
            }
            None => BoundsResult::undefined(m.t, regime, UndefinedReason::NoControlSurvivors, Some(*m)),
        };
    }
    let raw = match regime.tag {
        RegimeTag::NoAssumption => Ok(theorem1(m)),
        RegimeTag::MtrCs => Ok(mtr_cs(m)),
        RegimeTag::Pco => pco(m),
        RegimeTag::MtrCsPco => mtr_cs_pco(m),
        RegimeTag::Ates => ates(m),
    };
    let (lb, ub) = match raw {
        Ok(v) => v,
        Err(reason) => return BoundsResult::undefined(m.t, regime, reason, Some(*m)),
    };
    match apply_sign(m, regime.mtr_sign, lb, ub) {
        Some((lb, ub)) => BoundsResult::interval(regime, *m, lb, ub),
        None => {
            // Keep the crossed endpoints for diagnostics.
            let mut b = BoundsResult::undefined(m.t, regime, UndefinedReason::EmptyIdentifiedSet, Some(*m));
            let (lb, ub) = signed_endpoints(m, regime.mtr_sign, lb, ub);
            b.lb = lb;
            b.ub = ub;
            b
        }
    }
}

fn theorem1(m: &PeriodMargins) -> (f64, f64) {
    let lb = m.h1 - f64::min(1.0, (1.0 - (m.s0 - m.j0)) / m.s1);
    let ub = m.h1 - f64::max(0.0, (m.j0 - 1.0) / m.s1 + 1.0);
    (lb, ub)
}

fn mtr_cs(m: &PeriodMargins) -> (f64, f64) {
    let common = m.s1.min(m.s0);
    let lb = m.h1 - f64::min(1.0, 1.0 + m.j0 / m.s1 - common / m.s1);
    let ub = m.h1 - f64::max(0.0, (m.j0 - m.s0) / m.s1 + common / m.s1);
    (lb, ub)
}

fn pco(m: &PeriodMargins) -> Result<(f64, f64), UndefinedReason> {
    let Some(product) = m.pco_product else {
        return Ok((m.h1 - 1.0, m.h1));
    };
    let h0 = m.h0_or(UndefinedReason::NoControlSurvivors)?;
    let lb = m.h1 - 1.0 + (1.0 - h0) / m.s1 * product;
    let ub = m.h1 - f64::max(0.0, (m.j0 - m.s0) / product + 1.0);
    Ok((lb, ub))
}

fn mtr_cs_pco(m: &PeriodMargins) -> Result<(f64, f64), UndefinedReason> {
    let common = m.s1.min(m.s0);
    if common == 0.0 {
        return Err(UndefinedReason::NoControlSurvivors);
    }
    let h0 = m.h0_or(UndefinedReason::NoControlSurvivors)?;
    let lb = m.h1 - 1.0 + (1.0 - h0) / m.s1 * common;
    let ub = m.h1 - f64::max(0.0, (m.j0 - m.s0) / common + 1.0);
    Ok((lb, ub))
}

fn ates(m: &PeriodMargins) -> Result<(f64, f64), UndefinedReason> {
    let delta = m.s1 + m.s0 - 1.0;
    if delta <= 0.0 {
        return Err(UndefinedReason::NoCommonSurvivors);
    }
    let lb = f64::max(0.0, (m.j1 + m.s0 - 1.0) / delta) - f64::min(1.0, m.j0 / delta);
    let ub = f64::min(1.0, m.j1 / delta) - f64::max(0.0, (m.j0 + m.s1 - 1.0) / delta);
    Ok((lb, ub))
}

/// Known-sign refinement under MTR and common shocks. A non-negative effect
/// raises the lower bound to `max{0, h1 - j0 / s1}`; a non-positive one caps
/// the upper bound at 0.
/// `None` when the refined endpoints cross.
fn apply_sign(m: &PeriodMargins, sign: MtrSign, lb: f64, ub: f64) -> Option<(f64, f64)> {
    let (lb, ub) = signed_endpoints(m, sign, lb, ub);
    if lb <= ub {
        Some((lb, ub))
    } else if lb - ub <= CROSSING_SLACK {
        let mid = 0.5 * (lb + ub);
        Some((mid, mid))
    } else {
        None
    }
}

fn signed_endpoints(m: &PeriodMargins, sign: MtrSign, lb: f64, ub: f64) -> (f64, f64) {
    match sign {
        MtrSign::Unknown => (lb, ub),
        MtrSign::NonNegative => (lb.max(f64::max(0.0, m.h1 - m.j0 / m.s1)), ub),
        MtrSign::NonPositive => (lb, ub.min(0.0)),
    }
}

/// Interval width plus, for the no-assumption regime with neither clamp
/// binding, the closed form `(2 - s1 - s0) / s1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WidthReport {
    pub width: f64,
    pub analytic: Option<f64>,
}

pub fn width(b: &BoundsResult) -> WidthReport {
    let analytic = match (b.regime.tag, b.margins, b.undefined) {
        (RegimeTag::NoAssumption, Some(m), false) => {
            let lower_free = (1.0 - (m.s0 - m.j0)) / m.s1 <= 1.0;
            let upper_free = (m.j0 - 1.0) / m.s1 + 1.0 >= 0.0;
            (lower_free && upper_free).then(|| (2.0 - m.s1 - m.s0) / m.s1)
        }
        _ => None,
    };
    WidthReport {
        width: b.width,
        analytic,
    }
}

/// The no-assumption interval for the counterfactual mean
/// `E(Y_t^0 | treated survivors)`, i.e. `[h1 - ub, h1 - lb]`.
pub fn counterfactual_mean_interval(est: &ArmEstimates, t: u32) -> Result<Option<(f64, f64)>, BoundsError> {
    let b = bounds_no_assumption(est, t)?;
    Ok(b.margins
        .filter(|_| !b.undefined)
        .map(|m| (m.h1 - b.ub, m.h1 - b.lb)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Estimates at `t = 2` with the stated hazards and survival through period 1.
    fn two_period(h1: f64, h0: f64, s1: f64, s0: f64) -> ArmEstimates {
        ArmEstimates::from_hazards(&[1.0 - s1, h1], &[1.0 - s0, h0])
    }

    fn assert_interval(b: &BoundsResult, lb: f64, ub: f64, tol: f64) {
        assert!(!b.undefined, "{b:?}");
        assert!((b.lb - lb).abs() <= tol, "lb {} vs {lb}", b.lb);
        assert!((b.ub - ub).abs() <= tol, "ub {} vs {ub}", b.ub);
    }

    #[test]
    fn theorem1_worked_examples() {
        let est = two_period(0.3, 0.25, 0.8, 0.9);
        assert_interval(&bounds_no_assumption(&est, 2).unwrap(), -0.10625, 0.26875, 1e-12);
        let est = two_period(0.5, 0.9, 0.5, 0.2);
        assert_interval(&bounds_no_assumption(&est, 2).unwrap(), -0.5, 0.5, 1e-12);
    }

    #[test]
    fn mtr_cs_worked_examples() {
        let est = two_period(0.3, 0.25, 0.8, 0.9);
        let b = bounds_mtr_cs(&est, 2, MtrSign::Unknown).unwrap();
        assert_interval(&b, 0.01875, 0.14375, 1e-12);
        assert!(b.is_within(&bounds_no_assumption(&est, 2).unwrap(), 0.0));

        let est = two_period(0.1, 0.6, 0.9, 0.5);
        let b = bounds_mtr_cs(&est, 2, MtrSign::NonNegative).unwrap();
        assert_eq!(b.lb, 0.0);
        // The upper bound here is negative, so a non-negative effect is rejected.
        assert_eq!(b.reason, Some(UndefinedReason::EmptyIdentifiedSet));
        assert!(b.ub < 0.0);
    }

    #[test]
    fn nonpositive_sign_caps_upper_bound() {
        let est = two_period(0.3, 0.25, 0.8, 0.9);
        let b = bounds_mtr_cs(&est, 2, MtrSign::NonPositive).unwrap();
        assert_eq!(b.ub, 0.0);
        assert!((b.lb - 0.01875).abs() < 1e-12);
        // lb 0.01875 > ub 0: the data contradict a non-positive effect.
        assert_eq!(b.reason, Some(UndefinedReason::EmptyIdentifiedSet));
        let est = two_period(0.2, 0.25, 0.8, 0.9);
        let b = bounds_mtr_cs(&est, 2, MtrSign::NonPositive).unwrap();
        assert!(!b.undefined && b.ub == 0.0 && b.lb < 0.0);
    }

    #[test]
    fn sign_is_rejected_outside_mtr_regimes() {
        assert_eq!(
            AssumptionRegime::new(RegimeTag::Pco, MtrSign::NonNegative),
            Err(BoundsError::SignWithoutMtr)
        );
    }

    #[test]
    fn pco_worked_examples() {
        let est = two_period(0.3, 0.25, 0.8, 0.9);
        assert_interval(&bounds_pco(&est, 2).unwrap(), -0.04375, 0.264_285_714_285_714_3, 1e-7);
        // Factor (1 - 0.6) + (1 - 0.5) - 1 < 0 selects the trivial branch.
        let est = ArmEstimates::from_hazards(&[0.6, 0.3], &[0.5, 0.2]);
        let b = bounds_pco(&est, 2).unwrap();
        assert_interval(&b, -0.7, 0.3, 1e-15);
        assert_eq!(width(&b).width, 1.0);
    }

    #[test]
    fn mtr_cs_pco_worked_example() {
        let est = two_period(0.3, 0.25, 0.8, 0.9);
        let b = bounds_mtr_cs_pco(&est, 2, MtrSign::Unknown).unwrap();
        assert_interval(&b, 0.05, 0.14375, 1e-12);
        assert!(b.is_within(&bounds_mtr_cs(&est, 2, MtrSign::Unknown).unwrap(), 1e-15));
        assert!(b.is_within(&bounds_pco(&est, 2).unwrap(), 1e-15));
    }

    #[test]
    fn ates_worked_example_and_gate() {
        let est = two_period(0.3, 0.25, 0.8, 0.9);
        assert_interval(&bounds_ates(&est, 2).unwrap(), -0.121_428_571_4, 0.307_142_857_1, 1e-7);
        let est = two_period(0.3, 0.25, 0.4, 0.5);
        let b = bounds_ates(&est, 2).unwrap();
        assert!(b.undefined);
        assert_eq!(b.reason, Some(UndefinedReason::NoCommonSurvivors));
        assert!(b.reason.unwrap().is_by_theorem());
    }

    #[test]
    fn period_one_and_no_attrition_are_points() {
        let est = ArmEstimates::from_hazards(&[0.3, 0.4], &[0.1, 0.2]);
        for tag in [RegimeTag::NoAssumption, RegimeTag::MtrCs, RegimeTag::Pco, RegimeTag::MtrCsPco, RegimeTag::Ates] {
            let b = evaluate(&est, 1, tag.into()).unwrap();
            assert!(b.point_identified);
            assert_eq!(b.lb, 0.3 - 0.1);
        }
        let est = ArmEstimates::from_hazards(&[0.0, 0.45], &[0.0, 0.15]);
        for tag in [RegimeTag::NoAssumption, RegimeTag::MtrCs, RegimeTag::Pco, RegimeTag::MtrCsPco, RegimeTag::Ates] {
            let b = evaluate(&est, 2, tag.into()).unwrap();
            assert_eq!((b.lb, b.ub), (0.45 - 0.15, 0.45 - 0.15));
            assert_eq!(width(&b).width, 0.0);
        }
    }

    #[test]
    fn undefined_without_treated_survivors() {
        let est = ArmEstimates::from_hazards(&[1.0, 0.5], &[0.3, 0.2]);
        let b = bounds_no_assumption(&est, 2).unwrap();
        assert!(b.undefined && b.lb.is_nan());
        assert_eq!(b.reason, Some(UndefinedReason::NoTreatedSurvivors));
    }

    #[test]
    fn exhausted_control_arm() {
        // Control survival is zero; only j0 = 0 enters the no-assumption bounds.
        let est = ArmEstimates::from_hazards(&[0.5, 0.4, 0.3], &[0.5, 1.0, 0.0]);
        let b = bounds_no_assumption(&est, 3).unwrap();
        assert!(!b.undefined);
        assert_interval(&b, 0.3 - 1.0, 0.3, 1e-15);
        let b = bounds_mtr_cs_pco(&est, 3, MtrSign::Unknown).unwrap();
        assert_eq!(b.reason, Some(UndefinedReason::NoControlSurvivors));
    }

    #[test]
    fn out_of_range_period_is_an_error() {
        let est = ArmEstimates::from_hazards(&[0.5], &[0.5]);
        assert_eq!(
            bounds_no_assumption(&est, 2),
            Err(BoundsError::PeriodOutOfRange { t: 2, t_max: 1 })
        );
        assert!(bounds_no_assumption(&est, 0).is_err());
    }

    #[test]
    fn width_paths_agree_without_clamps() {
        let est = two_period(0.3, 0.25, 0.8, 0.9);
        let w = width(&bounds_no_assumption(&est, 2).unwrap());
        assert!((w.width - 0.375).abs() < 1e-12);
        assert!((w.analytic.unwrap() - 0.375).abs() < 1e-12);
        // Both clamps bind here.
        let w = width(&bounds_no_assumption(&two_period(0.5, 0.9, 0.5, 0.2), 2).unwrap());
        assert_eq!(w.analytic, None);
    }

    #[test]
    fn counterfactual_interval_matches_direct_form() {
        let est = ArmEstimates::from_hazards(&[0.2, 0.3], &[0.1, 0.25]);
        let (lo, hi) = counterfactual_mean_interval(&est, 2).unwrap().unwrap();
        assert!((lo - 0.03125).abs() < 1e-12);
        assert!((hi - 0.40625).abs() < 1e-12);
    }

    #[test]
    fn regime_names_round_trip() {
        for tag in [RegimeTag::NoAssumption, RegimeTag::MtrCs, RegimeTag::Pco, RegimeTag::MtrCsPco, RegimeTag::Ates] {
            assert_eq!(tag.name().parse::<RegimeTag>().unwrap(), tag);
        }
        assert!("mtr".parse::<RegimeTag>().is_err());
        assert_eq!("nonneg".parse::<MtrSign>().unwrap(), MtrSign::NonNegative);
    }
}
