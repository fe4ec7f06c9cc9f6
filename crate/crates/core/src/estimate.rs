//! Life-table estimates of per-arm hazards, survival fractions and joint
//! exit probabilities.
//!
//! Periods are 1-based throughout. `survival(arm, 0)` is 1 by definition.

use serde::Serialize;
use thiserror::Error;

use crate::data::{Arm, PanelDataset, UnitRecord};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimateError {
    #[error("no units in the {0} arm satisfy the conditioning event")]
    EmptyArm(Arm),
    #[error("treatment start period must be at least 1")]
    InvalidStart,
    #[error("horizon must be at least 1")]
    ZeroHorizon,
}

/// Per-arm transition and survival estimates up to `t_max`.
///
/// A hazard is `None` when its risk set is empty. Survival is `None` once it
/// can no longer be identified, i.e. after a period whose risk set emptied
/// through censoring while survival was still positive.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmEstimates {
    t_max: u32,
    n: [usize; 2],
    risk: [Vec<usize>; 2],
    events: [Vec<usize>; 2],
    hazard: [Vec<Option<f64>>; 2],
    survival: [Vec<Option<f64>>; 2],
}

impl ArmEstimates {
    /// Estimates from raw risk-set and event counts (`risk[t - 1]`, `events[t - 1]`).
    pub fn from_counts(n: [usize; 2], risk: [Vec<usize>; 2], events: [Vec<usize>; 2]) -> Self {
        let t_max = risk[0].len();
        debug_assert!(risk.iter().chain(events.iter()).all(|v| v.len() == t_max));
        let mut hazard: [Vec<Option<f64>>; 2] = Default::default();
        let mut survival: [Vec<Option<f64>>; 2] = Default::default();
        for d in 0..2 {
            hazard[d] = (0..t_max)
                .map(|t| (risk[d][t] > 0).then(|| events[d][t] as f64 / risk[d][t] as f64))
                .collect();
            survival[d] = survival_path(&hazard[d]);
        }
        ArmEstimates {
            t_max: t_max as u32,
            n,
            risk,
            events,
            hazard,
            survival,
        }
    }

    /// Population-mode estimates from exact hazards `h_d(1..=t_max)`; unit and
    /// risk-set counts are reported as zero.
    pub fn from_hazards(treated: &[f64], control: &[f64]) -> Self {
        assert_eq!(treated.len(), control.len(), "hazard paths must share a horizon");
        let t_max = treated.len();
        let mut hazard: [Vec<Option<f64>>; 2] = Default::default();
        let mut survival: [Vec<Option<f64>>; 2] = Default::default();
        for (d, path) in [control, treated].into_iter().enumerate() {
            hazard[d] = path.iter().map(|&h| Some(h)).collect();
            survival[d] = survival_path(&hazard[d]);
        }
        ArmEstimates {
            t_max: t_max as u32,
            n: [0, 0],
            risk: [vec![0; t_max], vec![0; t_max]],
            events: [vec![0; t_max], vec![0; t_max]],
            hazard,
            survival,
        }
    }

    /// Life-table estimates from any collection of records (used directly by
    /// the bootstrap, where an arm may come out empty).
    pub fn from_records<'a, I>(records: I, t_max: u32) -> Self
    where
        I: IntoIterator<Item = &'a UnitRecord>,
    {
        let tm = t_max as usize;
        let mut n = [0usize; 2];
        let mut exits = [vec![0usize; tm], vec![0usize; tm]];
        let mut events = [vec![0usize; tm], vec![0usize; tm]];
        for r in records {
            let d = r.arm.index();
            n[d] += 1;
            // Durations past the horizon count as censored at the horizon.
            let (t, ev) = if r.duration as usize > tm {
                (tm, false)
            } else {
                (r.duration as usize, r.event)
            };
            exits[d][t - 1] += 1;
            if ev {
                events[d][t - 1] += 1;
            }
        }
        let mut risk = [vec![0usize; tm], vec![0usize; tm]];
        for d in 0..2 {
            let mut remaining = n[d];
            for t in 0..tm {
                risk[d][t] = remaining;
                remaining -= exits[d][t];
            }
        }
        Self::from_counts(n, risk, events)
    }

    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn n(&self, arm: Arm) -> usize {
        self.n[arm.index()]
    }

    pub fn risk(&self, arm: Arm, t: u32) -> usize {
        self.risk[arm.index()][t as usize - 1]
    }

    pub fn events(&self, arm: Arm, t: u32) -> usize {
        self.events[arm.index()][t as usize - 1]
    }

    /// `Pr(Y_t = 1 | no transition before t, D = arm)`.
    pub fn hazard(&self, arm: Arm, t: u32) -> Option<f64> {
        self.hazard[arm.index()][t as usize - 1]
    }

    /// `Pr(no transition through t | D = arm)`, `t = 0..=t_max`.
    pub fn survival(&self, arm: Arm, t: u32) -> Option<f64> {
        self.survival[arm.index()][t as usize]
    }

    /// `Pr(Y_t = 1, no transition before t | D = arm)`. Zero whenever
    /// survival to `t - 1` is zero, even though the hazard is undefined there.
    pub fn joint(&self, arm: Arm, t: u32) -> Option<f64> {
        let s = self.survival(arm, t - 1)?;
        if s == 0.0 {
            return Some(0.0);
        }
        Some(self.hazard(arm, t)? * s)
    }
}

fn survival_path(hazard: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(hazard.len() + 1);
    let mut s = Some(1.0);
    out.push(s);
    for h in hazard {
        s = match (s, h) {
            (Some(prev), Some(h)) => Some(prev * (1.0 - h)),
            (Some(prev), None) if prev == 0.0 => Some(0.0),
            _ => None,
        };
        out.push(s);
    }
    out
}

/// Life-table estimates over `1..=t_max` for a dataset randomized in period 1.
pub fn arm_estimates(ds: &PanelDataset, t_max: u32) -> Result<ArmEstimates, EstimateError> {
    if t_max == 0 {
        return Err(EstimateError::ZeroHorizon);
    }
    for arm in Arm::BOTH {
        if ds.arm_size(arm) == 0 {
            return Err(EstimateError::EmptyArm(arm));
        }
    }
    Ok(ArmEstimates::from_records(ds.records(), t_max))
}

/// Restricts the sample to units that survive untreated to period `k` and
/// re-indexes time so that `k` becomes period 1.
///
/// Treated: treatment starts exactly at `k`. Control: untreated at `k`. A
/// control-side unit whose treatment starts later, at `s`, is censored at
/// `s - 1`. Returned as owned records so callers can rebuild estimates.
pub fn records_from_k(ds: &PanelDataset, k: u32) -> Result<Vec<UnitRecord>, EstimateError> {
    if k == 0 {
        return Err(EstimateError::InvalidStart);
    }
    let shift = k - 1;
    let mut out = Vec::new();
    for r in ds.records().iter().filter(|r| r.duration >= k) {
        let start = r.treatment_start();
        let reindexed = |duration: u32, event: bool, arm: Arm| UnitRecord {
            id: r.id.clone(),
            arm,
            duration: duration - shift,
            event,
            treat_start: None,
        };
        match start {
            Some(s) if s == k => out.push(reindexed(r.duration, r.event, Arm::Treated)),
            Some(s) if s < k => {}
            Some(s) if s <= r.duration => out.push(reindexed(s - 1, false, Arm::Control)),
            _ => out.push(reindexed(r.duration, r.event, Arm::Control)),
        }
    }
    for arm in Arm::BOTH {
        if !out.iter().any(|r| r.arm == arm) {
            return Err(EstimateError::EmptyArm(arm));
        }
    }
    Ok(out)
}

/// Estimates for a treatment started in period `k`, conditional on survival
/// untreated to `k`. `t_max` counts re-indexed periods.
pub fn arm_estimates_from_k(
    ds: &PanelDataset,
    k: u32,
    t_max: u32,
) -> Result<ArmEstimates, EstimateError> {
    if t_max == 0 {
        return Err(EstimateError::ZeroHorizon);
    }
    let records = records_from_k(ds, k)?;
    Ok(ArmEstimates::from_records(&records, t_max))
}
