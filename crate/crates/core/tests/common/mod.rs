//! Helpers shared by the integration tests: fixture builders, random
//! generators and reference implementations written directly from the
//! formulas, independent of the library's code paths.
#![allow(dead_code)]

use dynbounds::data::{parse_compact_csv, PanelDataset};
use dynbounds::simulate::{DurationDgpParams, ScalarDist, ShockDist, ShockMode};
use rand::Rng;

/// Builds a dataset from `(arm, duration, event)` triples.
pub fn dataset(rows: &[(u8, u32, bool)]) -> PanelDataset {
    let mut s = String::from("id,arm,duration,event\n");
    for (i, (arm, dur, ev)) in rows.iter().enumerate() {
        s.push_str(&format!("u{i},{arm},{dur},{}\n", u8::from(*ev)));
    }
    parse_compact_csv(s.as_bytes()).expect("valid fixture")
}

/// Expands counts `(arm, duration, event, copies)`.
pub fn dataset_from_counts(groups: &[(u8, u32, bool, usize)]) -> PanelDataset {
    let rows: Vec<(u8, u32, bool)> = groups
        .iter()
        .flat_map(|&(a, d, e, n)| std::iter::repeat((a, d, e)).take(n))
        .collect();
    dataset(&rows)
}

/// Hazard and survival by direct tally: at risk in `t` means duration >= t.
pub fn brute_life_table(rows: &[(u32, bool)], t_max: u32) -> (Vec<f64>, Vec<f64>) {
    let mut hazard = Vec::new();
    let mut survival = Vec::new();
    let mut s = 1.0;
    for t in 1..=t_max {
        let at_risk = rows.iter().filter(|r| r.0 >= t).count();
        let events = rows.iter().filter(|r| r.0 == t && r.1).count();
        let h = if at_risk == 0 { f64::NAN } else { events as f64 / at_risk as f64 };
        s *= 1.0 - h;
        hazard.push(h);
        survival.push(s);
    }
    (hazard, survival)
}

/// Period-`t` inputs: hazards in `t`, survival to `t - 1`.
#[derive(Debug, Clone, Copy)]
pub struct Inputs {
    pub h1: f64,
    pub h0: f64,
    pub s1: f64,
    pub s0: f64,
}

impl Inputs {
    pub fn from_hazards(h1: &[f64], h0: &[f64], t: usize) -> Self {
        let surv = |h: &[f64]| h[..t - 1].iter().map(|x| 1.0 - x).product::<f64>();
        Inputs {
            h1: h1[t - 1],
            h0: h0[t - 1],
            s1: surv(h1),
            s0: surv(h0),
        }
    }
}

/// No-assumption interval, written from the counterfactual-mean range
/// `E(Y_t⁰ | treated survivors) ∈ [max(0, 1 - (1 - S0 + S0 h0)/S1) ... ]`.
pub fn ref_no_assumption(x: Inputs) -> (f64, f64) {
    let joint0 = x.h0 * x.s0;
    // Mass of control-survivor exits that could sit among treated survivors.
    let cf_hi = (joint0 / x.s1 + (1.0 - x.s0) / x.s1).min(1.0);
    let cf_lo = (1.0 - (1.0 - joint0) / x.s1).max(0.0);
    (x.h1 - cf_hi, x.h1 - cf_lo)
}

/// Survivor-common bounds under both arms.
pub fn ref_ates(x: Inputs) -> Option<(f64, f64)> {
    let delta = x.s1 + x.s0 - 1.0;
    if delta <= 0.0 {
        return None;
    }
    let (j1, j0) = (x.h1 * x.s1, x.h0 * x.s0);
    let m1 = ((j1 + x.s0 - 1.0) / delta).max(0.0)..=(j1 / delta).min(1.0);
    let m0 = ((j0 + x.s1 - 1.0) / delta).max(0.0)..=(j0 / delta).min(1.0);
    Some((m1.start() - m0.end(), m1.end() - m0.start()))
}

/// Random duration DGP. `shared` fixes the shock mode; `sign` restricts
/// `γ` to one sign (`Some(true)` nonnegative), `None` allows mixed signs.
pub fn random_duration_dgp<R: Rng>(rng: &mut R, shared: Option<bool>, sign: Option<bool>) -> DurationDgpParams {
    let alpha = (0..6).map(|_| rng.gen_range(-3.0..0.0)).collect();
    let draw_gamma = |rng: &mut R| -> f64 {
        let g = rng.gen_range(0.0..2.0);
        match sign {
            Some(true) => g,
            Some(false) => -g,
            None => g * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        }
    };
    let gamma = if rng.gen_bool(0.5) {
        ScalarDist::Point { value: draw_gamma(rng) }
    } else {
        let (a, b) = (draw_gamma(rng), draw_gamma(rng));
        ScalarDist::TwoPoint {
            low: a.min(b),
            high: a.max(b),
            p_high: rng.gen_range(0.1..0.9),
        }
    };
    let v = match rng.gen_range(0..3) {
        0 => ScalarDist::Point { value: 0.0 },
        1 => ScalarDist::TwoPoint {
            low: -rng.gen_range(0.0..2.0),
            high: rng.gen_range(0.0..2.0),
            p_high: rng.gen_range(0.1..0.9),
        },
        _ => ScalarDist::Normal {
            sd: rng.gen_range(0.1..1.5),
        },
    };
    let shared = shared.unwrap_or_else(|| rng.gen_bool(0.5));
    DurationDgpParams {
        t_max: 6,
        alpha,
        gamma,
        gamma_until: None,
        v,
        shock_mode: if shared { ShockMode::Shared } else { ShockMode::Independent },
        shock_dist: if rng.gen_bool(0.5) { ShockDist::Logistic } else { ShockDist::Normal },
        serial_corr: 0.0,
    }
}

/// Mixed-sign falsification family: two-point frailty, independent shocks,
/// effects of opposite sign across units.
pub fn random_mixed_sign_dgp<R: Rng>(rng: &mut R) -> DurationDgpParams {
    let mut p = random_duration_dgp(rng, Some(false), None);
    p.v = ScalarDist::TwoPoint {
        low: -rng.gen_range(0.5..2.5),
        high: rng.gen_range(0.5..2.5),
        p_high: rng.gen_range(0.2..0.8),
    };
    p.gamma = ScalarDist::TwoPoint {
        low: -rng.gen_range(0.5..3.0),
        high: rng.gen_range(0.5..3.0),
        p_high: rng.gen_range(0.2..0.8),
    };
    p
}
