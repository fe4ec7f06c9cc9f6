//! Independent checks on the closed-form bounds: linear programs over the
//! joint distribution of potential-outcome paths, and exact effects from a
//! known joint law.
//!
//! Cells of the two-period table are indexed by the bit pattern
//! `(Y1¹, Y2¹, Y1⁰, Y2⁰)`, most significant bit first.

use serde::Serialize;
use thiserror::Error;

use crate::data::Arm;
use crate::estimate::ArmEstimates;

const PIVOT_EPS: f64 = 1e-12;
const FEASIBILITY_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("the observable margins admit no joint distribution")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("margins are not valid probabilities: {0}")]
    InvalidMargins(String),
    #[error("conditioning event has zero probability")]
    ZeroConditioning,
    #[error("the general oracle supports t in 2..=3, got {0}")]
    UnsupportedHorizon(u32),
}

/// `min/max c·x` subject to `A x = b`, `x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub x: Vec<f64>,
}

impl LinearProgram {
    pub fn minimize(&self) -> Result<LpSolution, OracleError> {
        Tableau::solve(&self.objective, &self.rows, &self.rhs)
    }

    pub fn maximize(&self) -> Result<LpSolution, OracleError> {
        let neg: Vec<f64> = self.objective.iter().map(|c| -c).collect();
        let mut sol = Tableau::solve(&neg, &self.rows, &self.rhs)?;
        sol.value = -sol.value;
        Ok(sol)
    }
}

/// Dense two-phase simplex tableau with Bland's rule.
struct Tableau {
    /// `m` constraint rows followed by the objective row; last column is the rhs.
    cells: Vec<Vec<f64>>,
    basis: Vec<usize>,
    n_vars: usize,
}

impl Tableau {
    fn solve(c: &[f64], rows: &[Vec<f64>], rhs: &[f64]) -> Result<LpSolution, OracleError> {
        let n = c.len();
        let m = rows.len();
        let width = n + m + 1;
        let mut cells = Vec::with_capacity(m + 1);
        for (i, (row, &b)) in rows.iter().zip(rhs).enumerate() {
            debug_assert_eq!(row.len(), n);
            let sign = if b < 0.0 { -1.0 } else { 1.0 };
            let mut r = vec![0.0; width];
            for (j, &a) in row.iter().enumerate() {
                r[j] = sign * a;
            }
            r[n + i] = 1.0;
            r[width - 1] = sign * b;
            cells.push(r);
        }
        // Phase 1: minimize the sum of artificials.
        let mut obj = vec![0.0; width];
        for r in &cells {
            for j in 0..n {
                obj[j] -= r[j];
            }
            obj[width - 1] -= r[width - 1];
        }
        cells.push(obj);
        let mut tab = Tableau {
            cells,
            basis: (n..n + m).collect(),
            n_vars: n,
        };
        tab.iterate(n + m)?;
        if -tab.objective_value() > FEASIBILITY_EPS {
            return Err(OracleError::Infeasible);
        }
        tab.drive_out_artificials();

        // Phase 2 objective row: reduced costs of `c` under the current basis.
        let rows_now = tab.cells.len() - 1;
        let mut obj = vec![0.0; width];
        obj[..n].copy_from_slice(c);
        for i in 0..rows_now {
            let cb = c[tab.basis[i]];
            if cb != 0.0 {
                for j in 0..width {
                    obj[j] -= cb * tab.cells[i][j];
                }
            }
        }
        *tab.cells.last_mut().unwrap() = obj;
        tab.iterate(n)?;

        let mut x = vec![0.0; n];
        for (i, &bv) in tab.basis.iter().enumerate() {
            if bv < n {
                x[bv] = tab.cells[i][width - 1];
            }
        }
        let value = c.iter().zip(&x).map(|(a, b)| a * b).sum();
        Ok(LpSolution { value, x })
    }

    fn rhs_col(&self) -> usize {
        self.cells[0].len() - 1
    }

    fn objective_value(&self) -> f64 {
        let rhs = self.rhs_col();
        self.cells.last().unwrap()[rhs]
    }

    /// Pivots until optimal over columns `0..eligible`.
    fn iterate(&mut self, eligible: usize) -> Result<(), OracleError> {
        let rhs = self.rhs_col();
        let m = self.cells.len() - 1;
        loop {
            let obj = &self.cells[m];
            let Some(enter) = (0..eligible).find(|&j| obj[j] < -PIVOT_EPS) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = self.cells[i][enter];
                if a > PIVOT_EPS {
                    let ratio = self.cells[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - PIVOT_EPS
                                || (ratio <= lr + PIVOT_EPS && self.basis[i] < self.basis[li])
                            {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(OracleError::Unbounded);
            };
            self.pivot(row, enter);
        }
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.cells[row][col];
        for v in self.cells[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.cells[row].clone();
        for (i, r) in self.cells.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (v, pv) in r.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[row] = col;
    }

    /// After phase 1, replaces basic artificials by structural columns, and
    /// drops rows that turn out to be linearly dependent.
    fn drive_out_artificials(&mut self) {
        let n = self.n_vars;
        let mut i = 0;
        while i < self.cells.len() - 1 {
            if self.basis[i] >= n {
                match (0..n).find(|&j| self.cells[i][j].abs() > PIVOT_EPS) {
                    Some(j) => self.pivot(i, j),
                    None => {
                        self.cells.remove(i);
                        self.basis.remove(i);
                        continue;
                    }
                }
            }
            i += 1;
        }
    }
}

/// First-exit distribution of each arm through period `t`: entries `0..t`
/// are `Pr(first transition in s + 1 | D)`, entry `t` is `Pr(no transition
/// through t | D)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservableMargins {
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

impl ObservableMargins {
    pub fn new(treated: Vec<f64>, control: Vec<f64>) -> Result<Self, OracleError> {
        if treated.len() != control.len() || treated.len() < 3 {
            return Err(OracleError::InvalidMargins("both arms need t + 1 >= 3 entries".into()));
        }
        for arm in [&treated, &control] {
            if arm.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(OracleError::InvalidMargins(format!("{arm:?} outside [0, 1]")));
            }
            let total: f64 = arm.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(OracleError::InvalidMargins(format!("{arm:?} sums to {total}")));
            }
        }
        Ok(ObservableMargins { treated, control })
    }

    /// Margins implied by per-period hazards.
    pub fn from_hazards(treated: &[f64], control: &[f64]) -> Result<Self, OracleError> {
        let exits = |h: &[f64]| {
            let mut out = Vec::with_capacity(h.len() + 1);
            let mut s = 1.0;
            for &hz in h {
                out.push(s * hz);
                s *= 1.0 - hz;
            }
            out.push(s);
            out
        };
        Self::new(exits(treated), exits(control))
    }

    /// Margins through period `t` implied by life-table estimates.
    pub fn from_estimates(est: &ArmEstimates, t: u32) -> Result<Self, OracleError> {
        let arm = |a: Arm| -> Result<Vec<f64>, OracleError> {
            let mut out = Vec::with_capacity(t as usize + 1);
            for s in 1..=t {
                out.push(est.joint(a, s).ok_or(OracleError::ZeroConditioning)?);
            }
            out.push(est.survival(a, t).ok_or(OracleError::ZeroConditioning)?);
            Ok(out)
        };
        Self::new(arm(Arm::Treated)?, arm(Arm::Control)?)
    }

    pub fn horizon(&self) -> u32 {
        self.treated.len() as u32 - 1
    }

    fn survival_before(arm: &[f64], t: u32) -> f64 {
        1.0 - arm[..t as usize - 1].iter().sum::<f64>()
    }
}

/// Zero-based first period with a transition on a path of `t` bits (period 1
/// is the most significant bit), or `t` if none.
fn first_exit(path: usize, t: u32) -> usize {
    (0..t as usize)
        .find(|s| path >> (t as usize - 1 - s) & 1 == 1)
        .unwrap_or(t as usize)
}

/// Joint polytope over `(treated path, control path)` cells consistent with
/// the margins. Cell index is `treated_path * 2^t + control_path`.
fn polytope(m: &ObservableMargins) -> (usize, Vec<Vec<f64>>, Vec<f64>) {
    let t = m.horizon();
    let paths = 1usize << t;
    let cells = paths * paths;
    let groups = t as usize + 1;
    let mut rows = Vec::with_capacity(2 * groups);
    let mut rhs = Vec::with_capacity(2 * groups);
    for g in 0..groups {
        let mut r = vec![0.0; cells];
        for cell in 0..cells {
            if first_exit(cell / paths, t) == g {
                r[cell] = 1.0;
            }
        }
        rows.push(r);
        rhs.push(m.treated[g]);
    }
    for g in 0..groups {
        let mut r = vec![0.0; cells];
        for cell in 0..cells {
            if first_exit(cell % paths, t) == g {
                r[cell] = 1.0;
            }
        }
        rows.push(r);
        rhs.push(m.control[g]);
    }
    (cells, rows, rhs)
}

/// Range of `E(Y_t⁰ | no treated transition before t)` over every joint law of
/// potential paths consistent with the margins, for `t = horizon ∈ {2, 3}`.
pub fn lp_counterfactual_bounds(m: &ObservableMargins) -> Result<(f64, f64), OracleError> {
    let t = m.horizon();
    if !(2..=3).contains(&t) {
        return Err(OracleError::UnsupportedHorizon(t));
    }
    let s1 = ObservableMargins::survival_before(&m.treated, t);
    if s1 <= 0.0 {
        return Err(OracleError::ZeroConditioning);
    }
    let (cells, rows, rhs) = polytope(m);
    let paths = 1usize << t;
    let treated_survives = |p: usize| p >> 1 == 0;
    let control_exits_at_t = |p: usize| p & 1 == 1;
    let objective: Vec<f64> = (0..cells)
        .map(|c| {
            let (tp, cp) = (c / paths, c % paths);
            if treated_survives(tp) && control_exits_at_t(cp) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let lp = LinearProgram {
        objective,
        rows,
        rhs,
    };
    let lo = lp.minimize()?.value / s1;
    let hi = lp.maximize()?.value / s1;
    Ok((lo, hi))
}

/// Two-period counterfactual-mean range; the LP counterpart of the
/// no-assumption bounds at `t = 2`.
pub fn lp_counterfactual_bounds_t2(m: &ObservableMargins) -> Result<(f64, f64), OracleError> {
    if m.horizon() != 2 {
        return Err(OracleError::UnsupportedHorizon(m.horizon()));
    }
    lp_counterfactual_bounds(m)
}

/// Range of the survivor-conditional mean `E(Y_2^arm | Y1¹ = 0, Y1⁰ = 0)` at
/// `t = 2`, by the Charnes–Cooper transformation of the ratio objective.
pub fn lp_survivor_mean_bounds_t2(m: &ObservableMargins, arm: Arm) -> Result<(f64, f64), OracleError> {
    if m.horizon() != 2 {
        return Err(OracleError::UnsupportedHorizon(m.horizon()));
    }
    if m.treated[2] + m.treated[1] + m.control[2] + m.control[1] - 1.0 <= 0.0 {
        return Err(OracleError::ZeroConditioning);
    }
    let (cells, rows, rhs) = polytope(m);
    // Variables: y (cells) then the scale z; constraints A y - b z = 0, den(y) = 1.
    let mut lp_rows: Vec<Vec<f64>> = rows
        .iter()
        .zip(&rhs)
        .map(|(r, &b)| {
            let mut row = r.clone();
            row.push(-b);
            row
        })
        .collect();
    let survivor = |c: usize| c & 0b1000 == 0 && c & 0b0010 == 0;
    let mut den: Vec<f64> = (0..cells).map(|c| f64::from(u8::from(survivor(c)))).collect();
    den.push(0.0);
    lp_rows.push(den);
    let mut lp_rhs = vec![0.0; rows.len()];
    lp_rhs.push(1.0);
    let exit_bit = match arm {
        Arm::Treated => 0b0100,
        Arm::Control => 0b0001,
    };
    let mut objective: Vec<f64> = (0..cells)
        .map(|c| f64::from(u8::from(survivor(c) && c & exit_bit != 0)))
        .collect();
    objective.push(0.0);
    let lp = LinearProgram {
        objective,
        rows: lp_rows,
        rhs: lp_rhs,
    };
    Ok((lp.minimize()?.value, lp.maximize()?.value))
}

/// Sixteen-cell distribution of `(Y1¹, Y2¹, Y1⁰, Y2⁰)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JointOutcomeTable {
    pub p: [f64; 16],
}

/// Estimands computed by direct summation over a known joint law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactEffects {
    /// `None` when `Pr(Y1¹ = 0) = 0`.
    pub atets2: Option<f64>,
    /// `None` when `Pr(Y1¹ = 0, Y1⁰ = 0) = 0`.
    pub ates2: Option<f64>,
}

impl JointOutcomeTable {
    pub fn new(p: [f64; 16]) -> Result<Self, OracleError> {
        if p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(OracleError::InvalidMargins("negative cell".into()));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(OracleError::InvalidMargins(format!("cells sum to {total}")));
        }
        Ok(JointOutcomeTable { p })
    }

    pub fn index(d1: u8, d2: u8, d3: u8, d4: u8) -> usize {
        (usize::from(d1) << 3) | (usize::from(d2) << 2) | (usize::from(d3) << 1) | usize::from(d4)
    }

    pub fn cell(&self, d1: u8, d2: u8, d3: u8, d4: u8) -> f64 {
        self.p[Self::index(d1, d2, d3, d4)]
    }

    fn mass<F: Fn(u8, u8, u8, u8) -> bool>(&self, pred: F) -> f64 {
        let mut total = 0.0;
        for (i, &v) in self.p.iter().enumerate() {
            let bit = |k: usize| (i >> k & 1) as u8;
            if pred(bit(3), bit(2), bit(1), bit(0)) {
                total += v;
            }
        }
        total
    }

    /// Observable first-exit margins under random assignment and the
    /// observation rule `Y = D·Y¹ + (1 - D)·Y⁰`.
    pub fn margins(&self) -> ObservableMargins {
        let treated = vec![
            self.mass(|a, _, _, _| a == 1),
            self.mass(|a, b, _, _| a == 0 && b == 1),
            self.mass(|a, b, _, _| a == 0 && b == 0),
        ];
        let control = vec![
            self.mass(|_, _, c, _| c == 1),
            self.mass(|_, _, c, d| c == 0 && d == 1),
            self.mass(|_, _, c, d| c == 0 && d == 0),
        ];
        ObservableMargins { treated, control }
    }

    pub fn exact_effects(&self) -> ExactEffects {
        let treated_survivors = self.mass(|a, _, _, _| a == 0);
        let atets2 = (treated_survivors > 0.0).then(|| {
            (self.mass(|a, b, _, _| a == 0 && b == 1) - self.mass(|a, _, _, d| a == 0 && d == 1))
                / treated_survivors
        });
        let survivors = self.mass(|a, _, c, _| a == 0 && c == 0);
        let ates2 = (survivors > 0.0).then(|| {
            (self.mass(|a, b, c, _| a == 0 && c == 0 && b == 1)
                - self.mass(|a, _, c, d| a == 0 && c == 0 && d == 1))
                / survivors
        });
        ExactEffects { atets2, ates2 }
    }

    /// No mass on a second transition in either arm.
    pub fn absorbing_check(&self) -> bool {
        self.mass(|a, b, c, d| (a == 1 && b == 1) || (c == 1 && d == 1)) == 0.0
    }

    /// `Pr(Y_t¹ = 1 | S) - Pr(Y_t⁰ = 1 | S)` sign checks for `t = 1, 2` with
    /// `S` the joint survival event; `sign > 0` asks for a non-negative effect.
    pub fn satisfies_mtr(&self, nonnegative: bool) -> bool {
        let ok = |x: f64| if nonnegative { x >= -1e-15 } else { x <= 1e-15 };
        let first = self.mass(|a, _, _, _| a == 1) - self.mass(|_, _, c, _| c == 1);
        let surv = self.mass(|a, _, c, _| a == 0 && c == 0);
        let second = if surv > 0.0 {
            (self.mass(|a, b, c, _| a == 0 && c == 0 && b == 1)
                - self.mass(|a, _, c, d| a == 0 && c == 0 && d == 1))
                / surv
        } else {
            0.0
        };
        ok(first) && ok(second)
    }

    /// Common shocks: within the joint-survival event of each period, the arm
    /// with the larger survival probability survives whenever the other does.
    pub fn satisfies_cs(&self) -> bool {
        let period = |stay: &dyn Fn(u8, u8, u8, u8) -> bool, y1: &dyn Fn(u8, u8, u8, u8) -> u8, y0: &dyn Fn(u8, u8, u8, u8) -> u8| {
            let s1 = self.mass(|a, b, c, d| stay(a, b, c, d) && y1(a, b, c, d) == 0);
            let s0 = self.mass(|a, b, c, d| stay(a, b, c, d) && y0(a, b, c, d) == 0);
            let only_treated_exits = self.mass(|a, b, c, d| stay(a, b, c, d) && y1(a, b, c, d) == 1 && y0(a, b, c, d) == 0);
            let only_control_exits = self.mass(|a, b, c, d| stay(a, b, c, d) && y1(a, b, c, d) == 0 && y0(a, b, c, d) == 1);
            (s1 < s0 || only_control_exits == 0.0) && (s1 > s0 || only_treated_exits == 0.0)
        };
        period(&|_, _, _, _| true, &|a, _, _, _| a, &|_, _, c, _| c)
            && period(&|a, _, c, _| a == 0 && c == 0, &|_, b, _, _| b, &|_, _, _, d| d)
    }

    /// The four positive-correlation inequalities at `t = 2`.
    pub fn satisfies_pco(&self) -> bool {
        let cond = |num: f64, den: f64| if den > 0.0 { Some(num / den) } else { None };
        let base = self.mass(|a, _, c, _| a == 0 && c == 0);
        let Some(b0) = cond(self.mass(|a, _, c, d| a == 0 && c == 0 && d == 1), base) else {
            return true;
        };
        let b1 = cond(self.mass(|a, b, c, _| a == 0 && c == 0 && b == 1), base).unwrap();
        let ge = |v: Option<f64>, rhs: f64| v.map_or(true, |v| v >= rhs - 1e-15);
        let t_exit = self.mass(|a, _, c, _| a == 1 && c == 0);
        let c_exit = self.mass(|a, _, c, _| a == 0 && c == 1);
        ge(cond(self.mass(|a, _, c, d| a == 1 && c == 0 && d == 1), t_exit), b0)
            && ge(cond(self.mass(|a, b, c, _| a == 1 && c == 0 && b == 1), t_exit), b1)
            && ge(cond(self.mass(|a, _, c, d| a == 0 && c == 1 && d == 1), c_exit), b0)
            && ge(cond(self.mass(|a, b, c, _| a == 0 && c == 1 && b == 1), c_exit), b1)
    }
}

/// Result of the randomized LP-versus-closed-form comparison.
#[derive(Debug, Clone, Serialize)]
pub struct OracleCheckReport {
    pub trials: usize,
    pub matches: usize,
    pub max_abs_diff: f64,
    pub tolerance: f64,
}

impl OracleCheckReport {
    pub fn all_match(&self) -> bool {
        self.matches == self.trials
    }
}

/// Draws `trials` random two-period hazard vectors and compares the LP
/// counterfactual range with the no-assumption closed form.
pub fn oracle_check(trials: usize, seed: u64, tolerance: f64) -> OracleCheckReport {
    use rand::{Rng, SeedableRng};
    use rayon::prelude::*;

    let diffs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            // Keep Pr(Y1 = 0 | D = 1) away from zero.
            let h1 = [rng.gen_range(0.0..0.99), rng.gen::<f64>()];
            let h0 = [rng.gen::<f64>(), rng.gen::<f64>()];
            let est = ArmEstimates::from_hazards(&h1, &h0);
            let margins = ObservableMargins::from_hazards(&h1, &h0).expect("valid margins");
            let closed = crate::bounds::counterfactual_mean_interval(&est, 2)
                .expect("period in range")
                .expect("treated survivors exist");
            match lp_counterfactual_bounds_t2(&margins) {
                Ok((lo, hi)) => (lo - closed.0).abs().max((hi - closed.1).abs()),
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    OracleCheckReport {
        trials,
        matches: diffs.iter().filter(|&&d| d <= tolerance).count(),
        max_abs_diff: diffs.iter().copied().fold(0.0, f64::max),
        tolerance,
    }
}
