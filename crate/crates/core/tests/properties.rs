mod common;

use proptest::collection::vec;
use proptest::prelude::*;

use dynbounds::bounds::{
    bounds_ates, bounds_mtr_cs, bounds_mtr_cs_pco, bounds_no_assumption, bounds_pco, evaluate, AssumptionRegime,
    MtrSign, RegimeTag, UndefinedReason,
};
use dynbounds::data::{parse_compact_csv, Arm, PanelDataset, UnitRecord};
use dynbounds::estimate::{arm_estimates, arm_estimates_from_k, ArmEstimates};
use dynbounds::infer::{bootstrap_sample, interval_at, CriticalMethod};
use dynbounds::oracle::{lp_counterfactual_bounds_t2, JointOutcomeTable, ObservableMargins};
use dynbounds::simulate::{simulate, Dgp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{brute_life_table, random_duration_dgp, ref_ates, ref_no_assumption, Inputs};

fn record() -> impl Strategy<Value = (bool, u32, bool, Option<u32>)> {
    (any::<bool>(), 1u32..=12, any::<bool>(), prop::option::of(1u32..=14))
}

fn records() -> impl Strategy<Value = Vec<UnitRecord>> {
    vec(record(), 2..80).prop_map(|rows| {
        let mut out: Vec<UnitRecord> = rows
            .into_iter()
            .enumerate()
            .map(|(i, (treated, duration, event, start))| UnitRecord {
                id: format!("id{i}"),
                arm: if treated { Arm::Treated } else { Arm::Control },
                duration,
                event,
                treat_start: if treated { start } else { None },
            })
            .collect();
        // Both arms must be present.
        out[0].arm = Arm::Treated;
        out[1].arm = Arm::Control;
        out[1].treat_start = None;
        out
    })
}

fn dataset(recs: Vec<UnitRecord>) -> PanelDataset {
    let t_max = recs.iter().map(|r| r.duration).max().unwrap();
    PanelDataset::new(recs, t_max).unwrap()
}

fn hazard_vec(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(
        prop_oneof![1 => Just(0.0), 1 => Just(1.0), 8 => 0.0f64..1.0],
        len,
    )
}

fn hazard_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..=7).prop_flat_map(|n| (hazard_vec(n), hazard_vec(n)))
}

fn all_regimes() -> Vec<AssumptionRegime> {
    let mut v: Vec<AssumptionRegime> = [
        RegimeTag::NoAssumption,
        RegimeTag::MtrCs,
        RegimeTag::Pco,
        RegimeTag::MtrCsPco,
        RegimeTag::Ates,
    ]
    .iter()
    .map(|&t| t.into())
    .collect();
    for sign in [MtrSign::NonNegative, MtrSign::NonPositive] {
        v.push(AssumptionRegime::new(RegimeTag::MtrCs, sign).unwrap());
        v.push(AssumptionRegime::new(RegimeTag::MtrCsPco, sign).unwrap());
    }
    v
}

fn sorted(mut v: Vec<UnitRecord>) -> Vec<UnitRecord> {
    v.sort_by(|a, b| a.id.cmp(&b.id));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn csv_round_trip(recs in records()) {
        let ds = dataset(recs);
        let back = parse_compact_csv(ds.to_csv().as_bytes()).unwrap();
        let normalize = |v: &[UnitRecord]| -> Vec<UnitRecord> {
            sorted(v.iter().cloned().map(|mut r| {
                if r.arm == Arm::Treated && r.treat_start == Some(1) { r.treat_start = None; }
                r
            }).collect())
        };
        prop_assert_eq!(normalize(back.records()), normalize(ds.records()));
    }

    #[test]
    fn binning_is_monotone_and_width_one_is_identity(recs in records(), width in 1u32..5) {
        let ds = dataset(recs);
        prop_assert_eq!(ds.bin_periods(1).unwrap(), ds.clone());
        let binned = ds.bin_periods(width).unwrap();
        for (a, b) in ds.records().iter().zip(binned.records()) {
            prop_assert!(b.duration <= a.duration);
            prop_assert_eq!(b.duration, a.duration.div_ceil(width));
            prop_assert_eq!(a.event, b.event);
        }
        prop_assert_eq!(binned.bin_width(), width);
    }

    #[test]
    fn risk_set_accounting(recs in records()) {
        let ds = dataset(recs);
        for arm in Arm::BOTH {
            let table = ds.risk_table(arm);
            let t_max = ds.t_max() as usize;
            for t in 1..=t_max {
                let reaching = ds.records().iter().filter(|r| r.arm == arm && r.duration as usize >= t).count();
                let next = if t < t_max { table.at_risk[t] } else { 0 };
                prop_assert_eq!(table.at_risk[t - 1], reaching);
                prop_assert_eq!(reaching, table.events[t - 1] + table.censored[t - 1] + next);
            }
        }
    }

    #[test]
    fn life_table_matches_direct_tally_without_censoring(
        durations in vec((any::<bool>(), 1u32..=8), 2..60)
    ) {
        let mut recs: Vec<UnitRecord> = durations.iter().enumerate().map(|(i, &(treated, d))| UnitRecord {
            id: format!("u{i}"),
            arm: if treated { Arm::Treated } else { Arm::Control },
            duration: d,
            event: true,
            treat_start: None,
        }).collect();
        recs[0].arm = Arm::Treated;
        recs[1].arm = Arm::Control;
        let ds = dataset(recs.clone());
        let est = arm_estimates(&ds, ds.t_max()).unwrap();
        for arm in Arm::BOTH {
            let rows: Vec<(u32, bool)> = recs.iter().filter(|r| r.arm == arm).map(|r| (r.duration, r.event)).collect();
            let (h, s) = brute_life_table(&rows, ds.t_max());
            for t in 1..=ds.t_max() {
                let direct = rows.iter().filter(|r| r.0 > t).count() as f64 / rows.len() as f64;
                let survival = est.survival(arm, t).unwrap();
                prop_assert!((survival - direct).abs() < 1e-12);
                if s[t as usize - 1].is_finite() {
                    prop_assert!((survival - s[t as usize - 1]).abs() < 1e-12);
                }
                if let Some(hz) = est.hazard(arm, t) {
                    prop_assert!((hz - h[t as usize - 1]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn estimates_ignore_record_order(recs in records(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let ds = dataset(recs.clone());
        let mut shuffled = recs;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let other = dataset(shuffled);
        prop_assert_eq!(arm_estimates(&ds, ds.t_max()).unwrap(), arm_estimates(&other, other.t_max()).unwrap());
    }

    #[test]
    fn start_period_one_equals_plain_estimates(recs in records()) {
        let recs: Vec<UnitRecord> = recs.into_iter().map(|r| UnitRecord { treat_start: None, ..r }).collect();
        let ds = dataset(recs);
        let t = ds.t_max();
        let plain = arm_estimates(&ds, t).unwrap();
        prop_assert_eq!(arm_estimates_from_k(&ds, 1, t).unwrap(), plain.clone());
        for r in all_regimes() {
            for s in 1..=t {
                let a = evaluate(&plain, s, r).unwrap();
                let b = evaluate(&arm_estimates_from_k(&ds, 1, t).unwrap(), s, r).unwrap();
                prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
            }
        }
    }

    #[test]
    fn first_period_is_the_hazard_difference(h1 in 0.0f64..=1.0, h0 in 0.0f64..=1.0) {
        let est = ArmEstimates::from_hazards(&[h1, 0.5], &[h0, 0.5]);
        for r in all_regimes() {
            let b = evaluate(&est, 1, r).unwrap();
            if b.reason == Some(UndefinedReason::EmptyIdentifiedSet) {
                continue;
            }
            prop_assert!(b.point_identified);
            prop_assert_eq!(b.lb, h1 - h0);
        }
    }

    #[test]
    fn bounds_are_clamped_and_ordered((h1, h0) in hazard_pair()) {
        let est = ArmEstimates::from_hazards(&h1, &h0);
        for t in 1..=h1.len() as u32 {
            for r in all_regimes() {
                let b = evaluate(&est, t, r).unwrap();
                if b.undefined {
                    prop_assert!(b.reason.is_some());
                    continue;
                }
                prop_assert!(b.lb >= -1.0 && b.ub <= 1.0, "{:?}", b);
                prop_assert!(b.lb <= b.ub, "{:?}", b);
            }
        }
    }

    #[test]
    fn regimes_nest((h1, h0) in hazard_pair()) {
        let est = ArmEstimates::from_hazards(&h1, &h0);
        for t in 1..=h1.len() as u32 {
            let t1 = bounds_no_assumption(&est, t).unwrap();
            if t1.undefined {
                continue;
            }
            prop_assert!(bounds_pco(&est, t).unwrap().is_within(&t1, 1e-12));
            for sign in [MtrSign::Unknown, MtrSign::NonNegative, MtrSign::NonPositive] {
                let t2 = bounds_mtr_cs(&est, t, sign).unwrap();
                let t4 = bounds_mtr_cs_pco(&est, t, sign).unwrap();
                if t2.undefined || t4.undefined {
                    continue;
                }
                prop_assert!(t4.is_within(&t2, 1e-12));
                prop_assert!(t2.is_within(&t1, 1e-12));
            }
        }
    }

    #[test]
    fn closed_forms_match_reference((h1, h0) in hazard_pair()) {
        let est = ArmEstimates::from_hazards(&h1, &h0);
        for t in 1..=h1.len() {
            let x = Inputs::from_hazards(&h1, &h0, t);
            let b = bounds_no_assumption(&est, t as u32).unwrap();
            if x.s1 > 0.0 && t > 1 {
                let (lo, hi) = ref_no_assumption(x);
                prop_assert!((b.lb - lo).abs() < 1e-12 && (b.ub - hi).abs() < 1e-12);
            }
            let a = bounds_ates(&est, t as u32).unwrap();
            match ref_ates(x) {
                Some((lo, hi)) if t > 1 => {
                    prop_assert!((a.lb - lo).abs() < 1e-12 && (a.ub - hi).abs() < 1e-12);
                }
                None => prop_assert!(a.undefined),
                _ => {}
            }
        }
    }

    #[test]
    fn lp_is_sharp_at_two_periods(h1 in (0.0f64..0.99, 0.0f64..=1.0), h0 in (0.0f64..=1.0, 0.0f64..=1.0)) {
        let (h1, h0) = ([h1.0, h1.1], [h0.0, h0.1]);
        let m = ObservableMargins::from_hazards(&h1, &h0).unwrap();
        let (lo, hi) = lp_counterfactual_bounds_t2(&m).unwrap();
        let b = bounds_no_assumption(&ArmEstimates::from_hazards(&h1, &h0), 2).unwrap();
        prop_assert!((b.lb - (h1[1] - hi)).abs() < 1e-9);
        prop_assert!((b.ub - (h1[1] - lo)).abs() < 1e-9);
    }

    #[test]
    fn no_assumption_bounds_move_with_the_hazards(
        (h1, h0) in (2usize..=6).prop_flat_map(|n| (hazard_vec(n), hazard_vec(n))),
        bump in 0.001f64..0.3,
    ) {
        let t = h1.len();
        let base = bounds_no_assumption(&ArmEstimates::from_hazards(&h1, &h0), t as u32).unwrap();
        prop_assume!(!base.undefined);
        let mut up1 = h1.clone();
        up1[t - 1] = (up1[t - 1] + bump).min(1.0);
        let b1 = bounds_no_assumption(&ArmEstimates::from_hazards(&up1, &h0), t as u32).unwrap();
        prop_assert!(b1.lb >= base.lb - 1e-12 && b1.ub >= base.ub - 1e-12);
        let mut up0 = h0.clone();
        up0[t - 1] = (up0[t - 1] + bump).min(1.0);
        let b0 = bounds_no_assumption(&ArmEstimates::from_hazards(&h1, &up0), t as u32).unwrap();
        prop_assert!(b0.lb <= base.lb + 1e-12 && b0.ub <= base.ub + 1e-12);
    }

    #[test]
    fn joint_tables_respect_their_bounds(cells in vec(0.0f64..1.0, 16), zero_mask in vec(any::<bool>(), 16)) {
        // Absorbing: no second-period transition after a first-period one.
        let mut p = [0.0; 16];
        for (i, c) in cells.iter().enumerate() {
            let (d1, d2, d3, d4) = (i >> 3 & 1, i >> 2 & 1, i >> 1 & 1, i & 1);
            if (d1 == 1 && d2 == 1) || (d3 == 1 && d4 == 1) || zero_mask[i] {
                continue;
            }
            p[JointOutcomeTable::index(d1 as u8, d2 as u8, d3 as u8, d4 as u8)] = *c;
        }
        let total: f64 = p.iter().sum();
        prop_assume!(total > 0.0);
        for x in &mut p {
            *x /= total;
        }
        let jt = JointOutcomeTable::new(p).unwrap();
        prop_assert!(jt.absorbing_check());
        let Some(effect) = jt.exact_effects().atets2 else { return Ok(()); };
        let m = jt.margins();
        let est = ArmEstimates::from_hazards(
            &[m.treated[0], m.treated[1] / (1.0 - m.treated[0])],
            &[m.control[0], if m.control[0] < 1.0 { m.control[1] / (1.0 - m.control[0]) } else { 0.0 }],
        );
        prop_assert!(bounds_no_assumption(&est, 2).unwrap().contains(effect, 1e-9));
        let mtr = jt.satisfies_mtr(true) || jt.satisfies_mtr(false);
        if mtr && jt.satisfies_cs() {
            prop_assert!(bounds_mtr_cs(&est, 2, MtrSign::Unknown).unwrap().contains(effect, 1e-9));
        }
        if jt.satisfies_pco() {
            prop_assert!(bounds_pco(&est, 2).unwrap().contains(effect, 1e-9));
            if mtr && jt.satisfies_cs() {
                prop_assert!(bounds_mtr_cs_pco(&est, 2, MtrSign::Unknown).unwrap().contains(effect, 1e-9));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn structural_tables_respect_tighter_bounds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sign = rand::Rng::gen_bool(&mut rng, 0.5);
        let p = random_duration_dgp(&mut rng, Some(true), Some(sign));
        let model = Dgp::Duration(p).latent().unwrap();
        let jt = model.joint_table_t2().unwrap();
        let pop = model.exact_population();
        let effect = jt.exact_effects().atets2.unwrap();
        prop_assert!((effect - pop.truth.atets[1].unwrap()).abs() < 1e-12);
        prop_assert!(bounds_mtr_cs(&pop.estimates, 2, MtrSign::Unknown).unwrap().contains(effect, 1e-9));
    }

    #[test]
    fn confidence_intervals_contain_bounds_and_grow_as_alpha_falls(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dgp = Dgp::Duration(random_duration_dgp(&mut rng, None, None));
        let (ds, _) = simulate(&dgp, 400, seed, 1000).unwrap();
        let est = arm_estimates(&ds, ds.t_max()).unwrap();
        let sample = bootstrap_sample(ds.records(), ds.t_max(), 49, seed).unwrap();
        for r in all_regimes() {
            for t in 1..=ds.t_max() {
                let b = evaluate(&est, t, r).unwrap();
                let wide = interval_at(&est, &sample, t, r, 0.01, 0.001, CriticalMethod::Bonferroni);
                let narrow = interval_at(&est, &sample, t, r, 0.05, 0.001, CriticalMethod::Bonferroni);
                let (Ok((_, _, wide)), Ok((_, _, narrow))) = (wide, narrow) else { continue };
                prop_assert!(wide.lo <= narrow.lo && narrow.hi <= wide.hi);
                if b.reason.is_none() {
                    prop_assert!(narrow.lo <= b.lb + 1e-12 && b.ub <= narrow.hi + 1e-12, "{:?} {:?}", b, narrow);
                }
                let again = interval_at(&est, &sample, t, r, 0.05, 0.001, CriticalMethod::Bonferroni).unwrap().2;
                prop_assert_eq!(again.lo.to_bits(), narrow.lo.to_bits());
                prop_assert_eq!(again.hi.to_bits(), narrow.hi.to_bits());
            }
        }
    }

    #[test]
    fn simulated_data_follow_the_observation_rule(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = Dgp::Duration(random_duration_dgp(&mut rng, None, None)).latent().unwrap();
        let units = model.draw_units(301, seed);
        prop_assert_eq!(units.iter().filter(|u| u.arm == Arm::Treated).count(), 150);
        for (i, u) in units.iter().enumerate() {
            let rec = u.observe(format!("u{i}"), model.t_max);
            let d = u32::from(u.arm == Arm::Treated);
            for t in 1..=rec.duration {
                let observed = u32::from(rec.event && t == rec.duration);
                let bit = |p: u32| p >> (t - 1) & 1;
                prop_assert_eq!(observed, d * bit(u.y1) + (1 - d) * bit(u.y0));
            }
            prop_assert_eq!(model.draw_units(301, seed)[i], *u);
        }
    }
}
