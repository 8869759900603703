//! Brute-force oracles and property checks shared by the property suite and
//! the acceptance target.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use chrono::{DateTime, Duration, TimeZone, Utc};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

use green_constraints::adapter::{exported_weight, parse_prolog, sanitize_atom, to_prolog};
use green_constraints::engine::{compute_threshold, select, Candidate};
use green_constraints::estimation::{CarbonProfile, CarbonSource, EnergyProfile, Profiles};
use green_constraints::ingest::{FlavourKey, LinkKey};
use green_constraints::kb::{KnowledgeBase, MemoryPolicy};
use green_constraints::model::{Constraint, ConstraintId, ConstraintKind, NodeId};
use green_constraints::ranker::{rank, RankerConfig};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn t0() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2025, 3, 2, 0, 0, 0).unwrap()
}

// ---------------------------------------------------------------- oracles

/// Empirical CDF evaluated at each observed value; the smallest value whose
/// CDF reaches `alpha`. Quadratic, for small inputs only.
pub fn brute_quantile(impacts: &[f64], alpha: f64) -> f64 {
    let n = impacts.len() as f64;
    impacts
        .iter()
        .copied()
        .filter(|x| impacts.iter().filter(|y| *y <= x).count() as f64 / n >= alpha)
        .fold(f64::INFINITY, f64::min)
}

/// Sort-and-cut with integer arithmetic, for `alpha = percent / 100`.
pub fn sort_and_cut_count(impacts: &[f64], percent: u64) -> usize {
    let mut sorted = impacts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as u64;
    let k = (percent * n).div_ceil(100).max(1);
    let tau = sorted[(k - 1) as usize];
    impacts.iter().filter(|x| **x > tau).count()
}

/// Plain left-to-right mean, min and max.
pub fn naive_stats(values: &[f64]) -> (f64, f64, f64) {
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        sum += v;
        min = min.min(*v);
        max = max.max(*v);
    }
    (sum / values.len() as f64, min, max)
}

/// Direct transcription of the ranking rule.
pub fn naive_rank(constraints: &[Constraint], cfg: &RankerConfig) -> Vec<(ConstraintId, f64)> {
    if constraints.is_empty() {
        return Vec::new();
    }
    let mut max = constraints[0].em;
    for c in constraints {
        if c.em > max {
            max = c.em;
        }
    }
    let mut out = Vec::new();
    for c in constraints {
        let mut w = if max > 0.0 { c.em / max } else { 0.0 };
        if c.em < cfg.min_impact {
            w *= cfg.lambda_low;
        }
        w *= c.mu;
        if w > 0.0 && w >= cfg.drop_weight {
            out.push((c.id.clone(), w));
        }
    }
    // Insertion sort: descending weight, then identity.
    for i in 1..out.len() {
        let mut j = i;
        while j > 0 && {
            let (a, b) = (&out[j - 1], &out[j]);
            a.1 < b.1 || (a.1 == b.1 && a.0 > b.0)
        } {
            out.swap(j - 1, j);
            j -= 1;
        }
    }
    out
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || ((a - b).abs() / a.abs().max(b.abs())) <= tol
}

// ------------------------------------------------------------- strategies

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9_.-]{0,8}"
}

pub fn constraint_id() -> impl Strategy<Value = ConstraintId> {
    (any::<bool>(), ident(), ident(), ident()).prop_map(|(avoid, s, f, t)| {
        if avoid {
            ConstraintId::avoid_node(s.into(), f.into(), t.into())
        } else {
            ConstraintId::affinity(s.into(), f.into(), t.into())
        }
    })
}

fn small_id() -> impl Strategy<Value = ConstraintId> {
    (0u8..4, 0u8..3)
        .prop_map(|(s, n)| ConstraintId::avoid_node(format!("s{s}").into(), "f".into(), format!("n{n}").into()))
}

// ------------------------------------------------------------- properties

/// Lower alpha never raises the threshold and never drops a constraint.
pub fn quantile_monotonicity_strategy() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
    (prop::collection::vec(0.0f64..1e6, 1..200), 0.01f64..0.99, 0.01f64..0.99)
}

pub fn check_quantile_monotonicity((impacts, a, b): (Vec<f64>, f64, f64)) -> Result<(), TestCaseError> {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let t_lo = compute_threshold(&impacts, lo).unwrap();
    let t_hi = compute_threshold(&impacts, hi).unwrap();
    prop_assert!(t_lo <= t_hi);
    let n_lo = impacts.iter().filter(|x| **x > t_lo).count();
    let n_hi = impacts.iter().filter(|x| **x > t_hi).count();
    prop_assert!(n_lo >= n_hi);
    prop_assert_eq!(t_lo, brute_quantile(&impacts, lo));
    Ok(())
}

fn candidates(impacts: &[f64]) -> Vec<Candidate> {
    impacts
        .iter()
        .enumerate()
        .map(|(i, x)| Candidate {
            id: ConstraintId::avoid_node("s".into(), "f".into(), format!("n{i:04}").into()),
            impact: *x,
        })
        .collect()
}

/// Integer-valued impacts times an integer factor are exact in f64, so the
/// selected set must not change.
pub fn selection_scale_strategy() -> impl Strategy<Value = (Vec<u32>, u32, f64)> {
    (prop::collection::vec(0u32..1_000_000, 1..150), 1u32..1000, 0.05f64..0.95)
}

pub fn check_selection_scale_invariance((raw, c, alpha): (Vec<u32>, u32, f64)) -> Result<(), TestCaseError> {
    let base: Vec<f64> = raw.iter().map(|x| f64::from(*x)).collect();
    let scaled: Vec<f64> = base.iter().map(|x| x * f64::from(c)).collect();
    let a = candidates(&base);
    let b = candidates(&scaled);
    let ids = |v: Vec<&Candidate>| v.into_iter().map(|c| c.id.clone()).collect::<Vec<_>>();
    prop_assert_eq!(ids(select(&a, alpha).unwrap().1), ids(select(&b, alpha).unwrap().1));
    Ok(())
}

/// Scaling every impact (all above the absolute floor) keeps weights and order.
pub fn rank_scale_strategy() -> impl Strategy<Value = (Vec<(ConstraintId, u32, u8)>, u32)> {
    (prop::collection::vec((constraint_id(), 100u32..1_000_000, 0u8..4), 1..60), 1u32..1000)
}

pub fn check_rank_scale_invariance((items, c): (Vec<(ConstraintId, u32, u8)>, u32)) -> Result<(), TestCaseError> {
    let mut seen = BTreeSet::new();
    let build = |factor: f64| -> Vec<Constraint> {
        items
            .iter()
            .map(|(id, em, k)| {
                let mut con = Constraint::fresh(id.clone(), f64::from(*em) * factor, t0());
                con.mu = 0.8f64.powi(i32::from(*k));
                con
            })
            .collect()
    };
    let base: Vec<Constraint> = build(1.0).into_iter().filter(|c| seen.insert(c.id.clone())).collect();
    let ids: BTreeSet<_> = base.iter().map(|c| c.id.clone()).collect();
    let mut seen2 = BTreeSet::new();
    let scaled: Vec<Constraint> =
        build(f64::from(c)).into_iter().filter(|c| ids.contains(&c.id) && seen2.insert(c.id.clone())).collect();
    let cfg = RankerConfig::default();
    let a = rank(base, &cfg);
    let b = rank(scaled, &cfg);
    prop_assert_eq!(a.len(), b.len());
    // Same positions up to swaps between weights equal to rounding error.
    for (x, y) in a.iter().zip(&b) {
        prop_assert!(rel_close(x.weight.unwrap(), y.weight.unwrap(), 1e-12));
        if x.id != y.id {
            let twin = b.iter().find(|c| c.id == x.id).unwrap();
            prop_assert!(rel_close(twin.weight.unwrap(), x.weight.unwrap(), 1e-12));
        }
    }
    Ok(())
}

/// Two avoid constraints for one flavour differ only by node CI, so their
/// weights are in the ratio of the CIs.
pub fn same_service_ratio_strategy() -> impl Strategy<Value = (f64, f64, f64, Vec<f64>)> {
    (10.0f64..2000.0, 16.0f64..600.0, 16.0f64..600.0, prop::collection::vec(1.0f64..1e6, 0..20))
}

pub fn check_same_service_ratio((energy, ci1, ci2, others): (f64, f64, f64, Vec<f64>)) -> Result<(), TestCaseError> {
    let mut cs = vec![
        Constraint::fresh(ConstraintId::avoid_node("svc".into(), "large".into(), "n1".into()), energy * ci1, t0()),
        Constraint::fresh(ConstraintId::avoid_node("svc".into(), "large".into(), "n2".into()), energy * ci2, t0()),
    ];
    for (i, em) in others.iter().enumerate() {
        cs.push(Constraint::fresh(ConstraintId::avoid_node(format!("o{i}").into(), "f".into(), "n".into()), *em, t0()));
    }
    let cfg = RankerConfig { drop_weight: 0.0, ..Default::default() };
    let ranked = rank(cs, &cfg);
    let w = |node: &str| {
        ranked.iter().find(|c| c.id.service.as_str() == "svc" && c.id.target == node).and_then(|c| c.weight)
    };
    let (w1, w2) = (w("n1").unwrap(), w("n2").unwrap());
    prop_assert!(rel_close(w1 / w2, ci1 / ci2, 1e-9), "{} vs {}", w1 / w2, ci1 / ci2);
    Ok(())
}

fn profile_strategy() -> impl Strategy<Value = EnergyProfile> {
    (prop::collection::vec(0.0f64..5000.0, 1..10)).prop_map(|v| EnergyProfile::from_values(v).unwrap())
}

/// Stored extremes only widen and the mean stays between them.
pub fn kb_extremes_strategy() -> impl Strategy<Value = Vec<(u8, EnergyProfile)>> {
    prop::collection::vec((0u8..3, profile_strategy()), 1..25)
}

pub fn check_kb_extremes(updates: Vec<(u8, EnergyProfile)>) -> Result<(), TestCaseError> {
    let mut kb = KnowledgeBase::new();
    for (i, (k, p)) in updates.iter().enumerate() {
        let key = FlavourKey::new(format!("s{k}"), "f");
        let before = kb.sk.get(&key).copied();
        let mut profiles = Profiles::default();
        profiles.computation.insert(key.clone(), *p);
        kb.merge_observations(&profiles, &BTreeMap::new(), t0() + Duration::minutes(i as i64));
        let after = kb.sk[&key];
        prop_assert!(after.min <= after.avg && after.avg <= after.max);
        if let Some(b) = before {
            prop_assert!(after.max >= b.max);
            prop_assert!(after.min <= b.min);
            prop_assert!(after.updated_at >= b.updated_at);
            prop_assert_eq!(after.samples, b.samples + p.samples);
        }
    }
    Ok(())
}

/// Each run regenerates a subset of a small identity universe; the stored
/// memory weights follow reset-or-decay and entries leave below `mu_drop`.
pub fn mu_strategy() -> impl Strategy<Value = (Vec<Vec<ConstraintId>>, f64, f64)> {
    (prop::collection::vec(prop::collection::vec(small_id(), 0..6), 1..15), 0.3f64..0.95, 0.05f64..0.9)
}

pub fn check_mu_decay_reset((runs, delta, drop): (Vec<Vec<ConstraintId>>, f64, f64)) -> Result<(), TestCaseError> {
    let policy = MemoryPolicy { decay_delta: delta, mu_drop: drop };
    let mut kb = KnowledgeBase::new();
    let mut model: BTreeMap<ConstraintId, f64> = BTreeMap::new();
    for (i, run) in runs.iter().enumerate() {
        let now = t0() + Duration::hours(i as i64);
        let fresh: Vec<Constraint> = run.iter().map(|id| Constraint::fresh(id.clone(), 1.0, now)).collect();
        kb.upsert_constraints(&fresh, now, &policy);

        let regenerated: BTreeSet<&ConstraintId> = run.iter().collect();
        model.retain(|id, mu| {
            if regenerated.contains(id) {
                return true;
            }
            *mu *= delta;
            *mu >= drop
        });
        for id in run {
            model.insert(id.clone(), 1.0);
        }

        let stored: BTreeMap<ConstraintId, f64> = kb.ck.iter().map(|(k, v)| (k.clone(), v.mu)).collect();
        prop_assert_eq!(&stored, &model);
        prop_assert!(kb.ck.values().all(|c| c.mu >= drop && c.mu <= 1.0));
    }
    Ok(())
}

/// Persisting and reloading gives back an identical knowledge base.
pub type KbRoundtripInput = (Vec<(u8, EnergyProfile)>, Vec<(u8, EnergyProfile)>, Vec<ConstraintId>, u32);

pub fn kb_roundtrip_strategy() -> impl Strategy<Value = KbRoundtripInput> {
    (
        prop::collection::vec((0u8..5, profile_strategy()), 0..6),
        prop::collection::vec((0u8..5, profile_strategy()), 0..6),
        prop::collection::vec(constraint_id(), 0..8),
        0u32..1_000_000,
    )
}

pub fn check_kb_roundtrip((flavours, nodes, ids, nanos): KbRoundtripInput) -> Result<(), TestCaseError> {
    let now = t0() + Duration::nanoseconds(i64::from(nanos) * 997);
    let mut profiles = Profiles::default();
    for (k, p) in &flavours {
        profiles.computation.insert(FlavourKey::new(format!("svc-{k}"), "tiny"), *p);
        profiles.communication.insert(LinkKey::new(format!("svc-{k}"), "tiny", "peer"), *p);
    }
    let carbon: BTreeMap<NodeId, CarbonProfile> = nodes
        .iter()
        .map(|(k, p)| {
            let c = CarbonProfile {
                avg: p.avg,
                min: p.min,
                max: p.max,
                samples: p.samples,
                window_hours: 24.0,
                source: CarbonSource::Measured,
            };
            (NodeId::new(format!("node {k}")), c)
        })
        .collect();
    let mut kb = KnowledgeBase::new();
    kb.merge_observations(&profiles, &carbon, now);
    let fresh: Vec<Constraint> =
        ids.iter().enumerate().map(|(i, id)| Constraint::fresh(id.clone(), i as f64 * 1.1, now)).collect();
    kb.upsert_constraints(&fresh, now, &MemoryPolicy::default());
    kb.upsert_constraints(&fresh[..fresh.len() / 2], now, &MemoryPolicy::default());

    let dir = tempfile::tempdir().unwrap();
    kb.persist(dir.path()).unwrap();
    let back = KnowledgeBase::load(dir.path()).unwrap();
    prop_assert_eq!(back, kb);
    Ok(())
}

/// Re-parsing the Prolog output recovers kind, atoms and exported weight.
pub fn prolog_strategy() -> impl Strategy<Value = Vec<(ConstraintId, f64)>> {
    prop::collection::vec((constraint_id(), 0.0f64..=1.0), 0..30)
}

pub fn check_prolog_roundtrip(items: Vec<(ConstraintId, f64)>) -> Result<(), TestCaseError> {
    let cs: Vec<Constraint> = items
        .iter()
        .map(|(id, w)| {
            let mut c = Constraint::fresh(id.clone(), 1.0, t0());
            c.weight = Some(*w);
            c
        })
        .collect();
    let facts = parse_prolog(&to_prolog(&cs).unwrap()).unwrap();
    prop_assert_eq!(facts.len(), cs.len());
    for (f, c) in facts.iter().zip(&cs) {
        prop_assert_eq!(f.kind, c.id.kind);
        prop_assert_eq!(&f.service, &sanitize_atom(c.id.service.as_str()));
        prop_assert_eq!(&f.flavour, &sanitize_atom(c.id.flavour.as_str()));
        prop_assert_eq!(&f.target, &sanitize_atom(&c.id.target));
        prop_assert_eq!(f.weight, exported_weight(c.weight.unwrap()));
        prop_assert!(matches!(f.kind, ConstraintKind::AvoidNode | ConstraintKind::Affinity));
    }
    Ok(())
}
