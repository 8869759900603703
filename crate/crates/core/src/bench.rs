//! Scalability and threshold-sensitivity benchmark over seeded synthetic
//! instances.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::engine::{select, ConstraintLibrary};
use crate::error::Result;
use crate::estimation::{
    enrich, CarbonProfile, CarbonSource, EnergyProfile, EnrichedApplication, EnrichedInfrastructure, Profiles,
};
use crate::explain::{explain_all, render_report, ExplainInputs, ReportFormat};
use crate::ingest::{FlavourKey, LinkKey};
use crate::kb::KnowledgeBase;
use crate::model::{
    ApplicationDescription, Capabilities, CommunicationLink, Constraint, Flavour, InfrastructureDescription, Node,
    NodeId, Placement, Service, ServiceId, Subnet,
};
use crate::pipeline::PipelineConfig;
use crate::ranker::rank;

pub const QUANTILE_LEVELS: [f64; 9] = [0.90, 0.85, 0.80, 0.75, 0.70, 0.65, 0.60, 0.55, 0.50];

pub const ENERGY_RANGE_KWH: (f64, f64) = (10.0, 2000.0);
pub const CI_RANGE: (f64, f64) = (16.0, 600.0);

const FLAVOURS: [(&str, f64); 3] = [("large", 1000.0), ("medium", 800.0), ("tiny", 600.0)];

/// A synthetic instance, enriched and ready for generation.
#[derive(Debug, Clone)]
pub struct Instance {
    pub app: EnrichedApplication,
    pub infra: EnrichedInfrastructure,
}

fn log_uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    rng.gen_range(lo.ln()..hi.ln()).exp()
}

fn instance_seed(seed: u64, services: usize, nodes: usize) -> u64 {
    seed ^ ((services as u64) << 32) ^ nodes as u64
}

/// Builds `services` services with one to three flavours each and `nodes`
/// nodes. Flavour energies are log-uniform over [`ENERGY_RANGE_KWH`] for the
/// largest flavour and shrink with the cpu request; node carbon intensities
/// are uniform over [`CI_RANGE`]. About one service in three talks to up to
/// two peers.
pub fn synthesize(services: usize, nodes: usize, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(seed, services, nodes));
    let mut app = ApplicationDescription { name: format!("synthetic-{services}x{nodes}"), ..Default::default() };
    let mut profiles = Profiles::default();

    let service_id = |i: usize| ServiceId::new(format!("svc{i:05}"));
    for i in 0..services {
        let id = service_id(i);
        let count = rng.gen_range(1..=FLAVOURS.len());
        let energy = log_uniform(&mut rng, ENERGY_RANGE_KWH);
        let mut flavours = Vec::with_capacity(count);
        for (name, cpu) in &FLAVOURS[..count] {
            let mut f = Flavour { id: (*name).into(), ..Default::default() };
            f.resources.insert("cpu".into(), *cpu);
            flavours.push(f);
            let avg = energy * cpu / FLAVOURS[0].1;
            let spread = rng.gen_range(0.0..0.2) * avg;
            profiles.computation.insert(
                FlavourKey::new(id.clone(), *name),
                EnergyProfile { avg, min: avg - spread, max: avg + spread, samples: 24 },
            );
        }
        app.services.push(Service {
            component_id: id,
            flavours_order: flavours.iter().map(|f| f.id.clone()).collect(),
            flavours,
            placement: if rng.gen_bool(0.5) { Placement::Private } else { Placement::Public },
            ..Default::default()
        });
    }
    if services > 1 {
        for i in 0..services {
            if !rng.gen_bool(1.0 / 3.0) {
                continue;
            }
            for _ in 0..rng.gen_range(1..=2) {
                let j = rng.gen_range(0..services);
                if j == i {
                    continue;
                }
                let key = LinkKey::new(service_id(i), FLAVOURS[0].0, service_id(j));
                let kwh = log_uniform(&mut rng, (0.01, 50.0));
                app.links.push(CommunicationLink {
                    source: key.source.clone(),
                    source_flavour: key.source_flavour.clone(),
                    destination: key.destination.clone(),
                    ..Default::default()
                });
                profiles.communication.insert(key, EnergyProfile { avg: kwh, min: kwh, max: kwh, samples: 24 });
            }
        }
    }

    let mut infra = InfrastructureDescription::default();
    let mut carbon = BTreeMap::new();
    for i in 0..nodes {
        let id = NodeId::new(format!("node{i:05}"));
        let ci = rng.gen_range(CI_RANGE.0..CI_RANGE.1);
        let subnet = if rng.gen_bool(0.1) { Subnet::Public } else { Subnet::Private };
        infra.nodes.push(Node {
            id: id.clone(),
            capabilities: Capabilities { subnet, ..Default::default() },
            profile: Default::default(),
        });
        carbon.insert(
            id,
            CarbonProfile {
                avg: ci,
                min: ci,
                max: ci,
                samples: 24,
                window_hours: 24.0,
                source: CarbonSource::Measured,
            },
        );
    }
    let (app, infra) = enrich(&app, &infra, &profiles, &carbon)?;
    Ok(Instance { app, infra })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub services: usize,
    pub nodes: usize,
    pub flavours: usize,
    pub candidates: usize,
    /// Constraints emitted at each of [`QUANTILE_LEVELS`].
    pub counts: Vec<(f64, usize)>,
    /// Constraints left after ranking at the configured quantile.
    pub ranked: usize,
    pub synth_time: Duration,
    /// Generation, knowledge-base upsert, ranking and report rendering.
    pub pipeline_time: Duration,
}

/// Runs one size. `|S| = 0` or `|N| = 0` yields an empty row straight away.
pub fn bench_size(services: usize, nodes: usize, seed: u64, config: &PipelineConfig) -> Result<BenchRow> {
    let empty = |synth_time| BenchRow {
        services,
        nodes,
        flavours: 0,
        candidates: 0,
        counts: QUANTILE_LEVELS.iter().map(|a| (*a, 0)).collect(),
        ranked: 0,
        synth_time,
        pipeline_time: Duration::ZERO,
    };
    if services == 0 || nodes == 0 {
        return Ok(empty(Duration::ZERO));
    }
    let started = Instant::now();
    let instance = synthesize(services, nodes, seed)?;
    let synth_time = started.elapsed();

    let started = Instant::now();
    let library = ConstraintLibrary::standard();
    let candidates = library.evaluate(&instance.app, &instance.infra);
    if candidates.is_empty() {
        return Ok(empty(synth_time));
    }
    let mut counts = Vec::with_capacity(QUANTILE_LEVELS.len());
    for alpha in QUANTILE_LEVELS {
        counts.push((alpha, select(&candidates, alpha)?.1.len()));
    }

    let now = Utc.with_ymd_and_hms(2025, 3, 2, 0, 0, 0).single().expect("valid bench clock");
    let (_, kept) = select(&candidates, config.alpha)?;
    let fresh: Vec<Constraint> = kept.into_iter().map(|c| Constraint::fresh(c.id.clone(), c.impact, now)).collect();
    let policy = config.policy();
    let mut kb = KnowledgeBase::new();
    kb.upsert_constraints(&fresh, now, &policy);
    let ranked = rank(kb.valid_constraints(&policy), &config.ranker());
    let inputs = ExplainInputs { app: &instance.app, infra: &instance.infra, kb: Some(&kb) };
    let report = render_report(&explain_all(&ranked, inputs, &library), ReportFormat::Text);
    debug_assert!(!report.is_empty());
    let pipeline_time = started.elapsed();

    Ok(BenchRow {
        services,
        nodes,
        flavours: instance.app.computation.len(),
        candidates: candidates.len(),
        counts,
        ranked: ranked.len(),
        synth_time,
        pipeline_time,
    })
}

pub fn run_bench(sizes: &[(usize, usize)], seed: u64, config: &PipelineConfig) -> Result<Vec<BenchRow>> {
    sizes.iter().map(|(s, n)| bench_size(*s, *n, seed, config)).collect()
}

/// Tab-separated table. Timings are optional so the rest is reproducible.
pub fn render_table(rows: &[BenchRow], with_timings: bool) -> String {
    let mut out = String::from("services\tnodes\tflavours\tcandidates");
    for alpha in QUANTILE_LEVELS {
        let _ = write!(out, "\tq{alpha:.2}");
    }
    out.push_str("\tranked");
    if with_timings {
        out.push_str("\tsynth_ms\tpipeline_ms");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}\t{}\t{}\t{}", r.services, r.nodes, r.flavours, r.candidates);
        for (_, c) in &r.counts {
            let _ = write!(out, "\t{c}");
        }
        let _ = write!(out, "\t{}", r.ranked);
        if with_timings {
            let _ = write!(out, "\t{:.1}\t{:.1}", ms(r.synth_time), ms(r.pipeline_time));
        }
        out.push('\n');
    }
    out
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}
