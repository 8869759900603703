//! Built-in replay scenarios over an Online Boutique deployment, checked
//! against golden constraint weights.
//!
//! Fixtures are embedded at compile time, so replays need neither network
//! nor files on disk. `fixtures/generate.py` regenerates them.

use std::fmt;
use std::time::{Duration as StdDuration, Instant};

use chrono::{DateTime, TimeZone, Utc};

use crate::adapter::{parse_prolog, to_prolog, PrologFact};
use crate::engine::ConstraintLibrary;
use crate::error::{Error, Result};
use crate::ingest::{parse_carbon_samples, parse_energy_samples, parse_traffic_samples};
use crate::kb::KnowledgeBase;
use crate::model::{parse_document, ConstraintKind};
use crate::pipeline::{run, Inputs, Outcome, PipelineConfig};

pub const WEIGHT_TOLERANCE: f64 = 0.005;

const APP: &str = include_str!("../fixtures/app.yaml");
const INFRA_EU: &str = include_str!("../fixtures/infra_eu.yaml");
const INFRA_US: &str = include_str!("../fixtures/infra_us.yaml");
const ENERGY: &str = include_str!("../fixtures/energy.csv");
const ENERGY_S4: &str = include_str!("../fixtures/energy_s4.csv");
const TRAFFIC: &str = include_str!("../fixtures/traffic.csv");
const TRAFFIC_S5: &str = include_str!("../fixtures/traffic_s5.csv");
const CARBON_EU: &str = include_str!("../fixtures/carbon_eu.csv");
const CARBON_EU_S3: &str = include_str!("../fixtures/carbon_eu_s3.csv");
const CARBON_US: &str = include_str!("../fixtures/carbon_us.csv");

/// Expected fact, identified by sanitised atoms as they appear in Prolog.
#[derive(Debug, Clone, PartialEq)]
pub struct Golden {
    pub kind: ConstraintKind,
    pub service: &'static str,
    pub flavour: &'static str,
    pub target: &'static str,
    pub weight: f64,
}

impl Golden {
    const fn avoid(service: &'static str, flavour: &'static str, node: &'static str, weight: f64) -> Self {
        Self { kind: ConstraintKind::AvoidNode, service, flavour, target: node, weight }
    }

    const fn affinity(service: &'static str, flavour: &'static str, peer: &'static str, weight: f64) -> Self {
        Self { kind: ConstraintKind::Affinity, service, flavour, target: peer, weight }
    }

    fn matches(&self, f: &PrologFact) -> bool {
        f.kind == self.kind && f.service == self.service && f.flavour == self.flavour && f.target == self.target
    }
}

impl fmt::Display for Golden {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}/{} -> {})", self.kind, self.service, self.flavour, self.target)
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub summary: &'static str,
    app: &'static str,
    infra: &'static str,
    energy: &'static str,
    traffic: &'static str,
    carbon: &'static str,
    pub golden: Vec<Golden>,
    /// When set, the output must contain the golden facts and nothing else.
    pub exact: bool,
}

pub const NAMES: [&str; 5] = ["s1", "s2", "s3", "s4", "s5"];

fn s1_avoids() -> Vec<Golden> {
    vec![
        Golden::avoid("frontend", "large", "greatbritain", 0.636),
        Golden::avoid("frontend", "large", "italy", 1.0),
        Golden::avoid("productcatalog", "large", "italy", 0.446),
    ]
}

pub fn scenario(name: &str) -> Option<Scenario> {
    let base = Scenario {
        name: "s1",
        summary: "baseline: Online Boutique on five European nodes",
        app: APP,
        infra: INFRA_EU,
        energy: ENERGY,
        traffic: TRAFFIC,
        carbon: CARBON_EU,
        golden: s1_avoids(),
        exact: false,
    };
    Some(match name {
        "s1" => base,
        "s2" => Scenario {
            name: "s2",
            summary: "same application on six US nodes",
            infra: INFRA_US,
            carbon: CARBON_US,
            golden: vec![
                Golden::avoid("frontend", "large", "washington", 0.428),
                Golden::avoid("frontend", "large", "california", 0.412),
                Golden::avoid("frontend", "large", "florida", 1.0),
                Golden::avoid("frontend", "large", "newyork", 0.414),
                Golden::avoid("productcatalog", "large", "florida", 0.446),
            ],
            ..base
        },
        "s3" => Scenario {
            name: "s3",
            summary: "France degrades from 16 to 376 gCO2eq/kWh over the last day",
            carbon: CARBON_EU_S3,
            golden: vec![
                Golden::avoid("frontend", "large", "france", 1.0),
                Golden::avoid("frontend", "large", "greatbritain", 0.566),
                Golden::avoid("frontend", "large", "italy", 0.891),
                Golden::avoid("productcatalog", "large", "france", 0.446),
            ],
            ..base
        },
        "s4" => Scenario {
            name: "s4",
            summary: "optimised frontend release drawing 481 kWh",
            energy: ENERGY_S4,
            golden: vec![
                Golden::avoid("productcatalog", "large", "italy", 1.0),
                Golden::avoid("currency", "tiny", "italy", 0.89),
            ],
            exact: true,
            ..base
        },
        "s5" => Scenario {
            name: "s5",
            summary: "inter-service traffic scaled up 15000 times",
            traffic: TRAFFIC_S5,
            golden: {
                let mut g = vec![
                    Golden::affinity("frontend", "large", "productcatalog", 0.572),
                    Golden::affinity("frontend", "large", "currency", 0.381),
                ];
                g.extend(s1_avoids());
                g
            },
            ..base
        },
        _ => return None,
    })
}

impl Scenario {
    pub fn inputs(&self) -> Result<Inputs> {
        Ok(Inputs {
            app: parse_document(self.app, false).map_err(|e| fixture_error("app.yaml", e))?,
            infra: parse_document(self.infra, false).map_err(|e| fixture_error("infra", e))?,
            energy: parse_energy_samples(self.energy, "energy fixture")?,
            traffic: parse_traffic_samples(self.traffic, "traffic fixture")?,
            carbon: parse_carbon_samples(self.carbon, "carbon fixture")?,
        })
    }

    /// The instant replays run at: midnight after the last fixture sample.
    pub fn clock() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 3, 2, 0, 0, 0).single().expect("valid fixture clock")
    }
}

fn fixture_error(name: &str, e: impl fmt::Display) -> Error {
    Error::Pipeline(format!("built-in fixture {name} is broken: {e}"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenCheck {
    pub expected: Golden,
    pub actual: Option<f64>,
}

impl GoldenCheck {
    pub fn passed(&self) -> bool {
        self.actual.is_some_and(|w| (w - self.expected.weight).abs() <= WEIGHT_TOLERANCE)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub name: &'static str,
    pub exact: bool,
    pub checks: Vec<GoldenCheck>,
    /// Emitted facts that are not golden. Only a failure for exact scenarios.
    pub extra: Vec<PrologFact>,
    pub prolog: String,
    pub outcome: Outcome,
    pub elapsed: StdDuration,
}

impl ScenarioResult {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(GoldenCheck::passed) && (!self.exact || self.extra.is_empty())
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let actual = c.actual.map_or_else(|| "missing".to_string(), |w| format!("{w}"));
            let verdict = if c.passed() { "ok" } else { "MISMATCH" };
            out.push_str(&format!("  {:<8} {} expected {} got {}\n", verdict, c.expected, c.expected.weight, actual));
        }
        if !self.extra.is_empty() {
            let label = if self.exact { "unexpected" } else { "additional" };
            out.push_str(&format!("  {} {} facts:\n", self.extra.len(), label));
            for f in &self.extra {
                out.push_str(&format!("    {}({}/{} -> {}) {}\n", f.kind, f.service, f.flavour, f.target, f.weight));
            }
        }
        out
    }
}

/// Replays a scenario on a fresh in-memory knowledge base.
pub fn run_scenario(name: &str, config: &PipelineConfig) -> Result<ScenarioResult> {
    let scenario = scenario(name)
        .ok_or_else(|| Error::Config(format!("unknown scenario `{name}` (expected one of {})", NAMES.join(", "))))?;
    let started = Instant::now();
    let inputs = scenario.inputs()?;
    let mut kb = KnowledgeBase::new();
    let outcome = run(&inputs, config, &ConstraintLibrary::standard(), &mut kb, Scenario::clock())?;
    let prolog = to_prolog(&outcome.ranked)?;
    let elapsed = started.elapsed();

    let facts = parse_prolog(&prolog)?;
    let checks = scenario
        .golden
        .iter()
        .map(|g| GoldenCheck { expected: g.clone(), actual: facts.iter().find(|f| g.matches(f)).map(|f| f.weight) })
        .collect();
    let extra = facts.into_iter().filter(|f| !scenario.golden.iter().any(|g| g.matches(f))).collect();
    Ok(ScenarioResult { name: scenario.name, exact: scenario.exact, checks, extra, prolog, outcome, elapsed })
}
