//! Explainability report: a rationale and an expected savings range per
//! ranked constraint.
//!
//! Savings are reported in gCO2eq per observation interval, next to the same
//! figure divided by 1000 (kgCO2eq), since published figures for this method
//! are usually quoted in the latter scale.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::adapter::format_weight;
use crate::engine::ConstraintLibrary;
use crate::error::{Error, Result};
use crate::estimation::{EnrichedApplication, EnrichedInfrastructure};
use crate::ingest::{FlavourKey, LinkKey};
use crate::kb::KnowledgeBase;
use crate::model::{placement_compatible, Constraint, ConstraintKind, Placement, Service, ServiceId, Subnet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsRange {
    pub lower: f64,
    pub upper: f64,
}

impl SavingsRange {
    fn clamped(lower: f64, upper: f64) -> Self {
        Self { lower: lower.max(0.0), upper: upper.max(0.0) }
    }
}

/// What the explainer may consult. The knowledge base supplies energy for
/// remembered constraints whose service or link was not observed this run.
#[derive(Clone, Copy)]
pub struct ExplainInputs<'a> {
    pub app: &'a EnrichedApplication,
    pub infra: &'a EnrichedInfrastructure,
    pub kb: Option<&'a KnowledgeBase>,
}

impl ExplainInputs<'_> {
    fn flavour_energy(&self, key: &FlavourKey) -> Option<f64> {
        self.app.energy(key).or_else(|| self.kb.and_then(|kb| kb.sk.get(key)).map(|o| o.avg))
    }

    fn link_energy(&self, key: &LinkKey) -> Option<f64> {
        self.app.link_energy(key).or_else(|| self.kb.and_then(|kb| kb.ik.get(key)).map(|o| o.avg))
    }
}

/// Savings from keeping the flavour off the avoided node. The upper bound
/// moves it to the cleanest compatible node; the lower bound to the dirtiest
/// compatible node that is still cleaner than the avoided one.
pub fn avoid_savings_range(c: &Constraint, inputs: ExplainInputs<'_>) -> Result<SavingsRange> {
    let node_id =
        c.id.target_node().ok_or_else(|| Error::Pipeline(format!("{} is not an AvoidNode constraint", c.id)))?;
    let service = inputs
        .app
        .app
        .service(&c.id.service)
        .ok_or_else(|| Error::NoData(format!("service {} is not declared", c.id.service)))?;
    let key = FlavourKey { service: c.id.service.clone(), flavour: c.id.flavour.clone() };
    let energy = inputs
        .flavour_energy(&key)
        .ok_or_else(|| Error::NoData(format!("no energy profile for {}/{}", key.service, key.flavour)))?;
    let avoided =
        inputs.infra.ci(&node_id).ok_or_else(|| Error::NoData(format!("node {node_id} has no carbon intensity")))?;

    let alternatives: Vec<f64> = inputs
        .infra
        .infra
        .nodes
        .iter()
        .filter(|n| n.id != node_id && placement_compatible(service, n))
        .filter_map(|n| inputs.infra.ci(&n.id))
        .collect();
    let best = alternatives
        .iter()
        .copied()
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::NoData(format!("no compatible alternative to node {node_id}")))?;
    let next_worse = alternatives.iter().copied().filter(|ci| *ci < avoided).max_by(f64::total_cmp).unwrap_or(best);

    Ok(SavingsRange::clamped((avoided - next_worse) * energy, (avoided - best) * energy))
}

/// Savings from co-locating the two services, bounded by the cleanest and
/// dirtiest node the traffic could otherwise be charged to.
pub fn affinity_savings_range(c: &Constraint, inputs: ExplainInputs<'_>) -> Result<SavingsRange> {
    let peer =
        c.id.target_service().ok_or_else(|| Error::Pipeline(format!("{} is not an Affinity constraint", c.id)))?;
    let key = LinkKey { source: c.id.service.clone(), source_flavour: c.id.flavour.clone(), destination: peer };
    let energy = inputs.link_energy(&key).ok_or_else(|| {
        Error::NoData(format!(
            "no communication profile for {}/{} -> {}",
            key.source, key.source_flavour, key.destination
        ))
    })?;
    let cis = inputs.infra.carbon.values().map(|p| p.avg);
    let min = cis.clone().min_by(f64::total_cmp).ok_or_else(|| Error::NoData("infrastructure has no nodes".into()))?;
    let max = cis.max_by(f64::total_cmp).unwrap_or(min);
    Ok(SavingsRange::clamped(energy * min, energy * max))
}

pub fn savings_range(c: &Constraint, inputs: ExplainInputs<'_>) -> Result<SavingsRange> {
    match c.kind() {
        ConstraintKind::AvoidNode => avoid_savings_range(c, inputs),
        ConstraintKind::Affinity => affinity_savings_range(c, inputs),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub constraint: Constraint,
    pub rationale: String,
    /// `None` when the range cannot be computed (e.g. the node is gone).
    pub range: Option<SavingsRange>,
}

/// Sorted carbon intensities per placement class, so that a whole ranked set
/// can be explained without rescanning the nodes for every constraint.
struct SavingsIndex<'a> {
    services: BTreeMap<&'a ServiceId, &'a Service>,
    /// Every node's CI, ascending. Public services may use any node.
    any_node: Vec<f64>,
    /// CIs of nodes that accept private services, ascending.
    private_ok: Vec<f64>,
}

impl<'a> SavingsIndex<'a> {
    fn new(inputs: ExplainInputs<'a>) -> Self {
        let mut any_node = Vec::new();
        let mut private_ok = Vec::new();
        for n in &inputs.infra.infra.nodes {
            let Some(ci) = inputs.infra.ci(&n.id) else { continue };
            any_node.push(ci);
            if n.capabilities.subnet != Subnet::Public {
                private_ok.push(ci);
            }
        }
        any_node.sort_by(f64::total_cmp);
        private_ok.sort_by(f64::total_cmp);
        let services = inputs.app.app.services.iter().map(|s| (&s.component_id, s)).collect();
        Self { services, any_node, private_ok }
    }

    fn avoid(&self, c: &Constraint, inputs: ExplainInputs<'_>) -> Option<SavingsRange> {
        let node = inputs.infra.infra.node(&c.id.target_node()?)?;
        let service = self.services.get(&c.id.service)?;
        let energy =
            inputs.flavour_energy(&FlavourKey { service: c.id.service.clone(), flavour: c.id.flavour.clone() })?;
        let avoided = inputs.infra.ci(&node.id)?;
        let pool = if service.placement == Placement::Private { &self.private_ok } else { &self.any_node };
        // The avoided node sits in the pool when compatible; drop one copy of its CI.
        let own = placement_compatible(service, node);
        let best = if own && pool.first() == Some(&avoided) { pool.get(1) } else { pool.first() }.copied()?;
        let below = pool.partition_point(|ci| *ci < avoided);
        let next_worse = if below > 0 { pool[below - 1] } else { best };
        Some(SavingsRange::clamped((avoided - next_worse) * energy, (avoided - best) * energy))
    }

    fn affinity(&self, c: &Constraint, inputs: ExplainInputs<'_>) -> Option<SavingsRange> {
        let key = LinkKey {
            source: c.id.service.clone(),
            source_flavour: c.id.flavour.clone(),
            destination: c.id.target_service()?,
        };
        let energy = inputs.link_energy(&key)?;
        Some(SavingsRange::clamped(energy * self.any_node.first()?, energy * self.any_node.last()?))
    }
}

pub fn explain_all(ranked: &[Constraint], inputs: ExplainInputs<'_>, library: &ConstraintLibrary) -> Vec<Explanation> {
    let index = SavingsIndex::new(inputs);
    ranked
        .iter()
        .map(|c| Explanation {
            constraint: c.clone(),
            rationale: library.rule_for(c.kind()).map(|r| r.rationale(c, inputs.app, inputs.infra)).unwrap_or_default(),
            range: match c.kind() {
                ConstraintKind::AvoidNode => index.avoid(c, inputs),
                ConstraintKind::Affinity => index.affinity(c, inputs),
            },
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    #[default]
    Md,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "text" => Ok(Self::Text),
            "md" => Ok(Self::Md),
            other => Err(format!("unknown report format `{other}` (expected text or md)")),
        }
    }
}

fn quoted(s: &str, format: ReportFormat) -> String {
    match format {
        ReportFormat::Md => format!("`{s}`"),
        ReportFormat::Text => format!("\"{s}\""),
    }
}

fn paragraph(e: &Explanation, format: ReportFormat) -> String {
    let c = &e.constraint;
    let q = |s: &str| quoted(s, format);
    let mut p = String::new();
    match c.kind() {
        ConstraintKind::AvoidNode => write!(
            p,
            "An AvoidNode constraint recommends not deploying service {} in flavour {} on node {}.",
            q(c.id.service.as_str()),
            q(c.id.flavour.as_str()),
            q(&c.id.target)
        ),
        ConstraintKind::Affinity => write!(
            p,
            "An Affinity constraint recommends deploying service {} in flavour {} on the same node as service {} (any flavour).",
            q(c.id.service.as_str()),
            q(c.id.flavour.as_str()),
            q(&c.id.target)
        ),
    }
    .expect("write to String");

    if !e.rationale.is_empty() {
        p.push(' ');
        p.push_str(&e.rationale);
    }
    let weight = c.weight.map(format_weight).unwrap_or_else(|| "unranked".into());
    write!(p, " Weight {weight}, memory weight {}, estimated impact {:.2} gCO2eq.", format_weight(c.mu), c.em)
        .expect("write to String");

    match e.range {
        Some(r) => write!(
            p,
            "\nEnforcing it is expected to save between {:.2} and {:.2} gCO2eq per interval ({:.2} to {:.2} kgCO2eq).",
            r.lower,
            r.upper,
            r.lower / 1000.0,
            r.upper / 1000.0
        )
        .expect("write to String"),
        None => p.push_str(
            "\nNo savings range is available: the inputs needed to compute it were not observed in this run.",
        ),
    }
    p
}

/// Renders the report. Paragraphs follow the order of `explanations`.
pub fn render_report(explanations: &[Explanation], format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Md => out.push_str("# Explainability report\n\n"),
        ReportFormat::Text => out.push_str("Explainability report\n=====================\n\n"),
    }
    if explanations.is_empty() {
        out.push_str("No constraints were generated.\n");
        return out;
    }
    for (i, e) in explanations.iter().enumerate() {
        if format == ReportFormat::Md {
            let _ = writeln!(out, "## {}. {}\n", i + 1, e.constraint.id);
        }
        out.push_str(&paragraph(e, format));
        out.push_str("\n\n");
    }
    out
}
