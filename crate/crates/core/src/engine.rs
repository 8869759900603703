//! Constraint library and generator.
//!
//! Each [`ConstraintRule`] scores every combination it is responsible for.
//! The generator pools all scores, takes the empirical `alpha`-quantile as the
//! threshold and keeps combinations whose impact is strictly above it.

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};

use crate::error::{Error, Result};
use crate::estimation::{EnrichedApplication, EnrichedInfrastructure};
use crate::ingest::{FlavourKey, LinkKey};
use crate::model::{placement_compatible, Constraint, ConstraintId, ConstraintKind, NodeId};

pub const DEFAULT_ALPHA: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorConfig {
    pub alpha: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.alpha < 1.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)))
        }
    }
}

/// A scored combination before thresholding.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub id: ConstraintId,
    /// gCO2eq.
    pub impact: f64,
}

/// One kind of green constraint: how to score it and how to justify it.
pub trait ConstraintRule: Send + Sync {
    fn name(&self) -> &str;

    fn kind(&self) -> ConstraintKind;

    /// Scores every combination this rule covers.
    fn evaluate(&self, app: &EnrichedApplication, infra: &EnrichedInfrastructure) -> Vec<Candidate>;

    /// One-sentence justification for a constraint of this kind.
    fn rationale(&self, constraint: &Constraint, app: &EnrichedApplication, infra: &EnrichedInfrastructure) -> String;
}

/// `energyProfile(s, f) * carbon(n)`, or `None` when either side is unknown.
pub fn avoid_node_impact(
    app: &EnrichedApplication,
    infra: &EnrichedInfrastructure,
    key: &FlavourKey,
    node: &NodeId,
) -> Option<f64> {
    Some(app.energy(key)? * infra.ci(node)?)
}

/// Communication energy of the link weighted by the mean node carbon
/// intensity, since the eventual placement is unknown.
pub fn affinity_impact(app: &EnrichedApplication, infra: &EnrichedInfrastructure, key: &LinkKey) -> Option<f64> {
    Some(app.link_energy(key)? * infra.mean_ci()?)
}

pub struct AvoidNodeRule;

impl ConstraintRule for AvoidNodeRule {
    fn name(&self) -> &str {
        "avoidNode"
    }

    fn kind(&self) -> ConstraintKind {
        ConstraintKind::AvoidNode
    }

    fn evaluate(&self, app: &EnrichedApplication, infra: &EnrichedInfrastructure) -> Vec<Candidate> {
        let mut out = Vec::new();
        for svc in &app.app.services {
            if app.unprofiled.contains(&svc.component_id) {
                continue;
            }
            for flavour in &svc.flavours {
                let key = FlavourKey { service: svc.component_id.clone(), flavour: flavour.id.clone() };
                let Some(energy) = app.energy(&key) else { continue };
                for node in &infra.infra.nodes {
                    if !placement_compatible(svc, node) {
                        continue;
                    }
                    let Some(ci) = infra.ci(&node.id) else { continue };
                    out.push(Candidate {
                        id: ConstraintId::avoid_node(key.service.clone(), key.flavour.clone(), node.id.clone()),
                        impact: energy * ci,
                    });
                }
            }
        }
        out
    }

    fn rationale(&self, c: &Constraint, app: &EnrichedApplication, infra: &EnrichedInfrastructure) -> String {
        let key = FlavourKey { service: c.id.service.clone(), flavour: c.id.flavour.clone() };
        let energy = app.energy(&key).map(|e| format!(" ({e:.2} kWh per interval)")).unwrap_or_default();
        let ci =
            c.id.target_node()
                .and_then(|n| infra.ci(&n))
                .map(|ci| format!(" ({ci:.2} gCO2eq/kWh)"))
                .unwrap_or_default();
        format!(
            "The flavour draws a large amount of energy{energy} and the node runs on a carbon-intensive electricity mix{ci}."
        )
    }
}

pub struct AffinityRule;

impl ConstraintRule for AffinityRule {
    fn name(&self) -> &str {
        "affinity"
    }

    fn kind(&self) -> ConstraintKind {
        ConstraintKind::Affinity
    }

    fn evaluate(&self, app: &EnrichedApplication, infra: &EnrichedInfrastructure) -> Vec<Candidate> {
        let Some(mean_ci) = infra.mean_ci() else { return Vec::new() };
        app.communication
            .iter()
            .filter(|(key, _)| key.source != key.destination && !app.unprofiled.contains(&key.source))
            .map(|(key, profile)| Candidate {
                id: ConstraintId::affinity(key.source.clone(), key.source_flavour.clone(), key.destination.clone()),
                impact: profile.avg * mean_ci,
            })
            .collect()
    }

    fn rationale(&self, c: &Constraint, app: &EnrichedApplication, _infra: &EnrichedInfrastructure) -> String {
        let energy =
            c.id.target_service()
                .map(|peer| LinkKey {
                    source: c.id.service.clone(),
                    source_flavour: c.id.flavour.clone(),
                    destination: peer,
                })
                .and_then(|k| app.link_energy(&k))
                .map(|e| format!(" ({e:.2} kWh per interval)"))
                .unwrap_or_default();
        format!(
            "The two services exchange enough data to cause high communication energy{energy}, which is spent on the network whenever they run on different nodes."
        )
    }
}

/// Registry of constraint rules, keyed by unique name.
pub struct ConstraintLibrary {
    rules: Vec<Box<dyn ConstraintRule>>,
}

impl Default for ConstraintLibrary {
    fn default() -> Self {
        Self::standard()
    }
}

impl ConstraintLibrary {
    pub fn empty() -> Self {
        Self { rules: Vec::new() }
    }

    /// AvoidNode and Affinity.
    pub fn standard() -> Self {
        let mut lib = Self::empty();
        lib.register(Box::new(AvoidNodeRule)).expect("distinct names");
        lib.register(Box::new(AffinityRule)).expect("distinct names");
        lib
    }

    pub fn register(&mut self, rule: Box<dyn ConstraintRule>) -> Result<()> {
        if self.rules.iter().any(|r| r.name() == rule.name()) {
            return Err(Error::Config(format!("constraint rule `{}` is already registered", rule.name())));
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn names(&self) -> Vec<&str> {
        self.rules.iter().map(|r| r.name()).collect()
    }

    pub fn rule_for(&self, kind: ConstraintKind) -> Option<&dyn ConstraintRule> {
        self.rules.iter().find(|r| r.kind() == kind).map(|r| r.as_ref())
    }

    /// Every scored combination from every rule, in identity order.
    pub fn evaluate(&self, app: &EnrichedApplication, infra: &EnrichedInfrastructure) -> Vec<Candidate> {
        let mut all: Vec<Candidate> = self.rules.iter().flat_map(|r| r.evaluate(app, infra)).collect();
        all.sort_by(|a, b| a.id.cmp(&b.id));
        all
    }
}

/// The smallest observed impact `x` whose empirical CDF reaches `alpha`.
pub fn compute_threshold(impacts: &[f64], alpha: f64) -> Result<f64> {
    if impacts.is_empty() {
        return Err(Error::NoCandidates("cannot take a quantile of an empty impact set".into()));
    }
    let mut sorted = impacts.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    // First index whose rank fraction reaches alpha. Comparing (i+1)/n to
    // alpha avoids the rounding that ceil(alpha * n) suffers, e.g. 0.55 * 100.
    let idx = (0..sorted.len()).find(|i| (*i as f64 + 1.0) / n >= alpha).unwrap_or(sorted.len() - 1);
    Ok(sorted[idx])
}

/// Candidates with impact strictly above the `alpha` threshold.
pub fn select(candidates: &[Candidate], alpha: f64) -> Result<(f64, Vec<&Candidate>)> {
    let impacts: Vec<f64> = candidates.iter().map(|c| c.impact).collect();
    let tau = compute_threshold(&impacts, alpha)?;
    Ok((tau, candidates.iter().filter(|c| c.impact > tau).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub threshold: f64,
    pub evaluated: usize,
    /// Emitted constraints with `mu = 1`, in identity order.
    pub constraints: Vec<Constraint>,
}

pub fn generate(
    app: &EnrichedApplication,
    infra: &EnrichedInfrastructure,
    config: &GeneratorConfig,
    library: &ConstraintLibrary,
    now: DateTime<Utc>,
) -> Result<Generation> {
    config.validate()?;
    let candidates = library.evaluate(app, infra);
    if candidates.is_empty() {
        return Err(Error::NoCandidates("no profiled services or links to evaluate".into()));
    }
    let (threshold, kept) = select(&candidates, config.alpha)?;
    debug_assert_eq!(kept.iter().map(|c| &c.id).collect::<BTreeSet<_>>().len(), kept.len());
    Ok(Generation {
        threshold,
        evaluated: candidates.len(),
        constraints: kept.into_iter().map(|c| Constraint::fresh(c.id.clone(), c.impact, now)).collect(),
    })
}
