//! Application and infrastructure descriptions, plus the constraint type
//! that flows through the rest of the pipeline.
//!
//! Values here carry no behaviour beyond validation. Validation never fails:
//! it returns a list of [`Violation`]s, one per broken invariant, each naming
//! the offending entity.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, Default, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_type!(
    /// Identifier of an application service (`componentID`).
    ServiceId
);
id_type!(
    /// Identifier of a flavour, unique within its service.
    FlavourId
);
id_type!(
    /// Identifier of an infrastructure node.
    NodeId
);

/// Network placement requirement of a service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Placement {
    Private,
    #[default]
    Public,
}

/// Subnet a node is attached to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Subnet {
    Private,
    #[default]
    Public,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Flavour {
    pub id: FlavourId,
    /// cpu in millicores, ram and storage in MiB.
    #[serde(default)]
    pub resources: BTreeMap<String, f64>,
    #[serde(default)]
    pub qos: BTreeMap<String, f64>,
    /// kWh per observation interval, set by enrichment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

impl Flavour {
    pub fn cpu(&self) -> Option<f64> {
        self.resources.get("cpu").copied()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Service {
    #[serde(rename = "componentID")]
    pub component_id: ServiceId,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "mustDeploy", default)]
    pub must_deploy: bool,
    pub flavours: Vec<Flavour>,
    #[serde(rename = "flavoursOrder", default)]
    pub flavours_order: Vec<FlavourId>,
    #[serde(default)]
    pub placement: Placement,
    #[serde(default)]
    pub security: BTreeSet<String>,
    /// Requirement keys this tool does not interpret, kept verbatim.
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl Service {
    pub fn flavour(&self, id: &FlavourId) -> Option<&Flavour> {
        self.flavours.iter().find(|f| &f.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CommunicationLink {
    pub source: ServiceId,
    #[serde(rename = "sourceFlavour")]
    pub source_flavour: FlavourId,
    pub destination: ServiceId,
    #[serde(default)]
    pub qos: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ApplicationDescription {
    pub name: String,
    pub services: Vec<Service>,
    #[serde(default)]
    pub links: Vec<CommunicationLink>,
}

impl ApplicationDescription {
    pub fn service(&self, id: &ServiceId) -> Option<&Service> {
        self.services.iter().find(|s| &s.component_id == id)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        read_document(path)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Capabilities {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ram: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub storage: Option<f64>,
    #[serde(rename = "bandwidthIn", default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_in: Option<f64>,
    #[serde(rename = "bandwidthOut", default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_out: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<f64>,
    #[serde(default)]
    pub security: BTreeSet<String>,
    #[serde(default)]
    pub subnet: Subnet,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeProfile {
    #[serde(default)]
    pub cost: f64,
    /// gCO2eq/kWh. When present in the input file it is an operator override.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub carbon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    #[serde(default)]
    pub capabilities: Capabilities,
    #[serde(default)]
    pub profile: NodeProfile,
}

impl Node {
    pub fn carbon(&self) -> Option<f64> {
        self.profile.carbon
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InfrastructureDescription {
    pub nodes: Vec<Node>,
}

impl InfrastructureDescription {
    pub fn node(&self, id: &NodeId) -> Option<&Node> {
        self.nodes.iter().find(|n| &n.id == id)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        read_document(path)
    }
}

/// Reads a YAML or JSON document. YAML is a superset of JSON, but `.json`
/// files go through serde_json for its sharper error messages.
pub fn read_document<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_document(&text, path.extension().and_then(|e| e.to_str()) == Some("json")).map_err(|msg| Error::Parse {
        file: path.display().to_string(),
        line: None,
        msg,
    })
}

pub fn parse_document<T: serde::de::DeserializeOwned>(text: &str, json: bool) -> std::result::Result<T, String> {
    if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        serde_yaml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Kind of green constraint. Names sort lexicographically for tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintKind {
    AvoidNode,
    Affinity,
}

impl ConstraintKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintKind::AvoidNode => "AvoidNode",
            ConstraintKind::Affinity => "Affinity",
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identity of a constraint: two constraints with the same identity are the
/// same recommendation, possibly with different impact estimates.
///
/// `target` is a node id for `AvoidNode` and a peer service id for `Affinity`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstraintId {
    pub kind: ConstraintKind,
    pub service: ServiceId,
    pub flavour: FlavourId,
    pub target: String,
}

impl ConstraintId {
    pub fn avoid_node(service: ServiceId, flavour: FlavourId, node: NodeId) -> Self {
        Self { kind: ConstraintKind::AvoidNode, service, flavour, target: node.0 }
    }

    pub fn affinity(service: ServiceId, flavour: FlavourId, peer: ServiceId) -> Self {
        Self { kind: ConstraintKind::Affinity, service, flavour, target: peer.0 }
    }

    pub fn target_node(&self) -> Option<NodeId> {
        (self.kind == ConstraintKind::AvoidNode).then(|| NodeId(self.target.clone()))
    }

    pub fn target_service(&self) -> Option<ServiceId> {
        (self.kind == ConstraintKind::Affinity).then(|| ServiceId(self.target.clone()))
    }

    fn sort_key(&self) -> (&str, &str, &str, &str) {
        (self.kind.as_str(), self.service.as_str(), self.flavour.as_str(), &self.target)
    }
}

impl Ord for ConstraintId {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.sort_key().cmp(&other.sort_key())
    }
}

impl PartialOrd for ConstraintId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for ConstraintId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({}/{} -> {})", self.kind, self.service, self.flavour, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub id: ConstraintId,
    /// Estimated impact in gCO2eq.
    pub em: f64,
    /// Normalised importance in [0, 1], set by the ranker.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    /// Memory weight in (0, 1].
    pub mu: f64,
    pub generated_at: DateTime<Utc>,
}

impl Constraint {
    pub fn fresh(id: ConstraintId, em: f64, generated_at: DateTime<Utc>) -> Self {
        Self { id, em, weight: None, mu: 1.0, generated_at }
    }

    pub fn kind(&self) -> ConstraintKind {
        self.id.kind
    }
}

/// A broken invariant found by validation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub message: String,
}

impl Violation {
    pub fn new(entity: impl Into<String>, message: impl Into<String>) -> Self {
        Self { entity: entity.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.message)
    }
}

fn check_non_negative(out: &mut Vec<Violation>, entity: &str, field: &str, v: f64) {
    if !v.is_finite() || v < 0.0 {
        out.push(Violation::new(entity, format!("{field} must be a finite value >= 0, got {v}")));
    }
}

fn check_fraction(out: &mut Vec<Violation>, entity: &str, field: &str, v: f64) {
    if !(0.0..=1.0).contains(&v) {
        out.push(Violation::new(entity, format!("{field} must lie in [0, 1], got {v}")));
    }
}

pub fn validate_application(app: &ApplicationDescription) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();

    for (i, svc) in app.services.iter().enumerate() {
        let entity = if svc.component_id.0.is_empty() {
            format!("service #{i}")
        } else {
            format!("service {}", svc.component_id)
        };
        if svc.component_id.0.is_empty() {
            out.push(Violation::new(&entity, "componentID is empty"));
        } else if !seen.insert(&svc.component_id) {
            out.push(Violation::new(&entity, "duplicate componentID"));
        }
        if svc.flavours.is_empty() {
            out.push(Violation::new(&entity, "declares no flavours"));
        }

        let mut flavour_ids = BTreeSet::new();
        for fl in &svc.flavours {
            let fent = format!("{entity} flavour {}", fl.id);
            if fl.id.0.is_empty() {
                out.push(Violation::new(&fent, "flavour id is empty"));
            } else if !flavour_ids.insert(&fl.id) {
                out.push(Violation::new(&fent, "duplicate flavour id"));
            }
            for (name, q) in &fl.resources {
                check_non_negative(&mut out, &fent, &format!("resource {name}"), *q);
            }
            if let Some(a) = fl.qos.get("availability") {
                check_fraction(&mut out, &fent, "availability", *a);
            }
            if let Some(e) = fl.energy {
                check_non_negative(&mut out, &fent, "energy", e);
            }
        }

        let order: BTreeSet<&FlavourId> = svc.flavours_order.iter().collect();
        if order.len() != svc.flavours_order.len() || order != flavour_ids {
            out.push(Violation::new(&entity, "flavoursOrder is not a permutation of the declared flavour ids"));
        }
    }

    for link in &app.links {
        let entity = format!("link {}/{} -> {}", link.source, link.source_flavour, link.destination);
        match app.service(&link.source) {
            None => out.push(Violation::new(&entity, "source service is not declared")),
            Some(svc) if svc.flavour(&link.source_flavour).is_none() => {
                out.push(Violation::new(&entity, "source flavour is not declared by the source service"))
            }
            Some(_) => {}
        }
        if app.service(&link.destination).is_none() {
            out.push(Violation::new(&entity, "destination service is not declared"));
        }
        if link.source == link.destination {
            out.push(Violation::new(&entity, "source and destination are the same service"));
        }
        if let Some(a) = link.qos.get("availability") {
            check_fraction(&mut out, &entity, "availability", *a);
        }
        if let Some(e) = link.energy {
            check_non_negative(&mut out, &entity, "energy", e);
        }
    }
    out
}

pub fn validate_infrastructure(infra: &InfrastructureDescription) -> Vec<Violation> {
    let mut out = Vec::new();
    if infra.nodes.is_empty() {
        out.push(Violation::new("infrastructure", "declares no nodes"));
    }
    let mut seen = BTreeSet::new();
    for (i, node) in infra.nodes.iter().enumerate() {
        let entity = if node.id.0.is_empty() { format!("node #{i}") } else { format!("node {}", node.id) };
        if node.id.0.is_empty() {
            out.push(Violation::new(&entity, "id is empty"));
        } else if !seen.insert(&node.id) {
            out.push(Violation::new(&entity, "duplicate node id"));
        }
        let caps = &node.capabilities;
        for (name, v) in [
            ("cpu", caps.cpu),
            ("ram", caps.ram),
            ("storage", caps.storage),
            ("bandwidthIn", caps.bandwidth_in),
            ("bandwidthOut", caps.bandwidth_out),
        ] {
            if let Some(v) = v {
                check_non_negative(&mut out, &entity, name, v);
            }
        }
        if let Some(a) = caps.availability {
            check_fraction(&mut out, &entity, "availability", a);
        }
        if let Some(c) = node.profile.carbon {
            check_non_negative(&mut out, &entity, "carbon", c);
        }
    }
    out
}

/// Whether `service` may run on `node`: private services cannot be placed on
/// public nodes. Every other combination is allowed.
pub fn placement_compatible(service: &Service, node: &Node) -> bool {
    !(service.placement == Placement::Private && node.capabilities.subnet == Subnet::Public)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flavour(id: &str, cpu: f64) -> Flavour {
        Flavour {
            id: id.into(),
            resources: BTreeMap::from([("cpu".to_string(), cpu)]),
            qos: BTreeMap::new(),
            energy: None,
        }
    }

    fn service(id: &str, flavours: &[&str]) -> Service {
        Service {
            component_id: id.into(),
            description: String::new(),
            must_deploy: true,
            flavours: flavours.iter().map(|f| flavour(f, 100.0)).collect(),
            flavours_order: flavours.iter().map(|f| FlavourId::from(*f)).collect(),
            placement: Placement::Public,
            security: BTreeSet::new(),
            extra: BTreeMap::new(),
        }
    }

    fn app() -> ApplicationDescription {
        ApplicationDescription {
            name: "demo".into(),
            services: vec![service("a", &["large", "tiny"]), service("b", &["tiny"])],
            links: vec![CommunicationLink {
                source: "a".into(),
                source_flavour: "large".into(),
                destination: "b".into(),
                qos: BTreeMap::new(),
                energy: None,
            }],
        }
    }

    fn node(id: &str, subnet: Subnet, carbon: Option<f64>) -> Node {
        Node {
            id: id.into(),
            capabilities: Capabilities { subnet, ..Default::default() },
            profile: NodeProfile { cost: 1.0, carbon },
        }
    }

    #[test]
    fn well_formed_app_has_no_violations() {
        assert!(validate_application(&app()).is_empty());
    }

    #[test]
    fn undeclared_link_destination() {
        let mut a = app();
        a.links[0].destination = "ghost".into();
        let v = validate_application(&a);
        assert_eq!(v.len(), 1, "{v:?}");
        assert!(v[0].entity.contains("link a/large -> ghost"));
    }

    #[test]
    fn flavours_order_missing_an_id() {
        let mut a = app();
        a.services[0].flavours_order.pop();
        let v = validate_application(&a);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, "service a");
    }

    #[test]
    fn self_link_and_bad_source_flavour() {
        let mut a = app();
        a.links[0].destination = "a".into();
        a.links[0].source_flavour = "medium".into();
        assert_eq!(validate_application(&a).len(), 2);
    }

    #[test]
    fn duplicate_node_and_negative_carbon() {
        let infra =
            InfrastructureDescription { nodes: vec![node("x", Subnet::Public, None), node("x", Subnet::Public, None)] };
        let v = validate_infrastructure(&infra);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("duplicate"));

        let infra = InfrastructureDescription { nodes: vec![node("y", Subnet::Private, Some(-3.0))] };
        let v = validate_infrastructure(&infra);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, "node y");
    }

    #[test]
    fn placement_rule() {
        let mut s = service("a", &["tiny"]);
        s.placement = Placement::Private;
        assert!(placement_compatible(&s, &node("n", Subnet::Private, None)));
        assert!(!placement_compatible(&s, &node("n", Subnet::Public, None)));
        s.placement = Placement::Public;
        assert!(placement_compatible(&s, &node("n", Subnet::Private, None)));
    }

    #[test]
    fn yaml_field_names_and_defaults() {
        let doc = r#"
name: shop
services:
  - componentID: front
    mustDeploy: true
    flavours:
      - id: large
        resources: {cpu: 500}
    flavoursOrder: [large]
    replicas: 3
links: []
"#;
        let app: ApplicationDescription = parse_document(doc, false).unwrap();
        let s = &app.services[0];
        assert_eq!(s.placement, Placement::Public);
        assert_eq!(s.extra.get("replicas"), Some(&serde_json::json!(3)));
        let back: ApplicationDescription = parse_document(&serde_yaml::to_string(&app).unwrap(), false).unwrap();
        assert_eq!(back, app);
    }

    #[test]
    fn constraint_ids_sort_by_kind_name_first() {
        let a = ConstraintId::affinity("z".into(), "f".into(), "y".into());
        let b = ConstraintId::avoid_node("a".into(), "f".into(), "n".into());
        assert!(a < b);
    }
}
