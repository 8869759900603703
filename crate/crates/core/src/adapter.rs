//! Scheduler-facing serialisation: Prolog facts and a JSON export.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::SavingsRange;
use crate::model::{Constraint, ConstraintKind};

/// Lower-cases and replaces every non-alphanumeric character with `_`.
pub fn sanitize_atom(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Three decimals, trailing zeros trimmed, always at least one decimal digit.
pub fn format_weight(w: f64) -> String {
    let s = format!("{w:.3}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

/// The weight as it appears in every export, so the outputs agree exactly.
pub fn exported_weight(w: f64) -> f64 {
    format_weight(w).parse().expect("formatted weight parses")
}

fn weight_of(c: &Constraint) -> Result<f64> {
    c.weight.ok_or_else(|| Error::Pipeline(format!("constraint {} has not been ranked", c.id)))
}

pub fn prolog_fact(c: &Constraint) -> Result<String> {
    let w = format_weight(weight_of(c)?);
    let s = sanitize_atom(c.id.service.as_str());
    let f = sanitize_atom(c.id.flavour.as_str());
    let t = sanitize_atom(&c.id.target);
    Ok(match c.kind() {
        ConstraintKind::AvoidNode => format!("avoidNode(d({s},{f}),{t},{w})."),
        ConstraintKind::Affinity => format!("affinity(d({s},{f}),d({t},_),{w})."),
    })
}

/// One fact per line in the given order. An empty set gives an empty string.
pub fn to_prolog(ranked: &[Constraint]) -> Result<String> {
    let mut out = String::new();
    for c in ranked {
        out.push_str(&prolog_fact(c)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrologFact {
    pub kind: ConstraintKind,
    pub service: String,
    pub flavour: String,
    pub target: String,
    pub weight: f64,
}

fn is_atom(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn parse_d(s: &str) -> Option<(&str, &str)> {
    let inner = s.strip_prefix("d(")?.strip_suffix(')')?;
    let (a, b) = inner.split_once(',')?;
    Some((a, b))
}

fn parse_fact(line: &str) -> Option<PrologFact> {
    let (kind, body) = match line.strip_prefix("avoidNode(") {
        Some(b) => (ConstraintKind::AvoidNode, b),
        None => (ConstraintKind::Affinity, line.strip_prefix("affinity(")?),
    };
    let body = body.strip_suffix(").")?;
    let (head, weight) = body.rsplit_once(',')?;
    let weight: f64 = weight.parse().ok()?;
    let close = head.find(')')?;
    let (service, flavour) = parse_d(&head[..=close])?;
    let rest = head[close + 1..].strip_prefix(',')?;
    let target = match kind {
        ConstraintKind::AvoidNode => rest,
        ConstraintKind::Affinity => {
            let (peer, any) = parse_d(rest)?;
            if any != "_" {
                return None;
            }
            peer
        }
    };
    if ![service, flavour, target].iter().all(|a| is_atom(a)) {
        return None;
    }
    Some(PrologFact { kind, service: service.into(), flavour: flavour.into(), target: target.into(), weight })
}

/// Parses the fact grammar emitted by [`to_prolog`]. Blank lines are skipped.
pub fn parse_prolog(text: &str) -> Result<Vec<PrologFact>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_fact(l.trim()).ok_or_else(|| Error::Parse {
                file: "constraints.pl".into(),
                line: Some(i as u64 + 1),
                msg: format!("not a constraint fact: {l}"),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredConstraint {
    pub kind: ConstraintKind,
    pub service: String,
    pub flavour: String,
    pub target: String,
    pub em: f64,
    pub weight: f64,
    pub mu: f64,
    pub savings_lower: Option<f64>,
    pub savings_upper: Option<f64>,
}

/// Machine-readable export. `ranges[i]` belongs to `ranked[i]`. Weights are
/// rounded exactly as in the Prolog output.
pub fn to_structured(ranked: &[Constraint], ranges: &[Option<SavingsRange>]) -> Result<Vec<StructuredConstraint>> {
    ranked
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let range = ranges.get(i).copied().flatten();
            Ok(StructuredConstraint {
                kind: c.kind(),
                service: c.id.service.to_string(),
                flavour: c.id.flavour.to_string(),
                target: c.id.target.clone(),
                em: c.em,
                weight: exported_weight(weight_of(c)?),
                mu: c.mu,
                savings_lower: range.map(|r| r.lower),
                savings_upper: range.map(|r| r.upper),
            })
        })
        .collect()
}

pub fn structured_to_json(doc: &[StructuredConstraint]) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("structured export serialises");
    s.push('\n');
    s
}

pub fn parse_structured(text: &str) -> Result<Vec<StructuredConstraint>> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        file: "constraints.json".into(),
        line: Some(e.line() as u64),
        msg: e.to_string(),
    })
}
