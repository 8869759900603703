//! File-based monitoring ingestion.
//!
//! Three CSV formats are accepted, each with a fixed header:
//!
//! | kind    | header                                                                              |
//! |---------|-------------------------------------------------------------------------------------|
//! | energy  | `service,flavour,timestamp,energy_kwh`                                              |
//! | traffic | `source,source_flavour,destination,timestamp,request_volume_per_hour,request_size_gb` |
//! | carbon  | `node,timestamp,ci_gco2_per_kwh`                                                    |
//!
//! Timestamps are RFC 3339. Rows are grouped by key and sorted by time, so
//! the result does not depend on row order.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ApplicationDescription, FlavourId, InfrastructureDescription, NodeId, ServiceId};

pub const ENERGY_HEADER: &str = "service,flavour,timestamp,energy_kwh";
pub const TRAFFIC_HEADER: &str = "source,source_flavour,destination,timestamp,request_volume_per_hour,request_size_gb";
pub const CARBON_HEADER: &str = "node,timestamp,ci_gco2_per_kwh";

/// A deployed flavour of a service.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlavourKey {
    pub service: ServiceId,
    pub flavour: FlavourId,
}

impl FlavourKey {
    pub fn new(service: impl Into<ServiceId>, flavour: impl Into<FlavourId>) -> Self {
        Self { service: service.into(), flavour: flavour.into() }
    }
}

/// Directed communication from a service in a given flavour to a peer
/// service. The peer's flavour is not part of the key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LinkKey {
    pub source: ServiceId,
    pub source_flavour: FlavourId,
    pub destination: ServiceId,
}

impl LinkKey {
    pub fn new(
        source: impl Into<ServiceId>,
        source_flavour: impl Into<FlavourId>,
        destination: impl Into<ServiceId>,
    ) -> Self {
        Self { source: source.into(), source_flavour: source_flavour.into(), destination: destination.into() }
    }

    pub fn origin(&self) -> FlavourKey {
        FlavourKey { service: self.source.clone(), flavour: self.source_flavour.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub service: ServiceId,
    pub flavour: FlavourId,
    pub t: DateTime<Utc>,
    /// kWh over one observation interval.
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficSample {
    pub source: ServiceId,
    pub source_flavour: FlavourId,
    pub destination: ServiceId,
    pub t: DateTime<Utc>,
    pub request_volume: f64,
    /// GB per request.
    pub request_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonSample {
    pub node: NodeId,
    pub t: DateTime<Utc>,
    /// gCO2eq/kWh.
    pub ci: f64,
}

pub type EnergySeries = BTreeMap<FlavourKey, Vec<EnergySample>>;
pub type TrafficSeries = BTreeMap<LinkKey, Vec<TrafficSample>>;
pub type CarbonSeries = BTreeMap<NodeId, Vec<CarbonSample>>;

#[derive(Deserialize)]
struct EnergyRow {
    service: String,
    flavour: String,
    timestamp: String,
    energy_kwh: f64,
}

#[derive(Deserialize)]
struct TrafficRow {
    source: String,
    source_flavour: String,
    destination: String,
    timestamp: String,
    request_volume_per_hour: f64,
    request_size_gb: f64,
}

#[derive(Deserialize)]
struct CarbonRow {
    node: String,
    timestamp: String,
    ci_gco2_per_kwh: f64,
}

fn parse_rows<R, S, K>(
    text: &str,
    origin: &str,
    header: &str,
    mut convert: impl FnMut(R) -> std::result::Result<S, String>,
    key: impl Fn(&S) -> K,
    time: impl Fn(&S) -> DateTime<Utc>,
) -> Result<BTreeMap<K, Vec<S>>>
where
    R: serde::de::DeserializeOwned,
    K: Ord,
{
    let parse_err = |line: Option<u64>, msg: String| Error::Parse { file: origin.to_string(), line, msg };
    if text.trim().is_empty() {
        return Ok(BTreeMap::new());
    }

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(Some(1), e.to_string()))?.clone();
    let found = headers.iter().collect::<Vec<_>>().join(",");
    if found != header {
        return Err(parse_err(Some(1), format!("expected header `{header}`, found `{found}`")));
    }

    let mut out: BTreeMap<K, Vec<(u64, S)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| parse_err(e.position().map(|p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let row: R = record.deserialize(Some(&headers)).map_err(|e| parse_err(Some(line), e.to_string()))?;
        let sample = convert(row).map_err(|msg| parse_err(Some(line), msg))?;
        out.entry(key(&sample)).or_default().push((line, sample));
    }

    let mut grouped = BTreeMap::new();
    for (k, mut rows) in out {
        rows.sort_by_key(|(_, s)| time(s));
        for pair in rows.windows(2) {
            if time(&pair[0].1) == time(&pair[1].1) {
                return Err(parse_err(
                    Some(pair[1].0),
                    format!("duplicate timestamp {} (also on line {})", time(&pair[1].1).to_rfc3339(), pair[0].0),
                ));
            }
        }
        grouped.insert(k, rows.into_iter().map(|(_, s)| s).collect());
    }
    Ok(grouped)
}

fn parse_time(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad RFC 3339 timestamp `{s}`: {e}"))
}

fn non_negative(name: &str, v: f64) -> std::result::Result<f64, String> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("{name} must be >= 0, got {v}"))
    }
}

fn non_empty(name: &str, v: String) -> std::result::Result<String, String> {
    if v.is_empty() {
        Err(format!("{name} is empty"))
    } else {
        Ok(v)
    }
}

pub fn parse_energy_samples(text: &str, origin: &str) -> Result<EnergySeries> {
    parse_rows(
        text,
        origin,
        ENERGY_HEADER,
        |r: EnergyRow| {
            Ok(EnergySample {
                service: non_empty("service", r.service)?.into(),
                flavour: non_empty("flavour", r.flavour)?.into(),
                t: parse_time(&r.timestamp)?,
                energy: non_negative("energy_kwh", r.energy_kwh)?,
            })
        },
        |s| FlavourKey { service: s.service.clone(), flavour: s.flavour.clone() },
        |s| s.t,
    )
}

pub fn parse_traffic_samples(text: &str, origin: &str) -> Result<TrafficSeries> {
    parse_rows(
        text,
        origin,
        TRAFFIC_HEADER,
        |r: TrafficRow| {
            if r.source == r.destination {
                return Err(format!("source and destination are both `{}`", r.source));
            }
            Ok(TrafficSample {
                source: non_empty("source", r.source)?.into(),
                source_flavour: non_empty("source_flavour", r.source_flavour)?.into(),
                destination: non_empty("destination", r.destination)?.into(),
                t: parse_time(&r.timestamp)?,
                request_volume: non_negative("request_volume_per_hour", r.request_volume_per_hour)?,
                request_size: non_negative("request_size_gb", r.request_size_gb)?,
            })
        },
        |s| LinkKey {
            source: s.source.clone(),
            source_flavour: s.source_flavour.clone(),
            destination: s.destination.clone(),
        },
        |s| s.t,
    )
}

pub fn parse_carbon_samples(text: &str, origin: &str) -> Result<CarbonSeries> {
    parse_rows(
        text,
        origin,
        CARBON_HEADER,
        |r: CarbonRow| {
            Ok(CarbonSample {
                node: NodeId(non_empty("node", r.node)?),
                t: parse_time(&r.timestamp)?,
                ci: non_negative("ci_gco2_per_kwh", r.ci_gco2_per_kwh)?,
            })
        },
        |s| s.node.clone(),
        |s| s.t,
    )
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_energy_samples(path: &Path) -> Result<EnergySeries> {
    parse_energy_samples(&read(path)?, &path.display().to_string())
}

pub fn load_traffic_samples(path: &Path) -> Result<TrafficSeries> {
    parse_traffic_samples(&read(path)?, &path.display().to_string())
}

pub fn load_carbon_samples(path: &Path) -> Result<CarbonSeries> {
    parse_carbon_samples(&read(path)?, &path.display().to_string())
}

/// Keys present in the metric files that the descriptions do not declare.
/// These are warnings: the samples are kept, the generator ignores them.
pub fn unknown_ids(
    app: &ApplicationDescription,
    infra: &InfrastructureDescription,
    energy: &EnergySeries,
    traffic: &TrafficSeries,
    carbon: &CarbonSeries,
) -> Vec<String> {
    let known_flavour = |s: &ServiceId, f: &FlavourId| app.service(s).and_then(|svc| svc.flavour(f)).is_some();
    let mut out = Vec::new();
    for key in energy.keys() {
        if !known_flavour(&key.service, &key.flavour) {
            out.push(format!("energy metrics for undeclared {}/{}", key.service, key.flavour));
        }
    }
    for key in traffic.keys() {
        if !known_flavour(&key.source, &key.source_flavour) || app.service(&key.destination).is_none() {
            out.push(format!(
                "traffic metrics for undeclared link {}/{} -> {}",
                key.source, key.source_flavour, key.destination
            ));
        }
    }
    for node in carbon.keys() {
        if infra.node(node).is_none() {
            out.push(format!("carbon samples for undeclared node {node}"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_hourly_rows() {
        let mut text = String::from(ENERGY_HEADER);
        for h in 0..24 {
            text.push_str(&format!("\nfrontend,large,2025-03-01T{h:02}:00:00Z,82.5"));
        }
        let series = parse_energy_samples(&text, "energy.csv").unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series[&FlavourKey::new("frontend", "large")].len(), 24);
    }

    #[test]
    fn empty_file_is_empty_series() {
        assert!(parse_energy_samples("", "e.csv").unwrap().is_empty());
        assert!(parse_energy_samples(ENERGY_HEADER, "e.csv").unwrap().is_empty());
    }

    #[test]
    fn negative_energy_names_the_row() {
        let text = format!("{ENERGY_HEADER}\na,x,2025-03-01T00:00:00Z,1\na,x,2025-03-01T01:00:00Z,-2\n");
        let err = parse_energy_samples(&text, "e.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3"), "{msg}");
        assert!(msg.contains("energy_kwh"), "{msg}");
    }

    #[test]
    fn wrong_header_is_rejected() {
        let err = parse_energy_samples("service,flavour,time,energy\n", "e.csv").unwrap_err();
        assert!(err.to_string().contains("expected header"));
    }

    #[test]
    fn traffic_two_links_and_resorting() {
        let text = format!(
            "{TRAFFIC_HEADER}\n\
             frontend,large,productcatalog,2025-03-01T02:00:00Z,10,0.001\n\
             frontend,large,currency,2025-03-01T00:00:00Z,5,0.001\n\
             frontend,large,productcatalog,2025-03-01T00:00:00Z,30,0.001\n"
        );
        let series = parse_traffic_samples(&text, "t.csv").unwrap();
        assert_eq!(series.len(), 2);
        let pc = &series[&LinkKey::new("frontend", "large", "productcatalog")];
        assert_eq!(pc[0].request_volume, 30.0);
        assert!(pc[0].t < pc[1].t);
    }

    #[test]
    fn self_traffic_is_an_error() {
        let text = format!("{TRAFFIC_HEADER}\na,x,a,2025-03-01T00:00:00Z,1,1\n");
        let msg = parse_traffic_samples(&text, "t.csv").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn carbon_negative_and_duplicate_timestamps() {
        let text = format!("{CARBON_HEADER}\nitaly,2025-03-01T00:00:00Z,-1\n");
        assert!(parse_carbon_samples(&text, "c.csv").is_err());
        let text = format!("{CARBON_HEADER}\nitaly,2025-03-01T00:00:00Z,1\nitaly,2025-03-01T00:00:00+00:00,2\n");
        let msg = parse_carbon_samples(&text, "c.csv").unwrap_err().to_string();
        assert!(msg.contains("duplicate timestamp"), "{msg}");
    }

    #[test]
    fn malformed_number_reports_line() {
        let text = format!("{CARBON_HEADER}\nitaly,2025-03-01T00:00:00Z,1\nitaly,2025-03-01T01:00:00Z,abc\n");
        let msg = parse_carbon_samples(&text, "c.csv").unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }
}
