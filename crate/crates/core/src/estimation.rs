//! Energy estimation and energy-mix gathering.
//!
//! Sample series become [`EnergyProfile`]s (per deployed flavour and per
//! communication link) and [`CarbonProfile`]s (per node). [`enrich`] then
//! annotates the application and infrastructure descriptions with them.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{CarbonSample, CarbonSeries, EnergySeries, FlavourKey, LinkKey, TrafficSample, TrafficSeries};
use crate::model::{ApplicationDescription, InfrastructureDescription, NodeId, ServiceId};

/// Transmission network electricity intensity, kWh per GB.
pub const DEFAULT_K_KWH_PER_GB: f64 = 0.002;
pub const DEFAULT_CARBON_WINDOW_HOURS: f64 = 24.0;

/// Average, minimum and maximum energy over `samples` observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub samples: u64,
}

impl EnergyProfile {
    /// Statistics over `values`. Summation runs over the sorted values so the
    /// result does not depend on input order.
    pub fn from_values(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        let min = v[0];
        let max = v[v.len() - 1];
        let avg = (v.iter().sum::<f64>() / v.len() as f64).clamp(min, max);
        Some(Self { avg, min, max, samples: v.len() as u64 })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { avg: self.avg * factor, min: self.min * factor, max: self.max * factor, samples: self.samples }
    }
}

/// Mean energy of a flavour's executions.
pub fn computation_profile(series: &[crate::ingest::EnergySample]) -> Result<EnergyProfile> {
    EnergyProfile::from_values(series.iter().map(|s| s.energy))
        .ok_or_else(|| Error::NoData("empty energy series".into()))
}

/// Energy spent moving one sample's traffic across the network.
pub fn traffic_to_energy(sample: &TrafficSample, k_kwh_per_gb: f64) -> f64 {
    sample.request_volume * sample.request_size * k_kwh_per_gb
}

/// Mean communication energy of a link. The receiving flavour plays no part.
pub fn communication_profile(series: &[TrafficSample], k_kwh_per_gb: f64) -> Result<EnergyProfile> {
    EnergyProfile::from_values(series.iter().map(|s| traffic_to_energy(s, k_kwh_per_gb)))
        .ok_or_else(|| Error::NoData("empty traffic series".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CarbonSource {
    Measured,
    OperatorOverride,
    Inferred,
}

/// Grid carbon intensity of a node over the recent window, gCO2eq/kWh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CarbonProfile {
    pub avg: f64,
    pub min: f64,
    pub max: f64,
    pub samples: u64,
    pub window_hours: f64,
    pub source: CarbonSource,
}

/// Averages the samples falling in `(latest - window, latest]`, where
/// `latest` is the newest sample of the series. An override wins outright.
pub fn average_carbon(series: &[CarbonSample], window: Duration, override_ci: Option<f64>) -> Result<CarbonProfile> {
    let window_hours = window.num_seconds() as f64 / 3600.0;
    if let Some(ci) = override_ci {
        return Ok(CarbonProfile {
            avg: ci,
            min: ci,
            max: ci,
            samples: 1,
            window_hours,
            source: CarbonSource::OperatorOverride,
        });
    }
    let latest = series.iter().map(|s| s.t).max().ok_or_else(|| Error::NoData("empty carbon series".into()))?;
    let start = latest - window;
    let stats = EnergyProfile::from_values(series.iter().filter(|s| s.t > start).map(|s| s.ci))
        .ok_or_else(|| Error::NoData("no carbon samples inside the window".into()))?;
    Ok(CarbonProfile {
        avg: stats.avg,
        min: stats.min,
        max: stats.max,
        samples: stats.samples,
        window_hours,
        source: CarbonSource::Measured,
    })
}

/// Measured profiles keyed by flavour and by link.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Profiles {
    pub computation: BTreeMap<FlavourKey, EnergyProfile>,
    pub communication: BTreeMap<LinkKey, EnergyProfile>,
}

impl Profiles {
    pub fn from_series(energy: &EnergySeries, traffic: &TrafficSeries, k_kwh_per_gb: f64) -> Result<Self> {
        let mut out = Profiles::default();
        for (key, series) in energy {
            if !series.is_empty() {
                out.computation.insert(key.clone(), computation_profile(series)?);
            }
        }
        for (key, series) in traffic {
            if !series.is_empty() {
                out.communication.insert(key.clone(), communication_profile(series, k_kwh_per_gb)?);
            }
        }
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.computation.is_empty() && self.communication.is_empty()
    }
}

/// Carbon profile for every declared node. A node's `profile.carbon` in the
/// infrastructure file acts as an operator override.
pub fn carbon_profiles(
    infra: &InfrastructureDescription,
    series: &CarbonSeries,
    window: Duration,
) -> Result<BTreeMap<NodeId, CarbonProfile>> {
    let mut out = BTreeMap::new();
    for node in &infra.nodes {
        let samples = series.get(&node.id).map(Vec::as_slice).unwrap_or(&[]);
        let profile = average_carbon(samples, window, node.carbon()).map_err(|_| {
            Error::NoData(format!("node {} has no carbon samples in the window and no override", node.id))
        })?;
        out.insert(node.id.clone(), profile);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnergySource {
    Measured,
    /// Scaled from a measured sibling flavour by the ratio of cpu requests.
    Inferred,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlavourEnergy {
    pub profile: EnergyProfile,
    pub source: EnergySource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedApplication {
    /// The input description with `energy` set on flavours and links.
    pub app: ApplicationDescription,
    pub computation: BTreeMap<FlavourKey, FlavourEnergy>,
    pub communication: BTreeMap<LinkKey, EnergyProfile>,
    /// Services with no measured flavour; the generator skips them.
    pub unprofiled: BTreeSet<ServiceId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedInfrastructure {
    /// The input description with `profile.carbon` set on every node.
    pub infra: InfrastructureDescription,
    pub carbon: BTreeMap<NodeId, CarbonProfile>,
}

impl EnrichedInfrastructure {
    pub fn ci(&self, node: &NodeId) -> Option<f64> {
        self.carbon.get(node).map(|c| c.avg)
    }

    /// Mean carbon intensity over all nodes.
    pub fn mean_ci(&self) -> Option<f64> {
        if self.carbon.is_empty() {
            return None;
        }
        Some(self.carbon.values().map(|c| c.avg).sum::<f64>() / self.carbon.len() as f64)
    }
}

impl EnrichedApplication {
    pub fn energy(&self, key: &FlavourKey) -> Option<f64> {
        self.computation.get(key).map(|e| e.profile.avg)
    }

    pub fn link_energy(&self, key: &LinkKey) -> Option<f64> {
        self.communication.get(key).map(|p| p.avg)
    }
}

/// Annotates both descriptions. Profiles for undeclared ids are dropped.
pub fn enrich(
    app: &ApplicationDescription,
    infra: &InfrastructureDescription,
    profiles: &Profiles,
    carbon: &BTreeMap<NodeId, CarbonProfile>,
) -> Result<(EnrichedApplication, EnrichedInfrastructure)> {
    let mut app_out = app.clone();
    let mut computation = BTreeMap::new();
    let mut unprofiled = BTreeSet::new();

    for svc in &mut app_out.services {
        let measured: Vec<(usize, EnergyProfile)> = svc
            .flavours
            .iter()
            .enumerate()
            .filter_map(|(i, f)| {
                profiles
                    .computation
                    .get(&FlavourKey { service: svc.component_id.clone(), flavour: f.id.clone() })
                    .map(|p| (i, *p))
            })
            .collect();
        if measured.is_empty() {
            unprofiled.insert(svc.component_id.clone());
            continue;
        }

        let estimates: Vec<Option<FlavourEnergy>> = (0..svc.flavours.len())
            .map(|i| {
                if let Some((_, p)) = measured.iter().find(|(j, _)| *j == i) {
                    return Some(FlavourEnergy { profile: *p, source: EnergySource::Measured });
                }
                infer_from_sibling(&svc.flavours, i, &measured)
                    .map(|profile| FlavourEnergy { profile, source: EnergySource::Inferred })
            })
            .collect();

        for (flavour, estimate) in svc.flavours.iter_mut().zip(estimates) {
            if let Some(e) = estimate {
                flavour.energy = Some(e.profile.avg);
                computation.insert(FlavourKey { service: svc.component_id.clone(), flavour: flavour.id.clone() }, e);
            }
        }
    }

    let mut communication = BTreeMap::new();
    for (key, profile) in &profiles.communication {
        let known = app.service(&key.source).and_then(|s| s.flavour(&key.source_flavour)).is_some()
            && app.service(&key.destination).is_some()
            && key.source != key.destination;
        if known {
            communication.insert(key.clone(), *profile);
        }
    }
    for link in &mut app_out.links {
        let key = LinkKey {
            source: link.source.clone(),
            source_flavour: link.source_flavour.clone(),
            destination: link.destination.clone(),
        };
        link.energy = communication.get(&key).map(|p| p.avg);
    }

    let mut infra_out = infra.clone();
    let mut node_carbon = BTreeMap::new();
    for node in &mut infra_out.nodes {
        let profile = carbon
            .get(&node.id)
            .ok_or_else(|| Error::NoData(format!("node {} has neither carbon samples nor an override", node.id)))?;
        node.profile.carbon = Some(profile.avg);
        node_carbon.insert(node.id.clone(), *profile);
    }

    Ok((
        EnrichedApplication { app: app_out, computation, communication, unprofiled },
        EnrichedInfrastructure { infra: infra_out, carbon: node_carbon },
    ))
}

/// Scales the measured flavour with the closest cpu request. Needs a positive
/// cpu request on both sides; ties go to the earlier declared flavour.
fn infer_from_sibling(
    flavours: &[crate::model::Flavour],
    target: usize,
    measured: &[(usize, EnergyProfile)],
) -> Option<EnergyProfile> {
    let target_cpu = flavours[target].cpu().filter(|c| *c > 0.0)?;
    measured
        .iter()
        .filter_map(|(i, p)| flavours[*i].cpu().filter(|c| *c > 0.0).map(|cpu| (cpu, p)))
        .min_by(|a, b| (a.0 - target_cpu).abs().total_cmp(&(b.0 - target_cpu).abs()))
        .map(|(cpu, p)| p.scaled(target_cpu / cpu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{EnergySample, FlavourKey};
    use crate::model::*;
    use chrono::{TimeZone, Utc};

    fn at(h: i64) -> chrono::DateTime<Utc> {
        Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap() + Duration::hours(h)
    }

    fn energy(values: &[f64]) -> Vec<EnergySample> {
        values
            .iter()
            .enumerate()
            .map(|(i, e)| EnergySample { service: "s".into(), flavour: "f".into(), t: at(i as i64), energy: *e })
            .collect()
    }

    fn traffic(volume: f64, size: f64) -> TrafficSample {
        TrafficSample {
            source: "a".into(),
            source_flavour: "f".into(),
            destination: "b".into(),
            t: at(0),
            request_volume: volume,
            request_size: size,
        }
    }

    #[test]
    fn computation_profile_examples() {
        let p = computation_profile(&energy(&[100.0, 200.0, 300.0])).unwrap();
        assert_eq!((p.avg, p.min, p.max, p.samples), (200.0, 100.0, 300.0, 3));
        assert_eq!(computation_profile(&energy(&[1981.0, 1981.0])).unwrap().avg, 1981.0);
        let p = computation_profile(&energy(&[431.0])).unwrap();
        assert_eq!((p.avg, p.min, p.max, p.samples), (431.0, 431.0, 431.0, 1));
        assert!(matches!(computation_profile(&[]), Err(Error::NoData(_))));
    }

    #[test]
    fn constant_series_keeps_avg_inside_bounds() {
        let p = computation_profile(&energy(&[0.1, 0.1, 0.1])).unwrap();
        assert_eq!(p.avg, 0.1);
    }

    #[test]
    fn traffic_energy_examples() {
        let e = traffic_to_energy(&traffic(1000.0, 0.001), 0.002);
        assert!((e - 0.002).abs() < 1e-15);
        assert_eq!(traffic_to_energy(&traffic(0.0, 3.0), 0.002), 0.0);
        let base = traffic_to_energy(&traffic(40.0, 0.002), 0.002);
        let scaled = traffic_to_energy(&traffic(40.0 * 15000.0, 0.002), 0.002);
        assert!((scaled / base - 15000.0).abs() < 1e-9);
    }

    #[test]
    fn communication_profile_examples() {
        let p = communication_profile(&[traffic(1000.0, 0.001), traffic(2000.0, 0.001)], 0.002).unwrap();
        assert!((p.avg - 0.003).abs() < 1e-15);
        let p = communication_profile(&[traffic(10.0, 0.5)], 0.002).unwrap();
        assert_eq!(p.avg, p.min);
        assert_eq!(p.avg, p.max);
    }

    fn carbon(values: &[f64]) -> Vec<CarbonSample> {
        values.iter().enumerate().map(|(i, ci)| CarbonSample { node: "n".into(), t: at(i as i64), ci: *ci }).collect()
    }

    #[test]
    fn average_carbon_examples() {
        let p = average_carbon(&carbon(&[16.0; 24]), Duration::hours(24), None).unwrap();
        assert_eq!((p.avg, p.samples, p.source), (16.0, 24, CarbonSource::Measured));
        let p = average_carbon(&carbon(&[16.0; 24]), Duration::hours(24), Some(376.0)).unwrap();
        assert_eq!((p.avg, p.min, p.max, p.source), (376.0, 376.0, 376.0, CarbonSource::OperatorOverride));
        assert_eq!(average_carbon(&carbon(&[100.0, 300.0]), Duration::hours(24), None).unwrap().avg, 200.0);
        assert!(average_carbon(&[], Duration::hours(24), None).is_err());
        assert_eq!(average_carbon(&[], Duration::hours(24), Some(5.0)).unwrap().avg, 5.0);
    }

    #[test]
    fn carbon_window_drops_old_samples() {
        // 48 hourly samples, the first day at 500 and the second at 100.
        let mut values = vec![500.0; 24];
        values.extend([100.0; 24]);
        let p = average_carbon(&carbon(&values), Duration::hours(24), None).unwrap();
        assert_eq!((p.avg, p.samples), (100.0, 24));
    }

    fn flavour(id: &str, cpu: Option<f64>) -> Flavour {
        Flavour {
            id: id.into(),
            resources: cpu.map(|c| BTreeMap::from([("cpu".to_string(), c)])).unwrap_or_default(),
            qos: BTreeMap::new(),
            energy: None,
        }
    }

    fn fixture() -> (ApplicationDescription, InfrastructureDescription) {
        let svc = |id: &str, flavours: Vec<Flavour>| Service {
            component_id: id.into(),
            description: String::new(),
            must_deploy: true,
            flavours_order: flavours.iter().map(|f| f.id.clone()).collect(),
            flavours,
            placement: Placement::Public,
            security: Default::default(),
            extra: Default::default(),
        };
        let app = ApplicationDescription {
            name: "t".into(),
            services: vec![
                svc("web", vec![flavour("large", Some(1000.0)), flavour("tiny", Some(600.0))]),
                svc("db", vec![flavour("tiny", Some(200.0))]),
            ],
            links: vec![CommunicationLink {
                source: "web".into(),
                source_flavour: "large".into(),
                destination: "db".into(),
                qos: BTreeMap::new(),
                energy: None,
            }],
        };
        let infra = InfrastructureDescription {
            nodes: vec![Node { id: "n1".into(), capabilities: Default::default(), profile: Default::default() }],
        };
        (app, infra)
    }

    fn one_node_carbon(ci: f64) -> BTreeMap<NodeId, CarbonProfile> {
        BTreeMap::from([(
            NodeId::from("n1"),
            CarbonProfile { avg: ci, min: ci, max: ci, samples: 1, window_hours: 24.0, source: CarbonSource::Measured },
        )])
    }

    #[test]
    fn enrich_infers_sibling_by_cpu_ratio() {
        let (app, infra) = fixture();
        let mut profiles = Profiles::default();
        profiles.computation.insert(
            FlavourKey::new("web", "large"),
            EnergyProfile { avg: 1000.0, min: 900.0, max: 1100.0, samples: 24 },
        );
        profiles
            .communication
            .insert(LinkKey::new("web", "large", "db"), EnergyProfile { avg: 2.0, min: 2.0, max: 2.0, samples: 1 });
        let (ea, ei) = enrich(&app, &infra, &profiles, &one_node_carbon(100.0)).unwrap();

        let tiny = ea.computation[&FlavourKey::new("web", "tiny")];
        assert_eq!(tiny.source, EnergySource::Inferred);
        // 1000 kWh * 600m / 1000m
        assert!((tiny.profile.avg - 600.0).abs() < 1e-9);
        assert!((tiny.profile.max - 660.0).abs() < 1e-9);
        assert_eq!(ea.app.services[0].flavours[1].energy, Some(tiny.profile.avg));
        assert_eq!(ea.app.links[0].energy, Some(2.0));

        assert!(ea.unprofiled.contains(&ServiceId::from("db")));
        assert!(ea.app.services[1].flavours[0].energy.is_none());
        assert_eq!(ei.infra.nodes[0].profile.carbon, Some(100.0));
    }

    #[test]
    fn enrich_without_cpu_cannot_infer() {
        let (mut app, infra) = fixture();
        app.services[0].flavours[1] = flavour("tiny", None);
        let mut profiles = Profiles::default();
        profiles.computation.insert(
            FlavourKey::new("web", "large"),
            EnergyProfile { avg: 1000.0, min: 1000.0, max: 1000.0, samples: 1 },
        );
        let (ea, _) = enrich(&app, &infra, &profiles, &one_node_carbon(1.0)).unwrap();
        assert!(!ea.computation.contains_key(&FlavourKey::new("web", "tiny")));
        assert!(!ea.unprofiled.contains(&ServiceId::from("web")));
    }

    #[test]
    fn node_without_carbon_is_an_error() {
        let (app, infra) = fixture();
        let err = enrich(&app, &infra, &Profiles::default(), &BTreeMap::new()).unwrap_err();
        assert!(err.to_string().contains("n1"));
        let err = carbon_profiles(&infra, &CarbonSeries::new(), Duration::hours(24)).unwrap_err();
        assert!(err.to_string().contains("n1"));
    }
}
