//! Persistent knowledge base.
//!
//! Four sections: service energy (`sk`), interaction energy (`ik`), node
//! carbon intensity (`nk`) and learned constraints (`ck`). Observations merge
//! into running extremes and a sample-weighted mean. Constraints carry a
//! memory weight `mu` that resets to 1 when regenerated and decays
//! geometrically otherwise; entries that fall below `mu_drop` are forgotten.
//!
//! On disk the knowledge base is a directory of JSON files:
//! `sk.json`, `ik.json`, `nk.json`, `ck.json` and `meta.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{CarbonProfile, EnergyProfile, Profiles};
use crate::ingest::{FlavourKey, LinkKey};
use crate::model::{Constraint, ConstraintId, NodeId};

pub const FORMAT_TAG: &str = "green-constraints-kb/1";
pub const DEFAULT_DECAY_DELTA: f64 = 0.8;
pub const DEFAULT_MU_DROP: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryPolicy {
    pub decay_delta: f64,
    pub mu_drop: f64,
}

impl Default for MemoryPolicy {
    fn default() -> Self {
        Self { decay_delta: DEFAULT_DECAY_DELTA, mu_drop: DEFAULT_MU_DROP }
    }
}

impl MemoryPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_delta > 0.0 && self.decay_delta < 1.0) {
            return Err(Error::Config(format!("decay_delta must lie in (0, 1), got {}", self.decay_delta)));
        }
        if !(self.mu_drop > 0.0 && self.mu_drop <= 1.0) {
            return Err(Error::Config(format!("mu_drop must lie in (0, 1], got {}", self.mu_drop)));
        }
        Ok(())
    }
}

/// Running statistics of an observed quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub max: f64,
    pub min: f64,
    pub avg: f64,
    /// Observations behind `avg`, used to weight later merges.
    pub samples: u64,
    pub updated_at: DateTime<Utc>,
}

impl Observed {
    fn new(max: f64, min: f64, avg: f64, samples: u64, now: DateTime<Utc>) -> Self {
        Self { max, min, avg, samples, updated_at: now }
    }

    fn merge(&mut self, max: f64, min: f64, avg: f64, samples: u64, now: DateTime<Utc>) {
        let total = self.samples + samples;
        if total > 0 {
            let merged = (self.avg * self.samples as f64 + avg * samples as f64) / total as f64;
            self.max = self.max.max(max);
            self.min = self.min.min(min);
            self.avg = merged.clamp(self.min, self.max);
        }
        self.samples = total;
        self.updated_at = self.updated_at.max(now);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoredConstraint {
    /// Impact in gCO2eq at generation time.
    pub em: f64,
    pub mu: f64,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct KnowledgeBase {
    pub sk: BTreeMap<FlavourKey, Observed>,
    pub ik: BTreeMap<LinkKey, Observed>,
    pub nk: BTreeMap<NodeId, Observed>,
    pub ck: BTreeMap<ConstraintId, StoredConstraint>,
    pub iteration: u64,
    /// Policy used by the last upsert, echoed into `meta.json`.
    pub policy: Option<MemoryPolicy>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.sk.is_empty() && self.ik.is_empty() && self.nk.is_empty() && self.ck.is_empty()
    }

    /// Newest timestamp anywhere in the knowledge base.
    pub fn latest_update(&self) -> Option<DateTime<Utc>> {
        let obs = self.sk.values().chain(self.ik.values()).chain(self.nk.values()).map(|o| o.updated_at);
        obs.chain(self.ck.values().map(|c| c.generated_at)).max()
    }

    /// Folds fresh profiles into the stored statistics.
    pub fn merge_observations(
        &mut self,
        profiles: &Profiles,
        carbon: &BTreeMap<NodeId, CarbonProfile>,
        now: DateTime<Utc>,
    ) {
        fn fold<K: Ord + Clone>(map: &mut BTreeMap<K, Observed>, key: &K, p: &EnergyProfile, now: DateTime<Utc>) {
            match map.get_mut(key) {
                Some(o) => o.merge(p.max, p.min, p.avg, p.samples, now),
                None => {
                    map.insert(key.clone(), Observed::new(p.max, p.min, p.avg, p.samples, now));
                }
            }
        }
        for (k, p) in &profiles.computation {
            fold(&mut self.sk, k, p, now);
        }
        for (k, p) in &profiles.communication {
            fold(&mut self.ik, k, p, now);
        }
        for (node, c) in carbon {
            let p = EnergyProfile { avg: c.avg, min: c.min, max: c.max, samples: c.samples };
            fold(&mut self.nk, node, &p, now);
        }
    }

    /// Stores `fresh` at `mu = 1`, decays every other constraint and drops
    /// the ones whose memory weight falls below `mu_drop`.
    pub fn upsert_constraints(&mut self, fresh: &[Constraint], now: DateTime<Utc>, policy: &MemoryPolicy) {
        let regenerated: BTreeSet<&ConstraintId> = fresh.iter().map(|c| &c.id).collect();
        self.ck.retain(|id, stored| {
            if regenerated.contains(id) {
                return true;
            }
            stored.mu *= policy.decay_delta;
            stored.mu >= policy.mu_drop
        });
        for c in fresh {
            let generated_at = self.ck.get(&c.id).map_or(now, |s| s.generated_at.max(now));
            self.ck.insert(c.id.clone(), StoredConstraint { em: c.em, mu: 1.0, generated_at });
        }
        self.iteration += 1;
        self.policy = Some(*policy);
    }

    /// Constraints still considered valid, in identity order.
    pub fn valid_constraints(&self, policy: &MemoryPolicy) -> Vec<Constraint> {
        self.ck
            .iter()
            .filter(|(_, s)| s.mu >= policy.mu_drop)
            .map(|(id, s)| Constraint {
                id: id.clone(),
                em: s.em,
                weight: None,
                mu: s.mu,
                generated_at: s.generated_at,
            })
            .collect()
    }

    pub fn persist(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let sk: Vec<FlavourEntry> = self.sk.iter().map(|(k, o)| FlavourEntry { key: k.clone(), stats: *o }).collect();
        let ik: Vec<LinkEntry> = self.ik.iter().map(|(k, o)| LinkEntry { key: k.clone(), stats: *o }).collect();
        let nk: Vec<NodeEntry> = self.nk.iter().map(|(k, o)| NodeEntry { node: k.clone(), stats: *o }).collect();
        let ck: Vec<ConstraintEntry> =
            self.ck.iter().map(|(k, s)| ConstraintEntry { id: k.clone(), stored: *s }).collect();
        let meta = Meta { format: FORMAT_TAG.to_string(), iteration: self.iteration, policy: self.policy };

        write_json(&dir.join("sk.json"), &sk)?;
        write_json(&dir.join("ik.json"), &ik)?;
        write_json(&dir.join("nk.json"), &nk)?;
        write_json(&dir.join("ck.json"), &ck)?;
        write_json(&dir.join("meta.json"), &meta)
    }

    /// Loads a knowledge base. A missing directory or file is an empty
    /// section (first run); an unreadable or malformed file is an error.
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.exists() {
            return Ok(Self::new());
        }
        let sk: Vec<FlavourEntry> = read_json(&dir.join("sk.json"))?.unwrap_or_default();
        let ik: Vec<LinkEntry> = read_json(&dir.join("ik.json"))?.unwrap_or_default();
        let nk: Vec<NodeEntry> = read_json(&dir.join("nk.json"))?.unwrap_or_default();
        let ck: Vec<ConstraintEntry> = read_json(&dir.join("ck.json"))?.unwrap_or_default();
        let meta: Option<Meta> = read_json(&dir.join("meta.json"))?;
        if let Some(m) = &meta {
            if m.format != FORMAT_TAG {
                return Err(Error::Parse {
                    file: dir.join("meta.json").display().to_string(),
                    line: None,
                    msg: format!("unsupported knowledge base format `{}`", m.format),
                });
            }
        }
        Ok(Self {
            sk: sk.into_iter().map(|e| (e.key, e.stats)).collect(),
            ik: ik.into_iter().map(|e| (e.key, e.stats)).collect(),
            nk: nk.into_iter().map(|e| (e.node, e.stats)).collect(),
            ck: ck.into_iter().map(|e| (e.id, e.stored)).collect(),
            iteration: meta.as_ref().map_or(0, |m| m.iteration),
            policy: meta.and_then(|m| m.policy),
        })
    }

    /// Removes the knowledge base files from `dir`, leaving other files alone.
    pub fn reset(dir: &Path) -> Result<()> {
        for name in FILES {
            let path = dir.join(name);
            if path.exists() {
                fs::remove_file(&path).map_err(|e| Error::io(&path, e))?;
            }
        }
        Ok(())
    }
}

const FILES: [&str; 5] = ["sk.json", "ik.json", "nk.json", "ck.json", "meta.json"];

#[derive(Serialize, Deserialize)]
struct FlavourEntry {
    #[serde(flatten)]
    key: FlavourKey,
    #[serde(flatten)]
    stats: Observed,
}

#[derive(Serialize, Deserialize)]
struct LinkEntry {
    #[serde(flatten)]
    key: LinkKey,
    #[serde(flatten)]
    stats: Observed,
}

#[derive(Serialize, Deserialize)]
struct NodeEntry {
    node: NodeId,
    #[serde(flatten)]
    stats: Observed,
}

#[derive(Serialize, Deserialize)]
struct ConstraintEntry {
    #[serde(flatten)]
    id: ConstraintId,
    #[serde(flatten)]
    stored: StoredConstraint,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format: String,
    iteration: u64,
    #[serde(default)]
    policy: Option<MemoryPolicy>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Pipeline(e.to_string()))?;
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map(Some).map_err(|e| Error::Parse {
        file: path.display().to_string(),
        line: Some(e.line() as u64),
        msg: e.to_string(),
    })
}
