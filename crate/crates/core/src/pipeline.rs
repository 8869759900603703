//! End-to-end run: gather, estimate, generate, enrich the knowledge base,
//! rank, explain, adapt.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::adapter::{structured_to_json, to_prolog, to_structured, StructuredConstraint};
use crate::engine::{generate, ConstraintLibrary, Generation, GeneratorConfig, DEFAULT_ALPHA};
use crate::error::{Error, Result};
use crate::estimation::{
    carbon_profiles, enrich, EnrichedApplication, EnrichedInfrastructure, Profiles, DEFAULT_CARBON_WINDOW_HOURS,
    DEFAULT_K_KWH_PER_GB,
};
use crate::explain::{explain_all, render_report, ExplainInputs, Explanation, ReportFormat};
use crate::ingest::{self, CarbonSeries, EnergySeries, TrafficSeries};
use crate::kb::{KnowledgeBase, MemoryPolicy, DEFAULT_DECAY_DELTA, DEFAULT_MU_DROP};
use crate::model::{
    validate_application, validate_infrastructure, ApplicationDescription, Constraint, InfrastructureDescription,
    Violation,
};
use crate::ranker::{rank, RankerConfig, DEFAULT_DROP_WEIGHT, DEFAULT_LAMBDA_LOW, DEFAULT_MIN_IMPACT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k_kwh_per_gb: f64,
    pub carbon_window_hours: f64,
    pub alpha: f64,
    pub decay_delta: f64,
    pub mu_drop: f64,
    pub min_impact_f: f64,
    pub lambda_low: f64,
    pub drop_weight: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_kwh_per_gb: DEFAULT_K_KWH_PER_GB,
            carbon_window_hours: DEFAULT_CARBON_WINDOW_HOURS,
            alpha: DEFAULT_ALPHA,
            decay_delta: DEFAULT_DECAY_DELTA,
            mu_drop: DEFAULT_MU_DROP,
            min_impact_f: DEFAULT_MIN_IMPACT,
            lambda_low: DEFAULT_LAMBDA_LOW,
            drop_weight: DEFAULT_DROP_WEIGHT,
        }
    }
}

impl PipelineConfig {
    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig { alpha: self.alpha }
    }

    pub fn policy(&self) -> MemoryPolicy {
        MemoryPolicy { decay_delta: self.decay_delta, mu_drop: self.mu_drop }
    }

    pub fn ranker(&self) -> RankerConfig {
        RankerConfig { min_impact: self.min_impact_f, lambda_low: self.lambda_low, drop_weight: self.drop_weight }
    }

    pub fn carbon_window(&self) -> Duration {
        Duration::milliseconds((self.carbon_window_hours * 3_600_000.0).round() as i64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_kwh_per_gb.is_finite() && self.k_kwh_per_gb >= 0.0) {
            return Err(Error::Config(format!("k_kwh_per_gb must be >= 0, got {}", self.k_kwh_per_gb)));
        }
        if !(self.carbon_window_hours.is_finite() && self.carbon_window_hours > 0.0) {
            return Err(Error::Config(format!("carbon_window_hours must be > 0, got {}", self.carbon_window_hours)));
        }
        self.generator().validate()?;
        self.policy().validate()?;
        self.ranker().validate()
    }
}

/// Everything a run reads, already parsed.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub app: ApplicationDescription,
    pub infra: InfrastructureDescription,
    pub energy: EnergySeries,
    pub traffic: TrafficSeries,
    pub carbon: CarbonSeries,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub app: EnrichedApplication,
    pub infra: EnrichedInfrastructure,
    pub generation: Generation,
    /// Fresh and remembered constraints after weighting, in output order.
    pub ranked: Vec<Constraint>,
    pub explanations: Vec<Explanation>,
    pub warnings: Vec<String>,
}

/// Descriptions and configuration are checked before anything else happens.
pub fn validate_inputs(inputs: &Inputs, config: &PipelineConfig) -> Result<()> {
    config.validate()?;
    let mut violations: Vec<Violation> = validate_application(&inputs.app);
    violations.extend(validate_infrastructure(&inputs.infra));
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations))
    }
}

/// Runs the whole pipeline against an in-memory knowledge base. The KB is
/// changed in exactly one place, between generation and ranking, and only if
/// every earlier stage succeeded.
pub fn run(
    inputs: &Inputs,
    config: &PipelineConfig,
    library: &ConstraintLibrary,
    kb: &mut KnowledgeBase,
    now: DateTime<Utc>,
) -> Result<Outcome> {
    validate_inputs(inputs, config)?;
    let warnings = ingest::unknown_ids(&inputs.app, &inputs.infra, &inputs.energy, &inputs.traffic, &inputs.carbon);

    let profiles = Profiles::from_series(&inputs.energy, &inputs.traffic, config.k_kwh_per_gb)?;
    if profiles.computation.is_empty() {
        return Err(Error::NoData("no profiled services: the energy metrics are empty".into()));
    }
    let carbon = carbon_profiles(&inputs.infra, &inputs.carbon, config.carbon_window())?;
    let (app, infra) = enrich(&inputs.app, &inputs.infra, &profiles, &carbon)?;
    if app.computation.is_empty() {
        return Err(Error::NoData("no profiled services: no energy metrics match a declared flavour".into()));
    }

    let generation = generate(&app, &infra, &config.generator(), library, now)?;

    let policy = config.policy();
    kb.merge_observations(&profiles, &carbon, now);
    kb.upsert_constraints(&generation.constraints, now, &policy);

    let ranked = rank(kb.valid_constraints(&policy), &config.ranker());
    let explanations = explain_all(&ranked, ExplainInputs { app: &app, infra: &infra, kb: Some(kb) }, library);
    Ok(Outcome { app, infra, generation, ranked, explanations, warnings })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Prolog,
    Structured,
    #[default]
    Both,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "prolog" => Ok(Self::Prolog),
            "structured" => Ok(Self::Structured),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown output format `{other}` (expected prolog, structured or both)")),
        }
    }
}

/// Rendered output documents.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub prolog: String,
    pub structured: Vec<StructuredConstraint>,
    pub report: String,
}

pub fn render(outcome: &Outcome, report_format: ReportFormat) -> Result<Artifacts> {
    let ranges: Vec<_> = outcome.explanations.iter().map(|e| e.range).collect();
    Ok(Artifacts {
        prolog: to_prolog(&outcome.ranked)?,
        structured: to_structured(&outcome.ranked, &ranges)?,
        report: render_report(&outcome.explanations, report_format),
    })
}

pub fn report_file_name(format: ReportFormat) -> &'static str {
    match format {
        ReportFormat::Md => "report.md",
        ReportFormat::Text => "report.txt",
    }
}

/// Writes the selected artifacts into `dir` and returns the paths written.
pub fn write_artifacts(
    artifacts: &Artifacts,
    dir: &Path,
    output: OutputFormat,
    report_format: ReportFormat,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    if matches!(output, OutputFormat::Prolog | OutputFormat::Both) {
        files.push((dir.join("constraints.pl"), artifacts.prolog.clone()));
    }
    if matches!(output, OutputFormat::Structured | OutputFormat::Both) {
        files.push((dir.join("constraints.json"), structured_to_json(&artifacts.structured)));
    }
    files.push((dir.join(report_file_name(report_format)), artifacts.report.clone()));
    for (path, body) in &files {
        fs::write(path, body).map_err(|e| Error::io(path, e))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

/// Paths and settings for one `generate` run. Relative paths in a manifest
/// file are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub app: PathBuf,
    pub infra: PathBuf,
    pub energy_metrics: PathBuf,
    #[serde(default)]
    pub traffic_metrics: Option<PathBuf>,
    #[serde(default)]
    pub carbon: Option<PathBuf>,
    pub kb_dir: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub config: PipelineConfig,
    #[serde(default)]
    pub output_format: OutputFormat,
    #[serde(default)]
    pub report_format: ReportFormat,
    /// Only used by benchmarks.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl RunManifest {
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut m: Self = crate::model::read_document(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut m.app, &mut m.infra, &mut m.energy_metrics, &mut m.kb_dir, &mut m.out_dir] {
            resolve(p);
        }
        for p in [m.traffic_metrics.as_mut(), m.carbon.as_mut()].into_iter().flatten() {
            resolve(p);
        }
        Ok(m)
    }

    /// Input files that do not exist.
    pub fn missing_inputs(&self) -> Vec<Violation> {
        let mut inputs = vec![("app", &self.app), ("infra", &self.infra), ("energy_metrics", &self.energy_metrics)];
        if let Some(p) = &self.traffic_metrics {
            inputs.push(("traffic_metrics", p));
        }
        if let Some(p) = &self.carbon {
            inputs.push(("carbon", p));
        }
        inputs
            .into_iter()
            .filter(|(_, p)| !p.is_file())
            .map(|(name, p)| Violation::new(name, format!("file {} does not exist", p.display())))
            .collect()
    }

    pub fn load_inputs(&self) -> Result<Inputs> {
        let missing = self.missing_inputs();
        if !missing.is_empty() {
            return Err(Error::Validation(missing));
        }
        Ok(Inputs {
            app: ApplicationDescription::from_path(&self.app)?,
            infra: InfrastructureDescription::from_path(&self.infra)?,
            energy: ingest::load_energy_samples(&self.energy_metrics)?,
            traffic: self.traffic_metrics.as_deref().map(ingest::load_traffic_samples).transpose()?.unwrap_or_default(),
            carbon: self.carbon.as_deref().map(ingest::load_carbon_samples).transpose()?.unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub outcome: Outcome,
    pub written: Vec<PathBuf>,
    pub iteration: u64,
}

/// The `generate` command. The KB directory is only rewritten when the run
/// succeeds up to ranking.
pub fn run_generate(
    manifest: &RunManifest,
    library: &ConstraintLibrary,
    now: Option<DateTime<Utc>>,
) -> Result<GenerateReport> {
    manifest.config.validate()?;
    let inputs = manifest.load_inputs()?;
    let mut kb = KnowledgeBase::load(&manifest.kb_dir)?;
    // Never stamp a run earlier than what the KB already holds.
    let now = now.unwrap_or_else(Utc::now).max(kb.latest_update().unwrap_or(DateTime::<Utc>::MIN_UTC));
    let outcome = run(&inputs, &manifest.config, library, &mut kb, now)?;
    let artifacts = render(&outcome, manifest.report_format)?;
    kb.persist(&manifest.kb_dir)?;
    let written = write_artifacts(&artifacts, &manifest.out_dir, manifest.output_format, manifest.report_format)?;
    Ok(GenerateReport { outcome, written, iteration: kb.iteration })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_validation() {
        let c = PipelineConfig::default();
        assert!(c.validate().is_ok());
        assert_eq!(c.carbon_window(), Duration::hours(24));
        assert!(PipelineConfig { alpha: 1.0, ..c }.validate().is_err());
        assert!(PipelineConfig { carbon_window_hours: 0.0, ..c }.validate().is_err());
        assert!(PipelineConfig { k_kwh_per_gb: -1.0, ..c }.validate().is_err());
        assert!(PipelineConfig { mu_drop: 1.5, ..c }.validate().unwrap_err().is_validation());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: PipelineConfig = serde_yaml::from_str("alpha: 0.5").unwrap();
        assert_eq!(c, PipelineConfig { alpha: 0.5, ..Default::default() });
        assert!(serde_yaml::from_str::<PipelineConfig>("alpah: 0.5").is_err());
    }

    #[test]
    fn manifest_paths_resolve_against_its_directory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.yaml");
        fs::write(&path, "app: a.yaml\ninfra: /abs/i.yaml\nenergy_metrics: e.csv\nkb_dir: kb\nout_dir: out\n").unwrap();
        let m = RunManifest::from_path(&path).unwrap();
        assert_eq!(m.app, dir.path().join("a.yaml"));
        assert_eq!(m.infra, PathBuf::from("/abs/i.yaml"));
        assert_eq!(m.output_format, OutputFormat::Both);
        assert_eq!(m.missing_inputs().len(), 3);
        assert!(m.load_inputs().unwrap_err().is_validation());
    }

    #[test]
    fn format_parsing() {
        assert_eq!("structured".parse::<OutputFormat>().unwrap(), OutputFormat::Structured);
        assert!("xml".parse::<OutputFormat>().is_err());
        assert_eq!(report_file_name("text".parse().unwrap()), "report.txt");
    }
}
