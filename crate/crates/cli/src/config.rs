use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use trslab::analysis::{CloudConfig, FitConfig, RateConfig};
use trslab::generators::GenSpec;
use trslab::PgmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    /// Used as the file-name prefix; defaults to `<case>_n<n>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: GenSpec,
}

impl Family {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| format!("{}_n{}", self.spec.case_target.as_str().to_lowercase(), self.spec.n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub start: u64,
    pub count: u64,
}

impl Default for SeedRange {
    fn default() -> Self {
        Self { start: 0, count: 10 }
    }
}

impl SeedRange {
    pub fn iter(&self) -> impl Iterator<Item = u64> {
        self.start..self.start + self.count
    }
}

/// Where projected-gradient runs start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum Start {
    /// Candidate-based default start; `x0_policy` of the PGM config.
    Default,
    /// Seeded perturbation of the reference optimum.
    Perturbed { radius: f64 },
}

impl Default for Start {
    fn default() -> Self {
        Start::Perturbed { radius: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub families: Vec<Family>,
    pub seeds: SeedRange,
    pub pgm: PgmConfig,
    /// Fixed cloud parameters; by default each instance gets the directional cloud for its case.
    pub cloud: Option<CloudConfig>,
    pub fit: FitConfig,
    pub rate: RateConfig,
    pub start: Start,
    /// Number of radius bands for the per-band refits.
    pub radius_bands: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            families: Vec::new(),
            seeds: SeedRange::default(),
            pgm: PgmConfig::default(),
            cloud: None,
            fit: FitConfig::default(),
            rate: RateConfig::default(),
            start: Start::default(),
            radius_bands: 2,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.count == 0 {
            bail!("seeds.count must be at least 1");
        }
        let mut labels: Vec<String> = self.families.iter().map(Family::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            bail!("duplicate family name {:?}", w[0]);
        }
        for l in &labels {
            if l.is_empty() || l.contains(['/', '\\']) {
                bail!("family name {l:?} is not a valid file-name prefix");
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trslab::model::CaseKind;

    #[test]
    fn partial_config() {
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"families": [{"n": 3, "case_target": "Hard2i"}, {"name": "e", "n": 2, "case_target": "Easy", "rotate": false}],
                "seeds": {"start": 5, "count": 2}, "pgm": {"max_iter": 50}}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.families[0].label(), "hard2i_n3");
        assert_eq!(cfg.families[1].spec.case_target, CaseKind::Easy);
        assert!(!cfg.families[1].spec.rotate);
        assert_eq!(cfg.pgm.max_iter, 50);
        assert_eq!(cfg.seeds.iter().collect::<Vec<_>>(), vec![5, 6]);
        assert_eq!(cfg.start, Start::Perturbed { radius: 0.3 });
    }

    #[test]
    fn rejects_empty_seeds_and_duplicates() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"seeds": {"start": 0, "count": 0}}"#).unwrap();
        assert!(cfg.validate().is_err());
        let cfg: ExperimentConfig = serde_json::from_str(
            r#"{"families": [{"n": 3, "case_target": "Easy"}, {"n": 3, "case_target": "Easy"}]}"#,
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }
}
