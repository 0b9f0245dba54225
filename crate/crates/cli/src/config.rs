//! Run configuration: one JSON schema, every flag an override.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use dsrecon_core::eval::BootstrapUnit;
use dsrecon_core::fhir::TokenBudget;
use dsrecon_core::gateway::{
    AuditLog, FallbackMode, Gateway, GatewayConfig, HttpGateway, ScriptedGateway,
};
use dsrecon_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Deterministic playback from a fixture file.
    #[default]
    Scripted,
    /// OpenAI-compatible endpoints, per-stage configs.
    Live,
}

/// The LLM stages; each can point at its own endpoint and model in live
/// mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Extraction,
    Reconciliation,
    Generation,
    Judge,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub bundles: Option<PathBuf>,
    pub messages: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub sessions: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub dim2: Option<PathBuf>,
    pub dim3: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Gateways {
    /// Fallback for stages without their own entry.
    pub default: Option<GatewayConfig>,
    pub extraction: Option<GatewayConfig>,
    pub reconciliation: Option<GatewayConfig>,
    pub generation: Option<GatewayConfig>,
    pub judge: Option<GatewayConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapCfg {
    pub seed: u64,
    pub iterations: usize,
    pub unit: BootstrapUnit,
}

impl Default for BootstrapCfg {
    fn default() -> Self {
        Self {
            seed: 7,
            iterations: 10_000,
            unit: BootstrapUnit::Scenario,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenBudgetCfg {
    pub min: usize,
    pub max: usize,
}

impl Default for TokenBudgetCfg {
    fn default() -> Self {
        Self {
            min: 1100,
            max: 1600,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub mode: Mode,
    /// Scripted fixture file (required in scripted mode).
    pub fixture: Option<PathBuf>,
    pub fallback: FallbackMode,
    /// Audit log path; every gateway call is recorded there.
    pub audit: Option<PathBuf>,
    pub paths: Paths,
    pub gateways: Gateways,
    pub workers: usize,
    pub bootstrap: BootstrapCfg,
    pub token_budget: TokenBudgetCfg,
    pub session_batched: bool,
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn budget(&self) -> Result<TokenBudget> {
        TokenBudget::new(self.token_budget.min, self.token_budget.max)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn workers(&self) -> usize {
        self.workers.max(1)
    }

    fn stage_config(&self, stage: Stage) -> Option<&GatewayConfig> {
        let specific = match stage {
            Stage::Extraction => &self.gateways.extraction,
            Stage::Reconciliation => &self.gateways.reconciliation,
            Stage::Generation => &self.gateways.generation,
            Stage::Judge => &self.gateways.judge,
        };
        specific.as_ref().or(self.gateways.default.as_ref())
    }

    pub fn audit_log(&self) -> Result<Option<Arc<AuditLog>>> {
        match &self.audit {
            Some(path) => Ok(Some(AuditLog::to_file(path)?)),
            None => Ok(None),
        }
    }

    /// Build the gateway for one stage. In scripted mode every stage
    /// shares the fixture.
    pub fn gateway(&self, stage: Stage, audit: Option<Arc<AuditLog>>) -> Result<Arc<dyn Gateway>> {
        match self.mode {
            Mode::Scripted => {
                let fixture = self.fixture.as_ref().ok_or_else(|| {
                    Error::Config("scripted mode requires a fixture path".into())
                })?;
                let mut gateway = ScriptedGateway::load(fixture, self.fallback)?;
                if let Some(audit) = audit {
                    gateway = gateway.with_audit(audit);
                }
                Ok(Arc::new(gateway))
            }
            Mode::Live => {
                let config = self.stage_config(stage).cloned().ok_or_else(|| {
                    Error::Config(format!(
                        "live mode requires a gateway config for {stage:?} (or a default)"
                    ))
                })?;
                let mut gateway = HttpGateway::new(config)?;
                if let Some(audit) = audit {
                    gateway = gateway.with_audit(audit);
                }
                Ok(Arc::new(gateway))
            }
        }
    }
}
