use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data;
use crate::dialogue::{check_resources, CatalogError, Engine, EngineError, RouteCatalog};
use crate::flow::{parse_flow_sheet, Diagnostic, FlowGraph};
use crate::llm::{ChatTransport, HttpTransport, LlmConfig, LlmGateway};
use crate::nlu::{NluResources, ResourceError, ResourceTexts, DEFAULT_EXAMPLE_THRESHOLD};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueuePolicy {
    /// A second request for a busy session waits its turn.
    #[default]
    Queue,
    /// A second request for a busy session gets 409.
    Reject,
}

impl std::str::FromStr for QueuePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "queue" => Ok(QueuePolicy::Queue),
            "reject" => Ok(QueuePolicy::Reject),
            other => Err(format!("unknown queue policy `{other}` (expected queue or reject)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceSection {
    pub host: String,
    pub port: u16,
    pub queue_policy: QueuePolicy,
    /// Snapshots and turn logs go here; in-memory only when unset.
    pub data_dir: Option<PathBuf>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            queue_policy: QueuePolicy::Queue,
            data_dir: None,
        }
    }
}

/// Service configuration. Paths left unset fall back to the built-in Kyoto
/// flow, resources and routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub flow_path: Option<PathBuf>,
    pub resources_dir: Option<PathBuf>,
    pub routes_path: Option<PathBuf>,
    pub example_threshold: f64,
    pub strict_question_lint: bool,
    pub llm: LlmConfig,
    pub service: ServiceSection,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            flow_path: None,
            resources_dir: None,
            routes_path: None,
            example_threshold: DEFAULT_EXAMPLE_THRESHOLD,
            strict_question_lint: true,
            llm: LlmConfig::default(),
            service: ServiceSection::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("flow has {} diagnostic(s)", .0.len())]
    Flow(Vec<Diagnostic>),
    #[error(transparent)]
    Resources(#[from] ResourceError),
    #[error(transparent)]
    Routes(#[from] CatalogError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

impl StartupError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            StartupError::Flow(d) => d,
            StartupError::Engine(e) => e.diagnostics(),
            _ => &[],
        }
    }
}

impl ServiceConfig {
    /// Read a TOML file, then apply `TOURFLOW_*` environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: ServiceConfig = toml::from_str(&text)?;
        config.apply_env(|k| std::env::var(k).ok())?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let parse = |key: &str, v: String| -> Result<u64, ConfigError> {
            v.parse()
                .map_err(|_| ConfigError::Invalid(format!("{key}: `{v}` is not a number")))
        };
        if let Some(v) = lookup("TOURFLOW_FLOW_PATH") {
            self.flow_path = Some(v.into());
        }
        if let Some(v) = lookup("TOURFLOW_RESOURCES_DIR") {
            self.resources_dir = Some(v.into());
        }
        if let Some(v) = lookup("TOURFLOW_ROUTES_PATH") {
            self.routes_path = Some(v.into());
        }
        if let Some(v) = lookup("TOURFLOW_DATA_DIR") {
            self.service.data_dir = Some(v.into());
        }
        if let Some(v) = lookup("TOURFLOW_HOST") {
            self.service.host = v;
        }
        if let Some(v) = lookup("TOURFLOW_PORT") {
            self.service.port = u16::try_from(parse("TOURFLOW_PORT", v)?)
                .map_err(|_| ConfigError::Invalid("TOURFLOW_PORT out of range".into()))?;
        }
        if let Some(v) = lookup("TOURFLOW_QUEUE_POLICY") {
            self.service.queue_policy = v.parse().map_err(ConfigError::Invalid)?;
        }
        if let Some(v) = lookup("TOURFLOW_LLM_ENDPOINT") {
            self.llm.endpoint_url = v;
        }
        if let Some(v) = lookup("TOURFLOW_LLM_MODEL") {
            self.llm.model_name = v;
        }
        if let Some(v) = lookup("TOURFLOW_LLM_TIMEOUT_MS") {
            self.llm.timeout_ms = parse("TOURFLOW_LLM_TIMEOUT_MS", v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.llm.validate().map_err(ConfigError::Invalid)?;
        if !(0.0..=1.0).contains(&self.example_threshold) {
            return Err(ConfigError::Invalid("example_threshold must be within [0, 1]".into()));
        }
        Ok(())
    }

    pub fn load_flow(&self) -> Result<FlowGraph, StartupError> {
        let text = match &self.flow_path {
            Some(p) => read(p)?,
            None => data::FLOW_TSV.to_string(),
        };
        parse_flow_sheet(&text, self.strict_question_lint).map_err(StartupError::Flow)
    }

    pub fn load_resources(&self) -> Result<NluResources, StartupError> {
        let texts = match &self.resources_dir {
            Some(dir) => ResourceTexts::read_dir(dir)?,
            None => data::resource_texts(),
        };
        Ok(NluResources::from_texts(&texts, self.example_threshold)?)
    }

    pub fn load_catalog(&self) -> Result<RouteCatalog, StartupError> {
        let text = match &self.routes_path {
            Some(p) => read(p)?,
            None => data::ROUTES_JSON.to_string(),
        };
        Ok(RouteCatalog::from_json(&text)?)
    }

    /// HTTP transport for the configured endpoint.
    pub fn http_transport(&self) -> Arc<dyn ChatTransport> {
        Arc::new(HttpTransport::new(
            self.llm.endpoint_url.clone(),
            self.llm.api_key_env.clone(),
            Duration::from_millis(self.llm.timeout_ms),
        ))
    }

    /// Load and cross-check everything. Any diagnostic is fatal.
    pub fn build_engine(&self, transport: Arc<dyn ChatTransport>) -> Result<Engine, StartupError> {
        let graph = self.load_flow()?;
        let resources = self.load_resources()?;
        let missing = check_resources(&graph, &resources);
        if !missing.is_empty() {
            return Err(StartupError::Flow(missing));
        }
        let catalog = self.load_catalog()?;
        let llm = LlmGateway::new(self.llm.clone(), transport);
        Ok(Engine::new(graph, resources, catalog, llm)?)
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })
}
