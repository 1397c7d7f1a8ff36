use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use slicerchat_core::generation::{ExternalBackend, MockEchoBackend, MockHashBackend, DEFAULT_CONNECT_TIMEOUT};
use slicerchat_core::GenerationBackend;

use crate::api::ModelInfo;
use crate::service::ServiceError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    MockHash,
    MockEcho,
    External { address: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub id: String,
    #[serde(flatten)]
    pub spec: BackendSpec,
}

impl BackendConfig {
    pub fn new(id: impl Into<String>, spec: BackendSpec) -> Self {
        BackendConfig { id: id.into(), spec }
    }

    /// `mock-hash` and `mock-echo`.
    pub fn defaults() -> Vec<BackendConfig> {
        vec![
            BackendConfig::new("mock-hash", BackendSpec::MockHash),
            BackendConfig::new("mock-echo", BackendSpec::MockEcho),
        ]
    }
}

/// Backends by id, in registration order.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    entries: Vec<(String, Arc<dyn GenerationBackend>)>,
}

impl BackendRegistry {
    pub fn from_configs(configs: &[BackendConfig]) -> Result<Self, ServiceError> {
        Self::from_configs_with_timeout(configs, DEFAULT_CONNECT_TIMEOUT)
    }

    pub fn from_configs_with_timeout(configs: &[BackendConfig], timeout: Duration) -> Result<Self, ServiceError> {
        let mut registry = BackendRegistry::default();
        for c in configs {
            let backend: Arc<dyn GenerationBackend> = match &c.spec {
                BackendSpec::MockHash => Arc::new(MockHashBackend),
                BackendSpec::MockEcho => Arc::new(MockEchoBackend),
                BackendSpec::External { address } => Arc::new(ExternalBackend::lazy(address.clone(), timeout)),
            };
            registry.insert(c.id.clone(), backend)?;
        }
        Ok(registry)
    }

    pub fn insert(&mut self, id: impl Into<String>, backend: Arc<dyn GenerationBackend>) -> Result<(), ServiceError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ServiceError::Config("backend id must not be empty".into()));
        }
        if self.get(&id).is_some() {
            return Err(ServiceError::Config(format!("duplicate backend id '{id}'")));
        }
        self.entries.push((id, backend));
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Arc<dyn GenerationBackend>> {
        self.entries.iter().find(|(k, _)| k == id).map(|(_, b)| b)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub async fn list(&self) -> Vec<ModelInfo> {
        let mut out = Vec::with_capacity(self.entries.len());
        for (id, backend) in &self.entries {
            out.push(ModelInfo {
                id: id.clone(),
                kind: backend.kind().label().to_string(),
                ready: backend.is_ready().await,
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_shape() {
        let configs: Vec<BackendConfig> = serde_json::from_str(
            r#"[{"id":"mock-hash","kind":"mock-hash"},{"id":"llm","kind":"external","address":"127.0.0.1:9"}]"#,
        )
        .unwrap();
        assert_eq!(
            configs[1].spec,
            BackendSpec::External {
                address: "127.0.0.1:9".into()
            }
        );
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut configs = BackendConfig::defaults();
        configs.push(BackendConfig::new("mock-hash", BackendSpec::MockEcho));
        let err = BackendRegistry::from_configs(&configs).err().unwrap();
        assert!(err.to_string().contains("duplicate backend id 'mock-hash'"));
    }

    #[tokio::test]
    async fn default_registry_lists_two_ready_mocks() {
        let r = BackendRegistry::from_configs(&BackendConfig::defaults()).unwrap();
        let models = r.list().await;
        let ids: Vec<_> = models.iter().map(|m| m.id.as_str()).collect();
        assert_eq!(ids, ["mock-hash", "mock-echo"]);
        assert!(models.iter().all(|m| m.ready));
    }
}
