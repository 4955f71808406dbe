use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use xrguide_core::gateway::{
    Gateway, GatewayConfig, GatewayError, GatewayMode, HttpTransport, ModelProfile, ProfileRouting, ReplayPool,
    ENV_ENDPOINT, ENV_FIXTURE_DIR, ENV_KEY, ENV_MODE,
};
use xrguide_core::media::{
    AssetCache, HttpSearchProvider, HttpSegmentation, MediaServices, OfflineProvider, RetrievalProvider,
    SegmentationBackend,
};
use xrguide_core::session::{EngineServices, GatewayFactory, ReplayFactory};

/// Model gateway flags; each falls back to its environment variable.
#[derive(Debug, Clone, Args)]
pub struct GatewayArgs {
    /// live, record or replay
    #[arg(long, env = ENV_MODE, default_value = "replay")]
    pub mode: String,
    /// Fixture directory (record, replay) or a single JSONL file (replay).
    #[arg(long, env = ENV_FIXTURE_DIR)]
    pub fixtures: Option<PathBuf>,
    #[arg(long, env = ENV_ENDPOINT)]
    pub endpoint: Option<String>,
    #[arg(long, env = ENV_KEY, hide_env_values = true)]
    pub key: Option<String>,
    #[arg(long, default_value = "fast")]
    pub fast_model: String,
    #[arg(long, default_value = "strong")]
    pub strong_model: String,
    /// Per-call timeout in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
}

impl GatewayArgs {
    pub fn config(&self) -> Result<GatewayConfig> {
        Ok(GatewayConfig {
            mode: self.mode.parse()?,
            endpoint: self.endpoint.clone(),
            key: self.key.clone(),
            fixture_dir: self.fixtures.clone(),
        })
    }

    fn routing(&self, endpoint: &str) -> Result<ProfileRouting> {
        Ok(ProfileRouting::new(
            ModelProfile::new(&self.fast_model, endpoint, self.timeout)?,
            ModelProfile::new(&self.strong_model, endpoint, self.timeout)?,
        ))
    }

    /// One gateway per session id, as configured.
    pub fn factory(&self, cache: Arc<AssetCache>) -> Result<Arc<dyn GatewayFactory>> {
        let cfg = self.config()?;
        match cfg.mode {
            GatewayMode::Replay => {
                let path = cfg.fixture_dir.context("replay mode needs --fixtures")?;
                let pool = load_pool(&path)?;
                tracing::info!(records = pool.len(), path = %path.display(), "replaying fixtures");
                Ok(Arc::new(ReplayFactory { pool: Arc::new(pool), routing: self.routing("")? }))
            }
            GatewayMode::Live | GatewayMode::Record => {
                let endpoint = cfg.endpoint.context("live and record modes need --endpoint")?;
                let routing = self.routing(&endpoint)?;
                let transport = Arc::new(HttpTransport::new(cfg.key));
                let record_dir = match cfg.mode {
                    GatewayMode::Record => Some(cfg.fixture_dir.context("record mode needs --fixtures")?),
                    _ => None,
                };
                Ok(Arc::new(move |session: &str| -> Result<Gateway, GatewayError> {
                    match &record_dir {
                        Some(dir) => Gateway::record(
                            transport.clone(),
                            routing.clone(),
                            Arc::clone(&cache),
                            &dir.join(format!("{session}.jsonl")),
                        ),
                        None => Ok(Gateway::live(transport.clone(), routing.clone(), Arc::clone(&cache))),
                    }
                }))
            }
        }
    }
}

pub fn load_pool(path: &Path) -> Result<ReplayPool> {
    let pool = if path.is_dir() { ReplayPool::from_dir(path) } else { ReplayPool::from_file(path) };
    pool.with_context(|| format!("loading fixtures from {}", path.display()))
}

/// Retrieval, segmentation and asset storage flags.
#[derive(Debug, Clone, Args)]
pub struct MediaArgs {
    /// Offline retrieval manifest.
    #[arg(long, conflicts_with = "search_endpoint")]
    pub media: Option<PathBuf>,
    #[arg(long)]
    pub search_endpoint: Option<String>,
    #[arg(long)]
    pub segment_endpoint: Option<String>,
    /// Persist assets here instead of in memory.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl MediaArgs {
    pub fn cache(&self) -> Result<Arc<AssetCache>> {
        Ok(Arc::new(match &self.cache_dir {
            Some(d) => AssetCache::with_dir(d).with_context(|| format!("opening cache {}", d.display()))?,
            None => AssetCache::in_memory(),
        }))
    }

    pub fn services(&self, cache: Arc<AssetCache>) -> Result<Arc<EngineServices>> {
        let mut media = MediaServices::offline(cache);
        let timeout = Duration::from_secs(30);
        if let Some(m) = &self.media {
            let p: Arc<dyn RetrievalProvider> = Arc::new(OfflineProvider::from_manifest(m)?);
            media.provider = p;
        }
        if let Some(e) = &self.search_endpoint {
            media.provider = Arc::new(HttpSearchProvider::new(e, timeout));
        }
        if let Some(e) = &self.segment_endpoint {
            let s: Arc<dyn SegmentationBackend> = Arc::new(HttpSegmentation::new(e, timeout));
            media.segmenter = s;
        }
        Ok(Arc::new(EngineServices::new(Arc::new(media))?))
    }
}
