use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;

use super::{AssetCache, AssetKind, AssetRef, MediaError};

/// One search hit with its downloaded bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedItem {
    pub kind: AssetKind,
    pub url: Option<String>,
    pub bytes: Vec<u8>,
}

pub trait RetrievalProvider: Send + Sync {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<RetrievedItem>, MediaError>;
}

#[derive(Debug, Clone, Deserialize)]
struct ManifestEntry {
    path: PathBuf,
    #[serde(default = "image_kind")]
    kind: AssetKind,
    #[serde(default)]
    url: Option<String>,
}

fn image_kind() -> AssetKind {
    AssetKind::Image
}

#[derive(Debug, Clone, Deserialize)]
struct Manifest {
    #[serde(default)]
    unavailable: bool,
    queries: BTreeMap<String, Vec<ManifestEntry>>,
}

/// Serves local files listed in a JSON manifest:
/// `{"queries": {"<query>": [{"path": "img.png", "kind": "Image"}]}}`.
/// Paths are relative to the manifest. `"unavailable": true` simulates an
/// outage.
#[derive(Debug, Clone)]
pub struct OfflineProvider {
    base: PathBuf,
    manifest: Manifest,
}

impl OfflineProvider {
    pub fn from_manifest(path: &Path) -> Result<Self, MediaError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MediaError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| MediaError::ProviderUnavailable(format!("{}: {e}", path.display())))?;
        Ok(OfflineProvider { base: path.parent().unwrap_or(Path::new(".")).to_path_buf(), manifest })
    }

    /// A provider that knows no queries.
    pub fn empty() -> Self {
        OfflineProvider { base: PathBuf::new(), manifest: Manifest { unavailable: false, queries: BTreeMap::new() } }
    }
}

impl RetrievalProvider for OfflineProvider {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<RetrievedItem>, MediaError> {
        if self.manifest.unavailable {
            return Err(MediaError::ProviderUnavailable("offline provider marked unavailable".into()));
        }
        let Some(entries) = self.manifest.queries.get(query) else {
            return Ok(Vec::new());
        };
        entries
            .iter()
            .take(max_results)
            .map(|e| {
                let p = self.base.join(&e.path);
                let bytes = std::fs::read(&p).map_err(|err| MediaError::Io(format!("{}: {err}", p.display())))?;
                Ok(RetrievedItem { kind: e.kind, url: e.url.clone(), bytes })
            })
            .collect()
    }
}

/// Web search behind a JSON endpoint: `GET <endpoint>?q=<query>&n=<max>`
/// returning `{"results": [{"url": "...", "kind": "Image"|"VideoClip"}]}`;
/// each URL is then downloaded.
pub struct HttpSearchProvider {
    endpoint: String,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct SearchResults {
    results: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    url: String,
    #[serde(default = "image_kind")]
    kind: AssetKind,
}

impl HttpSearchProvider {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpSearchProvider { endpoint: endpoint.into(), agent }
    }
}

impl RetrievalProvider for HttpSearchProvider {
    fn search(&self, query: &str, max_results: usize) -> Result<Vec<RetrievedItem>, MediaError> {
        let unavailable = |e: ureq::Error| MediaError::ProviderUnavailable(e.to_string());
        let found: SearchResults = self
            .agent
            .get(&self.endpoint)
            .query("q", query)
            .query("n", max_results.to_string())
            .call()
            .map_err(unavailable)?
            .body_mut()
            .read_json()
            .map_err(unavailable)?;
        let mut out = Vec::new();
        for hit in found.results.into_iter().take(max_results) {
            match self.agent.get(&hit.url).call() {
                Ok(mut resp) => match resp.body_mut().read_to_vec() {
                    Ok(bytes) => out.push(RetrievedItem { kind: hit.kind, url: Some(hit.url), bytes }),
                    Err(e) => tracing::warn!(url = %hit.url, error = %e, "download failed"),
                },
                Err(e) => tracing::warn!(url = %hit.url, error = %e, "download failed"),
            }
        }
        Ok(out)
    }
}

/// Runs one query and caches the results. At most `max_results` assets are
/// returned; identical bytes under different URLs collapse to one asset.
pub fn retrieve(
    query: &str,
    provider: &dyn RetrievalProvider,
    cache: &AssetCache,
    max_results: usize,
) -> Result<Vec<AssetRef>, MediaError> {
    let items = provider.search(query, max_results)?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for item in items {
        let digest = cache.put(&item.bytes).map_err(|e| MediaError::Io(e.to_string()))?;
        if !seen.insert(digest.clone()) {
            continue;
        }
        let mut asset = AssetRef::new(digest, item.kind);
        asset.source_url = item.url;
        out.push(asset);
        if out.len() == max_results {
            break;
        }
    }
    if out.is_empty() {
        return Err(MediaError::EmptyResults(query.to_string()));
    }
    Ok(out)
}
