use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use super::IngestError;

/// Fetches raw payloads by locator (a URL or a file path).
pub trait Transport: Send + Sync {
    fn get(&self, locator: &str) -> Result<Vec<u8>, IngestError>;
}

/// Reads fixture files.
#[derive(Debug, Default, Clone, Copy)]
pub struct FileTransport;

impl Transport for FileTransport {
    fn get(&self, locator: &str) -> Result<Vec<u8>, IngestError> {
        std::fs::read(locator).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => IngestError::FixtureMissing(Path::new(locator).to_path_buf()),
            _ => IngestError::SourceUnavailable(format!("{locator}: {e}")),
        })
    }
}

/// Plain HTTP GET; anything but status 200 is an unavailable source.
#[cfg(feature = "http")]
pub struct HttpTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl Default for HttpTransport {
    fn default() -> Self {
        let config =
            ureq::Agent::config_builder().timeout_global(Some(std::time::Duration::from_secs(60))).http_status_as_error(false).build();
        HttpTransport { agent: config.into() }
    }
}

#[cfg(feature = "http")]
impl Transport for HttpTransport {
    fn get(&self, locator: &str) -> Result<Vec<u8>, IngestError> {
        let mut resp = self.agent.get(locator).call().map_err(|e| IngestError::SourceUnavailable(format!("{locator}: {e}")))?;
        if resp.status() != 200 {
            return Err(IngestError::SourceUnavailable(format!("{locator}: HTTP {}", resp.status())));
        }
        resp.body_mut()
            .with_config()
            .limit(512 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| IngestError::SourceUnavailable(format!("{locator}: {e}")))
    }
}

/// Transport used when networking is compiled out or forbidden.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoNetwork;

impl Transport for NoNetwork {
    fn get(&self, locator: &str) -> Result<Vec<u8>, IngestError> {
        Err(IngestError::SourceUnavailable(format!("{locator}: networking disabled")))
    }
}

pub fn default_network() -> Arc<dyn Transport> {
    #[cfg(feature = "http")]
    {
        Arc::new(HttpTransport::default())
    }
    #[cfg(not(feature = "http"))]
    {
        Arc::new(NoNetwork)
    }
}

/// Wraps a transport and counts every access.
pub struct CountingTransport {
    inner: Arc<dyn Transport>,
    count: AtomicUsize,
}

impl CountingTransport {
    pub fn new(inner: Arc<dyn Transport>) -> Self {
        CountingTransport { inner, count: AtomicUsize::new(0) }
    }

    pub fn count(&self) -> usize {
        self.count.load(Ordering::SeqCst)
    }
}

impl Transport for CountingTransport {
    fn get(&self, locator: &str) -> Result<Vec<u8>, IngestError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.get(locator)
    }
}
