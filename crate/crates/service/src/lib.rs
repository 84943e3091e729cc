//! HTTP facade over a detection/classification backend, evaluation runs and
//! the sighting log.

pub mod client;
pub mod remote;
mod routes;
pub mod sightings;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicU64;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use scorpid_core::augment::FsImageSource;
use scorpid_core::corpus::load_manifest;
use scorpid_core::infer::{Backend, BackendDescriptor, BackendKind, ReferenceBackend};

pub use remote::RemoteBackend;
pub use routes::router;
pub use sightings::{NewSighting, Sighting, SightingFilter, SightingStore, Verdict};

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_MAX_BODY_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("backend: {0}")]
    Backend(String),
    #[error(transparent)]
    Sightings(#[from] sightings::SightingError),
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

/// Builds a backend from a `--backend` value. Reference backends resolve
/// image paths relative to the manifest's directory.
pub fn build_backend(desc: &BackendDescriptor, timeout: Duration) -> Result<Arc<dyn Backend>, ServiceError> {
    match &desc.kind {
        BackendKind::Reference {
            manifest,
            noise_eps,
            seed,
        } => {
            let path = Path::new(manifest);
            let corpus = load_manifest(path).map_err(|e| ServiceError::Backend(e.to_string()))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            let backend = ReferenceBackend::new(corpus, *noise_eps, *seed)
                .map_err(|e| ServiceError::Backend(e.to_string()))?
                .with_images(FsImageSource::new(base));
            Ok(Arc::new(backend))
        }
        BackendKind::Remote { endpoint } => Ok(Arc::new(
            RemoteBackend::new(endpoint.clone(), timeout).map_err(|e| ServiceError::Backend(e.to_string()))?,
        )),
    }
}

#[derive(Clone)]
pub struct AppState {
    pub backend: Arc<dyn Backend>,
    pub sightings: Arc<SightingStore>,
    pub max_body_bytes: usize,
    pub(crate) runs: Arc<RwLock<HashMap<String, Arc<Vec<u8>>>>>,
    pub(crate) run_counter: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(backend: Arc<dyn Backend>, sightings: SightingStore, max_body_bytes: usize) -> Self {
        Self {
            backend,
            sightings: Arc::new(sightings),
            max_body_bytes,
            runs: Arc::default(),
            run_counter: Arc::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    pub backend: BackendDescriptor,
    pub log_path: Option<PathBuf>,
    pub max_body_bytes: usize,
    pub backend_timeout: Duration,
}

impl ServiceConfig {
    pub fn new(backend: BackendDescriptor) -> Self {
        Self {
            host: "0.0.0.0".into(),
            port: DEFAULT_PORT,
            backend,
            log_path: None,
            max_body_bytes: DEFAULT_MAX_BODY_BYTES,
            backend_timeout: remote::DEFAULT_TIMEOUT,
        }
    }

    pub fn state(&self) -> Result<AppState, ServiceError> {
        let backend = build_backend(&self.backend, self.backend_timeout)?;
        let sightings = match &self.log_path {
            Some(p) => SightingStore::open(p)?,
            None => SightingStore::in_memory(),
        };
        Ok(AppState::new(backend, sightings, self.max_body_bytes))
    }
}

/// Serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let state = config.state()?;
    let addr = format!("{}:{}", config.host, config.port);
    let listener = tokio::net::TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: addr.clone(), source })?;
    log::info!("listening on {addr} with backend {}", state.backend.name());
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(ServiceError::Serve)
}

/// A server on its own thread and runtime, bound to an ephemeral local
/// port. Stops when dropped.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl BackgroundServer {
    pub fn start(state: AppState) -> Result<Self, ServiceError> {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (shutdown, stop) = tokio::sync::oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("tokio runtime");
            rt.block_on(async move {
                let listener = match tokio::net::TcpListener::bind("127.0.0.1:0").await {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = addr_tx.send(Err(e));
                        return;
                    }
                };
                let _ = addr_tx.send(listener.local_addr());
                let _ = axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = stop.await;
                    })
                    .await;
            });
        });
        let addr = addr_rx
            .recv()
            .map_err(|_| ServiceError::Backend("server thread exited".into()))?
            .map_err(|source| ServiceError::Bind {
                addr: "127.0.0.1:0".into(),
                source,
            })?;
        Ok(Self {
            addr,
            shutdown: Some(shutdown),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
