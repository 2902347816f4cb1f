//! HTTP API for the labeling service.
//!
//! Callers identify themselves with the `X-Annotator-Id` header. Each project
//! is guarded by its own lock: writes are serialized per project, reads share
//! it. Wizard sessions live in memory and expire after 30 minutes idle.

mod api;
pub mod error;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::routing::{get, post, put};
use axum::Router;
use parking_lot::{Mutex, RwLock};
use tower_http::services::ServeDir;

use cal_core::clock::Clock;
use cal_core::store::{ExampleRef, ProjectStore, Store, StoreError};
use cal_core::wizard::SessionRegistry;

pub use error::{ApiError, ErrorBody};

pub const IDENTITY_HEADER: &str = "x-annotator-id";

/// Identifies a wizard session's owner and target; at most one session is
/// live per key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WizardKey {
    pub project_id: String,
    pub annotator_id: String,
    pub example: ExampleRef,
    pub category_id: String,
}

pub type SharedProject = Arc<RwLock<ProjectStore>>;

pub struct AppState {
    store: Store,
    projects: RwLock<HashMap<String, SharedProject>>,
    sessions: Mutex<SessionRegistry<WizardKey>>,
}

impl AppState {
    pub fn new(store: Store) -> Arc<AppState> {
        Arc::new(AppState {
            store,
            projects: RwLock::new(HashMap::new()),
            sessions: Mutex::new(SessionRegistry::default()),
        })
    }

    pub fn with_session_ttl(store: Store, ttl_ms: u64) -> Arc<AppState> {
        Arc::new(AppState {
            store,
            projects: RwLock::new(HashMap::new()),
            sessions: Mutex::new(SessionRegistry::new(ttl_ms)),
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn data_dir(&self) -> &Path {
        self.store.root()
    }

    fn now_ms(&self) -> u64 {
        self.store.clock().now_ms()
    }

    pub fn clock(&self) -> Arc<dyn Clock> {
        self.store.clock()
    }

    /// The shared handle of a project, opening it on first use.
    pub fn project(&self, id: &str) -> Result<SharedProject, StoreError> {
        if let Some(p) = self.projects.read().get(id) {
            return Ok(p.clone());
        }
        let mut map = self.projects.write();
        if let Some(p) = map.get(id) {
            return Ok(p.clone());
        }
        let p = Arc::new(RwLock::new(self.store.open_project(id)?));
        map.insert(id.to_string(), p.clone());
        Ok(p)
    }

    fn insert_project(&self, project: ProjectStore) {
        self.projects
            .write()
            .insert(project.id().to_string(), Arc::new(RwLock::new(project)));
    }
}

/// The API router. When `static_dir` is given, its files are served for every
/// path the API does not claim.
pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/healthz", get(api::healthz))
        .route("/projects", post(api::create_project).get(api::list_projects))
        .route("/projects/{p}", get(api::project_overview))
        .route("/projects/{p}/conversations/{c}", get(api::labeling_view))
        .route("/projects/{p}/labels", put(api::put_label))
        .route("/projects/{p}/wizard/start", post(api::wizard_start))
        .route("/projects/{p}/wizard/{s}/answer", post(api::wizard_answer))
        .route("/projects/{p}/wizard/{s}/back", post(api::wizard_back))
        .route("/projects/{p}/previous", get(api::view_previous))
        .route("/projects/{p}/status", get(api::status))
        .route("/projects/{p}/resume", get(api::get_resume).put(api::put_resume))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}
