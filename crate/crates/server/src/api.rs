use std::collections::HashMap;
use std::path::Component;
use std::sync::Arc;

use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cal_core::config::{self, AgreementVisibility, ProjectConfig};
use cal_core::metrics::AgreementReport;
use cal_core::rules::SelectedValue;
use cal_core::store::{
    self, ExampleRef, LabelRequest, PreviousLabel, ProgressSummary, ResumePosition, ResumeTarget, Role,
    SaveOutcome, StoreError, Utterance,
};
use cal_core::wizard::{SessionStatus, TrailStep, WizardResult, WizardSession, WizardStep};

use crate::{AppState, ApiError, WizardKey, IDENTITY_HEADER};

type ApiResult<T> = Result<T, ApiError>;

/// The caller's annotator id, from `X-Annotator-Id` or else an `annotator`
/// query parameter.
pub struct Identity(pub String);

impl<S: Send + Sync> FromRequestParts<S> for Identity {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _state: &S) -> Result<Self, Self::Rejection> {
        if let Some(v) = parts.headers.get(IDENTITY_HEADER) {
            let id = v.to_str().map_err(|_| ApiError::missing_identity())?.trim();
            if !id.is_empty() {
                return Ok(Identity(id.to_string()));
            }
        }
        let query: Query<HashMap<String, String>> =
            Query::try_from_uri(&parts.uri).map_err(|_| ApiError::missing_identity())?;
        match query.get("annotator").map(|s| s.trim()) {
            Some(id) if !id.is_empty() => Ok(Identity(id.to_string())),
            _ => Err(ApiError::missing_identity()),
        }
    }
}

fn parse_body<T: DeserializeOwned>(body: &str) -> ApiResult<T> {
    Ok(config::from_json(body)?)
}

pub async fn healthz() -> &'static str {
    "ok"
}

#[derive(Serialize)]
pub struct Created {
    id: String,
    conversations: usize,
}

fn data_ref_is_contained(data_ref: &str) -> bool {
    let raw = data_ref.strip_prefix("file://").unwrap_or(data_ref);
    let p = std::path::Path::new(raw);
    !raw.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

pub async fn create_project(
    State(state): State<Arc<AppState>>,
    headers: HeaderMap,
    body: String,
) -> ApiResult<Response> {
    let creator = headers
        .get(IDENTITY_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty());
    let config: ProjectConfig = config::parse_project(&body)?;
    let report = config::validate_project(&config);
    if !report.is_ok() {
        return Err(StoreError::Invalid(report).into());
    }
    let data_error = |msg: String| {
        ApiError::new(StatusCode::BAD_REQUEST, "FORMAT_ERROR", msg).with_path("$.data_ref")
    };
    if !data_ref_is_contained(&config.data_ref) {
        return Err(data_error(
            "data_ref must be a relative path inside the data directory".into(),
        ));
    }
    let path = store::resolve_data_ref(state.data_dir(), &config.data_ref);
    let transcripts = std::fs::read_to_string(&path)
        .map_err(|e| data_error(format!("cannot read {}: {e}", path.display())))?;
    let project = state
        .store()
        .create_project(config, creator, &transcripts)?;
    let created = Created {
        id: project.id().to_string(),
        conversations: project.conversations().len(),
    };
    state.insert_project(project);
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

pub async fn list_projects(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let ids = state.store().project_ids()?;
    Ok(Json(serde_json::json!({ "projects": ids })))
}

#[derive(Serialize)]
pub struct ConversationSummary {
    id: String,
    utterances: usize,
    percent: String,
    fraction: String,
}

#[derive(Serialize)]
pub struct ProjectOverview {
    id: String,
    name: String,
    role: Role,
    agreement_visibility: AgreementVisibility,
    conversations: Vec<ConversationSummary>,
}

pub async fn project_overview(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Identity(who): Identity,
) -> ApiResult<Json<ProjectOverview>> {
    let project = state.project(&p)?;
    let project = project.read();
    let role = project.check_member(&who)?;
    let progress = project.progress(&who)?;
    let conversations = project
        .conversations()
        .iter()
        .zip(progress.per_conversation)
        .map(|(c, pr)| ConversationSummary {
            id: c.id.clone(),
            utterances: c.utterances.len(),
            percent: pr.percent,
            fraction: pr.fraction,
        })
        .collect();
    Ok(Json(ProjectOverview {
        id: project.id().to_string(),
        name: project.config().name.clone(),
        role,
        agreement_visibility: project.config().agreement_visibility,
        conversations,
    }))
}

pub async fn labeling_view(
    State(state): State<Arc<AppState>>,
    Path((p, c)): Path<(String, String)>,
    Identity(who): Identity,
) -> ApiResult<Json<store::LabelingView>> {
    let project = state.project(&p)?;
    let view = project.read().labeling_view(&who, &c)?;
    Ok(Json(view))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelBody {
    example: ExampleRef,
    category_id: String,
    value: SelectedValue,
    #[serde(default = "yes")]
    selected: bool,
    #[serde(default)]
    expected_version: Option<u64>,
}

fn yes() -> bool {
    true
}

pub async fn put_label(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Identity(who): Identity,
    body: String,
) -> ApiResult<Json<SaveOutcome>> {
    let project = state.project(&p)?;
    project.read().check_member(&who)?;
    let body: LabelBody = parse_body(&body)?;
    let req = LabelRequest {
        annotator_id: who,
        example: body.example,
        category_id: body.category_id,
        value: body.value,
        selected: body.selected,
        expected_version: body.expected_version,
    };
    let outcome = project.write().save_assignment(&req)?;
    Ok(Json(outcome))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WizardStartBody {
    example: ExampleRef,
    category_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WizardAnswerBody {
    answer: bool,
}

#[derive(Serialize)]
pub struct WizardResponse {
    session_id: String,
    category_id: String,
    status: SessionStatus,
    question: Option<String>,
    trail: Vec<TrailStep>,
    result: Option<WizardResult>,
    /// The saved label and refreshed state, once the wizard has finished.
    label: Option<SaveOutcome>,
}

fn wizard_response(session: &WizardSession, label: Option<SaveOutcome>) -> WizardResponse {
    WizardResponse {
        session_id: session.session_id.clone(),
        category_id: session.category_id().to_string(),
        status: session.status(),
        question: session.question().map(str::to_string),
        trail: session.trail().to_vec(),
        result: session.result(),
        label,
    }
}

pub async fn wizard_start(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Identity(who): Identity,
    body: String,
) -> ApiResult<Json<WizardResponse>> {
    let project = state.project(&p)?;
    project.read().check_member(&who)?;
    let body: WizardStartBody = parse_body(&body)?;
    let session = {
        let guard = project.read();
        let (cs, kind) = guard.category_context(&body.example, &body.category_id)?;
        let selections = guard.selection_set(&who, &body.example)?;
        WizardSession::start_checked(cs, &selections, kind, &body.category_id)?
    };
    // A flow that is a single outcome finishes immediately.
    let label = match session.result() {
        Some(result) => Some(project.write().apply_wizard_result(&who, &body.example, &result)?),
        None => None,
    };
    let response = wizard_response(&session, label);
    let key = WizardKey {
        project_id: p,
        annotator_id: who,
        example: body.example,
        category_id: body.category_id,
    };
    state.sessions.lock().insert(key, session, state.now_ms());
    Ok(Json(response))
}

pub async fn wizard_answer(
    State(state): State<Arc<AppState>>,
    Path((p, s)): Path<(String, String)>,
    Identity(who): Identity,
    body: String,
) -> ApiResult<Json<WizardResponse>> {
    let project = state.project(&p)?;
    project.read().check_member(&who)?;
    let body: WizardAnswerBody = parse_body(&body)?;
    let mut sessions = state.sessions.lock();
    let slot = sessions.get_mut(&s, state.now_ms())?;
    if slot.key.project_id != p || slot.key.annotator_id != who {
        return Err(cal_core::wizard::RegistryError::NotFound.into());
    }
    // Work on a copy so a failed save leaves the session where it was.
    let mut next = slot.session.clone();
    let label = match next.answer(body.answer)? {
        WizardStep::Question(_) => None,
        WizardStep::Result(result) => {
            Some(project.write().apply_wizard_result(&who, &slot.key.example, &result)?)
        }
    };
    slot.session = next;
    Ok(Json(wizard_response(&slot.session, label)))
}

pub async fn wizard_back(
    State(state): State<Arc<AppState>>,
    Path((p, s)): Path<(String, String)>,
    Identity(who): Identity,
) -> ApiResult<Json<WizardResponse>> {
    let project = state.project(&p)?;
    project.read().check_member(&who)?;
    let mut sessions = state.sessions.lock();
    let slot = sessions.get_mut(&s, state.now_ms())?;
    if slot.key.project_id != p || slot.key.annotator_id != who {
        return Err(cal_core::wizard::RegistryError::NotFound.into());
    }
    slot.session.back()?;
    Ok(Json(wizard_response(&slot.session, None)))
}

#[derive(Deserialize)]
pub struct PreviousQuery {
    category: Option<String>,
    option: Option<String>,
    exclude: Option<String>,
}

#[derive(Serialize)]
pub struct CurrentExample {
    example: ExampleRef,
    utterance: Option<Utterance>,
}

#[derive(Serialize)]
pub struct Comparison {
    previous: PreviousLabel,
    current: Option<CurrentExample>,
}

fn required(v: Option<String>, name: &str) -> ApiResult<String> {
    v.filter(|s| !s.is_empty()).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "SCHEMA_ERROR",
            format!("query parameter `{name}` is required"),
        )
        .with_path(format!("$.{name}"))
    })
}

pub async fn view_previous(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Identity(who): Identity,
    Query(q): Query<PreviousQuery>,
) -> ApiResult<Response> {
    let project = state.project(&p)?;
    let project = project.read();
    project.check_member(&who)?;
    let category = required(q.category, "category")?;
    let option = required(q.option, "option")?;
    let Some(previous) = project.previous_labeled(&who, &category, &option, q.exclude.as_deref())? else {
        return Ok(StatusCode::NO_CONTENT.into_response());
    };
    let current = q.exclude.as_deref().and_then(|id| {
        if let Some((conv, u)) = project.state().utterance(id) {
            Some(CurrentExample {
                example: ExampleRef::utterance(&conv.id, &u.id),
                utterance: Some(u.clone()),
            })
        } else {
            project.state().conversation(id).map(|c| CurrentExample {
                example: ExampleRef::conversation(&c.id),
                utterance: None,
            })
        }
    });
    Ok(Json(Comparison { previous, current }).into_response())
}

#[derive(Serialize)]
pub struct StatusResponse {
    project_id: String,
    role: Role,
    progress: Vec<ProgressSummary>,
    resume: HashMap<String, Option<ResumeTarget>>,
    agreement_visible: bool,
    agreement: Option<AgreementReport>,
    /// Why the agreement block is empty although visible.
    agreement_note: Option<String>,
}

pub async fn status(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Identity(who): Identity,
) -> ApiResult<Json<StatusResponse>> {
    let project = state.project(&p)?;
    let project = project.read();
    let role = project.check_member(&who)?;
    // Annotators see their own progress; the creator sees everyone's.
    let mut annotators: Vec<String> = match role {
        Role::Creator => project.config().annotators.clone(),
        Role::Annotator => vec![who.clone()],
    };
    if role == Role::Creator && !annotators.contains(&who) {
        annotators.insert(0, who.clone());
    }
    let mut progress = Vec::new();
    let mut resume = HashMap::new();
    for a in &annotators {
        progress.push(project.progress(a)?);
        resume.insert(a.clone(), project.resume(a)?);
    }
    let agreement_visible =
        role == Role::Creator || project.config().agreement_visibility == AgreementVisibility::All;
    let (agreement, agreement_note) = if agreement_visible {
        match project.agreement() {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };
    Ok(Json(StatusResponse {
        project_id: project.id().to_string(),
        role,
        progress,
        resume,
        agreement_visible,
        agreement,
        agreement_note,
    }))
}

pub async fn get_resume(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Identity(who): Identity,
) -> ApiResult<Response> {
    let project = state.project(&p)?;
    let target = project.read().resume(&who)?;
    Ok(match target {
        Some(t) => Json(t).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ResumeBody {
    conversation_id: String,
    utterance_id: String,
}

pub async fn put_resume(
    State(state): State<Arc<AppState>>,
    Path(p): Path<String>,
    Identity(who): Identity,
    body: String,
) -> ApiResult<Json<ResumePosition>> {
    let project = state.project(&p)?;
    project.read().check_member(&who)?;
    let body: ResumeBody = parse_body(&body)?;
    let pos = project
        .write()
        .set_resume(&who, &body.conversation_id, &body.utterance_id)?;
    Ok(Json(pos))
}
