//! JSON-over-HTTP interface consumed by the cockpit.
//!
//! Reads go straight to the store. Mutations take a single write lock so they
//! apply one at a time. Long work (stage runs, maps) runs on blocking threads
//! and is tracked in a job table polled through `/runs/{id}/progress`.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use forage_core::analysis::{
    conditional_map, foraging_map, foraging_profile, map_file_stem, read_map, write_map, MapError,
};
use forage_core::episode::{EpisodeRunner, PhysicsRunner};
use forage_core::foragingtask::uniform_offset;
use forage_core::rng::stream;
use forage_core::ssga::{Evaluator, PhysicsEvaluator};
use forage_core::{Genome, WorldConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::runner::{run_stage_with, JobState, Progress, ProgressHandle};
use crate::stage::{apply_overrides, derive_next, ladder_warnings, DerivedStage, StageConfig, StageOverrides};
use crate::store::{RepeatOutcome, StageResult, Store, StoreError};

/// Default seconds per target for analysis endpoints.
pub const ANALYSIS_TIMER: f64 = 60.0;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    jobs: Arc<Mutex<HashMap<String, ProgressHandle>>>,
    writes: Arc<tokio::sync::Mutex<()>>,
    evaluator: Arc<dyn Evaluator + Send + Sync>,
    world: WorldConfig,
}

impl AppState {
    pub fn new(store: Store) -> Self {
        Self::with_evaluator(store, Arc::new(PhysicsEvaluator::default()))
    }

    /// State whose stage runs score genomes with `evaluator` instead of physics.
    pub fn with_evaluator(store: Store, evaluator: Arc<dyn Evaluator + Send + Sync>) -> Self {
        Self {
            store: Arc::new(store),
            jobs: Arc::default(),
            writes: Arc::default(),
            evaluator,
            world: WorldConfig::default(),
        }
    }

    fn job(&self, id: &str) -> Option<ProgressHandle> {
        self.jobs.lock().unwrap().get(id).cloned()
    }

    /// Registers a job unless one with this id is queued or running; returns the live handle.
    fn start_job(&self, id: &str, total: usize, generations: u64) -> (ProgressHandle, bool) {
        let mut jobs = self.jobs.lock().unwrap();
        if let Some(h) = jobs.get(id) {
            if matches!(h.snapshot().state, JobState::Queued | JobState::Running) {
                return (h.clone(), false);
            }
        }
        let h = ProgressHandle::new(id, total, generations);
        jobs.insert(id.to_string(), h.clone());
        (h, true)
    }
}

#[derive(Debug)]
pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::UnknownStage(_) | StoreError::UnknownOrganism(_) => StatusCode::NOT_FOUND,
            StoreError::NoKeyOrganism(_) | StoreError::StageExists(_) => StatusCode::CONFLICT,
            StoreError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            StoreError::Io(_) | StoreError::Json(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

type ApiResult<T> = Result<T, ApiError>;

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/stages", get(list_stages).post(create_stage))
        .route("/stages/{id}", get(get_stage))
        .route("/stages/{id}/repeats", get(get_repeats))
        .route("/stages/{id}/key-organism", post(mark_key))
        .route("/stages/{id}/run", post(run_stage))
        .route("/organisms/{id}", get(get_organism))
        .route("/organisms/{id}/map", get(get_map))
        .route("/organisms/{id}/profile", get(get_profile))
        .route("/organisms/{id}/trajectory", get(get_trajectory))
        .route("/runs/{id}/progress", get(get_progress))
        .route("/lineage", get(get_lineage))
        .with_state(state)
}

/// Binds `port` on all interfaces and serves until the process exits.
pub async fn serve(port: u16, store: Store) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    axum::serve(listener, router(AppState::new(store))).await
}

#[derive(Serialize, Deserialize)]
pub struct StageSummary {
    pub stage_id: String,
    pub config: StageConfig,
    pub repeats_done: usize,
    pub completed: bool,
    pub key_organism_id: Option<String>,
}

async fn list_stages(State(s): State<AppState>) -> ApiResult<Json<Vec<StageSummary>>> {
    let lineage = s.store.lineage()?;
    let mut out = Vec::new();
    for id in s.store.stage_ids()? {
        let config = s.store.stage(&id)?;
        let repeats_done = (0..config.repeats).filter(|&k| s.store.repeat_done(&id, k)).count();
        out.push(StageSummary {
            completed: repeats_done == config.repeats,
            key_organism_id: lineage.key_for(&id).map(|e| e.key_organism_id.clone()),
            stage_id: id,
            config,
            repeats_done,
        });
    }
    Ok(Json(out))
}

#[derive(Serialize, Deserialize)]
pub struct StageDetail {
    pub config: StageConfig,
    pub result: Option<StageResult>,
    pub key_organism_id: Option<String>,
    pub warnings: Vec<String>,
}

async fn get_stage(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<StageDetail>> {
    let config = s.store.stage(&id)?;
    Ok(Json(StageDetail {
        result: s.store.result(&id)?,
        key_organism_id: s.store.lineage()?.key_for(&id).map(|e| e.key_organism_id.clone()),
        warnings: ladder_warnings(&config),
        config,
    }))
}

async fn get_repeats(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Vec<RepeatOutcome>>> {
    Ok(Json(s.store.repeat_outcomes(&id)?))
}

#[derive(Deserialize)]
struct KeyBody {
    organism_id: String,
    #[serde(default)]
    note: String,
}

async fn mark_key(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Json(body): Json<KeyBody>,
) -> ApiResult<impl IntoResponse> {
    let _guard = s.writes.lock().await;
    let lineage = s.store.mark_key_organism(&id, &body.organism_id, &body.note)?;
    Ok(Json(lineage))
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct CreateStageBody {
    /// Derive from this stage's key organism.
    from: Option<String>,
    overrides: StageOverrides,
    /// Explicit configuration, used when `from` is absent.
    config: Option<StageConfig>,
}

async fn create_stage(State(s): State<AppState>, Json(body): Json<CreateStageBody>) -> ApiResult<impl IntoResponse> {
    let _guard = s.writes.lock().await;
    let derived = match (&body.from, body.config) {
        (Some(from), _) => {
            let prev = s.store.stage(from)?;
            let key = s
                .store
                .lineage()?
                .key_for(from)
                .map(|e| e.key_organism_id.clone())
                .ok_or_else(|| StoreError::NoKeyOrganism(from.clone()))?;
            derive_next(&prev, &key, &body.overrides)
        }
        (None, Some(mut config)) => {
            apply_overrides(&mut config, &body.overrides);
            DerivedStage {
                warnings: ladder_warnings(&config),
                config,
            }
        }
        (None, None) => return Err(bad_request("either `from` or `config` is required")),
    };
    s.store.put_stage(&derived.config)?;
    Ok((StatusCode::CREATED, Json(derived)))
}

#[derive(Deserialize, Default)]
#[serde(default)]
struct RunBody {
    parallelism: Option<usize>,
}

async fn run_stage(
    State(s): State<AppState>,
    Path(id): Path<String>,
    body: Option<Json<RunBody>>,
) -> ApiResult<impl IntoResponse> {
    let cfg = s.store.stage(&id)?;
    let parallelism = body
        .and_then(|b| b.0.parallelism)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let job_id = format!("run-{id}");
    let (handle, fresh) = s.start_job(&job_id, cfg.repeats, cfg.repeats as u64 * (cfg.generations + 1));
    if fresh {
        let (store, evaluator) = (s.store.clone(), s.evaluator.clone());
        tokio::task::spawn_blocking(move || {
            if let Err(e) = run_stage_with(&store, &id, parallelism, evaluator.as_ref(), Some(&handle)) {
                handle.update(|p| {
                    p.state = JobState::Failed;
                    p.error = Some(e.to_string());
                });
            }
        });
    }
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))))
}

async fn get_progress(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Progress>> {
    if let Some(h) = s.job(&id) {
        return Ok(Json(h.snapshot()));
    }
    // Runs finished before this server started are reported from the store.
    if let Some(stage_id) = id.strip_prefix("run-") {
        if let Ok(cfg) = s.store.stage(stage_id) {
            let done = (0..cfg.repeats).filter(|&k| s.store.repeat_done(stage_id, k)).count();
            let total_gens = cfg.repeats as u64 * (cfg.generations + 1);
            return Ok(Json(Progress {
                job_id: id.clone(),
                state: if done == cfg.repeats {
                    JobState::Done
                } else {
                    JobState::Queued
                },
                total: cfg.repeats,
                done,
                generations_total: total_gens,
                generations_done: done as u64 * (cfg.generations + 1),
                error: None,
            }));
        }
    }
    Err(ApiError(StatusCode::NOT_FOUND, format!("unknown job {id}")))
}

async fn get_lineage(State(s): State<AppState>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.lineage()?))
}

async fn get_organism(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let genome = s.store.organism(&id)?;
    let organism = genome.develop().ok();
    Ok(Json(json!({
        "organism_id": id,
        "blocks": genome.blocks.len(),
        "neurons": genome.neurons.len(),
        "joints": organism.map(|o| o.joint_count()),
        "genome": genome,
    })))
}

fn parse_cond(raw: &Option<String>) -> ApiResult<Option<[f64; 2]>> {
    let Some(raw) = raw.as_deref().filter(|r| !r.is_empty()) else {
        return Ok(None);
    };
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| bad_request(format!("cond must be X,Y, got {raw:?}")))?;
    match parts[..] {
        [x, y] if x.is_finite() && y.is_finite() => Ok(Some([x, y])),
        _ => Err(bad_request(format!("cond must be X,Y, got {raw:?}"))),
    }
}

#[derive(Deserialize)]
struct MapQuery {
    res: Option<usize>,
    cond: Option<String>,
    format: Option<String>,
    timer: Option<f64>,
}

fn develop(genome: &Genome) -> ApiResult<forage_core::Organism> {
    genome
        .develop()
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}

async fn get_map(State(s): State<AppState>, Path(id): Path<String>, Query(q): Query<MapQuery>) -> ApiResult<Response> {
    let genome = s.store.organism(&id)?;
    let res = q.res.unwrap_or(11);
    if !(2..=401).contains(&res) {
        return Err(bad_request("res must be between 2 and 401"));
    }
    let cond = parse_cond(&q.cond)?;
    let timer = q.timer.unwrap_or(ANALYSIS_TIMER);
    if !timer.is_finite() || timer <= 0.0 {
        return Err(bad_request("timer must be positive"));
    }
    let stem = map_file_stem(&id, res, cond);
    let dir = s.store.analysis_dir(&id);
    if dir.join(format!("{stem}.meta.json")).exists() {
        return match q.format.as_deref().unwrap_or("csv") {
            "csv" => Ok((
                [(header::CONTENT_TYPE, "text/csv")],
                std::fs::read(dir.join(format!("{stem}.csv"))).map_err(StoreError::from)?,
            )
                .into_response()),
            "png" => Ok((
                [(header::CONTENT_TYPE, "image/png")],
                std::fs::read(dir.join(format!("{stem}.png"))).map_err(StoreError::from)?,
            )
                .into_response()),
            "json" => Ok(Json(read_map(&dir, &stem).map_err(StoreError::from)?).into_response()),
            other => Err(bad_request(format!("unknown format {other:?}"))),
        };
    }
    let job_id = format!("map-{stem}");
    if let Some(h) = s.job(&job_id) {
        let p = h.snapshot();
        if p.state == JobState::Failed {
            return Err(ApiError(StatusCode::UNPROCESSABLE_ENTITY, p.error.unwrap_or_default()));
        }
    }
    let organism = develop(&genome)?;
    let (handle, fresh) = s.start_job(&job_id, 1, 0);
    if fresh {
        let world = s.world.clone();
        tokio::task::spawn_blocking(move || {
            handle.update(|p| p.state = JobState::Running);
            let map = match cond {
                Some(first) => conditional_map(&organism, first, res, timer, &world),
                None => Ok(foraging_map(&organism, res, timer, &world)),
            };
            let written = map
                .map_err(|e: MapError| e.to_string())
                .and_then(|m| write_map(&m, &dir, &stem).map_err(|e| e.to_string()));
            handle.update(|p| match written {
                Ok(_) => {
                    p.done = 1;
                    p.state = JobState::Done;
                }
                Err(e) => {
                    p.state = JobState::Failed;
                    p.error = Some(e);
                }
            });
        });
    }
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))).into_response())
}

#[derive(Deserialize)]
struct ProfileQuery {
    trials: Option<usize>,
    seq: Option<usize>,
    timer: Option<f64>,
    seed: Option<u64>,
}

async fn get_profile(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<ProfileQuery>,
) -> ApiResult<impl IntoResponse> {
    let organism = develop(&s.store.organism(&id)?)?;
    let (trials, seq) = (q.trials.unwrap_or(20), q.seq.unwrap_or(10));
    if trials == 0 || seq == 0 || trials > 10_000 || seq > 100 {
        return Err(bad_request("trials must be in 1..=10000 and seq in 1..=100"));
    }
    let timer = q.timer.unwrap_or(ANALYSIS_TIMER);
    let seed = q.seed.unwrap_or(0);
    let world = s.world.clone();
    let profile = blocking(move || foraging_profile(&organism, trials, seq, timer, seed, &world)).await?;
    Ok(Json(profile))
}

#[derive(Deserialize)]
struct TrajectoryQuery {
    targets: Option<usize>,
    timer: Option<f64>,
    seed: Option<u64>,
}

async fn get_trajectory(
    State(s): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<TrajectoryQuery>,
) -> ApiResult<impl IntoResponse> {
    let organism = develop(&s.store.organism(&id)?)?;
    let n = q.targets.unwrap_or(3);
    if !(1..=100).contains(&n) {
        return Err(bad_request("targets must be in 1..=100"));
    }
    let timer = q.timer.unwrap_or(ANALYSIS_TIMER);
    let mut rng = stream(&[q.seed.unwrap_or(0)]);
    let offsets: Vec<[f64; 2]> = (0..n).map(|_| uniform_offset(&mut rng)).collect();
    let runner = PhysicsRunner::new(organism, s.world.clone());
    let trace = blocking(move || runner.run(&offsets, timer)).await?;
    trace
        .map(Json)
        .map_err(|e| ApiError(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))
}
