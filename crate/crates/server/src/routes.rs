use std::collections::BTreeSet;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use chrono::Weekday;
use gantryflow_core::corridor::{corridor_totals, CorridorTotals};
use gantryflow_core::gantry::{Bearing, GantryId, Tenths};
use gantryflow_core::time::parse_weekday;
use gantryflow_core::views::{self, DayGrouping, HourWindow, ViewError, ViewFilter, DEFAULT_MIN_SAMPLES};
use gantryflow_core::{Corridor, Segment, StatsCube, VehicleType};
use serde::{Deserialize, Serialize};
use tower_http::trace::TraceLayer;

use crate::datasets::{self, DatasetInfo};
use crate::jobs::{JobRecord, JobRequest, JobStatus};
use crate::AppState;

pub(crate) fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/corridors", get(list_corridors))
        .route("/api/datasets", get(list_datasets))
        .route("/api/jobs", get(list_jobs).post(submit_job))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/jobs/{id}/views/{view}", get(get_view))
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

#[derive(Debug)]
pub(crate) struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: &self.message })).into_response()
    }
}

impl From<ViewError> for ApiError {
    fn from(e: ViewError) -> Self {
        match e {
            ViewError::UnknownCorridor(_) | ViewError::NoData => ApiError::not_found(e.to_string()),
            ViewError::InvalidParameter(_) => ApiError::bad_request(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Serialize)]
struct Health {
    status: &'static str,
}

async fn health() -> Json<Health> {
    Json(Health { status: "ok" })
}

#[derive(Serialize)]
struct CorridorInfo<'a> {
    id: &'a str,
    freeway: &'a str,
    bearing: Bearing,
    start_gantry: GantryId,
    end_gantry: GantryId,
    start_interchange: Option<&'a str>,
    end_interchange: Option<&'a str>,
    mileage_span_km: Tenths,
    totals: Option<CorridorTotals>,
    segments: &'a [Segment],
}

impl<'a> From<&'a Corridor> for CorridorInfo<'a> {
    fn from(c: &'a Corridor) -> Self {
        let ends = c.interchange_endpoints();
        Self {
            id: &c.id,
            freeway: &c.freeway,
            bearing: c.bearing,
            start_gantry: c.start_gantry,
            end_gantry: c.end_gantry,
            start_interchange: ends.map(|e| e.0),
            end_interchange: ends.map(|e| e.1),
            mileage_span_km: c.mileage_span(),
            totals: corridor_totals(c).ok(),
            segments: &c.segments,
        }
    }
}

#[derive(Serialize)]
struct CorridorList<'a> {
    corridors: Vec<CorridorInfo<'a>>,
}

async fn list_corridors(State(state): State<AppState>) -> Response {
    let corridors = state.config().corridors.iter().map(CorridorInfo::from).collect();
    Json(CorridorList { corridors }).into_response()
}

#[derive(Serialize)]
struct DatasetList {
    datasets: Vec<DatasetInfo>,
}

async fn list_datasets(State(state): State<AppState>) -> Json<DatasetList> {
    Json(DatasetList {
        datasets: datasets::scan(&state.config().data_dir),
    })
}

#[derive(Serialize)]
struct JobList {
    jobs: Vec<JobRecord>,
}

async fn list_jobs(State(state): State<AppState>) -> Json<JobList> {
    Json(JobList {
        jobs: state.store().list(),
    })
}

#[derive(Serialize)]
struct Submitted {
    job_id: String,
}

fn validate(state: &AppState, request: &JobRequest) -> ApiResult<()> {
    if datasets::find(&state.config().data_dir, &request.dataset).is_none() {
        return Err(ApiError::not_found(format!("unknown dataset {}", request.dataset)));
    }
    if request.corridors.is_empty() {
        return Err(ApiError::bad_request("at least one corridor is required"));
    }
    let mut seen = BTreeSet::new();
    for id in &request.corridors {
        state
            .config()
            .corridors
            .get(id)
            .map_err(|_| ApiError::not_found(format!("unknown corridor {id}")))?;
        if !seen.insert(id) {
            return Err(ApiError::bad_request(format!("corridor {id} listed twice")));
        }
    }
    if let Some(r) = request.date_range {
        if r.from > r.to {
            return Err(ApiError::bad_request(format!(
                "invalid date range: {} is after {}",
                r.from, r.to
            )));
        }
    }
    if request.overrides.workers == Some(0) {
        return Err(ApiError::bad_request("workers must be at least 1"));
    }
    if request.overrides.max_travel_seconds == Some(0) {
        return Err(ApiError::bad_request("max_travel_seconds must be at least 1"));
    }
    Ok(())
}

async fn submit_job(
    State(state): State<AppState>,
    body: Result<Json<JobRequest>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Submitted>)> {
    let Json(request) = body.map_err(|e| ApiError::bad_request(e.body_text()))?;
    validate(&state, &request)?;
    let record = JobRecord::new(request);
    let job_id = record.id.clone();
    state
        .store()
        .insert(record)
        .map_err(|e| ApiError::internal(e.to_string()))?;
    tracing::info!(job = %job_id, "job submitted");
    state.spawn(job_id.clone());
    Ok((StatusCode::ACCEPTED, Json(Submitted { job_id })))
}

async fn get_job(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<JobRecord>> {
    state
        .store()
        .get(&id)
        .map(Json)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))
}

#[derive(Debug, Default, Deserialize)]
pub(crate) struct ViewQuery {
    corridor: Option<String>,
    weekday: Option<String>,
    window: Option<String>,
    min_samples: Option<u64>,
    /// Comma-separated vehicle type codes.
    vehicle_types: Option<String>,
    /// Count holidays in the Sunday row.
    #[serde(default)]
    holidays_as_sunday: bool,
}

impl ViewQuery {
    fn corridor<'a>(&'a self, cube: &'a StatsCube) -> ApiResult<&'a str> {
        match (&self.corridor, cube.metadata.corridor_ids.as_slice()) {
            (Some(c), _) => Ok(c),
            (None, [only]) => Ok(only),
            (None, _) => Err(ApiError::bad_request("corridor parameter is required")),
        }
    }

    fn filter(&self) -> ApiResult<ViewFilter> {
        let vehicle_types = match &self.vehicle_types {
            None => None,
            Some(list) => Some(
                list.split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.trim()
                            .parse::<u16>()
                            .map(VehicleType)
                            .map_err(|_| ApiError::bad_request(format!("bad vehicle type {s:?}")))
                    })
                    .collect::<ApiResult<BTreeSet<_>>>()?,
            ),
        };
        Ok(ViewFilter {
            vehicle_types,
            dates: None,
            grouping: if self.holidays_as_sunday {
                DayGrouping::HolidaysAsSunday(DayGrouping::default_holidays())
            } else {
                DayGrouping::Weekday
            },
        })
    }

    fn weekday(&self) -> ApiResult<Weekday> {
        let text = self
            .weekday
            .as_deref()
            .ok_or_else(|| ApiError::bad_request("weekday parameter is required"))?;
        parse_weekday(text).ok_or_else(|| ApiError::bad_request(format!("bad weekday {text:?}")))
    }

    fn window(&self) -> ApiResult<HourWindow> {
        match &self.window {
            None => Ok(HourWindow::FULL_DAY),
            Some(w) => Ok(HourWindow::parse(w)?),
        }
    }
}

async fn get_view(
    State(state): State<AppState>,
    Path((id, view)): Path<(String, String)>,
    query: Result<Query<ViewQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let Query(query) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (record, cube) = state
        .store()
        .result(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown job {id}")))?;
    if record.state != JobStatus::Done {
        let mut msg = format!("job {id} is {:?}", record.state);
        if let Some(reason) = &record.reason {
            msg.push_str(": ");
            msg.push_str(reason);
        }
        return Err(ApiError::new(StatusCode::CONFLICT, msg));
    }
    let cube = cube.ok_or_else(|| ApiError::internal(format!("result of job {id} could not be loaded")))?;
    render_view(&cube, &view, &query)
}

pub(crate) fn render_view(cube: &StatsCube, view: &str, query: &ViewQuery) -> ApiResult<Response> {
    let corridor = query.corridor(cube)?;
    let filter = query.filter()?;
    let min_samples = query.min_samples.unwrap_or(DEFAULT_MIN_SAMPLES);
    let body = match view {
        "hourly" => Json(views::hourly_distribution(cube, corridor, &filter)?).into_response(),
        "heatmap" => Json(views::weekday_hour_counts(cube, corridor, &filter)?).into_response(),
        "vehicle_types" => Json(views::vehicle_type_counts(cube, corridor, &filter)?).into_response(),
        "avg_time" => Json(views::avg_travel_time(cube, corridor, min_samples, &filter)?).into_response(),
        "best_departure" => {
            let (weekday, window) = (query.weekday()?, query.window()?);
            Json(views::best_departure_report(cube, corridor, weekday, window, min_samples, &filter)?).into_response()
        }
        other => return Err(ApiError::not_found(format!("unknown view {other}"))),
    };
    Ok(body)
}
