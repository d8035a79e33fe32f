//! HTTP inference service over a trained checkpoint.
//!
//! * `GET /model/info` static metadata of the loaded model
//! * `POST /sample` conditional samples for one goal direction or preference
//! * `GET /landscape` every terminal's reward vector, mask flag and the true
//!   Pareto front

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use mogfn::conditioning::{conditional_reward, in_focus, Conditioning, FocusGoal, Mode, PreferenceVector};
use mogfn::env::{Env, RewardVector};
use mogfn::experiment::{checkpoint, RunConfig, SampleRecord};
use mogfn::gfn::{sample_many, GfnModel, Trainer};
use mogfn::metrics::true_front;

/// Largest `n` accepted by `/sample`.
pub const MAX_SAMPLES: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub objectives: usize,
    pub dims: usize,
    pub side: usize,
    pub mode: Mode,
    pub landscape: String,
    pub focus_cosine_threshold: f64,
    pub limit_reward_coef: f64,
    pub temperature_beta: f64,
    pub training_steps: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapePoint {
    pub coords: Vec<usize>,
    pub r: RewardVector,
    pub masked: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeBody {
    pub points: Vec<LandscapePoint>,
    pub front: Vec<RewardVector>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub mode: Mode,
    /// Goal direction; normalized server-side.
    #[serde(default)]
    pub d_g: Option<Vec<f64>>,
    /// Preference weights; normalized to the simplex server-side.
    #[serde(default)]
    pub w: Option<Vec<f64>>,
    /// Focus threshold used for `in_focus` and the scalar reward instead of
    /// the checkpoint's.
    #[serde(default)]
    pub c_g_override: Option<f64>,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleResponse {
    pub samples: Vec<SampleRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub goal_accuracy: Option<f64>,
}

/// Read-only state shared by all requests.
pub struct ServiceState {
    model: GfnModel,
    env: Env,
    shaped: bool,
    info: ModelInfo,
    landscape: LandscapeBody,
}

impl ServiceState {
    pub fn new(cfg: &RunConfig, trainer: Trainer) -> mogfn::Result<Self> {
        let t = trainer.config();
        let info = ModelInfo {
            objectives: cfg.grid.objectives,
            dims: cfg.grid.dims,
            side: cfg.grid.side,
            mode: cfg.mode,
            landscape: cfg.preset.name().to_string(),
            focus_cosine_threshold: t.focus_cosine_threshold,
            limit_reward_coef: t.limit_reward_coef,
            temperature_beta: t.beta,
            training_steps: trainer.step(),
        };
        let shaped = t.shaped_reward;
        let env = trainer.env().clone();
        let points = env
            .terminals()?
            .into_iter()
            .map(|t| LandscapePoint {
                coords: t.coords,
                r: t.reward,
                masked: t.masked,
            })
            .collect();
        let front = true_front(env.grid(), env.landscape())?;
        Ok(ServiceState {
            model: trainer.model().clone(),
            env,
            shaped,
            info,
            landscape: LandscapeBody { points, front },
        })
    }

    pub fn load(path: &Path) -> mogfn::Result<Self> {
        let (cfg, trainer) = checkpoint::load(path)?;
        Self::new(&cfg, trainer)
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    /// Answers a sample request; errors carry the HTTP status to return.
    pub fn sample(&self, req: &SampleRequest) -> Result<SampleResponse, ApiError> {
        let k = self.info.objectives;
        if req.mode != self.info.mode {
            return Err(ApiError::bad_request(format!(
                "checkpoint was trained in {} mode, request asks for {}",
                self.info.mode.name(),
                req.mode.name()
            )));
        }
        if req.n > MAX_SAMPLES {
            return Err(ApiError::bad_request(format!("n = {} exceeds the limit of {MAX_SAMPLES}", req.n)));
        }
        let (payload, field) = match req.mode {
            Mode::Goal => (req.d_g.as_ref(), "d_g"),
            Mode::Preference => (req.w.as_ref(), "w"),
        };
        let payload = payload.ok_or_else(|| ApiError::bad_request(format!("missing `{field}`")))?;
        if payload.len() != k {
            return Err(ApiError::bad_request(format!(
                "`{field}` has {} entries, the model has {k} objectives",
                payload.len()
            )));
        }
        if payload.iter().any(|x| !x.is_finite()) {
            return Err(ApiError::bad_request(format!("`{field}` contains a non-finite value")));
        }
        if payload.iter().all(|&x| x == 0.0) {
            return Err(ApiError::unprocessable(format!("`{field}` is the zero vector")));
        }
        let (cond, scoring) = match req.mode {
            Mode::Goal => {
                let goal = FocusGoal::new(
                    payload.clone(),
                    self.info.focus_cosine_threshold,
                    self.info.limit_reward_coef,
                )
                .map_err(|e| ApiError::unprocessable(e.to_string()))?;
                let scoring = match req.c_g_override {
                    Some(c) => goal.with_threshold(c).map_err(|e| ApiError::bad_request(e.to_string()))?,
                    None => goal.clone(),
                };
                (Conditioning::Goal(goal), Conditioning::Goal(scoring))
            }
            Mode::Preference => {
                if payload.iter().any(|&x| x < 0.0) {
                    return Err(ApiError::bad_request("`w` must be non-negative"));
                }
                let w = PreferenceVector::normalized(payload.clone())
                    .map_err(|e| ApiError::unprocessable(e.to_string()))?;
                let c = Conditioning::Preference(w);
                (c.clone(), c)
            }
        };
        let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
        let trajs = sample_many(&self.model, &self.env, vec![cond.clone(); req.n], self.shaped, &mut rng)
            .map_err(ApiError::internal)?;
        let mut samples = Vec::with_capacity(trajs.len());
        for t in trajs {
            let focus = scoring.goal().map(|g| in_focus(&t.reward, g));
            let scalar_reward = conditional_reward(&t.reward, &scoring, self.shaped).map_err(ApiError::internal)?;
            samples.push(SampleRecord {
                seed: req.seed,
                mode: req.mode,
                conditioning: cond.payload().to_vec(),
                coords: t.terminal,
                r: t.reward,
                in_focus: focus,
                scalar_reward,
            });
        }
        let goal_accuracy = (req.mode == Mode::Goal && !samples.is_empty()).then(|| {
            samples.iter().filter(|s| s.in_focus == Some(true)).count() as f64 / samples.len() as f64
        });
        Ok(SampleResponse {
            samples,
            goal_accuracy,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: msg.into(),
        }
    }

    fn unprocessable(msg: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: msg.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type Shared = Arc<ServiceState>;

async fn model_info(State(s): State<Shared>) -> Json<ModelInfo> {
    Json(s.info.clone())
}

async fn landscape(State(s): State<Shared>) -> Json<LandscapeBody> {
    Json(s.landscape.clone())
}

async fn sample(State(s): State<Shared>, body: Bytes) -> Result<Json<SampleResponse>, ApiError> {
    let req: SampleRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    tokio::task::spawn_blocking(move || s.sample(&req))
        .await
        .map_err(ApiError::internal)?
        .map(Json)
}

/// Routes over `state`; `cors` adds permissive cross-origin headers.
pub fn router(state: Shared, cors: bool) -> Router {
    let app = Router::new()
        .route("/model/info", get(model_info))
        .route("/sample", post(sample))
        .route("/landscape", get(landscape))
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

pub async fn serve(state: Shared, addr: SocketAddr, cors: bool) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state, cors)).await
}
