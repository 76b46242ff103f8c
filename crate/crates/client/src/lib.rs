//! Thin async client for the forecasting service; one method per route.

use serde::de::DeserializeOwned;
use serde::Serialize;

use inplay_core::api::*;
use inplay_core::calibration::CalibrationResult;
use inplay_core::domain::ForecastTriple;
use inplay_core::evaluation::Evaluation;
use inplay_core::rival::zou::ZouOutcome;
use inplay_core::simulator::ForecastOutput;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with a non-success status.
    #[error("service returned {status}: {} ({})", .body.message, .body.error)]
    Http { status: u16, body: ErrorBody },
    #[error("transport error: {0}")]
    Transport(#[from] reqwest::Error),
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, for example `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Client { base: base.into().trim_end_matches('/').to_string(), http: reqwest::Client::new() }
    }

    async fn decode<T: DeserializeOwned>(resp: reqwest::Response) -> Result<T> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let code = status.as_u16();
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody { error: "http".into(), message: text });
        Err(ClientError::Http { status: code, body })
    }

    async fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, req: &Req) -> Result<Resp> {
        let resp = self.http.post(format!("{}{path}", self.base)).json(req).send().await?;
        Self::decode(resp).await
    }

    pub async fn health(&self) -> Result<Health> {
        let resp = self.http.get(format!("{}/health", self.base)).send().await?;
        Self::decode(resp).await
    }

    pub async fn implied(&self, req: &ImpliedRequest) -> Result<ForecastTriple> {
        self.post("/v1/implied", req).await
    }

    pub async fn rate(&self, req: &RateRequest) -> Result<RateResponse> {
        self.post("/v1/rate", req).await
    }

    pub async fn forecast(&self, req: &ForecastRequest) -> Result<ForecastOutput> {
        self.post("/v1/forecast", req).await
    }

    pub async fn calibrate(&self, req: &CalibrateRequest) -> Result<CalibrationResult> {
        self.post("/v1/calibrate", req).await
    }

    pub async fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse> {
        self.post("/v1/score", req).await
    }

    pub async fn kelly(&self, req: &KellyRequest) -> Result<KellyResponse> {
        self.post("/v1/kelly", req).await
    }

    pub async fn settle(&self, req: &SettleRequest) -> Result<SettleResponse> {
        self.post("/v1/settle", req).await
    }

    pub async fn zou_forecast(&self, req: &ZouForecastRequest) -> Result<ZouOutcome> {
        self.post("/v1/zou/forecast", req).await
    }

    pub async fn maia_forecast(&self, req: &MaiaForecastRequest) -> Result<ForecastOutput> {
        self.post("/v1/maia/forecast", req).await
    }

    pub async fn fit(&self, req: &FitRequest) -> Result<FitResponse> {
        self.post("/v1/fit", req).await
    }

    pub async fn evaluate(&self, req: &EvaluateRequest) -> Result<Evaluation> {
        self.post("/v1/evaluate", req).await
    }
}
