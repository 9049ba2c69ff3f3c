use axum::extract::Path;
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::Json;

use crate::error::ApiError;

const SCHEMAS: [(&str, &str); 5] = [
    ("game-config", include_str!("../schema/game-config.json")),
    ("decision", include_str!("../schema/decision.json")),
    ("advance", include_str!("../schema/advance.json")),
    ("event", include_str!("../schema/event.json")),
    ("error", include_str!("../schema/error.json")),
];

pub async fn index() -> Json<serde_json::Value> {
    let names: Vec<String> = SCHEMAS.iter().map(|(n, _)| format!("/schema/{n}")).collect();
    Json(serde_json::json!({ "schemas": names }))
}

pub async fn get(Path(name): Path<String>) -> Result<Response, ApiError> {
    let name = name.strip_suffix(".json").unwrap_or(&name);
    SCHEMAS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, body)| ([(header::CONTENT_TYPE, "application/schema+json")], *body).into_response())
        .ok_or_else(|| ApiError::not_found(format!("no schema {name}")))
}
