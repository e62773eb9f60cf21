//! End-to-end exercise of the HTTP surface against a live listener.

use railchain_core::engine::EngineConfig;
use railchain_core::sim::adv1;
use serde_json::{json, Value};

async fn serve() -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, railchain_service::app(EngineConfig::default())).await.unwrap();
    });
    format!("http://{addr}")
}

#[tokio::test]
async fn full_booking_flow_over_http() {
    let base = serve().await;
    let client = reqwest::Client::new();

    let health: Value =
        client.get(format!("{base}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["status"], "ok");

    let scenario = adv1();
    let response = client
        .post(format!("{base}/state/init"))
        .json(&scenario.init)
        .send()
        .await
        .unwrap();
    assert!(response.status().is_success());

    // Dry runs answer without touching the state version.
    let stats: Value =
        client.get(format!("{base}/stats")).send().await.unwrap().json().await.unwrap();
    let version = stats["version"].as_u64().unwrap();
    let probe = json!({
        "id": "probe",
        "origin": "A",
        "destination": "B",
        "pickup_earliest": "2000-01-01T00:00:00Z",
        "demand": { "weight": 500, "length": 400 }
    });
    let report: Value = client
        .post(format!("{base}/dryrun/search"))
        .json(&probe)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(!report["chains"].as_array().unwrap().is_empty());
    let validation: Value = client
        .post(format!("{base}/dryrun/validate-chain"))
        .json(&json!({ "request": probe, "chain": { "blocks": ["b-early"], "split": 0 } }))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(validation["violations"].as_array().unwrap().is_empty());
    let stats: Value =
        client.get(format!("{base}/stats")).send().await.unwrap().json().await.unwrap();
    assert_eq!(stats["version"].as_u64().unwrap(), version);

    // The three bookings: big grabs the early train, then gets rerouted so
    // both smalls fit.
    let mut outcomes = Vec::new();
    for envelope in &scenario.bookings {
        let body = serde_json::to_value(&envelope.message).unwrap();
        let request = &body["request"];
        let response = client
            .post(format!("{base}/requests"))
            .json(request)
            .send()
            .await
            .unwrap();
        assert!(response.status().is_success());
        let booked: Value = response.json().await.unwrap();
        outcomes.push(booked["outcome"].as_str().unwrap().to_string());
    }
    assert_eq!(outcomes, ["routed", "routed", "routed"]);

    // Duplicate booking is a structured rejection.
    let body = serde_json::to_value(&scenario.bookings[0].message).unwrap();
    let response = client
        .post(format!("{base}/requests"))
        .json(&body["request"])
        .send()
        .await
        .unwrap();
    assert_eq!(response.status(), 422);
    let rejection: Value = response.json().await.unwrap();
    assert!(rejection["code"].is_string());
    assert!(rejection["reason"].is_string());
    assert!(rejection["details"].is_array());

    let stats: Value =
        client.get(format!("{base}/stats")).send().await.unwrap().json().await.unwrap();
    assert_eq!(stats["requests"], 3);
    assert_eq!(stats["counters"]["outcomes"]["routed"], 3);

    // Mismatched update body is a bad request.
    let response = client
        .put(format!("{base}/requests/small-1"))
        .json(&body["request"])
        .send()
        .await
        .unwrap();
    assert_eq!(response.status(), 400);

    // Deferred NDJSON batch parks work until the compute trigger.
    let ndjson = concat!(
        "{\"kind\":\"upsert-reservation\",\"block\":\"b-early\",\"reservation\":{\"weight\":100,\"length\":80}}\n",
        "{\"kind\":\"upsert-reservation\",\"block\":\"b-late\",\"reservation\":{\"weight\":100,\"length\":80}}\n",
    );
    let batch: Value = client
        .post(format!("{base}/messages?defer=true"))
        .body(ndjson)
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(batch["accepted"], 2);
    assert_eq!(batch["processed"], 0);
    let stats: Value =
        client.get(format!("{base}/stats")).send().await.unwrap().json().await.unwrap();
    assert!(stats["parked_tasks"].as_u64().unwrap() > 0);
    let trigger: Value = client
        .post(format!("{base}/compute/trigger"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert!(trigger["processed"].as_u64().unwrap() >= 1);
    let stats: Value =
        client.get(format!("{base}/stats")).send().await.unwrap().json().await.unwrap();
    assert_eq!(stats["parked_tasks"], 0);

    // Cancelling frees the request slot.
    let response =
        client.delete(format!("{base}/requests/small-2")).send().await.unwrap();
    assert!(response.status().is_success());
    let stats: Value =
        client.get(format!("{base}/stats")).send().await.unwrap().json().await.unwrap();
    assert_eq!(stats["requests"], 2);

    // Unknown ids map to 404 with the error body shape.
    let response =
        client.delete(format!("{base}/requests/ghost")).send().await.unwrap();
    assert_eq!(response.status(), 404);
    let rejection: Value = response.json().await.unwrap();
    assert!(rejection["code"].is_string());
}
