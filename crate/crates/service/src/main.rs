use railchain_core::engine::EngineConfig;

#[tokio::main]
async fn main() {
    let addr = std::env::var("RAILCHAIN_ADDR").unwrap_or_else(|_| "127.0.0.1:8080".to_string());
    let listener = tokio::net::TcpListener::bind(&addr).await.expect("bind service address");
    eprintln!("listening on {addr}");
    axum::serve(listener, railchain_service::app(EngineConfig::default()))
        .await
        .expect("serve");
}
