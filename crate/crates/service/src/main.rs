use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use simembed::datasets::{bundled_registry_path, Registry};
use simembed_service::{api, SessionManager};

#[derive(Parser)]
#[command(name = "simembed-server", version, about = "HTTP session API for steerable projections")]
struct Args {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory of session snapshot files.
    #[arg(long, default_value = "sessions")]
    store: PathBuf,
    /// Dataset registry (defaults to the bundled data/registry.json).
    #[arg(long)]
    registry: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> std::process::ExitCode {
    let args = Args::parse();
    let started = async {
        let registry = Registry::load(args.registry.clone().unwrap_or_else(bundled_registry_path))?;
        let manager = Arc::new(SessionManager::open(registry, &args.store)?);
        let listener = tokio::net::TcpListener::bind(args.addr).await?;
        eprintln!("listening on http://{} (store {})", listener.local_addr()?, args.store.display());
        axum::serve(listener, api::router(manager))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok::<_, Box<dyn std::error::Error>>(())
    };
    match started.await {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
