use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use flowshop_service::{app, AppState};
use tracing_subscriber::EnvFilter;

/// HTTP service for instance management, optimization runs and schedule evaluation.
#[derive(Parser)]
#[command(name = "flowshop-service", version)]
struct Options {
    /// Directory holding instance and run documents.
    #[arg(long, default_value = "flowshop-data")]
    data_dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Concurrent runs; defaults to the number of cores.
    #[arg(long)]
    workers: Option<usize>,
}

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .init();
    let opts = Options::parse();
    let workers = opts
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let state = match AppState::open(&opts.data_dir, workers) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot open {}: {e}", opts.data_dir.display());
            std::process::exit(1);
        }
    };
    let listener = match tokio::net::TcpListener::bind(opts.bind).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", opts.bind);
            std::process::exit(1);
        }
    };
    tracing::info!(addr = %opts.bind, workers, "listening");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    if let Err(e) = axum::serve(listener, app(state))
        .with_graceful_shutdown(shutdown)
        .await
    {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
