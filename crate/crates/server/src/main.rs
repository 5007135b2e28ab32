use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use mindfuse_core::config::Config;
use mindfuse_core::workspace::Workspace;
use mindfuse_server::{router, ServiceOptions};

/// Serve a mindfuse store over HTTP.
#[derive(Debug, Parser)]
#[command(name = "mindfuse-server", version)]
struct Args {
    /// TOML config; defaults apply when omitted.
    #[arg(long, env = "MINDFUSE_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the configured store directory.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    /// Static bearer token required on /api/v1.
    #[arg(long, env = "MINDFUSE_TOKEN", hide_env_values = true)]
    token: Option<String>,
    /// Concurrent pipeline jobs.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// Allowed CORS origin; repeatable. Any origin when omitted.
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let mut config = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(store) = args.store {
        config.store_path = store;
    }
    let workspace = Workspace::open(&config).context("opening store")?;
    log::info!("store {}, provider {}", config.store_path.display(), workspace.gateway().provider_id());
    let app = router(
        workspace,
        ServiceOptions {
            workers: args.workers,
            token: args.token,
            cors_origins: args.cors_origins,
        },
    );
    let listener = tokio::net::TcpListener::bind(args.bind).await.with_context(|| format!("binding {}", args.bind))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
