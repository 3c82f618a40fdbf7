use std::fmt::Write as _;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use aesthetic_captcha::harness::{
    comparison_table, render_reports, render_table, run_catalogue_repeats, run_random_guess_parallel, run_replay,
    synthetic_pool, worker_rng, CaptchaApi, InProcessClient,
};
use aesthetic_captcha::pool::{ImagePool, PoolStats, SharedPool};
use aesthetic_captcha::puzzle::{CategoryMode, Polarity, PuzzleSpec};
use aesthetic_captcha::service::{ChallengeService, ServiceConfig};
use anyhow::{bail, Context};
use chrono::TimeDelta;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::http::{self, AppState};
use crate::remote::HttpClient;

#[derive(Debug, Parser)]
#[command(
    name = "aesthetic-captcha",
    version,
    about = "Aesthetic-judgement CAPTCHA service and attack harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Run a scripted attack or print the comparison table.
    #[command(subcommand)]
    Attack(AttackCommand),
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    pub bind: IpAddr,
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Fraction of challenges asking for the pleasing images instead.
    #[arg(long, default_value_t = 0.25)]
    pub polarity_mix: f64,
    #[arg(long, default_value = "mixed")]
    pub category_mode: CategoryMode,
    #[arg(long, default_value_t = 120)]
    pub ttl_secs: u64,
    /// Challenges per client per minute; 0 disables the limit.
    #[arg(long, default_value_t = 100)]
    pub rate_limit: u32,
    #[arg(long)]
    pub disable_escalation: bool,
    /// Use the first X-Forwarded-For hop as the client address.
    #[arg(long)]
    pub trust_proxy: bool,
    /// Allow browser calls from this origin.
    #[arg(long)]
    pub allow_origin: Option<String>,
    /// Seed puzzle generation (for reproducible demos; never in production).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, env = "CAPTCHA_SECRET", hide_env_values = true)]
    pub secret: Option<String>,
}

impl ServeArgs {
    pub fn service_config(&self) -> anyhow::Result<ServiceConfig> {
        let secret = match self.secret.as_deref() {
            Some(s) if !s.is_empty() => s.to_owned(),
            _ => bail!("CAPTCHA_SECRET must be set; relying parties need it to call /api/v1/verify"),
        };
        if !(0.0..=1.0).contains(&self.polarity_mix) {
            bail!("--polarity-mix must be within [0, 1]");
        }
        let ttl = TimeDelta::try_seconds(self.ttl_secs.try_into()?).context("--ttl-secs out of range")?;
        let base_spec = PuzzleSpec::new(self.n, self.k, Polarity::FindDispleasing, self.category_mode)?;
        Ok(ServiceConfig {
            base_spec,
            polarity_mix: self.polarity_mix,
            pending_ttl: ttl,
            solved_ttl: ttl,
            rate_limit: (self.rate_limit > 0).then_some(self.rate_limit),
            escalation: !self.disable_escalation,
            seed: self.seed,
            ..ServiceConfig::new(secret)
        })
    }
}

pub async fn serve(args: ServeArgs) -> anyhow::Result<()> {
    let config = args.service_config()?;
    let pool = SharedPool::default();
    let stats = pool
        .ingest_manifest(&args.manifest)
        .with_context(|| format!("loading {}", args.manifest.display()))?;
    tracing::info!(m = stats.m, p = stats.p, d = stats.d, "image pool loaded");

    let service = Arc::new(ChallengeService::new(config, Arc::new(pool)));
    let mut app = http::router(AppState {
        service: service.clone(),
        trust_proxy: args.trust_proxy,
    });
    if let Some(origin) = &args.allow_origin {
        use axum::http::{header, HeaderValue, Method};
        use tower_http::cors::CorsLayer;
        let origin: HeaderValue = origin.parse().context("--allow-origin")?;
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST])
                .allow_headers([header::CONTENT_TYPE]),
        );
    }
    let sweeper = http::spawn_sweeper(service, Duration::from_secs(10));

    let addr = SocketAddr::new(args.bind, args.port);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(%addr, "listening");
    tokio::select! {
        res = http::serve(listener, app) => res?,
        _ = tokio::signal::ctrl_c() => tracing::info!("shutting down"),
    }
    sweeper.abort();
    Ok(())
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Click a uniformly random subset on every challenge.
    Random(RandomArgs),
    /// Replay fixed clicks on fresh challenges, then replay a redeemed token.
    Replay(ReplayArgs),
    /// Record every image shown over many puzzles.
    Catalogue(CatalogueArgs),
    /// Random-guess success of several CAPTCHA schemes, from closed forms.
    Table(TableArgs),
}

#[derive(Debug, Args)]
pub struct Target {
    /// Attack a running server instead of an in-process service.
    #[arg(long)]
    pub http: Option<String>,
    #[arg(long, default_value = "harness")]
    pub site_key: String,
    /// Shared secret for redeeming tokens over HTTP.
    #[arg(long, env = "CAPTCHA_SECRET", hide_env_values = true)]
    pub secret: Option<String>,
    /// Image pool for the in-process service; a synthetic 100/100 pool by default.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RandomArgs {
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    #[arg(long, default_value_t = 20_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub target: Target,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Slots clicked on every challenge, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub selection: Vec<usize>,
    #[arg(long, default_value_t = 20_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[command(flatten)]
    pub target: Target,
}

#[derive(Debug, Args)]
pub struct CatalogueArgs {
    /// Pool size.
    #[arg(long, default_value_t = 200)]
    pub m: usize,
    /// Pleasing images in the pool; half of `m` by default.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long, default_value_t = 9)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Puzzles observed per run.
    #[arg(long, default_value_t = 100)]
    pub q: usize,
    #[arg(long, default_value_t = 1000)]
    pub repeats: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn spec(n: usize, k: usize) -> anyhow::Result<PuzzleSpec> {
    Ok(PuzzleSpec::new(n, k, Polarity::FindDispleasing, CategoryMode::Mixed)?)
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> anyhow::Result<()> {
    if let Some(path) = path {
        let text = serde_json::to_string_pretty(value)? + "\n";
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

/// Runs `f` against either the remote server or a fresh in-process service
/// configured for measurement.
fn with_api<T>(
    target: &Target,
    spec: PuzzleSpec,
    seed: u64,
    f: impl FnOnce(&dyn CaptchaApi) -> anyhow::Result<T>,
) -> anyhow::Result<T> {
    if let Some(url) = &target.http {
        let secret = target.secret.clone().unwrap_or_default();
        let client = HttpClient::new(url, target.site_key.clone(), secret)?;
        return f(&client);
    }
    let pool = match &target.manifest {
        Some(path) => ImagePool::load_manifest(path).with_context(|| format!("loading {}", path.display()))?,
        None => synthetic_pool(PoolStats::new(100, 100)),
    };
    let config = ServiceConfig::measurement(spec, "in-process", seed);
    let service = ChallengeService::new(config, Arc::new(SharedPool::new(pool)));
    f(&InProcessClient::new(Arc::new(service), "attacker"))
}

/// Runs one attack subcommand and returns its human-readable report.
pub fn run_attack(cmd: &AttackCommand) -> anyhow::Result<String> {
    match cmd {
        AttackCommand::Random(a) => {
            let spec = spec(a.n, a.k)?;
            let report = with_api(&a.target, spec, a.seed, |api| {
                Ok(run_random_guess_parallel(api, &spec, a.trials, a.seed, a.workers)?)
            })?;
            write_json(a.target.json.as_deref(), &report)?;
            Ok(render_reports(&[report]))
        }
        AttackCommand::Replay(a) => {
            let spec = spec(a.n, a.k)?;
            let report = with_api(&a.target, spec, a.seed, |api| {
                Ok(run_replay(
                    api,
                    &spec,
                    a.trials,
                    &a.selection,
                    &mut worker_rng(a.seed, 0),
                )?)
            })?;
            write_json(a.target.json.as_deref(), &report)?;
            Ok(render_reports(&[report.fresh, report.token_replay]))
        }
        AttackCommand::Catalogue(a) => {
            let p = a.p.unwrap_or(a.m / 2);
            if p > a.m {
                bail!("--p cannot exceed --m");
            }
            let summary = run_catalogue_repeats(
                PoolStats::new(p, a.m - p),
                &spec(a.n, a.k)?,
                a.q,
                a.repeats,
                &mut worker_rng(a.seed, 0),
            )?;
            write_json(a.json.as_deref(), &summary)?;
            let mut out = String::new();
            writeln!(
                out,
                "pool m={} (p={}, d={}), n={}, k={}, {} puzzles observed, {} runs",
                summary.pool.m,
                summary.pool.p,
                summary.pool.d,
                summary.n,
                summary.k,
                summary.puzzles_observed,
                summary.repeats
            )?;
            writeln!(
                out,
                "coverage mean {:.4} (min {:.4}, max {:.4}), expected {:.4}",
                summary.mean_coverage, summary.min_coverage, summary.max_coverage, summary.expected_coverage
            )?;
            Ok(out)
        }
        AttackCommand::Table(a) => {
            let rows = comparison_table();
            write_json(a.json.as_deref(), &rows)?;
            Ok(render_table(&rows))
        }
    }
}
