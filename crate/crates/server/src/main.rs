use aesthetic_captcha_server::cli::{run_attack, serve, Cli, Command};
use clap::Parser;
use tracing_subscriber::EnvFilter;

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();

    match Cli::parse().command {
        Command::Serve(args) => tokio::runtime::Runtime::new()?.block_on(serve(args)),
        // Attacks use a blocking HTTP client, so they stay off the runtime.
        Command::Attack(cmd) => {
            print!("{}", run_attack(&cmd)?);
            Ok(())
        }
    }
}
