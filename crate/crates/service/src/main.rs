use clap::Parser;
use latscape_service::cli::{execute, Cli};

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Some(text) = execute(Cli::parse())? {
        println!("{}", text.trim_end());
    }
    Ok(())
}
