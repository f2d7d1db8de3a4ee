//! `gdo`: runs experiments through the service, either a remote one given by
//! `--server` or one embedded in this process.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};

use gdo_client::api::{ApiError, JobOp, JobState};
use gdo_client::{Client, ClientError};
use gdo_core::harness::{self, Artifacts, ExperimentConfig, ABLATION_MD_FILE, SUMMARY_MD_FILE};

#[derive(Parser)]
#[command(name = "gdo", version, about = "Gradual domain osmosis experiments")]
struct Cli {
    /// Service URL; an in-process server is started when omitted.
    #[arg(long, global = true, env = "GDO_SERVER")]
    server: Option<String>,

    /// Upper bound on worker threads per experiment.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full grid and write results, per-domain accuracies and a summary.
    Run(GridArgs),
    /// Run the grid and write one n_given × inter_steps matrix per method.
    Ablate(GridArgs),
    /// Write the Lyapunov trace, drift report and bound curves.
    Theory(GridArgs),
    /// Re-aggregate a saved results CSV.
    Report {
        results: PathBuf,
        /// Output directory (default: next to the results file).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dataset management.
    Data {
        #[command(subcommand)]
        command: DataCommand,
    },
}

#[derive(clap::Args)]
struct GridArgs {
    config: PathBuf,
    /// Output directory (default: the config's output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum DataCommand {
    /// Download (or verify pre-placed) MNIST IDX files.
    FetchMnist {
        #[arg(long, default_value = harness::DEFAULT_MNIST_DIR)]
        dir: PathBuf,
        /// Mirror URL or local directory holding the (optionally gzipped) files.
        #[arg(long)]
        base_url: Option<String>,
    },
}

/// A failure ready to print: one-line category plus exit code.
struct Failure {
    code: u8,
    error: ApiError,
}

impl Failure {
    fn api(error: ApiError) -> Self {
        let code = if error.is_config() { 2 } else { 1 };
        Failure { code, error }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Self {
        match e {
            ClientError::Api { error, .. } => Failure::api(error),
            other => Failure::api(ApiError::new(other.category(), other.to_string())),
        }
    }
}

impl From<gdo_core::Error> for Failure {
    fn from(e: gdo_core::Error) -> Self {
        Failure::api(ApiError::from_core(&e))
    }
}

fn write_artifacts(artifacts: &Artifacts, dir: &Path) -> Result<(), Failure> {
    artifacts.write_to(dir)?;
    eprintln!("wrote {} files to {}", artifacts.files.len(), dir.display());
    Ok(())
}

/// Reads and checks a config locally so config errors surface before any
/// work is queued. Data files are checked by whichever server runs the job.
fn load_config(path: &Path) -> Result<(ExperimentConfig, serde_json::Value), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => gdo_core::Error::ConfigNotFound(path.to_path_buf()),
        _ => gdo_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })?;
    let cfg = harness::parse_config_str(&text)?;
    let value = serde_json::from_str(&text).expect("config already parsed as JSON");
    Ok((cfg, value))
}

async fn grid(client: &Client, op: JobOp, args: GridArgs, threads: Option<usize>) -> Result<(), Failure> {
    let (cfg, value) = load_config(&args.config)?;
    let job = client.submit(op, value, threads).await?;
    let status = client.wait(&job.id, Duration::from_millis(100)).await?;
    if status.state == JobState::Failed {
        let error = status.error.unwrap_or_else(|| ApiError::new("internal", "job failed without a reason"));
        return Err(Failure::api(error));
    }
    let artifacts = status.artifacts.unwrap_or_default();
    write_artifacts(&artifacts, args.out.as_deref().unwrap_or(&cfg.output_dir))?;
    for name in [SUMMARY_MD_FILE, ABLATION_MD_FILE] {
        if let Some(md) = artifacts.get(name) {
            println!("{md}");
        }
    }
    if let Some(drift) = artifacts.get(harness::DRIFT_FILE) {
        println!("{drift}");
    }
    if !status.failures.is_empty() {
        for f in &status.failures {
            eprintln!(
                "cell failed: method={} n_given={} inter_steps={} seed={}: {}",
                f.method.name(),
                f.n_given,
                f.inter_steps,
                f.seed,
                f.error
            );
        }
        return Err(Failure::api(ApiError::new(
            "cell-failure",
            format!("{} grid cell(s) failed; see manifest.json", status.failures.len()),
        )));
    }
    Ok(())
}

async fn dispatch(cli: Cli) -> Result<(), Failure> {
    let (client, _server) = match cli.server {
        Some(url) => (Client::new(url), None),
        None => {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| {
                Failure::api(ApiError::new("io", format!("cannot start embedded server: {e}")))
            })?;
            let addr = listener.local_addr().expect("bound listener has an address");
            let server = tokio::spawn(gdo_server::serve(listener, gdo_server::AppState::new(cli.threads)));
            (Client::new(format!("http://{addr}")), Some(server))
        }
    };
    match cli.command {
        Command::Run(args) => grid(&client, JobOp::Run, args, cli.threads).await,
        Command::Ablate(args) => grid(&client, JobOp::Ablate, args, cli.threads).await,
        Command::Theory(args) => grid(&client, JobOp::Theory, args, cli.threads).await,
        Command::Report { results, out } => {
            let text = std::fs::read_to_string(&results).map_err(|e| gdo_core::Error::Io {
                path: results.clone(),
                source: e,
            })?;
            let reply = client.report(text).await?;
            let dir = out.unwrap_or_else(|| results.parent().map(Path::to_path_buf).unwrap_or_default());
            write_artifacts(&reply.artifacts, &dir)?;
            if let Some(md) = reply.artifacts.get(SUMMARY_MD_FILE) {
                println!("{md}");
            }
            Ok(())
        }
        Command::Data {
            command: DataCommand::FetchMnist { dir, base_url },
        } => {
            let dir = std::path::absolute(&dir).unwrap_or(dir);
            let reply = client.fetch_mnist(dir.display().to_string(), base_url).await?;
            for f in &reply.files {
                let release = f.release.as_deref().map(|r| format!(" ({r})")).unwrap_or_default();
                println!("{:?}\t{}\t{}{release}", f.status, f.sha256, f.name);
            }
            Ok(())
        }
    }
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}: {}", f.error.category, f.error.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}
