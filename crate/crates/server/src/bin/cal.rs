use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use cal_core::config::{self, ConfigError, ValidationReport};
use cal_core::store::{self, Store};
use cal_server::{router, AppState};

#[derive(Parser)]
#[command(name = "cal", version, about = "Conversational-data labeling service")]
struct Cli {
    /// Data directory holding the projects.
    #[arg(long, global = true, env = "CAL_DATA_DIR", default_value = "./data")]
    data_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 8750)]
        port: u16,
        /// Directory with the built UI, served under `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Check a project or code-set file; exits 1 if it has errors.
    Validate { path: PathBuf },
    /// Create a project from a project file. `data_ref` is read relative to
    /// the file's directory.
    Create {
        path: PathBuf,
        #[arg(long)]
        creator: Option<String>,
    },
    /// Import a transcript file into an existing project.
    Import { project: String, file: PathBuf },
    /// Write CSV exports to `<out>/<annotator>/`.
    Export {
        project: String,
        /// Only this annotator (default: every annotator).
        #[arg(long)]
        annotator: Option<String>,
        #[arg(long, default_value = "./export")]
        out: PathBuf,
    },
    /// Print inter-annotator agreement.
    Agreement {
        project: String,
        /// Also write the report as JSON to this file.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Serve {
            host,
            port,
            static_dir,
        } => serve(&cli.data_dir, &host, port, static_dir),
        Command::Validate { path } => validate(&path),
        Command::Create { path, creator } => {
            let text = read(&path)?;
            let project = config::parse_project(&text).map_err(config_error)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let data = store::resolve_data_ref(base, &project.data_ref);
            let transcripts = read(&data)?;
            let store = Store::open(&cli.data_dir)?;
            let created = match store.create_project(project, creator, &transcripts) {
                Err(store::StoreError::Invalid(report)) => {
                    print_report(&report);
                    return Ok(ExitCode::FAILURE);
                }
                other => other?,
            };
            println!(
                "created {} with {} conversations",
                created.id(),
                created.conversations().len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Import { project, file } => {
            let text = read(&file)?;
            let mut p = Store::open(&cli.data_dir)?.open_project(&project)?;
            let n = p.import_conversations(&text)?;
            println!("imported {n} conversations into {project}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Export {
            project,
            annotator,
            out,
        } => {
            let p = Store::open(&cli.data_dir)?.open_project(&project)?;
            let annotators = match annotator {
                Some(a) => {
                    if p.role(&a).is_none() {
                        bail!("`{a}` is not a member of {project}");
                    }
                    vec![a]
                }
                None => p.config().annotators.clone(),
            };
            for a in annotators {
                let dir = out.join(&a);
                std::fs::create_dir_all(&dir)?;
                let file = dir.join(format!("{project}.csv"));
                std::fs::write(&file, store::export_utterances_csv(&p, &a)?)?;
                println!("{}", file.display());
                if let Some(csv) = store::export_conversations_csv(&p, &a)? {
                    let file = dir.join(format!("{project}-conversations.csv"));
                    std::fs::write(&file, csv)?;
                    println!("{}", file.display());
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Agreement { project, json } => {
            let p = Store::open(&cli.data_dir)?.open_project(&project)?;
            let report = p.agreement()?;
            print!("{}", report.to_text());
            if let Some(path) = json {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn config_error(e: ConfigError) -> anyhow::Error {
    anyhow::anyhow!("{}: {e}", e.path())
}

fn print_report(report: &ValidationReport) {
    for line in report.lines() {
        println!("{line}");
    }
}

/// Accepts either a project file (it has `code_sets`) or a bare code set.
fn validate(path: &Path) -> anyhow::Result<ExitCode> {
    let text = read(path)?;
    let is_project = serde_json::from_str::<serde_json::Value>(&text)
        .ok()
        .and_then(|v| v.as_object().map(|o| o.contains_key("code_sets")))
        .unwrap_or(false);
    let report = if is_project {
        config::parse_project(&text).map(|p| config::validate_project(&p))
    } else {
        config::parse_code_set(&text).map(|c| config::check_code_set(&c))
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            println!("ERROR {}: {e}", e.path());
            return Ok(ExitCode::FAILURE);
        }
    };
    print_report(&report);
    Ok(if report.is_ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn serve(data_dir: &Path, host: &str, port: u16, static_dir: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let store = Store::open(data_dir)?;
    let app = router(AppState::new(store), static_dir);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("binding {host}:{port}"))?;
        tracing::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    Ok(ExitCode::SUCCESS)
}
