use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use parbci_hub::log::SessionKind;
use parbci_hub::session::{self, SessionSummary};
use parbci_hub::{console, HubError, SessionConfig};

#[derive(Parser)]
#[command(
    name = "parbci",
    version,
    about = "Pupil and motor-imagery BCI sessions"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct Common {
    /// Session config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `session_hub.output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write the scenario's EEG stream, pupil trace and frames.
    Simulate(Common),
    /// Free-use session.
    Run(Common),
    /// Neurofeedback training session.
    Train(Common),
    /// Re-run a session from its log and compare.
    Replay {
        log: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a session with an operator console attached.
    Serve {
        #[command(flatten)]
        common: Common,
        /// Overrides `session_hub.listen`.
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        training: bool,
    },
    /// Recompute the metrics record of a session log.
    Metrics { log: PathBuf },
}

fn load(c: &Common) -> Result<SessionConfig, HubError> {
    let mut cfg = SessionConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.set_seed(seed);
    }
    if let Some(out) = &c.out {
        cfg.session_hub.output_dir = out.clone();
    }
    Ok(cfg)
}

fn report(s: &SessionSummary) {
    println!("log: {}", s.log.display());
    println!("snapshot: {}", s.snapshot.display());
    println!("actions: {}", s.outcome.actions);
}

fn main_inner(cli: Cli) -> Result<(), HubError> {
    match cli.command {
        Cmd::Simulate(c) => {
            let cfg = load(&c)?;
            for p in session::simulate(&cfg, &cfg.session_hub.output_dir)? {
                println!("{}", p.display());
            }
        }
        Cmd::Run(c) => report(&session::run(&load(&c)?, SessionKind::FreeUse)?),
        Cmd::Train(c) => report(&session::run(&load(&c)?, SessionKind::Training)?),
        Cmd::Replay { log, out } => {
            let r = session::replay(&log, &out)?;
            println!("records: {}", r.lines.len());
            match r.first_difference {
                None => println!("identical to {}", log.display()),
                Some(seq) => {
                    return Err(HubError::Runtime(format!("replay diverges at seq {seq}")))
                }
            }
        }
        Cmd::Serve {
            common,
            listen,
            training,
        } => {
            let mut cfg = load(&common)?;
            if let Some(l) = listen {
                cfg.session_hub.listen = l;
            }
            let listener = TcpListener::bind(&cfg.session_hub.listen).map_err(|e| {
                HubError::Config(format!("cannot listen on {}: {e}", cfg.session_hub.listen))
            })?;
            eprintln!("waiting for a console on {}", listener.local_addr()?);
            let kind = if training {
                SessionKind::Training
            } else {
                SessionKind::FreeUse
            };
            report(&console::serve(&cfg, listener, kind)?);
        }
        Cmd::Metrics { log } => match session::recompute_metrics(Path::new(&log))? {
            Some(body) => println!("{}", serde_json::to_string(&body).expect("serializes")),
            None => return Err(HubError::Runtime("the session has no metrics".into())),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = if e.use_stderr() { 1 } else { 0 };
            return ExitCode::from(code);
        }
    };
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
