use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use nds_cli::commands::{self, E2eArgs, RecommendArgs};
use nds_cli::{bundle, CliError, Client};
use nds_core::experts::{ExpertKind, TrainConfig};
use nds_core::fastadapt::{Mode, ProbeConfig};
use nds_core::gating::GatingConfig;
use nds_core::protocol::{parse_dataset_ref, BuildRequest};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "nds", version, about = "Neural data server client")]
struct Cli {
    /// Base URL of the dataserver.
    #[arg(long, global = true, env = "SERVER_URL", default_value = "http://127.0.0.1:8080")]
    server: String,
    /// More log output on stderr; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Proxy,
    Probe,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Proxy => Mode::Proxy,
            ModeArg::Probe => Mode::Probe,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Unsupervised,
    Superclass,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Rotation,
    TaskSpecific,
}

#[derive(clap::Args)]
struct BudgetArgs {
    /// Number of items to recommend.
    #[arg(long)]
    budget: usize,
    /// Optional cap on the total size of the recommended items.
    #[arg(long)]
    budget_bytes: Option<u64>,
    /// Softmax temperature; the server default applies when omitted.
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long, env = "SEED")]
    seed: Option<u64>,
}

impl From<&BudgetArgs> for RecommendArgs {
    fn from(b: &BudgetArgs) -> Self {
        RecommendArgs {
            budget: b.budget,
            budget_bytes: b.budget_bytes,
            temperature: b.temperature,
            seed: b.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Download and verify the experts of one or more datasets.
    Fetch {
        /// Comma-separated dataset ids.
        #[arg(long)]
        datasets: String,
        #[arg(long, default_value = "nds-out/bundle")]
        out: PathBuf,
    },
    /// Score cached experts on a local target manifest.
    Adapt {
        #[arg(long, default_value = "nds-out/bundle")]
        bundle: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value = "proxy")]
        mode: ModeArg,
        #[arg(long, default_value = "nds-out")]
        out: PathBuf,
    },
    /// Send a report and save the recommended URLs.
    Recommend {
        #[arg(long, default_value = "nds-out/report.json")]
        report: PathBuf,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value = "nds-out")]
        out: PathBuf,
    },
    /// fetch, adapt and recommend in one command.
    E2e {
        #[arg(long)]
        datasets: String,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_enum, default_value = "proxy")]
        mode: ModeArg,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, default_value = "nds-out")]
        out: PathBuf,
    },
    /// List the datasets known to the server.
    Datasets,
    /// Upload a source manifest (JSONL).
    Register {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Index a registered dataset: partition it and train its experts.
    Build {
        #[arg(long)]
        dataset: String,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value = "unsupervised")]
        scheme: SchemeArg,
        #[arg(long, value_enum, default_value = "rotation")]
        kind: KindArg,
        /// Seed for gating and expert training.
        #[arg(long, default_value_t = 0)]
        build_seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        /// Return as soon as the build has started.
        #[arg(long)]
        no_wait: bool,
    },
    /// Run a dataserver on this machine.
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

fn build_request(
    scheme: SchemeArg,
    kind: KindArg,
    k: usize,
    seed: u64,
    epochs: Option<usize>,
    hidden: Option<usize>,
) -> BuildRequest {
    let gating_cfg = match scheme {
        SchemeArg::Unsupervised => GatingConfig::unsupervised(k, seed),
        SchemeArg::Superclass => GatingConfig::superclass(k, seed),
    };
    let defaults = TrainConfig::default();
    BuildRequest {
        gating_cfg,
        train_cfg: TrainConfig {
            seed,
            epochs: epochs.unwrap_or(defaults.epochs),
            hidden: hidden.unwrap_or(defaults.hidden),
            ..defaults
        },
        expert_kind: match kind {
            KindArg::Rotation => ExpertKind::Rotation,
            KindArg::TaskSpecific => ExpertKind::TaskSpecific,
        },
    }
}

fn datasets_arg(list: &str) -> Result<Vec<String>, CliError> {
    let ids = parse_dataset_ref(list);
    if ids.is_empty() {
        return Err(CliError::Usage("--datasets needs at least one dataset id".into()));
    }
    Ok(ids)
}

fn stdout(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
    let _ = out.flush();
}

fn serve(store: PathBuf, addr: SocketAddr) -> Result<(), CliError> {
    let registry = nds_server::Registry::open(&store).map_err(|e| CliError::Data(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io(&store, e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| CliError::Network {
                url: addr.to_string(),
                message: e.to_string(),
            })?;
        let bound = listener.local_addr().map_err(|e| CliError::io(&store, e))?;
        stdout(&format!("listening on http://{bound}\n"));
        nds_server::serve(registry, listener)
            .await
            .map_err(|e| CliError::io(&store, e))
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let client = Client::new(&cli.server);
    match cli.command {
        Command::Fetch { datasets, out } => {
            let bundle = bundle::fetch(&client, &datasets_arg(&datasets)?, &out)?;
            let mut table = format!(
                "{:>6}  {:<20} {:>6} {:>8}  {}\n",
                "expert", "dataset", "subset", "size", "sha256"
            );
            for e in &bundle.experts {
                table += &format!(
                    "{:>6}  {:<20} {:>6} {:>8}  {}\n",
                    e.index,
                    e.dataset,
                    e.subset,
                    e.size,
                    &e.sha256[..12]
                );
            }
            stdout(&table);
        }
        Command::Adapt {
            bundle,
            target,
            mode,
            out,
        } => {
            let report = commands::adapt(&bundle, &target, mode.into(), &ProbeConfig::default(), &out)?;
            let mut table = format!("{:>6} {:>8}\n", "expert", "z");
            for (i, z) in report.z.iter().enumerate() {
                table += &format!("{i:>6} {z:>8.4}\n");
            }
            stdout(&table);
        }
        Command::Recommend { report, budget, out } => {
            let report = commands::read_report(&report)?;
            let rec = commands::recommend(&client, report.clone(), &(&budget).into(), &out)?;
            stdout(&commands::weight_table(&report, &rec));
        }
        Command::E2e {
            datasets,
            target,
            mode,
            budget,
            out,
        } => {
            let args = E2eArgs {
                datasets: datasets_arg(&datasets)?,
                target,
                mode: mode.into(),
                probe: ProbeConfig::default(),
                recommend: (&budget).into(),
                out,
            };
            let (report, rec) = commands::e2e(&client, &args)?;
            stdout(&commands::weight_table(&report, &rec));
        }
        Command::Datasets => stdout(&commands::dataset_table(&client.datasets()?)),
        Command::Register { manifest } => {
            let summary = commands::register(&client, &manifest)?;
            stdout(&commands::dataset_table(&[summary]));
        }
        Command::Build {
            dataset,
            k,
            scheme,
            kind,
            build_seed,
            epochs,
            hidden,
            no_wait,
        } => {
            let request = build_request(scheme, kind, k, build_seed, epochs, hidden);
            let wait = (!no_wait).then_some(Duration::from_millis(200));
            let summary = commands::build(&client, &dataset, &request, wait)?;
            stdout(&commands::dataset_table(&[summary]));
        }
        Command::Serve { store, addr } => serve(store, addr)?,
    }
    Ok(())
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    let default = match cli.verbose {
        0 => "warn,nds_cli=info,nds_server=info",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("NDS_LOG").unwrap_or_else(|_| EnvFilter::new(default)))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .with_target(false)
        .init();
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            std::process::ExitCode::from(err.exit_code() as u8)
        }
    }
}
