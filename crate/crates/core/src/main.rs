use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use traffic_xai::dataset::{feature_matrix, read_csv_file, split};
use traffic_xai::explanation::ExplanationMethod;
use traffic_xai::forest::{load_file, save_file, train, ForestConfig, SplitSpec, DEFAULT_MODEL_FILE};
use traffic_xai::render::plain_text;
use traffic_xai::service::{compute_explanation, http, ExplainService, ExplainerConfig, ModelContext, ServiceConfig};

const DEFAULT_DATA_FILE: &str = "UTD19.csv";

#[derive(Parser)]
#[command(name = "traffic-xai", version, about = "Traffic-flow prediction with accessible explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a random forest and write the model artifact.
    Train(TrainArgs),
    /// Serve the HTTP API (and optionally a static UI bundle).
    Serve(ServeArgs),
    /// Print predicted flow for the inference rows.
    Predict(PredictArgs),
    /// Explain one prediction.
    Explain(ExplainArgs),
}

#[derive(clap::Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = DEFAULT_MODEL_FILE)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Fraction of rows used for training; the rest become inference rows.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_samples_leaf: usize,
}

#[derive(clap::Args)]
struct Inputs {
    #[arg(long, env = "MODEL_PATH", default_value = DEFAULT_MODEL_FILE)]
    model: PathBuf,
    #[arg(long, env = "DATA_PATH", default_value = DEFAULT_DATA_FILE)]
    data: PathBuf,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, env = "PORT", default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "0.0.0.0")]
    host: std::net::IpAddr,
    #[command(flatten)]
    inputs: Inputs,
    /// Directory with the static UI bundle served at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PredictArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value_t = 10)]
    limit: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(clap::Args)]
struct ExplainArgs {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long)]
    row: usize,
    #[arg(long, value_parser = parse_method)]
    method: ExplanationMethod,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

fn parse_method(s: &str) -> Result<ExplanationMethod, String> {
    s.parse().map_err(|e: traffic_xai::explanation::UnknownMethod| e.to_string())
}

type CliResult = Result<(), String>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Serve(a) => cmd_serve(a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Explain(a) => cmd_explain(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn metrics_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".metrics");
    PathBuf::from(name)
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let data = read_csv_file(&a.data).map_err(|e| format!("{}: {e}", a.data.display()))?;
    let (train_set, inference) = split(&data, a.split, a.seed).map_err(|e| e.to_string())?;
    let x = feature_matrix(&train_set);
    let y = train_set.flows();
    let cfg = ForestConfig {
        n_trees: a.trees,
        max_depth: a.max_depth,
        min_samples_leaf: a.min_samples_leaf,
        bootstrap_seed: a.seed,
    };
    let mut forest = train(&x, &y, &cfg).map_err(|e| e.to_string())?;
    forest.split = Some(SplitSpec {
        train_fraction: a.split,
        seed: a.seed,
    });
    let fitted = forest.predict_batch(&x);
    let mse = fitted.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64;

    save_file(&forest, &a.out).map_err(|e| format!("{}: {e}", a.out.display()))?;
    let line = format!(
        "train_rows={} inference_rows={} training_mse={mse}",
        train_set.len(),
        inference.len()
    );
    let sidecar = metrics_path(&a.out);
    std::fs::write(&sidecar, format!("{line}\n")).map_err(|e| format!("{}: {e}", sidecar.display()))?;
    println!("{line}");
    Ok(())
}

fn load_context(inputs: &Inputs, cfg: &ExplainerConfig) -> Result<ModelContext, String> {
    let forest = load_file(&inputs.model).map_err(|e| format!("{}: {e}", inputs.model.display()))?;
    let data = read_csv_file(&inputs.data).map_err(|e| format!("{}: {e}", inputs.data.display()))?;
    ModelContext::from_dataset(Arc::new(forest), &data, &cfg.shap).map_err(|e| e.to_string())
}

fn cmd_predict(a: &PredictArgs) -> CliResult {
    let ctx = load_context(&a.inputs, &ExplainerConfig::default())?;
    let mut out = String::new();
    for row in ctx.prediction_table().into_iter().take(a.limit) {
        let _ = writeln!(
            out,
            "{}: flow={:.1} city={} detector={} speed={:.1} occ={:.4}",
            row.row_id, row.pred_flow, row.city, row.detector, row.speed, row.occupancy
        );
    }
    print!("{out}");
    Ok(())
}

fn cmd_explain(a: &ExplainArgs) -> CliResult {
    let cfg = ExplainerConfig::default();
    let ctx = load_context(&a.inputs, &cfg)?;
    let x = ctx.features_of(a.row).map_err(|_| {
        format!(
            "row {} is out of range; {} inference rows available",
            a.row,
            ctx.features.len()
        )
    })?;
    let e = compute_explanation(&ctx.forest, &ctx.background, &x, a.method, &cfg).map_err(|e| e.to_string())?;
    match a.format {
        Format::Text => print!("{}", plain_text(&e)),
        Format::Json => println!("{}", e.to_json()),
    }
    Ok(())
}

fn cmd_serve(a: ServeArgs) -> CliResult {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    runtime.block_on(async move {
        let addr = SocketAddr::new(a.host, a.port);
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| format!("cannot bind {addr}: {e}"))?;
        let config = ServiceConfig::new(a.inputs.model, a.inputs.data);
        let service = tokio::task::spawn_blocking(move || ExplainService::open(config))
            .await
            .map_err(|e| e.to_string())?;
        if let Err(e) = service.context() {
            eprintln!("warning: {e}");
        }
        let local = listener.local_addr().map_err(|e| e.to_string())?;
        eprintln!("listening on http://{local}");
        let app = http::router(Arc::new(service), a.ui_dir);
        http::serve(listener, app, shutdown_signal())
            .await
            .map_err(|e| e.to_string())
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        () = ctrl_c => {}
        () = terminate => {}
    }
}
