//! Command-line entry points: `preprocess`, `serve` and `export`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use remap_core::codec::{structure_key, structure_seed};
use remap_core::trainer::TrainingMode;
use remap_core::{sample_batch, train, Metric, TrainingConfig, TransitionModel};

use crate::dataset::{load_from_manifest, Manifest};
use crate::event::{now_ms, Event};
use crate::export;
use crate::service::Service;
use crate::session::{self, Session, JOURNAL_FILE};

#[derive(Debug, Parser)]
#[command(name = "remap", version, about = "Interactive search over small image classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample, train and embed an initial set of models.
    Preprocess(PreprocessArgs),
    /// Run the HTTP service over a session.
    Serve(ServeArgs),
    /// Write distances, embeddings or models to a file.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dataset manifest (JSON).
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 10)]
    pub epochs: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Use the deterministic surrogate instead of real training.
    #[arg(long)]
    pub surrogate: bool,
    #[arg(long, env = "REMAP_SESSION_DIR")]
    pub session: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "REMAP_SESSION_DIR")]
    pub session: PathBuf,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum What {
    Distances,
    Embeddings,
    Models,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Structural,
    Prediction,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long, env = "REMAP_SESSION_DIR")]
    pub session: PathBuf,
    #[arg(long, value_enum)]
    pub what: What,
    #[arg(long)]
    pub out: PathBuf,
    /// Which distance matrix to write with `--what distances`.
    #[arg(long, value_enum, default_value = "structural")]
    pub metric: MetricArg,
}

/// Failure of a data or runtime step; the process exits with code 2.
#[derive(Debug)]
pub struct DataError(pub anyhow::Error);

impl<E: Into<anyhow::Error>> From<E> for DataError {
    fn from(e: E) -> Self {
        DataError(e.into())
    }
}

pub fn run(cli: Cli) -> Result<(), DataError> {
    match cli.command {
        Command::Preprocess(args) => preprocess(&args),
        Command::Serve(args) => serve(&args),
        Command::Export(args) => export(&args),
    }
}

fn require_session_dir(dir: &Path) -> Result<(), DataError> {
    if !dir.is_dir() {
        return Err(anyhow!("session directory {} does not exist", dir.display()).into());
    }
    if !dir.join(JOURNAL_FILE).is_file() {
        return Err(anyhow!("{} is not a session directory (no {JOURNAL_FILE})", dir.display()).into());
    }
    Ok(())
}

pub fn preprocess(args: &PreprocessArgs) -> Result<(), DataError> {
    let manifest_path = std::fs::canonicalize(&args.dataset)
        .with_context(|| format!("dataset manifest {}", args.dataset.display()))?;
    let manifest = Manifest::read(&manifest_path)?.resolved(manifest_path.parent().unwrap_or(Path::new("/")));
    let dataset = load_from_manifest(&manifest)?;
    let mode = if args.surrogate { TrainingMode::Surrogate } else { TrainingMode::Real };
    let config = TrainingConfig { epochs: args.epochs, seed: args.seed, mode, ..TrainingConfig::default() };
    config.check()?;

    let mut session = if args.session.join(JOURNAL_FILE).exists() {
        let s = Session::open(&args.session)?;
        let stored = &s.state.config;
        if stored.epochs != config.epochs || stored.seed != config.seed || stored.mode != config.mode {
            return Err(anyhow!(
                "session {} was created with --epochs {} --seed {}{}; rerun with the same flags to resume",
                args.session.display(),
                stored.epochs,
                stored.seed,
                if stored.mode == TrainingMode::Surrogate { " --surrogate" } else { "" }
            )
            .into());
        }
        if s.state.dataset != manifest {
            return Err(anyhow!("session {} uses a different dataset", args.session.display()).into());
        }
        s
    } else {
        Session::create(&args.session, manifest, config.clone())?
    };

    let archs = sample_batch(&TransitionModel::default(), args.count, args.seed, dataset.input_shape, dataset.num_classes())?;
    let n = archs.len();
    let (mut trained, mut skipped) = (0usize, 0usize);
    for (i, arch) in archs.into_iter().enumerate() {
        let key = structure_key(&arch);
        let existing = session.state.model_by_structure(&key).cloned();
        if let Some(m) = existing.as_ref().filter(|m| m.is_complete()) {
            println!("[{:>3}/{n}] {} already trained, skipping", i + 1, m.id);
            skipped += 1;
            continue;
        }
        let model_id = match existing {
            Some(m) => m.id,
            None => {
                let model_id = session.state.next_model_id();
                let mut architecture = arch.clone();
                architecture.created_at = now_ms();
                session.commit(Event::ModelAdded { model_id: model_id.clone(), architecture })?;
                model_id
            }
        };
        let run_config = TrainingConfig { seed: config.seed ^ structure_seed(&arch), ..config.clone() };
        let started = Instant::now();
        let mut record = train(&arch, &dataset, &run_config, &mut ())?;
        record.wall_time_ms = started.elapsed().as_millis() as u64;
        let line = format!(
            "[{:>3}/{n}] {model_id} layers={} params={} acc={:.4} {:.1}s",
            i + 1,
            arch.layers.len(),
            record.param_count,
            record.final_accuracy(),
            started.elapsed().as_secs_f64()
        );
        session.commit(Event::RecordFinished { model_id, job_id: None, config: run_config, record })?;
        println!("{line}");
        trained += 1;
    }
    if trained > 0 || session.state.embeddings.is_empty() {
        session.commit(Event::ProjectionsRefit)?;
    }
    println!(
        "session {}: {} models, {trained} trained, {skipped} already present",
        args.session.display(),
        session.state.models.len().max(n)
    );
    Ok(())
}

pub fn serve(args: &ServeArgs) -> Result<(), DataError> {
    require_session_dir(&args.session)?;
    let service = Service::open(&args.session, args.workers)?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let addr = format!("{}:{}", args.host, args.port);
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        println!("serving {} on http://{}", args.session.display(), listener.local_addr()?);
        let app = crate::http::router(service.clone());
        let stopper = service.clone();
        axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = tokio::signal::ctrl_c().await;
                let _ = tokio::task::spawn_blocking(move || stopper.shutdown()).await;
            })
            .await?;
        anyhow::Ok(())
    })?;
    service.shutdown();
    Ok(())
}

pub fn export(args: &ExportArgs) -> Result<(), DataError> {
    require_session_dir(&args.session)?;
    let state = session::load(&args.session)?;
    match args.what {
        What::Distances => {
            let metric = match args.metric {
                MetricArg::Structural => Metric::Structural,
                MetricArg::Prediction => Metric::Prediction,
            };
            export::write_distances(state.matrix(metric), &args.out)?
        }
        What::Embeddings => export::write_embeddings(&state, &args.out)?,
        What::Models => export::write_models(&state, &args.out)?,
    }
    Ok(())
}
