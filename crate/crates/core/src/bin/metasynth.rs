use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use metasynth::metrics::{compare_methods, load_rankings};
use metasynth::pipeline::BatchStatus;
use metasynth::{build_library, load_config, load_pages, Error, ErrorCode, ExemplarLibrary, MetaSynth};

#[derive(Parser)]
#[command(name = "metasynth", version, about = "Generate search meta titles and descriptions from an exemplar library")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Harvest search results for seed queries into a new library file.
    BuildLibrary {
        /// One query per line; blank lines and `#` comments are skipped.
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a snippet for every page, one result file per page.
    Generate {
        /// JSON-lines page file, or a directory of them.
        #[arg(long)]
        page: PathBuf,
        #[arg(long)]
        library: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Do not write library additions back.
        #[arg(long)]
        freeze_library: bool,
    },
    /// Summarize judged rankings into NDCG, MRR and average rank per method.
    JudgeMetrics {
        #[arg(long)]
        rankings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Config whose `metrics.gain` selects graded or linear gains.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Configuration utilities.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the effective configuration after defaults.
    Show {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code.exit_code() as u8),
        Err(e) => {
            let code = e.code();
            eprintln!("error[{}]: {}", code.as_str(), e.to_string().replace('\n', " "));
            ExitCode::from(code.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> metasynth::Result<ErrorCode> {
    match command {
        Command::BuildLibrary { seeds, config, out } => build(&seeds, &config, &out),
        Command::Generate {
            page,
            library,
            config,
            out,
            freeze_library,
        } => generate(&page, &library, &config, &out, freeze_library),
        Command::JudgeMetrics {
            rankings,
            out,
            config,
        } => {
            let gain = match config {
                Some(c) => load_config(&c)?.settings.metrics.gain,
                None => Default::default(),
            };
            let table = compare_methods(&load_rankings(&rankings)?, gain)?;
            write_json(&out, &table)?;
            print!("{}", table.to_text());
            Ok(ErrorCode::Ok)
        }
        Command::Config {
            action: ConfigAction::Show { config },
        } => {
            let loaded = load_config(&config)?;
            for w in &loaded.warnings {
                eprintln!("warning: unknown config key {w}");
            }
            println!("{}", loaded.settings.to_json());
            Ok(ErrorCode::Ok)
        }
    }
}

fn read_seeds(path: &Path) -> metasynth::Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn build(seeds: &Path, config: &Path, out: &Path) -> metasynth::Result<ErrorCode> {
    let settings = load_config(config)?.settings;
    let seeds = read_seeds(seeds)?;
    let embedder = settings.build_embedder()?;
    let search = settings.build_search(embedder.clone())?;
    let (lib, report) = build_library(&seeds, &*search, embedder, &settings.pipeline)?;
    for (q, why) in &report.skipped {
        eprintln!("skipped seed {q:?}: {why}");
    }
    lib.save(out)?;
    println!(
        "fetched {} deduped {} stored {} queries {}",
        report.stats.fetched,
        report.stats.duplicates,
        lib.len(),
        lib.query_count()
    );
    Ok(ErrorCode::Ok)
}

fn generate(
    pages: &Path,
    library: &Path,
    config: &Path,
    out: &Path,
    freeze: bool,
) -> metasynth::Result<ErrorCode> {
    let settings = load_config(config)?.settings;
    let (ms, embedder) = MetaSynth::from_settings(&settings)?;
    let mut lib = ExemplarLibrary::load(library, embedder)?;
    if lib.dimension() != settings.pipeline.dimension {
        return Err(Error::Config {
            key: "dimension".into(),
            message: format!(
                "library has dimension {}, config says {}",
                lib.dimension(),
                settings.pipeline.dimension
            ),
        });
    }
    let pages = load_pages(pages)?;
    if pages.is_empty() {
        return Err(Error::InvalidArgument("no pages to generate".into()));
    }
    std::fs::create_dir_all(out)?;

    let batch = ms.run_batch(&pages, &mut lib, settings.workers)?;
    for (page_id, outcome) in &batch.pages {
        match outcome {
            Ok(o) => write_json(&out.join(format!("{page_id}.json")), &o.to_result())?,
            Err(e) => eprintln!("page {page_id}: error[{}]: {e}", e.code().as_str()),
        }
    }
    if !freeze && (batch.library_added > 0 || batch.library_queries_added > 0) {
        lib.save(library)?;
    }
    println!(
        "pages {} accepted {} failed {} library_added {}{}",
        batch.pages.len(),
        batch.accepted(),
        batch.failures(),
        batch.library_added,
        if freeze { " (frozen)" } else { "" }
    );
    Ok(match batch.status() {
        BatchStatus::AllOk => ErrorCode::Ok,
        BatchStatus::Partial => ErrorCode::PartialFailure,
        BatchStatus::TotalFailure => ErrorCode::TotalFailure,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> metasynth::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
