//! Benchmark CLI: synthesize datasets, run privacy-utility sweeps, aggregate
//! frontiers, look up parameters under distortion constraints, build the
//! adversary-variant matrix, and print run summaries.
//!
//! Exit codes: 0 success, 1 configuration error, 2 partial failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sigmapriv::bench::{self, DatasetSource, LookupResult, SweepConfig};
use sigmapriv::dataset;
use sigmapriv::Error;

#[derive(Parser)]
#[command(name = "sigmapriv", version, about = "Privacy-utility tradeoff benchmark for signal-strength measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV from the config's dataset section.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Override the dataset seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the full parameter sweep and write tradeoff.csv + run_manifest.json.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Aggregate an existing tradeoff.csv into per-privatizer frontier files.
    Frontier {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Per-privatizer parameter meeting a distortion bound (-U1 <= PARAM).
    Lookup {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Distortion bound.
        #[arg(long)]
        param: f64,
        /// Restrict output to one privatizer.
        #[arg(long)]
        privatizer: Option<String>,
    },
    /// Adversary-variant matrix at a matched composite utility.
    Variants {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Target composite utility (e.g. -2.5).
        #[arg(long, default_value_t = -2.5, allow_hyphen_values = true)]
        param: f64,
    },
    /// Summarize sweep results and export the (lat, lon, mean-RSS) grid.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Heat-map grid resolution per axis.
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
}

fn load_config(path: &Path) -> Result<SweepConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    SweepConfig::from_json(&text)
}

fn out_dir(cfg: &SweepConfig, flag: &Option<PathBuf>) -> PathBuf {
    flag.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir))
}

fn read_rows(dir: &Path) -> Result<Vec<bench::TradeoffRow>, Error> {
    let path = dir.join("tradeoff.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| {
        Error::Config(format!("cannot read {} (run `sweep` first): {e}", path.display()))
    })?;
    bench::parse_tradeoff_csv(&text)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Synth { config, seed, out_dir: dir } => {
            let cfg = load_config(&config)?;
            let source = match (&cfg.dataset, seed) {
                (DatasetSource::Synthetic { k, n, seed: s, config: sc }, over) => {
                    DatasetSource::Synthetic {
                        k: *k,
                        n: *n,
                        seed: over.unwrap_or(*s),
                        config: sc.clone(),
                    }
                }
                (DatasetSource::Csv { .. }, _) => {
                    return Err(Error::Config(
                        "synth needs a synthetic dataset section in the config".into(),
                    ))
                }
            };
            let d = bench::load_dataset(&source)?;
            let dir = out_dir(&cfg, &dir);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join("synthetic.csv");
            dataset::write_csv(&d, &path)?;
            println!("wrote {} ({} rows, {} users)", path.display(), d.n(), d.k);
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep { config, out_dir: dir } => {
            let cfg = load_config(&config)?;
            let outcome = bench::run_sweep(&cfg)?;
            let dir = out_dir(&cfg, &dir);
            bench::write_sweep_outputs(&cfg, &outcome, &dir)?;
            println!(
                "sweep complete: {} rows, {} failures -> {}",
                outcome.rows.len(),
                outcome.failures.len(),
                dir.join("tradeoff.csv").display()
            );
            for f in &outcome.failures {
                eprintln!(
                    "failed: {} parameter={} seed={}: {}",
                    f.privatizer, f.parameter, f.seed, f.error
                );
            }
            Ok(if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Frontier { config, out_dir: dir } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, &dir);
            let rows = read_rows(&dir)?;
            let curves = bench::frontier(&rows)?;
            bench::write_frontier_outputs(&curves, &dir)?;
            for c in &curves {
                println!("frontier_{}.csv: {} points", c.privatizer, c.points.len());
            }
            println!("wrote {}", dir.join("frontier.svg").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Lookup { config, out_dir: dir, param, privatizer } => {
            let cfg = load_config(&config)?;
            let rows = read_rows(&out_dir(&cfg, &dir))?;
            let results = bench::param_for_distortion(&rows, param)?;
            let mut any = false;
            for (name, res) in &results {
                if let Some(only) = &privatizer {
                    if name != only {
                        continue;
                    }
                }
                any = true;
                match res {
                    LookupResult::Parameter { value, expected_privacy } => println!(
                        "{name}: parameter {value} (expected privacy {expected_privacy})"
                    ),
                    LookupResult::OutOfRange { min_distortion, max_distortion } => println!(
                        "{name}: target {param} outside swept distortion range [{min_distortion}, {max_distortion}]"
                    ),
                }
            }
            if !any {
                return Err(Error::Config(format!(
                    "no sweep rows for privatizer {:?}",
                    privatizer.unwrap_or_default()
                )));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Variants { config, out_dir: dir, param } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, &dir);
            let rows = read_rows(&dir)?;
            let matrix = bench::variant_matrix(&cfg, &rows, param)?;
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("variants.csv"), bench::variants_csv(&matrix))?;
            println!(
                "wrote {} ({} cells, {} notes)",
                dir.join("variants.csv").display(),
                matrix.cells.len(),
                matrix.notes.len()
            );
            for note in &matrix.notes {
                eprintln!("note: {note}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { config, out_dir: dir, bins } => {
            let cfg = load_config(&config)?;
            let dir = out_dir(&cfg, &dir);
            let d = bench::load_dataset(&cfg.dataset)?;
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("heatmap.csv"), bench::heatmap_csv(&d, bins)?)?;
            println!("wrote {}", dir.join("heatmap.csv").display());
            if let Ok(rows) = read_rows(&dir) {
                for c in bench::frontier(&rows)? {
                    let best = c
                        .points
                        .iter()
                        .map(|p| p.u_mean)
                        .fold(f64::NEG_INFINITY, f64::max);
                    println!(
                        "{}: {} parameters, {} rows, best mean utility {best:.4}",
                        c.privatizer,
                        c.points.len(),
                        c.points.iter().map(|p| p.seeds).sum::<usize>()
                    );
                }
            } else {
                println!("no tradeoff.csv yet; dataset has {} rows, {} users", d.n(), d.k);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
