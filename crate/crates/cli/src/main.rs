//! `acess` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use acess_core::corpus::{ingest_dir, split_corpus, group_into_documents, ParseOptions, SecurityClass};
use acess_core::experiment::{
    compare_runs, read_paragraph_file, run_experiment, write_paragraph_file, write_split_dir,
    DataConfig, ExperimentConfig, ExperimentError, Level, EXIT_CONFIG,
};
use acess_core::lda::{describe_topics, LdaConfig};
use acess_core::metrics::document_priors;
use acess_core::synth::{generate_synthetic_corpus, SyntheticSpec};

#[derive(Parser)]
#[command(name = "acess", version, about = "Paragraph-level security classification experiments")]
struct Cli {
    /// Write the error record as JSON to this file on failure (it always
    /// goes to stderr).
    #[arg(long, global = true)]
    error_file: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a directory of cables into a paragraph corpus (JSON Lines).
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Glob relative to the input directory.
        #[arg(long, default_value = "**/*.txt")]
        glob: String,
        /// Unmarked paragraphs take the header class.
        #[arg(long)]
        inherit_header_label: bool,
    },
    /// Split a corpus at document level into train/validation/test.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',', num_args = 3, default_value = "0.6,0.2,0.2")]
        ratios: Vec<f64>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic corpus.
    Synth {
        /// TOML file describing the synthetic corpus; overrides the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
        #[arg(long, default_value_t = 300)]
        documents: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Split directory; replaces the data source of the config.
        #[arg(long)]
        splits: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-class F1 table over finished runs.
    Compare {
        #[arg(required = true, num_args = 2..)]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "paragraph")]
        level: LevelArg,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Exact document class priors for n uniform paragraphs.
    Priors {
        #[arg(long, default_value_t = 8)]
        max_n: u32,
        #[arg(long)]
        json: bool,
    },
    /// Topic composition of a paragraph file.
    Topics {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        iterations: usize,
        #[arg(long, default_value_t = 0.5)]
        lo_factor: f64,
        #[arg(long, default_value_t = 1.5)]
        hi_factor: f64,
        #[arg(long, default_value_t = 10)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Default,
    Planted,
    Pruning,
    Confusable,
}

#[derive(Clone, Copy, ValueEnum)]
enum LevelArg {
    Paragraph,
    Document,
}

fn config_err(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |e| ExperimentError::Io { path: path.display().to_string(), message: e.to_string() }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), ExperimentError> {
    match out {
        Some(p) => fs::write(p, text).map_err(io(p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn execute(command: Command) -> Result<(), ExperimentError> {
    match command {
        Command::Ingest { input, out, glob, inherit_header_label } => {
            let ingested = ingest_dir(&input, &glob, ParseOptions { inherit_header_label })?;
            for f in &ingested.failures {
                log::warn!("skipped {}: {}", f.path, f.error);
            }
            if ingested.documents.is_empty() {
                return Err(ExperimentError::Data(format!("no parsable cables under {}", input.display())));
            }
            let paragraphs: Vec<_> = ingested.documents.iter().flat_map(|d| d.paragraphs.iter().cloned()).collect();
            write_paragraph_file(&out, &paragraphs)?;
            eprintln!(
                "{} documents, {} paragraphs, {} failures",
                ingested.documents.len(),
                paragraphs.len(),
                ingested.failures.len()
            );
        }
        Command::Split { corpus, ratios, seed, out_dir } => {
            let ratios: [f64; 3] = ratios.try_into().map_err(|_| config_err("--ratios needs three values"))?;
            let docs = group_into_documents(read_paragraph_file(&corpus)?);
            let split = split_corpus(&docs, ratios, seed)?;
            let info = write_split_dir(&split, &out_dir)?;
            eprintln!("train {}, validation {}, test {}", info.train, info.validation, info.test);
        }
        Command::Synth { spec, preset, documents, seed, out } => {
            let spec = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(io(&path))?;
                    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
                    if !table.contains_key("seed") && seed.is_none() {
                        return Err(config_err("the synthetic corpus file needs a seed (or pass --seed)"));
                    }
                    let mut s: SyntheticSpec = table.try_into().map_err(|e: toml::de::Error| config_err(e.to_string()))?;
                    if let Some(seed) = seed {
                        s.seed = seed;
                    }
                    s
                }
                None => {
                    let seed = seed.ok_or_else(|| config_err("--seed is required"))?;
                    match preset {
                        Preset::Default => SyntheticSpec { n_documents: documents, seed, ..Default::default() },
                        Preset::Planted => SyntheticSpec::planted_clusters(documents, seed),
                        Preset::Pruning => SyntheticSpec::pruning_base(documents, seed),
                        Preset::Confusable => SyntheticSpec::confusable_only(documents, seed),
                    }
                }
            };
            let docs = generate_synthetic_corpus(&spec)?;
            let paragraphs: Vec<_> = docs.iter().flat_map(|d| d.paragraphs.iter().cloned()).collect();
            write_paragraph_file(&out, &paragraphs)?;
            eprintln!("{} documents, {} paragraphs", docs.len(), paragraphs.len());
        }
        Command::Run { config, splits, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(dir) = splits {
                cfg.data = DataConfig::Splits { dir };
                cfg.split = None;
            }
            let out = out
                .or_else(|| cfg.output_dir.clone())
                .ok_or_else(|| config_err("no output directory (--out or output_dir)"))?;
            let summary = run_experiment(&cfg, &out)?;
            let m = &summary.manifest;
            println!("run {}  method {}  dataset {}", m.run_id, m.method, m.dataset);
            for (label, s) in [("paragraph", &m.paragraph), ("document", &m.document)] {
                let f = |c| s.f1.get(&c).copied().unwrap_or(0.0);
                println!(
                    "{label:<9}  S {:.4}  C {:.4}  U {:.4}  macro {:.4}",
                    f(SecurityClass::S),
                    f(SecurityClass::C),
                    f(SecurityClass::U),
                    s.macro_f1
                );
            }
            if let Some(row) = &m.dataset_row {
                println!("clusters {}  features {}", row.clusters, row.features);
            }
            println!("reports in {}", summary.dir.display());
        }
        Command::Compare { runs, level, csv } => {
            let level = match level {
                LevelArg::Paragraph => Level::Paragraph,
                LevelArg::Document => Level::Document,
            };
            let table = compare_runs(&runs, level)?;
            print!("{}", table.to_table());
            if let Some(p) = csv {
                fs::write(&p, table.to_csv()).map_err(io(&p))?;
            }
        }
        Command::Priors { max_n, json } => {
            let mut rows = Vec::new();
            for n in 1..=max_n {
                let p = document_priors(n).map_err(|e| config_err(e.to_string()))?;
                rows.push((n, p));
            }
            if json {
                let v: Vec<_> = rows
                    .iter()
                    .map(|(n, p)| {
                        serde_json::json!({
                            "n": n,
                            "U": p.u.to_string(),
                            "C": p.c.to_string(),
                            "S": p.s.to_string(),
                        })
                    })
                    .collect();
                print!("{}", to_json(&v));
            } else {
                let dec = |r: num_rational::Ratio<u128>| *r.numer() as f64 / *r.denom() as f64;
                println!("{:>3}  {:>22}  {:>22}  {:>22}", "n", "Pr(U)", "Pr(C)", "Pr(S)");
                for (n, p) in rows {
                    let cell = |r| format!("{} ({:.4})", r, dec(r));
                    println!("{n:>3}  {:>22}  {:>22}  {:>22}", cell(p.u), cell(p.c), cell(p.s));
                }
            }
        }
        Command::Topics { corpus, k, seed, iterations, lo_factor, hi_factor, top, out } => {
            let paragraphs = read_paragraph_file(&corpus)?;
            let config = LdaConfig { iterations, ..LdaConfig::new(k, seed) };
            let (report, thresholds) = describe_topics(&paragraphs, &config, lo_factor, hi_factor, top)
                .map_err(|e| ExperimentError::Method(e.into()))?;
            let doc = serde_json::json!({ "thresholds": thresholds, "report": report });
            emit(out.as_deref(), &to_json(&doc))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = to_json(&e.record());
            eprint!("{record}");
            if let Some(p) = cli.error_file {
                let _ = fs::write(p, &record);
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
