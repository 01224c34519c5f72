use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nds_lab::experiments::{correlation_experiment, downstream_compare, relevance, summarize, IndexSettings, Indexed};
use nds_lab::fixture::{Fixture, FixtureConfig};
use nds_lab::incremental::{incremental_build_check, IncrementalConfig};
use nds_lab::svg::confusion_scatter;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "lab", about = "Fixture generation and validation experiments")]
struct Cli {
    /// Directory for results and the config manifest.
    #[arg(long, global = true, default_value = "results")]
    results: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic fixture datasets.
    Fixture {
        #[command(subcommand)]
        action: FixtureAction,
    },
    /// Proxy accuracy versus proxy A-distance per subset.
    Correlate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Downstream accuracy and relevance of NDS against the baselines.
    Compare {
        #[arg(long, value_delimiter = ',', default_value = "0.2")]
        budgets: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 0)]
        fixture_seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
    },
    /// Build isolation and build cost against the size of existing data.
    Incremental {
        #[arg(long, default_value_t = 500)]
        a_items: usize,
        #[arg(long, default_value_t = 1000)]
        b_items: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

#[derive(Subcommand)]
enum FixtureAction {
    /// Writes the source, target and held-out test manifests as JSONL.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

/// Records the configuration behind each command's outputs.
fn record(results: &Path, command: &str, config: Value) -> Result<()> {
    let path = results.join("manifest.json");
    let mut manifest: BTreeMap<String, Value> = match std::fs::read_to_string(&path) {
        Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        Err(_) => BTreeMap::new(),
    };
    manifest.insert(command.to_owned(), config);
    write_json(&path, &manifest)
}

fn fixture_generate(results: &Path, seed: u64) -> Result<()> {
    let cfg = FixtureConfig {
        seed,
        ..FixtureConfig::default()
    };
    let fixture = Fixture::generate(&cfg);
    fixture.source.save(results.join("source.jsonl"))?;
    fixture.target.save(results.join("target.jsonl"))?;
    fixture.test.save(results.join("test.jsonl"))?;
    eprintln!(
        "wrote source.jsonl, target.jsonl and test.jsonl in {}",
        results.display()
    );
    record(results, "fixture generate", json!({ "fixture": cfg }))
}

fn correlate(results: &Path, seed: u64, k: usize) -> Result<()> {
    let cfg = FixtureConfig::default();
    let fixture = Fixture::generate(&cfg);
    let settings = IndexSettings::standard(k);
    let indexed = Indexed::build(&fixture, &settings)?;
    let report = correlation_experiment(&indexed, seed)?;

    let mut csv = String::from("subset,blob,size,z,epsilon,d_a\n");
    for s in &report.subsets {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            s.subset, s.blob, s.size, s.z, s.epsilon, s.d_a
        );
    }
    write_json(&results.join("confusion.json"), &report)?;
    write(&results.join("confusion.csv"), csv)?;
    write(&results.join("confusion.svg"), confusion_scatter(&report))?;
    match report.spearman_z_d_a {
        Some(r) => println!("spearman(z, d_A) = {r:.4}"),
        None => println!("spearman(z, d_A) undefined"),
    }
    println!(
        "argmax z: blob {}   argmin d_A: blob {}   target: blob {}",
        report.argmax_z_blob, report.argmin_d_a_blob, report.target_blob
    );
    record(
        results,
        "correlate",
        json!({ "fixture": cfg, "index": settings, "domain_seed": seed }),
    )
}

fn compare(results: &Path, budgets: &[f64], seeds: &[u64], fixture_seed: u64, k: usize) -> Result<()> {
    let cfg = FixtureConfig {
        seed: fixture_seed,
        ..FixtureConfig::default()
    };
    let fixture = Fixture::generate(&cfg);
    let settings = IndexSettings::standard(k);
    let indexed = Indexed::build(&fixture, &settings)?;

    let mut relevance_rows = Vec::new();
    for &b in budgets {
        for &s in seeds {
            relevance_rows.push(relevance(&indexed, b, s)?);
        }
    }
    let rows = downstream_compare(&indexed, budgets, seeds)?;
    let summary = summarize(&rows);

    let mut csv = String::from("method,budget_fraction,budget,seed,accuracy\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            r.method.as_str(),
            r.budget_fraction,
            r.budget,
            r.seed,
            r.accuracy
        );
    }
    let mut rel_csv = String::from("budget_fraction,budget,seed,nds_fraction,uniform_fraction\n");
    for r in &relevance_rows {
        let _ = writeln!(
            rel_csv,
            "{},{},{},{},{}",
            r.budget_fraction, r.budget, r.seed, r.nds_fraction, r.uniform_fraction
        );
    }
    write_json(
        &results.join("downstream.json"),
        &json!({ "results": rows, "summary": summary, "relevance": relevance_rows }),
    )?;
    write(&results.join("downstream.csv"), csv)?;
    write(&results.join("relevance.csv"), rel_csv)?;

    println!("{:<8} {:>7} {:>5} {:>9}", "method", "budget", "runs", "accuracy");
    for s in &summary {
        println!(
            "{:<8} {:>7.2} {:>5} {:>9.4}",
            s.method.as_str(),
            s.budget_fraction,
            s.runs,
            s.mean_accuracy
        );
    }
    record(
        results,
        "compare",
        json!({ "fixture": cfg, "index": settings, "budgets": budgets, "seeds": seeds }),
    )
}

fn incremental(results: &Path, cfg: IncrementalConfig) -> Result<()> {
    let report = incremental_build_check(&cfg)?;
    write_json(&results.join("incremental.json"), &report)?;
    println!(
        "build(B) median {:.3}s with |A|={}, {:.3}s with |A|={}; ratio {:.2}; A unchanged: {}",
        report.median_small,
        report.a_items_small,
        report.median_large,
        report.a_items_large,
        report.ratio,
        report.a_blobs_identical
    );
    record(results, "incremental", serde_json::to_value(&cfg)?)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    std::fs::create_dir_all(&cli.results).with_context(|| format!("creating {}", cli.results.display()))?;
    match cli.command {
        Command::Fixture {
            action: FixtureAction::Generate { seed },
        } => fixture_generate(&cli.results, seed),
        Command::Correlate { seed, k } => correlate(&cli.results, seed, k),
        Command::Compare {
            budgets,
            seeds,
            fixture_seed,
            k,
        } => compare(&cli.results, &budgets, &seeds, fixture_seed, k),
        Command::Incremental {
            a_items,
            b_items,
            repeats,
        } => incremental(
            &cli.results,
            IncrementalConfig {
                a_items,
                b_items,
                repeats,
                ..IncrementalConfig::default()
            },
        ),
    }
}
