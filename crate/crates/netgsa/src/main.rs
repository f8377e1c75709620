//! Command line front end: real-data runs, simulations, and back-testing.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use netgsa::diffnet::{NullStrategy, ScreenOptions, DEFAULT_BOOTSTRAP_REPLICATES};
use netgsa::error::{Error, Result};
use netgsa::ggm::{standardize, NetworkInference};
use netgsa::gsa::{
    backtest, classic_gsa, run_netgsa, shapiro_filter, GeneSetCollection, NetgsaConfig,
    DEFAULT_MIN_SET_SIZE,
};
use netgsa::io;
use netgsa::seed::child_seed;
use netgsa::simulation::{evaluate, Contamination, EvalMethod, SimModel, SimScenario};
use netgsa::types::ExpressionMatrix;

#[derive(Parser)]
#[command(
    name = "netgsa",
    version,
    about = "Network-based gene-set testing: which gene-sets change their \
             association network between two conditions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test gene-sets on two expression matrices.
    Run(RunArgs),
    /// Evaluate testing methods on synthetic data.
    Simulate(SimulateArgs),
    /// Re-partition pooled samples to probe the stability of significant sets.
    Backtest(BacktestArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Expression matrix for the first condition (TSV, genes in the header).
    #[arg(long)]
    x: Option<PathBuf>,

    /// Expression matrix for the second condition (TSV).
    #[arg(long)]
    y: Option<PathBuf>,

    /// Gene-set definitions (GMT).
    #[arg(long)]
    genesets: Option<PathBuf>,

    /// Key = value configuration file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Number of random data splits B.
    #[arg(long)]
    splits: Option<usize>,

    /// Network inference method.
    #[arg(long, value_name = "METHOD")]
    ni: Option<String>,

    /// Sparsity control: require tau observations per screened parameter.
    #[arg(long)]
    tau: Option<f64>,

    /// Significance level for reporting and back-testing.
    #[arg(long)]
    level: Option<f64>,

    /// Null distribution strategy: nested or bootstrap.
    #[arg(long, value_name = "STRATEGY")]
    null: Option<String>,

    /// Replicates for the bootstrap null.
    #[arg(long)]
    bootstrap_replicates: Option<usize>,

    /// Master seed; every random choice derives from it.
    #[arg(long)]
    seed: Option<u64>,

    /// Worker threads (falls back to NETGSA_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Smallest admissible gene-set size after identifier resolution.
    #[arg(long)]
    min_set_size: Option<usize>,

    /// Drop non-normal genes by Shapiro-Wilk at this level before testing.
    #[arg(long, num_args = 0..=1, default_missing_value = "0.01", value_name = "LEVEL")]
    shapiro_level: Option<f64>,

    /// Skip per-condition standardization (inputs already normalized).
    #[arg(long)]
    no_normalize: bool,

    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Also run the mean-shift analysis and report the minimum combination.
    #[arg(long)]
    classic: bool,

    /// Write median network matrices for these sets (comma-separated names;
    /// bare flag selects every retained set). Requires --out.
    #[arg(long, num_args = 0..=1, default_missing_value = "*", value_name = "SETS")]
    emit_networks: Option<String>,
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Random re-partitions of the pooled samples.
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario family: 1, 2, or genesets.
    #[arg(long)]
    model: String,

    /// Support concordance for models 1 and genesets.
    #[arg(long)]
    alpha: Option<f64>,

    /// AR(1) parameter of the second condition for model 2.
    #[arg(long)]
    beta: Option<f64>,

    /// Independent simulation runs.
    #[arg(long, default_value_t = 100)]
    runs: usize,

    /// Methods to evaluate, comma-separated: diffnet, lrt-full, lrt-diag
    /// (two-sample); net-multi, net-single, classic, classic-net, lrt-sets
    /// (gene-sets).
    #[arg(long, value_name = "LIST")]
    methods: Option<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Splits B for the multi-split methods.
    #[arg(long, default_value_t = 50)]
    splits: usize,

    /// Network inference method for the network-based methods.
    #[arg(long, value_name = "METHOD", default_value = "gl-bic-at")]
    ni: String,

    /// Fraction of rows replaced by multivariate-t draws (genesets only).
    #[arg(long)]
    contamination_fraction: Option<f64>,

    /// Degrees of freedom of the contaminating t-distribution.
    #[arg(long)]
    contamination_df: Option<u32>,

    #[arg(long)]
    threads: Option<usize>,

    /// Append wall-clock seconds to the metrics table (non-reproducible).
    #[arg(long)]
    timing: bool,

    /// Output path for the metrics table; ROC and per-run decision tables
    /// are written next to it (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Everything `run` and `backtest` need, after merging flags, config file,
/// and defaults (in that precedence order).
struct Resolved {
    x: PathBuf,
    y: PathBuf,
    genesets: PathBuf,
    config: NetgsaConfig,
    seed: u64,
    min_set_size: usize,
    shapiro_level: Option<f64>,
    normalize: bool,
    out: Option<PathBuf>,
    threads: Option<usize>,
}

const CONFIG_KEYS: &[&str] = &[
    "x",
    "y",
    "genesets",
    "out",
    "splits",
    "ni",
    "tau",
    "level",
    "null",
    "bootstrap_replicates",
    "seed",
    "threads",
    "min_set_size",
    "shapiro_level",
    "normalize",
];

fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = std::fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            detail: "expected key = value".into(),
        })?;
        let key = key.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                detail: format!("unknown configuration key {key:?}"),
            });
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

fn config_value<T: FromStr>(map: &HashMap<String, String>, key: &str) -> Result<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            Error::InvalidInput(format!("cannot parse configuration value {key} = {raw:?}"))
        }),
    }
}

fn parse_null_strategy(name: &str, replicates: usize) -> Result<NullStrategy> {
    match name {
        "nested" => Ok(NullStrategy::Nested),
        "bootstrap" => Ok(NullStrategy::Bootstrap { replicates }),
        other => Err(Error::InvalidInput(format!(
            "unknown null strategy {other:?}; expected nested or bootstrap"
        ))),
    }
}

fn resolve(common: &CommonArgs) -> Result<Resolved> {
    let file = match &common.config {
        Some(path) => parse_config_file(path)?,
        None => HashMap::new(),
    };
    let path_of = |flag: &Option<PathBuf>, key: &str| -> Option<PathBuf> {
        flag.clone().or_else(|| file.get(key).map(PathBuf::from))
    };
    let require = |value: Option<PathBuf>, flag: &str| -> Result<PathBuf> {
        value.ok_or_else(|| Error::InvalidInput(format!("missing required input --{flag}")))
    };

    let splits = common
        .splits
        .or(config_value(&file, "splits")?)
        .unwrap_or(50);
    let ni_name = common
        .ni
        .clone()
        .or(config_value(&file, "ni")?)
        .unwrap_or_else(|| "gl-bic-at".into());
    let method = NetworkInference::from_str(&ni_name)?;
    let tau = common.tau.or(config_value(&file, "tau")?).unwrap_or(5.0);
    let level = common
        .level
        .or(config_value(&file, "level")?)
        .unwrap_or(0.05);
    let replicates = common
        .bootstrap_replicates
        .or(config_value(&file, "bootstrap_replicates")?)
        .unwrap_or(DEFAULT_BOOTSTRAP_REPLICATES);
    let null_name = common
        .null
        .clone()
        .or(config_value(&file, "null")?)
        .unwrap_or_else(|| "nested".into());
    let strategy = parse_null_strategy(&null_name, replicates)?;

    if splits < 1 {
        return Err(Error::InvalidInput("splits must be >= 1".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput("level must be in (0, 1)".into()));
    }

    let normalize = if common.no_normalize {
        false
    } else {
        config_value::<bool>(&file, "normalize")?.unwrap_or(true)
    };
    let shapiro_level = match common.shapiro_level {
        Some(v) => Some(v),
        None => config_value(&file, "shapiro_level")?,
    };

    Ok(Resolved {
        x: require(path_of(&common.x, "x"), "x")?,
        y: require(path_of(&common.y, "y"), "y")?,
        genesets: require(path_of(&common.genesets, "genesets"), "genesets")?,
        config: NetgsaConfig {
            screen: ScreenOptions {
                method,
                tau,
                ..ScreenOptions::default()
            },
            strategy,
            splits,
            level,
        },
        seed: common.seed.or(config_value(&file, "seed")?).unwrap_or(0),
        min_set_size: common
            .min_set_size
            .or(config_value(&file, "min_set_size")?)
            .unwrap_or(DEFAULT_MIN_SET_SIZE),
        shapiro_level,
        normalize,
        out: path_of(&common.out, "out"),
        threads: common.threads.or(config_value(&file, "threads")?),
    })
}

/// Apply --threads / NETGSA_THREADS to the global worker pool. Results do
/// not depend on the pool size; only wall-clock time does.
fn install_threads(requested: Option<usize>) -> Result<()> {
    let threads = match requested {
        Some(t) => Some(t),
        None => match std::env::var("NETGSA_THREADS") {
            Ok(raw) => Some(raw.parse().map_err(|_| {
                Error::InvalidInput(format!("cannot parse NETGSA_THREADS = {raw:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t < 1 {
            return Err(Error::InvalidInput("thread budget must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

struct Ingested {
    raw_x: ExpressionMatrix,
    raw_y: ExpressionMatrix,
    x: ExpressionMatrix,
    y: ExpressionMatrix,
    sets: GeneSetCollection,
}

/// Shared front half of `run` and `backtest`: ingest both conditions, apply
/// the optional normality filter to the raw data, resolve gene sets against
/// the surviving panel, and standardize.
fn ingest(resolved: &Resolved) -> Result<Ingested> {
    let raw_x = io::ingest_expression(&resolved.x)?;
    let raw_y = io::ingest_expression(&resolved.y)?;
    if raw_x.gene_ids() != raw_y.gene_ids() {
        return Err(Error::InvalidInput(
            "expression matrices disagree on gene identifiers".into(),
        ));
    }
    let (raw_x, raw_y) = match resolved.shapiro_level {
        Some(level) => {
            let keep = shapiro_filter(&raw_x, &raw_y, level)?;
            log::info!(
                "normality filter retained {} of {} genes at level {level}",
                keep.len(),
                raw_x.n_genes()
            );
            if keep.is_empty() {
                return Err(Error::InvalidInput(
                    "no genes survive the normality filter".into(),
                ));
            }
            (raw_x.select_genes(&keep), raw_y.select_genes(&keep))
        }
        None => (raw_x, raw_y),
    };
    let sets = io::ingest_genesets(&resolved.genesets, raw_x.gene_ids(), resolved.min_set_size)?;
    let (x, y) = if resolved.normalize {
        (standardize(&raw_x)?, standardize(&raw_y)?)
    } else {
        (raw_x.clone(), raw_y.clone())
    };
    Ok(Ingested {
        raw_x,
        raw_y,
        x,
        y,
        sets,
    })
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Sibling path `<out stem>.<suffix>` next to the main output file.
fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map_or_else(|| "out".to_string(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn emit(files: Vec<(PathBuf, String)>, stdout_fallback: Option<String>) -> Result<()> {
    match stdout_fallback {
        Some(text) => print!("{text}"),
        None => {
            for (path, content) in files {
                std::fs::write(&path, content)?;
                log::info!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let resolved = resolve(&args.common)?;
    install_threads(resolved.threads)?;
    if args.emit_networks.is_some() && resolved.out.is_none() {
        return Err(Error::InvalidInput(
            "--emit-networks requires --out to derive file names".into(),
        ));
    }
    let data = ingest(&resolved)?;

    let classic = args
        .classic
        .then(|| classic_gsa(&data.raw_x, &data.raw_y, &data.sets))
        .transpose()?;

    let network_names: Option<Vec<String>> = match &args.emit_networks {
        None => None,
        Some(spec) if spec == "*" => Some(
            data.sets
                .sets()
                .iter()
                .map(|s| s.name.clone())
                .collect(),
        ),
        Some(spec) => Some(spec.split(',').map(|s| s.trim().to_string()).collect()),
    };

    let output = run_netgsa(
        &data.x,
        &data.y,
        &data.sets,
        &resolved.config,
        resolved.seed,
        network_names.as_deref(),
    )?;

    let mut rows = output.rows;
    if let Some(classic) = &classic {
        for row in &mut rows {
            let index = data
                .sets
                .sets()
                .iter()
                .position(|s| s.name == row.name)
                .expect("row name from collection");
            let c = classic[index];
            row.p_classic = Some(c);
            // Uncorrected minimum combination; the network value passes
            // through as-is when the classic branch is disabled.
            row.p_combined = Some(row.p_net_median.map_or(c, |n| c.min(n)));
        }
    }

    let table = io::render_results(&rows);
    let mut files = Vec::new();
    if let Some(out) = &resolved.out {
        files.push((out.clone(), table));
        for net in &output.networks {
            let ids = io::set_gene_ids(net, &data.sets, data.x.gene_ids());
            let tag = sanitize(&net.name);
            files.push((
                sibling(out, &format!("network.{tag}.x.tsv")),
                io::render_network(&net.pcorr_x, &ids),
            ));
            files.push((
                sibling(out, &format!("network.{tag}.y.tsv")),
                io::render_network(&net.pcorr_y, &ids),
            ));
        }
        emit(files, None)
    } else {
        emit(Vec::new(), Some(table))
    }
}

fn parse_methods(
    spec: Option<&str>,
    set_scenario: bool,
    ni: NetworkInference,
    splits: usize,
) -> Result<Vec<EvalMethod>> {
    let default = if set_scenario {
        "net-multi,classic,classic-net,lrt-sets"
    } else {
        "diffnet,lrt-full,lrt-diag"
    };
    spec.unwrap_or(default)
        .split(',')
        .map(|name| match name.trim() {
            "diffnet" => Ok(EvalMethod::DiffNet(ni)),
            "lrt-full" => Ok(EvalMethod::LrtFull),
            "lrt-diag" => Ok(EvalMethod::LrtDiag),
            "net-multi" => Ok(EvalMethod::NetMulti { method: ni, splits }),
            "net-single" => Ok(EvalMethod::NetSingle(ni)),
            "classic" => Ok(EvalMethod::Classic),
            "classic-net" => Ok(EvalMethod::ClassicNet { method: ni, splits }),
            "lrt-sets" => Ok(EvalMethod::LrtSets),
            other => Err(Error::InvalidInput(format!(
                "unknown method {other:?}"
            ))),
        })
        .collect()
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    install_threads(args.threads)?;
    let need = |value: Option<f64>, flag: &str| -> Result<f64> {
        value.ok_or_else(|| {
            Error::InvalidInput(format!("--{flag} is required for this model"))
        })
    };
    let model = match args.model.as_str() {
        "1" | "model1" => SimModel::Model1 {
            alpha: need(args.alpha, "alpha")?,
        },
        "2" | "model2" => SimModel::Model2 {
            beta: need(args.beta, "beta")?,
        },
        "genesets" | "sets" => SimModel::GeneSets {
            alpha: need(args.alpha, "alpha")?,
        },
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown model {other:?}; expected 1, 2, or genesets"
            )))
        }
    };
    let contamination = match (args.contamination_fraction, args.contamination_df) {
        (None, None) => None,
        (Some(fraction), df) => Some(Contamination {
            fraction,
            t_df: df.unwrap_or(3),
        }),
        (None, Some(_)) => {
            return Err(Error::InvalidInput(
                "--contamination-df without --contamination-fraction".into(),
            ))
        }
    };
    let scenario = SimScenario {
        model,
        contamination,
        seed: args.seed,
    };
    let set_scenario = matches!(model, SimModel::GeneSets { .. });
    let ni = NetworkInference::from_str(&args.ni)?;
    let methods = parse_methods(args.methods.as_deref(), set_scenario, ni, args.splits)?;

    let reports = evaluate(&scenario, &methods, args.runs)?;

    let labels: Vec<String> = if set_scenario {
        (1..=20).map(|s| format!("set{s:02}")).collect()
    } else {
        vec!["panel".to_string()]
    };
    let metrics = io::render_metrics(&reports, args.timing);
    let decisions = io::render_decisions(&reports, &labels);
    let roc = set_scenario.then(|| io::render_roc(&reports));

    if let Some(out) = &args.out {
        let mut files = vec![
            (out.clone(), metrics),
            (sibling(out, "decisions.tsv"), decisions),
        ];
        if let Some(roc) = roc {
            files.push((sibling(out, "roc.tsv"), roc));
        }
        emit(files, None)
    } else {
        let mut text = metrics;
        text.push('\n');
        text.push_str(&decisions);
        if let Some(roc) = roc {
            text.push('\n');
            text.push_str(&roc);
        }
        emit(Vec::new(), Some(text))
    }
}

fn cmd_backtest(args: &BacktestArgs) -> Result<()> {
    let resolved = resolve(&args.common)?;
    install_threads(resolved.threads)?;
    let repeats = args.repeats.unwrap_or(10);
    let data = ingest(&resolved)?;

    let output = run_netgsa(
        &data.x,
        &data.y,
        &data.sets,
        &resolved.config,
        resolved.seed,
        None,
    )?;
    let significant: Vec<(usize, String, Option<f64>)> = output
        .rows
        .iter()
        .filter(|row| row.p_net_median.is_some_and(|p| p < resolved.config.level))
        .map(|row| {
            let index = data
                .sets
                .sets()
                .iter()
                .position(|s| s.name == row.name)
                .expect("row name from collection");
            (index, row.name.clone(), row.p_net_median)
        })
        .collect();

    let table = if significant.is_empty() {
        log::info!(
            "no gene-set significant at level {}; nothing to backtest",
            resolved.config.level
        );
        io::render_backtest(&[], &[], &[], repeats)
    } else {
        let indices: Vec<usize> = significant.iter().map(|(i, _, _)| *i).collect();
        let restricted = data.sets.subset(&indices)?;
        let counts = backtest(
            &data.raw_x,
            &data.raw_y,
            &restricted,
            &resolved.config,
            repeats,
            child_seed(resolved.seed, &[0x6261636b]),
        )?;
        let names: Vec<String> = significant.iter().map(|(_, n, _)| n.clone()).collect();
        let p_net: Vec<Option<f64>> = significant.iter().map(|(_, _, p)| *p).collect();
        io::render_backtest(&names, &p_net, &counts, repeats)
    };

    match &resolved.out {
        Some(out) => emit(vec![(out.clone(), table)], None),
        None => emit(Vec::new(), Some(table)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Backtest(args) => cmd_backtest(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
