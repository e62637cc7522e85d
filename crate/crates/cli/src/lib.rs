//! Command-line front end for the robustmeta engine.
//!
//! Subcommands: `analyze` (full pipeline), `enumerate` (quality set only),
//! `unadjusted` (fit with every quality weight 1), `report` (re-render
//! outputs from persisted results without recomputing anything).

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use robustmeta::config::{load_run_config, DomainSelection, RunConfig};
use robustmeta::ingest::{ingest_rob_table, ingest_study_data};
use robustmeta::model::{QualityVector, StudyData};
use robustmeta::persist::{
    load_results, to_pretty_json, write_manifest, write_results, ManifestDoc, ResultsDoc,
    FORMAT_VERSION,
};
use robustmeta::quality::{build_set_spec, enumerate_quality_vectors, ExtraConstraints, RoBTable};
use robustmeta::report::{build_forestplot_model, render_summary_table, write_forestplot};
use robustmeta::robust::{analyze_over_set, compare_to_unadjusted, RobustBounds};
use robustmeta::summary::PosteriorSummary;

#[derive(Parser, Debug)]
#[command(
    name = "robustmeta",
    version,
    about = "Robust Bayesian bias-adjusted meta-analysis: bounds on posterior summaries \
             over the set of quality vectors consistent with risk-of-bias judgments",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the full pipeline: enumerate the quality set, bound every
    /// posterior summary over it, compare against the unadjusted fit, and
    /// write results JSON, a text table, and a forest plot.
    Analyze(CommonArgs),
    /// Enumerate the quality set: print the count and write the vectors.
    Enumerate(CommonArgs),
    /// Fit only the bias-unadjusted model (every quality weight 1).
    Unadjusted(CommonArgs),
    /// Re-render the text table and forest plot from persisted results
    /// (no recomputation).
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// Run-configuration JSON; a persisted run manifest also works.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Study-counts CSV (header: study,n_control,r_control,n_treatment,r_treatment).
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Risk-of-bias table JSON.
    #[arg(long, value_name = "PATH")]
    rob: Option<PathBuf>,
    /// Domains driving the quality set: "all" or a comma-separated id list (e.g. "1,2").
    #[arg(long, value_name = "SEL")]
    domains: Option<String>,
    /// Extra constraint-blocks JSON (required for multi-domain selections).
    #[arg(long, value_name = "PATH")]
    constraints: Option<PathBuf>,
    /// Points per axis on interval/box enumeration grids.
    #[arg(long, value_name = "N")]
    grid_points: Option<usize>,
    /// Weight spacing for vertex-combination enumeration (e.g. 0.05).
    #[arg(long, value_name = "STEP")]
    grid_spacing: Option<f64>,
    /// Retained posterior draws per chain.
    #[arg(long, value_name = "N")]
    samples: Option<usize>,
    /// Burn-in sweeps per chain.
    #[arg(long, value_name = "N")]
    burnin: Option<usize>,
    /// Number of MCMC chains.
    #[arg(long, value_name = "N")]
    chains: Option<usize>,
    /// Master RNG seed.
    #[arg(long, value_name = "SEED")]
    seed: Option<u64>,
    /// Replace the exceedance-threshold list with this single threshold
    /// (log odds-ratio scale).
    #[arg(long, value_name = "T")]
    threshold: Option<f64>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding a persisted results.json (or a direct path to one).
    #[arg(long, value_name = "PATH", default_value = "robustmeta-out")]
    results: PathBuf,
    /// Directory to write the re-rendered table and forest plot into
    /// (defaults to the directory the results came from).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn parse_domains(sel: &str) -> anyhow::Result<DomainSelection> {
    if sel == "all" {
        return Ok(DomainSelection::All);
    }
    let ids = sel
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<u8>()
                .with_context(|| format!("--domains: \"{tok}\" is not a domain id"))
        })
        .collect::<anyhow::Result<Vec<u8>>>()?;
    if ids.is_empty() {
        bail!("--domains: empty list");
    }
    Ok(DomainSelection::Domains(ids))
}

fn load_constraints(path: &PathBuf) -> anyhow::Result<ExtraConstraints> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading constraints file {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing constraints file {}", path.display()))
}

/// Builds the effective run configuration: the config file (or built-in
/// defaults) with command-line overrides applied on top.
fn build_config(args: &CommonArgs) -> anyhow::Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => load_run_config(path)?,
        None => {
            let (Some(data), Some(rob)) = (&args.data, &args.rob) else {
                bail!("provide --data and --rob, or --config pointing at a run configuration");
            };
            RunConfig::new(data, rob)
        }
    };
    if let Some(data) = &args.data {
        config.data_path = data.clone();
    }
    if let Some(rob) = &args.rob {
        config.rob_path = rob.clone();
    }
    if let Some(sel) = &args.domains {
        config.domain_selection = parse_domains(sel)?;
    }
    if let Some(path) = &args.constraints {
        config.extra_constraints = Some(load_constraints(path)?);
    }
    if let Some(n) = args.grid_points {
        config.enumeration.box_points_per_axis = n;
        config.enumeration.singleton_points = n;
    }
    if let Some(step) = args.grid_spacing {
        config.enumeration.weight_spacing = step;
    }
    if let Some(n) = args.samples {
        config.mcmc.n_samples = n;
    }
    if let Some(n) = args.burnin {
        config.mcmc.n_burnin = n;
    }
    if let Some(n) = args.chains {
        config.mcmc.n_chains = n;
    }
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(t) = args.threshold {
        config.quantities.thresholds = vec![t];
    }
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    let config = config.resolve();
    config.validate()?;
    Ok(config)
}

/// Ingests both input files and prepares the output directory with a
/// manifest, so every run is reproducible from what it wrote.
fn start_run(config: &RunConfig) -> anyhow::Result<(StudyData, RoBTable)> {
    let data = ingest_study_data(&config.data_path)?;
    let rob = ingest_rob_table(&config.rob_path, &data)?;
    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating output directory {}", config.output_dir.display()))?;
    write_manifest(&config.output_dir, &ManifestDoc::for_config(config.clone()))?;
    Ok((data, rob))
}

fn enumerate_set(config: &RunConfig, rob: &RoBTable) -> anyhow::Result<Vec<QualityVector>> {
    let domains = config.domain_selection.resolve(rob);
    let spec = build_set_spec(
        rob,
        &domains,
        &config.cutoff_policy,
        config.extra_constraints.as_ref(),
    )?;
    let vectors = enumerate_quality_vectors(&spec, &config.enumeration)?;
    eprintln!(
        "quality set over domains {domains:?}: {} vectors ({} studies)",
        vectors.len(),
        rob.studies.len()
    );
    Ok(vectors)
}

fn unadjusted_summary(
    config: &RunConfig,
    data: &StudyData,
    quantities: &[robustmeta::robust::QuantitySpec],
) -> anyhow::Result<(RobustBounds, PosteriorSummary)> {
    let ones = QualityVector {
        q: vec![1.0; data.studies.len()],
    };
    let bounds = analyze_over_set(
        data,
        &config.hyperparameters,
        &[ones],
        &config.mcmc,
        quantities,
    )?;
    let summary = bounds.trace[0].summary.clone();
    Ok((bounds, summary))
}

fn study_names(data: &StudyData) -> Vec<String> {
    data.studies.iter().map(|s| s.name.clone()).collect()
}

/// Persists results, renders the table (returned for stdout) and the forest
/// plot into the output directory.
fn finish_run(config: &RunConfig, doc: &ResultsDoc) -> anyhow::Result<String> {
    write_results(&config.output_dir, doc)?;
    let comparison = doc
        .comparison
        .as_deref()
        .expect("analysis runs always produce a comparison");
    let table = render_summary_table(comparison, &doc.bounds, &doc.study_names);
    fs::write(config.output_dir.join("table.txt"), &table)
        .with_context(|| format!("writing table into {}", config.output_dir.display()))?;
    let unadjusted = doc
        .unadjusted
        .as_ref()
        .expect("analysis runs always carry an unadjusted summary");
    let model = build_forestplot_model(&doc.bounds, unadjusted, &doc.study_names)?;
    write_forestplot(&config.output_dir, &model)?;
    Ok(table)
}

fn cmd_analyze(args: &CommonArgs) -> anyhow::Result<()> {
    let config = build_config(args)?;
    let (data, rob) = start_run(&config)?;
    let vectors = enumerate_set(&config, &rob)?;
    let quantities = config.expand_quantities(data.studies.len());
    eprintln!(
        "sampling {} chains x ({} burn-in + {} retained) sweeps per vector",
        config.mcmc.n_chains, config.mcmc.n_burnin, config.mcmc.n_samples
    );
    let bounds = analyze_over_set(
        &data,
        &config.hyperparameters,
        &vectors,
        &config.mcmc,
        &quantities,
    )?;
    let (_, unadjusted) = unadjusted_summary(&config, &data, &quantities)?;
    let comparison = compare_to_unadjusted(&bounds, &unadjusted, config.decision_certainty)?;
    let doc = ResultsDoc {
        format_version: FORMAT_VERSION,
        study_names: study_names(&data),
        bounds,
        unadjusted: Some(unadjusted),
        comparison: Some(comparison),
    };
    let table = finish_run(&config, &doc)?;
    print!("{table}");
    eprintln!("results written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_enumerate(args: &CommonArgs) -> anyhow::Result<()> {
    let config = build_config(args)?;
    let (data, rob) = start_run(&config)?;
    let _ = &data;
    let vectors = enumerate_set(&config, &rob)?;
    let path = config.output_dir.join("quality_vectors.json");
    fs::write(&path, to_pretty_json(&vectors)?)
        .with_context(|| format!("writing {}", path.display()))?;
    println!("{} quality vectors", vectors.len());
    eprintln!("vectors written to {}", path.display());
    Ok(())
}

fn cmd_unadjusted(args: &CommonArgs) -> anyhow::Result<()> {
    let config = build_config(args)?;
    let (data, _) = start_run(&config)?;
    let quantities = config.expand_quantities(data.studies.len());
    let (bounds, unadjusted) = unadjusted_summary(&config, &data, &quantities)?;
    let comparison = compare_to_unadjusted(&bounds, &unadjusted, config.decision_certainty)?;
    let doc = ResultsDoc {
        format_version: FORMAT_VERSION,
        study_names: study_names(&data),
        bounds,
        unadjusted: Some(unadjusted),
        comparison: Some(comparison),
    };
    let table = finish_run(&config, &doc)?;
    print!("{table}");
    eprintln!("results written to {}", config.output_dir.display());
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> anyhow::Result<()> {
    let results_path = if args.results.is_dir() {
        args.results.join("results.json")
    } else {
        args.results.clone()
    };
    let doc = load_results(&results_path)?;
    let out_dir = match &args.out {
        Some(dir) => dir.clone(),
        None => results_path
            .parent()
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(".")),
    };
    fs::create_dir_all(&out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    let comparison = doc
        .comparison
        .as_deref()
        .context("results carry no comparison rows to render")?;
    let table = render_summary_table(comparison, &doc.bounds, &doc.study_names);
    fs::write(out_dir.join("table.txt"), &table)
        .with_context(|| format!("writing table into {}", out_dir.display()))?;
    let unadjusted = doc
        .unadjusted
        .as_ref()
        .context("results carry no unadjusted summary; the forest plot needs one")?;
    let model = build_forestplot_model(&doc.bounds, unadjusted, &doc.study_names)?;
    write_forestplot(&out_dir, &model)?;
    print!("{table}");
    eprintln!("report re-rendered into {}", out_dir.display());
    Ok(())
}

/// Parses `argv` and runs the selected subcommand. Returns the process exit
/// status: 0 on success (including `--help`/`--version`), 2 on usage errors,
/// 1 on runtime failures.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args),
        Command::Enumerate(args) => cmd_enumerate(args),
        Command::Unadjusted(args) => cmd_unadjusted(args),
        Command::Report(args) => cmd_report(args),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    }
}
