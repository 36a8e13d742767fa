//! Command-line pipeline for universal-marginaliser experiments.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use um_core::{
    build_test_set, evaluate, export_report, generate_random_network, mask_size_histogram,
    train_with_observer, Checkpoint, EvaluationReport, Evidence, ExportFormat, LayerSizes,
    MaskingScheme, NoisyOrNetwork, ObservationModel, ParamRanges, ReportMeta, TrainingConfig,
    TrainingMetrics,
};

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "um",
    version,
    about = "Train and evaluate a neural universal marginaliser on noisy-OR networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random three-layer noisy-OR network file.
    Generate(GenerateArgs),
    /// Print exact conditional marginals for a network and evidence.
    Query(QueryArgs),
    /// Sample a masking scheme and write its mask-size histogram.
    MaskHist(MaskHistArgs),
    /// Train a marginaliser on a network under a masking scheme.
    Train(TrainArgs),
    /// Score a checkpoint against the exact oracle.
    Evaluate(EvaluateArgs),
    /// Run the full experiment: train every scheme, evaluate both
    /// observation models for every disease, write all reports.
    Reproduce(ReproduceArgs),
    /// Re-run a recorded manifest.
    Rerun(RerunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generation seed.
    #[arg(long, env = "UM_SEED", default_value_t = 7)]
    seed: u64,
    /// Layer sizes as risk-factors,diseases,symptoms.
    #[arg(long, default_value = "8,8,8")]
    layers: String,
    /// Probability of each candidate edge.
    #[arg(long, default_value_t = 0.4)]
    edge_prob: f64,
    /// Interval for P(risk factor = 0), as lo,hi.
    #[arg(long, default_value = "0.5,0.95")]
    prior_range: String,
    /// Interval for leak probabilities, as lo,hi.
    #[arg(long, default_value = "0.7,0.99")]
    leak_range: String,
    /// Interval for edge weights, as lo,hi.
    #[arg(long, default_value = "0.1,0.9")]
    weight_range: String,
    /// Output network file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct QueryArgs {
    /// Network file.
    #[arg(long)]
    net: PathBuf,
    /// Evidence as comma-separated index=value pairs, e.g. `3=1,7=0`.
    #[arg(long, default_value = "")]
    evidence: String,
    /// Output format: `text` or `plot`.
    #[arg(long, default_value = "text")]
    format: String,
    /// Optional file to write the marginals to (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MaskHistArgs {
    /// Masking scheme: uniform, sizewise, nodewise, cycle or markov.
    #[arg(long)]
    scheme: String,
    /// Number of nodes (taken from --net when omitted).
    #[arg(long)]
    nodes: Option<usize>,
    /// Network file; required for the markov scheme.
    #[arg(long)]
    net: Option<PathBuf>,
    /// Number of masks to draw.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, env = "UM_SEED", default_value_t = 42)]
    seed: u64,
    /// Output histogram file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Network file.
    #[arg(long)]
    net: PathBuf,
    /// Masking scheme: uniform, sizewise, nodewise, cycle or markov.
    #[arg(long)]
    scheme: String,
    /// Samples per epoch.
    #[arg(long, default_value_t = 400_000)]
    samples: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    batch: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Data-stream seed.
    #[arg(long, env = "UM_SEED", default_value_t = 1)]
    seed: u64,
    /// Weight-initialisation seed (defaults to seed + 1).
    #[arg(long, env = "UM_INIT_SEED")]
    init_seed: Option<u64>,
    /// Write a checkpoint every N epochs next to the output file.
    #[arg(long)]
    checkpoint_every: Option<usize>,
    /// Output checkpoint file; the metrics log lands at <out>.metrics.log.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Network file.
    #[arg(long)]
    net: PathBuf,
    /// Trained checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Observation model for the test set: uniform or markov.
    #[arg(long, default_value = "uniform")]
    obs_model: String,
    /// Evidence sizes, e.g. `0..12` or `0,2,4`.
    #[arg(long, default_value = "0..12")]
    sizes: String,
    /// Queries per evidence size.
    #[arg(long, default_value_t = 200)]
    per_size: usize,
    /// Query node (a disease, global index).
    #[arg(long)]
    query_node: usize,
    /// Test-set seed.
    #[arg(long, env = "UM_SEED", default_value_t = 9)]
    seed: u64,
    /// Output prefix; writes <out>.plotdata.txt and <out>.table.txt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Network file.
    #[arg(long)]
    net: PathBuf,
    /// Samples per epoch for every scheme.
    #[arg(long, default_value_t = 400_000)]
    samples: usize,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 512)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Evidence sizes for the reports.
    #[arg(long, default_value = "0..12")]
    sizes: String,
    #[arg(long, default_value_t = 200)]
    per_size: usize,
    /// Query nodes; `all` sweeps every disease.
    #[arg(long, default_value = "all")]
    query_nodes: String,
    /// Base seed; training and test-set seeds derive from it.
    #[arg(long, env = "UM_SEED", default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest file written by a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Query(args) => cmd_query(args),
        Command::MaskHist(args) => cmd_mask_hist(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Reproduce(args) => cmd_reproduce(args),
        Command::Rerun(args) => cmd_rerun(args),
    }
}

fn parse_pair(text: &str, what: &str) -> Result<(f64, f64)> {
    let (lo, hi) = text
        .split_once(',')
        .ok_or_else(|| anyhow!("{what} must be lo,hi"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn parse_layers(text: &str) -> Result<LayerSizes> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .context("layers must be three comma-separated counts")?;
    if parts.len() != 3 {
        bail!("layers must be three comma-separated counts");
    }
    Ok(LayerSizes::new(parts[0], parts[1], parts[2])?)
}

fn parse_evidence(text: &str) -> Result<Evidence> {
    let mut items = Vec::new();
    for pair in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (node, value) = pair
            .split_once('=')
            .ok_or_else(|| anyhow!("evidence entries look like index=value, got `{pair}`"))?;
        let node: usize = node.trim().parse().context("bad evidence index")?;
        let value = match value.trim() {
            "0" => false,
            "1" => true,
            other => bail!("evidence values are 0 or 1, got `{other}`"),
        };
        items.push((node, value));
    }
    Ok(Evidence::new(items)?)
}

fn parse_sizes(text: &str) -> Result<Vec<usize>> {
    let text = text.trim();
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().context("bad size range")?;
        let hi: usize = hi.trim().parse().context("bad size range")?;
        if hi < lo {
            bail!("size range {text} is empty");
        }
        return Ok((lo..=hi).collect());
    }
    text.split(',')
        .map(|p| p.trim().parse::<usize>().context("bad size list"))
        .collect()
}

fn load_network(path: &Path) -> Result<NoisyOrNetwork> {
    NoisyOrNetwork::load(path).with_context(|| format!("loading network {}", path.display()))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let layers = parse_layers(&args.layers)?;
    let ranges = ParamRanges {
        rf_prior: parse_pair(&args.prior_range, "prior-range")?,
        leak: parse_pair(&args.leak_range, "leak-range")?,
        weight: parse_pair(&args.weight_range, "weight-range")?,
    };
    let net = generate_random_network(args.seed, layers, args.edge_prob, &ranges)?;
    net.save(&args.out)?;
    let (disease_edges, symptom_edges) = net.edge_counts();
    println!(
        "wrote {} ({} nodes, {} disease edges, {} symptom edges)",
        args.out.display(),
        net.n(),
        disease_edges,
        symptom_edges
    );

    RunManifest::new(
        "generate",
        vec![
            ("seed", args.seed.to_string()),
            ("layers", args.layers.clone()),
            ("edge-prob", args.edge_prob.to_string()),
            ("prior-range", args.prior_range.clone()),
            ("leak-range", args.leak_range.clone()),
            ("weight-range", args.weight_range.clone()),
            ("out", args.out.display().to_string()),
        ],
    )
    .write_alongside(&args.out)?;
    Ok(())
}

fn cmd_query(args: QueryArgs) -> Result<()> {
    let net = load_network(&args.net)?;
    let evidence = parse_evidence(&args.evidence)?;
    let marginals = um_core::exact_conditional_marginals(&net, &evidence)?;
    let mut out = format!("# network={} evidence={}\n", net.id(), args.evidence);
    for i in 0..net.n() {
        match args.format.as_str() {
            "text" => {
                out.push_str(&format!(
                    "{i:>3} {:>4} {:.12}\n",
                    net.node_name(i)?,
                    marginals.get(i)
                ));
            }
            "plot" => out.push_str(&format!("{i} {:.12}\n", marginals.get(i))),
            other => bail!("unknown format `{other}` (use text or plot)"),
        }
    }
    match &args.out {
        Some(path) => {
            fs::write(path, &out)?;
            RunManifest::new(
                "query",
                vec![
                    ("net", args.net.display().to_string()),
                    ("evidence", args.evidence.clone()),
                    ("format", args.format.clone()),
                    ("out", path.display().to_string()),
                ],
            )
            .write_alongside(path)?;
        }
        None => print!("{out}"),
    }
    Ok(())
}

fn cmd_mask_hist(args: MaskHistArgs) -> Result<()> {
    let mut scheme = MaskingScheme::parse(&args.scheme)?;
    let net = args.net.as_deref().map(load_network).transpose()?;
    let nodes = match (args.nodes, &net) {
        (Some(n), _) => n,
        (None, Some(net)) => net.n(),
        (None, None) => bail!("either --nodes or --net is required"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let hist = mask_size_histogram(&mut scheme, nodes, net.as_ref(), args.samples, &mut rng)?;
    fs::write(
        &args.out,
        hist.to_plot_data(scheme.name(), nodes, args.samples, args.seed),
    )?;
    println!("wrote {}", args.out.display());

    let mut fields = vec![
        ("scheme", args.scheme.clone()),
        ("nodes", nodes.to_string()),
        ("samples", args.samples.to_string()),
        ("seed", args.seed.to_string()),
        ("out", args.out.display().to_string()),
    ];
    if let Some(net) = &args.net {
        fields.push(("net", net.display().to_string()));
    }
    RunManifest::new("mask-hist", fields).write_alongside(&args.out)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_one(
    net: &NoisyOrNetwork,
    scheme: MaskingScheme,
    samples: usize,
    epochs: usize,
    batch: usize,
    lr: f64,
    data_seed: u64,
    init_seed: u64,
    checkpoint_every: Option<usize>,
    out: &Path,
    metrics_path: &Path,
    quiet: bool,
) -> Result<Checkpoint> {
    let config = TrainingConfig {
        scheme,
        samples_per_epoch: samples,
        epochs,
        batch_size: batch,
        learning_rate: lr,
        data_seed,
        init_seed,
        checkpoint_every_epochs: checkpoint_every,
        checkpoint_dir: checkpoint_every.map(|_| {
            out.parent()
                .filter(|p| !p.as_os_str().is_empty())
                .unwrap_or(Path::new("."))
                .to_path_buf()
        }),
    };
    // The metrics log is append-only over the run; start it fresh.
    fs::write(metrics_path, "")?;
    let mut log = fs::OpenOptions::new().append(true).open(metrics_path)?;
    let outcome = train_with_observer(net, &config, |record| {
        use std::io::Write;
        let line = TrainingMetrics::log_line(record);
        if !quiet {
            println!("{line}");
        }
        writeln!(log, "{line}").map_err(um_core::TrainError::from)
    })?;
    let checkpoint = outcome.checkpoint(&config);
    checkpoint.save(out)?;
    Ok(checkpoint)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let net = load_network(&args.net)?;
    let scheme = MaskingScheme::parse(&args.scheme)?;
    let init_seed = args.init_seed.unwrap_or(args.seed.wrapping_add(1));
    let metrics_path = args.out.with_extension("metrics.log");
    let checkpoint = train_one(
        &net,
        scheme,
        args.samples,
        args.epochs,
        args.batch,
        args.lr,
        args.seed,
        init_seed,
        args.checkpoint_every,
        &args.out,
        &metrics_path,
        false,
    )?;
    println!(
        "wrote {} ({}) and {}",
        args.out.display(),
        checkpoint.id(),
        metrics_path.display()
    );

    let mut fields = vec![
        ("net", args.net.display().to_string()),
        ("scheme", args.scheme.clone()),
        ("samples", args.samples.to_string()),
        ("epochs", args.epochs.to_string()),
        ("batch", args.batch.to_string()),
        ("lr", args.lr.to_string()),
        ("seed", args.seed.to_string()),
        ("init-seed", init_seed.to_string()),
        ("out", args.out.display().to_string()),
    ];
    if let Some(every) = args.checkpoint_every {
        fields.push(("checkpoint-every", every.to_string()));
    }
    RunManifest::new("train", fields).write_alongside(&args.out)?;
    Ok(())
}

fn checkpoint_matches_network(checkpoint: &Checkpoint, net: &NoisyOrNetwork) -> Result<()> {
    let sizes = net.layer_sizes();
    let expected = vec![sizes.risk_factors, sizes.diseases, sizes.symptoms];
    if checkpoint.model.branch_nodes() != expected {
        bail!(
            "checkpoint shape {:?} does not match network layers {:?}",
            checkpoint.model.branch_nodes(),
            expected
        );
    }
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let net = load_network(&args.net)?;
    let checkpoint = Checkpoint::load(&args.checkpoint)?;
    checkpoint_matches_network(&checkpoint, &net)?;
    let obs = ObservationModel::parse(&args.obs_model)
        .ok_or_else(|| anyhow!("unknown observation model `{}`", args.obs_model))?;
    let sizes = parse_sizes(&args.sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let queries = build_test_set(&net, obs, &sizes, args.per_size, args.query_node, &mut rng)?;
    let meta = ReportMeta {
        network_id: net.id(),
        checkpoint_id: checkpoint.id(),
        seed: args.seed,
        query_node: args.query_node,
    };
    let report = evaluate(
        &checkpoint.model,
        &net,
        &queries,
        &checkpoint.scheme,
        obs.name(),
        &meta,
    )?;
    let plot_path = args.out.with_extension("plotdata.txt");
    let table_path = args.out.with_extension("table.txt");
    export_report(&report, &plot_path, ExportFormat::PlotData)?;
    export_report(&report, &table_path, ExportFormat::TableText)?;
    println!("wrote {} and {}", plot_path.display(), table_path.display());

    RunManifest::new(
        "evaluate",
        vec![
            ("net", args.net.display().to_string()),
            ("checkpoint", args.checkpoint.display().to_string()),
            ("obs-model", args.obs_model.clone()),
            ("sizes", args.sizes.clone()),
            ("per-size", args.per_size.to_string()),
            ("query-node", args.query_node.to_string()),
            ("seed", args.seed.to_string()),
            ("out", args.out.display().to_string()),
        ],
    )
    .write_alongside(&plot_path)?;
    Ok(())
}

fn cmd_reproduce(args: ReproduceArgs) -> Result<()> {
    let net = load_network(&args.net)?;
    fs::create_dir_all(&args.out)?;
    let sizes = parse_sizes(&args.sizes)?;
    let query_nodes: Vec<usize> = if args.query_nodes == "all" {
        (0..net.num_diseases())
            .map(|i| net.disease_global(i))
            .collect()
    } else {
        args.query_nodes
            .split(',')
            .map(|p| p.trim().parse::<usize>().context("bad query node"))
            .collect::<Result<_>>()?
    };

    // One model per scheme; seeds derive from the base seed so the whole
    // experiment replays from the manifest alone.
    let mut checkpoints = Vec::new();
    for (index, name) in MaskingScheme::all_names().iter().enumerate() {
        let scheme = MaskingScheme::parse(name)?;
        let out = args.out.join(format!("model-{name}.umck"));
        let metrics = args.out.join(format!("train-{name}.metrics.log"));
        eprintln!("training {name} ...");
        let checkpoint = train_one(
            &net,
            scheme,
            args.samples,
            args.epochs,
            args.batch,
            args.lr,
            args.seed.wrapping_add(index as u64),
            args.seed.wrapping_add(100 + index as u64),
            None,
            &out,
            &metrics,
            true,
        )?;
        checkpoints.push((name.to_string(), checkpoint));
    }

    // One merged report per (query node, observation model); the test set
    // and oracle ground truth are shared across schemes.
    for &query_node in &query_nodes {
        for obs in [ObservationModel::Uniform, ObservationModel::Markov] {
            let test_seed = args
                .seed
                .wrapping_add(1000)
                .wrapping_add(1000 * query_node as u64)
                .wrapping_add(u64::from(obs == ObservationModel::Markov) * 500);
            let mut rng = ChaCha8Rng::seed_from_u64(test_seed);
            let queries =
                build_test_set(&net, obs, &sizes, args.per_size, query_node, &mut rng)?;
            let truth = um_core::oracle_predictions(&net, &queries)?;
            let mut reports = Vec::new();
            for (name, checkpoint) in &checkpoints {
                let meta = ReportMeta {
                    network_id: net.id(),
                    checkpoint_id: checkpoint.id(),
                    seed: test_seed,
                    query_node,
                };
                let predictions = um_core::model_predictions(&checkpoint.model, &queries)?;
                reports.push(um_core::build_report(
                    &queries,
                    &predictions,
                    &truth,
                    name,
                    obs.name(),
                    &meta,
                )?);
            }
            let merged = EvaluationReport::merge(&reports)?;
            let stem = args.out.join(format!("report-q{query_node}-{}", obs.name()));
            export_report(
                &merged,
                &stem.with_extension("plotdata.txt"),
                ExportFormat::PlotData,
            )?;
            export_report(
                &merged,
                &stem.with_extension("table.txt"),
                ExportFormat::TableText,
            )?;
        }
    }

    RunManifest::new(
        "reproduce",
        vec![
            ("net", args.net.display().to_string()),
            ("samples", args.samples.to_string()),
            ("epochs", args.epochs.to_string()),
            ("batch", args.batch.to_string()),
            ("lr", args.lr.to_string()),
            ("sizes", args.sizes.clone()),
            ("per-size", args.per_size.to_string()),
            ("query-nodes", args.query_nodes.clone()),
            ("seed", args.seed.to_string()),
            ("out", args.out.display().to_string()),
        ],
    )
    .write(&args.out.join("manifest.json"))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_rerun(args: RerunArgs) -> Result<()> {
    let manifest = RunManifest::read(&args.manifest)?;
    let mut full = vec!["um".to_string()];
    full.extend(manifest.to_argv());
    let cli = Cli::try_parse_from(&full)
        .with_context(|| format!("manifest {} does not parse", args.manifest.display()))?;
    run(cli.command)
}
