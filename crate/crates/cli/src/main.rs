use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use celltop::complex::export::ComplexSnapshot;
use celltop::complex::{enumerate_induced_cycles, Skeleton};
use celltop::config::ExperimentConfig;
use celltop::data::convert::{convert_linqs, convert_webkb, ConvertOptions};
use celltop::data::{load_dataset, save_dataset, stratified_splits};
use celltop::entmax::{entmax_forward, DEFAULT_EPS};
use celltop::network::DcmModel;
use celltop::runner::{resolve_splits, run};
use celltop::training::{evaluate, GraphMode, Variant};

#[derive(Parser)]
#[command(
    name = "celltop",
    version,
    about = "Latent cell complex inference and node classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    WithGraph,
    WithoutGraph,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Full,
    AllPolygons,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    /// `out1_node_feature_label.txt` and `out1_graph_edges.txt`.
    Webkb,
    /// `<name>.content` and `<name>.cites`.
    Linqs,
}

#[derive(Subcommand)]
enum Command {
    /// Train over every split and write metrics, snapshots and exports.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
    },
    /// Evaluate saved parameters on one split.
    Eval {
        /// Directory written by `run` (e.g. `split_00/best`).
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0)]
        split: usize,
        /// Master seed of the run, used to regenerate splits when the dataset has none.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Enumerate the induced cycles of a graph.
    Lift {
        /// JSON file `{"n": N, "edges": [[u, v], ...]}`.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 4)]
        kmax: usize,
        /// Where to write the cycles; defaults to `<graph>.cycles.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the α-entmax of a score vector.
    Entmax {
        #[arg(long)]
        alpha: f64,
        /// Comma-separated scores.
        #[arg(long, allow_hyphen_values = true)]
        scores: String,
        #[arg(long, default_value_t = DEFAULT_EPS)]
        eps: f64,
    },
    /// Write the complex inferred by saved parameters as JSON and DOT.
    ExportComplex {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "complex")]
        stem: String,
    },
    /// Convert raw public dataset files into the dataset directory layout.
    Convert {
        #[arg(long, value_enum)]
        format: Format,
        /// Directory with the raw files.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
        /// Divide each feature row by its sum.
        #[arg(long)]
        row_normalize: bool,
        /// Embed this many stratified 60/20/20 splits.
        #[arg(long)]
        splits: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure with its exit status: 1 for invalid input, 2 for a training abort.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure {
            code: 1,
            error: e.into(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Run {
            config,
            data,
            out,
            seed,
            epochs,
            splits,
            workers,
            mode,
            variant,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            cfg.apply_env()?;
            if let Some(d) = data {
                cfg.data.path = d;
            }
            if let Some(o) = out {
                cfg.run.out_dir = o;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = splits {
                cfg.train.splits = s;
            }
            if let Some(w) = workers {
                cfg.run.workers = w;
            }
            if let Some(m) = mode {
                cfg.train.mode = match m {
                    ModeArg::WithGraph => GraphMode::WithGraph,
                    ModeArg::WithoutGraph => GraphMode::WithoutGraph,
                };
            }
            if let Some(v) = variant {
                cfg.train.variant = match v {
                    VariantArg::Full => Variant::Full,
                    VariantArg::AllPolygons => Variant::AllPolygons,
                };
            }
            let summary = run(&cfg).map_err(|e| Failure {
                code: e.exit_code() as u8,
                error: e.into(),
            })?;
            println!(
                "dataset {} ({} nodes, sha256 {})",
                summary.dataset, summary.n_nodes, summary.dataset_hash
            );
            for (name, s) in &summary.aggregate {
                println!("{name:<16} {:.4} ± {:.4} (n={})", s.mean, s.std, s.n);
            }
            println!("wrote {}", cfg.run.out_dir.display());
            Ok(())
        }
        Command::Eval {
            model,
            data,
            split,
            seed,
        } => {
            let (model, dataset) = load_pair(&model, &data)?;
            let cfg = ExperimentConfig {
                train: celltop::training::TrainConfig {
                    splits: split + 1,
                    seed,
                    ..Default::default()
                },
                ..Default::default()
            };
            let splits = resolve_splits(&dataset, &cfg)?;
            let (metrics, _) = evaluate(&model, &dataset, &splits[split])?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(())
        }
        Command::Lift { graph, kmax, out } => {
            let g = read_graph(&graph)?;
            let cycles = enumerate_induced_cycles(&g, kmax)?;
            let out = out.unwrap_or_else(|| graph.with_extension("cycles.json"));
            std::fs::write(&out, serde_json::to_string(&cycles)?)
                .with_context(|| format!("writing {}", out.display()))?;
            println!("candidates {}", cycles.len());
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Entmax { alpha, scores, eps } => {
            let z = scores
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("bad score {s:?}")))
                .collect::<anyhow::Result<Vec<_>>>()?;
            let r = entmax_forward(&z, alpha, eps)?;
            let probs: Vec<String> = r.probs.iter().map(|p| p.to_string()).collect();
            println!("{}", probs.join(","));
            Ok(())
        }
        Command::ExportComplex { model, data, out, stem } => {
            let (model, dataset) = load_pair(&model, &data)?;
            let g_in = if model.config.graph_conditioned {
                Some(
                    dataset
                        .input_graph()
                        .ok_or_else(|| anyhow!("model needs the dataset's input graph"))?,
                )
            } else {
                None
            };
            let pred = model.predict(&dataset.features, g_in.as_ref())?;
            ComplexSnapshot::new(&pred.complex)
                .with_labels(dataset.labels.clone())
                .write(&out, &stem)
                .with_context(|| format!("writing {}", out.display()))?;
            println!(
                "edges {} polygons {} of {} candidates",
                pred.complex.skeleton().n_edges(),
                pred.polygons.selected.len(),
                pred.polygons.candidates.len()
            );
            Ok(())
        }
        Command::Convert {
            format,
            input,
            name,
            out,
            row_normalize,
            splits,
            seed,
        } => {
            let opts = ConvertOptions { row_normalize };
            let (mut ds, report) = match format {
                Format::Webkb => convert_webkb(
                    &name,
                    &input.join("out1_node_feature_label.txt"),
                    &input.join("out1_graph_edges.txt"),
                    opts,
                )?,
                Format::Linqs => convert_linqs(
                    &name,
                    &input.join(format!("{name}.content")),
                    &input.join(format!("{name}.cites")),
                    opts,
                )?,
            };
            if let Some(k) = splits {
                ds.splits = Some(stratified_splits(&ds.labels, ds.n_classes, k, seed, 0.6, 0.2));
            }
            ds.validate().map_err(|m| anyhow!(m))?;
            save_dataset(&ds, &out)?;
            println!(
                "{}: {} nodes, {} features, {} classes, {} edges",
                ds.name,
                ds.n(),
                ds.f_in(),
                ds.n_classes,
                ds.edges.as_ref().map_or(0, Vec::len)
            );
            println!(
                "dropped {} self-loops, {} duplicate edges, {} references to unknown nodes",
                report.self_loops, report.duplicate_edges, report.unknown_nodes
            );
            Ok(())
        }
    }
}

fn load_pair(model: &Path, data: &Path) -> anyhow::Result<(DcmModel, celltop::data::Dataset)> {
    let model = DcmModel::load(model).with_context(|| format!("loading model from {}", model.display()))?;
    let dataset = load_dataset(data)?;
    if dataset.f_in() != model.n_features || dataset.n_classes != model.n_classes {
        bail!(
            "model expects {} features and {} classes, dataset has {} and {}",
            model.n_features,
            model.n_classes,
            dataset.f_in(),
            dataset.n_classes
        );
    }
    Ok((model, dataset))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    n: usize,
    edges: Vec<(usize, usize)>,
}

fn read_graph(path: &Path) -> anyhow::Result<Skeleton> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let g: GraphFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok(Skeleton::new(g.n, g.edges)?)
}
