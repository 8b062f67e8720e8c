use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use sepmetric::data::save_dataset;
use sepmetric::embedding::{load_embedding, Embedding, EmbeddingMeta};
use sepmetric::eval::{load_records, Correlation, RECORDS_HEADER};
use sepmetric::metric::{estimate_metric_with, MetricOptions, MetricReport, Weighting, DEFAULT_MC_SAMPLES};
use sepmetric::{
    correlate_runs, fit_class_gaussians, fit_reference_classifier, load_dataset, pca_project, stratified_split,
    synth_gaussian_mixture, tsne_embed, ClassifierKind, EvalResult, LabeledDataset, RepresentationRecord, SynthSpec,
    TsneConfig,
};

use crate::svg;

const SEED_ENV: &str = "SEPMETRIC_SEED";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| sepmetric::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

#[derive(Args)]
pub struct SynthArgs {
    /// Mixture spec (JSON with `classes[].mean`, `classes[].cov`, `classes[].n`, `seed`).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec::load(&args.spec)?;
    let data = synth_gaussian_mixture(&spec)?;
    save_dataset(&data, &args.out)?;
    println!(
        "wrote {} rows ({} classes, {} features, seed {}) to {}",
        data.n(),
        data.num_classes(),
        data.dim(),
        spec.seed,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long, default_value_t = 0.5)]
    train_fraction: f64,
    #[arg(long, env = SEED_ENV, default_value_t = sepmetric::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

pub fn split(args: SplitArgs) -> Result<()> {
    let data = load_dataset(&args.data, &args.label_column)?;
    let (train, test) = stratified_split(&data, args.train_fraction, args.seed)?;
    save_dataset(&train, &args.train_out)?;
    save_dataset(&test, &args.test_out)?;
    println!(
        "train {} rows -> {}, test {} rows -> {} (seed {})",
        train.n(),
        args.train_out.display(),
        test.n(),
        args.test_out.display(),
        args.seed
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tsne,
    Pca,
}

/// Projection flags shared by `embed` and `estimate`.
#[derive(Args, Clone)]
pub struct ProjectionArgs {
    #[arg(long, value_enum, default_value_t = Method::Tsne)]
    method: Method,
    /// Target dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 30.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 1000)]
    iterations: usize,
    #[arg(long, default_value_t = 200.0)]
    learning_rate: f64,
    #[arg(long, default_value_t = 12.0)]
    early_exaggeration: f64,
    #[arg(long, default_value_t = 250)]
    exaggeration_iters: usize,
    #[arg(long, default_value_t = 0.5)]
    initial_momentum: f64,
    #[arg(long, default_value_t = 0.8)]
    final_momentum: f64,
    #[arg(long, default_value_t = 250)]
    momentum_switch_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    init_scale: f64,
}

impl ProjectionArgs {
    fn tsne_config(&self, seed: u64) -> TsneConfig {
        TsneConfig {
            target_dim: self.dim,
            perplexity: self.perplexity,
            iterations: self.iterations,
            learning_rate: self.learning_rate,
            early_exaggeration: self.early_exaggeration,
            early_exaggeration_iters: self.exaggeration_iters,
            initial_momentum: self.initial_momentum,
            final_momentum: self.final_momentum,
            momentum_switch_iter: self.momentum_switch_iter,
            init_scale: self.init_scale,
            seed,
        }
    }

    fn run(&self, data: &LabeledDataset, seed: u64) -> Result<Embedding> {
        Ok(match self.method {
            Method::Tsne => tsne_embed(data.features(), &self.tsne_config(seed))?,
            Method::Pca => pca_project(data.features(), self.dim)?,
        })
    }
}

#[derive(Args)]
pub struct EmbedArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[command(flatten)]
    projection: ProjectionArgs,
    #[arg(long, env = SEED_ENV, default_value_t = sepmetric::DEFAULT_SEED)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn embed(args: EmbedArgs) -> Result<()> {
    let data = load_dataset(&args.features, &args.label_column)?;
    let embedding = args.projection.run(&data, args.seed)?;
    embedding.save(&args.out, data.labels(), data.class_names())?;
    let objective = match embedding.meta.method {
        sepmetric::EmbeddingMethod::Tsne => "KL",
        sepmetric::EmbeddingMethod::Pca => "retained variance",
    };
    println!(
        "embedded {} rows to {}-D with {} ({objective} {}) -> {}",
        embedding.n(),
        embedding.dim(),
        embedding.meta.method,
        embedding.final_objective(),
        args.out.display()
    );
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Unweighted,
    SampleCount,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Unweighted => Weighting::Unweighted,
            WeightingArg::SampleCount => Weighting::SampleCount,
        }
    }
}

#[derive(Args)]
pub struct EstimateArgs {
    /// Feature file; the projection is computed first.
    #[arg(long, required_unless_present = "embedding_file", conflicts_with = "embedding_file")]
    features: Option<PathBuf>,
    /// Previously written embedding; skips the projection step.
    #[arg(long)]
    embedding_file: Option<PathBuf>,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[command(flatten)]
    projection: ProjectionArgs,
    /// Monte Carlo draws per class.
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = WeightingArg::Unweighted)]
    weighting: WeightingArg,
    #[arg(long, env = SEED_ENV, default_value_t = sepmetric::DEFAULT_SEED)]
    seed: u64,
    /// Also write the computed embedding here.
    #[arg(long)]
    embedding_out: Option<PathBuf>,
    /// Append a flat summary row to this delimited file.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Representation name used in the summary row.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Serialize, Deserialize)]
pub struct EstimateConfig {
    pub input: String,
    pub input_kind: String,
    pub label_column: String,
    pub method: Option<Method>,
    pub target_dim: Option<usize>,
    pub tsne: Option<TsneConfig>,
    pub samples: usize,
    pub weighting: Weighting,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
pub struct EstimateOutput {
    pub command: String,
    pub config: EstimateConfig,
    pub report: MetricReport,
}

pub fn estimate(args: EstimateArgs) -> Result<()> {
    let (points, labels, class_names, meta, config) = if let Some(path) = &args.embedding_file {
        let (data, meta) = load_embedding(path)?;
        let config = EstimateConfig {
            input: path_string(path),
            input_kind: "embedding".into(),
            label_column: "label".into(),
            method: None,
            target_dim: Some(data.dim()),
            tsne: None,
            samples: args.samples,
            weighting: args.weighting.into(),
            seed: args.seed,
        };
        (
            data.features().clone(),
            data.labels().to_vec(),
            data.class_names().to_vec(),
            meta,
            config,
        )
    } else {
        let path = args
            .features
            .as_ref()
            .ok_or_else(|| anyhow!("--features or --embedding-file is required"))?;
        let data = load_dataset(path, &args.label_column)?;
        let embedding = args.projection.run(&data, args.seed)?;
        if let Some(out) = &args.embedding_out {
            embedding.save(out, data.labels(), data.class_names())?;
        }
        let config = EstimateConfig {
            input: path_string(path),
            input_kind: "features".into(),
            label_column: args.label_column.clone(),
            method: Some(args.projection.method),
            target_dim: Some(args.projection.dim),
            tsne: (args.projection.method == Method::Tsne).then(|| args.projection.tsne_config(args.seed)),
            samples: args.samples,
            weighting: args.weighting.into(),
            seed: args.seed,
        };
        let Embedding { points, meta } = embedding;
        (
            points,
            data.labels().to_vec(),
            data.class_names().to_vec(),
            Some(meta),
            config,
        )
    };

    let models = fit_class_gaussians(&points, &labels, &class_names)?;
    let options = MetricOptions {
        n_samples: args.samples,
        seed: args.seed,
        weighting: args.weighting.into(),
    };
    let mut report = estimate_metric_with(&models, &options)?;
    report.embedding_meta = meta.map(strip_trace);

    if let Some(summary) = &args.summary {
        let name = args.name.clone().unwrap_or_else(|| config.input.clone());
        append_summary(summary, &report.summary_row(&name))?;
    }
    let overall = report.overall;
    for (name, (a, se)) in class_names.iter().zip(report.per_class.iter().zip(&report.mc_stderr)) {
        println!("A[{name}]={a:.6} ± {se:.6}");
    }
    write_json(
        &args.out,
        &EstimateOutput {
            command: "estimate".into(),
            config,
            report,
        },
    )?;
    println!("A={overall}");
    Ok(())
}

/// Keeps the report compact: the objective trace lives in the embedding sidecar.
fn strip_trace(mut meta: EmbeddingMeta) -> EmbeddingMeta {
    meta.objective_trace.clear();
    meta
}

fn append_summary(path: &Path, row: &str) -> Result<()> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    if fresh {
        writeln!(f, "{}", MetricReport::summary_header())?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ClassifierArg {
    GaussianDiscriminant,
    Knn,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
    #[arg(long, value_enum, default_value_t = ClassifierArg::GaussianDiscriminant)]
    classifier: ClassifierArg,
    /// Neighbour count for k-NN.
    #[arg(long, default_value_t = sepmetric::eval::DEFAULT_NEIGHBORS)]
    neighbors: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write the confusion matrix as delimited text.
    #[arg(long)]
    confusion_out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
pub struct EvalConfig {
    pub train: String,
    pub test: String,
    pub label_column: String,
    pub classifier: ClassifierKind,
}

#[derive(Serialize, Deserialize)]
pub struct EvalOutput {
    pub command: String,
    pub config: EvalConfig,
    pub result: EvalResult,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let train = load_dataset(&args.train, &args.label_column)?;
    let test = load_dataset(&args.test, &args.label_column)?;
    if train.dim() != test.dim() {
        return Err(sepmetric::Error::InvalidInput(format!(
            "feature dimension mismatch: train has {}, test has {}",
            train.dim(),
            test.dim()
        ))
        .into());
    }
    let test = test
        .align_classes(train.class_names())
        .context("train and test class sets differ")?;
    let kind = match args.classifier {
        ClassifierArg::GaussianDiscriminant => ClassifierKind::GaussianDiscriminant,
        ClassifierArg::Knn => ClassifierKind::Knn {
            neighbors: args.neighbors,
        },
    };
    let result = fit_reference_classifier(&train, kind)?.evaluate(&test)?;
    if let Some(path) = &args.confusion_out {
        std::fs::write(path, result.confusion_csv()).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("classifier: {}", classifier_label(kind));
    for (name, row) in result.class_names.iter().zip(&result.confusion) {
        println!("{name}: {row:?}");
    }
    let accuracy = result.accuracy;
    write_json(
        &args.out,
        &EvalOutput {
            command: "eval".into(),
            config: EvalConfig {
                train: path_string(&args.train),
                test: path_string(&args.test),
                label_column: args.label_column,
                classifier: kind,
            },
            result,
        },
    )?;
    println!("accuracy={accuracy}");
    Ok(())
}

fn classifier_label(kind: ClassifierKind) -> String {
    match kind {
        ClassifierKind::GaussianDiscriminant => "gaussian_discriminant".into(),
        ClassifierKind::Knn { neighbors } => format!("knn (k={neighbors})"),
    }
}

#[derive(Args)]
pub struct CompareArgs {
    /// Delimited file with header `representation,metric_a,test_accuracy`.
    #[arg(long)]
    records: Option<PathBuf>,
    /// `NAME=ESTIMATE_JSON,EVAL_JSON`; repeatable.
    #[arg(long = "run")]
    runs: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Scatter plot of A against test accuracy.
    #[arg(long)]
    plot: Option<PathBuf>,
    /// Also write the collated records as delimited text.
    #[arg(long)]
    records_out: Option<PathBuf>,
}

#[derive(Deserialize)]
struct EstimateInput {
    report: MetricReport,
}

#[derive(Deserialize)]
struct EvalInput {
    result: EvalResult,
}

fn parse_run(spec: &str) -> Result<RepresentationRecord> {
    let (name, files) = spec.split_once('=').ok_or_else(|| {
        sepmetric::Error::InvalidInput(format!("--run '{spec}' must be NAME=ESTIMATE_JSON,EVAL_JSON"))
    })?;
    let (estimate, eval) = files.split_once(',').ok_or_else(|| {
        sepmetric::Error::InvalidInput(format!("--run '{spec}' must be NAME=ESTIMATE_JSON,EVAL_JSON"))
    })?;
    let a: EstimateInput = read_json(Path::new(estimate))?;
    let acc: EvalInput = read_json(Path::new(eval))?;
    Ok(RepresentationRecord::new(name, a.report.overall, acc.result.accuracy)?)
}

#[derive(Serialize)]
struct CompareOutput<'a> {
    command: &'a str,
    sources: Vec<String>,
    #[serde(flatten)]
    correlation: &'a Correlation,
}

pub fn compare(args: CompareArgs) -> Result<()> {
    let mut records = Vec::new();
    let mut sources = Vec::new();
    if let Some(path) = &args.records {
        records.extend(load_records(path)?);
        sources.push(path_string(path));
    }
    for run in &args.runs {
        records.push(parse_run(run)?);
        sources.push(run.clone());
    }
    if records.is_empty() {
        bail!(sepmetric::Error::InvalidInput(
            "no records given; use --records or --run".into()
        ));
    }
    let correlation = correlate_runs(&records)?;
    if let Some(path) = &args.records_out {
        let mut text = format!("{RECORDS_HEADER}\n");
        for r in &correlation.records {
            text.push_str(&format!("{},{},{}\n", r.representation, r.metric_a, r.test_accuracy));
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &args.plot {
        let points: Vec<(String, f64, f64)> = correlation
            .records
            .iter()
            .map(|r| (r.representation.clone(), r.metric_a, r.test_accuracy))
            .collect();
        std::fs::write(path, svg::correlation_scatter(&points, correlation.pearson_r))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    for r in &correlation.records {
        println!(
            "{}: A={:.4} accuracy={:.4}",
            r.representation, r.metric_a, r.test_accuracy
        );
    }
    write_json(
        &args.out,
        &CompareOutput {
            command: "compare",
            sources,
            correlation: &correlation,
        },
    )?;
    println!("r={}", correlation.pearson_r);
    Ok(())
}

#[derive(Args)]
pub struct PlotArgs {
    #[arg(long)]
    embedding: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    title: Option<String>,
}

pub fn plot(args: PlotArgs) -> Result<()> {
    let (data, meta) = load_embedding(&args.embedding)?;
    if data.dim() != 2 {
        bail!(sepmetric::Error::InvalidInput(format!(
            "scatter plots need a 2-D embedding, got {}-D",
            data.dim()
        )));
    }
    let points: Vec<[f64; 2]> = (0..data.n())
        .map(|r| [data.features()[(r, 0)], data.features()[(r, 1)]])
        .collect();
    let title = args.title.clone().unwrap_or_else(|| match &meta {
        Some(m) => format!("{} embedding", m.method),
        None => "embedding".into(),
    });
    let text = svg::embedding_scatter(&points, data.labels(), data.class_names(), &title);
    std::fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    println!(
        "plotted {} points in {} classes -> {}",
        data.n(),
        data.num_classes(),
        args.out.display()
    );
    Ok(())
}
