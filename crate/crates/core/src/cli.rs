//! `glocal` command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::clustering::{kmeans, parse_partition, write_partition, Partition};
use crate::correlation::{correlation_csv, cosine_correlation};
use crate::cv::{grid_search, Grid};
use crate::dataset::{
    apply_mask, hidden_truth, parse_gml, parse_hidden, split, write_gml_with_comment, write_hidden,
    Dataset, MaskSpec,
};
use crate::error::GlocalError;
use crate::metrics::evaluate;
use crate::model::{load_model, predict, save_model, score, Hyperparams};
use crate::solver::fit;
use crate::synth::{synthesize, SynthSpec};

#[derive(Debug, Parser)]
#[command(
    name = "glocal",
    version,
    about = "Multi-label learning with learned global and local label correlations"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted synthetic dataset (full + masked) and its hidden entries.
    Synth(SynthArgs),
    /// Hide all but rho percent of the label positions.
    Mask(MaskArgs),
    /// Random train/test split of the instances.
    Split(SplitArgs),
    /// Partition instances with k-means and write a partition file.
    Cluster(ClusterArgs),
    /// Fit a model and save it.
    Train(TrainArgs),
    /// Score instances with a saved model.
    Predict(PredictArgs),
    /// Ranking metrics of a score file against ground truth.
    Eval(EvalArgs),
    /// Cosine label-correlation matrix as CSV.
    Correlation(CorrelationArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub l: usize,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long = "k-true")]
    pub k_true: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 100.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "out-full")]
    pub out_full: PathBuf,
    #[arg(long = "out-masked")]
    pub out_masked: PathBuf,
    #[arg(long = "out-hidden")]
    pub out_hidden: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub rho: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Sidecar file listing the hidden entries.
    #[arg(long)]
    pub hidden: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long = "train-fraction", default_value_t = 0.6)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub groups: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "max-iter", default_value_t = crate::clustering::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda3: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda4: f64,
    #[arg(long = "latent-k", default_value_t = 3)]
    pub latent_k: usize,
    #[arg(long, default_value_t = 4)]
    pub groups: usize,
    #[arg(long = "outer-iters", default_value_t = 50)]
    pub outer_iters: usize,
    #[arg(long = "inner-steps", default_value_t = 5)]
    pub inner_steps: usize,
    #[arg(long = "warm-iters", default_value_t = 20)]
    pub warm_iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl HyperArgs {
    pub fn to_hyperparams(&self) -> Hyperparams {
        Hyperparams {
            lambda: self.lambda,
            lambda2: self.lambda2,
            lambda3: self.lambda3,
            lambda4: self.lambda4,
            k: self.latent_k,
            g: self.groups,
            outer_iters: self.outer_iters,
            inner_steps: self.inner_steps,
            warm_iters: self.warm_iters,
            tol: self.tol,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Write the per-iteration objective as `iter,objective` CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Use this partition instead of running k-means.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Grid file (`key = v1,v2` lines) searched by cross-validation first.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Append a constant feature (intercept).
    #[arg(long)]
    pub bias: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    /// Also write sign predictions (`+1`/`-1`).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// The model was trained with `--bias`.
    #[arg(long)]
    pub bias: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    /// GML file whose labels are the ground truth.
    #[arg(long, required_unless_present = "hidden")]
    pub truth: Option<PathBuf>,
    /// Evaluate only the entries listed in a hidden-entry sidecar.
    #[arg(long, conflicts_with = "truth")]
    pub hidden: Option<PathBuf>,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorrelationArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Restrict to the instances of this 1-based group of `--partition`.
    #[arg(long, requires = "partition")]
    pub group: Option<usize>,
    #[arg(long)]
    pub partition: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn check_inputs(paths: &[&Path]) -> anyhow::Result<()> {
    for p in paths {
        if !p.is_file() {
            bail!("input file {} does not exist", p.display());
        }
    }
    Ok(())
}

fn check_outputs(paths: &[&Path]) -> anyhow::Result<()> {
    for p in paths {
        let parent = p.parent().filter(|d| !d.as_os_str().is_empty());
        if let Some(dir) = parent {
            if !dir.is_dir() {
                bail!("output directory {} does not exist", dir.display());
            }
        }
    }
    Ok(())
}

fn read(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    parse_gml(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

/// Dense text matrix: optional `#` comments, `rows cols`, then one row per line.
pub fn write_matrix<T: std::fmt::Display>(a: &Array2<T>, comment: Option<&str>) -> String {
    let mut out = String::new();
    if let Some(c) = comment {
        for line in c.lines() {
            let _ = writeln!(out, "# {line}");
        }
    }
    let _ = writeln!(out, "{} {}", a.nrows(), a.ncols());
    for row in a.outer_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    out
}

pub fn parse_matrix(text: &str) -> crate::Result<Array2<f64>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines
        .next()
        .ok_or_else(|| GlocalError::parse(1, "missing `rows cols` header"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<Result<_, _>>()
        .map_err(|_| GlocalError::parse(hline, "expected `rows cols`"))?;
    let [rows, cols] = dims[..] else {
        return Err(GlocalError::parse(hline, "expected `rows cols`"));
    };
    let mut vals = Vec::with_capacity(rows * cols);
    for (lineno, line) in lines {
        for t in line.split_whitespace() {
            let v: f64 = t
                .parse()
                .map_err(|_| GlocalError::parse(lineno, format!("bad number {t:?}")))?;
            vals.push(v);
        }
    }
    if vals.len() != rows * cols {
        return Err(GlocalError::Shape(format!(
            "matrix declared {rows}x{cols} but holds {} values",
            vals.len()
        )));
    }
    Array2::from_shape_vec((rows, cols), vals).map_err(|e| GlocalError::Shape(e.to_string()))
}

fn describe_hp(hp: &Hyperparams) -> String {
    format!(
        "lambda={} lambda2={} lambda3={} lambda4={} latent_k={} groups={} outer_iters={} inner_steps={} warm_iters={} tol={} seed={}",
        hp.lambda, hp.lambda2, hp.lambda3, hp.lambda4, hp.k, hp.g, hp.outer_iters, hp.inner_steps, hp.warm_iters, hp.tol, hp.seed
    )
}

fn run_synth(a: &SynthArgs) -> anyhow::Result<()> {
    check_outputs(&[&a.out_full, &a.out_masked, &a.out_hidden])?;
    let out = synthesize(&SynthSpec {
        l: a.l,
        n: a.n,
        d: a.d,
        k_true: a.k_true,
        noise: a.noise,
        rho: a.rho,
        seed: a.seed,
    })?;
    let comment = format!(
        "glocal synth l={} n={} d={} k_true={} noise={} rho={} seed={}",
        a.l, a.n, a.d, a.k_true, a.noise, a.rho, a.seed
    );
    write(
        &a.out_full,
        &write_gml_with_comment(&out.full, Some(&comment)),
    )?;
    write(
        &a.out_masked,
        &write_gml_with_comment(&out.masked, Some(&comment)),
    )?;
    write(&a.out_hidden, &write_hidden(&out.hidden, Some(&comment)))?;
    Ok(())
}

fn run_mask(a: &MaskArgs) -> anyhow::Result<()> {
    check_inputs(&[&a.data])?;
    check_outputs(&[&a.out, &a.hidden])?;
    let spec = MaskSpec::new(a.rho, a.seed)?;
    let data = load_dataset(&a.data)?;
    let (masked, hidden) = apply_mask(&data, &spec);
    let comment = format!("glocal mask rho={} seed={}", a.rho, a.seed);
    write(&a.out, &write_gml_with_comment(&masked, Some(&comment)))?;
    write(&a.hidden, &write_hidden(&hidden, Some(&comment)))?;
    Ok(())
}

fn run_split(a: &SplitArgs) -> anyhow::Result<()> {
    check_inputs(&[&a.data])?;
    check_outputs(&[&a.train, &a.test])?;
    let data = load_dataset(&a.data)?;
    let (train, test) = split(&data, a.train_fraction, a.seed)?;
    let comment = format!(
        "glocal split train_fraction={} seed={}",
        a.train_fraction, a.seed
    );
    write(&a.train, &write_gml_with_comment(&train, Some(&comment)))?;
    write(&a.test, &write_gml_with_comment(&test, Some(&comment)))?;
    Ok(())
}

fn run_cluster(a: &ClusterArgs) -> anyhow::Result<()> {
    check_inputs(&[&a.data])?;
    check_outputs(&[&a.out])?;
    let data = load_dataset(&a.data)?;
    let p = kmeans(&data.features, a.groups, a.seed, a.max_iter)?;
    let comment = format!(
        "glocal cluster groups={} seed={} max_iter={}",
        a.groups, a.seed, a.max_iter
    );
    write(&a.out, &write_partition(&p, Some(&comment)))?;
    Ok(())
}

fn run_train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.data];
    inputs.extend(a.partition.as_deref());
    inputs.extend(a.grid.as_deref());
    check_inputs(&inputs)?;
    let mut outputs: Vec<&Path> = vec![&a.model];
    outputs.extend(a.trace.as_deref());
    check_outputs(&outputs)?;

    let mut data = load_dataset(&a.data)?;
    if a.bias {
        data.features = data.features.with_bias();
    }
    let mut hp = a.hyper.to_hyperparams();
    let fixed_partition: Option<Partition> = match &a.partition {
        Some(p) => {
            let part = parse_partition(&read(p)?, &data.features)
                .with_context(|| format!("partition {}", p.display()))?;
            hp.g = part.g();
            Some(part)
        }
        None => None,
    };
    hp.validate()?;

    if let Some(grid_path) = &a.grid {
        let grid = Grid::parse(&read(grid_path)?)
            .with_context(|| format!("grid {}", grid_path.display()))?;
        if fixed_partition.is_some() && !grid.g.is_empty() {
            bail!("a grid over g cannot be combined with --partition");
        }
        let res = grid_search(&data, &hp, &grid, a.folds, hp.seed)?;
        for (cand, loss) in &res.scores {
            eprintln!("cv {} rkl={loss}", describe_hp(cand));
        }
        hp = res.best;
        eprintln!("selected {}", describe_hp(&hp));
    }

    let partition = match fixed_partition {
        Some(p) => p,
        None => kmeans(
            &data.features,
            hp.g,
            hp.seed,
            crate::clustering::DEFAULT_MAX_ITER,
        )?,
    };
    let (model, trace) = fit(&data, &partition, &hp)?;
    let comment = format!("glocal train {} bias={}", describe_hp(&hp), a.bias);
    write(&a.model, &save_model(&model, Some(&comment)))?;
    if let Some(t) = &a.trace {
        write(t, &trace.to_csv(Some(&comment)))?;
    }
    let last = trace
        .records
        .last()
        .map(|r| (r.iter, r.objective))
        .unwrap_or((0, f64::NAN));
    println!(
        "iterations={} objective={} converged={}",
        last.0, last.1, trace.converged
    );
    Ok(())
}

fn run_predict(a: &PredictArgs) -> anyhow::Result<()> {
    check_inputs(&[&a.data, &a.model])?;
    let mut outputs: Vec<&Path> = vec![&a.scores];
    outputs.extend(a.labels.as_deref());
    check_outputs(&outputs)?;
    let mut data = load_dataset(&a.data)?;
    if a.bias {
        data.features = data.features.with_bias();
    }
    let model =
        load_model(&read(&a.model)?).with_context(|| format!("model {}", a.model.display()))?;
    let s = score(&model, &data.features)?;
    let comment = format!("glocal predict model={}", a.model.display());
    write(&a.scores, &write_matrix(&s, Some(&comment)))?;
    if let Some(lp) = &a.labels {
        write(
            lp,
            &write_matrix(&predict(&model, &data.features)?, Some(&comment)),
        )?;
    }
    Ok(())
}

fn run_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.scores];
    inputs.extend(a.truth.as_deref());
    inputs.extend(a.hidden.as_deref());
    check_inputs(&inputs)?;
    if let Some(o) = &a.out {
        check_outputs(&[o])?;
    }
    let scores = parse_matrix(&read(&a.scores)?)
        .with_context(|| format!("scores {}", a.scores.display()))?;
    let truth = match (&a.truth, &a.hidden) {
        (Some(t), _) => load_dataset(t)?.labels.values().clone(),
        (None, Some(h)) => {
            let entries = parse_hidden(&read(h)?)
                .with_context(|| format!("hidden entries {}", h.display()))?;
            hidden_truth(&entries, scores.nrows(), scores.ncols())?
        }
        (None, None) => bail!("either --truth or --hidden is required"),
    };
    let report = evaluate(&scores, &truth)?;
    let comment = format!("glocal eval scores={}", a.scores.display());
    let text = report.to_csv(Some(&comment));
    match &a.out {
        Some(o) => write(o, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn run_correlation(a: &CorrelationArgs) -> anyhow::Result<()> {
    let mut inputs: Vec<&Path> = vec![&a.data];
    inputs.extend(a.partition.as_deref());
    check_inputs(&inputs)?;
    check_outputs(&[&a.out])?;
    let data = load_dataset(&a.data)?;
    let labels = match (&a.partition, a.group) {
        (Some(p), Some(g)) => {
            let part = parse_partition(&read(p)?, &data.features)?;
            if g == 0 || g > part.g() {
                bail!("group {g} out of range 1..={}", part.g());
            }
            data.labels.select(&part.members()[g - 1])
        }
        _ => data.labels.clone(),
    };
    write(&a.out, &correlation_csv(&cosine_correlation(&labels)))?;
    Ok(())
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Mask(a) => run_mask(a),
        Command::Split(a) => run_split(a),
        Command::Cluster(a) => run_cluster(a),
        Command::Train(a) => run_train(a),
        Command::Predict(a) => run_predict(a),
        Command::Eval(a) => run_eval(a),
        Command::Correlation(a) => run_correlation(a),
    }
}
