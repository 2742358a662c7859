//! Command-line front end. Every subcommand returns `Result`, and `run`
//! maps errors to exit codes (1 usage, 2 data, 3 divergence).

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{build_recipe, named_recipes, predict, resolve_recipe_arg, EnsembleRecipe, Normalization};
use crate::metrics::{confusion, MetricsRow, METRICS_HEADER};
use crate::preprocess::{preprocess_dir, ResizeStrategy};
use crate::report::{ConfigFile, ReportTable};
use crate::selection::{
    objective_value, sffs, CandidatePool, HeldOutResult, LooReport, Objective, Selection,
    SelectionConfig, SffsSelector, SffsStep,
};
use crate::toylab::{build_toy_zoo, write_suite, GridSpec, ToySuite};
use crate::ws::{ws_optimize, ws_select, WsConfig, WsSelector};
use crate::zoo::{load_scores, validate_zoo, write_atomic, ClassMap, Manifest, Zoo};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "ENSEMBLIER_THREADS";

#[derive(Parser, Debug)]
#[command(name = "ensemblier", version, about = "Build, select and evaluate classifier ensembles from score files")]
struct Cli {
    /// Sectioned key=value file supplying defaults; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every score file of a manifest.
    Validate {
        #[arg(long)]
        zoo: Option<PathBuf>,
    },
    /// Resize a directory of PNG images.
    Preprocess {
        #[arg(long)]
        strategy: ResizeStrategy,
        #[arg(long)]
        target: usize,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic tasks and toy model zoos.
    Toylab {
        #[command(subcommand)]
        command: ToylabCommand,
    },
    /// Metrics for one score file or every entry of a zoo.
    Metrics(MetricsArgs),
    /// Sum-rule fusion of a recipe on one dataset split.
    Fuse {
        #[arg(long)]
        zoo: Option<PathBuf>,
        #[arg(long)]
        recipe: String,
        #[arg(long)]
        dataset: String,
        /// Split id, or `all` for every split stacked.
        #[arg(long, default_value = "all")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Floating forward subset selection.
    Sffs(SffsArgs),
    /// Regularized weighted selection.
    Ws(WsArgs),
    /// Recipe-by-dataset table with rank column.
    Report(ReportArgs),
}

#[derive(Subcommand, Debug)]
enum ToylabCommand {
    /// Write the synthetic tasks as CSV.
    Generate {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the toy zoo and write score files plus manifest.
    Train {
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// A single score file.
    #[arg(long, conflicts_with = "zoo")]
    scores: Option<PathBuf>,
    #[arg(long)]
    zoo: Option<PathBuf>,
    /// Comma-separated class names for `--scores`.
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    split: Option<String>,
    /// Confusion-matrix CSV grid (single score file only).
    #[arg(long, requires = "scores")]
    confusion: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SffsArgs {
    #[arg(long)]
    zoo: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    objective: Option<Objective>,
    /// Also run the leave-one-out-dataset protocol.
    #[arg(long)]
    loo: bool,
    /// Report exactly `k` members instead of the best size up to `k`.
    #[arg(long)]
    exact_size: bool,
    #[arg(long)]
    normalization: Option<Normalization>,
    /// Write predictions of each held-out dataset into this directory.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// JSON output path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct WsArgs {
    #[arg(long)]
    zoo: Option<PathBuf>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    reg: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, conflicts_with = "top_k")]
    threshold: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    loo: bool,
    #[arg(long)]
    normalization: Option<Normalization>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    zoo: Option<PathBuf>,
    /// `all` or a comma-separated list of recipe names / recipe files.
    #[arg(long)]
    recipes: Option<String>,
    /// `f_macro`, `acc_macro` or `acc_overall`.
    #[arg(long)]
    metric: Option<String>,
    /// Directory for report.csv, report.json and confusion grids.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parameters shared by the selection and report commands, after merging
/// the config file under the command line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub zoo_root: PathBuf,
    pub output: Option<PathBuf>,
    pub seed: u64,
    pub objective: Objective,
    pub recipes: Vec<String>,
    pub selection: SelectionConfig,
    pub normalization: Normalization,
    pub ws: Option<WsConfig>,
    pub top_k: Option<usize>,
}

/// Resolves values: flag, then `[section]` key, then top-level key, then default.
struct Layers<'a> {
    file: Option<&'a ConfigFile>,
    section: &'a str,
}

impl Layers<'_> {
    fn pick<T: FromStr>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.pick_opt(flag, key)?.unwrap_or(default))
    }

    fn pick_opt<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file {
            Some(f) => f.get_parsed(self.section, key),
            None => Ok(None),
        }
    }

    fn zoo(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        let p = self
            .pick_opt(flag, "zoo")?
            .ok_or_else(|| Error::Usage("--zoo is required (or `zoo = ...` in the config file)".into()))?;
        Ok(manifest_path(&p))
    }
}

/// Accepts either a manifest file or a directory holding `manifest.json`.
fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("manifest.json")
    } else {
        p.to_path_buf()
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // a pool may already exist when embedded; that is fine
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match configure_threads().and_then(|_| dispatch(cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let file = cli.config.as_deref().map(ConfigFile::load).transpose()?;
    let layers = |section| Layers { file: file.as_ref(), section };
    match cli.command {
        Command::Validate { zoo } => cmd_validate(&layers("validate").zoo(zoo)?),
        Command::Preprocess { strategy, target, input, out } => {
            let written = preprocess_dir(strategy, target, &input, &out)?;
            println!("wrote {} images to {}", written.len(), out.display());
            Ok(())
        }
        Command::Toylab { command } => cmd_toylab(command, &layers("toylab")),
        Command::Metrics(a) => cmd_metrics(a, &layers("metrics")),
        Command::Fuse { zoo, recipe, dataset, split, out } => {
            cmd_fuse(&layers("fuse").zoo(zoo)?, &recipe, &dataset, &split, out.as_deref())
        }
        Command::Sffs(a) => cmd_sffs(a, &layers("sffs")),
        Command::Ws(a) => cmd_ws(a, &layers("ws")),
        Command::Report(a) => cmd_report(a, &layers("report")),
    }
}

fn cmd_validate(manifest: &Path) -> Result<()> {
    let m = Manifest::load(manifest)?;
    let report = validate_zoo(&m);
    print!("{}", report.render());
    if report.is_ok() {
        println!("{} entries OK", report.entries.len());
        Ok(())
    } else {
        let bad = report.entries.iter().filter(|e| e.error.is_some()).count();
        Err(Error::Validation {
            row: 0,
            msg: format!("{bad} bad entries, {} cross-check failures", report.cross_check_failures.len()),
        })
    }
}

fn cmd_toylab(command: ToylabCommand, layers: &Layers<'_>) -> Result<()> {
    match command {
        ToylabCommand::Generate { seed, out } => {
            let seed = layers.pick(seed, "seed", 0)?;
            let data = write_suite(&ToySuite::default_suite(seed), &out)?;
            for d in &data {
                println!("{}\t{} samples\t{} classes", d.spec.dataset_id, d.n(), d.spec.n_classes);
            }
            Ok(())
        }
        ToylabCommand::Train { grid, seed, out } => {
            let seed = layers.pick(seed, "seed", 0)?;
            let mut grid = GridSpec::by_name(&layers.pick(grid, "grid", "default".to_string())?)?;
            // training knobs are config-only
            grid.train.lr = layers.pick(None, "lr", grid.train.lr)?;
            grid.train.epochs = layers.pick(None, "epochs", grid.train.epochs)?;
            grid.train.batch = layers.pick(None, "batch", grid.train.batch)?;
            grid.hidden = layers.pick(None, "hidden", grid.hidden)?;
            let m = build_toy_zoo(&ToySuite::default_suite(seed), &grid, seed, &out)?;
            println!("wrote {} score files and {}", m.entries.len(), out.join("manifest.json").display());
            Ok(())
        }
    }
}

/// Class count implied by a score file header.
fn sniff_classes(path: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text.lines().next().unwrap_or("");
    let fields = header.split(',').count();
    if fields < 4 {
        return Err(Error::Format { path: path.to_path_buf(), line: 1, msg: "header lists fewer than 2 classes".into() });
    }
    Ok(fields - 2)
}

fn metrics_row(dataset: &str, split: &str, method: &str, s: &crate::ScoreMatrix) -> Result<(MetricsRow, crate::metrics::ConfusionMatrix)> {
    let cm = confusion(&predict(s), s.labels(), s.n_classes())?;
    Ok((MetricsRow::compute(dataset, split, method, &cm)?, cm))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_metrics(a: MetricsArgs, layers: &Layers<'_>) -> Result<()> {
    let mut text = format!("{METRICS_HEADER}\n");
    if let Some(path) = &a.scores {
        let cm = match &a.classes {
            Some(list) => ClassMap::new(list.split(',').map(str::trim))?,
            None => ClassMap::numbered(sniff_classes(path)?)?,
        };
        let s = load_scores(path, &cm)?;
        let dataset = a.dataset.as_deref().unwrap_or("-");
        let split = a.split.as_deref().unwrap_or("-");
        let (row, conf) = metrics_row(dataset, split, &s.classifier_id, &s)?;
        text.push_str(&row.to_csv_line());
        text.push('\n');
        if let Some(p) = &a.confusion {
            write_atomic(p, conf.to_csv(cm.names()).as_bytes())?;
        }
        return emit(a.out.as_deref(), &text);
    }
    let zoo = Zoo::open(&layers.zoo(a.zoo)?)?;
    for (e, s) in zoo.entries() {
        if a.dataset.as_ref().is_some_and(|d| *d != e.dataset_id) || a.split.as_ref().is_some_and(|sp| *sp != e.split_id) {
            continue;
        }
        let (row, _) = metrics_row(&e.dataset_id, &e.split_id, &e.record.classifier_id, s)?;
        text.push_str(&row.to_csv_line());
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)
}

fn cmd_fuse(manifest: &Path, recipe: &str, dataset: &str, split: &str, out: Option<&Path>) -> Result<()> {
    let zoo = Zoo::open(manifest)?;
    let recipe = resolve_recipe_arg(recipe)?;
    let fused = build_recipe(&zoo, &recipe, dataset, split)?;
    if let Some(p) = out {
        crate::zoo::save_scores(p, &fused)?;
    }
    let (row, _) = metrics_row(dataset, split, &recipe.name, &fused)?;
    println!("{METRICS_HEADER}\n{}", row.to_csv_line());
    Ok(())
}

fn selection_config(k: Option<usize>, objective: Option<Objective>, exact: bool, layers: &Layers<'_>) -> Result<SelectionConfig> {
    let k = layers
        .pick_opt(k, "k")?
        .ok_or_else(|| Error::Usage("--k is required (or `k = ...` in the config file)".into()))?;
    let mut cfg = SelectionConfig::new(k).with_objective(layers.pick(objective, "objective", Objective::default())?);
    cfg.lookahead = layers.pick(None, "lookahead", cfg.lookahead)?;
    cfg.exact_size = exact || layers.pick(None, "exact_size", false)?;
    Ok(cfg)
}

#[derive(Serialize)]
struct HeldOutJson<'a> {
    held_out: &'a str,
    subset: &'a [String],
    weights: &'a [f64],
    accuracy: f64,
    f_macro: f64,
}

fn held_out_json(r: &HeldOutResult) -> HeldOutJson<'_> {
    HeldOutJson { held_out: &r.held_out, subset: &r.subset, weights: &r.weights, accuracy: r.accuracy, f_macro: r.f_macro }
}

#[derive(Serialize)]
struct LooJson<'a> {
    per_dataset: Vec<HeldOutJson<'a>>,
    avg_accuracy: f64,
}

fn loo_json(r: &LooReport) -> LooJson<'_> {
    LooJson { per_dataset: r.per_dataset.iter().map(held_out_json).collect(), avg_accuracy: r.avg_accuracy }
}

fn write_predictions(dir: &Path, r: &LooReport) -> Result<()> {
    for h in &r.per_dataset {
        write_atomic(&dir.join(format!("{}.csv", h.held_out)), h.predictions_csv().as_bytes())?;
    }
    Ok(())
}

/// Applies a final selection to every dataset of the pool.
fn per_dataset_scores(pool: &CandidatePool, sel: &Selection) -> Result<Vec<HeldOutResult>> {
    (0..pool.datasets.len()).map(|d| pool.evaluate(d, sel)).collect()
}

fn finish_json(value: &impl Serialize, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn cmd_sffs(a: SffsArgs, layers: &Layers<'_>) -> Result<()> {
    #[derive(Serialize)]
    struct FinalSelection<'a> {
        subset: Vec<String>,
        objective: f64,
        trace: &'a [SffsStep],
        per_dataset: Vec<HeldOutJson<'a>>,
    }
    #[derive(Serialize)]
    struct Output<'a> {
        run: RunConfig,
        #[serde(flatten, skip_serializing_if = "Option::is_none")]
        loo: Option<LooJson<'a>>,
        final_selection: FinalSelection<'a>,
    }
    let manifest = layers.zoo(a.zoo)?;
    let zoo = Zoo::open(&manifest)?;
    let cfg = selection_config(a.k, a.objective, a.exact_size, layers)?;
    let norm = layers.pick(a.normalization, "normalization", Normalization::default())?;
    let run = RunConfig {
        zoo_root: manifest,
        output: a.out.clone(),
        seed: 0,
        objective: cfg.objective,
        recipes: Vec::new(),
        selection: cfg.clone(),
        normalization: norm,
        ws: None,
        top_k: None,
    };
    let pool = CandidatePool::from_zoo(&zoo, &zoo.datasets(), norm)?;
    let loo = if a.loo { Some(crate::selection::loo_with(&pool, &SffsSelector(cfg.clone()))?) } else { None };
    if let (Some(dir), Some(r)) = (&a.predictions, &loo) {
        write_predictions(dir, r)?;
    }
    let all: Vec<usize> = (0..pool.datasets.len()).collect();
    let outcome = sffs(&pool.stacked(&all)?, &cfg)?;
    let sel = Selection { weights: vec![1.0; outcome.subset_indices.len()], members: outcome.subset_indices.clone() };
    let per = per_dataset_scores(&pool, &sel)?;
    let output = Output {
        run,
        loo: loo.as_ref().map(loo_json),
        final_selection: FinalSelection {
            subset: sel.members.iter().map(|&i| pool.identities[i].to_string()).collect(),
            objective: outcome.objective,
            trace: &outcome.trace,
            per_dataset: per.iter().map(held_out_json).collect(),
        },
    };
    finish_json(&output, a.out.as_deref())?;
    if a.out.is_some() {
        print!("{}", selection_summary(loo.as_ref(), &output.final_selection.subset, &per));
    }
    Ok(())
}

fn selection_summary(loo: Option<&LooReport>, subset: &[String], per: &[HeldOutResult]) -> String {
    let mut out = String::new();
    if let Some(r) = loo {
        for h in &r.per_dataset {
            let _ = writeln!(out, "held out {:<16} accuracy {:.4}  ({} members)", h.held_out, h.accuracy, h.subset.len());
        }
        let _ = writeln!(out, "average accuracy {:.4}", r.avg_accuracy);
    }
    let _ = writeln!(out, "final selection ({} members): {}", subset.len(), subset.join(", "));
    for h in per {
        let _ = writeln!(out, "  {:<16} accuracy {:.4}  F_macro {:.4}", h.held_out, h.accuracy, h.f_macro);
    }
    out
}

fn cmd_ws(a: WsArgs, layers: &Layers<'_>) -> Result<()> {
    #[derive(Serialize)]
    struct Weight {
        classifier_id: String,
        w: f64,
    }
    #[derive(Serialize)]
    struct Output<'a> {
        run: RunConfig,
        weights: Vec<Weight>,
        selected: Vec<String>,
        per_dataset: Vec<HeldOutJson<'a>>,
        loss_trace: &'a [f64],
        #[serde(skip_serializing_if = "Option::is_none")]
        loo: Option<LooJson<'a>>,
    }
    let manifest = layers.zoo(a.zoo)?;
    let zoo = Zoo::open(&manifest)?;
    let d = WsConfig::default();
    let cfg = WsConfig {
        gamma: layers.pick(a.gamma, "gamma", d.gamma)?,
        reg_coefficient: layers.pick(a.reg, "reg", d.reg_coefficient)?,
        learning_rate: layers.pick(a.lr, "lr", d.learning_rate)?,
        epochs: layers.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: layers.pick(a.batch, "batch", d.batch_size)?,
        seed: layers.pick(a.seed, "seed", d.seed)?,
        zero_threshold: layers.pick_opt(a.threshold, "threshold")?,
        init_scale: layers.pick(None, "init_scale", d.init_scale)?,
    };
    cfg.validate()?;
    let top_k = layers.pick_opt(a.top_k, "top_k")?;
    let norm = layers.pick(a.normalization, "normalization", Normalization::default())?;
    let pool = CandidatePool::from_zoo(&zoo, &zoo.datasets(), norm)?;
    let selector = WsSelector { cfg: cfg.clone(), top_k };
    let loo = if a.loo { Some(crate::selection::loo_with(&pool, &selector)?) } else { None };
    if let (Some(dir), Some(r)) = (&a.predictions, &loo) {
        write_predictions(dir, r)?;
    }
    let all: Vec<usize> = (0..pool.datasets.len()).collect();
    let stacked = pool.stacked(&all)?;
    let outcome = ws_optimize(&stacked, &cfg)?;
    let chosen = ws_select(&outcome.weights, selector.rule_for(stacked.len()))?;
    let sel = Selection {
        members: chosen.selected.clone(),
        weights: chosen.selected.iter().map(|&i| chosen.weights.as_slice()[i]).collect(),
    };
    let per = per_dataset_scores(&pool, &sel)?;
    let selected: Vec<String> = sel.members.iter().map(|&i| pool.identities[i].to_string()).collect();
    let output = Output {
        run: RunConfig {
            zoo_root: manifest,
            output: a.out.clone(),
            seed: cfg.seed,
            objective: Objective::default(),
            recipes: Vec::new(),
            selection: SelectionConfig::new(sel.members.len()),
            normalization: norm,
            ws: Some(cfg.clone()),
            top_k,
        },
        weights: pool
            .identities
            .iter()
            .zip(outcome.weights.as_slice())
            .map(|(id, &w)| Weight { classifier_id: id.to_string(), w })
            .collect(),
        selected: selected.clone(),
        per_dataset: per.iter().map(held_out_json).collect(),
        loss_trace: &outcome.loss_trace,
        loo: loo.as_ref().map(loo_json),
    };
    finish_json(&output, a.out.as_deref())?;
    if a.out.is_some() {
        print!("{}", selection_summary(loo.as_ref(), &selected, &per));
    }
    Ok(())
}

/// Report metrics selectable by `--metric`.
fn metric_value(name: &str, row: &MetricsRow) -> Result<f64> {
    match name.to_ascii_lowercase().as_str() {
        "f_macro" | "f" => Ok(row.f_macro),
        "acc_macro" => Ok(row.acc_macro),
        "acc_overall" | "accuracy" => Ok(row.acc_overall),
        other => Err(Error::Usage(format!("unknown metric `{other}` (expected f_macro|acc_macro|acc_overall)"))),
    }
}

fn report_recipes(spec: &str) -> Result<(Vec<EnsembleRecipe>, bool)> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok((named_recipes(), true));
    }
    let list = spec.split(',').map(str::trim).filter(|s| !s.is_empty()).map(resolve_recipe_arg).collect::<Result<Vec<_>>>()?;
    Ok((list, false))
}

/// Builds the recipe-by-dataset table. With `skip_unresolved`, recipes that
/// select nothing on some dataset are left out instead of failing.
pub fn build_report(
    zoo: &Zoo,
    recipes: &[EnsembleRecipe],
    metric: &str,
    skip_unresolved: bool,
) -> Result<(ReportTable, Vec<(String, String, String)>)> {
    use rayon::prelude::*;
    let datasets = zoo.datasets();
    let results: Vec<Result<Option<(Vec<f64>, Vec<(String, String, String)>)>>> = recipes
        .par_iter()
        .map(|r| {
            let mut cells = Vec::new();
            let mut grids = Vec::new();
            for d in &datasets {
                let fused = match build_recipe(zoo, r, d, "all") {
                    Ok(f) => f,
                    Err(Error::RecipeResolution { .. }) if skip_unresolved => return Ok(None),
                    Err(e) => return Err(e),
                };
                let (row, cm) = metrics_row(d, "all", &r.name, &fused)?;
                cells.push(metric_value(metric, &row)?);
                let names = zoo.manifest.classmap_for(d)?;
                grids.push((r.name.clone(), d.clone(), cm.to_csv(names.names())));
            }
            Ok(Some((cells, grids)))
        })
        .collect();
    let mut rows = Vec::new();
    let mut cells = Vec::new();
    let mut grids = Vec::new();
    for (r, res) in recipes.iter().zip(results) {
        if let Some((c, g)) = res? {
            rows.push(r.name.clone());
            cells.push(c);
            grids.extend(g);
        }
    }
    if rows.is_empty() {
        return Err(Error::RecipeResolution { recipe: "report".into(), filter: "no recipe matched the zoo".into() });
    }
    Ok((ReportTable::new(metric, rows, datasets, cells)?, grids))
}

fn cmd_report(a: ReportArgs, layers: &Layers<'_>) -> Result<()> {
    let zoo = Zoo::open(&layers.zoo(a.zoo)?)?;
    let (recipes, skip) = report_recipes(&layers.pick(a.recipes, "recipes", "all".to_string())?)?;
    let metric = layers.pick(a.metric, "metric", "F_macro".to_string())?;
    let (table, grids) = build_report(&zoo, &recipes, &metric, skip)?;
    print!("{}", table.render());
    if let Some(dir) = layers.pick_opt(a.out, "out")? {
        write_atomic(&dir.join("report.csv"), table.to_csv().as_bytes())?;
        let mut json = serde_json::to_string_pretty(&table)?;
        json.push('\n');
        write_atomic(&dir.join("report.json"), json.as_bytes())?;
        for (recipe, dataset, grid) in &grids {
            write_atomic(&dir.join("confusion").join(format!("{recipe}__{dataset}.csv")), grid.as_bytes())?;
        }
    }
    Ok(())
}

/// Objective of a fused matrix (used by tests and the FFI layer).
pub fn fused_objective(objective: Objective, s: &crate::ScoreMatrix) -> f64 {
    objective_value(objective, &predict(s), s.labels(), s.n_classes())
}
