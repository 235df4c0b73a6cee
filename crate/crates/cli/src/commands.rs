use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use smilegan::data::{self, AtrophySpec, Group, Rate, RoiTable, SyntheticCounts};
use smilegan::model::{constant_subtype_batch, ChangeReduction};
use smilegan::monitor::{epoch_monitor, monitor_csv_string, LabelHistory, MonitorRecord};
use smilegan::numerics::{CovKind, Matrix};
use smilegan::selection::{self, probabilities_csv, ConsensusResult};
use smilegan::{ModelError, SmileGanModel, TrainOutcome, TrainingConfig};

use crate::config::{self, RunConfig, SimulationConfig, RESOLVED_CONFIG};
use crate::CliError;

#[derive(Parser, Debug)]
#[command(name = "smilegan", version, about = "Semi-supervised clustering of patients by learned CN-to-PT transformations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic cohort with known subtypes.
    Simulate(SimulateArgs),
    /// Add simulated atrophy patterns to the PT rows of an existing table.
    Inject(InjectArgs),
    /// Residualize covariates and normalize ROIs against the CN rows.
    Preprocess(PreprocessArgs),
    /// Train one model, or several reruns plus their consensus.
    Train(TrainArgs),
    /// Choose the number of subtypes by holdout reproducibility.
    SelectM(SelectArgs),
    /// Combine trained models into template-aligned averaged probabilities.
    Consensus(ConsensusArgs),
    /// Subtype probabilities of a trained model.
    Infer(InferArgs),
    /// Monitoring metrics and per-subtype ROI changes of a trained model.
    MonitorExport(MonitorExportArgs),
}

#[derive(Args, Debug)]
pub struct CommonArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for all randomness (falls back to the config file, then SMILEGAN_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Three overlapping patterns plus a confounder on 1200 participants.
    #[value(name = "paper-supp131")]
    ThreePattern,
    /// Compact, wide and combined patterns at a common rate.
    SemiSynthetic,
}

impl Preset {
    fn spec(self) -> AtrophySpec {
        match self {
            Preset::ThreePattern => AtrophySpec::three_pattern(),
            Preset::SemiSynthetic => AtrophySpec::semi_synthetic(Rate::Uniform { lo: 0.1, hi: 0.3 }),
        }
    }
}

#[derive(Args, Debug)]
pub struct SpecArgs {
    /// Built-in atrophy specification.
    #[arg(long, value_enum, conflicts_with = "spec")]
    preset: Option<Preset>,
    /// Atrophy specification as JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Fixed atrophy rate for every pattern.
    #[arg(long, conflicts_with = "rate_range")]
    rate: Option<f64>,
    /// Per-participant rates drawn uniformly from [LO, HI].
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    rate_range: Option<Vec<f64>>,
}

impl SpecArgs {
    fn resolve(&self, current: Option<AtrophySpec>, default: Preset) -> Result<AtrophySpec, CliError> {
        let mut spec = if let Some(path) = &self.spec {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid spec {}: {e}", path.display())))?
        } else if let Some(p) = self.preset {
            p.spec()
        } else {
            current.unwrap_or_else(|| default.spec())
        };
        if let Some(rate) = config::parse_rate(self.rate, self.rate_range.as_deref()) {
            spec = spec.with_rate(rate);
        }
        Ok(spec)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long)]
    n_cn: Option<usize>,
    #[arg(long)]
    n_pt: Option<usize>,
    #[arg(long)]
    n_features: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InjectArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    spec: SpecArgs,
    /// Base ROI table; its PT rows become the pseudo-patients.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Skip covariate residualization even when age/sex columns exist.
    #[arg(long)]
    no_residualize: bool,
    /// Replay stored statistics instead of fitting new ones.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CovKindArg {
    Full,
    Diagonal,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReductionArg {
    Mean,
    Sum,
}

#[derive(Args, Debug, Default)]
pub struct TrainingFlags {
    /// Number of subtypes.
    #[arg(long)]
    m: Option<usize>,
    /// Weight of the change loss.
    #[arg(long)]
    mu: Option<f64>,
    /// Weight of the cluster loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// How the per-sample L1 change is reduced over features.
    #[arg(long, value_enum)]
    change_reduction: Option<ReductionArg>,
    /// Box bound for the weights of f and g.
    #[arg(long)]
    clip_c: Option<f64>,
    /// ADAM learning rate of the discriminator.
    #[arg(long)]
    lr_d: Option<f64>,
    /// ADAM learning rate of the mapping network.
    #[arg(long)]
    lr_f: Option<f64>,
    /// ADAM learning rate of the clustering network.
    #[arg(long)]
    lr_g: Option<f64>,
    /// ADAM first-moment decay.
    #[arg(long)]
    beta1: Option<f64>,
    /// ADAM second-moment decay.
    #[arg(long)]
    beta2: Option<f64>,
    /// Global L2 norm bound on each network's gradient.
    #[arg(long)]
    grad_clip: Option<f64>,
    /// Rows per CN and PT batch.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Epoch limit when no stopping rule fires.
    #[arg(long)]
    max_epoch: Option<usize>,
    /// Covariance used by the Wasserstein monitor.
    #[arg(long, value_enum)]
    cov_kind: Option<CovKindArg>,
    /// Epochs before stopping rules apply.
    #[arg(long)]
    warmup: Option<usize>,
    /// Epochs without Wasserstein improvement before it counts as converged.
    #[arg(long)]
    wd_patience: Option<usize>,
    /// Smallest Wasserstein decrease that counts as improvement.
    #[arg(long)]
    wd_min_delta: Option<f64>,
    /// Largest alteration quantity that counts as stable.
    #[arg(long)]
    aq_threshold: Option<usize>,
    /// Largest cluster loss that counts as converged.
    #[arg(long)]
    cluster_loss_threshold: Option<f64>,
}

impl TrainingFlags {
    fn apply(&self, c: &mut TrainingConfig) {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        set(&mut c.m, self.m);
        set(&mut c.mu, self.mu);
        set(&mut c.lambda, self.lambda);
        set(&mut c.clip_c, self.clip_c);
        set(&mut c.lr_discriminator, self.lr_d);
        set(&mut c.lr_mapping, self.lr_f);
        set(&mut c.lr_clustering, self.lr_g);
        set(&mut c.beta1, self.beta1);
        set(&mut c.beta2, self.beta2);
        set(&mut c.grad_clip, self.grad_clip);
        set(&mut c.batch_size, self.batch_size);
        set(&mut c.max_epoch, self.max_epoch);
        set(&mut c.stop.warmup_epochs, self.warmup);
        set(&mut c.stop.wd_patience, self.wd_patience);
        set(&mut c.stop.wd_min_delta, self.wd_min_delta);
        set(&mut c.stop.cluster_loss_threshold, self.cluster_loss_threshold);
        if let Some(a) = self.aq_threshold {
            c.stop.aq_threshold = Some(a);
        }
        if let Some(r) = self.change_reduction {
            c.change_reduction = match r {
                ReductionArg::Mean => ChangeReduction::Mean,
                ReductionArg::Sum => ChangeReduction::Sum,
            };
        }
        if let Some(k) = self.cov_kind {
            c.monitor.cov_kind = match k {
                CovKindArg::Full => CovKind::Full,
                CovKindArg::Diagonal => CovKind::Diagonal,
            };
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    training: TrainingFlags,
    /// ROI table with CN and PT rows.
    #[arg(long, alias = "data")]
    cn_pt: Option<PathBuf>,
    /// Independent reruns; more than one adds consensus outputs.
    #[arg(long)]
    reruns: Option<usize>,
    /// Worker threads across reruns (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    training: TrainingFlags,
    #[arg(long, alias = "data")]
    cn_pt: Option<PathBuf>,
    /// Candidate subtype counts.
    #[arg(long, value_delimiter = ',')]
    candidates: Option<Vec<usize>>,
    #[arg(long)]
    repetitions: Option<usize>,
    /// Fraction of CN and of PT rows left out per repetition.
    #[arg(long)]
    holdout_fraction: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ConsensusArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Model checkpoints to combine.
    #[arg(long, num_args = 1..)]
    models: Vec<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Include CN rows as well as PT rows.
    #[arg(long)]
    all_rows: bool,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MonitorExportArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Inject(a) => inject(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::SelectM(a) => select_m(a),
        Command::Consensus(a) => consensus(a),
        Command::Infer(a) => infer(a),
        Command::MonitorExport(a) => monitor_export(a),
    }
}

fn start(common: &CommonArgs, command: &str) -> Result<(RunConfig, u64), CliError> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.command = command.into();
    let seed = cfg.resolve_seed(common.seed)?;
    Ok((cfg, seed))
}

fn out_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

/// Config path for commands whose output is a single file.
fn sibling_config(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{RESOLVED_CONFIG}"))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        out_dir(parent)?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_table(path: &str) -> Result<RoiTable, CliError> {
    RoiTable::read_csv(path).map_err(|e| CliError::Data(format!("{path}: {e}")))
}

fn load_model(path: &str) -> Result<SmileGanModel, CliError> {
    SmileGanModel::load(path).map_err(|e| CliError::Data(format!("{path}: {e}")))
}

fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let (mut cfg, seed) = start(&a.common, "simulate")?;
    let current = cfg.simulation.take();
    let spec = a.spec.resolve(current.as_ref().map(|s| s.spec.clone()), Preset::ThreePattern)?;
    let mut counts = current.map(|s| s.counts).unwrap_or_else(SyntheticCounts::benchmark);
    counts.n_cn = a.n_cn.unwrap_or(counts.n_cn);
    counts.n_pt = a.n_pt.unwrap_or(counts.n_pt);
    counts.n_features = a.n_features.unwrap_or(counts.n_features);
    let (table, truth) = data::generate_synthetic(&spec, counts, seed)?;
    out_dir(&a.out)?;
    table.write_csv(a.out.join("roi.csv"))?;
    truth.write_csv(a.out.join("truth.csv"))?;
    cfg.simulation = Some(SimulationConfig { spec, counts });
    cfg.write(&a.out.join(RESOLVED_CONFIG))
}

fn inject(a: InjectArgs) -> Result<(), CliError> {
    let (mut cfg, seed) = start(&a.common, "inject")?;
    let data = cfg.input("data", a.data.as_deref())?;
    let base = read_table(&data)?;
    let current = cfg.simulation.take();
    let spec = a.spec.resolve(current.as_ref().map(|s| s.spec.clone()), Preset::SemiSynthetic)?;
    let counts = SyntheticCounts {
        n_features: base.num_features(),
        n_cn: base.indices_of(Group::Cn).len(),
        n_pt: base.indices_of(Group::Pt).len(),
    };
    let (table, truth) = data::inject_atrophy(&base, &spec, seed)?;
    out_dir(&a.out)?;
    table.write_csv(a.out.join("roi.csv"))?;
    truth.write_csv(a.out.join("truth.csv"))?;
    cfg.simulation = Some(SimulationConfig { spec, counts });
    cfg.write(&a.out.join(RESOLVED_CONFIG))
}

fn preprocess(a: PreprocessArgs) -> Result<(), CliError> {
    let (mut cfg, _) = start(&a.common, "preprocess")?;
    let data = cfg.input("data", a.data.as_deref())?;
    let table = read_table(&data)?;
    let stats_path = a.stats.as_deref().map(|p| p.display().to_string()).or_else(|| cfg.inputs.get("stats").cloned());
    let (out, stats) = if let Some(path) = stats_path {
        cfg.inputs.insert("stats".into(), path.clone());
        let text = std::fs::read_to_string(&path)?;
        let stats: data::PreprocessStats =
            serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{path}: {e}")))?;
        (stats.apply(&table)?, stats)
    } else {
        let residualize = if a.no_residualize { false } else { cfg.residualize.unwrap_or(table.covariates.is_some()) };
        cfg.residualize = Some(residualize);
        data::preprocess(&table, residualize)?
    };
    out_dir(&a.out)?;
    out.write_csv(a.out.join("roi.csv"))?;
    let mut stats_json = serde_json::to_string_pretty(&stats).expect("stats serialize");
    stats_json.push('\n');
    write_text(&a.out.join("preprocess-stats.json"), &stats_json)?;
    cfg.write(&a.out.join(RESOLVED_CONFIG))
}

fn training_config(cfg: &mut RunConfig, flags: &TrainingFlags) -> Result<TrainingConfig, CliError> {
    flags.apply(&mut cfg.training);
    cfg.training.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg.training.clone())
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {jobs} workers: {e}")))
}

/// Seed of rerun `k`; the first rerun uses the run seed itself.
pub fn rerun_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

struct RunFiles {
    model: String,
    monitor: String,
    assignments: String,
}

fn run_files(model: &SmileGanModel, monitor: &[MonitorRecord], pt: &Matrix, ids: &[String]) -> Result<RunFiles, CliError> {
    Ok(RunFiles {
        model: model.to_checkpoint_string(),
        monitor: monitor_csv_string(monitor, model.m()),
        assignments: probabilities_csv(ids, &model.assign(pt)?),
    })
}

fn write_run(dir: &Path, files: &RunFiles) -> Result<(), CliError> {
    out_dir(dir)?;
    write_text(&dir.join("model.json"), &files.model)?;
    write_text(&dir.join("monitor.csv"), &files.monitor)?;
    write_text(&dir.join("assignments.csv"), &files.assignments)
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let (mut cfg, seed) = start(&a.common, "train")?;
    let data = cfg.input("data", a.cn_pt.as_deref())?;
    let training = training_config(&mut cfg, &a.training)?;
    cfg.reruns = a.reruns.unwrap_or(cfg.reruns);
    if cfg.reruns == 0 {
        return Err(CliError::Usage("--reruns must be at least 1".into()));
    }
    cfg.jobs = Some(a.jobs.or(cfg.jobs).unwrap_or_else(config::available_jobs));

    let table = read_table(&data)?;
    let (cn, pt, ids) = (table.cn_rows(), table.pt_rows(), table.ids_of(Group::Pt));
    out_dir(&a.out)?;
    cfg.write(&a.out.join(RESOLVED_CONFIG))?;

    let reruns = cfg.reruns;
    let results: Vec<Result<TrainOutcome, ModelError>> = pool(cfg.jobs())?.install(|| {
        (0..reruns)
            .into_par_iter()
            .map(|k| smilegan::train(&cn, &pt, &training, rerun_seed(seed, k)))
            .collect()
    });

    let run_dir = |k: usize| if reruns == 1 { a.out.clone() } else { a.out.join("runs").join(format!("run_{k:03}")) };
    let mut outcomes = Vec::with_capacity(reruns);
    let mut failure = None;
    for (k, result) in results.into_iter().enumerate() {
        match result {
            Ok(o) => outcomes.push(o),
            Err(ModelError::NonFiniteLoss { loss, epoch, iteration, last_finite, monitor }) => {
                let files = run_files(&last_finite, &monitor, &pt, &ids)?;
                write_run(&run_dir(k), &files)?;
                failure.get_or_insert(CliError::Numerical(format!(
                    "run {k}: {loss} loss became non-finite at epoch {epoch}, iteration {iteration}; \
                     last finite model saved in {}",
                    run_dir(k).display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
    }
    if let Some(e) = failure {
        return Err(e);
    }

    let files: Vec<RunFiles> =
        outcomes.iter().map(|o| run_files(&o.model, &o.monitor, &pt, &ids)).collect::<Result<_, _>>()?;
    if reruns == 1 {
        return write_run(&a.out, &files[0]);
    }
    for (k, f) in files.iter().enumerate() {
        write_run(&run_dir(k), f)?;
    }
    let models: Vec<SmileGanModel> = outcomes.into_iter().map(|o| o.model).collect();
    let result = selection::consensus(&models, &pt)?;
    write_run(&a.out, &files[result.template])?;
    write_consensus(&a.out.join("consensus.csv"), &result, &ids, reruns_seeds(seed, reruns))
}

fn reruns_seeds(seed: u64, n: usize) -> Vec<u64> {
    (0..n).map(|k| rerun_seed(seed, k)).collect()
}

fn write_consensus(path: &Path, result: &ConsensusResult, ids: &[String], seeds: Vec<u64>) -> Result<(), CliError> {
    write_text(path, &result.to_csv_string(ids))?;
    let summary = serde_json::json!({
        "template": result.template,
        "permutations": result.permutations,
        "seeds": seeds,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_text(&path.with_extension("json"), &text)
}

fn select_m(a: SelectArgs) -> Result<(), CliError> {
    let (mut cfg, seed) = start(&a.common, "select-m")?;
    let data = cfg.input("data", a.cn_pt.as_deref())?;
    let training = training_config(&mut cfg, &a.training)?;
    if let Some(c) = a.candidates {
        cfg.holdout.candidate_ms = c;
    }
    cfg.holdout.repetitions = a.repetitions.unwrap_or(cfg.holdout.repetitions);
    cfg.holdout.holdout_fraction = a.holdout_fraction.unwrap_or(cfg.holdout.holdout_fraction);
    cfg.jobs = Some(a.jobs.or(cfg.jobs).unwrap_or_else(config::available_jobs));

    let table = read_table(&data)?;
    out_dir(&a.out)?;
    cfg.write(&a.out.join(RESOLVED_CONFIG))?;
    let report = pool(cfg.jobs())?
        .install(|| selection::choose_m(&table.cn_rows(), &table.pt_rows(), &cfg.holdout, &training, seed))?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    write_text(&a.out.join("selection.json"), &text)
}

fn consensus(a: ConsensusArgs) -> Result<(), CliError> {
    let (mut cfg, _) = start(&a.common, "consensus")?;
    let data = cfg.input("data", a.data.as_deref())?;
    if !a.models.is_empty() {
        cfg.inputs.retain(|k, _| !k.starts_with("model_"));
        for (k, p) in a.models.iter().enumerate() {
            cfg.inputs.insert(format!("model_{k:03}"), p.display().to_string());
        }
    }
    let paths: Vec<String> = cfg.inputs.iter().filter(|(k, _)| k.starts_with("model_")).map(|(_, v)| v.clone()).collect();
    if paths.is_empty() {
        return Err(CliError::Usage("consensus needs at least one --models checkpoint".into()));
    }
    let models: Vec<SmileGanModel> = paths.iter().map(|p| load_model(p)).collect::<Result<_, _>>()?;
    let table = read_table(&data)?;
    let result = selection::consensus(&models, &table.pt_rows())?;
    let seeds = models.iter().map(|m| m.seed).collect();
    write_consensus(&a.out, &result, &table.ids_of(Group::Pt), seeds)?;
    cfg.write(&sibling_config(&a.out))
}

fn infer(a: InferArgs) -> Result<(), CliError> {
    let (mut cfg, _) = start(&a.common, "infer")?;
    let model = load_model(&cfg.input("model", a.model.as_deref())?)?;
    let table = read_table(&cfg.input("data", a.data.as_deref())?)?;
    let (rows, ids) = if a.all_rows {
        (table.values.clone(), table.ids.clone())
    } else {
        (table.pt_rows(), table.ids_of(Group::Pt))
    };
    let probs = model.assign(&rows)?;
    write_text(&a.out, &probabilities_csv(&ids, &probs))?;
    cfg.write(&sibling_config(&a.out))
}

/// `roi,change_0..`: relative change of the mean of f(CN, e_i) against the
/// CN mean, per ROI.
fn mapping_changes_csv(model: &SmileGanModel, cn: &Matrix, names: &[String]) -> Result<String, CliError> {
    let m = model.m();
    let cn_mean: Vec<f64> = (0..cn.cols()).map(|j| cn.column(j).iter().sum::<f64>() / cn.rows() as f64).collect();
    let mut changes = Vec::with_capacity(m);
    for i in 0..m {
        let (mapped, _) = model.forward_f(cn, &constant_subtype_batch(m, cn.rows(), i))?;
        changes.push(
            (0..cn.cols())
                .map(|j| {
                    let mean = mapped.column(j).iter().sum::<f64>() / cn.rows() as f64;
                    (mean - cn_mean[j]) / cn_mean[j]
                })
                .collect::<Vec<f64>>(),
        );
    }
    let mut out = String::from("roi");
    for i in 0..m {
        out.push_str(&format!(",change_{i}"));
    }
    out.push('\n');
    for (j, name) in names.iter().enumerate() {
        out.push_str(name);
        for c in &changes {
            out.push(',');
            out.push_str(&data::format_value(c[j]));
        }
        out.push('\n');
    }
    Ok(out)
}

fn monitor_export(a: MonitorExportArgs) -> Result<(), CliError> {
    use rand::SeedableRng;
    let (mut cfg, seed) = start(&a.common, "monitor-export")?;
    let model = load_model(&cfg.input("model", a.model.as_deref())?)?;
    let table = read_table(&cfg.input("data", a.data.as_deref())?)?;
    let (cn, pt) = (table.cn_rows(), table.pt_rows());
    if cn.rows() == 0 || pt.rows() == 0 {
        return Err(CliError::Data("monitor-export needs CN and PT rows".into()));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (record, _) = epoch_monitor(&model, &cn, &pt, &LabelHistory::default(), &mut rng)?;
    out_dir(&a.out)?;
    write_text(&a.out.join("monitor.csv"), &monitor_csv_string(&[record], model.m()))?;
    write_text(&a.out.join("mapping-changes.csv"), &mapping_changes_csv(&model, &cn, &table.feature_names)?)?;
    cfg.write(&a.out.join(RESOLVED_CONFIG))
}
