//! Argument parsing and command dispatch.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use biosession::session::to_json;
use biosession::synth::{gen_corpus, CorpusSpec, GapSpec};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{cluster_sessions, control_tests, glm_models, scenario_means, scenario_tests, session_means, session_row, session_tests, SessionRow};
use crate::bundle::{self, BundleWriter, FileEntry, Manifest};
use crate::config::PipelineConfig;
use crate::corpus::{ingest, process, Failure, Processed};
use crate::format::{g6, json_string};
use crate::{report, CliError};

#[derive(Debug, Parser)]
#[command(name = "biosession", version, about = "Wearable-sensor session analytics")]
pub struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate session files.
    Ingest(Inputs),
    /// Filter, resample, interpolate and normalize every session.
    Preprocess(Inputs),
    /// Extract per-session and per-scenario features.
    Features(Inputs),
    /// Features plus the statistical analyses and GLMs.
    Analyze(Inputs),
    /// Features plus t-SNE / k-means clustering.
    Cluster(Inputs),
    /// The whole pipeline, writing a complete bundle.
    Run(Inputs),
    /// Render a markdown summary of a bundle.
    Report(ReportArgs),
    /// Write a synthetic corpus with its ground truth.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct Inputs {
    /// Session files or directories; defaults to the config's `input`.
    pub paths: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Bundle directory written by `run`.
    pub bundle: PathBuf,
    /// Significance level; defaults to the one the bundle was run with.
    #[arg(long)]
    pub alpha: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Corpus specification (JSON); flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub sessions: Option<u8>,
    /// Session length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Number of sessions given a trace with 60% missing samples.
    #[arg(long)]
    pub heavy_dropouts: Option<usize>,
    /// Random gaps per trace.
    #[arg(long)]
    pub gaps: Option<usize>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match run_cli(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output = Some(o.clone());
    }
    cfg.resolve()
}

pub fn run_cli(cli: Cli) -> Result<(), CliError> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(&cli))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Ingest(i) => cmd_ingest(cli, i),
        Command::Preprocess(i) => pipeline(cli, i, Stage::Preprocess),
        Command::Features(i) => pipeline(cli, i, Stage::Features),
        Command::Analyze(i) => pipeline(cli, i, Stage::Analyze),
        Command::Cluster(i) => pipeline(cli, i, Stage::Cluster),
        Command::Run(i) => pipeline(cli, i, Stage::Run),
        Command::Report(r) => cmd_report(cli, r),
        Command::Simulate(s) => cmd_simulate(cli, s),
    }
}

fn input_paths(cfg: &PipelineConfig, inputs: &Inputs) -> Result<Vec<PathBuf>, CliError> {
    if !inputs.paths.is_empty() {
        return Ok(inputs.paths.clone());
    }
    cfg.input.clone().map(|p| vec![p]).ok_or_else(|| CliError::Usage("no input given: pass paths or set `input` in the config".into()))
}

fn cmd_ingest(cli: &Cli, inputs: &Inputs) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let ing = ingest(&input_paths(&cfg, inputs)?)?;
    let warnings: usize = ing.sessions.iter().map(|s| s.warnings.len()).sum();
    println!("{} sessions ({} files, {} failed, {} warnings)", ing.sessions.len(), ing.total(), ing.failures.len(), warnings);
    for s in &ing.sessions {
        for w in &s.warnings {
            println!("{}: warning: {}: {}", s.file, w.path, w.message);
        }
    }
    for f in &ing.failures {
        println!("{}: error: {}: {}", f.file, f.stage, f.error);
    }
    if let Some(dir) = &cfg.output {
        let mut w = BundleWriter::create(dir)?;
        let mut csv = String::from("file,subject_id,session_index,duration_s,signals,phases,warnings\n");
        for s in &ing.sessions {
            let signals: Vec<String> = s.session.traces.iter().map(|t| t.kind().to_string()).collect();
            let phases: Vec<&str> = s.session.phases.iter().map(|p| p.label.as_str()).collect();
            csv.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                s.file,
                s.session.meta.subject_id,
                s.session.session_index,
                g6(s.session.duration_s),
                signals.join(";"),
                phases.join(";"),
                s.warnings.len()
            ));
        }
        w.write("session_index.csv", &csv)?;
    }
    match ing.failures.first() {
        Some(f) => Err(CliError::Data(format!("{} of {} files failed validation (first: {})", ing.failures.len(), ing.total(), f.file))),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Preprocess,
    Features,
    Analyze,
    Cluster,
    Run,
}

impl Stage {
    fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::Features => "features",
            Stage::Analyze => "analyze",
            Stage::Cluster => "cluster",
            Stage::Run => "run",
        }
    }

    fn analyze(self) -> bool {
        matches!(self, Stage::Analyze | Stage::Run)
    }

    fn cluster(self) -> bool {
        matches!(self, Stage::Cluster | Stage::Run)
    }
}

#[derive(Serialize)]
struct ScorePoint {
    k: usize,
    silhouette: f64,
    davies_bouldin: f64,
    inertia: f64,
}

#[derive(Serialize)]
struct EmbeddedPoint<'a> {
    subject_id: &'a str,
    session_index: u8,
    x: f64,
    y: f64,
    cluster: usize,
}

fn pipeline(cli: &Cli, inputs: &Inputs, stage: Stage) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let out_dir = cfg.output.clone().ok_or_else(|| CliError::Usage("no output directory: pass --out or set `output`".into()))?;
    let paths = input_paths(&cfg, inputs)?;
    let verbose = cli.verbose;

    let ing = ingest(&paths)?;
    if ing.total() == 0 {
        return Err(CliError::Data(format!("no session files found in {}", paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))));
    }
    if verbose {
        eprintln!("ingested {} of {} files", ing.sessions.len(), ing.total());
    }
    let mut failures: Vec<Failure> = ing.failures.clone();
    let mut processed: Vec<Processed> = Vec::new();
    for r in process(&ing.sessions, &cfg, stage != Stage::Preprocess) {
        match r {
            Ok(p) => processed.push(p),
            Err(f) => failures.push(f),
        }
    }
    if verbose {
        eprintln!("processed {} sessions, {} failures", processed.len(), failures.len());
        for f in &failures {
            eprintln!("  {}: {}: {}", f.file, f.stage, f.error);
        }
    }

    let mut manifest = Manifest::new(stage.name(), &cfg);
    manifest.inputs = ing.inputs.iter().map(|(file, sha256)| FileEntry { file: file.clone(), sha256: sha256.clone() }).collect();
    manifest.sessions_total = ing.total();
    manifest.sessions_processed = processed.len();
    manifest.sessions_failed = failures.len();
    manifest.traces_dropped = processed.iter().map(|p| p.log().dropped().count()).sum();

    let mut w = BundleWriter::create(&out_dir)?;
    w.write(bundle::DROP_LOG, &bundle::drop_log_csv(&processed, &failures, cfg.preprocess.missing_exclusion_ratio))?;
    if stage == Stage::Preprocess {
        for p in &processed {
            let name = format!("preprocessed/{}_{}.json", p.session.meta.subject_id, p.session.session_index);
            w.write(&name, &(to_json(&p.preprocessed.session) + "\n"))?;
        }
    } else {
        w.write(bundle::FEATURES, &bundle::features_csv(&processed))?;
    }

    let rows: Vec<SessionRow> = processed.iter().map(session_row).collect();
    let mut tests = Vec::new();
    if stage.analyze() {
        let plan = &cfg.analysis;
        if plan.control {
            tests.extend(control_tests(&rows, plan));
        }
        if plan.scenarios {
            tests.extend(scenario_tests(&rows, plan));
        }
        if plan.sessions {
            tests.extend(session_tests(&rows, plan));
        }
        let models = plan.glm.as_ref().map(|g| glm_models(&rows, g, plan.remove_outliers)).unwrap_or_default();
        w.write(bundle::GLM, &json_string(&models))?;
        let qq: std::collections::BTreeMap<&str, &Vec<(f64, f64)>> = models.iter().map(|m| (m.target.as_str(), &m.qq)).collect();
        w.write("plotdata/glm_target_qq.json", &json_string(&qq))?;
        w.write("plotdata/scenario_means.json", &json_string(&scenario_means(&rows)))?;
        w.write("plotdata/session_means.json", &json_string(&session_means(&rows)))?;
        if verbose {
            eprintln!("ran {} tests and {} models", tests.len(), models.len());
        }
    }
    if stage.cluster() {
        let c = cluster_sessions(&rows, &cfg.clustering, cfg.alpha, cfg.analysis.cluster_validation);
        match &c.model {
            Ok(m) => {
                manifest.notes.extend(m.warnings.iter().cloned());
                let scores: Vec<ScorePoint> = m
                    .selection
                    .table
                    .iter()
                    .map(|s| ScorePoint { k: s.k, silhouette: s.silhouette, davies_bouldin: s.davies_bouldin, inertia: s.inertia })
                    .collect();
                w.write("plotdata/silhouette_vs_k.json", &json_string(&scores))?;
                let points: Vec<EmbeddedPoint> = c
                    .keys
                    .iter()
                    .zip(&m.embedding)
                    .zip(&m.labels)
                    .map(|(((s, k), p), l)| EmbeddedPoint { subject_id: s, session_index: *k, x: p[0], y: p[1], cluster: *l })
                    .collect();
                w.write("plotdata/embedding.json", &json_string(&points))?;
                w.write("plotdata/cluster_profile.json", &json_string(&c.profile))?;
            }
            Err(e) => manifest.notes.push(format!("clustering failed: {e}")),
        }
        w.write(bundle::CLUSTERS, &bundle::clusters_csv(&c))?;
        w.write(bundle::SCORES, &bundle::scores_csv(&c))?;
        tests.extend(c.validation);
    }
    if stage.analyze() || stage == Stage::Cluster {
        w.write(bundle::TESTS, &bundle::tests_csv(&tests))?;
    }

    manifest.outputs = w.entries();
    w.write(bundle::MANIFEST, &json_string(&manifest))?;
    if verbose {
        eprintln!("wrote {}", w.dir().display());
    }

    let failed = failures.len();
    if failed as f64 > cfg.max_failure_ratio * ing.total() as f64 {
        return Err(CliError::PartialFailure { failed, total: ing.total() });
    }
    Ok(())
}

fn cmd_report(cli: &Cli, args: &ReportArgs) -> Result<(), CliError> {
    let text = report::render(&args.bundle, args.alpha)?;
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
            let path = dir.join("report.md");
            std::fs::write(&path, text).map_err(CliError::io(format!("cannot write {}", path.display())))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct TruthManifest<'a> {
    spec: &'a CorpusSpec,
    sessions: Vec<TruthEntry<'a>>,
}

#[derive(Serialize)]
struct TruthEntry<'a> {
    file: String,
    #[serde(flatten)]
    truth: &'a biosession::synth::GroundTruth,
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<(), CliError> {
    let mut spec = match &args.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => CorpusSpec::default(),
    };
    if let Some(s) = cli.seed {
        spec.seed = s;
    }
    if let Some(n) = args.subjects {
        spec.subjects = n;
    }
    if let Some(n) = args.sessions {
        spec.sessions_per_subject = n;
    }
    if let Some(d) = args.duration {
        spec.duration_s = d;
    }
    if let Some(h) = args.heavy_dropouts {
        spec.heavy_dropouts = h;
    }
    if let Some(g) = args.gaps {
        spec.gaps = GapSpec { count: g, ..spec.gaps };
    }
    let out = cli.out.as_deref().ok_or_else(|| CliError::Usage("simulate needs --out".into()))?;
    let corpus = gen_corpus(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let sessions_dir = out.join("sessions");
    std::fs::create_dir_all(&sessions_dir).map_err(CliError::io(format!("cannot create {}", sessions_dir.display())))?;
    let mut entries = Vec::new();
    for (s, truth) in &corpus {
        let file = format!("{}_{}.json", s.meta.subject_id, s.session_index);
        write_file(&sessions_dir.join(&file), &(to_json(s) + "\n"))?;
        entries.push(TruthEntry { file, truth });
    }
    let manifest = TruthManifest { spec: &spec, sessions: entries };
    write_file(&out.join("ground_truth.json"), &(serde_json::to_string_pretty(&manifest).expect("truth serializes") + "\n"))?;
    println!("wrote {} sessions to {}", corpus.len(), sessions_dir.display());
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(CliError::io(format!("cannot write {}", path.display())))
}
