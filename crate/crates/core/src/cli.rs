//! Command-line front end.
//!
//! Every command resolves a [`RunConfig`] from built-in defaults, an optional
//! JSON file (`--config`) and command-line flags, in increasing precedence.
//! The effective configuration and seed are written into every artifact.
//!
//! Exit codes: 0 success, 2 input/format/configuration error, 3 no signal,
//! 4 reconstruction failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{wigner_origin, PhotonNumberDistribution};
use crate::pipeline::{
    calibrate, check_heralded_excess, compute_variance_trace, extract_mode_function,
    project_quadratures, QuadratureDataset, DEFAULT_BASELINE_FRACTION,
};
use crate::recon::{
    build_histogram, em_reconstruct, fit_mixture_ls, EmOptions, HistogramModel, MethodReport,
    DEFAULT_BINS, DEFAULT_RANGE,
};
use crate::reference;
use crate::segio::{
    read_batch, read_metadata, sidecar_path, write_batch, write_metadata, BatchMetadata,
};
use crate::sim::{
    generate_batch, generate_batch_with_quadratures, synth_mode_function, BatchKind,
    SimulationConfig,
};
use crate::wigner::{
    bootstrap_negativity_with, negativity_report, wigner_grid, BootstrapReport, NegativityReport,
    DEFAULT_EXTENT, DEFAULT_REPLICAS, DEFAULT_RESOLUTION,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_SIGNAL: i32 = 3;
pub const EXIT_RECONSTRUCTION: i32 = 4;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "CVTOMO_OUT";

/// Heralded segment count the reproduction tolerances are stated for.
const REFERENCE_SEGMENTS: usize = 50_000;
const QUICK_SEGMENTS: usize = 5_000;
const QUICK_VACUUM_SEGMENTS: usize = 1_000;
const QUICK_REPLICAS: usize = 50;
/// Below this many replicas the bootstrap standard deviation is flagged.
const MIN_RELIABLE_REPLICAS: usize = 10;

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NoSignal(_) => EXIT_NO_SIGNAL,
        Error::ZeroDensity { .. } | Error::NonConvergence { .. } | Error::Replica { .. } => {
            EXIT_RECONSTRUCTION
        }
        _ => EXIT_INPUT,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineOptions {
    pub baseline_fraction: f64,
    pub bins: usize,
    pub range: (f64, f64),
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            baseline_fraction: DEFAULT_BASELINE_FRACTION,
            bins: DEFAULT_BINS,
            range: DEFAULT_RANGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconstructionOptions {
    pub cutoff: usize,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        let em = EmOptions::default();
        Self {
            cutoff: reference::CUTOFF,
            tol: em.tol,
            max_iter: em.max_iter,
        }
    }
}

impl ReconstructionOptions {
    pub fn em(&self) -> EmOptions {
        EmOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub extent: f64,
    pub resolution: usize,
    pub replicas: usize,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            extent: DEFAULT_EXTENT,
            resolution: DEFAULT_RESOLUTION,
            replicas: DEFAULT_REPLICAS,
        }
    }
}

/// All tunable parameters of a run. `simulation.rng_seed` is the single seed
/// from which every random stream is derived.
///
/// Commands that consume earlier artifacts take the simulation section from
/// the configuration recorded in their input, since it describes the data.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulation: SimulationConfig,
    pub pipeline: PipelineOptions,
    pub reconstruction: ReconstructionOptions,
    pub analysis: AnalysisOptions,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: bad run configuration: {e}", path.display())))
    }

    pub fn seed(&self) -> u64 {
        self.simulation.rng_seed
    }

    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let f = self.pipeline.baseline_fraction;
        if !(f > 0.0 && f <= 0.4) {
            return bad(format!("baseline_fraction {f} must lie in (0, 0.4]"));
        }
        if self.pipeline.bins < 10 {
            return bad(format!("bins {} is below 10", self.pipeline.bins));
        }
        let (lo, hi) = self.pipeline.range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return bad(format!("histogram range [{lo}, {hi}] is empty"));
        }
        if self.reconstruction.cutoff < 1 {
            return bad("cutoff must be at least 1".into());
        }
        if !(self.reconstruction.tol > 0.0) {
            return bad(format!("tol {} must be positive", self.reconstruction.tol));
        }
        if self.reconstruction.max_iter < 1 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.analysis.extent > 0.0 && self.analysis.extent.is_finite()) {
            return bad(format!("extent {} must be positive", self.analysis.extent));
        }
        let r = self.analysis.resolution;
        if r < 11 || r.is_multiple_of(2) {
            return bad(format!("resolution {r} must be odd and at least 11"));
        }
        if self.analysis.replicas < 2 {
            return bad(format!("replicas {} is below 2", self.analysis.replicas));
        }
        Ok(())
    }
}

/// Tool, command, seed and effective configuration, embedded in outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub command: String,
    pub seed: u64,
    pub config: RunConfig,
}

impl Provenance {
    fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            tool: format!("cvtomo {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            seed: config.seed(),
            config: config.clone(),
        }
    }

    fn csv_metadata(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tool", self.tool.clone()),
            ("command", self.command.clone()),
            ("seed", self.seed.to_string()),
            (
                "config",
                serde_json::to_string(&self.config).expect("config serializes"),
            ),
        ]
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "cvtomo",
    version,
    about = "Homodyne tomography of heralded single-photon-subtracted states"
)]
pub struct Cli {
    /// JSON run configuration; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = OUT_DIR_ENV, default_value = "cvtomo-out", value_name = "DIR")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate vacuum and heralded segment batches.
    Simulate(SimFlags),
    /// Extract the temporal mode and calibrated quadratures from batches.
    Extract(ExtractFlags),
    /// Reconstruct the photon-number distribution (least squares and EM).
    Reconstruct(ReconstructFlags),
    /// Wigner grid and bootstrap significance of the negativity at the origin.
    Analyze(AnalyzeFlags),
    /// Simulate, extract, reconstruct and analyze in one go; writes report.json.
    Reproduce(ReproduceFlags),
}

#[derive(Args, Debug, Clone, Default)]
pub struct SimFlags {
    /// Heralded segment count.
    #[arg(long)]
    pub segments: Option<usize>,
    /// Vacuum reference segment count.
    #[arg(long)]
    pub vacuum_segments: Option<usize>,
    /// Samples per segment.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Raw units per vacuum-normalized quadrature unit.
    #[arg(long)]
    pub signal_gain: Option<f64>,
    /// Per-sample raw noise variance.
    #[arg(long)]
    pub background_variance: Option<f64>,
    /// Photon-number probabilities p_0,p_1,... of the simulated state.
    #[arg(long, value_delimiter = ',', value_name = "P0,P1,...")]
    pub true_p: Option<Vec<f64>>,
}

impl SimFlags {
    fn apply(&self, sim: &mut SimulationConfig) -> Result<()> {
        set(&mut sim.segments, self.segments);
        set(&mut sim.vacuum_segments, self.vacuum_segments);
        set(&mut sim.samples_per_segment, self.samples);
        set(&mut sim.rng_seed, self.seed);
        set(&mut sim.signal_gain, self.signal_gain);
        set(&mut sim.background_variance, self.background_variance);
        if let Some(p) = &self.true_p {
            sim.true_p = PhotonNumberDistribution::new(p.clone())?;
        }
        Ok(())
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ExtractFlags {
    /// Vacuum batch [default: <out>/vacuum.hseg].
    #[arg(long)]
    pub vacuum: Option<PathBuf>,
    /// Heralded batch [default: <out>/heralded.hseg].
    #[arg(long)]
    pub heralded: Option<PathBuf>,
    /// Fraction of each segment end used for the variance baseline.
    #[arg(long)]
    pub baseline_fraction: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ReconFlags {
    /// Photon-number cutoff N.
    #[arg(long)]
    pub cutoff: Option<usize>,
    /// Relative log-likelihood tolerance of EM.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

impl ReconFlags {
    fn apply(&self, r: &mut ReconstructionOptions) {
        set(&mut r.cutoff, self.cutoff);
        set(&mut r.tol, self.tol);
        set(&mut r.max_iter, self.max_iter);
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct ReconstructFlags {
    /// Quadrature CSV [default: <out>/heralded_quadratures.csv].
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub recon: ReconFlags,
    /// Histogram bins for the least-squares fit.
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub range_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub range_max: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct AnalysisFlags {
    /// Half-width of the square phase-space grid.
    #[arg(long)]
    pub extent: Option<f64>,
    /// Grid points per axis (odd).
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Bootstrap replicas.
    #[arg(long)]
    pub replicas: Option<usize>,
}

impl AnalysisFlags {
    fn apply(&self, a: &mut AnalysisOptions) {
        set(&mut a.extent, self.extent);
        set(&mut a.resolution, self.resolution);
        set(&mut a.replicas, self.replicas);
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct AnalyzeFlags {
    /// Quadrature CSV; runs EM and the bootstrap
    /// [default: <out>/heralded_quadratures.csv].
    #[arg(long, conflicts_with = "reconstruction")]
    pub input: Option<PathBuf>,
    /// Reconstruction JSON; grid and negativity only, from its EM result.
    #[arg(long)]
    pub reconstruction: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub recon: ReconFlags,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ReproduceFlags {
    /// Scaled-down run: 5000 heralded segments, 1000 vacuum, 50 replicas.
    #[arg(long)]
    pub quick: bool,
    #[command(flatten)]
    pub sim: SimFlags,
    #[command(flatten)]
    pub recon: ReconFlags,
    #[command(flatten)]
    pub analysis: AnalysisFlags,
}

/// Simulation section recorded in an earlier artifact, if any: the
/// `# config=` comment of a CSV or the provenance block of a JSON output.
fn recorded_simulation(path: &Path) -> Option<SimulationConfig> {
    let text = fs::read_to_string(path).ok()?;
    let config: RunConfig =
        if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# config=")) {
            serde_json::from_str(line).ok()?
        } else {
            let value: serde_json::Value = serde_json::from_str(&text).ok()?;
            serde_json::from_value(value.get("provenance")?.get("config")?.clone()).ok()?
        };
    Some(config.simulation)
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "input {} does not exist",
            path.display()
        )))
    }
}

fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", dir.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut json = serde_json::to_string_pretty(value)?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    let out = cli.out.as_path();
    match &cli.command {
        Command::Simulate(flags) => {
            flags.apply(&mut config.simulation)?;
            config.validate()?;
            prepare_out_dir(out)?;
            for line in cmd_simulate(&config, out)? {
                println!("{line}");
            }
        }
        Command::Extract(flags) => {
            set(
                &mut config.pipeline.baseline_fraction,
                flags.baseline_fraction,
            );
            let vacuum = flags
                .vacuum
                .clone()
                .unwrap_or_else(|| out.join("vacuum.hseg"));
            let heralded = flags
                .heralded
                .clone()
                .unwrap_or_else(|| out.join("heralded.hseg"));
            require_file(&vacuum)?;
            require_file(&heralded)?;
            prepare_out_dir(out)?;
            let summary = cmd_extract(&mut config, &vacuum, &heralded, out)?;
            println!("{summary}");
        }
        Command::Reconstruct(flags) => {
            let input = flags
                .input
                .clone()
                .unwrap_or_else(|| out.join("heralded_quadratures.csv"));
            require_file(&input)?;
            if let Some(sim) = recorded_simulation(&input) {
                config.simulation = sim;
            }
            flags.recon.apply(&mut config.reconstruction);
            set(&mut config.pipeline.bins, flags.bins);
            set(&mut config.pipeline.range.0, flags.range_min);
            set(&mut config.pipeline.range.1, flags.range_max);
            config.validate()?;
            prepare_out_dir(out)?;
            let result = cmd_reconstruct(&config, &input, out)?;
            for m in &result.methods {
                println!("{}: p = {:?}", m.method, m.p.probs());
            }
        }
        Command::Analyze(flags) => {
            let source = match (&flags.input, &flags.reconstruction) {
                (_, Some(r)) => AnalysisSource::Reconstruction(r.clone()),
                (Some(i), None) => AnalysisSource::Quadratures(i.clone()),
                (None, None) => AnalysisSource::Quadratures(out.join("heralded_quadratures.csv")),
            };
            require_file(source.path())?;
            if let Some(sim) = recorded_simulation(source.path()) {
                config.simulation = sim;
            }
            set(&mut config.simulation.rng_seed, flags.seed);
            flags.recon.apply(&mut config.reconstruction);
            flags.analysis.apply(&mut config.analysis);
            config.validate()?;
            if config.analysis.replicas < MIN_RELIABLE_REPLICAS
                && matches!(source, AnalysisSource::Quadratures(_))
            {
                eprintln!(
                    "warning: {} bootstrap replicas give an unreliable standard deviation",
                    config.analysis.replicas
                );
            }
            prepare_out_dir(out)?;
            println!("{}", cmd_analyze(&config, &source, out)?);
        }
        Command::Reproduce(flags) => {
            if flags.quick {
                config.simulation.segments = QUICK_SEGMENTS;
                config.simulation.vacuum_segments = QUICK_VACUUM_SEGMENTS;
                config.analysis.replicas = QUICK_REPLICAS;
            }
            flags.sim.apply(&mut config.simulation)?;
            flags.recon.apply(&mut config.reconstruction);
            flags.analysis.apply(&mut config.analysis);
            config.validate()?;
            prepare_out_dir(out)?;
            let (report, artifacts) = reproduce_inner(&config)?;
            write_reproduction(&report, &artifacts, &config, out)?;
            println!("{}", report.verdict);
            for c in &report.criteria {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.describe()
                );
            }
        }
    }
    Ok(())
}

/// Writes `vacuum.hseg` and `heralded.hseg` with JSON sidecars; returns one
/// summary line per batch.
pub fn cmd_simulate(config: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for kind in [BatchKind::Vacuum, BatchKind::Heralded] {
        let batch = generate_batch(&config.simulation, kind)?;
        let path = out.join(format!("{}.hseg", kind.as_str()));
        write_batch(&path, &batch)?;
        write_metadata(
            sidecar_path(&path),
            &BatchMetadata::for_batch(&batch, Some(&config.simulation)),
        )?;
        lines.push(format!(
            "{}: {} segments, fingerprint {}, seed {}",
            path.display(),
            batch.len(),
            batch.config_fingerprint(),
            config.seed()
        ));
    }
    Ok(lines)
}

/// Mode extraction, projection and calibration. When the heralded sidecar
/// carries its generating configuration it replaces `config.simulation`, so
/// the echoed configuration and time axis describe the data.
pub fn cmd_extract(
    config: &mut RunConfig,
    vacuum_path: &Path,
    heralded_path: &Path,
    out: &Path,
) -> Result<String> {
    if let Ok(BatchMetadata {
        config: Some(sim), ..
    }) = read_metadata(sidecar_path(heralded_path))
    {
        config.simulation = sim;
    }
    config.validate()?;
    let vacuum = read_batch(vacuum_path)?;
    let heralded = read_batch(heralded_path)?;
    if vacuum.samples_per_segment() != heralded.samples_per_segment() {
        return Err(Error::Format(format!(
            "vacuum segments hold {} samples, heralded {}",
            vacuum.samples_per_segment(),
            heralded.samples_per_segment()
        )));
    }
    let trace = compute_variance_trace(&heralded, config.pipeline.baseline_fraction)?;
    let mode = extract_mode_function(&trace)?;
    let vac_raw = project_quadratures(&vacuum, &mode)?;
    let her_raw = project_quadratures(&heralded, &mode)?;
    check_heralded_excess(&vac_raw, &her_raw)?;
    let (vac, her) = calibrate(&vac_raw, &her_raw)?;

    let prov = Provenance::new("extract", config);
    let mut meta = prov.csv_metadata();
    meta.push((
        "vacuum_fingerprint",
        vacuum.config_fingerprint().to_string(),
    ));
    meta.push((
        "heralded_fingerprint",
        heralded.config_fingerprint().to_string(),
    ));
    let trigger = heralded.trigger_index();
    let dt = config.simulation.sample_interval;
    mode.write_csv(out.join("mode.csv"), trigger, dt, &meta)?;
    trace.write_csv(out.join("variance_trace.csv"), trigger, dt, &meta)?;
    vac.write_csv(out.join("vacuum_quadratures.csv"), &meta)?;
    her.write_csv(out.join("heralded_quadratures.csv"), &meta)?;
    Ok(format!(
        "mode peak at index {}, calibration scale {:.6e}, vacuum variance {:.4}, heralded variance {:.4}",
        mode.peak_index(),
        vac.calibration_scale(),
        vac.variance(),
        her.variance()
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    /// `None` when the Fisher information is singular.
    pub fisher_condition: Option<f64>,
    pub fisher_near_singular: bool,
    pub pinned_components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionOutput {
    pub provenance: Provenance,
    pub input: String,
    pub samples: usize,
    pub calibration_scale: f64,
    pub methods: Vec<MethodReport>,
    pub em_diagnostics: EmDiagnostics,
    pub histogram: HistogramModel,
}

impl ReconstructionOutput {
    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Least-squares fit and EM on one quadrature CSV; writes
/// `reconstruction.json`.
pub fn cmd_reconstruct(
    config: &RunConfig,
    input: &Path,
    out: &Path,
) -> Result<ReconstructionOutput> {
    let data = QuadratureDataset::read_csv(input)?;
    let hist = build_histogram(data.values(), config.pipeline.bins, config.pipeline.range)?;
    let cutoff = config.reconstruction.cutoff;
    let ls = fit_mixture_ls(&hist, cutoff)?;
    let em = em_reconstruct(data.values(), cutoff, config.reconstruction.em())?;
    let result = ReconstructionOutput {
        provenance: Provenance::new("reconstruct", config),
        input: input.display().to_string(),
        samples: data.len(),
        calibration_scale: data.calibration_scale(),
        methods: vec![
            MethodReport::from_ls(&ls, data.values()),
            MethodReport::from_em(&em),
        ],
        em_diagnostics: EmDiagnostics {
            fisher_condition: Some(em.fisher_condition).filter(|c| c.is_finite()),
            fisher_near_singular: em.fisher_near_singular,
            pinned_components: em.pinned_components.clone(),
        },
        histogram: hist,
    };
    write_json(&out.join("reconstruction.json"), &result)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisSource {
    Quadratures(PathBuf),
    Reconstruction(PathBuf),
}

impl AnalysisSource {
    pub fn path(&self) -> &Path {
        match self {
            Self::Quadratures(p) | Self::Reconstruction(p) => p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub provenance: Provenance,
    pub input: String,
    pub p: PhotonNumberDistribution,
    pub negativity: NegativityReport,
    pub bootstrap: Option<BootstrapReport>,
}

/// Writes `wigner.csv`, `wigner.pgm` and `analysis.json` (plus
/// `bootstrap.json` for quadrature input); returns the verdict line.
pub fn cmd_analyze(config: &RunConfig, source: &AnalysisSource, out: &Path) -> Result<String> {
    let (p, bootstrap) = match source {
        AnalysisSource::Quadratures(path) => {
            let data = QuadratureDataset::read_csv(path)?;
            let report = bootstrap_negativity_with(
                data.values(),
                config.reconstruction.cutoff,
                config.analysis.replicas,
                config.seed(),
                config.reconstruction.em(),
            )?;
            (report.estimate_p.clone(), Some(report))
        }
        AnalysisSource::Reconstruction(path) => {
            let text = fs::read_to_string(path)?;
            let rec: ReconstructionOutput = serde_json::from_str(&text).map_err(|e| {
                Error::Format(format!("{}: bad reconstruction file: {e}", path.display()))
            })?;
            let em = rec
                .method("em")
                .ok_or_else(|| Error::Format(format!("{}: no EM result", path.display())))?;
            (em.p.clone(), None)
        }
    };
    let prov = Provenance::new("analyze", config);
    let meta = prov.csv_metadata();
    let grid = wigner_grid(&p, config.analysis.extent, config.analysis.resolution)?;
    grid.write_csv(out.join("wigner.csv"), &meta)?;
    grid.write_pgm(out.join("wigner.pgm"), &meta)?;
    let verdict = match &bootstrap {
        Some(b) => b.verdict(),
        None => format!("W(0,0) = {:.4} (no bootstrap)", wigner_origin(&p)),
    };
    let output = AnalysisOutput {
        provenance: prov,
        input: source.path().display().to_string(),
        negativity: negativity_report(&p),
        p,
        bootstrap,
    };
    if let Some(b) = &output.bootstrap {
        write_json(
            &out.join("bootstrap.json"),
            &serde_json::json!({ "provenance": &output.provenance, "bootstrap": b }),
        )?;
    }
    write_json(&out.join("analysis.json"), &output)?;
    Ok(verdict)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub value: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub passed: bool,
}

impl Criterion {
    fn new(name: &str, value: f64, lower: Option<f64>, upper: Option<f64>) -> Self {
        let passed = value.is_finite()
            && lower.is_none_or(|l| value >= l)
            && upper.is_none_or(|u| value <= u);
        Self {
            name: name.into(),
            value,
            lower,
            upper,
            passed,
        }
    }

    pub fn describe(&self) -> String {
        match (self.lower, self.upper) {
            (Some(l), Some(u)) => format!("{:.6} in [{l:.6}, {u:.6}]", self.value),
            (Some(l), None) => format!("{:.6} ≥ {l:.6}", self.value),
            (None, Some(u)) => format!("{:.6} ≤ {u:.6}", self.value),
            (None, None) => format!("{:.6}", self.value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub p: Vec<f64>,
    pub wigner_origin: f64,
    pub wigner_origin_uncertainty: f64,
    pub significance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproductionReport {
    pub provenance: Provenance,
    pub reference_values: ReferenceValues,
    pub true_p: Vec<f64>,
    /// W(0,0) of the simulated state.
    pub true_wigner_origin: f64,
    /// Factor by which tolerances are widened for fewer heralded segments.
    pub tolerance_scale: f64,
    pub mode_cosine_similarity: f64,
    pub calibration_scale: f64,
    pub vacuum_variance: f64,
    pub heralded_variance: f64,
    pub least_squares: MethodReport,
    pub em: MethodReport,
    pub wigner_origin: f64,
    pub bootstrap_mean: f64,
    pub bootstrap_std: f64,
    pub significance: f64,
    pub unconverged_replicas: usize,
    pub verdict: String,
    pub criteria: Vec<Criterion>,
    pub all_passed: bool,
}

struct ReproductionArtifacts {
    mode: crate::pipeline::ModeFunction,
    trigger_index: usize,
    p: PhotonNumberDistribution,
}

/// Full chain in memory: simulate, extract, calibrate, reconstruct,
/// bootstrap, and compare against the reference values.
pub fn reproduce(config: &RunConfig) -> Result<ReproductionReport> {
    reproduce_inner(config).map(|(report, _)| report)
}

fn reproduce_inner(config: &RunConfig) -> Result<(ReproductionReport, ReproductionArtifacts)> {
    config.validate()?;
    let sim = &config.simulation;
    let (vacuum, _) = generate_batch_with_quadratures(sim, BatchKind::Vacuum)?;
    let (heralded, _) = generate_batch_with_quadratures(sim, BatchKind::Heralded)?;
    let trace = compute_variance_trace(&heralded, config.pipeline.baseline_fraction)?;
    let mode = extract_mode_function(&trace)?;
    let cosine = mode.cosine_similarity(&synth_mode_function(sim)?);
    let vac_raw = project_quadratures(&vacuum, &mode)?;
    let her_raw = project_quadratures(&heralded, &mode)?;
    let trigger_index = heralded.trigger_index();
    drop((vacuum, heralded));
    check_heralded_excess(&vac_raw, &her_raw)?;
    let (vac, her) = calibrate(&vac_raw, &her_raw)?;

    let cutoff = config.reconstruction.cutoff;
    let hist = build_histogram(her.values(), config.pipeline.bins, config.pipeline.range)?;
    let ls = fit_mixture_ls(&hist, cutoff)?;
    let boot = bootstrap_negativity_with(
        her.values(),
        cutoff,
        config.analysis.replicas,
        config.seed(),
        config.reconstruction.em(),
    )?;
    let em = em_reconstruct(her.values(), cutoff, config.reconstruction.em())?;

    let scale = (REFERENCE_SEGMENTS as f64 / sim.segments as f64)
        .sqrt()
        .max(1.0);
    let true_p = sim.true_p.with_cutoff(cutoff.max(sim.true_p.cutoff()))?;
    let recovered = em.p_hat.with_cutoff(true_p.cutoff())?;
    let max_dev = true_p
        .probs()
        .iter()
        .zip(recovered.probs())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let true_origin = wigner_origin(&sim.true_p);
    let reported_origin = wigner_origin(&reference::em_distribution());
    let criteria = vec![
        Criterion::new(
            "wigner_origin_identity",
            reported_origin,
            Some(reference::WIGNER_ORIGIN_FROM_EM - 5e-4),
            Some(reference::WIGNER_ORIGIN_FROM_EM + 5e-4),
        ),
        Criterion::new(
            "photon_number_max_deviation",
            max_dev,
            None,
            Some(0.015 * scale),
        ),
        Criterion::new(
            "wigner_origin",
            boot.origin_estimate,
            Some(true_origin - 0.01 * scale),
            Some(true_origin + 0.01 * scale),
        ),
        Criterion::new(
            "bootstrap_std",
            boot.origin_std,
            Some(0.002 * scale),
            Some(0.008 * scale),
        ),
        Criterion::new("significance", boot.significance, Some(10.0 / scale), None),
        Criterion::new("mode_cosine_similarity", cosine, Some(0.99), None),
    ];
    let all_passed = criteria.iter().all(|c| c.passed);
    let report = ReproductionReport {
        provenance: Provenance::new("reproduce", config),
        reference_values: ReferenceValues {
            p: reference::EM_PROBABILITIES.to_vec(),
            wigner_origin: reference::WIGNER_ORIGIN,
            wigner_origin_uncertainty: reference::WIGNER_ORIGIN_UNCERTAINTY,
            significance: reference::SIGNIFICANCE,
        },
        true_p: sim.true_p.probs().to_vec(),
        true_wigner_origin: true_origin,
        tolerance_scale: scale,
        mode_cosine_similarity: cosine,
        calibration_scale: vac.calibration_scale(),
        vacuum_variance: vac.variance(),
        heralded_variance: her.variance(),
        least_squares: MethodReport::from_ls(&ls, her.values()),
        em: MethodReport::from_em(&em),
        wigner_origin: boot.origin_estimate,
        bootstrap_mean: boot.origin_mean,
        bootstrap_std: boot.origin_std,
        significance: boot.significance,
        unconverged_replicas: boot.unconverged_replicas.len(),
        verdict: boot.verdict(),
        criteria,
        all_passed,
    };
    Ok((
        report,
        ReproductionArtifacts {
            mode,
            trigger_index,
            p: em.p_hat,
        },
    ))
}

fn write_reproduction(
    report: &ReproductionReport,
    artifacts: &ReproductionArtifacts,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    write_json(&out.join("report.json"), report)?;
    let meta = report.provenance.csv_metadata();
    artifacts.mode.write_csv(
        out.join("mode.csv"),
        artifacts.trigger_index,
        config.simulation.sample_interval,
        &meta,
    )?;
    let grid = wigner_grid(
        &artifacts.p,
        config.analysis.extent,
        config.analysis.resolution,
    )?;
    grid.write_csv(out.join("wigner.csv"), &meta)?;
    grid.write_pgm(out.join("wigner.pgm"), &meta)?;
    Ok(())
}
