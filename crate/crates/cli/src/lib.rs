//! The `iclabel` command line: classify datasets, dump features, compare
//! dumps and inspect files.
//!
//! Exit status is 0 on success, 1 on any operational error and 2 when a
//! comparison exceeds its tolerance. Errors are reported as one line,
//! `error: <kind>: <message>`, on stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use iclabel_core::conformance::{
    compare_dumps, write_atomic, CompareOptions, DiffMode, FeatureDump, Tolerances,
};
use iclabel_core::network::CLASS_NAMES;
use iclabel_core::pipeline::classify_features;
use iclabel_core::{
    extract_features, parse_mat, ClassificationTable, CompatFlags, EegDataset, NetworkWeights,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_TOLERANCE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "iclabel",
    version,
    about = "EEG independent component classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every ICA component of a dataset.
    Classify(ClassifyArgs),
    /// Write the normalized network inputs (and optionally probabilities) as a dump.
    Features(FeaturesArgs),
    /// Compare a test dump against a reference dump.
    Compare(CompareArgs),
    /// Print a dataset summary.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Use the plain algorithm instead of reproducing reference outputs
    /// (all PSD segments, no notch filling, window-count ACF dispatch).
    #[arg(long)]
    pub no_reference_compat: bool,
    /// Classify the scalp map as given, without sign/mirror averaging.
    #[arg(long)]
    pub no_augment: bool,
    /// Worker threads; 0 picks one per core.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

impl RunArgs {
    fn compat(&self) -> CompatFlags {
        CompatFlags {
            reference_compat: !self.no_reference_compat,
            augment: !self.no_augment,
        }
    }
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// EEGLAB `.set` file.
    pub input: PathBuf,
    /// MAT file with `<layer>_weight` and `<layer>_bias` variables.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    pub input: PathBuf,
    /// Binary dump path; the manifest is written to `<output>.json`.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Also run the network and store `probs`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Reference dump (binary, manifest or MAT file).
    pub reference: PathBuf,
    /// Dump under test.
    pub test: PathBuf,
    /// Per-array tolerance as a fraction, e.g. `probs=1e-5`. Repeatable.
    #[arg(long = "tol", value_parser = parse_tolerance)]
    pub tolerances: Vec<(String, f64)>,
    /// Tolerance for arrays without an override.
    #[arg(long, default_value_t = iclabel_core::conformance::DEFAULT_TOLERANCE)]
    pub default_tol: f64,
    #[arg(long, default_value_t = iclabel_core::conformance::DEFAULT_MAX_DECIMALS)]
    pub max_decimals: usize,
    /// Histogram absolute instead of relative differences.
    #[arg(long)]
    pub absolute: bool,
    /// Report file; stdout when absent.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub input: PathBuf,
}

fn parse_tolerance(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` is not name=value"))?;
    if iclabel_core::conformance::item_extents(name).is_none() {
        return Err(format!("unknown array `{name}`"));
    }
    let v: f64 = value
        .parse()
        .map_err(|_| format!("`{value}` is not a number"))?;
    if v.is_nan() || v < 0.0 {
        return Err(format!("tolerance `{value}` must be non-negative"));
    }
    Ok((name.to_string(), v))
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let kind = error_kind(&e);
            let msg = format!("{e:#}").replace(['\n', '\r'], " ");
            eprintln!("error: {kind}: {msg}");
            EXIT_ERROR
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if cause.is::<iclabel_core::dataset::DatasetError>() {
            return "dataset";
        }
        if cause.is::<iclabel_core::network::NetworkError>() {
            return "weights";
        }
        if cause.is::<iclabel_core::pipeline::PipelineError>() {
            return "features";
        }
        if cause.is::<iclabel_core::conformance::ConformanceError>() {
            return "dump";
        }
        if cause.is::<iclabel_core::matreader::MatError>() {
            return "mat";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "usage"
}

pub fn run(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Classify(a) => with_threads(a.run.threads, || classify_cmd(&a)),
        Command::Features(a) => with_threads(a.run.threads, || features_cmd(&a)),
        Command::Compare(a) => compare_cmd(&a),
        Command::Info(a) => info_cmd(&a),
    }
}

fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn require_file(path: &Path, what: &str) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what} `{}` not found", path.display()),
        )
        .into());
    }
    Ok(())
}

fn load_dataset(path: &Path) -> anyhow::Result<EegDataset> {
    require_file(path, "dataset")?;
    EegDataset::load(path).with_context(|| format!("loading {}", path.display()))
}

fn load_weights(path: &Path) -> anyhow::Result<NetworkWeights> {
    require_file(path, "weights")?;
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let file = parse_mat(&bytes).with_context(|| format!("parsing {}", path.display()))?;
    NetworkWeights::load(&file).with_context(|| format!("loading weights from {}", path.display()))
}

fn emit(output: Option<&Path>, bytes: &[u8]) -> anyhow::Result<()> {
    match output {
        Some(path) => {
            write_atomic(path, bytes).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn classify_cmd(a: &ClassifyArgs) -> anyhow::Result<i32> {
    // Both inputs are checked before any work starts.
    require_file(&a.input, "dataset")?;
    require_file(&a.weights, "weights")?;
    let weights = load_weights(&a.weights)?;
    let ds = load_dataset(&a.input)?;
    let compat = a.run.compat();
    let features = extract_features(&ds, compat)?;
    features.batch()?;
    let table = classify_features(&features, &weights, compat)?;
    let text = match a.format {
        Format::Csv => table_csv(&table),
        Format::Json => table_json(&table),
    };
    emit(a.output.as_deref(), text.as_bytes())?;
    Ok(EXIT_OK)
}

fn features_cmd(a: &FeaturesArgs) -> anyhow::Result<i32> {
    require_file(&a.input, "dataset")?;
    let weights = match &a.weights {
        Some(p) => Some(load_weights(p)?),
        None => None,
    };
    let ds = load_dataset(&a.input)?;
    let compat = a.run.compat();
    let features = extract_features(&ds, compat)?;
    let provenance = format!(
        "iclabel {}; input {}; reference_compat={}; augment={}",
        env!("CARGO_PKG_VERSION"),
        file_label(&a.input),
        compat.reference_compat,
        compat.augment
    );
    let mut dump = FeatureDump::from_features(&features, provenance);
    if let Some(w) = &weights {
        dump.set_probabilities(&classify_features(&features, w, compat)?);
    }
    for f in features.failures() {
        eprintln!("warning: component {}: {}", f.component + 1, f.error);
    }
    dump.write(&a.output)?;
    Ok(EXIT_OK)
}

fn compare_cmd(a: &CompareArgs) -> anyhow::Result<i32> {
    require_file(&a.reference, "reference dump")?;
    require_file(&a.test, "test dump")?;
    let reference = FeatureDump::read(&a.reference)
        .with_context(|| format!("reading {}", a.reference.display()))?;
    let test =
        FeatureDump::read(&a.test).with_context(|| format!("reading {}", a.test.display()))?;
    let mut tol = Tolerances {
        default: a.default_tol,
        ..Tolerances::default()
    };
    for (name, v) in &a.tolerances {
        tol = tol.with(name, *v);
    }
    let options = CompareOptions {
        max_decimals: a.max_decimals,
        mode: if a.absolute {
            DiffMode::Absolute
        } else {
            DiffMode::Relative
        },
    };
    let report = compare_dumps(&reference, &test, &tol, options)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(a.output.as_deref(), text.as_bytes())?;
    for arr in &report.arrays {
        eprintln!(
            "{}: mdp {:.3e}% (tolerance {:.3e}%) {}",
            arr.name,
            arr.mdp_percent,
            arr.tolerance * 100.0,
            if arr.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if report.pass { EXIT_OK } else { EXIT_TOLERANCE })
}

fn info_cmd(a: &InfoArgs) -> anyhow::Result<i32> {
    let ds = load_dataset(&a.input)?;
    let positioned = ds.chanlocs.iter().filter(|c| c.has_position).count();
    let text = format!(
        "file: {}\nchannels: {}\npositioned_channels: {}\nsrate: {}\npnts: {}\ntrials: {}\nn_comp: {}\nica_channels: {}\n",
        file_label(&a.input),
        ds.n_chan,
        positioned,
        ds.srate,
        ds.pnts,
        ds.trials,
        ds.n_components(),
        ds.ica.chan_indices.len()
    );
    emit(None, text.as_bytes())?;
    Ok(EXIT_OK)
}

/// Fixed 17-significant-digit formatting; NaN for failed rows.
pub fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:.16e}")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One row per component: 1-based index, seven probabilities, label.
pub fn table_csv(table: &ClassificationTable) -> String {
    let mut out = String::from("component");
    for name in CLASS_NAMES {
        out.push(',');
        out.push_str(&csv_field(name));
    }
    out.push_str(",label\r\n");
    for c in 0..table.len() {
        out.push_str(&(c + 1).to_string());
        match table.probabilities(c) {
            Some(p) => {
                for v in p {
                    out.push(',');
                    out.push_str(&fmt_num(*v));
                }
            }
            None => out.push_str(&",NaN".repeat(CLASS_NAMES.len())),
        }
        out.push(',');
        out.push_str(&csv_field(table.label(c).unwrap_or("")));
        out.push_str("\r\n");
    }
    out
}

/// `{"ic_classification": {"ICLabel": {"classes": [...], "classifications": [[...], ...], "labels": [...]}}}`
pub fn table_json(table: &ClassificationTable) -> String {
    let quote = |s: &str| serde_json::to_string(s).expect("string serializes");
    let classes: Vec<String> = CLASS_NAMES.iter().map(|n| quote(n)).collect();
    let rows: Vec<String> = (0..table.len())
        .map(|c| match table.probabilities(c) {
            Some(p) => format!(
                "[{}]",
                p.iter().map(|v| fmt_num(*v)).collect::<Vec<_>>().join(", ")
            ),
            None => "null".into(),
        })
        .collect();
    let labels: Vec<String> = (0..table.len())
        .map(|c| table.label(c).map(quote).unwrap_or_else(|| "null".into()))
        .collect();
    format!(
        "{{\n  \"ic_classification\": {{\n    \"ICLabel\": {{\n      \"classes\": [{}],\n      \"classifications\": [\n        {}\n      ],\n      \"labels\": [{}]\n    }}\n  }}\n}}\n",
        classes.join(", "),
        rows.join(",\n        "),
        labels.join(", ")
    )
}
