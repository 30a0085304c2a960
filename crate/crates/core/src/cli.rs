//! Command-line front end: `construct`, `prep-rate`, `ler` and `selftest`.
//!
//! Every table carries the tool version, the resolved configuration and the
//! seed, so a run can be repeated from its own output. Flags override values
//! read from `--config`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::code::{construct, min_distance_bounded, prep_bits, Family, Q1Code};
use crate::gf2::BitVector;
use crate::oracle::{apply_polar_encoding, replay_trace};
use crate::prep::{
    estimate_prep_rate, frames_equivalent, prepare, prepare_noisy, NoiseModel, PrepConfig, PrepTrace, RngDriver,
    Target,
};
use crate::reliability::{q1_position_ler, ConstructionMode, DeMethod, ReliabilityProfile};
use crate::steane::{estimate_ler_de, estimate_ler_mc, mc_x_trial, mc_z_trial, pseudothreshold, LerEstimate, Pseudothreshold};
use crate::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RESOURCE: i32 = 2;
pub const EXIT_SELFTEST: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "qpolar", version, about = "Single-logical-qubit quantum polar codes")]
pub struct Cli {
    /// Worker threads; defaults to the machine's parallelism. Results do not
    /// depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Best information position per length, family and channel parameter.
    Construct(ConstructArgs),
    /// Acceptance rate of the preparation with error detection.
    PrepRate(PrepRateArgs),
    /// Logical error rate of Steane error correction, by simulation and/or DE.
    Ler(LerArgs),
    /// Oracle-backed invariant checks.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Depolarizing,
    Erasure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Mc,
    De,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum TargetChoice {
    LogicalZ,
    LogicalX,
    Both,
}

/// Options shared by the table-producing commands.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Master seed for every random substream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// JSON file with the same keys as the long flags.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConstructArgs {
    /// Recursion depth `n` or an inclusive range `a:b`.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long, value_enum)]
    pub channel: Option<ChannelKind>,
    #[arg(long, value_enum)]
    pub mode: Option<ConstructionMode>,
    /// Channel parameters: values or `a:b:steps` log ranges, comma separated.
    #[arg(long)]
    pub p_grid: Option<String>,
    /// Restrict to one family; both when absent.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Population size for sampled DE; exact DE when absent or 0.
    #[arg(long)]
    pub de_pop: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

/// Code selection shared by `prep-rate` and `ler`.
#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct CodeArgs {
    /// Recursion depth.
    #[arg(long)]
    pub n: Option<u32>,
    /// Code length, a power of two; alternative to `--n`.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    pub big_n: Option<usize>,
    /// Information position, 1-based.
    #[arg(long)]
    pub i: Option<usize>,
    /// Without `--i`: best position of the family for depolarizing noise at
    /// p = 1e-3, ignoring correlations.
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// Keep the leading Z⊗Z levels instead of skipping them.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_skip: Option<bool>,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct PrepRateArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub code: CodeArgs,
    #[arg(long, value_enum)]
    pub target: Option<TargetChoice>,
    #[arg(long)]
    pub p_grid: Option<String>,
    /// Preparation attempts per point.
    #[arg(long)]
    pub trials: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
pub struct LerArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub code: CodeArgs,
    #[arg(long)]
    pub p_grid: Option<String>,
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    /// Logical failures per side before a simulation point stops.
    #[arg(long)]
    pub failures: Option<u64>,
    /// Trial cap per side; a point that reaches it is reported as censored.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Accepted preparations per target for the DE error rates; `100 / p`
    /// when absent.
    #[arg(long)]
    pub prep_runs: Option<u64>,
    #[arg(long)]
    pub de_pop: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negative control: run the involution check on a broken transform.
    #[arg(long, hide = true)]
    pub corrupt_transform: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Resource(String),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(m) => CliError::Usage(m),
            Error::ResourceBound(m) => CliError::Resource(m),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => EXIT_USAGE,
            CliError::Resource(_) => EXIT_RESOURCE,
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Tables go to `--out` or `stdout`; diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Construct(a) => cmd_construct(a).map(Ok),
        Command::PrepRate(a) => cmd_prep_rate(a).map(Ok),
        Command::Ler(a) => cmd_ler(a).map(Ok),
        Command::Selftest(a) => Ok(Err(cmd_selftest(&a))),
    });
    let result = result.and_then(|done| match done {
        Ok(table) => table.emit(stdout).map(|_| EXIT_OK),
        Err(report) => {
            stdout.write_all(report.render().as_bytes())?;
            Ok(if report.passed() { EXIT_OK } else { EXIT_SELFTEST })
        }
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

/// Overlays the non-null flag values on the config file, then reads the
/// merged object back.
fn merge_config<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = file else {
        return Ok(serde_json::from_value(serde_json::to_value(flags).expect("flags serialize")).expect("round trip"));
    };
    let text = fs::read_to_string(path)?;
    let mut base: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(base_map) = &mut base else {
        return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
    };
    // The echoed configuration of an earlier run nests the flags.
    if let Some(Value::Object(inner)) = base_map.remove("config") {
        base_map.extend(inner);
    }
    if let Value::Object(over) = serde_json::to_value(flags).expect("flags serialize") {
        for (k, v) in over {
            if !v.is_null() {
                base_map.insert(k, v);
            }
        }
    }
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Comma-separated items, each a value or `a:b:steps` with `steps` points
/// spaced evenly in log scale. Zero steps give no points.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = |m: &str| CliError::Usage(format!("grid '{s}': {m}"));
    let mut out = Vec::new();
    for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = item.split(':').collect();
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad(&format!("'{t}' is not a number")));
        match parts.as_slice() {
            [v] => out.push(num(v)?),
            [a, b, steps] => {
                let (a, b) = (num(a)?, num(b)?);
                let steps: usize = steps.trim().parse().map_err(|_| bad("steps must be a non-negative integer"))?;
                match steps {
                    0 => {}
                    1 => out.push(a),
                    _ => {
                        if a <= 0.0 || b <= 0.0 {
                            return Err(bad("log ranges need positive end points"));
                        }
                        let (la, lb) = (a.ln(), b.ln());
                        out.extend((0..steps).map(|k| (la + (lb - la) * k as f64 / (steps - 1) as f64).exp()));
                        // Pin the end points against rounding.
                        *out.last_mut().unwrap() = b;
                        let first = out.len() - steps;
                        out[first] = a;
                    }
                }
            }
            _ => return Err(bad("expected 'value' or 'a:b:steps'")),
        }
    }
    if let Some(v) = out.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(bad(&format!("{v} outside [0, 1]")));
    }
    Ok(out)
}

/// `n` or `a:b`, inclusive.
pub fn parse_n_range(s: &str) -> Result<Vec<u32>, CliError> {
    let bad = || CliError::Usage(format!("range '{s}': expected 'n' or 'a:b'"));
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| bad());
    let (a, b) = match s.split(':').collect::<Vec<_>>().as_slice() {
        [v] => (num(v)?, num(v)?),
        [a, b] => (num(a)?, num(b)?),
        _ => return Err(bad()),
    };
    if a > b || b > 20 {
        return Err(CliError::Usage(format!("range '{s}': need a <= b <= 20")));
    }
    Ok((a..=b).collect())
}

/// A finished table, ready for CSV or JSON.
pub struct Table {
    pub command: &'static str,
    pub config: Value,
    pub seed: u64,
    pub format: Format,
    pub out: Option<PathBuf>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
    /// Extra JSON fields; written as `#` comments in CSV.
    pub extra: Vec<(String, Value)>,
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() => format!("{f:e}"),
            _ => n.to_string(),
        },
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

impl Table {
    pub fn render(&self) -> Result<Vec<u8>, CliError> {
        match self.format {
            Format::Csv => {
                let mut buf = Vec::new();
                writeln!(buf, "# qpolar {VERSION} {}", self.command)?;
                writeln!(buf, "# seed {}", self.seed)?;
                writeln!(buf, "# config {}", self.config)?;
                for (k, v) in &self.extra {
                    writeln!(buf, "# {k} {v}")?;
                }
                let mut wr = csv::Writer::from_writer(&mut buf);
                wr.write_record(&self.columns).map_err(io::Error::from)?;
                for r in &self.rows {
                    wr.write_record(r.iter().map(cell)).map_err(io::Error::from)?;
                }
                wr.flush()?;
                drop(wr);
                Ok(buf)
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| Value::Object(self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect()))
                    .collect();
                let mut doc = json!({
                    "version": VERSION,
                    "command": self.command,
                    "seed": self.seed,
                    "config": self.config,
                    "rows": rows,
                });
                for (k, v) in &self.extra {
                    doc[k] = v.clone();
                }
                let mut buf = serde_json::to_vec_pretty(&doc).expect("json");
                buf.push(b'\n');
                Ok(buf)
            }
        }
    }

    fn emit(&self, stdout: &mut dyn Write) -> Result<(), CliError> {
        let bytes = self.render()?;
        match &self.out {
            Some(p) => fs::write(p, bytes)?,
            None => stdout.write_all(&bytes)?,
        }
        Ok(())
    }
}

fn de_method(pop: usize, seed: u64) -> DeMethod {
    if pop == 0 {
        DeMethod::Exact
    } else {
        DeMethod::Population { size: pop, seed: crate::rng::substream_seed(seed, crate::rng::Stream::Construction) }
    }
}

fn profile(n: u32, channel: ChannelKind, p: f64, mode: ConstructionMode, method: DeMethod) -> Result<ReliabilityProfile, Error> {
    match channel {
        ChannelKind::Erasure => ReliabilityProfile::erasure(n, p),
        ChannelKind::Depolarizing => ReliabilityProfile::depolarizing(n, p, mode, method),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstructConfig {
    pub n: String,
    pub channel: ChannelKind,
    pub mode: ConstructionMode,
    pub p_grid: String,
    pub family: Option<Family>,
    pub de_pop: usize,
    pub seed: u64,
    pub format: Format,
}

pub fn cmd_construct(args: ConstructArgs) -> Result<Table, CliError> {
    let a = merge_config(&args, args.output.config.as_deref())?;
    let cfg = ConstructConfig {
        n: a.n.unwrap_or_else(|| "3:12".into()),
        channel: a.channel.unwrap_or(ChannelKind::Depolarizing),
        mode: a.mode.unwrap_or(ConstructionMode::IgnoreCorr),
        p_grid: a.p_grid.unwrap_or_else(|| "1e-3".into()),
        family: a.family,
        de_pop: a.de_pop.unwrap_or(0),
        seed: a.output.seed.unwrap_or(0),
        format: a.output.format.unwrap_or_default(),
    };
    let ns = parse_n_range(&cfg.n)?;
    let grid = parse_grid(&cfg.p_grid)?;
    let families = match cfg.family {
        Some(f) => vec![f],
        None => vec![Family::Q1, Family::Shor],
    };
    let method = de_method(cfg.de_pop, cfg.seed);
    let mut rows = Vec::new();
    for &n in &ns {
        for &p in &grid {
            let prof = profile(n, cfg.channel, p, cfg.mode, method)?;
            for &fam in &families {
                let code = construct(n, &prof, fam)?;
                rows.push(vec![
                    json!(n),
                    json!(code.len()),
                    json!(cfg.channel),
                    json!(cfg.mode),
                    json!(p),
                    json!(fam),
                    json!(code.i),
                    json!(min_distance_bounded(&code, 20)?),
                    json!(q1_position_ler(&prof, code.i)),
                ]);
            }
        }
    }
    Ok(Table {
        command: "construct",
        config: serde_json::to_value(&cfg).expect("config"),
        seed: cfg.seed,
        format: cfg.format,
        out: a.output.out,
        columns: vec!["n", "N", "channel", "mode", "p", "family", "i", "min_distance", "pe_l"],
        rows,
        extra: vec![],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodeSelection {
    pub n: u32,
    pub i: usize,
    pub family: Option<Family>,
    pub no_skip: bool,
}

fn resolve_code(c: &CodeArgs) -> Result<CodeSelection, CliError> {
    let n = match (c.n, c.big_n) {
        (Some(n), None) => n,
        (None, Some(len)) if len.is_power_of_two() && len >= 2 => len.trailing_zeros(),
        (None, Some(len)) => return Err(CliError::Usage(format!("--N {len} is not a power of two >= 2"))),
        (Some(n), Some(len)) if len == 1usize.checked_shl(n).unwrap_or(0) => n,
        (Some(_), Some(_)) => return Err(CliError::Usage("--n and --N disagree".into())),
        (None, None) => return Err(CliError::Usage("one of --n or --N is required".into())),
    };
    if n == 0 || n > 20 {
        return Err(CliError::Usage(format!("n = {n} outside [1, 20]")));
    }
    let (i, family) = match (c.i, c.family) {
        (Some(i), fam) => (Q1Code::new(n, i)?.i, fam),
        (None, fam) => {
            let fam = fam.unwrap_or(Family::Q1);
            let prof = ReliabilityProfile::depolarizing(n, 1e-3, ConstructionMode::IgnoreCorr, DeMethod::Exact)?;
            (construct(n, &prof, fam)?.i, Some(fam))
        }
    };
    Ok(CodeSelection { n, i, family, no_skip: c.no_skip.unwrap_or(false) })
}

impl CodeSelection {
    fn code(&self) -> Q1Code {
        Q1Code::new(self.n, self.i).expect("validated")
    }

    fn prep_config(&self) -> PrepConfig {
        PrepConfig { skip_leading_zz: !self.no_skip, ..Default::default() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrepRateConfig {
    #[serde(flatten)]
    pub code: CodeSelection,
    pub target: TargetChoice,
    pub p_grid: String,
    pub trials: u64,
    pub seed: u64,
    pub format: Format,
}

pub fn cmd_prep_rate(args: PrepRateArgs) -> Result<Table, CliError> {
    let a = merge_config(&args, args.output.config.as_deref())?;
    let cfg = PrepRateConfig {
        code: resolve_code(&a.code)?,
        target: a.target.unwrap_or(TargetChoice::Both),
        p_grid: a.p_grid.unwrap_or_else(|| "1e-3".into()),
        trials: a.trials.unwrap_or(100_000),
        seed: a.output.seed.unwrap_or(0),
        format: a.output.format.unwrap_or_default(),
    };
    let grid = parse_grid(&cfg.p_grid)?;
    let code = cfg.code.code();
    let targets = match cfg.target {
        TargetChoice::LogicalZ => vec![Target::LogicalZ],
        TargetChoice::LogicalX => vec![Target::LogicalX],
        TargetChoice::Both => vec![Target::LogicalZ, Target::LogicalX],
    };
    let mut rows = Vec::new();
    for &p in &grid {
        for &t in &targets {
            let r = estimate_prep_rate(&code, t, NoiseModel::new(p)?, cfg.trials, cfg.seed, cfg.code.prep_config())?;
            rows.push(vec![
                json!(code.len()),
                json!(code.i),
                json!(t),
                json!(p),
                json!(r.attempts),
                json!(r.accepted),
                json!(r.p_prep),
                json!(r.ci95.0),
                json!(r.ci95.1),
                json!(r.mean_weight_x),
                json!(r.mean_weight_z),
            ]);
        }
    }
    Ok(Table {
        command: "prep-rate",
        config: serde_json::to_value(&cfg).expect("config"),
        seed: cfg.seed,
        format: cfg.format,
        out: a.output.out,
        columns: vec!["N", "i", "target", "p", "attempts", "accepted", "p_prep", "ci_lo", "ci_hi", "mean_wx", "mean_wz"],
        rows,
        extra: vec![],
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LerConfig {
    #[serde(flatten)]
    pub code: CodeSelection,
    pub p_grid: String,
    pub method: MethodChoice,
    pub failures: u64,
    pub trials: u64,
    pub prep_runs: Option<u64>,
    pub de_pop: usize,
    pub seed: u64,
    pub format: Format,
}

pub fn cmd_ler(args: LerArgs) -> Result<Table, CliError> {
    let a = merge_config(&args, args.output.config.as_deref())?;
    let cfg = LerConfig {
        code: resolve_code(&a.code)?,
        p_grid: a.p_grid.unwrap_or_else(|| "1e-3".into()),
        method: a.method.unwrap_or(MethodChoice::Both),
        failures: a.failures.unwrap_or(100),
        trials: a.trials.unwrap_or(10_000_000),
        prep_runs: a.prep_runs,
        de_pop: a.de_pop.unwrap_or(0),
        seed: a.output.seed.unwrap_or(0),
        format: a.output.format.unwrap_or_default(),
    };
    if cfg.failures == 0 {
        return Err(CliError::Usage("--failures must be at least 1".into()));
    }
    let grid = parse_grid(&cfg.p_grid)?;
    let code = cfg.code.code();
    let prep = cfg.code.prep_config();
    let mut mc = Vec::new();
    let mut de = Vec::new();
    for &p in &grid {
        let noise = NoiseModel::new(p)?;
        if cfg.method != MethodChoice::De {
            mc.push(estimate_ler_mc(&code, noise, cfg.failures, cfg.trials, cfg.seed, prep)?);
        }
        if cfg.method != MethodChoice::Mc {
            de.push(estimate_ler_de(&code, noise, cfg.prep_runs, de_method(cfg.de_pop, cfg.seed), cfg.seed, prep)?);
        }
    }
    let row = |e: &LerEstimate, method: &str| {
        vec![
            json!(code.len()),
            json!(code.i),
            json!(e.p),
            json!(method),
            json!(e.p_x_l),
            json!(e.p_z_l),
            json!(e.p_e_l),
            json!(e.trials_x),
            json!(e.trials_z),
            json!(e.failures_x + e.failures_z),
            json!(e.censored),
            json!(cfg.seed),
        ]
    };
    let mut rows: Vec<Vec<Value>> = mc.iter().map(|e| row(e, "mc")).collect();
    rows.extend(de.iter().map(|e| row(e, "de")));
    let threshold = |es: &[LerEstimate]| -> Value {
        let pts: Vec<(f64, f64)> = es.iter().filter(|e| !e.censored).map(|e| (e.p, e.p_e_l)).collect();
        let th: Option<Pseudothreshold> = pseudothreshold(&pts);
        serde_json::to_value(th).expect("json")
    };
    let mut extra = Vec::new();
    if !mc.is_empty() {
        extra.push(("pseudothreshold_mc".to_string(), threshold(&mc)));
    }
    if !de.is_empty() {
        extra.push(("pseudothreshold_de".to_string(), threshold(&de)));
    }
    Ok(Table {
        command: "ler",
        config: serde_json::to_value(&cfg).expect("config"),
        seed: cfg.seed,
        format: cfg.format,
        out: a.output.out,
        columns: vec![
            "N", "i", "p", "method", "P_X_L", "P_Z_L", "P_e_L", "trials_x", "trials_z", "failures", "censored", "seed",
        ],
        rows,
        extra,
    })
}

/// Outcome of one selftest check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
        }
        s
    }
}

pub fn cmd_selftest(args: &SelftestArgs) -> SelftestReport {
    let seed = args.seed.unwrap_or(0);
    let checks = vec![
        check_involution(seed, args.corrupt_transform),
        check_oracle(seed),
        check_fault_bound(seed),
        check_zero_noise(seed),
    ];
    SelftestReport { checks }
}

fn check_involution(seed: u64, corrupt: bool) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0usize;
    let mut total = 0usize;
    for k in 0..=12 {
        for _ in 0..50 {
            let x = BitVector::random(1 << k, &mut rng);
            let mut y = x.clone();
            y.polar_in_place();
            if corrupt {
                y.flip(rng.random_range(0..y.len()));
            }
            y.polar_in_place();
            let mut z = x.clone();
            z.polar_transpose_in_place();
            z.polar_transpose_in_place();
            bad += (y != x) as usize + (z != x) as usize;
            total += 2;
        }
    }
    Check { name: "involution", passed: bad == 0, detail: format!("{bad} of {total} round trips differ, lengths 1..4096") }
}

fn check_oracle(seed: u64) -> Check {
    let mut worst = 1.0f64;
    let mut runs = 0usize;
    let mut missing = 0usize;
    for n in 1..=3u32 {
        for i in 1..=1usize << n {
            let code = Q1Code::new(n, i).expect("in range");
            for target in [Target::LogicalZ, Target::LogicalX] {
                if target == Target::LogicalX && i == 1 {
                    continue;
                }
                let bits = prep_bits(n, target.final_position(&code).expect("checked"));
                for s in 0..20u64 {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (s << 8) ^ ((n as u64) << 40) ^ i as u64);
                    let mut trace = PrepTrace::default();
                    let cfg = PrepConfig::default();
                    let out = prepare(&code, target, cfg, &mut RngDriver::new(&mut rng, 0.0), Some(&mut trace))
                        .expect("valid code");
                    runs += 1;
                    let (Some(st), Ok(Some(replay))) = (out.state, replay_trace(n, &bits, &trace)) else {
                        missing += 1;
                        continue;
                    };
                    let mut want = apply_polar_encoding(n, &st.u, &st.v).expect("small");
                    want.apply_pauli(&st.frame.x, &st.frame.z);
                    worst = worst.min(replay.fidelity(&want));
                }
            }
        }
    }
    Check {
        name: "oracle-equivalence",
        passed: missing == 0 && worst >= 1.0 - 1e-9,
        detail: format!("{runs} noiseless preparations at N <= 8, min fidelity {worst:.12}, {missing} unreplayable"),
    }
}

fn check_fault_bound(seed: u64) -> Check {
    let code = Q1Code::new(4, 7).expect("in range");
    let noise = NoiseModel { p: 1e-2 };
    let cfg = PrepConfig { track_canonical: true, ..Default::default() };
    let mut accepted = 0usize;
    let mut violations = 0usize;
    let mut attempt = seed;
    for target in [Target::LogicalZ, Target::LogicalX] {
        let i_final = target.final_position(&code).expect("i >= 2");
        let mut got = 0;
        while got < 200 {
            let out = prepare_noisy(&code, target, noise, attempt, cfg).expect("valid");
            attempt = attempt.wrapping_add(1);
            let Some(s) = out.state else { continue };
            got += 1;
            let c = s.canonical.expect("tracked");
            let ok = c.x.weight() as u32 <= out.fault_count
                && c.z.weight() as u32 <= out.fault_count
                && frames_equivalent(&s.frame, &c, i_final);
            violations += (!ok) as usize;
        }
        accepted += got;
    }
    Check {
        name: "fault-weight-bound",
        passed: violations == 0,
        detail: format!("{accepted} accepted (16, 7) preparations at p = 1e-2, {violations} violations"),
    }
}

fn check_zero_noise(seed: u64) -> Check {
    let code = Q1Code::new(4, 7).expect("in range");
    let noise = NoiseModel { p: 0.0 };
    let cfg = PrepConfig::default();
    let mut problems = Vec::new();
    for t in [Target::LogicalZ, Target::LogicalX] {
        match estimate_prep_rate(&code, t, noise, 200, seed, cfg) {
            Ok(r) if r.p_prep == 1.0 && r.mean_weight_x == 0.0 && r.mean_weight_z == 0.0 => {}
            Ok(r) => problems.push(format!("{t:?} rate {}", r.p_prep)),
            Err(e) => problems.push(e.to_string()),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut errors = 0;
    for _ in 0..100 {
        for r in [mc_x_trial(&code, noise, cfg, 1, &mut rng), mc_z_trial(&code, noise, cfg, 1, &mut rng)] {
            match r {
                Ok(r) => errors += r.logical_error as usize,
                Err(e) => problems.push(e.to_string()),
            }
        }
    }
    if errors > 0 {
        problems.push(format!("{errors} logical errors"));
    }
    Check {
        name: "zero-noise",
        passed: problems.is_empty(),
        detail: if problems.is_empty() { "p = 0: every preparation accepted, no logical errors".into() } else { problems.join("; ") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("qpolar").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1e-3").unwrap(), vec![1e-3]);
        assert_eq!(parse_grid("0, 1e-3").unwrap(), vec![0.0, 1e-3]);
        assert!(parse_grid("1e-3:1e-2:0").unwrap().is_empty());
        let g = parse_grid("1e-4:1e-2:3").unwrap();
        assert_eq!(g.len(), 3);
        assert_eq!((g[0], g[2]), (1e-4, 1e-2));
        assert!((g[1] - 1e-3).abs() < 1e-15);
        assert!(parse_grid("0:1e-2:3").is_err());
        assert!(parse_grid("2").is_err());
        assert!(parse_grid("a").is_err());
        assert_eq!(parse_n_range("3:5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_n_range("4").unwrap(), vec![4]);
        assert!(parse_n_range("5:3").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run_capture(&["--help"]).0, EXIT_OK);
        assert_eq!(run_capture(&["--version"]).0, EXIT_OK);
        assert_eq!(run_capture(&["bogus"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["construct", "--n", "x"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["prep-rate", "--n", "4", "--i", "99"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["prep-rate", "--N", "12"]).0, EXIT_USAGE);
    }

    #[test]
    fn error_kinds_map_to_exit_codes() {
        assert_eq!(CliError::from(Error::InvalidInput("x".into())).exit_code(), EXIT_USAGE);
        assert_eq!(CliError::from(Error::ResourceBound("x".into())).exit_code(), EXIT_RESOURCE);
    }

    #[test]
    fn empty_grid_gives_header_only() {
        let (code, out, _) = run_capture(&["construct", "--n", "3", "--p-grid", "1e-3:1e-2:0"]);
        assert_eq!(code, EXIT_OK);
        let body: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body, vec!["n,N,channel,mode,p,family,i,min_distance,pe_l"]);
    }

    #[test]
    fn construct_erasure_rows() {
        let (code, out, _) = run_capture(&["construct", "--n", "3:4", "--channel", "erasure", "--p-grid", "1e-3"]);
        assert_eq!(code, EXIT_OK);
        let rows: Vec<Vec<String>> = out
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').map(String::from).collect())
            .collect();
        let picked: Vec<(&str, &str, &str)> = rows.iter().map(|r| (r[5].as_str(), r[6].as_str(), r[7].as_str())).collect();
        assert_eq!(picked, vec![("q1", "2", "2"), ("shor", "2", "2"), ("q1", "7", "4"), ("shor", "4", "4")]);
    }

    #[test]
    fn header_echoes_version_seed_config() {
        let (_, out, _) = run_capture(&["prep-rate", "--N", "8", "--i", "3", "--p-grid", "0", "--trials", "10", "--seed", "9"]);
        let lines: Vec<&str> = out.lines().collect();
        assert!(lines[0].starts_with(&format!("# qpolar {VERSION} prep-rate")));
        assert_eq!(lines[1], "# seed 9");
        assert!(lines[2].starts_with("# config {"));
        // p = 0 rows accept everything.
        for l in &lines[4..] {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f[6], "1e0", "{l}");
        }
    }

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join(format!("qpolar-cli-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let file = dir.join("cfg.json");
        fs::write(&file, r#"{"N": 8, "i": 3, "p_grid": "0", "trials": 5, "seed": 4, "format": "json"}"#).unwrap();
        let (code, out, err) = run_capture(&["prep-rate", "--config", file.to_str().unwrap(), "--trials", "7"]);
        assert_eq!(code, EXIT_OK, "{err}");
        let doc: Value = serde_json::from_str(&out).unwrap();
        assert_eq!(doc["config"]["trials"], 7);
        assert_eq!(doc["seed"], 4);
        assert_eq!(doc["rows"][0]["attempts"], 7);

        // The JSON output of a run is itself a valid config file.
        let echo = dir.join("echo.json");
        fs::write(&echo, &out).unwrap();
        let (code, again, err) = run_capture(&["prep-rate", "--config", echo.to_str().unwrap()]);
        assert_eq!(code, EXIT_OK, "{err}");
        assert_eq!(again, out);
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn selftest_passes_and_detects_corruption() {
        let (code, out, _) = run_capture(&["selftest"]);
        assert_eq!(code, EXIT_OK, "{out}");
        assert_eq!(out.lines().count(), 4);
        let (code, out, _) = run_capture(&["selftest", "--corrupt-transform"]);
        assert_eq!(code, EXIT_SELFTEST);
        assert!(out.lines().any(|l| l.starts_with("FAIL involution")), "{out}");
    }

    #[test]
    fn output_independent_of_threads() {
        let args = |t: &'static str| {
            vec!["--threads", t, "ler", "--N", "16", "--i", "7", "--p-grid", "3e-3", "--failures", "3", "--method", "both", "--prep-runs", "200", "--seed", "5"]
        };
        let (c1, a, _) = run_capture(&args("1"));
        let (c4, b, _) = run_capture(&args("4"));
        assert_eq!((c1, c4), (EXIT_OK, EXIT_OK));
        assert_eq!(a, b);
    }
}
