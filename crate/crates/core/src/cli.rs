//! The `keyfuse` command-line front end.
//!
//! Every subcommand takes the same flag set; parameters may also come from a
//! flat JSON file given with `--config`, and flags win on conflict. Exit
//! codes: 0 success, 1 verification failure, 2 usage error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{Map, Value};

use crate::exposure::{simulate_session_with_workers, ExposureModel, SessionConfig};
use crate::keyspace::{KeyDistribution, KeySpace};
use crate::kft::{BaseOp, KftSpec, Permutation, MAX_LAWS_BITS};
use crate::sop::{self, SopQuery};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFICATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Monte Carlo runs farther than this many standard errors from the closed
/// form fail `simulate`.
pub const MAX_ABS_Z: f64 = 4.0;

const DEFAULT_TRIALS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fuse the 2-bit toy keys k_A, k_B, k_C and tabulate their entropies.
    ToyModel,
    /// Closed-form SOP over a (p, w) grid, fusing and non-fusing.
    SopCurve,
    /// Largest per-key exposure probability meeting a target SOP.
    AllowedExposure,
    /// Monte Carlo session simulation cross-checked against the closed form.
    Simulate,
    /// Exhaustive Latin-square and algebraic-law check of a KFT.
    VerifyKft,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ToyModel => "toy-model",
            Command::SopCurve => "sop-curve",
            Command::AllowedExposure => "allowed-exposure",
            Command::Simulate => "simulate",
            Command::VerifyKft => "verify-kft",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KftArg {
    Xor,
    Add,
    Sub,
    Permuted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

/// All parameters a command may read.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Key size in bits.
    #[arg(long, global = true)]
    pub bits: Option<u32>,
    /// KFT instance; `permuted` is XOR followed by `--perm` (default v+1 mod M).
    #[arg(long, value_enum, global = true)]
    pub kft: Option<KftArg>,
    /// Relabeling table for `--kft permuted`, comma separated.
    #[arg(long, value_delimiter = ',', global = true)]
    #[serde(default, deserialize_with = "one_or_many")]
    pub perm: Vec<u64>,
    /// Key exposure probability (comma-separated grid for sop-curve).
    #[arg(long, value_delimiter = ',', global = true)]
    #[serde(default, deserialize_with = "one_or_many")]
    pub p: Vec<f64>,
    /// Number of protected messages per session.
    #[arg(long = "K", global = true)]
    #[serde(rename = "K", alias = "k")]
    pub k: Option<u64>,
    /// KFT window size (comma-separated grid where supported).
    #[arg(long, value_delimiter = ',', global = true)]
    #[serde(default, deserialize_with = "one_or_many")]
    pub w: Vec<u64>,
    #[arg(long, global = true)]
    pub trials: Option<u64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for simulate (0 = all cores); never changes results.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Simulate a session without fusion.
    #[arg(long, global = true)]
    #[serde(default)]
    pub no_fusing: bool,
    /// Target secret outage probability (comma-separated).
    #[arg(long = "target-sop", value_delimiter = ',', global = true)]
    #[serde(default, deserialize_with = "one_or_many")]
    pub target_sop: Vec<f64>,
    /// Toy-model inputs: a preset (toy-kA, toy-kB, toy-kC) or a
    /// comma-separated probability list; entries may be fractions like 1/3.
    #[arg(long, global = true)]
    pub ka: Option<String>,
    #[arg(long, global = true)]
    pub kb: Option<String>,
    #[arg(long, global = true)]
    pub kc: Option<String>,
    #[arg(long, value_enum, global = true)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON file with any of the parameters above (snake_case keys).
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

/// Accepts `0.3` as well as `[0.3, 0.5]` in config files.
fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: serde::Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

impl RunConfig {
    /// Fills every parameter unset in `self` from `file`.
    pub fn merged_with(self, file: RunConfig) -> RunConfig {
        fn vec_or<T>(a: Vec<T>, b: Vec<T>) -> Vec<T> {
            if a.is_empty() {
                b
            } else {
                a
            }
        }
        RunConfig {
            bits: self.bits.or(file.bits),
            kft: self.kft.or(file.kft),
            perm: vec_or(self.perm, file.perm),
            p: vec_or(self.p, file.p),
            k: self.k.or(file.k),
            w: vec_or(self.w, file.w),
            trials: self.trials.or(file.trials),
            seed: self.seed.or(file.seed),
            workers: self.workers.or(file.workers),
            no_fusing: self.no_fusing || file.no_fusing,
            target_sop: vec_or(self.target_sop, file.target_sop),
            ka: self.ka.or(file.ka),
            kb: self.kb.or(file.kb),
            kc: self.kc.or(file.kc),
            format: self.format.or(file.format),
            out: self.out.or(file.out),
            config: self.config,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "keyfuse",
    version,
    about = "Key-fusing transformations and secret outage analysis"
)]
pub struct Invocation {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub config: RunConfig,
}

/// A rendered command result.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub body: String,
    /// Set when the command ran but its verification failed.
    pub failure: Option<String>,
}

impl Report {
    fn ok(body: String) -> Self {
        Self {
            body,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

impl From<crate::Error> for UsageError {
    fn from(e: crate::Error) -> Self {
        UsageError(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, UsageError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(UsageError(msg.into()))
}

/// Parses `args` (including the program name), runs the command and writes
/// its output. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let inv = match Invocation::try_parse_from(args) {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = load_config(inv.config).and_then(|cfg| {
        let report = execute(inv.command, &cfg)?;
        emit(&report.body, cfg.out.as_deref())?;
        Ok(report)
    });
    match outcome {
        Ok(Report { failure: None, .. }) => EXIT_OK,
        Ok(Report {
            failure: Some(msg), ..
        }) => {
            eprintln!("verification failed: {msg}");
            EXIT_VERIFICATION
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn load_config(flags: RunConfig) -> CliResult<RunConfig> {
    let Some(path) = flags.config.clone() else {
        return Ok(flags);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
    let file: RunConfig = serde_json::from_str(&text)
        .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
    Ok(flags.merged_with(file))
}

fn emit(body: &str, out: Option<&Path>) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, body)
            .map_err(|e| UsageError(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

/// Runs one command against a fully merged configuration.
pub fn execute(command: Command, cfg: &RunConfig) -> CliResult<Report> {
    match command {
        Command::ToyModel => toy_model(cfg),
        Command::SopCurve => sop_curve(cfg),
        Command::AllowedExposure => allowed_exposure(cfg),
        Command::Simulate => simulate(cfg),
        Command::VerifyKft => verify_kft(cfg),
    }
    .map_err(|e| UsageError(format!("{}: {e}", command.name())))
}

/// Formats with 6 significant digits; scientific notation below 1e-4.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    if x.abs() < 1e-4 {
        return format!("{x:.5e}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn json_num(x: f64) -> Value {
    fmt_num(x)
        .parse::<f64>()
        .ok()
        .and_then(serde_json::Number::from_f64)
        .map_or(Value::Null, Value::Number)
}

/// Named toy-model presets, as exact fractions.
pub fn preset(name: &str) -> Option<KeyDistribution> {
    let probs = match name {
        "toy-kA" => vec![1.0 / 3.0, 1.0 / 4.0, 1.0 / 6.0, 1.0 / 4.0],
        "toy-kB" => vec![0.0, 0.0, 0.0, 1.0],
        "toy-kC" => vec![1.0 / 2.0, 1.0 / 5.0, 1.0 / 6.0, 2.0 / 15.0],
        _ => return None,
    };
    KeyDistribution::from_probs(probs).ok()
}

fn parse_prob(s: &str) -> CliResult<f64> {
    let s = s.trim();
    let parsed = match s.split_once('/') {
        Some((num, den)) => num
            .trim()
            .parse::<f64>()
            .ok()
            .zip(den.trim().parse::<f64>().ok())
            .filter(|(_, d)| *d != 0.0)
            .map(|(n, d)| n / d),
        None => s.parse::<f64>().ok(),
    };
    parsed.map_or_else(|| usage(format!("bad probability {s:?}")), Ok)
}

/// A preset name or a comma-separated probability list.
pub fn parse_distribution(spec: &str) -> CliResult<KeyDistribution> {
    if let Some(d) = preset(spec.trim()) {
        return Ok(d);
    }
    let probs = spec
        .split(',')
        .map(parse_prob)
        .collect::<CliResult<Vec<f64>>>()?;
    Ok(KeyDistribution::from_probs(probs)?)
}

fn build_kft(cfg: &RunConfig, space: KeySpace) -> CliResult<KftSpec> {
    let kind = cfg.kft.unwrap_or(KftArg::Xor);
    if !cfg.perm.is_empty() && kind != KftArg::Permuted {
        return usage("--perm requires --kft permuted");
    }
    Ok(match kind {
        KftArg::Xor => KftSpec::xor(space),
        KftArg::Add => KftSpec::add_mod(space),
        KftArg::Sub => KftSpec::sub_mod(space),
        KftArg::Permuted => {
            let perm = if cfg.perm.is_empty() {
                Permutation::rotation(space)?
            } else {
                Permutation::new(space, cfg.perm.clone())?
            };
            KftSpec::permuted(BaseOp::Xor, perm)
        }
    })
}

fn kft_label(kind: Option<KftArg>) -> &'static str {
    match kind.unwrap_or(KftArg::Xor) {
        KftArg::Xor => "xor",
        KftArg::Add => "add",
        KftArg::Sub => "sub",
        KftArg::Permuted => "permuted",
    }
}

fn messages(cfg: &RunConfig) -> CliResult<u64> {
    match cfg.k.unwrap_or(sop::DEFAULT_MESSAGES) {
        0 => usage("--K must be >= 1"),
        k => Ok(k),
    }
}

fn render_rows(format: Format, header: &[&str], rows: &[Vec<Value>]) -> String {
    match format {
        Format::Csv => {
            let mut out = header.join(",");
            out.push('\n');
            for row in rows {
                let cells: Vec<String> = row
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => s.clone(),
                        Value::Null => String::new(),
                        other => other.to_string(),
                    })
                    .collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            out
        }
        Format::Json => {
            let objects: Vec<Value> = rows
                .iter()
                .map(|row| {
                    let map: Map<String, Value> = header
                        .iter()
                        .map(|h| h.to_string())
                        .zip(row.iter().cloned())
                        .collect();
                    Value::Object(map)
                })
                .collect();
            let mut out = serde_json::to_string_pretty(&objects).expect("serializable");
            out.push('\n');
            out
        }
    }
}

/// CSV cells keep the fixed 6-significant-digit text; JSON gets the number.
fn num_cell(format: Format, x: f64) -> Value {
    match format {
        Format::Csv => Value::String(fmt_num(x)),
        Format::Json => json_num(x),
    }
}

fn toy_model(cfg: &RunConfig) -> CliResult<Report> {
    let format = cfg.format.unwrap_or(Format::Csv);
    let load =
        |arg: &Option<String>, default: &str| parse_distribution(arg.as_deref().unwrap_or(default));
    let ka = load(&cfg.ka, "toy-kA")?;
    let kb = load(&cfg.kb, "toy-kB")?;
    let kc = load(&cfg.kc, "toy-kC")?;
    let space = ka.space();
    if kb.space() != space || kc.space() != space {
        return usage("k_A, k_B and k_C must have the same length");
    }
    if let Some(bits) = cfg.bits {
        if bits != space.bits() {
            return usage(format!(
                "--bits {bits} does not match {}-bit distributions",
                space.bits()
            ));
        }
    }
    let kft = build_kft(cfg, space)?;
    let kab = kft.fuse_dist(&ka, &kb)?;
    let kabc = kft.fuse_dist(&kab, &kc)?;

    let m = space.size() as usize;
    let mut header = vec!["variable".to_string()];
    header.extend((0..m).map(|v| format!("p{v}")));
    header.push("shannon_entropy".into());
    header.push("min_entropy".into());
    let rows: Vec<Vec<Value>> = [
        ("k_A", &ka),
        ("k_B", &kb),
        ("k_C", &kc),
        ("k_AB", &kab),
        ("k_ABC", &kabc),
    ]
    .iter()
    .map(|(name, d)| {
        let mut row = vec![Value::String(name.to_string())];
        row.extend(d.probs().iter().map(|&p| num_cell(format, p)));
        row.push(num_cell(format, d.shannon_entropy()));
        row.push(num_cell(format, d.min_entropy()));
        row
    })
    .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let body = render_rows(format, &header, &rows);

    let best_input = [&ka, &kb, &kc]
        .iter()
        .map(|d| d.min_entropy())
        .fold(0.0, f64::max);
    let failure = (kabc.min_entropy() < best_input - 1e-12).then(|| {
        format!(
            "min-entropy of k_ABC ({}) is below the best input ({})",
            fmt_num(kabc.min_entropy()),
            fmt_num(best_input)
        )
    });
    Ok(Report { body, failure })
}

fn default_p_grid() -> Vec<f64> {
    (1..=19).map(|i| i as f64 / 20.0).collect()
}

fn default_w_grid() -> Vec<u64> {
    (1..=12).collect()
}

fn sop_curve(cfg: &RunConfig) -> CliResult<Report> {
    let format = cfg.format.unwrap_or(Format::Csv);
    let k = messages(cfg)?;
    let p_grid = if cfg.p.is_empty() {
        default_p_grid()
    } else {
        cfg.p.clone()
    };
    let w_grid = if cfg.w.is_empty() {
        default_w_grid()
    } else {
        cfg.w.clone()
    };
    let curve = sop::sop_curve(&p_grid, k, &w_grid)?;
    let rows = curve
        .iter()
        .map(|pt| {
            let fused = SopQuery::new(pt.p, k, pt.w)?;
            let plain = SopQuery::new(pt.p, k, 1)?;
            Ok(vec![
                num_cell(format, pt.p),
                Value::from(pt.w),
                num_cell(format, pt.sop),
                num_cell(format, sop::sop_closed_form(&plain)),
                num_cell(format, sop::log10_sop(&fused)),
            ])
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(Report::ok(render_rows(
        format,
        &["p", "w", "sop_fusing", "sop_nonfusing", "log10_sop_fusing"],
        &rows,
    )))
}

fn allowed_exposure(cfg: &RunConfig) -> CliResult<Report> {
    let format = cfg.format.unwrap_or(Format::Csv);
    let k = messages(cfg)?;
    let targets = if cfg.target_sop.is_empty() {
        vec![1e-6]
    } else {
        cfg.target_sop.clone()
    };
    let w_grid = if cfg.w.is_empty() {
        default_w_grid()
    } else {
        cfg.w.clone()
    };
    let mut rows = Vec::new();
    for &t in &targets {
        for &w in &w_grid {
            let p = sop::allowed_exposure(t, k, w)?;
            rows.push(vec![
                num_cell(format, t),
                Value::from(w),
                num_cell(format, p),
            ]);
        }
    }
    Ok(Report::ok(render_rows(
        format,
        &["target_sop", "w", "allowed_p"],
        &rows,
    )))
}

fn single<T: Copy>(values: &[T], flag: &str, default: Option<T>) -> CliResult<T> {
    match (values, default) {
        ([v], _) => Ok(*v),
        ([], Some(d)) => Ok(d),
        ([], None) => usage(format!("{flag} is required")),
        _ => usage(format!("{flag} takes a single value here")),
    }
}

fn simulate(cfg: &RunConfig) -> CliResult<Report> {
    let format = cfg.format.unwrap_or(Format::Json);
    let p = single(&cfg.p, "--p", None)?;
    let w = single(&cfg.w, "--w", Some(1))?;
    let trials = cfg.trials.unwrap_or(DEFAULT_TRIALS);
    let seed = cfg.seed.unwrap_or(0);
    let mut session = SessionConfig::new(ExposureModel::new(p)?, w as usize, trials, seed);
    session.message_count = messages(cfg)? as usize;
    session.fusing_enabled = !cfg.no_fusing;
    let outcome = simulate_session_with_workers(&session, cfg.workers.unwrap_or(0))?;
    let analytic = session.analytic_sop().expect("disjoint policy");
    let z = outcome.z_score(analytic);

    let fields: Vec<(&str, Value)> = vec![
        ("p", num_cell(format, p)),
        ("message_count", Value::from(session.message_count)),
        ("window_size", Value::from(session.effective_window())),
        ("fusing", Value::Bool(session.fusing_enabled)),
        ("trials", Value::from(trials)),
        ("seed", Value::from(seed)),
        (
            "compromised_trials",
            Value::from(outcome.compromised_trials()),
        ),
        ("estimate", num_cell(format, outcome.estimate)),
        ("std_error", num_cell(format, outcome.std_error)),
        ("analytic", num_cell(format, analytic)),
        ("z_score", num_cell(format, z)),
    ];
    let body = render_object(format, &fields);
    let failure = (z.abs() > MAX_ABS_Z).then(|| {
        format!(
            "Monte Carlo estimate {} is {} standard errors from the closed form {}",
            fmt_num(outcome.estimate),
            fmt_num(z),
            fmt_num(analytic)
        )
    });
    Ok(Report { body, failure })
}

fn render_object(format: Format, fields: &[(&str, Value)]) -> String {
    match format {
        Format::Csv => {
            let header: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
            let row: Vec<Value> = fields.iter().map(|(_, v)| v.clone()).collect();
            render_rows(format, &header, &[row])
        }
        Format::Json => {
            let map: Map<String, Value> = fields
                .iter()
                .map(|(k, v)| (k.to_string(), v.clone()))
                .collect();
            let mut out = serde_json::to_string_pretty(&Value::Object(map)).expect("serializable");
            out.push('\n');
            out
        }
    }
}

fn verify_kft(cfg: &RunConfig) -> CliResult<Report> {
    let format = cfg.format.unwrap_or(Format::Json);
    let bits = cfg.bits.unwrap_or(2);
    if bits > MAX_LAWS_BITS {
        return usage(format!(
            "exhaustive verification supports at most {MAX_LAWS_BITS} bits, got {bits}"
        ));
    }
    let space = KeySpace::new(bits)?;
    let kft = build_kft(cfg, space)?;
    let latin = kft.verify_latin_square()?;
    let laws = kft.check_laws()?;
    let fields: Vec<(&str, Value)> = vec![
        ("kft", Value::String(kft_label(cfg.kft).into())),
        ("bits", Value::from(bits)),
        ("latin_square", Value::Bool(latin)),
        ("commutative", Value::Bool(laws.commutative)),
        ("associative", Value::Bool(laws.associative)),
    ];
    let mut failure = None;
    if !latin {
        let mut msg = String::new();
        let _ = write!(msg, "{} is not a Latin square", kft_label(cfg.kft));
        failure = Some(msg);
    }
    Ok(Report {
        body: render_object(format, &fields),
        failure,
    })
}
