//! `doeng`: evaluate causal queries, verify identities, sample and estimate.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use doeng::dsl::{parse_model, ModelError};
use doeng::identities::{verify_model, verify_random, Outcome, RandomConfig, Shape};
use doeng::inference::{
    adjustment_ace, adjustment_ace_data, bootstrap_stderr, sample_dataset, AdjustmentResult, Dataset, InferenceError,
};
use doeng::query::{eval_str, Method, QueryError};
use doeng::value::{fmt_rational, to_f64, Rational};
use doeng::Scm;

#[derive(Parser, Debug)]
#[command(name = "doeng", version, about = "Exact inference for finite structural causal models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Maximum number of exogenous configurations to enumerate.
    #[arg(long, global = true, env = "DOENG_SUPPORT_CAP")]
    support_cap: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate queries against a model.
    Eval(EvalArgs),
    /// Run the identity checks on a model or on random models.
    Verify(VerifyArgs),
    /// Draw an observational dataset of the observed variables.
    Sample(SampleArgs),
    /// Plug-in adjusted and naive contrasts from a CSV dataset.
    Estimate(EstimateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum MethodArg {
    Exact,
    Mc,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Model file (.scm).
    model: PathBuf,
    /// Query text; may be repeated.
    #[arg(short, long = "query")]
    queries: Vec<String>,
    /// File with one query per line (`#` starts a comment).
    #[arg(long)]
    query_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "exact")]
    method: MethodArg,
    /// Monte Carlo sample count.
    #[arg(short = 'n', long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Model file (.scm); omit when using --random.
    model: Option<PathBuf>,
    /// Number of random models to check.
    #[arg(long, conflicts_with = "model")]
    random: Option<u64>,
    /// First seed for random models.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Shape of random models.
    #[arg(long, default_value = "fig2a")]
    shape: Shape,
    /// Treatment variable.
    #[arg(long, default_value = "X")]
    x: String,
    /// Outcome variable.
    #[arg(long, default_value = "Y")]
    y: String,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SampleArgs {
    model: PathBuf,
    #[arg(short = 'n', long, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path; standard output when omitted.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// CSV dataset with a header row.
    data: PathBuf,
    #[arg(long)]
    x: String,
    #[arg(long)]
    y: String,
    /// Adjustment variables (repeat or separate with commas).
    #[arg(long, value_delimiter = ',')]
    adjust: Vec<String>,
    /// Model whose exact values are printed alongside.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Bootstrap replicates for the standard error.
    #[arg(long, default_value_t = 200, value_parser = clap::value_parser!(u64).range(2..))]
    bootstrap: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    json: bool,
}

/// Exit code 2 for usage errors, 1 for everything else.
enum Failure {
    Usage(String),
    Domain(String),
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<InferenceError> for Failure {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::UnknownColumn(_) => Failure::Usage(e.to_string()),
            e => Failure::Domain(e.to_string()),
        }
    }
}

impl From<QueryError> for Failure {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::Parse(_) | QueryError::UnknownIdentity(_) | QueryError::BadArgument { .. } => {
                Failure::Usage(e.to_string())
            }
            e => Failure::Domain(e.to_string()),
        }
    }
}

type CmdResult = Result<bool, Failure>;

fn load_model(path: &Path, cap: Option<u64>) -> Result<Scm, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
    let scm = parse_model(&text).map_err(|e| match e {
        ModelError::Parse(p) => Failure::Domain(format!("{}:{p}", path.display())),
        ModelError::Invalid(v) => {
            let lines: Vec<String> = v.0.iter().map(|e| format!("{}:{e}", path.display())).collect();
            Failure::Domain(format!("invalid model\n{}", lines.join("\n")))
        }
    })?;
    Ok(match cap {
        Some(c) => scm.with_support_cap(c),
        None => scm,
    })
}

fn query_lines(text: &str) -> Vec<String> {
    text.lines().map(|l| l.split('#').next().unwrap_or("").trim().to_string()).filter(|l| !l.is_empty()).collect()
}

fn cmd_eval(args: EvalArgs, cap: Option<u64>) -> CmdResult {
    let mut queries = args.queries.clone();
    if let Some(p) = &args.query_file {
        let text = fs::read_to_string(p).map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
        queries.extend(query_lines(&text));
    }
    if queries.is_empty() {
        return Err(Failure::Usage("eval needs --query or --query-file".into()));
    }
    let scm = load_model(&args.model, cap)?;
    let method = match args.method {
        MethodArg::Exact => Method::Exact,
        MethodArg::Mc => Method::MonteCarlo { samples: args.samples, seed: args.seed },
    };
    let mut ok = true;
    let mut json_out = Vec::new();
    let mut stdout = io::stdout().lock();
    for q in &queries {
        let answer = eval_str(&scm, q, method)?;
        ok &= answer.pass();
        if let Some(w) = answer.warning() {
            eprintln!("{w}");
        }
        if args.json {
            json_out.push(answer.to_json());
        } else {
            if queries.len() > 1 {
                writeln!(stdout, "{q}")?;
            }
            write!(stdout, "{answer}")?;
        }
    }
    if args.json {
        let v = if json_out.len() == 1 { json_out.remove(0) } else { json!(json_out) };
        writeln!(stdout, "{}", serde_json::to_string_pretty(&v).expect("json"))?;
    }
    Ok(ok)
}

fn summarize(runs: &[(u64, Vec<Outcome>)]) -> String {
    let mut rows: Vec<(String, usize, usize, usize)> = Vec::new();
    for (_, outcomes) in runs {
        for o in outcomes {
            let name = match o {
                Outcome::Report(r) => r.identity.clone(),
                Outcome::Skipped { identity, .. } | Outcome::Error { identity, .. } => identity.clone(),
            };
            let idx = match rows.iter().position(|r| r.0 == name) {
                Some(i) => i,
                None => {
                    rows.push((name, 0, 0, 0));
                    rows.len() - 1
                }
            };
            match o {
                Outcome::Skipped { .. } => rows[idx].3 += 1,
                o if o.pass() => rows[idx].1 += 1,
                _ => rows[idx].2 += 1,
            }
        }
    }
    let mut out = String::new();
    for (name, pass, fail, skip) in rows {
        let verdict = if fail == 0 { "PASS" } else { "FAIL" };
        out.push_str(&format!("{name}: {verdict} ({pass} passed, {fail} failed, {skip} skipped)\n"));
    }
    out
}

fn cmd_verify(args: VerifyArgs, cap: Option<u64>) -> CmdResult {
    let runs: Vec<(u64, Vec<Outcome>)> = match (&args.model, args.random) {
        (Some(path), None) => {
            let scm = load_model(path, cap)?;
            let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            vec![(0, verify_model(&scm, &name, &args.x, &args.y))]
        }
        (None, Some(n)) => verify_random(args.shape, n, args.seed, &RandomConfig::default()),
        _ => return Err(Failure::Usage("verify needs a model file or --random N".into())),
    };
    let ok = runs.iter().all(|(_, o)| o.iter().all(Outcome::pass));
    let mut stdout = io::stdout().lock();
    if args.json {
        let v: Vec<_> = runs
            .iter()
            .map(|(seed, o)| json!({"seed": seed, "outcomes": o.iter().map(Outcome::to_json).collect::<Vec<_>>()}))
            .collect();
        let v = if args.model.is_some() { v[0]["outcomes"].clone() } else { json!(v) };
        writeln!(stdout, "{}", serde_json::to_string_pretty(&v).expect("json"))?;
    } else if args.model.is_some() {
        for o in &runs[0].1 {
            write!(stdout, "{o}")?;
        }
    } else {
        write!(stdout, "{}", summarize(&runs))?;
        for (_, outcomes) in &runs {
            for o in outcomes.iter().filter(|o| !o.pass()) {
                write!(stdout, "{o}")?;
            }
        }
    }
    writeln!(stdout, "{}", if ok { "all checks pass" } else { "some checks FAILED" })?;
    Ok(ok)
}

fn cmd_sample(args: SampleArgs, cap: Option<u64>) -> CmdResult {
    let scm = load_model(&args.model, cap)?;
    let data = sample_dataset(&scm, args.samples, args.seed)?;
    match &args.out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))?;
            data.write_csv(io::BufWriter::new(file)).map_err(|e| Failure::Domain(e.to_string()))?;
            println!("wrote {} rows (seed {}) to {}", data.len(), args.seed, path.display());
        }
        None => {
            data.write_csv(io::stdout().lock()).map_err(|e| Failure::Domain(e.to_string()))?;
            eprintln!("wrote {} rows (seed {})", data.len(), args.seed);
        }
    }
    Ok(true)
}

fn line(label: &str, r: &Rational, se: Option<f64>) -> String {
    match se {
        Some(se) => format!("{label:<10}{} = {:.6} ± {se:.6}", fmt_rational(r), to_f64(r)),
        None => format!("{label:<10}{} = {}", fmt_rational(r), to_f64(r)),
    }
}

fn rjson(r: &Rational) -> serde_json::Value {
    json!({"fraction": fmt_rational(r), "value": to_f64(r)})
}

fn cmd_estimate(args: EstimateArgs, cap: Option<u64>) -> CmdResult {
    let file = fs::File::open(&args.data).map_err(|e| Failure::Domain(format!("{}: {e}", args.data.display())))?;
    let data = Dataset::read_csv(io::BufReader::new(file)).map_err(|e| Failure::Domain(e.to_string()))?;
    let adjust: Vec<&str> = args.adjust.iter().map(String::as_str).collect();
    for c in adjust.iter().chain([&args.x.as_str(), &args.y.as_str()]) {
        data.column(c)?;
    }
    let adjusted = adjustment_ace_data(&data, &args.x, &args.y, &adjust)?;
    let naive = adjustment_ace_data(&data, &args.x, &args.y, &[])?;
    let se = bootstrap_stderr(&data, &args.x, &args.y, &adjust, args.bootstrap, args.seed)?;
    let exact: Option<(AdjustmentResult, Rational)> = match &args.compare {
        Some(p) => {
            let scm = load_model(p, cap)?;
            let a = adjustment_ace(&scm, &args.x, &args.y, &adjust)?;
            let n = adjustment_ace(&scm, &args.x, &args.y, &[])?;
            Some((a, n.value))
        }
        None => None,
    };
    for s in &adjusted.skipped {
        let shown: Vec<String> = s.iter().map(|(n, v)| format!("{n}={v}")).collect();
        eprintln!("warning: skipped empty stratum ({})", shown.join(", "));
    }
    let mut stdout = io::stdout().lock();
    if args.json {
        let mut v = json!({
            "rows": data.len(),
            "adjust": args.adjust,
            "adjusted": rjson(&adjusted.value),
            "stderr": se,
            "naive": rjson(&naive.value),
        });
        if let Some((a, n)) = &exact {
            v["exact_adjusted"] = rjson(&a.value);
            v["exact_naive"] = rjson(n);
        }
        writeln!(stdout, "{}", serde_json::to_string_pretty(&v).expect("json"))?;
    } else {
        writeln!(stdout, "rows      {}", data.len())?;
        writeln!(stdout, "{}", line("adjusted", &adjusted.value, Some(se)))?;
        writeln!(stdout, "{}", line("naive", &naive.value, None))?;
        if let Some((a, n)) = &exact {
            writeln!(stdout, "{}", line("exact adj", &a.value, None))?;
            writeln!(stdout, "{}", line("exact nv", n, None))?;
            writeln!(stdout, "diff adj  {:+.6}", to_f64(&(&adjusted.value - &a.value)))?;
            writeln!(stdout, "diff nv   {:+.6}", to_f64(&(&naive.value - n)))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cap = cli.support_cap;
    let result = match cli.command {
        Command::Eval(a) => cmd_eval(a, cap),
        Command::Verify(a) => cmd_verify(a, cap),
        Command::Sample(a) => cmd_sample(a, cap),
        Command::Estimate(a) => cmd_estimate(a, cap),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Domain(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
