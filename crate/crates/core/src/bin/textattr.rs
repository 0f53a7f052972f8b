use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use textattr::config::{Environment, RunConfig};
use textattr::gateway::Tier;
use textattr::html::{eval_html, explanation_html};
use textattr::multilevel::Preset;
use textattr::pipeline::{evaluate, explain, self_explain_run, ExplanationOutput};
use textattr::scalarize::ScalarizerSpec;
use textattr::segment::{DocumentInput, ParseDocument};
use textattr::{Error, Level, Result};

#[derive(Parser)]
#[command(name = "textattr", version, about = "Perturbation attribution for black-box text generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Attribute a model output to units of its input.
    Explain(ExplainArgs),
    /// Perturbation curves, AUPC and agreement for explanation files.
    Eval(EvalArgs),
    /// Ask the model to rank its own input units.
    SelfExplain(SelfExplainArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `mock:keyword-copy[:MARKER]`, `mock:uniform[:VOCAB]`, `mock:scripted:REPLY` or a base URL.
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    tier: Option<Tier>,
    /// `logprob`, `sim` or `remote:<bert|bart|summ|log_nli>`.
    #[arg(long)]
    scalarizer: Option<ScalarizerSpec>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct InputArgs {
    /// Document: plain text, or JSON when the name ends in `.json`.
    #[arg(long)]
    input: PathBuf,
    /// Dependency parse of the document text.
    #[arg(long)]
    parse: Option<PathBuf>,
}

#[derive(Args)]
struct OutputArgs {
    /// Result JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    html: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
    /// `loo`, `clime` or `lshap`.
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    preset: Option<Preset>,
    /// Comma-separated, coarse to fine, e.g. `sentence,phrase`.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<Level>>,
    #[arg(long)]
    budget_ratio: Option<f64>,
    #[arg(long)]
    max_simultaneous: Option<usize>,
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    max_neighbors_perturbed: Option<usize>,
    #[arg(long)]
    refine_top_k: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    refine_threshold: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    /// Explanation files written by `explain` or `self-explain`.
    #[arg(required = true)]
    explanations: Vec<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    cutoff: Option<f64>,
    /// Random-ranking curves per explanation.
    #[arg(long)]
    random_baselines: Option<usize>,
}

#[derive(Args)]
struct SelfExplainArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    output: OutputArgs,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<Level>>,
    #[arg(long)]
    top_k: Option<usize>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

fn base_config(m: &ModelArgs) -> Result<RunConfig> {
    let mut cfg = match &m.config {
        Some(p) => RunConfig::from_json(&read(p)?)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &m.endpoint {
        cfg.endpoint = v.clone();
    }
    if let Some(v) = &m.model {
        cfg.model = v.clone();
    }
    if m.tier.is_some() {
        cfg.tier = m.tier;
    }
    if let Some(v) = m.scalarizer {
        cfg.scalarizer = v;
    }
    if let Some(v) = m.seed {
        cfg.seed = v;
    }
    if let Some(v) = m.workers {
        cfg.workers = v;
    }
    Ok(cfg)
}

fn load_input(a: &InputArgs) -> Result<(DocumentInput, Option<ParseDocument>)> {
    let text = read(&a.input)?;
    let doc = if a.input.extension().is_some_and(|e| e == "json") {
        DocumentInput::from_json(&text)?
    } else {
        DocumentInput::plain(text)
    };
    let parse = match &a.parse {
        Some(p) => Some(ParseDocument::from_json(&read(p)?)?),
        None => None,
    };
    Ok((doc, parse))
}

fn emit(out: &OutputArgs, json: &str) -> Result<()> {
    match &out.out {
        Some(p) => write(p, json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

fn finish_explanation(out: &OutputArgs, exp: &ExplanationOutput) -> Result<()> {
    emit(out, &exp.to_json()?)?;
    if let Some(p) = &out.html {
        write(p, &explanation_html(exp))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Explain(a) => {
            let mut cfg = base_config(&a.model)?;
            if let Some(v) = a.algorithm {
                cfg.algorithm = v;
            }
            if a.preset.is_some() {
                cfg.preset = a.preset;
            }
            if a.levels.is_some() {
                cfg.levels = a.levels;
            }
            macro_rules! set {
                ($($f:ident),*) => { $(if a.$f.is_some() { cfg.$f = a.$f; })* };
            }
            set!(
                budget_ratio,
                max_simultaneous,
                radius,
                max_neighbors_perturbed,
                refine_top_k,
                refine_threshold
            );
            let (doc, parse) = load_input(&a.input)?;
            let env = Environment::from_process(&cfg);
            let exp = explain(&cfg, &env, &doc, parse.as_ref())?;
            finish_explanation(&a.output, &exp)
        }
        Command::SelfExplain(a) => {
            let mut cfg = base_config(&a.model)?;
            if a.levels.is_some() {
                cfg.levels = a.levels;
            }
            if a.top_k.is_some() {
                cfg.top_k = a.top_k;
            }
            let (doc, parse) = load_input(&a.input)?;
            let env = Environment::from_process(&cfg);
            let exp = self_explain_run(&cfg, &env, &doc, parse.as_ref())?;
            if let Some(se) = &exp.self_explanation {
                if se.ranking.ranked_unit_ids.is_empty() {
                    eprintln!("warning: no unit numbers could be parsed from the model reply");
                }
            }
            finish_explanation(&a.output, &exp)
        }
        Command::Eval(a) => {
            let mut cfg = base_config(&a.model)?;
            if let Some(v) = a.cutoff {
                cfg.cutoff = v;
            }
            if let Some(v) = a.random_baselines {
                cfg.random_baselines = v;
            }
            let mut inputs = Vec::new();
            for p in &a.explanations {
                inputs.push((p.display().to_string(), ExplanationOutput::from_json(&read(p)?)?));
            }
            let env = Environment::from_process(&cfg);
            let report = evaluate(&cfg, &env, &inputs)?;
            emit(&a.output, &report.to_json()?)?;
            if let Some(p) = &a.csv {
                write(p, &report.aupc_csv())?;
            }
            if let Some(p) = &a.output.html {
                write(p, &eval_html(&report))?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
