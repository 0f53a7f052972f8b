//! End-to-end runs behind the CLI subcommands and the C API.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Environment, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{
    aupc, average_curves, cosine_agreement, default_grid, perturbation_curve, random_ranking, spearman, AggregateCurve,
    PerturbationCurve,
};
use crate::gateway::{CallLedger, Gateway, Tier};
use crate::multilevel::{run_multilevel, PassRecord};
use crate::scalarize::{build_scalarizer, ScalarizerResources};
use crate::scores::AttributionResult;
use crate::segment::{DocumentInput, ParseDocument, UnitTree};
use crate::self_explain::{self_explain, RankingExplanation};
use crate::tokenize::WhitespaceTokenizer;
use crate::unit::{Document, Level, Span, Unit, UnitSet};

pub const EXPLANATION_SCHEMA: &str = "textattr.explanation.v1";

/// A unit with its text, as written to result files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub id: usize,
    pub span: Span,
    pub level: Level,
    pub of_interest: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    pub token_count: usize,
    pub text: String,
}

/// Prompt and parsed reply of a self-explanation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfExplanationRecord {
    pub prompt: String,
    pub reply: String,
    pub top_k: usize,
    pub ranking: RankingExplanation,
}

/// Result file of `explain` and `self-explain`. Holds everything `eval`
/// needs to rebuild the unit set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationOutput {
    pub schema: String,
    pub model: String,
    pub tier: Tier,
    pub config: RunConfig,
    /// Full model input.
    pub document: String,
    pub protected_spans: Vec<Span>,
    /// Final unit list, of interest or not.
    pub units: Vec<UnitRecord>,
    pub result: AttributionResult,
    pub passes: Vec<PassRecord>,
    /// Gateway counters for the whole run, target generation included.
    pub ledger: CallLedger,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub self_explanation: Option<SelfExplanationRecord>,
}

impl ExplanationOutput {
    fn new(cfg: &RunConfig, gw: &Gateway, set: &UnitSet, result: AttributionResult, passes: Vec<PassRecord>) -> Self {
        ExplanationOutput {
            schema: EXPLANATION_SCHEMA.into(),
            model: gw.model_name(),
            tier: gw.tier(),
            config: cfg.echo(),
            document: set.text().to_string(),
            protected_spans: set.protected().to_vec(),
            units: set
                .units()
                .iter()
                .map(|u| UnitRecord {
                    id: u.id,
                    span: u.span,
                    level: u.level,
                    of_interest: u.of_interest,
                    parent: u.parent,
                    token_count: u.token_count,
                    text: set.unit_text(u).to_string(),
                })
                .collect(),
            result,
            passes,
            ledger: gw.ledger(),
            self_explanation: None,
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let out: ExplanationOutput =
            serde_json::from_str(json).map_err(|e| Error::input("evaluator", format!("explanation file: {e}")))?;
        if out.schema != EXPLANATION_SCHEMA {
            return Err(Error::input("evaluator", format!("unknown explanation schema {:?}", out.schema)));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn unit_set(&self) -> Result<UnitSet> {
        let doc = Arc::new(Document::new(self.document.as_str()));
        let units = self
            .units
            .iter()
            .map(|u| Unit {
                id: u.id,
                span: u.span,
                level: u.level,
                of_interest: u.of_interest,
                parent: u.parent,
                token_count: u.token_count,
            })
            .collect();
        let set = UnitSet::new(doc, units, self.protected_spans.clone())?;
        for u in set.units() {
            if let Some(r) = self.units.iter().find(|r| r.id == u.id) {
                if set.unit_text(u) != r.text {
                    return Err(Error::input("evaluator", format!("unit {} text does not match its span", u.id)));
                }
            }
        }
        Ok(set)
    }

    /// Label used to group results in reports.
    pub fn method(&self) -> String {
        format!("{}/{}", self.result.algorithm, self.result.scalarizer)
    }

    pub fn document_id(&self) -> String {
        document_id(&self.document)
    }
}

fn document_id(text: &str) -> String {
    hex::encode(&Sha256::digest(text.as_bytes())[..8])
}

/// Builds the unit tree and checks every scheduled level is available.
pub fn build_tree(cfg: &RunConfig, input: &DocumentInput, parse: Option<&ParseDocument>) -> Result<UnitTree> {
    let tree = UnitTree::build(input, parse, &cfg.phrase, &WhitespaceTokenizer)?;
    for step in cfg.refine_config()?.schedule {
        tree.unit_set(step.level)?;
    }
    Ok(tree)
}

fn check_tier(cfg: &RunConfig, gw: &Gateway) -> Result<()> {
    if cfg.scalarizer.required_tier() == Tier::Logprob && gw.tier() != Tier::Logprob {
        return Err(Error::UnsupportedTier("logprob"));
    }
    Ok(())
}

/// Runs the configured multilevel attribution.
pub fn explain(
    cfg: &RunConfig,
    env: &Environment,
    input: &DocumentInput,
    parse: Option<&ParseDocument>,
) -> Result<ExplanationOutput> {
    let tree = build_tree(cfg, input, parse)?;
    let gw = cfg.gateway(env)?;
    explain_tree(cfg, gw, &cfg.resources(env)?, &tree)
}

/// As [`explain`] with a caller-supplied gateway.
pub fn explain_tree(
    cfg: &RunConfig,
    gw: Arc<Gateway>,
    resources: &ScalarizerResources,
    tree: &UnitTree,
) -> Result<ExplanationOutput> {
    let rc = cfg.refine_config()?;
    check_tier(cfg, &gw)?;
    let first = tree.unit_set(rc.schedule[0].level)?;
    let target = gw.target_output(&first)?;
    let scal = build_scalarizer(cfg.scalarizer, gw.clone(), &target, resources)?;
    let ml = run_multilevel(tree, scal.as_ref(), &rc)?;
    let mut result = ml.result;
    result.target_output = target;
    Ok(ExplanationOutput::new(cfg, &gw, &ml.unit_set, result, ml.passes))
}

/// Asks the model to rank the first scheduled level's units.
pub fn self_explain_run(
    cfg: &RunConfig,
    env: &Environment,
    input: &DocumentInput,
    parse: Option<&ParseDocument>,
) -> Result<ExplanationOutput> {
    let tree = build_tree(cfg, input, parse)?;
    self_explain_tree(cfg, cfg.gateway(env)?, &tree)
}

pub fn self_explain_tree(cfg: &RunConfig, gw: Arc<Gateway>, tree: &UnitTree) -> Result<ExplanationOutput> {
    let level = cfg.refine_config()?.schedule[0].level;
    let set = tree.unit_set(level)?;
    let summary = gw.target_output(&set)?;
    let se = self_explain(&gw, &set, &summary, cfg.top_k)?;
    let pass = PassRecord {
        level,
        result: se.result.clone(),
        refined: Vec::new(),
    };
    let mut out = ExplanationOutput::new(cfg, &gw, &set, se.result, vec![pass]);
    out.self_explanation = Some(SelfExplanationRecord {
        prompt: se.prompt,
        reply: se.reply,
        top_k: se.top_k,
        ranking: se.ranking,
    });
    Ok(out)
}

/// One curve in an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub source: String,
    pub document_id: String,
    pub method: String,
    pub aupc: f64,
    pub curve: PerturbationCurve,
}

/// Per-method aggregate over examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub n_examples: usize,
    pub aupc_mean: f64,
    pub aupc_stderr: f64,
    pub curve: AggregateCurve,
}

/// Pairwise agreement between methods, averaged over shared documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub methods: Vec<String>,
    /// `None` where no document gave a defined correlation.
    pub spearman: Vec<Vec<Option<f64>>>,
    /// Documents that entered each Spearman entry.
    pub spearman_documents: Vec<Vec<usize>>,
    pub cosine: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cutoff: f64,
    pub scalarizer: String,
    pub examples: Vec<ExampleRecord>,
    pub methods: Vec<MethodSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agreement: Option<AgreementMatrix>,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// `method,n_examples,aupc_mean,aupc_stderr` rows.
    pub fn aupc_csv(&self) -> String {
        let mut s = String::from("method,n_examples,aupc_mean,aupc_stderr\n");
        for m in &self.methods {
            s.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(&m.method),
                m.n_examples,
                m.aupc_mean,
                m.aupc_stderr
            ));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

const GRID_STEPS: usize = 20;

/// Perturbation curves for each labelled explanation, plus random baselines
/// and agreement matrices when more than one method is present.
pub fn evaluate(cfg: &RunConfig, env: &Environment, inputs: &[(String, ExplanationOutput)]) -> Result<EvalReport> {
    let gw = cfg.gateway(env)?;
    evaluate_with(cfg, gw, &cfg.resources(env)?, inputs)
}

pub fn evaluate_with(
    cfg: &RunConfig,
    gw: Arc<Gateway>,
    resources: &ScalarizerResources,
    inputs: &[(String, ExplanationOutput)],
) -> Result<EvalReport> {
    if inputs.is_empty() {
        return Err(Error::input("evaluator", "no explanation files given"));
    }
    if !(cfg.cutoff > 0.0 && cfg.cutoff <= 1.0) {
        return Err(Error::Config(format!("cutoff {} is outside (0, 1]", cfg.cutoff)));
    }
    check_tier(cfg, &gw)?;
    let agreement = agreement(inputs)?;

    let mut examples = Vec::new();
    let mut baseline_done: Vec<(String, Vec<usize>)> = Vec::new();
    for (label, exp) in inputs {
        let set = exp.unit_set()?;
        let scal = build_scalarizer(cfg.scalarizer, gw.clone(), &exp.result.target_output, resources)?;
        let curve = perturbation_curve(&exp.result, &set, scal.as_ref(), cfg.cutoff)?;
        examples.push(ExampleRecord {
            source: label.clone(),
            document_id: exp.document_id(),
            method: exp.method(),
            aupc: aupc(&curve, cfg.cutoff),
            curve,
        });
        let key = (exp.document_id(), exp.result.unit_ids.clone());
        if cfg.random_baselines > 0 && !baseline_done.contains(&key) {
            for i in 0..cfg.random_baselines {
                let seed = cfg.seed.wrapping_add(i as u64);
                let rand = random_ranking(&set, seed)?;
                let curve = perturbation_curve(&rand, &set, scal.as_ref(), cfg.cutoff)?;
                examples.push(ExampleRecord {
                    source: format!("{label}#random{i}"),
                    document_id: key.0.clone(),
                    method: "random".into(),
                    aupc: aupc(&curve, cfg.cutoff),
                    curve,
                });
            }
            baseline_done.push(key);
        }
    }

    let grid = default_grid(cfg.cutoff, GRID_STEPS);
    let mut by_method: BTreeMap<&str, Vec<&ExampleRecord>> = BTreeMap::new();
    for e in &examples {
        by_method.entry(&e.method).or_default().push(e);
    }
    let mut methods = Vec::new();
    for (method, recs) in by_method {
        let curves: Vec<PerturbationCurve> = recs.iter().map(|r| r.curve.clone()).collect();
        let vals: Vec<f64> = recs.iter().map(|r| r.aupc).collect();
        let (mean, se) = mean_stderr(&vals);
        methods.push(MethodSummary {
            method: method.to_string(),
            n_examples: recs.len(),
            aupc_mean: mean,
            aupc_stderr: se,
            curve: average_curves(&curves, &grid)?,
        });
    }
    Ok(EvalReport {
        cutoff: cfg.cutoff,
        scalarizer: cfg.scalarizer.to_string(),
        examples,
        methods,
        agreement,
    })
}

/// Mean and standard error of the mean (sample deviation over `sqrt(n)`).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn agreement(inputs: &[(String, ExplanationOutput)]) -> Result<Option<AgreementMatrix>> {
    let methods: Vec<String> = {
        let mut m: Vec<String> = inputs.iter().map(|(_, e)| e.method()).collect();
        m.sort();
        m.dedup();
        m
    };
    if methods.len() < 2 {
        return Ok(None);
    }
    // First explanation per (document, method).
    let mut docs: BTreeMap<String, BTreeMap<usize, &(String, ExplanationOutput)>> = BTreeMap::new();
    for item in inputs {
        let mi = methods.binary_search(&item.1.method()).unwrap();
        docs.entry(item.1.document_id()).or_default().entry(mi).or_insert(item);
    }
    let n = methods.len();
    let mut misaligned = Vec::new();
    let mut sp = vec![vec![None; n]; n];
    let mut sp_docs = vec![vec![0usize; n]; n];
    let mut cos = vec![vec![None; n]; n];
    for i in 0..n {
        sp_docs[i][i] = docs.values().filter(|m| m.contains_key(&i)).count();
        sp[i][i] = Some(1.0);
        cos[i][i] = Some(1.0);
        for j in i + 1..n {
            let mut rhos = Vec::new();
            let mut pairs: Vec<(&[f64], &[f64])> = Vec::new();
            for per_doc in docs.values() {
                let (Some(a), Some(b)) = (per_doc.get(&i), per_doc.get(&j)) else {
                    continue;
                };
                if a.1.result.unit_ids != b.1.result.unit_ids || a.1.result.levels != b.1.result.levels {
                    misaligned.push(format!("{} vs {}", a.0, b.0));
                    continue;
                }
                if let Ok(r) = spearman(&a.1.result.scores, &b.1.result.scores) {
                    rhos.push(r);
                }
                pairs.push((&a.1.result.scores, &b.1.result.scores));
            }
            let rho = (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64);
            let c = cosine_agreement(&pairs)?.mean;
            sp[i][j] = rho;
            sp[j][i] = rho;
            sp_docs[i][j] = rhos.len();
            sp_docs[j][i] = rhos.len();
            cos[i][j] = c;
            cos[j][i] = c;
        }
    }
    if !misaligned.is_empty() {
        return Err(Error::contract(
            "evaluator",
            format!(
                "explanations of the same document over different units: {}",
                misaligned.join(", ")
            ),
        ));
    }
    Ok(Some(AgreementMatrix {
        methods,
        spearman: sp,
        spearman_documents: sp_docs,
        cosine: cos,
    }))
}
