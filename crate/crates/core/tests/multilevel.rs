use std::sync::Arc;

use textattr::attribution::{AttributorConfig, Budget, CLimeConfig};
use textattr::gateway::mock::KeywordCopyModel;
use textattr::gateway::{Gateway, GatewayConfig};
use textattr::multilevel::{run_multilevel, LevelStep, Preset, RefineConfig, RefineCount};
use textattr::scalarize::LogProbScalarizer;
use textattr::segment::{DocumentInput, PhraseConfig, UnitTree};
use textattr::tokenize::WhitespaceTokenizer;
use textattr::Level;

const DOC: &str = "The weather was mild. The KEY fact is here. Birds sang loudly. Nothing else happened.";

fn setup(doc: &str) -> (UnitTree, LogProbScalarizer) {
    let gw = Arc::new(Gateway::new(
        Arc::new(KeywordCopyModel::new("KEY").with_logprobs()),
        GatewayConfig::default(),
    ));
    let tree = UnitTree::build(&DocumentInput::plain(doc), None, &PhraseConfig::default(), &WhitespaceTokenizer).unwrap();
    let set = tree.unit_set(Level::Sentence).unwrap();
    let target = gw.target_output(&set).unwrap();
    (tree, LogProbScalarizer::new(gw, target).unwrap())
}

fn schedule(levels: &[Level], attributor: AttributorConfig, k: usize) -> RefineConfig {
    RefineConfig {
        schedule: levels
            .iter()
            .map(|&level| LevelStep {
                level,
                attributor: attributor.clone(),
            })
            .collect(),
        max_refine: RefineCount::Fixed(k),
        threshold: -1.0,
    }
}

#[test]
fn marked_sentence_is_the_one_refined() {
    let (tree, scal) = setup(DOC);
    let out = run_multilevel(&tree, &scal, &schedule(&[Level::Sentence, Level::Word], AttributorConfig::Loo, 1)).unwrap();
    assert_eq!(out.passes.len(), 2);
    let sentence_ids = &out.passes[0].result.unit_ids;
    assert_eq!(out.passes[0].refined, vec![sentence_ids[1]]);
    let levels: Vec<Level> = out.result.levels.clone();
    assert_eq!(levels.iter().filter(|l| **l == Level::Sentence).count(), 3);
    let text = tree.document();
    let words: Vec<&str> = out
        .unit_set
        .interest_units()
        .filter(|u| u.level == Level::Word)
        .map(|u| text.slice(u.span))
        .collect();
    assert_eq!(words, vec!["The", "KEY", "fact", "is", "here"]);
    // Mixed units are disjoint and cover the same characters as the sentences.
    let mut covered: Vec<_> = out.unit_set.interest_units().map(|u| u.span).collect();
    covered.sort();
    for w in covered.windows(2) {
        assert!(w[0].end <= w[1].start);
    }
    assert_eq!(out.result.model_calls, out.passes.iter().map(|p| p.result.model_calls).sum::<u64>());
}

#[test]
fn single_level_schedule_equals_plain_attribution() {
    let (tree, scal) = setup(DOC);
    let out = run_multilevel(&tree, &scal, &schedule(&[Level::Sentence], AttributorConfig::Loo, 1)).unwrap();
    let plain = textattr::attribution::loo(&tree.unit_set(Level::Sentence).unwrap(), &scal).unwrap();
    assert_eq!(out.result.scores, plain.scores);
    assert_eq!(out.result.unit_ids, plain.unit_ids);
}

#[test]
fn cost_stays_within_per_level_bounds() {
    let (tree, scal) = setup(DOC);
    let clime = AttributorConfig::Clime(CLimeConfig {
        budget: Budget::Ratio(10.0),
        max_simultaneous: 3,
        include_intercept: true,
        seed: 5,
    });
    let out = run_multilevel(&tree, &scal, &schedule(&[Level::Sentence, Level::Word], clime.clone(), 2)).unwrap();
    let mut bound = 0;
    for p in &out.passes {
        bound += clime.budget_bound(p.result.len());
    }
    assert!(out.result.model_calls as usize <= bound);
}

#[test]
fn nothing_selected_stops_early() {
    let tree = UnitTree::build(
        &DocumentInput::plain("First plain. Second plain. Third plain."),
        None,
        &PhraseConfig::default(),
        &WhitespaceTokenizer,
    )
    .unwrap();
    let flat = textattr::scalarize::FnScalarizer::new("const", |_| 1.0);
    let mut cfg = schedule(&[Level::Sentence, Level::Word], AttributorConfig::Loo, 2);
    cfg.threshold = 0.5;
    let out = run_multilevel(&tree, &flat, &cfg).unwrap();
    assert_eq!(out.passes.len(), 1);
    assert!(out.passes[0].refined.is_empty());
    assert!(out.result.levels.iter().all(|l| *l == Level::Sentence));
}

#[test]
fn presets_bind_the_parameter_table() {
    let small = Preset::SmallModelSummarization.config("clime", 0).unwrap();
    assert_eq!(small.max_refine, RefineCount::Fixed(3));
    assert!((small.threshold - 1.0 / 3.0).abs() < 1e-15);
    match &small.schedule[1].attributor {
        AttributorConfig::Clime(c) => {
            assert_eq!(c.budget, Budget::Ratio(10.0));
            assert_eq!(c.max_simultaneous, 3);
        }
        other => panic!("{other:?}"),
    }
    let qa = Preset::Qa.config("lshap", 0).unwrap();
    assert_eq!(qa.max_refine, RefineCount::Fixed(1));
    assert_eq!(qa.threshold, -1.0);
    assert_eq!(qa.schedule[1].level, Level::Word);
}
