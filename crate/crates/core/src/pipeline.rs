//! End-to-end experiment runner. Each stage is also exposed on its own for
//! the command line.

use std::path::Path;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::lin::{train_lin, LinLayer};
use crate::seed;
use crate::synthlang::{gen_corpus, Corpus, SplitCorpora};
use crate::transducer::{train_base, TrainingLog};

pub fn generate_data(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<SplitCorpora> {
    cfg.validate()?;
    let suite = cfg.build_suite()?;
    let n = cfg.suite.languages.len();
    gen_corpus(
        &suite,
        &vec![cfg.suite.train_per_language; n],
        &vec![cfg.suite.test_per_language; n],
        out_dir,
    )
}

fn check_corpus(cfg: &ExperimentConfig, corpus: &Corpus) -> Result<()> {
    if corpus.dim != cfg.suite.dim {
        return Err(Error::DimensionMismatch {
            what: "corpus feature dim",
            expected: cfg.suite.dim,
            actual: corpus.dim,
        });
    }
    if corpus.vocab != cfg.suite.vocab {
        return Err(Error::DimensionMismatch {
            what: "corpus vocabulary",
            expected: cfg.suite.vocab,
            actual: corpus.vocab,
        });
    }
    Ok(())
}

/// Trains the base model and returns it as a checkpoint, which is the form
/// every later stage consumes.
pub fn train_base_checkpoint(cfg: &ExperimentConfig, train: &Corpus) -> Result<(Checkpoint, TrainingLog)> {
    check_corpus(cfg, train)?;
    let out = train_base(
        cfg.model_config(),
        &train.utterances,
        &cfg.train,
        &cfg.filter,
        seed::derive(cfg.seed, "base", 0),
    )?;
    let ck = Checkpoint::from_model(&out.model, cfg.seed, out.log.steps);
    Ok((ck, out.log))
}

/// Trains the LIN for `language` on that language's share of `train`.
pub fn train_language_lin(
    cfg: &ExperimentConfig,
    base: &Checkpoint,
    train: &Corpus,
    language: &str,
) -> Result<(LinLayer, TrainingLog)> {
    check_corpus(cfg, train)?;
    let subset = train.subset(language);
    if subset.utterances.is_empty() {
        return Err(Error::Config(format!(
            "no training utterances for language `{language}`"
        )));
    }
    let lin_seed = seed::derive(cfg.seed, &format!("lin:{language}"), 0);
    let out = train_lin(base, &subset.utterances, &cfg.lin.train, lin_seed)?;
    Ok((out.lin, out.log))
}

pub fn lin_artifact(
    cfg: &ExperimentConfig,
    base: &Checkpoint,
    lin: &LinLayer,
    log: &TrainingLog,
) -> Result<Checkpoint> {
    Ok(lin.to_checkpoint(&base.param_hash()?, cfg.seed, log.steps))
}

/// Evaluates `base` (optionally behind `lin`) on `test`; the model id is the
/// base checkpoint's parameter hash.
pub fn evaluate_checkpoint(
    base: &Checkpoint,
    lin: Option<&LinLayer>,
    test: &Corpus,
    scenarios: &[String],
) -> Result<EvalReport> {
    let model = base.model()?;
    evaluate(&model, lin, test, scenarios, &base.param_hash()?)
}

#[derive(Clone, Debug)]
pub struct LinOutcome {
    pub language: String,
    pub lin: LinLayer,
    pub log: TrainingLog,
    pub report: EvalReport,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub data: SplitCorpora,
    pub base: Checkpoint,
    pub base_log: TrainingLog,
    pub base_report: EvalReport,
    pub lins: Vec<LinOutcome>,
}

/// Runs every stage in memory for the languages in `cfg.lin.designated`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let data = generate_data(cfg, None)?;
    let (base, base_log) = train_base_checkpoint(cfg, &data.train)?;
    let base_report = evaluate_checkpoint(&base, None, &data.test, &cfg.traffic)?;
    let lins = cfg
        .lin
        .designated
        .iter()
        .map(|language| {
            let (lin, log) = train_language_lin(cfg, &base, &data.train, language)?;
            let report = evaluate_checkpoint(&base, Some(&lin), &data.test, &cfg.traffic)?;
            Ok(LinOutcome {
                language: language.clone(),
                lin,
                log,
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutcome {
        data,
        base,
        base_log,
        base_report,
        lins,
    })
}
