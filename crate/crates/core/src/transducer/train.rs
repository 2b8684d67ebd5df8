//! Mini-batch training with Adam under a Noam schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{utterance_loss_graph, TransducerModel};
use super::types::{ModelConfig, Utterance};
use crate::error::{Error, Result};
use crate::numerics::{Adam, AdamConfig, Graph, NoamSchedule, ParamSet, Var};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    pub warmup: u64,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        NoamSchedule::new(self.peak_lr, self.warmup)?;
        Ok(())
    }
}

/// Utterance filters; `None` disables a bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceFilter {
    pub max_frames: Option<usize>,
    pub min_tokens: Option<usize>,
    pub max_tokens: Option<usize>,
}

impl UtteranceFilter {
    pub fn keep(&self, utt: &Utterance) -> bool {
        let t = utt.features.num_frames();
        let u = utt.tokens.len();
        self.max_frames.is_none_or(|m| t <= m)
            && self.min_tokens.is_none_or(|m| u >= m)
            && self.max_tokens.is_none_or(|m| u <= m)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    /// Mean per-utterance loss of each epoch, measured before each batch's
    /// update.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    /// Corpus indices of the first batch and its mean loss before any update.
    pub first_batch: Vec<usize>,
    pub first_batch_loss: f64,
}

/// Shared loop: shuffles `data` each epoch with a seeded RNG, averages
/// per-utterance gradients over each batch and applies one Adam step.
pub(crate) fn train_loop<F>(
    params: &mut ParamSet,
    data: &[&Utterance],
    cfg: &TrainConfig,
    seed: u64,
    loss_fn: F,
) -> Result<TrainingLog>
where
    F: Fn(&mut Graph, &ParamSet, &Utterance) -> Result<Var>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let schedule = NoamSchedule::new(cfg.peak_lr, cfg.warmup)?;
    let mut adam = Adam::new(cfg.adam);
    let mut log = TrainingLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            params.zero_grad();
            let mut batch_total = 0.0;
            for &i in batch {
                let mut g = Graph::new();
                let loss = loss_fn(&mut g, params, data[i])?;
                let grads = g.backward(loss)?;
                params.accumulate(&grads)?;
                batch_total += g.value(loss).item();
            }
            if log.steps == 0 {
                log.first_batch = batch.to_vec();
                log.first_batch_loss = batch_total / batch.len() as f64;
            }
            params.scale_grads(1.0 / batch.len() as f64);
            log.steps += 1;
            adam.step(params, schedule.lr(log.steps)?)?;
            epoch_total += batch_total;
        }
        log.epoch_losses.push(epoch_total / data.len() as f64);
    }
    params.zero_grad();
    Ok(log)
}

#[derive(Clone, Debug)]
pub struct BaseTraining {
    pub model: TransducerModel,
    pub log: TrainingLog,
}

/// Trains a language-agnostic model on a mixed-language corpus. Language tags
/// are never read.
pub fn train_base(
    config: ModelConfig,
    corpus: &[Utterance],
    train: &TrainConfig,
    filter: &UtteranceFilter,
    seed: u64,
) -> Result<BaseTraining> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for utt in corpus {
        if utt.features.dim() != config.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "feature dim",
                expected: config.feature_dim,
                actual: utt.features.dim(),
            });
        }
        utt.tokens.validate(config.vocab)?;
    }
    let data: Vec<&Utterance> = corpus.iter().filter(|u| filter.keep(u)).collect();
    if data.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let mut model = TransducerModel::init(config, seed::derive(seed, "init", 0))?;
    let log = train_loop(
        model.params_mut(),
        &data,
        train,
        seed::derive(seed, "order", 0),
        |g, params, utt| {
            let x = g.constant(utt.features.frames.clone());
            utterance_loss_graph(g, params, &config, x, utt.tokens.as_slice())
        },
    )?;
    Ok(BaseTraining { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use crate::transducer::types::{FeatureSequence, TokenSequence};

    fn tiny() -> (ModelConfig, Vec<Utterance>) {
        let cfg = ModelConfig {
            feature_dim: 2,
            hidden_dim: 8,
            vocab: 3,
            embed_dim: 4,
            chunk: 2,
            max_symbols_per_frame: 3,
        };
        let utt = Utterance {
            features: FeatureSequence::new("L1", Tensor::from_rows(&[vec![1.0, -0.5], vec![0.2, 0.7]])).unwrap(),
            tokens: TokenSequence(vec![2]),
        };
        (cfg, vec![utt])
    }

    #[test]
    fn overfits_a_single_utterance() {
        let (cfg, corpus) = tiny();
        let tc = TrainConfig {
            epochs: 500,
            batch_size: 1,
            peak_lr: 0.05,
            warmup: 20,
            adam: AdamConfig::default(),
        };
        let out = train_base(cfg, &corpus, &tc, &UtteranceFilter::default(), 7).unwrap();
        let last = *out.log.epoch_losses.last().unwrap();
        assert_eq!(out.log.steps, 500);
        let final_loss = out.model.loss(&corpus[0].features, &corpus[0].tokens).unwrap();
        assert!(final_loss < 0.1, "loss {final_loss} (last epoch {last})");
    }

    #[test]
    fn empty_corpus_rejected() {
        let (cfg, _) = tiny();
        let tc = TrainConfig {
            epochs: 1,
            batch_size: 1,
            peak_lr: 0.01,
            warmup: 1,
            adam: AdamConfig::default(),
        };
        assert!(matches!(
            train_base(cfg, &[], &tc, &UtteranceFilter::default(), 0),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn filters_bound_lengths() {
        let (_, corpus) = tiny();
        let f = UtteranceFilter {
            max_frames: Some(1),
            ..Default::default()
        };
        assert!(!f.keep(&corpus[0]));
        assert!(UtteranceFilter::default().keep(&corpus[0]));
    }
}
