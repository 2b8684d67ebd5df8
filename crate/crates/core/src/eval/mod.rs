//! Evaluation: per-language corpus BLEU and the averages built on top of it,
//! collected into a JSON report.

mod bleu;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bleu::{corpus_bleu, BleuStats, MAX_ORDER};

use crate::error::{Error, Result};
use crate::lin::{apply_lin, LinLayer, IDENTITY};
use crate::synthlang::Corpus;
use crate::transducer::{greedy_decode, TransducerModel};

const SUM_TOLERANCE: f64 = 1e-9;

/// Share of input traffic per language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TrafficDistribution {
    weights: BTreeMap<String, f64>,
}

impl TrafficDistribution {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Traffic("no languages".into()));
        }
        if let Some((l, w)) = weights.iter().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Traffic(format!("weight {w} for `{l}` is not a probability")));
        }
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Traffic(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn weight(&self, language: &str) -> f64 {
        self.weights.get(language).copied().unwrap_or(0.0)
    }
}

/// `dominant` gets `share`; the remaining `1 − share` is split evenly.
pub fn make_traffic(dominant: &str, share: f64, languages: &[String]) -> Result<TrafficDistribution> {
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::Traffic(format!("share {share} outside [0, 1]")));
    }
    if !languages.iter().any(|l| l == dominant) {
        return Err(Error::Traffic(format!("`{dominant}` is not in the suite")));
    }
    let n = languages.len();
    if n == 1 && share < 1.0 {
        return Err(Error::Traffic("single-language suite needs share = 1".into()));
    }
    let rest = if n > 1 { (1.0 - share) / (n - 1) as f64 } else { 0.0 };
    let weights = languages
        .iter()
        .map(|l| (l.clone(), if l == dominant { share } else { rest }))
        .collect();
    TrafficDistribution::new(weights)
}

pub fn uniform_traffic(languages: &[String]) -> Result<TrafficDistribution> {
    if languages.is_empty() {
        return Err(Error::Traffic("no languages".into()));
    }
    let w = 1.0 / languages.len() as f64;
    TrafficDistribution::new(languages.iter().map(|l| (l.clone(), w)).collect())
}

/// Resolves a scenario: `uniform`, `p<percent>-<language>` such as `p99-L2`
/// (99% of traffic from `L2`, the rest split evenly), or explicit weights
/// such as `L1=0.7,L2=0.3` covering every language.
pub fn parse_traffic(name: &str, languages: &[String]) -> Result<TrafficDistribution> {
    if name == "uniform" {
        return uniform_traffic(languages);
    }
    if name.contains('=') {
        return parse_explicit(name, languages);
    }
    let bad = || {
        Error::Traffic(format!(
            "cannot parse scenario `{name}` (expected `uniform`, `p<percent>-<language>` or `L1=w1,L2=w2,...`)"
        ))
    };
    let rest = name.strip_prefix('p').ok_or_else(bad)?;
    let (pct, lang) = rest.split_once('-').ok_or_else(bad)?;
    let pct: f64 = pct.parse().map_err(|_| bad())?;
    make_traffic(lang, pct / 100.0, languages)
}

fn parse_explicit(spec: &str, languages: &[String]) -> Result<TrafficDistribution> {
    let mut weights = BTreeMap::new();
    for part in spec.split(',') {
        let (lang, w) = part
            .split_once('=')
            .ok_or_else(|| Error::Traffic(format!("`{part}` is not `<language>=<weight>`")))?;
        let lang = lang.trim();
        if !languages.iter().any(|l| l == lang) {
            return Err(Error::Traffic(format!("`{lang}` is not in the suite")));
        }
        let w: f64 = w
            .trim()
            .parse()
            .map_err(|_| Error::Traffic(format!("bad weight `{w}` for `{lang}`")))?;
        if weights.insert(lang.to_string(), w).is_some() {
            return Err(Error::Traffic(format!("`{lang}` listed twice")));
        }
    }
    for l in languages {
        weights.entry(l.clone()).or_insert(0.0);
    }
    TrafficDistribution::new(weights)
}

pub fn simple_average(per_language: &BTreeMap<String, f64>) -> Result<f64> {
    if per_language.is_empty() {
        return Err(Error::InvalidArgument("cannot average zero languages".into()));
    }
    Ok(per_language.values().sum::<f64>() / per_language.len() as f64)
}

/// `Σ_l w_l · BLEU_l`.
pub fn weighted_average(per_language: &BTreeMap<String, f64>, traffic: &TrafficDistribution) -> Result<f64> {
    let total: f64 = traffic.weights.values().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::Traffic(format!("weights sum to {total}, not 1")));
    }
    let mut acc = 0.0;
    for (lang, w) in &traffic.weights {
        let score = per_language
            .get(lang)
            .ok_or_else(|| Error::Traffic(format!("no score for `{lang}`")))?;
        acc += w * score;
    }
    Ok(acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedScore {
    pub name: String,
    pub weights: TrafficDistribution,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_language: BTreeMap<String, f64>,
    pub average: f64,
    pub weighted: Vec<WeightedScore>,
    pub model_id: String,
    pub lin_id: String,
    pub corpus_hash: String,
}

impl EvalReport {
    pub fn from_scores(
        per_language: BTreeMap<String, f64>,
        scenarios: &[String],
        model_id: String,
        lin_id: String,
        corpus_hash: String,
    ) -> Result<Self> {
        let languages: Vec<String> = per_language.keys().cloned().collect();
        let average = simple_average(&per_language)?;
        let weighted = scenarios
            .iter()
            .map(|name| {
                let weights = parse_traffic(name, &languages)?;
                let value = weighted_average(&per_language, &weights)?;
                Ok(WeightedScore {
                    name: name.clone(),
                    weights,
                    value,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            per_language,
            average,
            weighted,
            model_id,
            lin_id,
            corpus_hash,
        })
    }

    /// Checks that the stored averages recompute from the per-language scores.
    pub fn validate(&self) -> Result<()> {
        let avg = simple_average(&self.per_language)?;
        if (avg - self.average).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "report average {} does not match recomputed {avg}",
                self.average
            )));
        }
        for w in &self.weighted {
            let v = weighted_average(&self.per_language, &w.weights)?;
            if (v - w.value).abs() > SUM_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "weighted row `{}` = {} does not match recomputed {v}",
                    w.name, w.value
                )));
            }
        }
        if let Some((l, s)) = self.per_language.iter().find(|(_, s)| !(0.0..=100.0).contains(*s)) {
            return Err(Error::InvalidArgument(format!("BLEU for `{l}` is {s}")));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Decodes every test utterance (through `lin` when given) and scores each
/// language. Decoding runs in parallel; results are merged by utterance index.
pub fn evaluate(
    model: &TransducerModel,
    lin: Option<&LinLayer>,
    test: &Corpus,
    scenarios: &[String],
    model_id: &str,
) -> Result<EvalReport> {
    if test.utterances.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let cfg = model.config();
    if test.dim != cfg.feature_dim {
        return Err(Error::DimensionMismatch {
            what: "test corpus feature dim",
            expected: cfg.feature_dim,
            actual: test.dim,
        });
    }
    if let Some(l) = lin {
        if l.dim() != cfg.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "LIN dim",
                expected: cfg.feature_dim,
                actual: l.dim(),
            });
        }
    }
    let hyps = test
        .utterances
        .par_iter()
        .map(|u| {
            let feats = match lin {
                Some(l) => apply_lin(l, &u.features)?,
                None => u.features.clone(),
            };
            greedy_decode(model, &feats, cfg.max_symbols_per_frame)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut stats: BTreeMap<String, BleuStats> = BTreeMap::new();
    for (u, h) in test.utterances.iter().zip(&hyps) {
        stats
            .entry(u.language().to_string())
            .or_default()
            .add_pair(h.as_slice(), u.tokens.as_slice());
    }
    let per_language = stats.into_iter().map(|(l, s)| (l, s.score())).collect();
    let lin_id = lin.map_or_else(|| IDENTITY.to_string(), LinLayer::label);
    EvalReport::from_scores(per_language, scenarios, model_id.to_string(), lin_id, test.digest()?)
}

fn column_title(r: &EvalReport) -> String {
    if r.lin_id == IDENTITY {
        "base".to_string()
    } else {
        format!("LIN-{}", r.lin_id.split(':').next().unwrap_or(&r.lin_id))
    }
}

/// Side-by-side table: one row per language, then `Avg.` and one row per
/// traffic scenario. Values are rounded to 0.1 for display only.
pub fn render_table(reports: &[EvalReport]) -> Result<String> {
    for r in reports {
        r.validate()?;
    }
    let mut languages: Vec<&String> = Vec::new();
    let mut scenarios: Vec<&String> = Vec::new();
    for r in reports {
        for l in r.per_language.keys() {
            if !languages.contains(&l) {
                languages.push(l);
            }
        }
        for w in &r.weighted {
            if !scenarios.contains(&&w.name) {
                scenarios.push(&w.name);
            }
        }
    }
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.1}"));
    let mut rows: Vec<(String, Vec<String>)> = Vec::new();
    for l in &languages {
        rows.push((
            (*l).clone(),
            reports.iter().map(|r| cell(r.per_language.get(*l).copied())).collect(),
        ));
    }
    rows.push(("Avg.".into(), reports.iter().map(|r| cell(Some(r.average))).collect()));
    for s in &scenarios {
        rows.push((
            format!("Weighted Avg. {s}"),
            reports
                .iter()
                .map(|r| cell(r.weighted.iter().find(|w| &w.name == *s).map(|w| w.value)))
                .collect(),
        ));
    }

    let titles: Vec<String> = reports.iter().map(column_title).collect();
    let first = rows
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max("language".len());
    let widths: Vec<usize> = titles.iter().map(|t| t.len().max(6)).collect();
    let mut out = String::new();
    let _ = write!(out, "{:<first$}", "language");
    for (t, w) in titles.iter().zip(&widths) {
        let _ = write!(out, "  {t:>w$}");
    }
    out.push('\n');
    let rule = first + widths.iter().map(|w| w + 2).sum::<usize>();
    out.push_str(&"-".repeat(rule));
    out.push('\n');
    for (i, (name, cells)) in rows.iter().enumerate() {
        if i == languages.len() {
            out.push_str(&"-".repeat(rule));
            out.push('\n');
        }
        let _ = write!(out, "{name:<first$}");
        for (c, w) in cells.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
    }
    Ok(out)
}
