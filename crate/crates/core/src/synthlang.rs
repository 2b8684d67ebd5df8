//! Deterministic synthetic multilingual corpora.
//!
//! Every language shares one codebook of canonical per-token vectors. An
//! utterance of language `l` repeats each token's vector for a few frames,
//! adds Gaussian noise and mixes the result through the language's invertible
//! matrix `M_l`:
//!
//! ```text
//! x = M_l (e(y) + ε),   ε ~ N(0, σ² I)
//! ```
//!
//! With `σ = 0` the canonical vectors are recovered exactly by `M_l⁻¹`, so
//! a linear input transform always has something to learn for each language.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{put_u32, Cursor};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::seed;
use crate::transducer::{FeatureSequence, TokenSequence, Utterance};

pub const MAX_CONDITION: f64 = 20.0;
const CONDITION_RETRIES: usize = 32;
const SCALE_RANGE: (f64, f64) = (0.5, 2.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub id: String,
    /// `D × D` mixing matrix applied to every noisy canonical frame.
    pub mixing: Tensor,
    pub noise: f64,
    /// Inclusive range of frames emitted per token.
    pub frames_per_token: (usize, usize),
    pub seed: u64,
}

/// Shape of the utterances drawn for a suite.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthSpec {
    /// Inclusive range of tokens per utterance.
    pub tokens: (usize, usize),
    /// Inclusive range of frames per token.
    pub frames_per_token: (usize, usize),
}

/// Haar-random `n × n` rotation (orthogonal, determinant +1).
fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    q
}

/// Ratio of largest to smallest singular value.
pub fn condition_number(m: &Tensor) -> f64 {
    let dm = DMatrix::from_row_slice(m.rows(), m.cols(), m.data());
    let sv = dm.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn to_tensor(m: &DMatrix<f64>) -> Tensor {
    let mut t = Tensor::zeros(m.nrows(), m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            t.set(r, c, m[(r, c)]);
        }
    }
    t
}

/// Builds a language whose mixing matrix is a random rotation times a
/// diagonal scaling with entries in `[0.5, 2]`.
pub fn make_language(
    id: &str,
    seed: u64,
    dim: usize,
    noise: f64,
    frames_per_token: (usize, usize),
) -> Result<LanguageSpec> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("language dim must be >= 2, got {dim}")));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {noise}")));
    }
    let (kmin, kmax) = frames_per_token;
    if kmin == 0 || kmin > kmax {
        return Err(Error::InvalidArgument(format!(
            "frames per token range {kmin}..={kmax} is empty or zero"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "mixing", 0));
    for _ in 0..CONDITION_RETRIES {
        let rot = random_rotation(dim, &mut rng);
        let scales: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1))
            .collect();
        let mixing = to_tensor(&(rot * DMatrix::from_diagonal(&scales.into())));
        if condition_number(&mixing) <= MAX_CONDITION {
            return Ok(LanguageSpec {
                id: id.to_string(),
                mixing,
                noise,
                frames_per_token,
                seed,
            });
        }
    }
    Err(Error::ConditionUnreachable {
        id: id.to_string(),
        bound: MAX_CONDITION,
        tries: CONDITION_RETRIES,
    })
}

/// `vocab × dim` canonical token vectors (row `y − 1` for token `y`), with
/// every pair at least 1 apart.
pub fn make_codebook(vocab: usize, dim: usize, seed: u64) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(seed, "codebook", 0));
    for _ in 0..CONDITION_RETRIES {
        let data: Vec<f64> = (0..vocab * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let book = Tensor::from_vec(vocab, dim, data);
        let separated = (0..vocab).all(|i| {
            (i + 1..vocab).all(|j| {
                let d2: f64 = book
                    .row_slice(i)
                    .iter()
                    .zip(book.row_slice(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                d2 >= 1.0
            })
        });
        if separated {
            return Ok(book);
        }
    }
    Err(Error::InvalidArgument(format!(
        "could not draw {vocab} separated codebook vectors in {dim} dims"
    )))
}

/// Features for `tokens` in language `spec`. Values are rounded to `f32` so
/// that the in-memory corpus equals its on-disk form.
pub fn synth_utterance(
    spec: &LanguageSpec,
    codebook: &Tensor,
    tokens: &TokenSequence,
    seed: u64,
) -> Result<FeatureSequence> {
    if tokens.is_empty() {
        return Err(Error::InvalidArgument(
            "cannot synthesize an empty token sequence".into(),
        ));
    }
    tokens.validate(codebook.rows())?;
    let dim = codebook.cols();
    if spec.mixing.shape() != (dim, dim) {
        return Err(Error::DimensionMismatch {
            what: "mixing matrix",
            expected: dim,
            actual: spec.mixing.rows(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, spec.noise.max(0.0)).expect("noise checked non-negative");
    let (kmin, kmax) = spec.frames_per_token;
    let mut data = Vec::new();
    let mut frames = 0;
    let mut canonical = vec![0.0; dim];
    for &y in tokens.as_slice() {
        let k = rng.random_range(kmin..=kmax);
        let e = codebook.row_slice(y as usize - 1);
        for _ in 0..k {
            for (c, &ev) in canonical.iter_mut().zip(e) {
                *c = if spec.noise > 0.0 {
                    ev + normal.sample(&mut rng)
                } else {
                    ev
                };
            }
            for r in 0..dim {
                let v: f64 = spec
                    .mixing
                    .row_slice(r)
                    .iter()
                    .zip(&canonical)
                    .map(|(m, c)| m * c)
                    .sum();
                data.push(v as f32 as f64);
            }
            frames += 1;
        }
    }
    FeatureSequence::new(spec.id.clone(), Tensor::from_vec(frames, dim, data))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn file_name(self) -> &'static str {
        match self {
            Split::Train => "train.sldt",
            Split::Test => "test.sldt",
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub dim: usize,
    pub vocab: usize,
    pub utterances: Vec<Utterance>,
}

/// Everything needed to regenerate a suite's corpora.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub languages: Vec<LanguageSpec>,
    pub codebook: Tensor,
    pub lengths: LengthSpec,
    pub seed: u64,
}

impl Suite {
    /// Languages `ids`, each with its own seed stream under `seed`.
    pub fn new(ids: &[String], dim: usize, vocab: usize, noise: f64, lengths: LengthSpec, seed: u64) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for id in ids {
            if !seen.insert(id) {
                return Err(Error::Config(format!("duplicate language id `{id}`")));
            }
        }
        let (lmin, lmax) = lengths.tokens;
        if lmin == 0 || lmin > lmax {
            return Err(Error::Config(format!("token length range {lmin}..={lmax} invalid")));
        }
        let languages = ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                make_language(
                    id,
                    seed::derive(seed, "language", i as u64),
                    dim,
                    noise,
                    lengths.frames_per_token,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let codebook = make_codebook(vocab, dim, seed)?;
        Ok(Self {
            languages,
            codebook,
            lengths,
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.codebook.cols()
    }

    pub fn vocab(&self) -> usize {
        self.codebook.rows()
    }

    pub fn language_ids(&self) -> Vec<String> {
        self.languages.iter().map(|l| l.id.clone()).collect()
    }

    /// `counts[i]` utterances of language `i`, interleaved round-robin.
    pub fn gen_split(&self, split: Split, counts: &[usize]) -> Result<Corpus> {
        if counts.len() != self.languages.len() {
            return Err(Error::Config(format!(
                "{} counts for {} languages",
                counts.len(),
                self.languages.len()
            )));
        }
        if counts.contains(&0) {
            return Err(Error::Config("every language needs at least one utterance".into()));
        }
        let (lmin, lmax) = self.lengths.tokens;
        let vocab = self.vocab() as u32;
        let max = counts.iter().copied().max().unwrap_or(0);
        let mut utterances = Vec::with_capacity(counts.iter().sum());
        for i in 0..max {
            for (lang, &count) in self.languages.iter().zip(counts) {
                if i >= count {
                    continue;
                }
                let tag = format!("{}:{}", split.tag(), lang.id);
                let utt_seed = seed::derive(self.seed, &tag, i as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(utt_seed);
                let len = rng.random_range(lmin..=lmax);
                let tokens = TokenSequence((0..len).map(|_| rng.random_range(1..=vocab)).collect());
                let features = synth_utterance(lang, &self.codebook, &tokens, seed::derive(utt_seed, "frames", 0))?;
                utterances.push(Utterance { features, tokens });
            }
        }
        Ok(Corpus {
            dim: self.dim(),
            vocab: self.vocab(),
            utterances,
        })
    }
}

const DATA_MAGIC: &[u8; 4] = b"SLDT";
pub const DATA_VERSION: u32 = 1;

impl Corpus {
    pub fn languages(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for u in &self.utterances {
            if !out.iter().any(|l| l == u.language()) {
                out.push(u.language().to_string());
            }
        }
        out
    }

    /// Utterances of one language, in corpus order.
    pub fn subset(&self, language: &str) -> Corpus {
        Corpus {
            dim: self.dim,
            vocab: self.vocab,
            utterances: self
                .utterances
                .iter()
                .filter(|u| u.language() == language)
                .cloned()
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(DATA_MAGIC);
        out.extend_from_slice(&DATA_VERSION.to_le_bytes());
        put_u32("dataset", &mut out, self.dim)?;
        put_u32("dataset", &mut out, self.vocab)?;
        put_u32("dataset", &mut out, self.utterances.len())?;
        for u in &self.utterances {
            if u.features.dim() != self.dim {
                return Err(Error::DimensionMismatch {
                    what: "utterance feature dim",
                    expected: self.dim,
                    actual: u.features.dim(),
                });
            }
            put_u32("dataset", &mut out, u.language().len())?;
            out.extend_from_slice(u.language().as_bytes());
            put_u32("dataset", &mut out, u.features.num_frames())?;
            put_u32("dataset", &mut out, u.tokens.len())?;
            for &v in u.features.frames.data() {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
            for &t in u.tokens.as_slice() {
                out.extend_from_slice(&t.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut c = Cursor::new(buf, "dataset");
        if c.take(4)? != DATA_MAGIC {
            return Err(Error::Format {
                kind: "dataset",
                reason: "bad magic".into(),
            });
        }
        let version = c.u32()?;
        if version != DATA_VERSION {
            return Err(Error::VersionMismatch {
                kind: "dataset",
                found: version,
                expected: DATA_VERSION,
            });
        }
        let dim = c.u32()? as usize;
        let vocab = c.u32()? as usize;
        let count = c.u32()? as usize;
        let mut utterances = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let language = c.string()?;
            let frames = c.u32()? as usize;
            let labels = c.u32()? as usize;
            let mut data = Vec::with_capacity(frames * dim);
            for _ in 0..frames * dim {
                data.push(c.f32()? as f64);
            }
            let mut tokens = Vec::with_capacity(labels);
            for _ in 0..labels {
                tokens.push(c.u32()?);
            }
            let tokens = TokenSequence::new(tokens, vocab)?;
            let features = FeatureSequence::new(language, Tensor::from_vec(frames, dim, data))?;
            utterances.push(Utterance { features, tokens });
        }
        if !c.done() {
            return Err(Error::Format {
                kind: "dataset",
                reason: "trailing bytes".into(),
            });
        }
        Ok(Self { dim, vocab, utterances })
    }

    pub fn digest(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_bytes()?)))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut buf))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&buf)
    }
}

/// Generated train and test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitCorpora {
    pub train: Corpus,
    pub test: Corpus,
}

/// Generates both splits and, if `out_dir` is given, writes `train.sldt`,
/// `test.sldt` and a `suite.json` describing the languages.
pub fn gen_corpus(
    suite: &Suite,
    train_counts: &[usize],
    test_counts: &[usize],
    out_dir: Option<&Path>,
) -> Result<SplitCorpora> {
    let train = suite.gen_split(Split::Train, train_counts)?;
    let test = suite.gen_split(Split::Test, test_counts)?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        train.write(&dir.join(Split::Train.file_name()))?;
        test.write(&dir.join(Split::Test.file_name()))?;
        let manifest = serde_json::to_vec_pretty(suite)?;
        let path = dir.join("suite.json");
        std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;
    }
    Ok(SplitCorpora { train, test })
}
