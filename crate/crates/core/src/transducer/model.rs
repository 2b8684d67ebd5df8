//! The transducer model and graph builders for each of its networks.
//!
//! Encoder, per frame `x_t`:
//!
//! ```text
//! h_t = tanh(x_t W1 + b1)
//! c_t = mean(h_1 .. h_e(t)) Wc + bc        e(t) = last frame of t's chunk
//! f_t = tanh(h_t W2 + b2 + c_t)
//! ```
//!
//! so `f_t` sees every frame of its own chunk and of earlier chunks, and
//! nothing later. Predictor: `g_0 = tanh(E[blank] Wx + b)`,
//! `g_u = tanh(E[y_u] Wx + b + g_{u−1} Wh)`. Joint:
//! `log_softmax(tanh(f_t Je + jb + g_u Jp) Wo + bo)`.
//!
//! The same graph builders serve training and inference, so a loss computed
//! during training and logits computed while decoding go through identical
//! kernels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lattice::LossLattice;
use super::types::{FeatureSequence, ModelConfig, TokenSequence, BLANK};
use crate::error::{Error, Result};
use crate::numerics::{tensor, Graph, ParamSet, Tensor, Var};

pub const ENC_W1: &str = "encoder.w1";
pub const ENC_B1: &str = "encoder.b1";
pub const ENC_W2: &str = "encoder.w2";
pub const ENC_B2: &str = "encoder.b2";
pub const ENC_WC: &str = "encoder.context_w";
pub const ENC_BC: &str = "encoder.context_b";
pub const PRED_EMBED: &str = "predictor.embed";
pub const PRED_WX: &str = "predictor.w_in";
pub const PRED_WH: &str = "predictor.w_rec";
pub const PRED_B: &str = "predictor.b";
pub const JOINT_WE: &str = "joint.w_enc";
pub const JOINT_WP: &str = "joint.w_pred";
pub const JOINT_B: &str = "joint.b";
pub const JOINT_WO: &str = "joint.w_out";
pub const JOINT_BO: &str = "joint.b_out";

/// `(name, rows, cols)` of every model parameter, in storage order.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(&'static str, usize, usize)> {
    let (d, h, e, o) = (cfg.feature_dim, cfg.hidden_dim, cfg.embed_dim, cfg.outputs());
    vec![
        (ENC_W1, d, h),
        (ENC_B1, 1, h),
        (ENC_W2, h, h),
        (ENC_B2, 1, h),
        (ENC_WC, h, h),
        (ENC_BC, 1, h),
        (PRED_EMBED, o, e),
        (PRED_WX, e, h),
        (PRED_WH, h, h),
        (PRED_B, 1, h),
        (JOINT_WE, h, h),
        (JOINT_WP, h, h),
        (JOINT_B, 1, h),
        (JOINT_WO, h, o),
        (JOINT_BO, 1, o),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransducerModel {
    config: ModelConfig,
    params: ParamSet,
}

impl TransducerModel {
    /// Glorot-uniform weights, zero biases, small uniform embeddings.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, rows, cols) in param_shapes(&config) {
            let mut t = Tensor::zeros(rows, cols);
            if name == PRED_EMBED {
                for v in t.data_mut() {
                    *v = rng.random_range(-0.5..0.5);
                }
            } else if rows > 1 {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                for v in t.data_mut() {
                    *v = rng.random_range(-limit..limit);
                }
            }
            params.insert(name, t, true);
        }
        Ok(Self { config, params })
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn from_params(config: ModelConfig, params: ParamSet) -> Result<Self> {
        config.validate()?;
        let shapes = param_shapes(&config);
        if params.len() != shapes.len() {
            return Err(Error::Format {
                kind: "model",
                reason: format!("expected {} tensors, found {}", shapes.len(), params.len()),
            });
        }
        for (name, rows, cols) in shapes {
            let t = params.value(name)?;
            if t.shape() != (rows, cols) {
                return Err(Error::Format {
                    kind: "model",
                    reason: format!("`{name}` has shape {:?}, expected {:?}", t.shape(), (rows, cols)),
                });
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn into_params(self) -> ParamSet {
        self.params
    }

    fn check_features(&self, feats: &FeatureSequence) -> Result<()> {
        if feats.dim() != self.config.feature_dim {
            return Err(Error::DimensionMismatch {
                what: "feature dim",
                expected: self.config.feature_dim,
                actual: feats.dim(),
            });
        }
        Ok(())
    }

    /// Encoder states `T × H`.
    pub fn encode(&self, feats: &FeatureSequence) -> Result<Tensor> {
        self.check_features(feats)?;
        let mut g = Graph::new();
        let x = g.constant(feats.frames.clone());
        let f = encoder_graph(&mut g, &self.params, &self.config, x)?;
        Ok(g.value(f).clone())
    }

    /// Predictor states `(U + 1) × H`, row 0 being the start state.
    pub fn predict(&self, tokens: &TokenSequence) -> Result<Tensor> {
        tokens.validate(self.config.vocab)?;
        let mut g = Graph::new();
        let p = predictor_graph(&mut g, &self.params, tokens.as_slice())?;
        Ok(g.value(p).clone())
    }

    /// Joint logits for one encoder state and one predictor state.
    pub fn joint(&self, enc_state: &[f64], pred_state: &[f64]) -> Result<Vec<f64>> {
        let enc = Tensor::row(enc_state.to_vec());
        let ep = tensor::add(
            &tensor::matmul(&enc, self.params.value(JOINT_WE)?),
            self.params.value(JOINT_B)?,
        );
        let pp = self.project_pred(&Tensor::row(pred_state.to_vec()))?;
        self.joint_logits(ep.data(), pp.data())
    }

    /// `f_t Je + jb` for every frame.
    pub(crate) fn project_enc(&self, enc: &Tensor) -> Result<Tensor> {
        Ok(tensor::add(
            &tensor::matmul(enc, self.params.value(JOINT_WE)?),
            self.params.value(JOINT_B)?,
        ))
    }

    pub(crate) fn project_pred(&self, pred: &Tensor) -> Result<Tensor> {
        Ok(tensor::matmul(pred, self.params.value(JOINT_WP)?))
    }

    /// Logits from already-projected encoder and predictor rows.
    pub(crate) fn joint_logits(&self, enc_proj: &[f64], pred_proj: &[f64]) -> Result<Vec<f64>> {
        let z = tensor::tanh(&tensor::add(
            &Tensor::row(enc_proj.to_vec()),
            &Tensor::row(pred_proj.to_vec()),
        ));
        let logits = tensor::add(
            &tensor::matmul(&z, self.params.value(JOINT_WO)?),
            self.params.value(JOINT_BO)?,
        );
        Ok(logits.into_data())
    }

    /// One recurrence step: state after consuming `token` from `prev`
    /// (`None` for the start state, in which case `token` is ignored).
    pub(crate) fn predictor_step(&self, prev: Option<&Tensor>, token: u32) -> Result<Tensor> {
        let id = if prev.is_some() { token } else { BLANK };
        let e = tensor::gather_rows(self.params.value(PRED_EMBED)?, &[id as usize]);
        let xw = tensor::add(
            &tensor::matmul(&e, self.params.value(PRED_WX)?),
            self.params.value(PRED_B)?,
        );
        let pre = match prev {
            Some(h) => tensor::add(&xw, &tensor::matmul(h, self.params.value(PRED_WH)?)),
            None => xw,
        };
        Ok(tensor::tanh(&pre))
    }

    /// Transducer negative log-likelihood of one utterance.
    pub fn loss(&self, feats: &FeatureSequence, tokens: &TokenSequence) -> Result<f64> {
        self.check_features(feats)?;
        tokens.validate(self.config.vocab)?;
        let mut g = Graph::new();
        let x = g.constant(feats.frames.clone());
        let l = utterance_loss_graph(&mut g, &self.params, &self.config, x, tokens.as_slice())?;
        Ok(g.value(l).item())
    }

    /// Joint log-probabilities, rows `t · (U + 1) + u`.
    pub fn log_probs(&self, feats: &FeatureSequence, tokens: &TokenSequence) -> Result<Tensor> {
        self.check_features(feats)?;
        tokens.validate(self.config.vocab)?;
        let mut g = Graph::new();
        let x = g.constant(feats.frames.clone());
        let f = encoder_graph(&mut g, &self.params, &self.config, x)?;
        let p = predictor_graph(&mut g, &self.params, tokens.as_slice())?;
        let lp = joint_graph(&mut g, &self.params, f, p)?;
        Ok(g.value(lp).clone())
    }

    pub fn lattice(&self, feats: &FeatureSequence, tokens: &TokenSequence) -> Result<LossLattice> {
        let lp = self.log_probs(feats, tokens)?;
        LossLattice::from_log_probs(&lp, feats.num_frames(), tokens.as_slice())
    }
}

/// `T × T` matrix whose row `t` averages frames `0 ..= e(t)`, with `e(t)` the
/// last frame of `t`'s chunk.
pub fn chunk_mean_matrix(frames: usize, chunk: usize) -> Tensor {
    let mut m = Tensor::zeros(frames, frames);
    for t in 0..frames {
        let end = ((t / chunk + 1) * chunk).min(frames);
        let w = 1.0 / end as f64;
        for s in 0..end {
            m.set(t, s, w);
        }
    }
    m
}

pub fn encoder_graph(g: &mut Graph, params: &ParamSet, cfg: &ModelConfig, input: Var) -> Result<Var> {
    let frames = g.value(input).rows();
    let w1 = g.param(params, ENC_W1)?;
    let b1 = g.param(params, ENC_B1)?;
    let w2 = g.param(params, ENC_W2)?;
    let b2 = g.param(params, ENC_B2)?;
    let wc = g.param(params, ENC_WC)?;
    let bc = g.param(params, ENC_BC)?;

    let xw = g.matmul(input, w1);
    let pre1 = g.add(xw, b1);
    let h1 = g.tanh(pre1);

    let avg = g.constant(chunk_mean_matrix(frames, cfg.chunk));
    let mean = g.matmul(avg, h1);
    let cw = g.matmul(mean, wc);
    let ctx = g.add(cw, bc);

    let hw = g.matmul(h1, w2);
    let pre2 = g.add(hw, b2);
    let pre2 = g.add(pre2, ctx);
    Ok(g.tanh(pre2))
}

pub fn predictor_graph(g: &mut Graph, params: &ParamSet, tokens: &[u32]) -> Result<Var> {
    let embed = g.param(params, PRED_EMBED)?;
    let wx = g.param(params, PRED_WX)?;
    let wh = g.param(params, PRED_WH)?;
    let b = g.param(params, PRED_B)?;

    let ids: Vec<usize> = std::iter::once(BLANK)
        .chain(tokens.iter().copied())
        .map(|t| t as usize)
        .collect();
    let e = g.gather_rows(embed, &ids);
    let ew = g.matmul(e, wx);
    let xw = g.add(ew, b);

    let mut states = Vec::with_capacity(ids.len());
    let mut prev: Option<Var> = None;
    for u in 0..ids.len() {
        let row = g.gather_rows(xw, &[u]);
        let pre = match prev {
            Some(h) => {
                let rec = g.matmul(h, wh);
                g.add(row, rec)
            }
            None => row,
        };
        let h = g.tanh(pre);
        states.push(h);
        prev = Some(h);
    }
    Ok(g.concat_rows(&states))
}

/// Joint log-probabilities over the full `T × (U + 1)` grid.
pub fn joint_graph(g: &mut Graph, params: &ParamSet, enc: Var, pred: Var) -> Result<Var> {
    let we = g.param(params, JOINT_WE)?;
    let wp = g.param(params, JOINT_WP)?;
    let jb = g.param(params, JOINT_B)?;
    let wo = g.param(params, JOINT_WO)?;
    let bo = g.param(params, JOINT_BO)?;

    let frames = g.value(enc).rows();
    let states = g.value(pred).rows();
    let ew = g.matmul(enc, we);
    let ep = g.add(ew, jb);
    let pp = g.matmul(pred, wp);

    let t_idx: Vec<usize> = (0..frames).flat_map(|t| std::iter::repeat_n(t, states)).collect();
    let u_idx: Vec<usize> = (0..frames).flat_map(|_| 0..states).collect();
    let ep_grid = g.gather_rows(ep, &t_idx);
    let pp_grid = g.gather_rows(pp, &u_idx);
    let sum = g.add(ep_grid, pp_grid);
    let z = g.tanh(sum);
    let zo = g.matmul(z, wo);
    let logits = g.add(zo, bo);
    Ok(g.log_softmax(logits))
}

/// Full utterance loss: encoder → predictor → joint → transducer NLL.
pub fn utterance_loss_graph(
    g: &mut Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    input: Var,
    tokens: &[u32],
) -> Result<Var> {
    let frames = g.value(input).rows();
    let enc = encoder_graph(g, params, cfg, input)?;
    let pred = predictor_graph(g, params, tokens)?;
    let lp = joint_graph(g, params, enc, pred)?;
    transducer_loss_node(g, lp, frames, tokens)
}

/// Differentiable transducer loss over a joint log-probability node.
pub fn transducer_loss_node(g: &mut Graph, log_probs: Var, frames: usize, tokens: &[u32]) -> Result<Var> {
    let lp = g.value(log_probs);
    let lattice = LossLattice::from_log_probs(lp, frames, tokens)?;
    let (loss, grad) = lattice.loss_and_log_prob_grad(lp.cols(), tokens);
    Ok(g.fused_scalar(log_probs, loss, grad, "transducer_loss"))
}
