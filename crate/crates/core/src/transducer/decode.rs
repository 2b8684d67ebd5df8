use super::model::TransducerModel;
use super::types::{FeatureSequence, TokenSequence, BLANK};
use crate::error::{Error, Result};

/// Lowest index wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Frame-synchronous greedy search. At each frame the most likely output is
/// emitted repeatedly until blank wins or `max_symbols_per_frame` labels have
/// been emitted on that frame.
pub fn greedy_decode(
    model: &TransducerModel,
    feats: &FeatureSequence,
    max_symbols_per_frame: usize,
) -> Result<TokenSequence> {
    if max_symbols_per_frame == 0 {
        return Err(Error::InvalidArgument("max_symbols_per_frame must be >= 1".into()));
    }
    let enc = model.encode(feats)?;
    let enc_proj = model.project_enc(&enc)?;

    let mut state = model.predictor_step(None, BLANK)?;
    let mut pred_proj = model.project_pred(&state)?;
    let mut out = Vec::new();
    for t in 0..enc.rows() {
        let mut emitted = 0;
        while emitted < max_symbols_per_frame {
            let logits = model.joint_logits(enc_proj.row_slice(t), pred_proj.data())?;
            let k = argmax(&logits);
            if k == BLANK as usize {
                break;
            }
            out.push(k as u32);
            emitted += 1;
            state = model.predictor_step(Some(&state), k as u32)?;
            pred_proj = model.project_pred(&state)?;
        }
    }
    Ok(TokenSequence(out))
}
