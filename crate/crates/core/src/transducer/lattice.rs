//! Transducer alignment lattice and its log-space forward-backward.
//!
//! Node `(t, u)` means "frame `t` is current and `u` labels have been
//! emitted". From there a blank moves to `(t + 1, u)` and emitting label
//! `u + 1` moves to `(t, u + 1)`. A complete alignment starts at `(0, 0)` and
//! ends with the blank out of `(T − 1, U)`, so every path has `T` blanks and
//! `U` emissions, and crosses each anti-diagonal `t + u = n` exactly once.

use crate::error::{Error, Result};
use crate::numerics::{logsumexp, Tensor};

const NEG_INF: f64 = f64::NEG_INFINITY;

#[derive(Clone, Debug, PartialEq)]
pub struct LossLattice {
    frames: usize,
    labels: usize,
    /// `T × (U + 1)`: log P(blank | t, u).
    blank: Vec<f64>,
    /// `T × U`: log P(y_{u+1} | t, u).
    emit: Vec<f64>,
}

/// Forward/backward tables of a lattice, both `T × (U + 1)`.
#[derive(Clone, Debug)]
pub struct AlphaBeta {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
}

impl LossLattice {
    pub fn from_parts(frames: usize, labels: usize, blank: Vec<f64>, emit: Vec<f64>) -> Result<Self> {
        if frames == 0 {
            return Err(Error::InvalidArgument("lattice needs T >= 1".into()));
        }
        if blank.len() != frames * (labels + 1) {
            return Err(Error::DimensionMismatch {
                what: "lattice blank entries",
                expected: frames * (labels + 1),
                actual: blank.len(),
            });
        }
        if emit.len() != frames * labels {
            return Err(Error::DimensionMismatch {
                what: "lattice emit entries",
                expected: frames * labels,
                actual: emit.len(),
            });
        }
        if blank.iter().chain(&emit).any(|v| v.is_nan()) {
            return Err(Error::NonFinite { op: "transducer_loss" });
        }
        Ok(Self {
            frames,
            labels,
            blank,
            emit,
        })
    }

    /// Builds the lattice from joint log-probabilities laid out as rows
    /// `t · (U + 1) + u`, one column per output (blank at column 0).
    pub fn from_log_probs(log_probs: &Tensor, frames: usize, targets: &[u32]) -> Result<Self> {
        let labels = targets.len();
        if log_probs.rows() != frames * (labels + 1) {
            return Err(Error::DimensionMismatch {
                what: "joint rows",
                expected: frames * (labels + 1),
                actual: log_probs.rows(),
            });
        }
        let mut blank = Vec::with_capacity(frames * (labels + 1));
        let mut emit = Vec::with_capacity(frames * labels);
        for t in 0..frames {
            for u in 0..=labels {
                let row = t * (labels + 1) + u;
                blank.push(log_probs.get(row, 0));
                if let Some(&token) = targets.get(u) {
                    let y = token as usize;
                    if y == 0 || y >= log_probs.cols() {
                        return Err(Error::TokenOutOfRange {
                            token,
                            vocab: log_probs.cols() - 1,
                        });
                    }
                    emit.push(log_probs.get(row, y));
                }
            }
        }
        Self::from_parts(frames, labels, blank, emit)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    #[inline]
    pub fn blank(&self, t: usize, u: usize) -> f64 {
        self.blank[t * (self.labels + 1) + u]
    }

    #[inline]
    pub fn emit(&self, t: usize, u: usize) -> f64 {
        self.emit[t * self.labels + u]
    }

    #[inline]
    fn at(&self, t: usize, u: usize) -> usize {
        t * (self.labels + 1) + u
    }

    pub fn alpha(&self) -> Vec<f64> {
        let (tn, un) = (self.frames, self.labels);
        let mut alpha = vec![NEG_INF; tn * (un + 1)];
        for t in 0..tn {
            for u in 0..=un {
                alpha[self.at(t, u)] = if t == 0 && u == 0 {
                    0.0
                } else {
                    let from_blank = if t > 0 {
                        alpha[self.at(t - 1, u)] + self.blank(t - 1, u)
                    } else {
                        NEG_INF
                    };
                    let from_emit = if u > 0 {
                        alpha[self.at(t, u - 1)] + self.emit(t, u - 1)
                    } else {
                        NEG_INF
                    };
                    logsumexp(&[from_blank, from_emit])
                };
            }
        }
        alpha
    }

    /// `beta(t, u)` is the log-probability of finishing from node `(t, u)`.
    pub fn beta(&self) -> Vec<f64> {
        let (tn, un) = (self.frames, self.labels);
        let mut beta = vec![NEG_INF; tn * (un + 1)];
        for t in (0..tn).rev() {
            for u in (0..=un).rev() {
                beta[self.at(t, u)] = if t == tn - 1 && u == un {
                    self.blank(t, u)
                } else {
                    let via_blank = if t + 1 < tn {
                        beta[self.at(t + 1, u)] + self.blank(t, u)
                    } else {
                        NEG_INF
                    };
                    let via_emit = if u < un {
                        beta[self.at(t, u + 1)] + self.emit(t, u)
                    } else {
                        NEG_INF
                    };
                    logsumexp(&[via_blank, via_emit])
                };
            }
        }
        beta
    }

    pub fn forward_backward(&self) -> AlphaBeta {
        let alpha = self.alpha();
        let beta = self.beta();
        let (tn, un) = (self.frames, self.labels);
        let log_likelihood = alpha[self.at(tn - 1, un)] + self.blank(tn - 1, un);
        AlphaBeta {
            alpha,
            beta,
            log_likelihood,
        }
    }

    /// Negative log-likelihood summed over all alignments.
    pub fn loss(&self) -> f64 {
        -self.forward_backward().log_likelihood
    }

    /// Loss and its gradient with respect to every blank and emit entry,
    /// returned as `(loss, d_blank, d_emit)` in the lattice layouts.
    pub fn loss_and_grads(&self) -> (f64, Vec<f64>, Vec<f64>) {
        let AlphaBeta {
            alpha,
            beta,
            log_likelihood: ll,
        } = self.forward_backward();
        let (tn, un) = (self.frames, self.labels);
        let mut d_blank = vec![0.0; self.blank.len()];
        let mut d_emit = vec![0.0; self.emit.len()];
        for t in 0..tn {
            for u in 0..=un {
                let a = alpha[self.at(t, u)];
                let next = if t + 1 < tn {
                    Some(beta[self.at(t + 1, u)])
                } else if u == un {
                    Some(0.0)
                } else {
                    None
                };
                if let Some(b) = next {
                    d_blank[self.at(t, u)] = -(a + self.blank(t, u) + b - ll).exp();
                }
                if u < un {
                    let b = beta[self.at(t, u + 1)];
                    d_emit[t * un + u] = -(a + self.emit(t, u) + b - ll).exp();
                }
            }
        }
        (-ll, d_blank, d_emit)
    }

    /// Gradient of [`loss`](Self::loss) scattered back onto a joint
    /// log-probability matrix of the layout accepted by
    /// [`from_log_probs`](Self::from_log_probs).
    pub fn loss_and_log_prob_grad(&self, outputs: usize, targets: &[u32]) -> (f64, Tensor) {
        let (loss, d_blank, d_emit) = self.loss_and_grads();
        let un = self.labels;
        let mut grad = Tensor::zeros(self.frames * (un + 1), outputs);
        for t in 0..self.frames {
            for u in 0..=un {
                let row = t * (un + 1) + u;
                grad.set(row, 0, d_blank[row]);
                if u < un {
                    grad.set(row, targets[u] as usize, d_emit[t * un + u]);
                }
            }
        }
        (loss, grad)
    }
}

/// `−log P(y | x)` of a lattice.
pub fn transducer_loss(lattice: &LossLattice) -> f64 {
    lattice.loss()
}
