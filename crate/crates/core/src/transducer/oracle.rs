//! Exhaustive alignment enumeration. Exponential; only used to check the
//! dynamic program on tiny lattices.

use super::lattice::LossLattice;
use crate::error::{Error, Result};

pub const MAX_FRAMES: usize = 6;
pub const MAX_LABELS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Enumeration {
    pub loss: f64,
    pub paths: usize,
}

/// Sums the probability of every monotone alignment in the linear domain.
pub fn enumerate_alignments(lattice: &LossLattice) -> Result<Enumeration> {
    let (tn, un) = (lattice.frames(), lattice.labels());
    if tn > MAX_FRAMES || un > MAX_LABELS {
        return Err(Error::TooLargeToEnumerate { frames: tn, tokens: un });
    }

    fn walk(l: &LossLattice, t: usize, u: usize, acc: f64, total: &mut f64, paths: &mut usize) {
        let (tn, un) = (l.frames(), l.labels());
        if t == tn - 1 && u == un {
            *total += (acc + l.blank(t, u)).exp();
            *paths += 1;
            return;
        }
        if u < un {
            walk(l, t, u + 1, acc + l.emit(t, u), total, paths);
        }
        if t + 1 < tn {
            walk(l, t + 1, u, acc + l.blank(t, u), total, paths);
        }
    }

    let mut total = 0.0;
    let mut paths = 0;
    walk(lattice, 0, 0, 0.0, &mut total, &mut paths);
    Ok(Enumeration {
        loss: -total.ln(),
        paths,
    })
}

pub fn transducer_loss_bruteforce(lattice: &LossLattice) -> Result<f64> {
    enumerate_alignments(lattice).map(|e| e.loss)
}
