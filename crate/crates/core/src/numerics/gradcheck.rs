use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, ParamSet, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates probed per trainable tensor; tensors with fewer entries
    /// are probed exhaustively.
    pub samples_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            samples_per_tensor: 20,
            seed: 0,
        }
    }
}

fn evaluate<F>(params: &ParamSet, loss_fn: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    let mut g = Graph::new();
    let out = loss_fn(&mut g, params)?;
    Ok(g.value(out).item())
}

/// Compares the graph gradient of `loss_fn` with central differences and
/// returns the largest `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<F>(params: &ParamSet, opts: GradCheckOptions, loss_fn: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamSet) -> Result<Var>,
{
    if !(1e-8..=1e-3).contains(&opts.eps) {
        return Err(Error::InvalidArgument(format!(
            "grad_check eps {} outside [1e-8, 1e-3]",
            opts.eps
        )));
    }

    let mut g = Graph::new();
    let out = loss_fn(&mut g, params)?;
    let base = g.value(out).item();
    let analytic = g.backward(out)?;
    let again = evaluate(params, &loss_fn)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic {
            first: base,
            second: again,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    let names: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.trainable())
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let n = params.value(&name)?.len();
        let coords: Vec<usize> = if n <= opts.samples_per_tensor {
            (0..n).collect()
        } else {
            sample(&mut rng, n, opts.samples_per_tensor).into_vec()
        };
        let grad = analytic
            .get(&name)
            .ok_or_else(|| Error::MissingGradient(name.clone()))?;
        for i in coords {
            let orig = params.value(&name)?.data()[i];
            probe.value_mut(&name)?.data_mut()[i] = orig + opts.eps;
            let plus = evaluate(&probe, &loss_fn)?;
            probe.value_mut(&name)?.data_mut()[i] = orig - opts.eps;
            let minus = evaluate(&probe, &loss_fn)?;
            probe.value_mut(&name)?.data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * opts.eps);
            let a = grad.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}
