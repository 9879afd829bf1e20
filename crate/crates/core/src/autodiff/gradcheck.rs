//! Central finite-difference checks for parameter gradients.
//!
//! The numeric side only evaluates the forward closure, so it stays
//! independent of the reverse sweep it is checking.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParameterStore, Tape, Var};
use crate::error::Result;

/// Relative-error denominators are floored at this fraction of
/// `max(1, |loss|)`. Central differences carry rounding noise of order
/// `ε·|loss|/h`, so smaller gradients can only be compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub loss: f64,
}

impl GradCheck {
    pub fn rel_error(&self) -> f64 {
        let floor = REL_ERROR_FLOOR * self.loss.abs().max(1.0);
        let scale = self.analytic.abs().max(self.numeric.abs()).max(floor);
        (self.analytic - self.numeric).abs() / scale
    }
}

/// Picks `count` distinct `(name, index)` entries uniformly over all
/// trainable scalars of `store`.
pub fn sample_entries(store: &ParameterStore, count: usize, seed: u64) -> Vec<(String, usize)> {
    let flat: Vec<(String, usize)> = store
        .iter()
        .filter(|(_, p)| p.requires_grad())
        .flat_map(|(name, p)| (0..p.len()).map(move |i| (name.to_string(), i)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = count.min(flat.len());
    let mut picked: Vec<usize> = sample(&mut rng, flat.len(), count).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| flat[i].clone()).collect()
}

/// Compares reverse-mode gradients of `loss_fn` against central
/// differences with step `h` at each of `entries`.
pub fn check<F>(
    store: &mut ParameterStore,
    entries: &[(String, usize)],
    h: f64,
    mut loss_fn: F,
) -> Result<Vec<GradCheck>>
where
    F: FnMut(&mut Tape, &ParameterStore) -> Result<Var>,
{
    store.zero_grads();
    let mut tape = Tape::new();
    let loss = loss_fn(&mut tape, store)?;
    tape.backward(loss)?.accumulate_into(store)?;
    let loss_value = tape.item(loss);

    let mut eval = |store: &ParameterStore| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = loss_fn(&mut tape, store)?;
        Ok(tape.item(loss))
    };

    let mut out = Vec::with_capacity(entries.len());
    for (name, index) in entries {
        let analytic = store.get(name)?.grad()[*index];
        let orig = store.get(name)?.values()[*index];
        store.get_mut(name)?.values_mut()[*index] = orig + h;
        let plus = eval(store)?;
        store.get_mut(name)?.values_mut()[*index] = orig - h;
        let minus = eval(store)?;
        store.get_mut(name)?.values_mut()[*index] = orig;
        out.push(GradCheck {
            name: name.clone(),
            index: *index,
            analytic,
            numeric: (plus - minus) / (2.0 * h),
            loss: loss_value,
        });
    }
    store.zero_grads();
    Ok(out)
}

/// Largest relative error in a batch of checks.
pub fn max_rel_error(checks: &[GradCheck]) -> f64 {
    checks.iter().map(GradCheck::rel_error).fold(0.0, f64::max)
}
