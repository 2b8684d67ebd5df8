use indexmap::IndexMap;
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

/// One named entry of a [`ParamSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Option<Tensor>,
    trainable: bool,
}

impl Param {
    pub fn trainable(&self) -> bool {
        self.trainable
    }
}

/// Ordered name → tensor map with a per-entry trainable flag.
///
/// Iteration follows insertion order. The trainable flag is what freezes the
/// base model while a linear input network is trained.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Param>,
}

/// Gradients produced by one backward pass, keyed by parameter name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    pub(crate) by_name: IndexMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on duplicate names.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor, trainable: bool) {
        let name = name.into();
        assert!(!self.entries.contains_key(&name), "duplicate parameter name `{name}`");
        self.entries.insert(
            name,
            Param {
                value,
                grad: None,
                trainable,
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.entries.get(name)
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Copy with every entry marked non-trainable.
    pub fn frozen(&self) -> ParamSet {
        let mut out = self.clone();
        for p in out.entries.values_mut() {
            p.trainable = false;
            p.grad = None;
        }
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.entries.values_mut() {
            p.grad = None;
        }
    }

    /// Adds `grads` into the gradient slots. Gradients for non-trainable or
    /// unknown entries are an error.
    pub fn accumulate(&mut self, grads: &Gradients) -> Result<()> {
        for (name, g) in &grads.by_name {
            let p = self
                .entries
                .get_mut(name)
                .ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if !p.trainable {
                return Err(Error::InvalidArgument(format!(
                    "gradient supplied for frozen parameter `{name}`"
                )));
            }
            match &mut p.grad {
                Some(acc) => acc.add_assign(g),
                None => p.grad = Some(g.clone()),
            }
        }
        Ok(())
    }

    /// Scales every populated gradient slot by `c`.
    pub fn scale_grads(&mut self, c: f64) {
        for p in self.entries.values_mut() {
            if let Some(g) = &mut p.grad {
                for v in g.data_mut() {
                    *v *= c;
                }
            }
        }
    }

    /// SHA-256 over names, shapes and `f64` values of the selected entries, in
    /// insertion order.
    pub fn digest_where(&self, mut include: impl FnMut(&str) -> bool) -> String {
        let mut h = Sha256::new();
        for (name, p) in &self.entries {
            if !include(name) {
                continue;
            }
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            h.update((p.value.rows() as u64).to_le_bytes());
            h.update((p.value.cols() as u64).to_le_bytes());
            h.update(p.value.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn digest(&self) -> String {
        self.digest_where(|_| true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_order_is_kept() {
        let mut p = ParamSet::new();
        p.insert("z", Tensor::scalar(1.0), true);
        p.insert("a", Tensor::scalar(2.0), false);
        assert_eq!(p.names().collect::<Vec<_>>(), vec!["z", "a"]);
    }

    #[test]
    #[should_panic(expected = "duplicate")]
    fn duplicate_names_rejected() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(1.0), true);
        p.insert("w", Tensor::scalar(1.0), true);
    }

    #[test]
    fn frozen_entries_reject_gradients() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::scalar(1.0), false);
        let mut g = Gradients::default();
        g.by_name.insert("w".into(), Tensor::scalar(1.0));
        assert!(p.accumulate(&g).is_err());
    }

    #[test]
    fn digest_changes_with_one_bit() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::row(vec![1.0, 2.0]), true);
        let before = p.digest();
        let v = p.value_mut("w").unwrap();
        let bits = v.data()[1].to_bits() ^ 1;
        v.data_mut()[1] = f64::from_bits(bits);
        assert_ne!(before, p.digest());
    }
}
