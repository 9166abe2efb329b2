use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeedRng, Tensor};

/// Standard deviation of the truncated-normal weight init.
pub const INIT_STD: f64 = 0.02;

/// Named parameters, iterated in name order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<S: Scalar> {
    params: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            params: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<S>) {
        self.params.insert(name.into(), t);
    }

    /// Truncated-normal weight seeded by the parameter name.
    pub fn init_weight(&mut self, rng: &SeedRng, name: &str, dims: &[usize]) {
        let mut r = rng.split(name);
        self.insert(name, Tensor::from_fn(dims.to_vec(), |_| S::of(r.trunc_normal(INIT_STD))));
    }

    pub fn init_zeros(&mut self, name: &str, dims: &[usize]) {
        self.insert(name, Tensor::zeros(dims.to_vec()));
    }

    pub fn init_ones(&mut self, name: &str, dims: &[usize]) {
        self.insert(name, Tensor::full(dims.to_vec(), S::one()));
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.params
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<S>> {
        self.params
            .get_mut(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<S>)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<S>)> {
        self.params.iter_mut()
    }

    /// Moves every parameter out, leaving the store empty. Lets very large
    /// models hand their weights to a tape without a copy.
    pub fn drain(&mut self) -> impl Iterator<Item = (String, Tensor<S>)> {
        std::mem::take(&mut self.params).into_iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.params.keys()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.params.values().map(|t| t.len()).sum()
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Replaces the value of an existing parameter, checking its shape.
    pub fn assign(&mut self, name: &str, t: Tensor<S>) -> Result<()> {
        let slot = self.get_mut(name)?;
        if slot.dims() != t.dims() {
            return Err(Error::ParamShape {
                name: name.to_string(),
                expected: slot.dims().to_vec(),
                found: t.dims().to_vec(),
            });
        }
        *slot = t;
        Ok(())
    }

    /// SHA-256 over names, shapes and little-endian values of the selected
    /// parameters, as hex.
    pub fn digest_where(&self, keep: impl Fn(&str) -> bool) -> String {
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        for (name, t) in self.params.iter().filter(|(n, _)| keep(n)) {
            h.update(name.as_bytes());
            for d in t.dims() {
                h.update((*d as u64).to_le_bytes());
            }
            buf.clear();
            for v in t.data() {
                v.write_le(&mut buf);
            }
            h.update(&buf);
        }
        hex::encode(h.finalize())
    }

    pub fn digest(&self) -> String {
        self.digest_where(|_| true)
    }
}
