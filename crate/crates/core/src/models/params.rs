//! Named parameter storage shared by every architecture.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug)]
struct Entry {
    name: String,
    value: Tensor<f32>,
    trainable: bool,
}

/// Ordered collection of named tensors: trainable weights plus buffers such
/// as batch-norm running statistics.
///
/// Registration order is the order of serialization and of optimizer state,
/// so it must be deterministic for a given architecture.
#[derive(Clone, Debug)]
pub struct ParamStore {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    rng: ChaCha8Rng,
}

impl ParamStore {
    /// Empty store whose initializers draw from a stream seeded by `seed`.
    pub fn new(seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn push(&mut self, name: String, value: Tensor<f32>, trainable: bool) -> usize {
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        let id = self.entries.len();
        self.index.insert(name.clone(), id);
        self.entries.push(Entry { name, value, trainable });
        id
    }

    /// Trainable tensor with He-normal entries, `std = sqrt(2 / fan_in)`.
    pub fn he_normal(&mut self, name: impl Into<String>, shape: Vec<usize>, fan_in: usize) -> usize {
        let std = (2.0 / fan_in as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("finite std");
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| dist.sample(rng) as f32);
        self.push(name.into(), t, true)
    }

    /// Trainable tensor filled with a constant.
    pub fn constant(&mut self, name: impl Into<String>, shape: Vec<usize>, value: f32) -> usize {
        self.push(name.into(), Tensor::full(shape, value), true)
    }

    /// Non-trainable buffer filled with a constant.
    pub fn buffer(&mut self, name: impl Into<String>, shape: Vec<usize>, value: f32) -> usize {
        self.push(name.into(), Tensor::full(shape, value), false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn value(&self, id: usize) -> &Tensor<f32> {
        &self.entries[id].value
    }

    pub fn value_mut(&mut self, id: usize) -> &mut Tensor<f32> {
        &mut self.entries[id].value
    }

    pub fn is_trainable(&self, id: usize) -> bool {
        self.entries[id].trainable
    }

    pub fn name(&self, id: usize) -> &str {
        &self.entries[id].name
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// `(name, tensor)` pairs in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|e| (e.name.as_str(), &e.value))
    }

    /// Ids of the trainable tensors, in registration order.
    pub fn trainable_ids(&self) -> Vec<usize> {
        (0..self.entries.len()).filter(|&i| self.entries[i].trainable).collect()
    }

    /// Number of trainable scalars (buffers excluded).
    pub fn num_parameters(&self) -> usize {
        self.entries.iter().filter(|e| e.trainable).map(|e| e.value.len()).sum()
    }

    /// Moves the listed tensors out of the store, leaving empty placeholders.
    pub(crate) fn take(&mut self, ids: &[usize]) -> Vec<Tensor<f32>> {
        ids.iter()
            .map(|&i| std::mem::replace(&mut self.entries[i].value, Tensor::zeros([0])))
            .collect()
    }

    pub(crate) fn put(&mut self, ids: &[usize], values: Vec<Tensor<f32>>) {
        for (&i, v) in ids.iter().zip(values) {
            self.entries[i].value = v;
        }
    }

    /// Replaces a tensor by name, checking that the shape is unchanged.
    pub fn assign(&mut self, name: &str, value: Tensor<f32>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Incompatible(format!("unknown parameter {name}")))?;
        let slot = &mut self.entries[id].value;
        if slot.shape() != value.shape() {
            return Err(Error::Incompatible(format!(
                "parameter {name}: expected shape {:?}, found {:?}",
                slot.shape(),
                value.shape()
            )));
        }
        *slot = value;
        Ok(())
    }
}
