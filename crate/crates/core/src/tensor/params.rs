//! Named parameter storage shared by the model, optimizer, and checkpoints.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::scalar::Scalar;
use crate::tensor::array::DenseArray;

/// Handle to a stored parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

struct Entry<T> {
    name: String,
    value: DenseArray<T>,
    trainable: bool,
}

/// Ordered collection of named tensors. Registration order is stable, which
/// makes checkpoints and gradient reductions deterministic.
pub struct ParamStore<T> {
    entries: Vec<Entry<T>>,
    by_name: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), by_name: HashMap::new() }
    }

    /// Register a tensor under a unique name.
    pub fn register(&mut self, name: &str, value: DenseArray<T>, trainable: bool) -> ParamId {
        assert!(!self.by_name.contains_key(name), "duplicate parameter name {name:?}");
        let id = ParamId(self.entries.len());
        self.entries.push(Entry { name: name.to_string(), value, trainable });
        self.by_name.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar elements across all parameters.
    pub fn element_count(&self) -> usize {
        self.entries.iter().map(|e| e.value.len()).sum()
    }

    pub fn id_of(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &DenseArray<T> {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseArray<T> {
        &mut self.entries[id.0].value
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.entries[id.0].trainable
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.entries.len()).map(ParamId)
    }

    /// Snapshot of every value, in registration order.
    pub fn snapshot(&self) -> Vec<DenseArray<T>> {
        self.entries.iter().map(|e| e.value.clone()).collect()
    }

    /// Restore a snapshot taken from an identically shaped store.
    pub fn restore(&mut self, snapshot: &[DenseArray<T>]) {
        assert_eq!(snapshot.len(), self.entries.len(), "snapshot size mismatch");
        for (e, s) in self.entries.iter_mut().zip(snapshot) {
            assert_eq!(e.value.shape(), s.shape(), "snapshot shape mismatch for {}", e.name);
            e.value = s.clone();
        }
    }
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Uniform Xavier/Glorot initialization. Values are drawn in f64 so the same
/// seed produces the same underlying stream for f32 and f64 stores.
pub fn xavier_uniform<T: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseArray<T> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| T::from_f64_lossy(rng.gen_range(-limit..limit))).collect();
    DenseArray::from_vec(&[rows, cols], data)
}

/// Normal initialization with the given standard deviation.
pub fn normal_init<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], std: f64) -> DenseArray<T> {
    use rand_distr::{Distribution, Normal};
    let dist = Normal::new(0.0, std).expect("std must be finite");
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
    DenseArray::from_vec(shape, data)
}
