use egopose_core::tensorio::{RawTensor, TensorBundle, TensorData};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::float::Float;
use crate::tensor::Tensor;
use crate::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub value: Tensor<T>,
    /// Buffers (e.g. batch-norm running statistics) are not optimized.
    pub trainable: bool,
}

/// Named parameters and buffers of one or more networks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<ParamEntry<T>>,
}

impl<T: Float> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry {
            name,
            value,
            trainable,
        });
        ParamId(self.entries.len() - 1)
    }

    /// Kaiming-normal weights with fan-in `fan_in` (gain for ReLU).
    pub fn add_kaiming<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        self.add_normal(name, shape, (2.0 / fan_in as f64).sqrt(), rng)
    }

    pub fn add_normal<R: Rng + ?Sized>(&mut self, name: impl Into<String>, shape: Vec<usize>, std: f64, rng: &mut R) -> ParamId {
        let normal = Normal::new(0.0, std).expect("positive std");
        let n = crate::tensor::numel(&shape);
        let data = (0..n).map(|_| T::from_f64(normal.sample(rng))).collect();
        self.add(name, Tensor::new(shape, data), true)
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: Vec<usize>, v: f64, trainable: bool) -> ParamId {
        self.add(name, Tensor::full(shape, T::from_f64(v)), trainable)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.entries[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.entries[id.0].value
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<T> {
        &self.entries[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.ids().filter(|id| self.entries[id.0].trainable)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|e| e.name == name).map(ParamId)
    }

    /// Number of trainable scalars whose name starts with `prefix`.
    pub fn count_trainable(&self, prefix: &str) -> usize {
        self.entries
            .iter()
            .filter(|e| e.trainable && e.name.starts_with(prefix))
            .map(|e| e.value.len())
            .sum()
    }

    pub fn cast<U: Float>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    value: e.value.cast(),
                    trainable: e.trainable,
                })
                .collect(),
        }
    }

    /// SHA-256 over names, shapes and little-endian f32 values of every
    /// entry whose name starts with `prefix` ("" for all).
    pub fn checksum(&self, prefix: &str) -> String {
        let mut h = Sha256::new();
        for e in self.entries.iter().filter(|e| e.name.starts_with(prefix)) {
            h.update(e.name.as_bytes());
            for d in e.value.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in e.value.data() {
                h.update((v.as_f64() as f32).to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Serializes every entry as an f32 tensor named after the parameter.
    pub fn to_bundle(&self, tag: &str) -> TensorBundle {
        self.to_bundle_prefixed(tag, "")
    }

    /// Like [`ParamStore::to_bundle`], restricted to names starting with `prefix`.
    pub fn to_bundle_prefixed(&self, tag: &str, prefix: &str) -> TensorBundle {
        TensorBundle {
            tag: tag.to_string(),
            entries: self
                .entries
                .iter()
                .filter(|e| e.name.starts_with(prefix))
                .map(|e| {
                    let data = e.value.data().iter().map(|v| v.as_f64() as f32).collect();
                    (
                        e.name.clone(),
                        RawTensor {
                            shape: e.value.shape().to_vec(),
                            data: TensorData::F32(data),
                        },
                    )
                })
                .collect(),
        }
    }

    /// Overwrites values from a bundle holding an entry for every parameter
    /// with matching shape.
    pub fn load_bundle(&mut self, bundle: &TensorBundle) -> Result<()> {
        self.load_bundle_prefixed(bundle, "")
    }

    /// Loads only the entries whose names start with `prefix`.
    pub fn load_bundle_prefixed(&mut self, bundle: &TensorBundle, prefix: &str) -> Result<()> {
        for e in self.entries.iter_mut().filter(|e| e.name.starts_with(prefix)) {
            let raw = bundle
                .get(&e.name)
                .ok_or_else(|| NnError::Checkpoint(format!("missing parameter {}", e.name)))?;
            if raw.shape != e.value.shape() {
                return Err(NnError::Checkpoint(format!(
                    "parameter {} has shape {:?}, checkpoint has {:?}",
                    e.name,
                    e.value.shape(),
                    raw.shape
                )));
            }
            let values: Vec<T> = match &raw.data {
                TensorData::F32(v) => v.iter().map(|x| T::from_f64(*x as f64)).collect(),
                TensorData::F64(v) => v.iter().map(|x| T::from_f64(*x)).collect(),
                TensorData::U8(_) => {
                    return Err(NnError::Checkpoint(format!("parameter {} stored as u8", e.name)))
                }
            };
            e.value = Tensor::new(raw.shape.clone(), values);
        }
        Ok(())
    }
}
