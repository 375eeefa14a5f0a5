use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Named, owned parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<T>,
}

/// Index of a parameter inside its [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

/// Ordered collection of a model's parameters.
///
/// The graph is rebuilt each forward pass: [`ParamSet::leaves`] materializes
/// fresh leaf tensors, and after `backward()` their gradients are read back
/// with [`ParamSet::collect_grads`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], values: Vec<T>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), values.len());
        self.params.push(Parameter {
            name: name.into(),
            shape: shape.to_vec(),
            values,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.values.len()).sum()
    }

    /// One tensor per parameter; trainable leaves when `trainable`, constants otherwise.
    pub fn leaves(&self, trainable: bool) -> Vec<Tensor<T>> {
        self.params
            .iter()
            .map(|p| {
                let t = if trainable {
                    Tensor::param(p.values.clone(), &p.shape)
                } else {
                    Tensor::new(p.values.clone(), &p.shape)
                };
                t.expect("parameter buffers always match their shape")
            })
            .collect()
    }

    pub fn collect_grads(leaves: &[Tensor<T>]) -> Vec<Option<Vec<T>>> {
        leaves.iter().map(Tensor::grad).collect()
    }

    /// Replaces values of parameters with matching names.
    pub fn load_values(&mut self, name: &str, shape: &[usize], values: Vec<T>) -> Result<()> {
        let p = self
            .params
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::contract(format!("unknown parameter {name}")))?;
        if p.shape != shape || values.len() != p.values.len() {
            return Err(Error::shape(format!(
                "parameter {name}: expected shape {:?}, got {shape:?}",
                p.shape
            )));
        }
        p.values = values;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.values.iter().all(|v| v.is_finite()))
    }
}
