use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Named parameters, in construction order, each with a gradient slot.
///
/// `generation` advances whenever parameter values change, which lets a
/// backward pass detect intermediates recorded against older values.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    grads: Vec<Tensor<T>>,
    seed: u64,
    generation: u64,
}

impl<T: Real> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            seed,
            generation: 0,
        }
    }

    /// Adds a parameter and returns its slot index.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::State(format!("duplicate parameter `{name}`")));
        }
        self.grads.push(Tensor::zeros(value.shape()));
        self.values.push(value);
        self.names.push(name);
        self.generation += 1;
        Ok(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, i: usize) -> &Tensor<T> {
        &self.values[i]
    }

    pub fn grad(&self, i: usize) -> &Tensor<T> {
        &self.grads[i]
    }

    pub fn grad_mut(&mut self, i: usize) -> &mut Tensor<T> {
        &mut self.grads[i]
    }

    pub fn values(&self) -> &[Tensor<T>] {
        &self.values
    }

    pub fn grads(&self) -> &[Tensor<T>] {
        &self.grads
    }

    /// Mutable access to a parameter's values; shape stays fixed.
    pub fn value_mut(&mut self, i: usize) -> &mut [T] {
        self.generation += 1;
        self.values[i].data_mut()
    }

    /// Value and gradient of one slot, value mutable.
    pub(crate) fn value_and_grad_mut(&mut self, i: usize) -> (&mut [T], &[T]) {
        self.generation += 1;
        (self.values[i].data_mut(), self.grads[i].data())
    }

    /// Replace a parameter's values with a tensor of identical shape.
    pub fn set_value(&mut self, i: usize, value: Tensor<T>) -> Result<()> {
        if value.shape() != self.values[i].shape() {
            return Err(Error::dim(format!(
                "parameter `{}` has shape {:?}, got {:?}",
                self.names[i],
                self.values[i].shape(),
                value.shape()
            )));
        }
        self.values[i] = value;
        self.generation += 1;
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(T::zero());
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// Same names, shapes and values in another float width.
    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            grads: self.grads.iter().map(Tensor::cast).collect(),
            seed: self.seed,
            generation: self.generation,
        }
    }

    /// Parameters bit-identical (gradients ignored).
    pub fn same_values(&self, other: &ParamStore<T>) -> bool {
        self.names == other.names
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| {
                    a.shape() == b.shape()
                        && a.data()
                            .iter()
                            .zip(b.data())
                            .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
                })
    }
}
