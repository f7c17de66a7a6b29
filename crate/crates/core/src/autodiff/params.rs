use super::graph::Env;
use super::tensor::Tensor;
use super::AutodiffError;
use crate::Scalar;

/// Named parameter tensors in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor<T>) -> Result<(), AutodiffError> {
        if self.get(name).is_some() {
            return Err(AutodiffError::DuplicateParam(name.to_string()));
        }
        self.entries.push((name.to_string(), t));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), Tensor::zeros(t.shape())))
                .collect(),
        }
    }

    fn check_same_layout(&self, other: &Self) -> Result<(), AutodiffError> {
        if self.entries.len() != other.entries.len() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "parameter sets of {} and {} tensors",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for ((na, ta), (nb, tb)) in self.entries.iter().zip(&other.entries) {
            if na != nb || ta.shape() != tb.shape() {
                return Err(AutodiffError::ShapeMismatch(format!(
                    "parameter '{na}' {:?} vs '{nb}' {:?}",
                    ta.shape(),
                    tb.shape()
                )));
            }
        }
        Ok(())
    }

    /// `self += scale · other`, tensor by tensor.
    pub fn axpy(&mut self, scale: T, other: &Self) -> Result<(), AutodiffError> {
        self.check_same_layout(other)?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            for (x, &y) in a.data_mut().iter_mut().zip(b.data()) {
                *x = *x + scale * y;
            }
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T, AutodiffError> {
        self.check_same_layout(other)?;
        Ok(self
            .entries
            .iter()
            .zip(&other.entries)
            .flat_map(|((_, a), (_, b))| {
                a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).abs())
            })
            .fold(T::zero(), T::max))
    }
}

impl<T: Scalar> Env<T> for ParamSet<T> {
    fn lookup(&self, name: &str) -> Option<&Tensor<T>> {
        self.get(name)
    }
}
