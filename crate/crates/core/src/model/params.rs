use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::{Real, Tensor};

/// Standard deviation of the truncated normal used for weights.
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Init {
    /// Truncated normal, resampled outside two standard deviations.
    Normal,
    Zeros,
    Ones,
}

/// Records parameter names, shapes and initializers in creation order.
#[derive(Debug, Default)]
pub(crate) struct Builder {
    pub names: Vec<String>,
    pub shapes: Vec<Vec<usize>>,
    pub inits: Vec<Init>,
}

impl Builder {
    pub fn add(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> usize {
        self.names.push(name.into());
        self.shapes.push(shape.to_vec());
        self.inits.push(init);
        self.names.len() - 1
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub(crate) fn init<R: Rng>(builder: &Builder, rng: &mut R) -> Self {
        let tensors = builder
            .shapes
            .iter()
            .zip(&builder.inits)
            .map(|(shape, init)| {
                let n: usize = shape.iter().product();
                let data = match init {
                    Init::Zeros => vec![T::zero(); n],
                    Init::Ones => vec![T::one(); n],
                    Init::Normal => (0..n)
                        .map(|_| T::of(truncated_normal(rng) * INIT_STD))
                        .collect(),
                };
                Tensor::new(shape.clone(), data).expect("builder shapes are positive")
            })
            .collect();
        Self {
            names: builder.names.clone(),
            tensors,
        }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }
}

fn truncated_normal<R: Rng>(rng: &mut R) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}
