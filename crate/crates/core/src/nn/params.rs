use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Result, SamcError};
use crate::tensor::Scalar;

/// Index of a parameter array inside a [`Params`] set.
pub type ParamId = usize;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named parameter arrays of one network, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub arrays: Vec<NamedArray<T>>,
}

impl<T: Scalar> Params<T> {
    pub fn get(&self, id: ParamId) -> &[T] {
        &self.arrays[id].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [T] {
        &mut self.arrays[id].data
    }

    pub fn by_name(&self, name: &str) -> Option<&NamedArray<T>> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn by_name_mut(&mut self, name: &str) -> Option<&mut NamedArray<T>> {
        self.arrays.iter_mut().find(|a| a.name == name)
    }

    pub fn zeros_like(&self) -> Self {
        Params {
            arrays: self
                .arrays
                .iter()
                .map(|a| NamedArray {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    data: vec![T::zero(); a.data.len()],
                })
                .collect(),
        }
    }

    pub fn num_values(&self) -> usize {
        self.arrays.iter().map(|a| a.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.arrays
            .iter()
            .all(|a| a.data.iter().all(|v| v.is_finite()))
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.arrays
            .iter()
            .map(|a| (a.name.clone(), a.shape.clone()))
            .collect()
    }

    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            arrays: self
                .arrays
                .iter()
                .map(|a| NamedArray {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    data: a.data.iter().map(|v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Replace every array's values with `other`'s after checking names and shapes agree.
    pub fn assign_from(&mut self, other: &Params<T>) -> Result<()> {
        if self.shapes() != other.shapes() {
            return Err(SamcError::Shape(
                "parameter sets differ in names or shapes".into(),
            ));
        }
        for (dst, src) in self.arrays.iter_mut().zip(&other.arrays) {
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

/// Registers parameters with normal(0, 0.02) weights and zero biases drawn
/// from one seeded stream, so a network is a pure function of its seed.
pub struct ParamBuilder {
    rng: ChaCha8Rng,
    arrays: Vec<NamedArray<f64>>,
}

impl ParamBuilder {
    pub fn new(seed: u64) -> Self {
        ParamBuilder {
            rng: ChaCha8Rng::seed_from_u64(seed),
            arrays: Vec::new(),
        }
    }

    pub fn normal(&mut self, name: impl Into<String>, shape: &[usize], std: f64) -> ParamId {
        let len = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("valid std");
        let data = (0..len).map(|_| dist.sample(&mut self.rng)).collect();
        self.push(name.into(), shape, data)
    }

    pub fn zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> ParamId {
        let len = shape.iter().product();
        self.push(name.into(), shape, vec![0.0; len])
    }

    fn push(&mut self, name: String, shape: &[usize], data: Vec<f64>) -> ParamId {
        self.arrays.push(NamedArray {
            name,
            shape: shape.to_vec(),
            data,
        });
        self.arrays.len() - 1
    }

    pub fn finish<T: Scalar>(self) -> Params<T> {
        Params {
            arrays: self
                .arrays
                .into_iter()
                .map(|a| NamedArray {
                    name: a.name,
                    shape: a.shape,
                    data: a.data.into_iter().map(T::lit).collect(),
                })
                .collect(),
        }
    }
}
