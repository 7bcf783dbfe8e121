//! Dense row-major `f64` tensors, parameter storage, and initialization.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

use crate::error::{CoreError, Result};

/// A dense tensor of 64-bit reals in row-major layout.
///
/// Every dimension is positive and `data.len()` always equals the product of
/// the shape entries.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor from explicit shape and data, validating both.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        validate_shape(shape)?;
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(CoreError::InvalidShape(alloc::format!(
                "data length {} does not match shape {:?} (expects {})",
                data.len(),
                shape,
                numel
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// All-zero tensor. Panics on an empty or zero-sized shape; use
    /// [`init_parameters`] for validated construction.
    pub fn zeros(shape: &[usize]) -> Self {
        validate_shape(shape).expect("Tensor::zeros requires a valid shape");
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    /// Rank-0-like scalar, represented as shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a single-element tensor.
    pub fn scalar_value(&self) -> f64 {
        assert!(self.is_scalar(), "tensor is not a scalar: {:?}", self.shape);
        self.data[0]
    }

    /// Row `r` of a rank-2 tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        assert_eq!(self.rank(), 2, "row() requires a rank-2 tensor");
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn validate_shape(shape: &[usize]) -> Result<()> {
    if shape.is_empty() {
        return Err(CoreError::InvalidShape("empty shape".into()));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(CoreError::InvalidShape(alloc::format!(
            "zero-sized dimension in {shape:?}"
        )));
    }
    Ok(())
}

/// Parameter initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// I.i.d. uniform in `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
    UniformFan,
    /// All zeros (biases, initial recurrent states).
    Zeros,
}

/// Deterministic seeded initialization: the same seed always yields a
/// bitwise-identical tensor.
pub fn init_parameters(shape: &[usize], rng_seed: u64, scheme: InitScheme) -> Result<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    init_with_rng(shape, &mut rng, scheme)
}

/// Initialization that threads an existing RNG (used when building a whole
/// model from one master seed).
pub fn init_with_rng(shape: &[usize], rng: &mut ChaCha8Rng, scheme: InitScheme) -> Result<Tensor> {
    validate_shape(shape)?;
    let numel: usize = shape.iter().product();
    let data = match scheme {
        InitScheme::Zeros => vec![0.0; numel],
        InitScheme::UniformFan => {
            // For matrices mapping fan_in -> fan_out, fan_out is the leading
            // dimension; a rank-1 shape is treated as fan_in = fan_out.
            let fan_out = shape[0];
            let fan_in: usize = if shape.len() == 1 {
                shape[0]
            } else {
                shape[1..].iter().product()
            };
            let a = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
            (0..numel).map(|_| rng.random_range(-a..=a)).collect()
        }
    };
    Tensor::from_vec(shape, data)
}

/// Named model parameters with deterministic iteration order.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    map: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.map.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.map.get_mut(name)
    }

    /// Fetches a parameter that must exist.
    pub fn expect(&self, name: &str) -> &Tensor {
        self.map
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name:?}"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.map.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn entry_count(&self) -> usize {
        self.map.values().map(Tensor::numel).sum()
    }
}
