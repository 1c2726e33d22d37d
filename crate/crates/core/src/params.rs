//! Parameter declaration.
//!
//! Every block declares its parameters through a [`ParamProvider`]. The same
//! declaration code loads weights from a store, enumerates the expected names,
//! and draws seeded random initial values, so the three never drift apart.
//!
//! Convolutions own `<name>.weight` `(c_out, c_in, kh, kw)` and `<name>.bias`
//! `(1, c_out, 1, 1)`. Batch norms own `<name>.scale`, `.shift`,
//! `.running_mean` and `.running_var`, each `(1, c, 1, 1)`.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{BatchNormParams, ConvParams};
use crate::tensor::{Shape, Tensor};
use crate::weights::WeightStore;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamKind {
    ConvWeight { fan_in: usize },
    ConvBias { fan_in: usize },
    BnScale,
    BnShift,
    BnMean,
    BnVar,
}

pub trait ParamProvider {
    fn take(&mut self, name: &str, shape: Shape, kind: ParamKind) -> Result<Tensor>;

    /// Epsilon given to every batch norm built through this provider.
    fn bn_epsilon(&self) -> f32;
}

pub fn conv(
    p: &mut dyn ParamProvider,
    name: &str,
    c_out: usize,
    c_in: usize,
    kernel: (usize, usize),
) -> Result<ConvParams> {
    let (kh, kw) = kernel;
    let fan_in = c_in * kh * kw;
    let weight = p.take(
        &format!("{name}.weight"),
        Shape::new(c_out, c_in, kh, kw),
        ParamKind::ConvWeight { fan_in },
    )?;
    let bias = p.take(
        &format!("{name}.bias"),
        Shape::new(1, c_out, 1, 1),
        ParamKind::ConvBias { fan_in },
    )?;
    ConvParams::new(weight, Some(bias.into_data()), 1, (kh / 2, kw / 2))
}

pub fn batch_norm(p: &mut dyn ParamProvider, name: &str, channels: usize) -> Result<BatchNormParams> {
    let shape = Shape::new(1, channels, 1, 1);
    let mut vec =
        |suffix: &str, kind| -> Result<Vec<f32>> { Ok(p.take(&format!("{name}.{suffix}"), shape, kind)?.into_data()) };
    let scale = vec("scale", ParamKind::BnScale)?;
    let shift = vec("shift", ParamKind::BnShift)?;
    let mean = vec("running_mean", ParamKind::BnMean)?;
    let var = vec("running_var", ParamKind::BnVar)?;
    BatchNormParams::new(scale, shift, mean, var, p.bn_epsilon()).map_err(|e| match e {
        Error::InvalidArgument { msg, .. } => Error::Config(format!("batch norm `{name}`: {msg}")),
        other => other,
    })
}

/// Pulls parameters out of a [`WeightStore`], checking dims.
pub struct StoreProvider<'a> {
    store: &'a WeightStore,
    used: HashSet<&'a str>,
    epsilon: f32,
}

impl<'a> StoreProvider<'a> {
    pub fn new(store: &'a WeightStore, epsilon: f32) -> Self {
        StoreProvider {
            store,
            used: HashSet::new(),
            epsilon,
        }
    }

    /// Fails if the store holds names nobody asked for.
    pub fn finish(self) -> Result<()> {
        match self.store.names().find(|n| !self.used.contains(n)) {
            Some(extra) => Err(Error::UnexpectedParameter(extra.to_string())),
            None => Ok(()),
        }
    }
}

impl ParamProvider for StoreProvider<'_> {
    fn take(&mut self, name: &str, shape: Shape, _kind: ParamKind) -> Result<Tensor> {
        let (key, t) = self
            .store
            .get_key_value(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?;
        if t.shape() != shape {
            return Err(Error::ParameterDims {
                name: name.to_string(),
                expected: shape,
                found: t.shape(),
            });
        }
        self.used.insert(key);
        Ok(t.clone())
    }

    fn bn_epsilon(&self) -> f32 {
        self.epsilon
    }
}

/// Records `(name, dims)` in declaration order and hands out zeros.
#[derive(Default)]
pub struct SpecCollector {
    pub specs: Vec<(String, Shape, ParamKind)>,
}

impl ParamProvider for SpecCollector {
    fn take(&mut self, name: &str, shape: Shape, kind: ParamKind) -> Result<Tensor> {
        self.specs.push((name.to_string(), shape, kind));
        Ok(Tensor::zeros(shape))
    }

    fn bn_epsilon(&self) -> f32 {
        1e-5
    }
}

/// How a [`FillProvider`] generates values.
#[derive(Clone, Copy, Debug)]
pub enum Fill {
    /// Every parameter zero, including batch-norm variances.
    Zeros,
    /// Seeded draws from a ChaCha8 stream, in declaration order.
    Seeded(u64),
}

/// Generates parameters and collects them into a new store.
pub struct FillProvider {
    rng: Option<ChaCha8Rng>,
    epsilon: f32,
    pub store: WeightStore,
}

impl FillProvider {
    pub fn new(fill: Fill, epsilon: f32) -> Self {
        let rng = match fill {
            Fill::Zeros => None,
            Fill::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        FillProvider {
            rng,
            epsilon,
            store: WeightStore::new(),
        }
    }
}

impl ParamProvider for FillProvider {
    /// Seeded values: conv weights and biases `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// BN scale `U(0.5, 1.5)`, shift and mean `U(-0.1, 0.1)`, var `U(0.5, 1.5)`.
    fn take(&mut self, name: &str, shape: Shape, kind: ParamKind) -> Result<Tensor> {
        let t = match &mut self.rng {
            None => Tensor::zeros(shape),
            Some(rng) => {
                let (lo, hi) = match kind {
                    ParamKind::ConvWeight { fan_in } | ParamKind::ConvBias { fan_in } => {
                        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
                        (-bound, bound)
                    }
                    ParamKind::BnScale | ParamKind::BnVar => (0.5, 1.5),
                    ParamKind::BnShift | ParamKind::BnMean => (-0.1, 0.1),
                };
                let data = (0..shape.numel()).map(|_| rng.random_range(lo..hi)).collect();
                Tensor::from_parts(shape, data)
            }
        };
        self.store.insert(name, t.clone())?;
        Ok(t)
    }

    fn bn_epsilon(&self) -> f32 {
        self.epsilon
    }
}
