use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{CubicResampler, Scale};
use crate::rng::rng_from;
use crate::tensor::{Real, Tensor};

use super::layers::{backward_ops, forward_ops, Cache, ConvOp, Op, Pins};
use super::params::ParamStore;
use super::spec::{Family, NetworkSpec};

/// Standard deviation of the Gaussian weight initialization.
pub const INIT_STD: f64 = 0.02;

/// A built layer stack. Holds structure only; values live in a
/// [`ParamStore`], so one network can drive several parameter sets.
#[derive(Clone, Debug)]
pub struct Network {
    spec: Option<NetworkSpec>,
    ops: Vec<Op>,
    /// Hard residual: the output adds a bicubic resampling of the input.
    skip: Option<Scale>,
    input_multiple: usize,
}

/// Intermediates retained by [`Network::forward`] for one backward pass.
pub struct Tape<T> {
    generation: u64,
    caches: Vec<Cache<T>>,
    skip: Option<CubicResampler>,
    output_shape: Vec<usize>,
}

impl<T> Tape<T> {
    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }
}

struct Builder<T> {
    params: ParamStore<T>,
    rng: rand_chacha::ChaCha8Rng,
    normal: Normal<f64>,
}

impl<T: Real> Builder<T> {
    fn new(seed: u64) -> Self {
        Builder {
            params: ParamStore::new(seed),
            rng: rng_from(seed),
            normal: Normal::new(0.0, INIT_STD).expect("valid std"),
        }
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, pad: usize) -> Result<Op> {
        let fan = cin * k * k;
        let w: Vec<T> = (0..cout * fan)
            .map(|_| T::from_f64(self.normal.sample(&mut self.rng)))
            .collect();
        let weight = self.params.push(format!("{name}.weight"), Tensor::from_vec(&[cout, fan], w)?)?;
        let bias = self.params.push(format!("{name}.bias"), Tensor::zeros(&[cout]))?;
        Ok(Op::Conv(ConvOp {
            weight,
            bias,
            cin,
            cout,
            k,
            stride,
            pad,
        }))
    }

    /// Same-size conv with odd kernel.
    fn same(&mut self, name: &str, cin: usize, cout: usize, k: usize) -> Result<Op> {
        self.conv(name, cin, cout, k, 1, k / 2)
    }
}

impl Network {
    /// Build a network of the given family with deterministically
    /// initialized parameters: weights ~ N(0, 0.02²), biases zero.
    pub fn build<T: Real>(spec: NetworkSpec, seed: u64) -> Result<(Network, ParamStore<T>)> {
        spec.validate()?;
        let c = spec.base_channels;
        let mut b = Builder::<T>::new(seed);
        let mut ops = Vec::new();
        let skip = match spec.family {
            Family::TranslatorGen => {
                ops.push(b.same("in", 3, c, 7)?);
                ops.extend([Op::InstanceNorm, Op::Relu]);
                ops.push(b.conv("down1", c, 2 * c, 3, 2, 1)?);
                ops.extend([Op::InstanceNorm, Op::Relu]);
                ops.push(b.conv("down2", 2 * c, 4 * c, 3, 2, 1)?);
                ops.extend([Op::InstanceNorm, Op::Relu]);
                for i in 0..spec.residual_blocks {
                    let a = b.same(&format!("res{i}.a"), 4 * c, 4 * c, 3)?;
                    let z = b.same(&format!("res{i}.b"), 4 * c, 4 * c, 3)?;
                    ops.push(Op::Residual(vec![a, Op::InstanceNorm, Op::Relu, z, Op::InstanceNorm]));
                }
                ops.push(Op::Upsample2x);
                ops.push(b.same("up1", 4 * c, 2 * c, 3)?);
                ops.extend([Op::InstanceNorm, Op::Relu]);
                ops.push(Op::Upsample2x);
                ops.push(b.same("up2", 2 * c, c, 3)?);
                ops.extend([Op::InstanceNorm, Op::Relu]);
                ops.push(b.same("out", c, 3, 7)?);
                ops.push(Op::Tanh);
                None
            }
            Family::PatchDisc => {
                ops.push(b.conv("d1", 3, c, 4, 2, 1)?);
                ops.push(Op::LeakyRelu);
                ops.push(b.conv("d2", c, 2 * c, 4, 2, 1)?);
                ops.push(Op::LeakyRelu);
                ops.push(b.conv("d3", 2 * c, 4 * c, 4, 2, 1)?);
                ops.push(Op::LeakyRelu);
                ops.push(b.same("head", 4 * c, 1, 3)?);
                None
            }
            Family::Dsn => {
                ops.push(b.same("in", 3, c, 3)?);
                ops.push(Op::Relu);
                ops.push(b.conv("down1", c, c, 3, 2, 1)?);
                ops.push(Op::Relu);
                ops.push(b.conv("down2", c, c, 3, 2, 1)?);
                ops.push(Op::Relu);
                for i in 0..spec.residual_blocks {
                    let a = b.same(&format!("res{i}.a"), c, c, 3)?;
                    let z = b.same(&format!("res{i}.b"), c, c, 3)?;
                    ops.push(Op::Residual(vec![a, Op::Relu, z]));
                }
                ops.push(b.same("out", c, 3, 3)?);
                Some(Scale::QUARTER)
            }
            Family::Srn => {
                ops.push(b.same("in", 3, c, 3)?);
                for i in 0..spec.residual_blocks {
                    let a = b.same(&format!("res{i}.a"), c, c, 3)?;
                    let z = b.same(&format!("res{i}.b"), c, c, 3)?;
                    ops.push(Op::Residual(vec![a, Op::Relu, z]));
                }
                ops.push(Op::Upsample2x);
                ops.push(b.same("up1", c, c, 3)?);
                ops.push(Op::Relu);
                ops.push(Op::Upsample2x);
                ops.push(b.same("up2", c, c, 3)?);
                ops.push(Op::Relu);
                ops.push(b.same("out", c, 3, 3)?);
                Some(Scale::FOUR)
            }
        };
        let net = Network {
            spec: Some(spec),
            ops,
            skip,
            input_multiple: spec.family.input_multiple(),
        };
        Ok((net, b.params))
    }

    /// A single `k×k` same-padded convolution with no nonlinearity.
    pub fn linear<T: Real>(cin: usize, cout: usize, k: usize, seed: u64) -> Result<(Network, ParamStore<T>)> {
        if k % 2 == 0 {
            return Err(Error::dim("linear probe needs an odd kernel"));
        }
        let mut b = Builder::<T>::new(seed);
        let op = b.same("conv", cin, cout, k)?;
        Ok((
            Network {
                spec: None,
                ops: vec![op],
                skip: None,
                input_multiple: 1,
            },
            b.params,
        ))
    }

    pub fn spec(&self) -> Option<NetworkSpec> {
        self.spec
    }

    fn check_input<T: Real>(&self, x: &Tensor<T>) -> Result<()> {
        match self.spec {
            Some(spec) => spec.output_shape(x.shape()).map(|_| ()),
            None => {
                let (_, _, h, w) = x.dims4()?;
                if h % self.input_multiple != 0 || w % self.input_multiple != 0 {
                    return Err(Error::dim("input size incompatible with network strides"));
                }
                Ok(())
            }
        }
    }

    fn run<T: Real>(
        &self,
        params: &ParamStore<T>,
        x: &Tensor<T>,
        record: bool,
        pins: &mut Pins<'_>,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        self.check_input(x)?;
        let (mut y, caches) = forward_ops(&self.ops, params, x, record, pins)?;
        let skip = match self.skip {
            Some(scale) => {
                let (_, _, h, w) = x.dims4()?;
                let r = CubicResampler::new(h, w, scale)?;
                let base = r.forward(x)?;
                if base.shape() != y.shape() {
                    return Err(Error::dim("residual head does not match the trunk output"));
                }
                y.add_assign(&base);
                Some(r)
            }
            None => None,
        };
        let tape = Tape {
            generation: params.generation(),
            caches,
            skip,
            output_shape: y.shape().to_vec(),
        };
        Ok((y, tape))
    }

    /// Forward pass retaining intermediates. Does not touch `params`.
    pub fn forward<T: Real>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        self.run(params, x, true, &mut Pins::Off)
    }

    /// Forward pass without retention.
    pub fn infer<T: Real>(&self, params: &ParamStore<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(params, x, false, &mut Pins::Off)?.0)
    }

    /// Forward pass that records (or replays) activation branch masks.
    pub(crate) fn run_pinned<T: Real>(
        &self,
        params: &ParamStore<T>,
        x: &Tensor<T>,
        pins: &mut Pins<'_>,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        self.run(params, x, true, pins)
    }

    /// Accumulate parameter gradients for `output_grad` into the gradient
    /// slots of `params`, returning the input gradient when requested.
    ///
    /// Fails with a state error when `params` changed since the forward pass.
    pub fn backward<T: Real>(
        &self,
        params: &mut ParamStore<T>,
        tape: Tape<T>,
        output_grad: &Tensor<T>,
        want_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        if tape.generation != params.generation() {
            return Err(Error::State(
                "intermediates were recorded against different parameter values".into(),
            ));
        }
        if output_grad.shape() != tape.output_shape.as_slice() {
            return Err(Error::dim(format!(
                "output gradient {:?} does not match output {:?}",
                output_grad.shape(),
                tape.output_shape
            )));
        }
        let dx = backward_ops(&self.ops, params, tape.caches, output_grad.clone(), want_input_grad)?;
        match (tape.skip, dx) {
            (Some(r), Some(mut dx)) => {
                dx.add_assign(&r.adjoint(output_grad)?);
                Ok(Some(dx))
            }
            (_, dx) => Ok(dx),
        }
    }
}
