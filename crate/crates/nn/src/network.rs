use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{NnError, Result};
use crate::layer::{Aux, Layer};
use crate::tensor::Tensor;

/// A named parameter tensor and whether the optimizer may touch it.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub tensor: Tensor,
    pub trainable: bool,
}

/// Activations recorded by a forward pass, consumed by [`Network::backprop`].
#[derive(Debug, Clone)]
pub struct Trace {
    shapes: Vec<Vec<usize>>,
    acts: Vec<Vec<f64>>,
    aux: Vec<Aux>,
}

impl Trace {
    pub fn output(&self) -> Tensor {
        Tensor::new(
            self.shapes.last().cloned().unwrap_or_default(),
            self.acts.last().cloned().unwrap_or_default(),
        )
        .expect("trace keeps shapes and buffers in sync")
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }
}

/// Result of a backward pass. `param_grads[i]` is `None` for frozen params.
#[derive(Debug, Clone)]
pub struct Backprop {
    pub param_grads: Vec<Option<Vec<f64>>>,
    pub input_grad: Tensor,
}

/// A feed-forward chain of layers with its parameters.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    params: Vec<Param>,
    /// For each layer, the index of its first parameter.
    offsets: Vec<usize>,
    retained: Option<Trace>,
}

/// Networks compare by architecture and parameters; a retained trace is ignored.
impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.params == other.params
    }
}

impl Network {
    /// Builds a network with He-normal weights and zero biases.
    pub fn init<R: Rng + ?Sized>(layers: Vec<Layer>, rng: &mut R) -> Result<Self> {
        let mut params = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            let shapes = layer.param_shapes();
            if shapes.is_empty() {
                continue;
            }
            let std = (2.0 / layer.fan_in() as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let w_shape = shapes[0].clone();
            let n: usize = w_shape.iter().product();
            let w: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
            params.push(Param {
                name: format!("layer{i}.weight"),
                tensor: Tensor::new(w_shape, w)?,
                trainable: true,
            });
            params.push(Param {
                name: format!("layer{i}.bias"),
                tensor: Tensor::zeros(shapes[1].clone()),
                trainable: true,
            });
        }
        Self::from_parts(layers, params)
    }

    /// Assembles a network from explicit parameters, checking their shapes.
    pub fn from_parts(layers: Vec<Layer>, params: Vec<Param>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(layers.len());
        let mut next = 0;
        for layer in &layers {
            layer.validate()?;
            offsets.push(next);
            for shape in layer.param_shapes() {
                let p = params.get(next).ok_or_else(|| {
                    NnError::Shape(format!("missing parameter for {}", layer.kind()))
                })?;
                if p.tensor.shape() != shape.as_slice() {
                    return Err(NnError::Shape(format!(
                        "parameter {} has shape {:?}, layer needs {shape:?}",
                        p.name,
                        p.tensor.shape()
                    )));
                }
                next += 1;
            }
        }
        if next != params.len() {
            return Err(NnError::Shape(format!(
                "{} parameters supplied, layers use {next}",
                params.len()
            )));
        }
        Ok(Self {
            layers,
            params,
            offsets,
            retained: None,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Number of layers that carry weights.
    pub fn weighted_layers(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| !l.param_shapes().is_empty())
            .count()
    }

    pub fn set_trainable(&mut self, trainable: bool) {
        for p in &mut self.params {
            p.trainable = trainable;
        }
    }

    /// Marks every parameter group frozen and drops any gradient buffers.
    pub fn freeze(&mut self) {
        for p in &mut self.params {
            p.trainable = false;
            p.tensor.clear_grad();
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.params.iter().all(|p| !p.trainable)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.tensor.clear_grad();
        }
    }

    /// Checks that `input` chains through every layer and returns the output shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mut shape = input.to_vec();
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
        }
        Ok(shape)
    }

    fn layer_params(&self, i: usize) -> Vec<&[f64]> {
        let n = self.layers[i].param_shapes().len();
        self.params[self.offsets[i]..self.offsets[i] + n]
            .iter()
            .map(|p| p.tensor.data())
            .collect()
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut shape = input.shape().to_vec();
        let mut act = input.data().to_vec();
        let mut aux = Aux::default();
        for (i, layer) in self.layers.iter().enumerate() {
            let out_shape = layer.output_shape(&shape)?;
            act = layer.forward(&self.layer_params(i), &act, &shape, &out_shape, &mut aux);
            shape = out_shape;
        }
        Tensor::new(shape, act)
    }

    /// Forward pass that keeps every intermediate activation.
    pub fn forward_trace(&self, input: &Tensor) -> Result<Trace> {
        let mut shapes = vec![input.shape().to_vec()];
        let mut acts = vec![input.data().to_vec()];
        let mut auxes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let in_shape = shapes.last().unwrap();
            let out_shape = layer.output_shape(in_shape)?;
            let mut aux = Aux::default();
            let out = layer.forward(
                &self.layer_params(i),
                acts.last().unwrap(),
                in_shape,
                &out_shape,
                &mut aux,
            );
            shapes.push(out_shape);
            acts.push(out);
            auxes.push(aux);
        }
        Ok(Trace {
            shapes,
            acts,
            aux: auxes,
        })
    }

    /// Reverse pass through a recorded trace. Only trainable parameters get
    /// gradients; the input gradient is always computed so that gradients can
    /// flow through a frozen network into whatever produced its input.
    pub fn backprop(&self, trace: &Trace, out_grad: &Tensor) -> Result<Backprop> {
        let out_shape = trace.shapes.last().unwrap();
        if out_grad.shape() != out_shape.as_slice() {
            return Err(NnError::Shape(format!(
                "output gradient {:?} does not match output {out_shape:?}",
                out_grad.shape()
            )));
        }
        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.params.len()];
        let mut grad = out_grad.data().to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let n_params = layer.param_shapes().len();
            let want = (0..n_params).any(|j| self.params[self.offsets[i] + j].trainable);
            let (gi, pg) = layer.backward(
                &self.layer_params(i),
                &trace.acts[i],
                &trace.shapes[i],
                &trace.acts[i + 1],
                &trace.shapes[i + 1],
                &trace.aux[i],
                &grad,
                want,
            );
            for (j, g) in pg.into_iter().enumerate() {
                let idx = self.offsets[i] + j;
                if self.params[idx].trainable {
                    param_grads[idx] = Some(g);
                }
            }
            grad = gi;
        }
        Ok(Backprop {
            param_grads,
            input_grad: Tensor::new(trace.shapes[0].clone(), grad)?,
        })
    }

    /// Forward pass that retains activations for a following [`Network::backward`].
    pub fn forward_retain(&mut self, input: &Tensor) -> Result<Tensor> {
        let trace = self.forward_trace(input)?;
        let out = trace.output();
        self.retained = Some(trace);
        Ok(out)
    }

    /// Backpropagates `loss_grad` through the retained forward pass,
    /// accumulating into the gradient slots of trainable parameters.
    /// Returns the gradient with respect to the network input.
    pub fn backward(&mut self, loss_grad: &Tensor) -> Result<Tensor> {
        let trace = self.retained.take().ok_or(NnError::NoTrace)?;
        let bp = self.backprop(&trace, loss_grad)?;
        self.accumulate(&bp.param_grads);
        Ok(bp.input_grad)
    }

    /// Adds externally computed gradients into the parameter slots.
    pub fn accumulate(&mut self, grads: &[Option<Vec<f64>>]) {
        for (p, g) in self.params.iter_mut().zip(grads) {
            if let (true, Some(g)) = (p.trainable, g) {
                p.tensor.accumulate_grad(g);
            }
        }
    }
}
