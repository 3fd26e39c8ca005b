//! Fully connected layer stacks with tanh hidden activations and a linear
//! output layer.

use crate::error::{check_dim, Result};
use crate::numerics::matrix::{axpy, Matrix};
use crate::numerics::SeededRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Uniform fan-in initialisation in `±1/√in`, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut SeededRng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut weight = Matrix::zeros(outputs, inputs);
        for w in weight.as_mut_slice() {
            *w = rng.uniform(-bound, bound);
        }
        Dense {
            weight,
            bias: vec![0.0; outputs],
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x).expect("checked by Mlp");
        axpy(1.0, &self.bias, &mut y);
        y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer inputs and the linear output recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl Mlp {
    /// `sizes = [in, h1, ..., out]`.
    pub fn init(sizes: &[usize], rng: &mut SeededRng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        Mlp {
            layers: sizes
                .windows(2)
                .map(|w| Dense::init(w[0], w[1], rng))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    /// Single linear layer with identity weight and zero bias.
    pub fn identity(dim: usize) -> Self {
        Mlp {
            layers: vec![Dense {
                weight: Matrix::identity(dim),
                bias: vec![0.0; dim],
            }],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(Dense::outputs));
        s
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x)?.output)
    }

    pub fn trace(&self, x: &[f64]) -> Result<Trace> {
        check_dim(self.input_dim(), x.len())?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h);
            inputs.push(h);
            if l < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            h = y;
        }
        Ok(Trace { inputs, output: h })
    }

    /// Backpropagates `grad_out` (gradient w.r.t. the linear output),
    /// accumulating parameter gradients into `grads`. Returns the gradient
    /// w.r.t. the input.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Mlp) -> Vec<f64> {
        let mut g = grad_out.to_vec();
        for l in (0..self.layers.len()).rev() {
            let input = &trace.inputs[l];
            let gl = &mut grads.layers[l];
            gl.weight.add_outer(1.0, &g, input).expect("dims");
            axpy(1.0, &g, &mut gl.bias);
            let mut gin = self.layers[l].weight.matvec_t(&g).expect("dims");
            if l > 0 {
                // input to layer l is tanh of layer l-1's pre-activation
                for (gi, a) in gin.iter_mut().zip(input) {
                    *gi *= 1.0 - a * a;
                }
            }
            g = gin;
        }
        g
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
    }
}
