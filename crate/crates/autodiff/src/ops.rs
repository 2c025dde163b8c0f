use std::fmt;
use std::str::FromStr;

use crate::error::{AutodiffError, Result};
use crate::tape::{Tape, Var};

/// A named differentiable operation together with its static parameters.
///
/// This is the uniform entry point used by generic harnesses such as the
/// gradient checker; model code usually calls the [`Tape`] methods directly.
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Mul,
    Conv1d { stride: usize, padding: usize },
    Conv1dTranspose { stride: usize, padding: usize, output_padding: usize },
    LstmCell,
    MultiHeadAttention { heads: usize },
    LayerNorm,
    Softmax,
    Relu,
    Tanh,
    Sigmoid,
    MeanPoolTime,
    Reshape { shape: Vec<usize> },
    Concat { axis: usize },
    Slice { axis: usize, start: usize, end: usize },
}

impl OpKind {
    pub const NAMES: [&'static str; 16] = [
        "matmul",
        "add",
        "mul",
        "conv1d",
        "conv1d_transpose",
        "lstm_cell",
        "multi_head_attention",
        "layer_norm",
        "softmax",
        "relu",
        "tanh",
        "sigmoid",
        "mean_pool_time",
        "reshape",
        "concat",
        "slice",
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Conv1d { .. } => "conv1d",
            OpKind::Conv1dTranspose { .. } => "conv1d_transpose",
            OpKind::LstmCell => "lstm_cell",
            OpKind::MultiHeadAttention { .. } => "multi_head_attention",
            OpKind::LayerNorm => "layer_norm",
            OpKind::Softmax => "softmax",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Sigmoid => "sigmoid",
            OpKind::MeanPoolTime => "mean_pool_time",
            OpKind::Reshape { .. } => "reshape",
            OpKind::Concat { .. } => "concat",
            OpKind::Slice { .. } => "slice",
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a bare op name; parameterized ops get default parameters
/// (stride 1, no padding, one head, axis 0, empty reshape).
impl FromStr for OpKind {
    type Err = AutodiffError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "matmul" => OpKind::MatMul,
            "add" => OpKind::Add,
            "mul" => OpKind::Mul,
            "conv1d" => OpKind::Conv1d { stride: 1, padding: 0 },
            "conv1d_transpose" => OpKind::Conv1dTranspose {
                stride: 1,
                padding: 0,
                output_padding: 0,
            },
            "lstm_cell" => OpKind::LstmCell,
            "multi_head_attention" => OpKind::MultiHeadAttention { heads: 1 },
            "layer_norm" => OpKind::LayerNorm,
            "softmax" => OpKind::Softmax,
            "relu" => OpKind::Relu,
            "tanh" => OpKind::Tanh,
            "sigmoid" => OpKind::Sigmoid,
            "mean_pool_time" => OpKind::MeanPoolTime,
            "reshape" => OpKind::Reshape { shape: vec![] },
            "concat" => OpKind::Concat { axis: 0 },
            "slice" => OpKind::Slice {
                axis: 0,
                start: 0,
                end: 1,
            },
            other => {
                return Err(AutodiffError::InvalidHyperparameter(format!(
                    "unknown op `{other}`"
                )))
            }
        })
    }
}

fn arity(op: &'static str, inputs: &[Var], allowed: &[usize]) -> Result<()> {
    if allowed.contains(&inputs.len()) {
        Ok(())
    } else {
        Err(AutodiffError::Arity {
            op,
            expected: format!("{allowed:?}"),
            got: inputs.len(),
        })
    }
}

impl Tape {
    /// Records `op` applied to `inputs`.
    ///
    /// Convolutions accept an optional trailing bias; `lstm_cell` expects
    /// `[x, h, c, w_ih, w_hh, bias]` and attention `[x, wq, wk, wv, wo]`.
    pub fn apply(&mut self, op: &OpKind, inputs: &[Var]) -> Result<Var> {
        let name = op.name();
        match op {
            OpKind::MatMul => {
                arity(name, inputs, &[2])?;
                self.matmul(inputs[0], inputs[1])
            }
            OpKind::Add => {
                arity(name, inputs, &[2])?;
                self.add(inputs[0], inputs[1])
            }
            OpKind::Mul => {
                arity(name, inputs, &[2])?;
                self.mul(inputs[0], inputs[1])
            }
            &OpKind::Conv1d { stride, padding } => {
                arity(name, inputs, &[2, 3])?;
                self.conv1d(inputs[0], inputs[1], inputs.get(2).copied(), stride, padding)
            }
            &OpKind::Conv1dTranspose {
                stride,
                padding,
                output_padding,
            } => {
                arity(name, inputs, &[2, 3])?;
                self.conv1d_transpose(
                    inputs[0],
                    inputs[1],
                    inputs.get(2).copied(),
                    stride,
                    padding,
                    output_padding,
                )
            }
            OpKind::LstmCell => {
                arity(name, inputs, &[6])?;
                self.lstm_cell(inputs[0], inputs[1], inputs[2], inputs[3], inputs[4], inputs[5])
            }
            &OpKind::MultiHeadAttention { heads } => {
                arity(name, inputs, &[5])?;
                self.multi_head_attention(inputs[0], inputs[1], inputs[2], inputs[3], inputs[4], heads)
            }
            OpKind::LayerNorm => {
                arity(name, inputs, &[3])?;
                self.layer_norm(inputs[0], inputs[1], inputs[2])
            }
            OpKind::Softmax => {
                arity(name, inputs, &[1])?;
                Ok(self.softmax(inputs[0]))
            }
            OpKind::Relu => {
                arity(name, inputs, &[1])?;
                Ok(self.relu(inputs[0]))
            }
            OpKind::Tanh => {
                arity(name, inputs, &[1])?;
                Ok(self.tanh(inputs[0]))
            }
            OpKind::Sigmoid => {
                arity(name, inputs, &[1])?;
                Ok(self.sigmoid(inputs[0]))
            }
            OpKind::MeanPoolTime => {
                arity(name, inputs, &[1])?;
                self.mean_pool_time(inputs[0])
            }
            OpKind::Reshape { shape } => {
                arity(name, inputs, &[1])?;
                self.reshape(inputs[0], shape)
            }
            &OpKind::Concat { axis } => self.concat(inputs, axis),
            &OpKind::Slice { axis, start, end } => {
                arity(name, inputs, &[1])?;
                self.slice(inputs[0], axis, start, end)
            }
        }
    }
}
