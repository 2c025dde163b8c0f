//! Gradient-check cases for every differentiable op.

#![allow(dead_code)]

use latscape_autodiff::{grad_check, OpKind, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const TOL: f64 = 1e-4;
pub const H: f64 = 1e-6;

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so ReLU kinks are never straddled.
pub fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalarizes `out` as `Σ out ⊙ w` with a fixed pseudo-random `w`.
pub fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = random(&mut rng, tape.shape(out));
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    Ok(tape.sum(prod))
}

pub struct Case {
    pub op: OpKind,
    pub inputs: Vec<Tensor>,
}

pub fn cases(name: &str, rng: &mut ChaCha8Rng) -> Vec<Case> {
    let r = |rng: &mut ChaCha8Rng, s: &[usize]| random(rng, s);
    match name {
        "matmul" => vec![
            Case { op: OpKind::MatMul, inputs: vec![r(rng, &[3, 4]), r(rng, &[4, 2])] },
            Case { op: OpKind::MatMul, inputs: vec![r(rng, &[2, 3, 5]), r(rng, &[5, 3])] },
        ],
        "add" => vec![
            Case { op: OpKind::Add, inputs: vec![r(rng, &[3, 4]), r(rng, &[3, 4])] },
            Case { op: OpKind::Add, inputs: vec![r(rng, &[2, 3, 4]), r(rng, &[4])] },
        ],
        "mul" => vec![
            Case { op: OpKind::Mul, inputs: vec![r(rng, &[3, 4]), r(rng, &[3, 4])] },
            Case { op: OpKind::Mul, inputs: vec![r(rng, &[2, 5]), r(rng, &[2, 5])] },
        ],
        "conv1d" => vec![
            Case {
                op: OpKind::Conv1d { stride: 1, padding: 0 },
                inputs: vec![r(rng, &[2, 3, 9]), r(rng, &[4, 3, 3]), r(rng, &[4])],
            },
            Case {
                op: OpKind::Conv1d { stride: 2, padding: 1 },
                inputs: vec![r(rng, &[1, 2, 11]), r(rng, &[3, 2, 4]), r(rng, &[3])],
            },
        ],
        "conv1d_transpose" => vec![
            Case {
                op: OpKind::Conv1dTranspose { stride: 2, padding: 1, output_padding: 1 },
                inputs: vec![r(rng, &[2, 3, 5]), r(rng, &[3, 2, 3]), r(rng, &[2])],
            },
            Case {
                op: OpKind::Conv1dTranspose { stride: 3, padding: 0, output_padding: 2 },
                inputs: vec![r(rng, &[1, 2, 4]), r(rng, &[2, 3, 4])],
            },
        ],
        "lstm_cell" => {
            let mut mk = |b: usize, i: usize, h: usize| Case {
                op: OpKind::LstmCell,
                inputs: vec![
                    r(rng, &[b, i]),
                    r(rng, &[b, h]),
                    r(rng, &[b, h]),
                    r(rng, &[i, 4 * h]),
                    r(rng, &[h, 4 * h]),
                    r(rng, &[4 * h]),
                ],
            };
            vec![mk(2, 3, 4), mk(3, 2, 2)]
        }
        "multi_head_attention" => {
            let mut mk = |b: usize, t: usize, d: usize, heads: usize| Case {
                op: OpKind::MultiHeadAttention { heads },
                inputs: vec![
                    r(rng, &[b, t, d]),
                    r(rng, &[d, d]),
                    r(rng, &[d, d]),
                    r(rng, &[d, d]),
                    r(rng, &[d, d]),
                ],
            };
            vec![mk(1, 6, 8, 2), mk(2, 4, 6, 3)]
        }
        "layer_norm" => vec![
            Case { op: OpKind::LayerNorm, inputs: vec![r(rng, &[3, 5]), r(rng, &[5]), r(rng, &[5])] },
            Case { op: OpKind::LayerNorm, inputs: vec![r(rng, &[2, 3, 4]), r(rng, &[4]), r(rng, &[4])] },
        ],
        "softmax" => vec![
            Case { op: OpKind::Softmax, inputs: vec![r(rng, &[2, 5])] },
            Case { op: OpKind::Softmax, inputs: vec![r(rng, &[3, 4])] },
        ],
        "relu" => vec![
            Case { op: OpKind::Relu, inputs: vec![away_from_zero(rng, &[3, 4])] },
            Case { op: OpKind::Relu, inputs: vec![away_from_zero(rng, &[2, 2, 3])] },
        ],
        "tanh" => vec![
            Case { op: OpKind::Tanh, inputs: vec![r(rng, &[3, 4])] },
            Case { op: OpKind::Tanh, inputs: vec![r(rng, &[2, 2, 3])] },
        ],
        "sigmoid" => vec![
            Case { op: OpKind::Sigmoid, inputs: vec![r(rng, &[3, 4])] },
            Case { op: OpKind::Sigmoid, inputs: vec![r(rng, &[2, 2, 3])] },
        ],
        "mean_pool_time" => vec![
            Case { op: OpKind::MeanPoolTime, inputs: vec![r(rng, &[2, 4, 3])] },
            Case { op: OpKind::MeanPoolTime, inputs: vec![r(rng, &[1, 5, 2])] },
        ],
        "reshape" => vec![
            Case { op: OpKind::Reshape { shape: vec![3, 4] }, inputs: vec![r(rng, &[2, 6])] },
            Case { op: OpKind::Reshape { shape: vec![6, 4] }, inputs: vec![r(rng, &[2, 3, 4])] },
        ],
        "concat" => vec![
            Case { op: OpKind::Concat { axis: 1 }, inputs: vec![r(rng, &[2, 3]), r(rng, &[2, 2])] },
            Case {
                op: OpKind::Concat { axis: 0 },
                inputs: vec![r(rng, &[1, 2, 3]), r(rng, &[2, 2, 3])],
            },
        ],
        "slice" => vec![
            Case { op: OpKind::Slice { axis: 1, start: 1, end: 4 }, inputs: vec![r(rng, &[3, 5])] },
            Case { op: OpKind::Slice { axis: 1, start: 0, end: 2 }, inputs: vec![r(rng, &[2, 4, 3])] },
        ],
        other => panic!("no cases for {other}"),
    }
}

/// Largest relative gradient error over every op, shape and seed, with
/// the case that produced it.
pub fn worst_case_error() -> (f64, String) {
    let mut worst = (0.0, String::new());
    for name in OpKind::NAMES {
        for seed in [1u64, 2, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for (ci, case) in cases(name, &mut rng).into_iter().enumerate() {
                let op = case.op.clone();
                let err = grad_check(
                    |tape, vars| {
                        let out = tape.apply(&op, vars)?;
                        weighted_sum(tape, out, seed)
                    },
                    &case.inputs,
                    H,
                )
                .unwrap_or(f64::INFINITY);
                if !(err <= worst.0) {
                    worst = (err, format!("{name} seed {seed} case {ci}"));
                }
            }
        }
    }
    worst
}
