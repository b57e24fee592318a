//! Finite-difference sweep over every primitive kind, shared by the test
//! suite and the command-line gradient check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
use crate::graph::{Graph, Var};
use crate::ops::{self, ConvSpec, NormMode, Primitive};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape, 1.0, rng)
}

/// Entries with magnitude in [0.1, 1.1], random sign: keeps kinks and poles
/// out of the finite-difference stencil.
fn away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = 0.1 + rng.gen::<f64>();
            if rng.gen::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn positive(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::uniform(shape, 0.5, 2.0, rng)
}

/// One random instance of `kind`: the primitive plus its inputs.
pub fn primitive_instance(kind: &str, rng: &mut ChaCha8Rng) -> (Primitive, Vec<Tensor<f64>>) {
    let t = rng.gen_range(5..12);
    let c = rng.gen_range(1..4);
    match kind {
        "conv1d" => {
            let spec = ConvSpec::new(rng.gen_range(1..3), rng.gen_range(0..2), rng.gen_range(1..3));
            let k = rng.gen_range(1..4);
            let co = rng.gen_range(1..4);
            (Primitive::Conv1d(spec), vec![randn(&[c, t + 4], rng), randn(&[co, c, k], rng), randn(&[co], rng)])
        }
        "depthwise_conv1d" => {
            let spec = ConvSpec::new(1, rng.gen_range(0..3), rng.gen_range(1..3));
            (Primitive::DepthwiseConv1d(spec), vec![randn(&[c, t + 4], rng), randn(&[c, 3], rng), randn(&[c], rng)])
        }
        "transposed_conv1d" => {
            let co = rng.gen_range(1..4);
            let k = rng.gen_range(2..6);
            (
                Primitive::TransposedConv1d { stride: rng.gen_range(1..4) },
                vec![randn(&[c, t], rng), randn(&[c, co, k], rng), randn(&[co], rng)],
            )
        }
        "linear" => {
            let co = rng.gen_range(1..5);
            (Primitive::Linear, vec![randn(&[c, t], rng), randn(&[co, c], rng), randn(&[co], rng)])
        }
        "global_layer_norm" | "frame_layer_norm" => {
            let mode = if kind == "global_layer_norm" { NormMode::Global } else { NormMode::PerFrame };
            // two channels normalise to exactly +-1 per frame, which leaves
            // only epsilon-sized gradients
            let c = c + 2;
            (Primitive::LayerNorm(mode), vec![randn(&[c, t], rng), randn(&[c], rng), randn(&[c], rng)])
        }
        "prelu" => {
            let alpha = if rng.gen::<bool>() { randn(&[1], rng) } else { randn(&[c], rng) };
            (Primitive::Prelu, vec![away_from_zero(&[c, t], rng), alpha])
        }
        "relu" => (Primitive::Relu, vec![away_from_zero(&[c, t], rng)]),
        "sigmoid" => (Primitive::Sigmoid, vec![randn(&[c, t], rng)]),
        "tanh" => (Primitive::Tanh, vec![randn(&[c, t], rng)]),
        "log" => (Primitive::Log, vec![positive(&[c, t], rng)]),
        "softmax_over_axis" => (Primitive::Softmax { axis: rng.gen_range(0..2) }, vec![randn(&[c + 1, t], rng)]),
        "elem_add" | "elem_sub" | "elem_mul" | "elem_div" => {
            let prim = match kind {
                "elem_add" => Primitive::Add,
                "elem_sub" => Primitive::Sub,
                "elem_mul" => Primitive::Mul,
                _ => Primitive::Div,
            };
            let bshape = match rng.gen_range(0..3) {
                0 => vec![c, t],
                1 => vec![c, 1],
                _ => vec![1, t],
            };
            let b = if kind == "elem_div" { away_from_zero(&bshape, rng) } else { randn(&bshape, rng) };
            (prim, vec![randn(&[c, t], rng), b])
        }
        "mean_over_axis" | "sum_over_axis" => {
            let axis = match rng.gen_range(0..3) {
                0 => None,
                a => Some(a - 1),
            };
            let prim = if kind == "mean_over_axis" { Primitive::Mean { axis } } else { Primitive::Sum { axis } };
            (prim, vec![randn(&[c, t], rng)])
        }
        "l2_norm_over_axis" => (Primitive::L2Norm { axis: rng.gen_range(0..2) }, vec![randn(&[c + 1, t], rng)]),
        "scale" => (Primitive::Scale(rng.gen_range(-3.0..3.0)), vec![randn(&[c, t], rng)]),
        "offset" => (Primitive::Offset(rng.gen_range(-3.0..3.0)), vec![randn(&[c, t], rng)]),
        "concat" => {
            let axis = rng.gen_range(0..2);
            let other = if axis == 0 { vec![2, t] } else { vec![c, 3] };
            (Primitive::Concat { axis }, vec![randn(&[c, t], rng), randn(&other, rng)])
        }
        "upsample_repeat" => {
            let factor = rng.gen_range(1..4);
            let len = rng.gen_range(1..(factor * t + 4));
            (Primitive::UpsampleRepeat { factor, len }, vec![randn(&[c, t], rng)])
        }
        "slice" => {
            let start = rng.gen_range(0..t - 2);
            (Primitive::Slice { axis: 1, start, len: 2 }, vec![randn(&[c, t], rng)])
        }
        "reshape" => (Primitive::Reshape(vec![c * t, 1]), vec![randn(&[c, t], rng)]),
        "pad_trim" => (Primitive::PadTrim { len: rng.gen_range(1..2 * t) }, vec![randn(&[c, t], rng)]),
        other => panic!("no generator for {other}"),
    }
}

/// Every primitive kind the suite covers, by op name.
pub const PRIMITIVE_KINDS: &[&str] = &[
    "conv1d",
    "depthwise_conv1d",
    "transposed_conv1d",
    "linear",
    "global_layer_norm",
    "frame_layer_norm",
    "prelu",
    "relu",
    "sigmoid",
    "tanh",
    "log",
    "softmax_over_axis",
    "elem_add",
    "elem_sub",
    "elem_mul",
    "elem_div",
    "mean_over_axis",
    "sum_over_axis",
    "l2_norm_over_axis",
    "scale",
    "offset",
    "concat",
    "upsample_repeat",
    "slice",
    "reshape",
    "pad_trim",
];

/// Random projection of the primitive's output to a scalar.
fn projected(prim: &Primitive, probe: &Tensor<f64>) -> impl FnMut(&mut Graph<f64>, &ParamStore<f64>) -> Result<Var> {
    let prim = prim.clone();
    let probe = probe.clone();
    move |g, s| {
        let ins: Vec<Var> = (0..s.len()).map(|i| g.param(s, ParamId(i))).collect();
        let y = g.apply(prim.clone(), &ins)?;
        let r = g.constant(probe.clone());
        let p = g.mul(y, r)?;
        g.sum(p, None)
    }
}

/// Outcome of all trials for one primitive kind.
#[derive(Clone, Debug)]
pub struct PrimitiveResult {
    pub kind: &'static str,
    pub trials: usize,
    pub worst: f64,
    pub passed: bool,
}

/// Options used by the sweep: tiny step, no relative floor.
pub fn sweep_options() -> GradcheckOptions {
    GradcheckOptions { step: 1e-6, tolerance: 1e-4, max_elements: usize::MAX, relative_floor: 0.0, seed: 0 }
}

/// Check `trials` seeded random instances of every primitive kind against
/// central differences.
pub fn run_primitive_suite(trials: usize) -> Result<Vec<PrimitiveResult>> {
    let opts = sweep_options();
    let mut out = Vec::new();
    for (ki, &kind) in PRIMITIVE_KINDS.iter().enumerate() {
        let mut worst = 0.0f64;
        let mut passed = true;
        for trial in 0..trials as u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 * ki as u64 + trial);
            let (prim, inputs) = primitive_instance(kind, &mut rng);
            let refs: Vec<&Tensor<f64>> = inputs.iter().collect();
            let y = ops::forward(&prim, &refs)?.out;
            let probe = Tensor::randn(y.shape(), 1.0, &mut rng);
            let mut store = ParamStore::new();
            for (i, t) in inputs.into_iter().enumerate() {
                store.add(format!("in{i}"), t)?;
            }
            let report = gradcheck(&mut store, projected(&prim, &probe), &opts)?;
            worst = worst.max(report.worst());
            passed &= report.passed();
        }
        out.push(PrimitiveResult { kind, trials, worst, passed });
    }
    Ok(out)
}

/// Deliberately broken fixture: `sum(x * x)` where one factor enters as a
/// constant, so the recorded gradient is half the true one. A working
/// checker must reject it.
pub fn dropped_gradient_fixture() -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    store.add("x", Tensor::<f64>::uniform(&[3, 4], 0.5, 1.5, &mut rng))?;
    gradcheck(
        &mut store,
        |g, s| {
            let x = g.param(s, ParamId(0));
            let c = g.constant(s.get(ParamId(0)).value.clone());
            let p = g.mul(x, c)?;
            g.sum(p, None)
        },
        &GradcheckOptions::default(),
    )
}
