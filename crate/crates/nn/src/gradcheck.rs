//! Central finite-difference check of [`Network::backprop`].
//!
//! The scalar probed is `L = sum_i r_i * y_i` with fixed random weights `r`,
//! so `dL/dy = r` and every output element contributes.

use rand::Rng;

use crate::error::Result;
use crate::network::Network;
use crate::tensor::Tensor;

/// Outcome of one check: worst relative error over parameters and inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub n_checked: usize,
}

/// Relative error with a small absolute floor so that two near-zero values
/// compare as equal.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

fn probe(net: &Network, x: &Tensor, r: &[f64]) -> Result<f64> {
    let y = net.forward(x)?;
    Ok(y.data().iter().zip(r).map(|(a, b)| a * b).sum())
}

/// Compares analytic gradients of trainable parameters and of the input
/// against central differences with the given step.
pub fn check<R: Rng + ?Sized>(
    net: &Network,
    input: &Tensor,
    step: f64,
    rng: &mut R,
) -> Result<GradCheck> {
    let out_shape = net.output_shape(input.shape())?;
    let n_out: usize = out_shape.iter().product();
    let r: Vec<f64> = (0..n_out).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let trace = net.forward_trace(input)?;
    let bp = net.backprop(&trace, &Tensor::new(out_shape, r.clone())?)?;

    let mut worst: f64 = 0.0;
    let mut n_checked = 0;
    let mut work = net.clone();
    for pi in 0..net.params().len() {
        let Some(analytic) = &bp.param_grads[pi] else {
            continue;
        };
        for j in 0..analytic.len() {
            let orig = work.params()[pi].tensor.data()[j];
            work.params_mut()[pi].tensor.data_mut()[j] = orig + step;
            let up = probe(&work, input, &r)?;
            work.params_mut()[pi].tensor.data_mut()[j] = orig - step;
            let down = probe(&work, input, &r)?;
            work.params_mut()[pi].tensor.data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(rel_err(analytic[j], numeric));
            n_checked += 1;
        }
    }
    let mut x = input.clone();
    for j in 0..x.len() {
        let orig = x.data()[j];
        x.data_mut()[j] = orig + step;
        let up = probe(net, &x, &r)?;
        x.data_mut()[j] = orig - step;
        let down = probe(net, &x, &r)?;
        x.data_mut()[j] = orig;
        let numeric = (up - down) / (2.0 * step);
        worst = worst.max(rel_err(bp.input_grad.data()[j], numeric));
        n_checked += 1;
    }
    Ok(GradCheck {
        max_rel_err: worst,
        n_checked,
    })
}

/// Every layer kind the engine implements.
pub const LAYER_KINDS: [&str; 7] = [
    "conv2d",
    "relu",
    "sigmoid",
    "maxpool2d",
    "avgpool_global",
    "dense",
    "upsample2d",
];

/// A small randomized network exercising `kind`, plus a matching input.
/// Weighted layers are followed by a sigmoid so the check also covers a
/// nonlinearity downstream of the parameters.
pub fn random_case<R: Rng + ?Sized>(kind: &str, rng: &mut R) -> Result<(Network, Tensor)> {
    use crate::layer::{Conv2d, Layer};
    let c = rng.gen_range(1..=3);
    let h = rng.gen_range(2..=5);
    let w = rng.gen_range(3..=8);
    let mut shape = vec![c, h, w];
    let layers = match kind {
        "conv2d" => {
            let kh = rng.gen_range(1..=h.min(3));
            let kw = rng.gen_range(1..=3);
            vec![
                Layer::Conv2d(Conv2d {
                    in_channels: c,
                    out_channels: rng.gen_range(1..=3),
                    kernel: (kh, kw),
                    stride: (rng.gen_range(1..=2), rng.gen_range(1..=2)),
                    padding: (rng.gen_range(0..kh.max(1)), rng.gen_range(0..=kw / 2 + 1)),
                }),
                Layer::Sigmoid,
            ]
        }
        "relu" => vec![Layer::Relu],
        "sigmoid" => vec![Layer::Sigmoid],
        "maxpool2d" => vec![Layer::MaxPool2d {
            kernel: (rng.gen_range(1..=h.min(2)), rng.gen_range(1..=3)),
        }],
        "avgpool_global" => vec![Layer::AvgPoolGlobal],
        "dense" => {
            shape = vec![c, h];
            vec![
                Layer::Dense {
                    inputs: c * h,
                    outputs: rng.gen_range(1..=4),
                },
                Layer::Sigmoid,
            ]
        }
        "upsample2d" => vec![Layer::Upsample2d {
            scale_h: [1.0, 2.0][rng.gen_range(0..2)],
            scale_w: [1.5, 2.0, 3.125][rng.gen_range(0..3)],
        }],
        other => {
            return Err(crate::NnError::InvalidLayer(format!("unknown kind {other}")));
        }
    };
    let mut net = Network::init(layers, rng)?;
    // nonzero biases so their gradients are exercised off the origin
    for p in net.params_mut() {
        if p.name.ends_with("bias") {
            for v in p.tensor.data_mut() {
                *v = rng.gen_range(-0.5..0.5);
            }
        }
    }
    let n: usize = shape.iter().product();
    let x = Tensor::new(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    Ok((net, x))
}
