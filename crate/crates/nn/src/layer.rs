use crate::error::{NnError, Result};

/// 2-D convolution over `[channels, height, width]` activations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2d {
    /// Stride-1 convolution with "same" padding for odd kernels.
    pub fn same(in_channels: usize, out_channels: usize, kernel: (usize, usize)) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride: (1, 1),
            padding: (kernel.0 / 2, kernel.1 / 2),
        }
    }
}

/// One step of a feed-forward chain.
///
/// Spatial layers work on `[C, H, W]`. `AvgPoolGlobal` averages over the last
/// (time) axis and yields `[C, H]`; `Dense` flattens whatever it receives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    Relu,
    Sigmoid,
    MaxPool2d { kernel: (usize, usize) },
    AvgPoolGlobal,
    Dense { inputs: usize, outputs: usize },
    /// Separable linear interpolation; output extent is `round(extent * scale)`.
    Upsample2d { scale_h: f64, scale_w: f64 },
}

/// Per-layer state kept between forward and backward.
#[derive(Debug, Clone, Default)]
pub(crate) struct Aux {
    argmax: Vec<usize>,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::Relu => "relu",
            Layer::Sigmoid => "sigmoid",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::AvgPoolGlobal => "avgpool_global",
            Layer::Dense { .. } => "dense",
            Layer::Upsample2d { .. } => "upsample2d",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NnError::InvalidLayer(format!("{}: {msg}", self.kind())));
        match *self {
            Layer::Conv2d(c) => {
                if c.in_channels == 0 || c.out_channels == 0 {
                    return bad("zero channels");
                }
                if c.kernel.0 == 0 || c.kernel.1 == 0 || c.stride.0 == 0 || c.stride.1 == 0 {
                    return bad("zero kernel or stride");
                }
            }
            Layer::MaxPool2d { kernel } => {
                if kernel.0 == 0 || kernel.1 == 0 {
                    return bad("zero kernel");
                }
            }
            Layer::Dense { inputs, outputs } => {
                if inputs == 0 || outputs == 0 {
                    return bad("zero width");
                }
            }
            Layer::Upsample2d { scale_h, scale_w } => {
                if !(scale_h.is_finite() && scale_w.is_finite() && scale_h > 0.0 && scale_w > 0.0)
                {
                    return bad("scale must be positive and finite");
                }
            }
            Layer::Relu | Layer::Sigmoid | Layer::AvgPoolGlobal => {}
        }
        Ok(())
    }

    /// Shapes of the layer's parameters, weight first then bias.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            Layer::Conv2d(c) => vec![
                vec![c.out_channels, c.in_channels, c.kernel.0, c.kernel.1],
                vec![c.out_channels],
            ],
            Layer::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            _ => Vec::new(),
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            Layer::Conv2d(c) => c.in_channels * c.kernel.0 * c.kernel.1,
            Layer::Dense { inputs, .. } => inputs,
            _ => 0,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let chw = |input: &[usize]| -> Result<(usize, usize, usize)> {
            match *input {
                [c, h, w] => Ok((c, h, w)),
                _ => Err(NnError::Shape(format!(
                    "{} expects [C, H, W], got {input:?}",
                    self.kind()
                ))),
            }
        };
        match *self {
            Layer::Conv2d(conv) => {
                let (c, h, w) = chw(input)?;
                if c != conv.in_channels {
                    return Err(NnError::Shape(format!(
                        "conv2d expects {} channels, got {c}",
                        conv.in_channels
                    )));
                }
                let (kh, kw) = conv.kernel;
                let (ph, pw) = conv.padding;
                if h + 2 * ph < kh || w + 2 * pw < kw {
                    return Err(NnError::Shape(format!(
                        "conv2d kernel {:?} larger than padded input {input:?}",
                        conv.kernel
                    )));
                }
                let ho = (h + 2 * ph - kh) / conv.stride.0 + 1;
                let wo = (w + 2 * pw - kw) / conv.stride.1 + 1;
                Ok(vec![conv.out_channels, ho, wo])
            }
            Layer::Relu | Layer::Sigmoid => Ok(input.to_vec()),
            Layer::MaxPool2d { kernel } => {
                let (c, h, w) = chw(input)?;
                let (ho, wo) = (h / kernel.0, w / kernel.1);
                if ho == 0 || wo == 0 {
                    return Err(NnError::Shape(format!(
                        "maxpool2d kernel {kernel:?} larger than input {input:?}"
                    )));
                }
                Ok(vec![c, ho, wo])
            }
            Layer::AvgPoolGlobal => {
                let (c, h, w) = chw(input)?;
                if w == 0 {
                    return Err(NnError::Shape("avgpool_global over empty axis".into()));
                }
                Ok(vec![c, h])
            }
            Layer::Dense { inputs, outputs } => {
                let n: usize = input.iter().product();
                if n != inputs {
                    return Err(NnError::Shape(format!(
                        "dense expects {inputs} inputs, got {input:?}"
                    )));
                }
                Ok(vec![outputs])
            }
            Layer::Upsample2d { scale_h, scale_w } => {
                let (c, h, w) = chw(input)?;
                let ho = (h as f64 * scale_h).round() as usize;
                let wo = (w as f64 * scale_w).round() as usize;
                if ho == 0 || wo == 0 {
                    return Err(NnError::Shape("upsample2d produces empty output".into()));
                }
                Ok(vec![c, ho, wo])
            }
        }
    }

    pub(crate) fn forward(
        &self,
        params: &[&[f64]],
        input: &[f64],
        in_shape: &[usize],
        out_shape: &[usize],
        aux: &mut Aux,
    ) -> Vec<f64> {
        let out_len: usize = out_shape.iter().product();
        match *self {
            Layer::Conv2d(conv) => conv_forward(&conv, params[0], params[1], input, in_shape, out_shape),
            Layer::Relu => input.iter().map(|&x| x.max(0.0)).collect(),
            Layer::Sigmoid => input.iter().map(|&x| sigmoid(x)).collect(),
            Layer::MaxPool2d { kernel } => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (ho, wo) = (out_shape[1], out_shape[2]);
                let mut out = vec![0.0; out_len];
                aux.argmax = vec![0; out_len];
                for ch in 0..c {
                    for oy in 0..ho {
                        for ox in 0..wo {
                            let mut best = f64::NEG_INFINITY;
                            let mut best_i = 0;
                            for ky in 0..kernel.0 {
                                let iy = oy * kernel.0 + ky;
                                for kx in 0..kernel.1 {
                                    let i = (ch * h + iy) * w + ox * kernel.1 + kx;
                                    if input[i] > best {
                                        best = input[i];
                                        best_i = i;
                                    }
                                }
                            }
                            let o = (ch * ho + oy) * wo + ox;
                            out[o] = best;
                            aux.argmax[o] = best_i;
                        }
                    }
                }
                out
            }
            Layer::AvgPoolGlobal => {
                let w = in_shape[2];
                input
                    .chunks_exact(w)
                    .map(|row| row.iter().sum::<f64>() / w as f64)
                    .collect()
            }
            Layer::Dense { inputs, outputs } => {
                let (weight, bias) = (params[0], params[1]);
                (0..outputs)
                    .map(|o| {
                        let row = &weight[o * inputs..(o + 1) * inputs];
                        bias[o] + dot(row, input)
                    })
                    .collect()
            }
            Layer::Upsample2d { .. } => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (ho, wo) = (out_shape[1], out_shape[2]);
                let ty = interp_table(h, ho);
                let tx = interp_table(w, wo);
                let mut out = vec![0.0; out_len];
                for ch in 0..c {
                    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                        let r0 = &input[(ch * h + y0) * w..][..w];
                        let r1 = &input[(ch * h + y1) * w..][..w];
                        let dst = &mut out[(ch * ho + oy) * wo..][..wo];
                        for (d, &(x0, x1, fx)) in dst.iter_mut().zip(&tx) {
                            let a = r0[x0] + fx * (r0[x1] - r0[x0]);
                            let b = r1[x0] + fx * (r1[x1] - r1[x0]);
                            *d = a + fy * (b - a);
                        }
                    }
                }
                out
            }
        }
    }

    /// Returns the input gradient and, when `want_params` is set, the
    /// parameter gradients in `param_shapes` order.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn backward(
        &self,
        params: &[&[f64]],
        input: &[f64],
        in_shape: &[usize],
        output: &[f64],
        out_shape: &[usize],
        aux: &Aux,
        grad_out: &[f64],
        want_params: bool,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        match *self {
            Layer::Conv2d(conv) => conv_backward(
                &conv, params[0], input, in_shape, out_shape, grad_out, want_params,
            ),
            Layer::Relu => (
                input
                    .iter()
                    .zip(grad_out)
                    .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                    .collect(),
                Vec::new(),
            ),
            Layer::Sigmoid => (
                output
                    .iter()
                    .zip(grad_out)
                    .map(|(&y, &g)| g * y * (1.0 - y))
                    .collect(),
                Vec::new(),
            ),
            Layer::MaxPool2d { .. } => {
                let mut gi = vec![0.0; input.len()];
                for (&src, &g) in aux.argmax.iter().zip(grad_out) {
                    gi[src] += g;
                }
                (gi, Vec::new())
            }
            Layer::AvgPoolGlobal => {
                let w = in_shape[2];
                let scale = 1.0 / w as f64;
                let mut gi = vec![0.0; input.len()];
                for (row, &g) in gi.chunks_exact_mut(w).zip(grad_out) {
                    row.fill(g * scale);
                }
                (gi, Vec::new())
            }
            Layer::Dense { inputs, outputs } => {
                let weight = params[0];
                let mut gi = vec![0.0; inputs];
                for (o, &g) in grad_out.iter().enumerate().take(outputs) {
                    axpy(g, &weight[o * inputs..(o + 1) * inputs], &mut gi);
                }
                let pgrads = if want_params {
                    let mut gw = vec![0.0; inputs * outputs];
                    for (o, &g) in grad_out.iter().enumerate() {
                        axpy(g, input, &mut gw[o * inputs..(o + 1) * inputs]);
                    }
                    vec![gw, grad_out.to_vec()]
                } else {
                    Vec::new()
                };
                (gi, pgrads)
            }
            Layer::Upsample2d { .. } => {
                let (c, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
                let (ho, wo) = (out_shape[1], out_shape[2]);
                let ty = interp_table(h, ho);
                let tx = interp_table(w, wo);
                let mut gi = vec![0.0; input.len()];
                for ch in 0..c {
                    for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
                        let src = &grad_out[(ch * ho + oy) * wo..][..wo];
                        for (&g, &(x0, x1, fx)) in src.iter().zip(&tx) {
                            let g0 = g * (1.0 - fy);
                            let g1 = g * fy;
                            let r0 = (ch * h + y0) * w;
                            let r1 = (ch * h + y1) * w;
                            gi[r0 + x0] += g0 * (1.0 - fx);
                            gi[r0 + x1] += g0 * fx;
                            gi[r1 + x0] += g1 * (1.0 - fx);
                            gi[r1 + x1] += g1 * fx;
                        }
                    }
                }
                (gi, Vec::new())
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Half-pixel linear interpolation weights from `n_in` to `n_out` samples:
/// `(lower index, upper index, upper weight)` per output sample.
fn interp_table(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Output columns `ox` whose input column `ox * stride + k - pad` is in range.
fn valid_range(k: usize, pad: usize, stride: usize, n_in: usize, n_out: usize) -> (usize, usize) {
    let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
    // largest ox with ox*stride + k - pad <= n_in - 1
    let hi = if n_in + pad > k {
        ((n_in + pad - k - 1) / stride + 1).min(n_out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn conv_forward(
    conv: &Conv2d,
    weight: &[f64],
    bias: &[f64],
    input: &[f64],
    in_shape: &[usize],
    out_shape: &[usize],
) -> Vec<f64> {
    let (c_in, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (c_out, ho, wo) = (out_shape[0], out_shape[1], out_shape[2]);
    let (kh, kw) = conv.kernel;
    let (sh, sw) = conv.stride;
    let (ph, pw) = conv.padding;
    let mut out = vec![0.0; c_out * ho * wo];
    for (o, plane) in out.chunks_exact_mut(ho * wo).enumerate() {
        plane.fill(bias[o]);
        for c in 0..c_in {
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(ky, ph, sh, h, ho);
                for kx in 0..kw {
                    let wt = weight[((o * c_in + c) * kh + ky) * kw + kx];
                    let (ox_lo, ox_hi) = valid_range(kx, pw, sw, w, wo);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * sh + ky - ph;
                        let in_row = &input[(c * h + iy) * w..][..w];
                        let out_row = &mut plane[oy * wo..][ox_lo..ox_hi];
                        let ix0 = ox_lo * sw + kx - pw;
                        if sw == 1 {
                            axpy(wt, &in_row[ix0..ix0 + out_row.len()], out_row);
                        } else {
                            for (j, y) in out_row.iter_mut().enumerate() {
                                *y += wt * in_row[ix0 + j * sw];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn conv_backward(
    conv: &Conv2d,
    weight: &[f64],
    input: &[f64],
    in_shape: &[usize],
    out_shape: &[usize],
    grad_out: &[f64],
    want_params: bool,
) -> (Vec<f64>, Vec<Vec<f64>>) {
    let (c_in, h, w) = (in_shape[0], in_shape[1], in_shape[2]);
    let (c_out, ho, wo) = (out_shape[0], out_shape[1], out_shape[2]);
    let (kh, kw) = conv.kernel;
    let (sh, sw) = conv.stride;
    let (ph, pw) = conv.padding;
    let mut gi = vec![0.0; input.len()];
    let mut gw = if want_params {
        vec![0.0; weight.len()]
    } else {
        Vec::new()
    };
    for o in 0..c_out {
        let g_plane = &grad_out[o * ho * wo..][..ho * wo];
        for c in 0..c_in {
            for ky in 0..kh {
                let (oy_lo, oy_hi) = valid_range(ky, ph, sh, h, ho);
                for kx in 0..kw {
                    let wi = ((o * c_in + c) * kh + ky) * kw + kx;
                    let wt = weight[wi];
                    let (ox_lo, ox_hi) = valid_range(kx, pw, sw, w, wo);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * sh + ky - ph;
                        let g_row = &g_plane[oy * wo..][ox_lo..ox_hi];
                        let ix0 = ox_lo * sw + kx - pw;
                        let row_off = (c * h + iy) * w;
                        if sw == 1 {
                            let n = g_row.len();
                            axpy(wt, g_row, &mut gi[row_off + ix0..row_off + ix0 + n]);
                            if want_params {
                                acc += dot(g_row, &input[row_off + ix0..row_off + ix0 + n]);
                            }
                        } else {
                            for (j, &g) in g_row.iter().enumerate() {
                                let ix = row_off + ix0 + j * sw;
                                gi[ix] += wt * g;
                                acc += g * input[ix];
                            }
                        }
                    }
                    if want_params {
                        gw[wi] += acc;
                    }
                }
            }
        }
    }
    let pgrads = if want_params {
        let gb = grad_out
            .chunks_exact(ho * wo)
            .map(|p| p.iter().sum())
            .collect();
        vec![gw, gb]
    } else {
        Vec::new()
    };
    (gi, pgrads)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn valid_range_matches_brute_force() {
        for n_in in 1..9 {
            for k in 0..4 {
                for pad in 0..3 {
                    for stride in 1..4 {
                        let kernel = k + 1;
                        if n_in + 2 * pad < kernel {
                            continue;
                        }
                        let n_out = (n_in + 2 * pad - kernel) / stride + 1;
                        let brute: Vec<usize> = (0..n_out)
                            .filter(|&o| {
                                let ix = (o * stride + k) as isize - pad as isize;
                                ix >= 0 && (ix as usize) < n_in
                            })
                            .collect();
                        let (lo, hi) = valid_range(k, pad, stride, n_in, n_out);
                        assert_eq!(brute, (lo..hi).collect::<Vec<_>>(), "{n_in} {k} {pad} {stride}");
                    }
                }
            }
        }
    }

    #[test]
    fn upsample_table_integer_scale() {
        let t = interp_table(2, 4);
        assert_eq!(t[0], (0, 1, 0.0));
        assert_eq!(t[3], (1, 1, 0.0));
        assert!((t[1].2 - 0.25).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0);
    }
}
