//! The B-spline functional autoencoder.
//!
//! A curve enters as its coefficient row `x` (length `L`):
//!
//! ```text
//! H1_j  = act(b_j + sum_h d_jh x_h)                 j = 1..J
//! s_k   = sum_j w_jk H1_j                           k = 1..K   (no activation)
//! c_r   = A_r + sum_k V_kr s_k                      r = 1..R   (L-vectors)
//! H3_rm = act(c_r . B(t_m))                         m = 1..M
//! Xhat_m = sum_r u_r H3_rm
//! ```
//!
//! `d = c W` folds the encoder weight functions with the Gram matrix, so the
//! network consumes coefficients rather than inner products.

mod activation;
mod adam;
mod params;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub use params::{Dims, NetworkParams, FIELD_NAMES};

use nalgebra::DMatrix;

use crate::bspline::EvalMatrix;
use crate::error::{Error, Result};

/// Encoder intermediates for one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace {
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub scores: Vec<f64>,
}

/// Everything the backward pass needs for one curve.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub encoder: EncoderTrace,
    /// `R x L` decoder coefficient rows `A_r + sum_k V_kr s_k`.
    pub decoder_coefs: Vec<f64>,
    /// `R x M` decoder pre-activations.
    pub decoder_pre: Vec<f64>,
    /// `R x M` decoder activations.
    pub decoder_hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl ForwardTrace {
    pub fn scores(&self) -> &[f64] {
        &self.encoder.scores
    }
}

fn check_input(params: &NetworkParams, x: &[f64]) -> Result<()> {
    if x.len() != params.dims.basis {
        return Err(Error::shape(
            format!("{} input coefficients", params.dims.basis),
            x.len(),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    Ok(())
}

fn check_eval(params: &NetworkParams, eval: &EvalMatrix) -> Result<()> {
    if eval.basis_count() != params.dims.basis {
        return Err(Error::shape(
            format!("evaluation matrix with {} rows", params.dims.basis),
            eval.basis_count(),
        ));
    }
    Ok(())
}

pub fn encode_traced(params: &NetworkParams, x: &[f64]) -> Result<EncoderTrace> {
    check_input(params, x)?;
    let mut trace = EncoderTrace {
        pre: vec![0.0; params.dims.hidden],
        hidden: vec![0.0; params.dims.hidden],
        scores: vec![0.0; params.dims.components],
    };
    encode_into(params, x, &mut trace);
    Ok(trace)
}

fn encode_into(params: &NetworkParams, x: &[f64], trace: &mut EncoderTrace) {
    let Dims {
        basis: l,
        hidden: j,
        components: k,
        ..
    } = params.dims;
    let act = params.activation;
    trace.scores.fill(0.0);
    for jj in 0..j {
        let row = &params.d[jj * l..(jj + 1) * l];
        let z = params.b[jj] + row.iter().zip(x).map(|(d, x)| d * x).sum::<f64>();
        let h = act.value(z);
        trace.pre[jj] = z;
        trace.hidden[jj] = h;
        let wrow = &params.w[jj * k..(jj + 1) * k];
        for (s, &w) in trace.scores.iter_mut().zip(wrow) {
            *s += w * h;
        }
    }
}

/// Nonlinear principal component scores of one curve.
pub fn encode(params: &NetworkParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(encode_traced(params, x)?.scores)
}

fn decode_into(
    params: &NetworkParams,
    scores: &[f64],
    eval: &EvalMatrix,
    coefs: &mut [f64],
    pre: &mut [f64],
    hidden: &mut [f64],
    output: &mut [f64],
) {
    let Dims {
        basis: l,
        components: k,
        decoder: r,
        ..
    } = params.dims;
    let m_pts = eval.points();
    let act = params.activation;
    coefs.copy_from_slice(&params.a);
    for (kk, &s) in scores.iter().enumerate().take(k) {
        let vk = &params.v[kk * r * l..(kk + 1) * r * l];
        for (c, &v) in coefs.iter_mut().zip(vk) {
            *c += v * s;
        }
    }
    output.fill(0.0);
    for rr in 0..r {
        let c = &coefs[rr * l..(rr + 1) * l];
        let u = params.u[rr];
        let pre_r = &mut pre[rr * m_pts..(rr + 1) * m_pts];
        let hid_r = &mut hidden[rr * m_pts..(rr + 1) * m_pts];
        for m in 0..m_pts {
            let (start, vals) = eval.column(m);
            let z: f64 = vals
                .iter()
                .zip(&c[start..start + vals.len()])
                .map(|(b, c)| b * c)
                .sum();
            let h = act.value(z);
            pre_r[m] = z;
            hid_r[m] = h;
            output[m] += u * h;
        }
    }
}

/// Reconstruction on the grid of `eval` from bottleneck scores.
pub fn decode(params: &NetworkParams, scores: &[f64], eval: &EvalMatrix) -> Result<Vec<f64>> {
    check_eval(params, eval)?;
    if scores.len() != params.dims.components {
        return Err(Error::shape(params.dims.components, scores.len()));
    }
    let Dims {
        basis: l,
        decoder: r,
        ..
    } = params.dims;
    let m = eval.points();
    let mut coefs = vec![0.0; r * l];
    let mut pre = vec![0.0; r * m];
    let mut hidden = vec![0.0; r * m];
    let mut output = vec![0.0; m];
    decode_into(
        params,
        scores,
        eval,
        &mut coefs,
        &mut pre,
        &mut hidden,
        &mut output,
    );
    Ok(output)
}

impl ForwardTrace {
    /// Zeroed buffers sized for `dims` and an `m`-point grid.
    pub fn with_shape(dims: Dims, m: usize) -> Self {
        Self {
            encoder: EncoderTrace {
                pre: vec![0.0; dims.hidden],
                hidden: vec![0.0; dims.hidden],
                scores: vec![0.0; dims.components],
            },
            decoder_coefs: vec![0.0; dims.decoder * dims.basis],
            decoder_pre: vec![0.0; dims.decoder * m],
            decoder_hidden: vec![0.0; dims.decoder * m],
            output: vec![0.0; m],
        }
    }
}

pub fn forward(params: &NetworkParams, x: &[f64], eval: &EvalMatrix) -> Result<ForwardTrace> {
    let mut trace = ForwardTrace::with_shape(params.dims, eval.points());
    forward_into(params, x, eval, &mut trace)?;
    Ok(trace)
}

/// [`forward`] writing into preallocated buffers.
pub fn forward_into(
    params: &NetworkParams,
    x: &[f64],
    eval: &EvalMatrix,
    trace: &mut ForwardTrace,
) -> Result<()> {
    check_eval(params, eval)?;
    check_input(params, x)?;
    if trace.output.len() != eval.points() || trace.encoder.pre.len() != params.dims.hidden {
        *trace = ForwardTrace::with_shape(params.dims, eval.points());
    }
    encode_into(params, x, &mut trace.encoder);
    let ForwardTrace {
        encoder,
        decoder_coefs,
        decoder_pre,
        decoder_hidden,
        output,
    } = trace;
    decode_into(
        params,
        &encoder.scores,
        eval,
        decoder_coefs,
        decoder_pre,
        decoder_hidden,
        output,
    );
    Ok(())
}

/// One curve's term of the training loss: right-hand Riemann sum of the
/// squared residual, dropping the first grid point.
pub fn curve_loss(output: &[f64], target: &[f64]) -> f64 {
    let m = output.len();
    debug_assert!(m >= 2 && target.len() == m);
    let ss: f64 = output[1..]
        .iter()
        .zip(&target[1..])
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    ss / (m - 1) as f64
}

/// Mean over curves of [`curve_loss`].
pub fn loss(reconstruction: &DMatrix<f64>, target: &DMatrix<f64>) -> Result<f64> {
    if reconstruction.shape() != target.shape() {
        return Err(Error::shape(
            format!("{:?}", target.shape()),
            format!("{:?}", reconstruction.shape()),
        ));
    }
    let (n, m) = target.shape();
    if m < 2 || n == 0 {
        return Err(Error::InvalidInput(format!(
            "loss needs n >= 1 and M >= 2, got {n} x {m}"
        )));
    }
    let mut total = 0.0;
    for i in 0..n {
        let mut ss = 0.0;
        for c in 1..m {
            let e = reconstruction[(i, c)] - target[(i, c)];
            ss += e * e;
        }
        total += ss / (m - 1) as f64;
    }
    Ok(total / n as f64)
}

/// Backpropagates an upstream gradient on the scores into `grads`
/// (encoder fields only), scaled by `scale`.
pub fn encoder_backward(
    params: &NetworkParams,
    x: &[f64],
    trace: &EncoderTrace,
    score_grad: &[f64],
    scale: f64,
    grads: &mut NetworkParams,
) {
    let Dims {
        basis: l,
        hidden: j,
        components: k,
        ..
    } = params.dims;
    let act = params.activation;
    for jj in 0..j {
        let wrow = &params.w[jj * k..(jj + 1) * k];
        let h = trace.hidden[jj];
        let gw = &mut grads.w[jj * k..(jj + 1) * k];
        let mut g_h = 0.0;
        for kk in 0..k {
            gw[kk] += scale * score_grad[kk] * h;
            g_h += wrow[kk] * score_grad[kk];
        }
        let g_z = scale * g_h * act.derivative(trace.pre[jj], h);
        grads.b[jj] += g_z;
        let gd = &mut grads.d[jj * l..(jj + 1) * l];
        for (g, &xh) in gd.iter_mut().zip(x) {
            *g += g_z * xh;
        }
    }
}

/// Adds `scale` times the gradient of [`curve_loss`] (at the traced point)
/// to `grads`. Returns the curve's loss.
///
/// The trace must come from [`forward`] on the same `params` and `x`.
pub fn accumulate_backward(
    params: &NetworkParams,
    x: &[f64],
    trace: &ForwardTrace,
    target: &[f64],
    eval: &EvalMatrix,
    scale: f64,
    grads: &mut NetworkParams,
) -> f64 {
    let Dims {
        basis: l,
        components: k,
        decoder: r,
        ..
    } = params.dims;
    let m_pts = eval.points();
    let act = params.activation;
    let norm = 1.0 / (m_pts - 1) as f64;

    // dLoss/dXhat; the first grid point is outside the Riemann sum
    let mut g_out = vec![0.0; m_pts];
    let mut ss = 0.0;
    for m in 1..m_pts {
        let e = trace.output[m] - target[m];
        ss += e * e;
        g_out[m] = 2.0 * norm * e;
    }

    let mut g_coefs = vec![0.0; r * l];
    for rr in 0..r {
        let u = params.u[rr];
        let pre_r = &trace.decoder_pre[rr * m_pts..(rr + 1) * m_pts];
        let hid_r = &trace.decoder_hidden[rr * m_pts..(rr + 1) * m_pts];
        let gc = &mut g_coefs[rr * l..(rr + 1) * l];
        let mut g_u = 0.0;
        for m in 1..m_pts {
            let go = g_out[m];
            g_u += go * hid_r[m];
            let g_pre = go * u * act.derivative(pre_r[m], hid_r[m]);
            let (start, vals) = eval.column(m);
            for (g, &b) in gc[start..start + vals.len()].iter_mut().zip(vals) {
                *g += g_pre * b;
            }
        }
        grads.u[rr] += scale * g_u;
    }

    for (ga, &gc) in grads.a.iter_mut().zip(&g_coefs) {
        *ga += scale * gc;
    }
    let scores = &trace.encoder.scores;
    let mut g_scores = vec![0.0; k];
    for kk in 0..k {
        let vk = &params.v[kk * r * l..(kk + 1) * r * l];
        let gvk = &mut grads.v[kk * r * l..(kk + 1) * r * l];
        let s = scores[kk];
        let mut acc = 0.0;
        for ((gv, &v), &gc) in gvk.iter_mut().zip(vk).zip(&g_coefs) {
            *gv += scale * gc * s;
            acc += gc * v;
        }
        g_scores[kk] = acc;
    }
    encoder_backward(params, x, &trace.encoder, &g_scores, scale, grads);
    ss * norm
}

/// Gradient of [`curve_loss`] with respect to every parameter.
pub fn backward(
    params: &NetworkParams,
    x: &[f64],
    trace: &ForwardTrace,
    target: &[f64],
    eval: &EvalMatrix,
) -> Result<NetworkParams> {
    check_eval(params, eval)?;
    if target.len() != eval.points() {
        return Err(Error::shape(eval.points(), target.len()));
    }
    let mut grads = params.zeros_like();
    accumulate_backward(params, x, trace, target, eval, 1.0, &mut grads);
    Ok(grads)
}
