//! Exact backpropagation through time over a recorded [`Tape`].
//!
//! The adjoint walks layers top-down; inside each layer it walks the steps
//! in reverse, carrying the recurrent hidden (and, for LSTM, cell) gradient.
//! Per-step work is limited to the recurrent matrix–vector products that the
//! time dependency forces; everything else — bias sums, input and recurrent
//! weight gradients, the gradient passed to the layer below — is batched
//! into whole-sequence matrix products afterwards.

use ndarray::{linalg::general_mat_vec_mul, s, Array1, Array2, Axis};

use super::forward::{KindTape, LayerTape, Tape};
use super::{CellKind, LayerParams, ModelParams};
use crate::error::{Error, Result};

/// Gradient of the loss with respect to every parameter, given the upstream
/// scalar `dloss_dout` = ∂loss/∂output. Returns gradients in the same shape
/// as the parameters (see [`ModelParams::zeros_like`]).
pub fn backward(params: &ModelParams, tape: &Tape, dloss_dout: f64) -> Result<ModelParams> {
    check_tape(params, tape)?;

    let mut grad = params.zeros_like();
    grad.head_b[0] = dloss_dout;
    grad.head_w = tape.head_input.mapv(|v| v * dloss_dout);

    let steps = tape.layers[0].h.nrows();
    let top = params.layers.len() - 1;

    // Gradient w.r.t. the current layer's *dropped* output sequence. For the
    // top layer only the final step feeds the head.
    let mut initial = Array2::zeros((steps, params.layers[top].spec.hidden));
    initial
        .row_mut(steps - 1)
        .assign(&params.head_w.mapv(|v| v * dloss_dout));
    let mut upstream = Some(initial);

    for l in (0..params.layers.len()).rev() {
        let layer = &params.layers[l];
        let lt = &tape.layers[l];
        let up = upstream.take().expect("upstream gradient present");
        // Through the inverted-dropout mask: d(pre-dropout h) = dY ⊙ mask.
        let dh_seq = match &lt.mask {
            Some(m) => up * m,
            None => up,
        };
        let dp = layer_backward(layer, l, lt, &dh_seq, &mut grad.layers[l])?;
        if l > 0 {
            // dX = DP · W, handed to the layer below as its dY.
            upstream = Some(dp.dot(&layer.w));
        }
    }
    Ok(grad)
}

fn check_tape(params: &ModelParams, tape: &Tape) -> Result<()> {
    if tape.layers.len() != params.layers.len() {
        return Err(Error::Shape(format!(
            "tape has {} layers, model has {}",
            tape.layers.len(),
            params.layers.len()
        )));
    }
    let mut steps = None;
    for (l, (layer, lt)) in params.layers.iter().zip(&tape.layers).enumerate() {
        let kinds_match = matches!(
            (layer.spec.kind, &lt.kind),
            (CellKind::Srn, KindTape::Srn)
                | (CellKind::Gru, KindTape::Gru { .. })
                | (CellKind::Lstm, KindTape::Lstm { .. })
        );
        if !kinds_match {
            return Err(Error::Shape(format!(
                "tape/model cell kind mismatch at layer {l}"
            )));
        }
        if lt.x.ncols() != layer.input_size
            || lt.h.ncols() != layer.spec.hidden
            || lt.x.nrows() != lt.h.nrows()
        {
            return Err(Error::Shape(format!(
                "tape shapes at layer {l} do not fit the model"
            )));
        }
        if let Some(t) = steps {
            if lt.h.nrows() != t {
                return Err(Error::Shape(format!(
                    "tape step counts disagree at layer {l}"
                )));
            }
        } else {
            if lt.h.nrows() == 0 {
                return Err(Error::Shape("tape records an empty sequence".into()));
            }
            steps = Some(lt.h.nrows());
        }
    }
    if tape.head_input.len() != params.head_w.len() {
        return Err(Error::Shape(format!(
            "tape head input has {} units, head expects {}",
            tape.head_input.len(),
            params.head_w.len()
        )));
    }
    Ok(())
}

/// Reverse-time pass of one layer. Fills this layer's parameter gradients and
/// returns DP, the (T × gates·H) matrix of pre-activation gradients.
fn layer_backward(
    layer: &LayerParams,
    layer_idx: usize,
    lt: &LayerTape,
    dh_seq: &Array2<f64>,
    grad: &mut LayerParams,
) -> Result<Array2<f64>> {
    let steps = lt.h.nrows();
    let h_size = layer.spec.hidden;
    let gh = layer.spec.kind.gates() * h_size;
    let mut dp = Array2::zeros((steps, gh));
    let mut dh_next: Array1<f64> = Array1::zeros(h_size);

    match (&layer.spec.kind, &lt.kind) {
        (CellKind::Srn, KindTape::Srn) => {
            let u_t = layer.u.t();
            for t in (0..steps).rev() {
                for k in 0..h_size {
                    let dh = dh_seq[[t, k]] + dh_next[k];
                    let hv = lt.h[[t, k]];
                    dp[[t, k]] = dh * (1.0 - hv * hv);
                }
                general_mat_vec_mul(1.0, &u_t, &dp.row(t), 0.0, &mut dh_next);
            }
        }
        (CellKind::Gru, KindTape::Gru { z, r, cand, rh }) => {
            let u_zr = layer.u.slice(s![..2 * h_size, ..]);
            let u_zr_t = u_zr.t();
            let u_cand = layer.u.slice(s![2 * h_size.., ..]);
            let u_cand_t = u_cand.t();
            let mut dh_buf: Array1<f64> = Array1::zeros(h_size);
            let mut drh: Array1<f64> = Array1::zeros(h_size);
            for t in (0..steps).rev() {
                // Candidate branch first: its pre-activation gradient feeds
                // the reset gate through rh = r ⊙ h_prev.
                for k in 0..h_size {
                    let dh = dh_seq[[t, k]] + dh_next[k];
                    dh_buf[k] = dh;
                    let cv = cand[[t, k]];
                    dp[[t, 2 * h_size + k]] = dh * z[[t, k]] * (1.0 - cv * cv);
                }
                general_mat_vec_mul(
                    1.0,
                    &u_cand_t,
                    &dp.slice(s![t, 2 * h_size..]),
                    0.0,
                    &mut drh,
                );
                for k in 0..h_size {
                    let h_prev = if t == 0 { 0.0 } else { lt.h[[t - 1, k]] };
                    let zv = z[[t, k]];
                    let rv = r[[t, k]];
                    let dz = dh_buf[k] * (cand[[t, k]] - h_prev);
                    let dr = drh[k] * h_prev;
                    dp[[t, k]] = dz * zv * (1.0 - zv);
                    dp[[t, h_size + k]] = dr * rv * (1.0 - rv);
                }
                // h_prev receives: the z/r recurrences, the (1−z) carry-through,
                // and the candidate recurrence gated by r.
                general_mat_vec_mul(
                    1.0,
                    &u_zr_t,
                    &dp.slice(s![t, ..2 * h_size]),
                    0.0,
                    &mut dh_next,
                );
                for k in 0..h_size {
                    dh_next[k] += dh_buf[k] * (1.0 - z[[t, k]]) + drh[k] * r[[t, k]];
                }
            }
            // The candidate's recurrent weights saw rh, not h_prev.
            let dpc = dp.slice(s![.., 2 * h_size..]);
            grad.u
                .slice_mut(s![2 * h_size.., ..])
                .assign(&dpc.t().dot(rh));
            let h_prev_mat = shifted_h(&lt.h);
            let dzr = dp.slice(s![.., ..2 * h_size]);
            grad.u
                .slice_mut(s![..2 * h_size, ..])
                .assign(&dzr.t().dot(&h_prev_mat));
            finish_common(layer, lt, &dp, grad);
            return Ok(dp);
        }
        (CellKind::Lstm, KindTape::Lstm { i, f, g, o, c, tanh_c }) => {
            let u_t = layer.u.t();
            let mut dc_next: Array1<f64> = Array1::zeros(h_size);
            for t in (0..steps).rev() {
                for k in 0..h_size {
                    let dh = dh_seq[[t, k]] + dh_next[k];
                    let tc = tanh_c[[t, k]];
                    let d_o = dh * tc;
                    let dc = dh * o[[t, k]] * (1.0 - tc * tc) + dc_next[k];
                    let c_prev = if t == 0 { 0.0 } else { c[[t - 1, k]] };
                    let iv = i[[t, k]];
                    let fv = f[[t, k]];
                    let gv = g[[t, k]];
                    let ov = o[[t, k]];
                    dp[[t, k]] = dc * gv * iv * (1.0 - iv);
                    dp[[t, h_size + k]] = dc * c_prev * fv * (1.0 - fv);
                    dp[[t, 2 * h_size + k]] = dc * iv * (1.0 - gv * gv);
                    dp[[t, 3 * h_size + k]] = d_o * ov * (1.0 - ov);
                    dc_next[k] = dc * fv;
                }
                general_mat_vec_mul(1.0, &u_t, &dp.row(t), 0.0, &mut dh_next);
            }
        }
        _ => {
            return Err(Error::Shape(format!(
                "tape/model cell kind mismatch at layer {layer_idx}"
            )))
        }
    }

    // SRN and LSTM recurrent weights all saw the plain shifted hidden state.
    let h_prev_mat = shifted_h(&lt.h);
    grad.u = dp.t().dot(&h_prev_mat);
    finish_common(layer, lt, &dp, grad);
    Ok(dp)
}

/// The hidden sequence each step's recurrence consumed: h shifted down one
/// row, with the zero initial state in the first row.
fn shifted_h(h: &Array2<f64>) -> Array2<f64> {
    let steps = h.nrows();
    let mut shifted = Array2::zeros(h.dim());
    shifted
        .slice_mut(s![1.., ..])
        .assign(&h.slice(s![..steps - 1, ..]));
    shifted
}

/// Gradients every kind shares: biases are column sums of DP, input weights
/// are DP^T · X.
fn finish_common(_layer: &LayerParams, lt: &LayerTape, dp: &Array2<f64>, grad: &mut LayerParams) {
    grad.b = dp.sum_axis(Axis(0));
    grad.w = dp.t().dot(&lt.x);
}
