//! Forward pass: batched input transforms, sequential recurrence, tape.
//!
//! Each layer first applies its input-to-hidden weights to the whole
//! sequence as one matrix product, then walks the 96 steps sequentially for
//! the recurrent part. Training mode draws inverted-dropout masks for every
//! layer's output sequence (row-major draw order: step, then unit) and
//! records a [`Tape`] for [`super::backward`].

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{CellKind, LayerParams, ModelParams};
use crate::error::{Error, Result};

/// out = U·v, one dot product per row. Rows split across the rayon pool when
/// the matrix is large enough for the fork to pay off (the recurrence of
/// production-sized layers); each row is a single independent `dot` written to its
/// own slot, so the result is bit-identical for any thread count, including
/// the sequential fallback.
fn mat_vec_into(u: ArrayView2<f64>, v: ArrayView1<f64>, mut out: ArrayViewMut1<f64>) {
    debug_assert_eq!(u.nrows(), out.len());
    debug_assert_eq!(u.ncols(), v.len());
    #[cfg(feature = "parallel")]
    {
        const PAR_MIN_ELEMENTS: usize = 1 << 19; // 4 MB of f64
        if u.len() >= PAR_MIN_ELEMENTS && rayon::current_num_threads() > 1 {
            if let Some(slice) = out.as_slice_mut() {
                use rayon::prelude::*;
                let chunk = u.nrows().div_ceil(rayon::current_num_threads());
                slice
                    .par_chunks_mut(chunk)
                    .enumerate()
                    .for_each(|(block_idx, block)| {
                        let r0 = block_idx * chunk;
                        for (j, y) in block.iter_mut().enumerate() {
                            *y = u.row(r0 + j).dot(&v);
                        }
                    });
                return;
            }
        }
    }
    for (j, y) in out.iter_mut().enumerate() {
        *y = u.row(j).dot(&v);
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-kind cached activations for one layer over the whole sequence.
#[derive(Debug, Clone)]
pub(crate) enum KindTape {
    Srn,
    Gru {
        z: Array2<f64>,
        r: Array2<f64>,
        cand: Array2<f64>,
        /// r ⊙ h_prev, the candidate's recurrent input.
        rh: Array2<f64>,
    },
    Lstm {
        i: Array2<f64>,
        f: Array2<f64>,
        g: Array2<f64>,
        o: Array2<f64>,
        c: Array2<f64>,
        tanh_c: Array2<f64>,
    },
}

/// Everything backward needs about one layer's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerTape {
    /// The sequence this layer consumed (after the layer below's dropout).
    pub(crate) x: Array2<f64>,
    /// Pre-dropout hidden outputs, one row per step.
    pub(crate) h: Array2<f64>,
    pub(crate) kind: KindTape,
    /// Inverted-dropout mask (entries 0 or 1/(1−rate)); None when rate = 0.
    pub(crate) mask: Option<Array2<f64>>,
}

/// Recorded forward pass of one sample.
#[derive(Debug, Clone)]
pub struct Tape {
    pub(crate) layers: Vec<LayerTape>,
    /// The head's input: the top layer's final hidden state after dropout.
    pub(crate) head_input: Array1<f64>,
    pub output: f64,
}

/// Cached gate activations of a single [`cell_forward`] step.
#[derive(Debug, Clone)]
pub enum StepCache {
    Srn,
    Gru {
        z: Array1<f64>,
        r: Array1<f64>,
        candidate: Array1<f64>,
    },
    Lstm {
        i: Array1<f64>,
        f: Array1<f64>,
        g: Array1<f64>,
        o: Array1<f64>,
        tanh_c: Array1<f64>,
    },
}

fn check_finite(h: &Array1<f64>, layer: usize, step: usize) -> Result<()> {
    if h.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "non-finite activation at layer {layer} step {step}"
        )))
    }
}

// NaN is tolerated here — non-finite values are reported as a proper
// `Error::Numerical` by `check_finite`, not a panic.
#[cfg(debug_assertions)]
fn assert_gate_ranges(sigmas: &[&Array1<f64>], tanhs: &[&Array1<f64>]) {
    for s in sigmas {
        debug_assert!(
            s.iter().all(|v| v.is_nan() || (0.0..=1.0).contains(v)),
            "sigmoid gate left [0,1]"
        );
    }
    for t in tanhs {
        debug_assert!(
            t.iter().all(|v| v.is_nan() || (-1.0..=1.0).contains(v)),
            "tanh output left [-1,1]"
        );
    }
}

#[cfg(not(debug_assertions))]
fn assert_gate_ranges(_sigmas: &[&Array1<f64>], _tanhs: &[&Array1<f64>]) {}

/// One recurrent step of `layer` — the reference single-step formulation.
/// LSTM takes and returns a cell state; GRU and SRN do not.
pub fn cell_forward(
    layer: &LayerParams,
    x_t: &Array1<f64>,
    h_prev: &Array1<f64>,
    c_prev: Option<&Array1<f64>>,
) -> Result<(Array1<f64>, Option<Array1<f64>>, StepCache)> {
    let h_size = layer.spec.hidden;
    if x_t.len() != layer.input_size || h_prev.len() != h_size {
        return Err(Error::Shape(format!(
            "cell_forward got x of {} and h of {}, layer wants {} and {}",
            x_t.len(),
            h_prev.len(),
            layer.input_size,
            h_size
        )));
    }
    match layer.spec.kind {
        CellKind::Srn => {
            let pre = layer.w.dot(x_t) + layer.u.dot(h_prev) + &layer.b;
            let h = pre.mapv(f64::tanh);
            assert_gate_ranges(&[], &[&h]);
            Ok((h, None, StepCache::Srn))
        }
        CellKind::Gru => {
            let px = layer.w.dot(x_t) + &layer.b;
            let zr = px.slice(s![..2 * h_size]).to_owned()
                + layer.u.slice(s![..2 * h_size, ..]).dot(h_prev);
            let z = zr.slice(s![..h_size]).mapv(sigmoid);
            let r = zr.slice(s![h_size..]).mapv(sigmoid);
            let rh = &r * h_prev;
            let cand_pre = px.slice(s![2 * h_size..]).to_owned()
                + layer.u.slice(s![2 * h_size.., ..]).dot(&rh);
            let candidate = cand_pre.mapv(f64::tanh);
            let h = (1.0 - &z) * h_prev + &z * &candidate;
            assert_gate_ranges(&[&z, &r], &[&candidate]);
            Ok((h, None, StepCache::Gru { z, r, candidate }))
        }
        CellKind::Lstm => {
            let c_prev = c_prev.ok_or_else(|| {
                Error::Shape("LSTM cell_forward needs a previous cell state".into())
            })?;
            if c_prev.len() != h_size {
                return Err(Error::Shape("cell state width mismatch".into()));
            }
            let pre = layer.w.dot(x_t) + layer.u.dot(h_prev) + &layer.b;
            let i = pre.slice(s![..h_size]).mapv(sigmoid);
            let f = pre.slice(s![h_size..2 * h_size]).mapv(sigmoid);
            let g = pre.slice(s![2 * h_size..3 * h_size]).mapv(f64::tanh);
            let o = pre.slice(s![3 * h_size..]).mapv(sigmoid);
            let c = &f * c_prev + &i * &g;
            let tanh_c = c.mapv(f64::tanh);
            let h = &o * &tanh_c;
            assert_gate_ranges(&[&i, &f, &o], &[&g, &tanh_c]);
            Ok((
                h,
                Some(c),
                StepCache::Lstm { i, f, g, o, tanh_c },
            ))
        }
    }
}

/// Run one layer over the whole sequence. `tape` toggles cache recording;
/// the math is identical either way.
fn run_layer(
    layer: &LayerParams,
    layer_idx: usize,
    input: &Array2<f64>,
    record: bool,
) -> Result<(Array2<f64>, KindTape)> {
    let steps = input.nrows();
    let h_size = layer.spec.hidden;
    let gh = layer.spec.kind.gates() * h_size;

    // Batched input transform: one matrix product for all steps.
    let pre_x = layer.w.dot(&input.t()); // (GH, T)

    let mut out = Array2::zeros((steps, h_size));
    let mut kind_tape = if record {
        match layer.spec.kind {
            CellKind::Srn => KindTape::Srn,
            CellKind::Gru => KindTape::Gru {
                z: Array2::zeros((steps, h_size)),
                r: Array2::zeros((steps, h_size)),
                cand: Array2::zeros((steps, h_size)),
                rh: Array2::zeros((steps, h_size)),
            },
            CellKind::Lstm => KindTape::Lstm {
                i: Array2::zeros((steps, h_size)),
                f: Array2::zeros((steps, h_size)),
                g: Array2::zeros((steps, h_size)),
                o: Array2::zeros((steps, h_size)),
                c: Array2::zeros((steps, h_size)),
                tanh_c: Array2::zeros((steps, h_size)),
            },
        }
    } else {
        KindTape::Srn
    };

    let mut hv: Array1<f64> = Array1::zeros(h_size);
    let mut cv: Array1<f64> = Array1::zeros(h_size);
    let mut preact: Array1<f64> = Array1::zeros(gh);
    let mut rh_buf: Array1<f64> = Array1::zeros(h_size);
    let mut cand_buf: Array1<f64> = Array1::zeros(h_size);

    for t in 0..steps {
        match layer.spec.kind {
            CellKind::Srn => {
                mat_vec_into(layer.u.view(), hv.view(), preact.view_mut());
                for k in 0..gh {
                    preact[k] += pre_x[[k, t]] + layer.b[k];
                }
                for k in 0..h_size {
                    hv[k] = preact[k].tanh();
                    debug_assert!(hv[k].is_nan() || (-1.0..=1.0).contains(&hv[k]));
                }
            }
            CellKind::Gru => {
                // z and r share the fused recurrent product over h_prev.
                mat_vec_into(
                    layer.u.slice(s![..2 * h_size, ..]),
                    hv.view(),
                    preact.slice_mut(s![..2 * h_size]),
                );
                for k in 0..2 * h_size {
                    preact[k] += pre_x[[k, t]] + layer.b[k];
                }
                for k in 0..2 * h_size {
                    preact[k] = sigmoid(preact[k]);
                    debug_assert!(preact[k].is_nan() || (0.0..=1.0).contains(&preact[k]));
                }
                // Candidate sees r ⊙ h_prev through its own recurrent block.
                for k in 0..h_size {
                    rh_buf[k] = preact[h_size + k] * hv[k];
                }
                mat_vec_into(
                    layer.u.slice(s![2 * h_size.., ..]),
                    rh_buf.view(),
                    cand_buf.view_mut(),
                );
                for k in 0..h_size {
                    cand_buf[k] =
                        (cand_buf[k] + pre_x[[2 * h_size + k, t]] + layer.b[2 * h_size + k]).tanh();
                    debug_assert!(cand_buf[k].is_nan() || (-1.0..=1.0).contains(&cand_buf[k]));
                }
                if let KindTape::Gru { z, r, cand, rh } = &mut kind_tape {
                    for k in 0..h_size {
                        z[[t, k]] = preact[k];
                        r[[t, k]] = preact[h_size + k];
                        cand[[t, k]] = cand_buf[k];
                        rh[[t, k]] = rh_buf[k];
                    }
                }
                for k in 0..h_size {
                    let z = preact[k];
                    hv[k] = (1.0 - z) * hv[k] + z * cand_buf[k];
                }
            }
            CellKind::Lstm => {
                mat_vec_into(layer.u.view(), hv.view(), preact.view_mut());
                for k in 0..gh {
                    preact[k] += pre_x[[k, t]] + layer.b[k];
                }
                for k in 0..h_size {
                    let i = sigmoid(preact[k]);
                    let f = sigmoid(preact[h_size + k]);
                    let g = preact[2 * h_size + k].tanh();
                    let o = sigmoid(preact[3 * h_size + k]);
                    debug_assert!(
                        [i, f, o].iter().all(|v| v.is_nan() || (0.0..=1.0).contains(v))
                            && (g.is_nan() || (-1.0..=1.0).contains(&g))
                    );
                    let c = f * cv[k] + i * g;
                    let tanh_c = c.tanh();
                    if let KindTape::Lstm {
                        i: ti,
                        f: tf,
                        g: tg,
                        o: to,
                        c: tc,
                        tanh_c: ttc,
                    } = &mut kind_tape
                    {
                        ti[[t, k]] = i;
                        tf[[t, k]] = f;
                        tg[[t, k]] = g;
                        to[[t, k]] = o;
                        tc[[t, k]] = c;
                        ttc[[t, k]] = tanh_c;
                    }
                    cv[k] = c;
                    hv[k] = o * tanh_c;
                }
            }
        }
        check_finite(&hv, layer_idx, t)?;
        out.row_mut(t).assign(&hv);
    }
    Ok((out, kind_tape))
}

fn check_input_shape(params: &ModelParams, x: &Array2<f64>) -> Result<()> {
    if x.ncols() != params.spec.input_size {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            params.spec.input_size
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("input sequence is empty".into()));
    }
    Ok(())
}

/// Inference-mode forward pass: dropout is a no-op, no tape is recorded.
pub fn forward_eval(params: &ModelParams, x: &Array2<f64>) -> Result<f64> {
    check_input_shape(params, x)?;
    let mut seq = x.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let (out, _) = run_layer(layer, l, &seq, false)?;
        seq = out;
    }
    let output = params.head_w.dot(&seq.row(seq.nrows() - 1)) + params.head_bias();
    if !output.is_finite() {
        return Err(Error::Numerical("non-finite head output".into()));
    }
    Ok(output)
}

/// Training-mode forward pass: applies inverted dropout to every layer's
/// output sequence with masks drawn from `rng` (row-major: step, then unit)
/// and records the tape for backpropagation.
pub fn forward_train(
    params: &ModelParams,
    x: &Array2<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Tape)> {
    check_input_shape(params, x)?;
    let mut layers = Vec::with_capacity(params.layers.len());
    let mut seq = x.to_owned();
    for (l, layer) in params.layers.iter().enumerate() {
        let (h, kind) = run_layer(layer, l, &seq, true)?;
        let rate = layer.spec.dropout;
        let mask = if rate > 0.0 {
            let scale = 1.0 / (1.0 - rate);
            let mut m = Array2::zeros(h.dim());
            for t in 0..m.nrows() {
                for k in 0..m.ncols() {
                    m[[t, k]] = if rng.gen::<f64>() >= rate { scale } else { 0.0 };
                }
            }
            Some(m)
        } else {
            None
        };
        let dropped = match &mask {
            Some(m) => &h * m,
            None => h.clone(),
        };
        layers.push(LayerTape {
            x: seq,
            h,
            kind,
            mask,
        });
        seq = dropped;
    }
    let head_input = seq.row(seq.nrows() - 1).to_owned();
    let output = params.head_w.dot(&head_input) + params.head_bias();
    if !output.is_finite() {
        return Err(Error::Numerical("non-finite head output".into()));
    }
    Ok((
        output,
        Tape {
            layers,
            head_input,
            output,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_params, LayerSpec, NetworkSpec};
    use crate::rng::{stream_rng, Stream};
    use ndarray::array;
    use rand::Rng;

    fn zero_layer(kind: CellKind, input: usize, hidden: usize) -> LayerParams {
        LayerParams {
            spec: LayerSpec {
                kind,
                hidden,
                dropout: 0.0,
            },
            input_size: input,
            w: Array2::zeros((kind.gates() * hidden, input)),
            u: Array2::zeros((kind.gates() * hidden, hidden)),
            b: Array1::zeros(kind.gates() * hidden),
        }
    }

    #[test]
    fn lstm_cell_with_zero_params_stays_at_zero() {
        let layer = zero_layer(CellKind::Lstm, 3, 2);
        let x = array![0.7, -1.2, 0.3];
        let h0 = Array1::zeros(2);
        let c0 = Array1::zeros(2);
        let (h, c, _) = cell_forward(&layer, &x, &h0, Some(&c0)).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
        assert!(c.unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn srn_cell_with_zero_params_gives_zero() {
        let layer = zero_layer(CellKind::Srn, 3, 2);
        let (h, c, _) =
            cell_forward(&layer, &array![5.0, -5.0, 1.0], &Array1::zeros(2), None).unwrap();
        assert!(h.iter().all(|v| *v == 0.0));
        assert!(c.is_none());
    }

    #[test]
    fn saturated_forget_gate_preserves_cell_state() {
        // Zero weights, forget bias +20: c = σ(20)·c_prev + σ(0)·tanh(0),
        // so a unit cell state survives to within 1e-8.
        let mut layer = zero_layer(CellKind::Lstm, 1, 1);
        layer.b[1] = 20.0;
        let (h, c, _) = cell_forward(
            &layer,
            &array![0.0],
            &Array1::zeros(1),
            Some(&array![1.0]),
        )
        .unwrap();
        let c = c.unwrap();
        assert!((c[0] - 1.0).abs() < 1e-8, "c = {}", c[0]);
        // h = σ(0) · tanh(c) ≈ 0.5 · tanh(1).
        assert!((h[0] - 0.5 * c[0].tanh()).abs() < 1e-12);
    }

    #[test]
    fn zero_initialized_network_outputs_head_bias() {
        for kind in [CellKind::Srn, CellKind::Gru, CellKind::Lstm] {
            let spec = NetworkSpec::stacked(kind, 4, &[3, 2], &[0.0, 0.0]).unwrap();
            let mut params = init_params(&spec, 1).unwrap();
            for slice in params.slices_mut() {
                for v in slice {
                    *v = 0.0;
                }
            }
            params.head_b[0] = 0.75;
            let x = Array2::from_elem((6, 4), 2.5);
            assert_eq!(forward_eval(&params, &x).unwrap(), 0.75);
        }
    }

    #[test]
    fn eval_and_rate_zero_train_agree_bitwise() {
        for kind in [CellKind::Srn, CellKind::Gru, CellKind::Lstm] {
            let spec = NetworkSpec::stacked(kind, 3, &[4, 2], &[0.0, 0.0]).unwrap();
            let params = init_params(&spec, 5).unwrap();
            let mut rng = stream_rng(5, Stream::Init, 1, 1);
            let x = Array2::from_shape_fn((7, 3), |_| rng.gen_range(-1.0..1.0));
            let mut drop_rng = stream_rng(0, Stream::Dropout, 0, 0);
            let (out, tape) = forward_train(&params, &x, &mut drop_rng).unwrap();
            let eval = forward_eval(&params, &x).unwrap();
            assert_eq!(out.to_bits(), eval.to_bits());
            assert!(tape.layers.iter().all(|l| l.mask.is_none()));
        }
    }

    #[test]
    fn same_rng_position_gives_identical_training_passes() {
        let spec = NetworkSpec::stacked(CellKind::Lstm, 3, &[4], &[0.4]).unwrap();
        let params = init_params(&spec, 5).unwrap();
        let x = Array2::from_elem((6, 3), 0.3);
        let mut a = stream_rng(9, Stream::Dropout, 3, 14);
        let mut b = stream_rng(9, Stream::Dropout, 3, 14);
        let (out_a, tape_a) = forward_train(&params, &x, &mut a).unwrap();
        let (out_b, tape_b) = forward_train(&params, &x, &mut b).unwrap();
        assert_eq!(out_a.to_bits(), out_b.to_bits());
        assert_eq!(tape_a.layers[0].mask, tape_b.layers[0].mask);
        // A different position draws a different mask.
        let mut c = stream_rng(9, Stream::Dropout, 3, 15);
        let (_, tape_c) = forward_train(&params, &x, &mut c).unwrap();
        assert_ne!(tape_a.layers[0].mask, tape_c.layers[0].mask);
    }

    #[test]
    fn inverted_dropout_preserves_expectation() {
        // Mean of mask entries over many draws ≈ 1 (each entry is 0 with
        // probability `rate`, else 1/(1−rate)).
        let rate = 0.35;
        let spec = NetworkSpec::stacked(CellKind::Srn, 1, &[10], &[rate]).unwrap();
        let params = init_params(&spec, 2).unwrap();
        let x = Array2::from_elem((100, 1), 0.1);
        let mut rng = stream_rng(4, Stream::Dropout, 0, 0);
        let mut sum = 0.0;
        let mut count = 0usize;
        let scale = 1.0 / (1.0 - rate);
        for _ in 0..10 {
            let (_, tape) = forward_train(&params, &x, &mut rng).unwrap();
            let mask = tape.layers[0].mask.as_ref().unwrap();
            for v in mask {
                assert!(*v == 0.0 || (*v - scale).abs() < 1e-15);
                sum += *v;
                count += 1;
            }
        }
        let mean = sum / count as f64;
        assert!((mean - 1.0).abs() < 0.02, "mask mean {mean}");
    }

    #[test]
    fn batched_layer_matches_single_step_reference() {
        // run_layer's fused path must agree with cell_forward stepped by hand.
        for kind in [CellKind::Srn, CellKind::Gru, CellKind::Lstm] {
            let spec = NetworkSpec::stacked(kind, 3, &[4], &[0.0]).unwrap();
            let params = init_params(&spec, 21).unwrap();
            let layer = &params.layers[0];
            let mut rng = stream_rng(21, Stream::Init, 2, 2);
            let x = Array2::from_shape_fn((5, 3), |_| rng.gen_range(-1.0..1.0));

            let mut h = Array1::zeros(4);
            let mut c = Array1::zeros(4);
            for t in 0..x.nrows() {
                let c_arg = (kind == CellKind::Lstm).then_some(&c);
                let (h_new, c_new, _) =
                    cell_forward(layer, &x.row(t).to_owned(), &h, c_arg).unwrap();
                h = h_new;
                if let Some(c_new) = c_new {
                    c = c_new;
                }
            }
            let manual = params.head_w.dot(&h) + params.head_bias();
            let fused = forward_eval(&params, &x).unwrap();
            assert!(
                (manual - fused).abs() <= 1e-12 * manual.abs().max(1.0),
                "{}: manual {manual}, fused {fused}",
                kind.name()
            );
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let spec = NetworkSpec::stacked(CellKind::Lstm, 3, &[4], &[0.0]).unwrap();
        let params = init_params(&spec, 1).unwrap();
        let wide = Array2::zeros((5, 7));
        assert!(matches!(
            forward_eval(&params, &wide).unwrap_err(),
            Error::Shape(_)
        ));
        let empty = Array2::zeros((0, 3));
        assert!(matches!(
            forward_eval(&params, &empty).unwrap_err(),
            Error::Shape(_)
        ));
        // LSTM single-step reference requires a cell state.
        let layer = &params.layers[0];
        assert!(matches!(
            cell_forward(layer, &Array1::zeros(3), &Array1::zeros(4), None).unwrap_err(),
            Error::Shape(_)
        ));
    }

    #[test]
    fn non_finite_input_is_a_numerical_error() {
        let spec = NetworkSpec::stacked(CellKind::Srn, 2, &[3], &[0.0]).unwrap();
        let params = init_params(&spec, 1).unwrap();
        let mut x = Array2::zeros((4, 2));
        x[[2, 1]] = f64::NAN;
        let err = forward_eval(&params, &x).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
        assert!(err.to_string().contains("layer 0 step 2"));
    }
}
