//! Batched LSTM layer with a hand-derived backward pass.
//!
//! Gate order along the `4h` axis is (input, forget, cell, output). Both an
//! input-side and a recurrent-side bias are kept.

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{s, Array1, Array2, Array3, ArrayView2, ArrayViewMut2, Axis};
use rand::Rng;

use crate::error::{OvrError, Result};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    /// `[4h, input]`
    pub w_ih: Array2<f64>,
    /// `[4h, h]`
    pub w_hh: Array2<f64>,
    pub b_ih: Array1<f64>,
    pub b_hh: Array1<f64>,
}

impl LstmWeights {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmWeights {
            w_ih: Array2::zeros((4 * hidden, input)),
            w_hh: Array2::zeros((4 * hidden, hidden)),
            b_ih: Array1::zeros(4 * hidden),
            b_hh: Array1::zeros(4 * hidden),
        }
    }

    /// Uniform in `±1/sqrt(h)` with the forget-gate bias shifted by +1.
    pub fn init<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let mut draw = |shape: (usize, usize)| {
            Array2::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound))
        };
        let w_ih = draw((4 * hidden, input));
        let w_hh = draw((4 * hidden, hidden));
        let mut b_ih = draw((1, 4 * hidden)).remove_axis(Axis(0));
        let b_hh = draw((1, 4 * hidden)).remove_axis(Axis(0));
        b_ih.slice_mut(s![hidden..2 * hidden]).map_inplace(|b| *b += 1.0);
        LstmWeights {
            w_ih,
            w_hh,
            b_ih,
            b_hh,
        }
    }

    pub fn input_size(&self) -> usize {
        self.w_ih.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_hh.ncols()
    }

    pub fn validate(&self, input: usize, hidden: usize) -> Result<()> {
        let ok = self.w_ih.dim() == (4 * hidden, input)
            && self.w_hh.dim() == (4 * hidden, hidden)
            && self.b_ih.len() == 4 * hidden
            && self.b_hh.len() == 4 * hidden;
        if ok {
            Ok(())
        } else {
            Err(OvrError::Shape(format!(
                "LSTM weights do not match input {input}, hidden {hidden}"
            )))
        }
    }

    /// One step for a batch of rows. `x: [B, in]`, `h, c: [B, h]`.
    /// Writes activated gates into `gates: [B, 4h]` and the new state into
    /// `h_out`, `c_out`.
    pub(crate) fn step_into(
        &self,
        x: ArrayView2<f64>,
        h: ArrayView2<f64>,
        c: ArrayView2<f64>,
        mut gates: ArrayViewMut2<f64>,
        mut h_out: ArrayViewMut2<f64>,
        mut c_out: ArrayViewMut2<f64>,
    ) {
        let hid = self.hidden_size();
        let batch = x.nrows();
        for mut row in gates.rows_mut() {
            row.iter_mut()
                .zip(self.b_ih.iter().zip(&self.b_hh))
                .for_each(|(z, (a, b))| *z = a + b);
        }
        if batch == 1 {
            let mut z = gates.row_mut(0);
            general_mat_vec_mul(1.0, &self.w_ih, &x.row(0), 1.0, &mut z);
            general_mat_vec_mul(1.0, &self.w_hh, &h.row(0), 1.0, &mut z);
        } else {
            general_mat_mul(1.0, &x, &self.w_ih.t(), 1.0, &mut gates);
            general_mat_mul(1.0, &h, &self.w_hh.t(), 1.0, &mut gates);
        }
        for b in 0..batch {
            let mut z = gates.row_mut(b);
            let z = z.as_slice_mut().expect("gate rows are contiguous");
            let c_prev = c.row(b);
            let mut c_new = c_out.row_mut(b);
            let mut h_new = h_out.row_mut(b);
            for j in 0..hid {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[hid + j]);
                let g = z[2 * hid + j].tanh();
                let o = sigmoid(z[3 * hid + j]);
                z[j] = i;
                z[hid + j] = f;
                z[2 * hid + j] = g;
                z[3 * hid + j] = o;
                let cj = f * c_prev[j] + i * g;
                c_new[j] = cj;
                h_new[j] = o * cj.tanh();
            }
        }
    }
}

/// Single-vector LSTM cell step with shape checking.
pub fn lstm_cell_step(
    x: &[f64],
    state: (&[f64], &[f64]),
    weights: &LstmWeights,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let hid = weights.hidden_size();
    weights.validate(x.len(), hid)?;
    if state.0.len() != hid || state.1.len() != hid {
        return Err(OvrError::Shape(format!(
            "state must have {hid} units, got ({}, {})",
            state.0.len(),
            state.1.len()
        )));
    }
    let row = |v: &[f64]| Array2::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
    let (x, h, c) = (row(x), row(state.0), row(state.1));
    let mut gates = Array2::zeros((1, 4 * hid));
    let mut h_out = Array2::zeros((1, hid));
    let mut c_out = Array2::zeros((1, hid));
    weights.step_into(
        x.view(),
        h.view(),
        c.view(),
        gates.view_mut(),
        h_out.view_mut(),
        c_out.view_mut(),
    );
    Ok((h_out.into_raw_vec_and_offset().0, c_out.into_raw_vec_and_offset().0))
}

/// Activations kept from a forward pass over a sequence.
#[derive(Debug, Clone)]
pub struct SequenceCache {
    inputs: Array3<f64>,
    /// `[T, B, 4h]`, post-activation.
    gates: Array3<f64>,
    cells: Array3<f64>,
    hiddens: Array3<f64>,
}

/// Runs the layer over `inputs: [T, B, in]` from a zero state and returns
/// the hidden sequence `[T, B, h]` with the cache needed for backprop.
pub fn forward_sequence(weights: &LstmWeights, inputs: Array3<f64>) -> SequenceCache {
    let (steps, batch, _) = inputs.dim();
    let hid = weights.hidden_size();
    let mut gates = Array3::zeros((steps, batch, 4 * hid));
    let mut cells = Array3::zeros((steps, batch, hid));
    let mut hiddens = Array3::zeros((steps, batch, hid));
    let zeros = Array2::zeros((batch, hid));
    for t in 0..steps {
        let (h_done, mut h_rest) = hiddens.view_mut().split_at(Axis(0), t);
        let (c_done, mut c_rest) = cells.view_mut().split_at(Axis(0), t);
        let (h_prev, c_prev) = if t == 0 {
            (zeros.view(), zeros.view())
        } else {
            (
                h_done.index_axis(Axis(0), t - 1),
                c_done.index_axis(Axis(0), t - 1),
            )
        };
        weights.step_into(
            inputs.index_axis(Axis(0), t),
            h_prev,
            c_prev,
            gates.index_axis_mut(Axis(0), t),
            h_rest.index_axis_mut(Axis(0), 0),
            c_rest.index_axis_mut(Axis(0), 0),
        );
    }
    SequenceCache {
        inputs,
        gates,
        cells,
        hiddens,
    }
}

impl SequenceCache {
    pub fn outputs(&self) -> &Array3<f64> {
        &self.hiddens
    }

    pub fn into_outputs(self) -> Array3<f64> {
        self.hiddens
    }
}

/// Backpropagation through time. `d_out: [T, B, h]` is the loss gradient
/// with respect to every hidden output. Returns the input gradient
/// `[T, B, in]` and the weight gradients.
pub fn backward_sequence(
    weights: &LstmWeights,
    cache: &SequenceCache,
    d_out: &Array3<f64>,
) -> (Array3<f64>, LstmWeights) {
    let (steps, batch, input) = cache.inputs.dim();
    let hid = weights.hidden_size();
    let mut grads = LstmWeights::zeros(input, hid);
    let mut d_inputs = Array3::zeros((steps, batch, input));
    let mut dh_next = Array2::<f64>::zeros((batch, hid));
    let mut dc_next = Array2::<f64>::zeros((batch, hid));
    let mut dz = Array2::<f64>::zeros((batch, 4 * hid));
    let zeros = Array2::<f64>::zeros((batch, hid));
    for t in (0..steps).rev() {
        let gates = cache.gates.index_axis(Axis(0), t);
        let cells = cache.cells.index_axis(Axis(0), t);
        let (h_prev, c_prev) = if t == 0 {
            (zeros.view(), zeros.view())
        } else {
            (
                cache.hiddens.index_axis(Axis(0), t - 1),
                cache.cells.index_axis(Axis(0), t - 1),
            )
        };
        let d_out_t = d_out.index_axis(Axis(0), t);
        for b in 0..batch {
            let g = gates.row(b);
            let mut dzr = dz.row_mut(b);
            for j in 0..hid {
                let (i, f, gg, o) = (g[j], g[hid + j], g[2 * hid + j], g[3 * hid + j]);
                let tc = cells[[b, j]].tanh();
                let dh = d_out_t[[b, j]] + dh_next[[b, j]];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[[b, j]];
                dzr[j] = dc * gg * i * (1.0 - i);
                dzr[hid + j] = dc * c_prev[[b, j]] * f * (1.0 - f);
                dzr[2 * hid + j] = dc * i * (1.0 - gg * gg);
                dzr[3 * hid + j] = dh * tc * o * (1.0 - o);
                dc_next[[b, j]] = dc * f;
            }
        }
        let x = cache.inputs.index_axis(Axis(0), t);
        general_mat_mul(1.0, &dz.t(), &x, 1.0, &mut grads.w_ih);
        general_mat_mul(1.0, &dz.t(), &h_prev, 1.0, &mut grads.w_hh);
        let db = dz.sum_axis(Axis(0));
        grads.b_ih += &db;
        grads.b_hh += &db;
        general_mat_mul(
            1.0,
            &dz,
            &weights.w_ih,
            0.0,
            &mut d_inputs.index_axis_mut(Axis(0), t),
        );
        general_mat_mul(1.0, &dz, &weights.w_hh, 0.0, &mut dh_next);
    }
    (d_inputs, grads)
}
