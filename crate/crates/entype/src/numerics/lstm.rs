//! Standard LSTM cell (input/forget/output/candidate gates, no peepholes)
//! with cached forward runs and an analytic backward pass over sequences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, NumericsError, Parameter, Tensor, INIT_SCALE};

/// Learnable weights for one LSTM direction.
///
/// Each gate matrix has shape `hidden_size x (input_size + hidden_size)`
/// and acts on the concatenation `[x_t; h_{t-1}]`; biases have shape
/// `hidden_size`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LstmWeights {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_input: Parameter,
    pub w_forget: Parameter,
    pub w_output: Parameter,
    pub w_cell: Parameter,
    pub b_input: Parameter,
    pub b_forget: Parameter,
    pub b_output: Parameter,
    pub b_cell: Parameter,
}

impl LstmWeights {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let mat = || Parameter::zeros(vec![hidden_size, input_size + hidden_size]);
        let bias = || Parameter::zeros(vec![hidden_size]);
        Self {
            input_size,
            hidden_size,
            w_input: mat(),
            w_forget: mat(),
            w_output: mat(),
            w_cell: mat(),
            b_input: bias(),
            b_forget: bias(),
            b_output: bias(),
            b_cell: bias(),
        }
    }

    /// Seeded uniform init for gate matrices; forget-gate bias starts at 1.0
    /// for stable early training, the other biases at zero.
    pub fn init<R: Rng>(input_size: usize, hidden_size: usize, rng: &mut R) -> Self {
        let mut w = Self::zeros(input_size, hidden_size);
        for mat in [
            &mut w.w_input,
            &mut w.w_forget,
            &mut w.w_output,
            &mut w.w_cell,
        ] {
            for v in mat.value.data_mut() {
                *v = rng.random_range(-INIT_SCALE..INIT_SCALE);
            }
        }
        w.b_forget.value.fill(1.0);
        w
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![
            &self.w_input,
            &self.w_forget,
            &self.w_output,
            &self.w_cell,
            &self.b_input,
            &self.b_forget,
            &self.b_output,
            &self.b_cell,
        ]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![
            &mut self.w_input,
            &mut self.w_forget,
            &mut self.w_output,
            &mut self.w_cell,
            &mut self.b_input,
            &mut self.b_forget,
            &mut self.b_output,
            &mut self.b_cell,
        ]
    }

    fn check_step_shapes(
        &self,
        u: &Tensor,
        h_prev: &Tensor,
        s_prev: &Tensor,
    ) -> Result<(), NumericsError> {
        if u.len() != self.input_size {
            return Err(NumericsError::ShapeMismatch {
                expected: vec![self.input_size],
                actual: u.shape().to_vec(),
            });
        }
        if h_prev.len() != self.hidden_size || s_prev.len() != self.hidden_size {
            return Err(NumericsError::ShapeMismatch {
                expected: vec![self.hidden_size],
                actual: h_prev.shape().to_vec(),
            });
        }
        Ok(())
    }
}

/// Per-step values cached by a forward run, enough to replay the gate
/// equations backwards.
#[derive(Clone, Debug)]
pub struct LstmStep {
    pub z: Vec<f64>, // [x_t; h_{t-1}]
    pub gate_input: Vec<f64>,
    pub gate_forget: Vec<f64>,
    pub gate_output: Vec<f64>,
    pub candidate: Vec<f64>,
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub output: Vec<f64>,
    pub cell_prev: Vec<f64>,
}

/// Cached forward run of an LSTM over a sequence, starting from zero states.
#[derive(Clone, Debug)]
pub struct LstmCache {
    pub steps: Vec<LstmStep>,
}

impl LstmCache {
    pub fn output_at(&self, t: usize) -> &[f64] {
        &self.steps[t].output
    }

    pub fn final_output(&self) -> &[f64] {
        &self.steps.last().expect("non-empty sequence").output
    }
}

fn step_raw(w: &LstmWeights, x: &[f64], h_prev: &[f64], s_prev: &[f64]) -> LstmStep {
    let dh = w.hidden_size;
    let mut z = Vec::with_capacity(x.len() + h_prev.len());
    z.extend_from_slice(x);
    z.extend_from_slice(h_prev);

    let mut gate_input = w.w_input.value.matvec(&z);
    let mut gate_forget = w.w_forget.value.matvec(&z);
    let mut gate_output = w.w_output.value.matvec(&z);
    let mut candidate = w.w_cell.value.matvec(&z);
    for j in 0..dh {
        gate_input[j] = sigmoid(gate_input[j] + w.b_input.value.data()[j]);
        gate_forget[j] = sigmoid(gate_forget[j] + w.b_forget.value.data()[j]);
        gate_output[j] = sigmoid(gate_output[j] + w.b_output.value.data()[j]);
        candidate[j] = (candidate[j] + w.b_cell.value.data()[j]).tanh();
    }

    let mut cell = vec![0.0; dh];
    let mut cell_tanh = vec![0.0; dh];
    let mut output = vec![0.0; dh];
    for j in 0..dh {
        cell[j] = gate_forget[j] * s_prev[j] + gate_input[j] * candidate[j];
        cell_tanh[j] = cell[j].tanh();
        output[j] = gate_output[j] * cell_tanh[j];
    }

    LstmStep {
        z,
        gate_input,
        gate_forget,
        gate_output,
        candidate,
        cell,
        cell_tanh,
        output,
        cell_prev: s_prev.to_vec(),
    }
}

/// One LSTM step: returns the new output and cell state.
pub fn lstm_cell_step(
    u: &Tensor,
    h_prev: &Tensor,
    s_prev: &Tensor,
    w: &LstmWeights,
) -> Result<(Tensor, Tensor), NumericsError> {
    w.check_step_shapes(u, h_prev, s_prev)?;
    let step = step_raw(w, u.data(), h_prev.data(), s_prev.data());
    Ok((
        Tensor::vector(step.output)?,
        Tensor::vector(step.cell)?,
    ))
}

/// Runs the LSTM over `xs` from zero initial states, caching every step.
pub fn lstm_forward(w: &LstmWeights, xs: &[&[f64]]) -> LstmCache {
    let dh = w.hidden_size;
    let mut h = vec![0.0; dh];
    let mut s = vec![0.0; dh];
    let mut steps = Vec::with_capacity(xs.len());
    for x in xs {
        let step = step_raw(w, x, &h, &s);
        h = step.output.clone();
        s = step.cell.clone();
        steps.push(step);
    }
    LstmCache { steps }
}

/// Backpropagates through a cached run. `d_outputs[t]` is the loss gradient
/// on the step-`t` output (empty slice for steps without one). Accumulates
/// into the weight gradients; input gradients are discarded because the
/// embeddings feeding the LSTM are frozen.
pub fn lstm_backward(w: &mut LstmWeights, cache: &LstmCache, d_outputs: &[Vec<f64>]) {
    let dh = w.hidden_size;
    let dm = w.input_size;
    debug_assert_eq!(cache.steps.len(), d_outputs.len());

    let mut dh_next = vec![0.0; dh];
    let mut ds_next = vec![0.0; dh];

    for (step, d_out) in cache.steps.iter().zip(d_outputs).rev() {
        let mut dh_t = dh_next.clone();
        if !d_out.is_empty() {
            for (a, b) in dh_t.iter_mut().zip(d_out) {
                *a += b;
            }
        }

        let mut d_pre_input = vec![0.0; dh];
        let mut d_pre_forget = vec![0.0; dh];
        let mut d_pre_output = vec![0.0; dh];
        let mut d_pre_cand = vec![0.0; dh];
        let mut ds_prev = vec![0.0; dh];

        for j in 0..dh {
            let o = step.gate_output[j];
            let i = step.gate_input[j];
            let f = step.gate_forget[j];
            let g = step.candidate[j];
            let ct = step.cell_tanh[j];

            let d_o = dh_t[j] * ct;
            let ds = ds_next[j] + dh_t[j] * o * (1.0 - ct * ct);

            let d_i = ds * g;
            let d_f = ds * step.cell_prev[j];
            let d_g = ds * i;
            ds_prev[j] = ds * f;

            d_pre_input[j] = d_i * i * (1.0 - i);
            d_pre_forget[j] = d_f * f * (1.0 - f);
            d_pre_output[j] = d_o * o * (1.0 - o);
            d_pre_cand[j] = d_g * (1.0 - g * g);
        }

        w.w_input.grad.add_outer(&d_pre_input, &step.z);
        w.w_forget.grad.add_outer(&d_pre_forget, &step.z);
        w.w_output.grad.add_outer(&d_pre_output, &step.z);
        w.w_cell.grad.add_outer(&d_pre_cand, &step.z);
        w.b_input.grad.add_slice(&d_pre_input);
        w.b_forget.grad.add_slice(&d_pre_forget);
        w.b_output.grad.add_slice(&d_pre_output);
        w.b_cell.grad.add_slice(&d_pre_cand);

        // dz = sum over gates of W^T d_pre; the h part feeds the previous step.
        let mut dz = w.w_input.value.matvec_t(&d_pre_input);
        for (a, b) in dz.iter_mut().zip(w.w_forget.value.matvec_t(&d_pre_forget)) {
            *a += b;
        }
        for (a, b) in dz.iter_mut().zip(w.w_output.value.matvec_t(&d_pre_output)) {
            *a += b;
        }
        for (a, b) in dz.iter_mut().zip(w.w_cell.value.matvec_t(&d_pre_cand)) {
            *a += b;
        }

        dh_next.copy_from_slice(&dz[dm..]);
        ds_next = ds_prev;
    }
}
