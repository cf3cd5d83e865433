//! Bidirectional LSTM over token columns.
//!
//! Standard four-gate cell: `i,f,o = σ(W·x + U·h + b)`, `g = tanh(W·x + U·h
//! + b)`, `c = f⊗c_prev + i⊗g`, `h = o⊗tanh(c)`. Two independent parameter
//! sets run left-to-right and right-to-left over the sentence; the output
//! stacks both hidden sequences time-aligned, forward direction on top.

use crate::error::{Error, Result};
use crate::layer::{Layer, LayerParams, ParamEntry};
use crate::rng::Rng;
use crate::tensor::{init, sigmoid, InitScheme, Tensor};

const GATES: [&str; 4] = ["i", "f", "g", "o"];

fn gate_names(gate: &str) -> (String, String, String) {
    (format!("w_{gate}"), format!("u_{gate}"), format!("b_{gate}"))
}

fn new_direction_params(d_in: usize, d_h: usize, rng: &mut Rng) -> Result<LayerParams> {
    let mut params = LayerParams::new();
    for gate in GATES {
        let (w, u, b) = gate_names(gate);
        params.add(&w, init(&[d_h, d_in], InitScheme::ScaledUniform, rng))?;
        params.add(&u, init(&[d_h, d_h], InitScheme::ScaledUniform, rng))?;
        // forget-gate bias starts at +1 to keep early memory open
        let bias = if gate == "f" {
            Tensor::filled(&[d_h], 1.0)
        } else {
            Tensor::zeros(&[d_h])
        };
        params.add(&b, bias)?;
    }
    Ok(params)
}

fn matvec(w: &Tensor, x: &[f64], out: &mut [f64]) {
    let (rows, cols) = w.dims2().expect("matvec: weight not a matrix");
    debug_assert_eq!(cols, x.len());
    debug_assert_eq!(rows, out.len());
    let data = w.data();
    for (r, slot) in out.iter_mut().enumerate() {
        let row = &data[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *slot += acc;
    }
}

/// `out += wᵀ · v` for a `rows × cols` weight.
fn matvec_t(w: &Tensor, v: &[f64], out: &mut [f64]) {
    let (rows, cols) = w.dims2().expect("matvec_t: weight not a matrix");
    debug_assert_eq!(rows, v.len());
    debug_assert_eq!(cols, out.len());
    let data = w.data();
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        let scale = v[r];
        for (slot, a) in out.iter_mut().zip(row) {
            *slot += scale * a;
        }
    }
}

/// Rank-one update `grad += v · xᵀ`.
fn outer_add(grad: &mut Tensor, v: &[f64], x: &[f64]) {
    let (rows, cols) = grad.dims2().expect("outer_add: grad not a matrix");
    debug_assert_eq!(rows, v.len());
    debug_assert_eq!(cols, x.len());
    let data = grad.data_mut();
    for (r, &vr) in v.iter().enumerate() {
        let row = &mut data[r * cols..(r + 1) * cols];
        for (slot, &xc) in row.iter_mut().zip(x) {
            *slot += vr * xc;
        }
    }
}

#[derive(Clone)]
struct CellActs {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

fn cell_forward(params: &LayerParams, d_h: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> CellActs {
    let mut pre = [0; 4].map(|_| vec![0.0; d_h]);
    for (slot, gate) in pre.iter_mut().zip(GATES) {
        let (w, u, b) = gate_names(gate);
        slot.copy_from_slice(params.entry(&b).value.data());
        matvec(&params.entry(&w).value, x, slot);
        matvec(&params.entry(&u).value, h_prev, slot);
    }
    let [pi, pf, pg, po] = pre;
    let i: Vec<f64> = pi.iter().map(|&a| sigmoid(a)).collect();
    let f: Vec<f64> = pf.iter().map(|&a| sigmoid(a)).collect();
    let g: Vec<f64> = pg.iter().map(|&a| a.tanh()).collect();
    let o: Vec<f64> = po.iter().map(|&a| sigmoid(a)).collect();
    let c: Vec<f64> = (0..d_h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let h: Vec<f64> = (0..d_h).map(|k| o[k] * c[k].tanh()).collect();
    CellActs { i, f, g, o, c, h }
}

/// Local gradient buffers for one direction, `[w, u, b]` per gate in
/// `GATES` order. BPTT accumulates here and flushes into the stored
/// gradients with one addition per coordinate, so repeated backward calls
/// stay exactly additive.
struct GateGrads {
    buffers: Vec<Tensor>,
}

impl GateGrads {
    fn zeros_like(params: &LayerParams) -> GateGrads {
        let mut buffers = Vec::with_capacity(12);
        for gate in GATES {
            let (w, u, b) = gate_names(gate);
            for name in [w, u, b] {
                buffers.push(Tensor::zeros(params.entry(&name).value.shape()));
            }
        }
        GateGrads { buffers }
    }

    fn flush_into(&self, params: &mut LayerParams) {
        for (g, gate) in GATES.iter().enumerate() {
            let (w, u, b) = gate_names(gate);
            for (offset, name) in [w, u, b].into_iter().enumerate() {
                params
                    .entry_mut(&name)
                    .grad
                    .add_assign(&self.buffers[3 * g + offset])
                    .expect("gate gradient shape");
            }
        }
    }
}

/// One backward-through-time step. Accumulates parameter gradients into the
/// local buffers and returns `(dx, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
fn cell_backward(
    params: &LayerParams,
    grads: &mut GateGrads,
    d_in: usize,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    acts: &CellActs,
    dh: &[f64],
    dc_in: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let d_h = dh.len();
    let tanh_c: Vec<f64> = acts.c.iter().map(|&c| c.tanh()).collect();
    let d_o: Vec<f64> = (0..d_h).map(|k| dh[k] * tanh_c[k]).collect();
    let dc: Vec<f64> = (0..d_h)
        .map(|k| dc_in[k] + dh[k] * acts.o[k] * (1.0 - tanh_c[k] * tanh_c[k]))
        .collect();
    let d_f: Vec<f64> = (0..d_h).map(|k| dc[k] * c_prev[k]).collect();
    let d_i: Vec<f64> = (0..d_h).map(|k| dc[k] * acts.g[k]).collect();
    let d_g: Vec<f64> = (0..d_h).map(|k| dc[k] * acts.i[k]).collect();
    let dc_prev: Vec<f64> = (0..d_h).map(|k| dc[k] * acts.f[k]).collect();

    // gradients at the pre-activations
    let da = [
        (0..d_h).map(|k| d_i[k] * acts.i[k] * (1.0 - acts.i[k])).collect::<Vec<f64>>(),
        (0..d_h).map(|k| d_f[k] * acts.f[k] * (1.0 - acts.f[k])).collect(),
        (0..d_h).map(|k| d_g[k] * (1.0 - acts.g[k] * acts.g[k])).collect(),
        (0..d_h).map(|k| d_o[k] * acts.o[k] * (1.0 - acts.o[k])).collect(),
    ];

    let mut dx = vec![0.0; d_in];
    let mut dh_prev = vec![0.0; d_h];
    for (g, (da_gate, gate)) in da.iter().zip(GATES).enumerate() {
        let (w, u, _) = gate_names(gate);
        outer_add(&mut grads.buffers[3 * g], da_gate, x);
        matvec_t(&params.entry(&w).value, da_gate, &mut dx);
        outer_add(&mut grads.buffers[3 * g + 1], da_gate, h_prev);
        matvec_t(&params.entry(&u).value, da_gate, &mut dh_prev);
        let bg = grads.buffers[3 * g + 2].data_mut();
        for (slot, d) in bg.iter_mut().zip(da_gate) {
            *slot += d;
        }
    }
    (dx, dh_prev, dc_prev)
}

struct DirectionCache {
    /// Input columns in processing order.
    xs: Vec<Vec<f64>>,
    acts: Vec<CellActs>,
}

/// One direction's parameters plus its BPTT cache.
struct Direction {
    params: LayerParams,
    cache: Option<DirectionCache>,
}

impl Direction {
    fn run(&mut self, xs: Vec<Vec<f64>>, d_h: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(xs.len());
        let zero = vec![0.0; d_h];
        for (t, x) in xs.iter().enumerate() {
            let (h_prev, c_prev) = if t == 0 {
                (&zero, &zero)
            } else {
                let prev: &CellActs = &acts[t - 1];
                (&prev.h, &prev.c)
            };
            acts.push(cell_forward(&self.params, d_h, x, h_prev, c_prev));
        }
        let hs = acts.iter().map(|a| a.h.clone()).collect();
        self.cache = Some(DirectionCache { xs, acts });
        hs
    }

    /// `dhs` aligned with processing order; returns `dx` per step.
    fn backprop(&mut self, dhs: &[Vec<f64>], d_in: usize, d_h: usize) -> Result<Vec<Vec<f64>>> {
        let cache = self.cache.take().ok_or(Error::State { layer: "BiLstm" })?;
        let n = cache.xs.len();
        let zero = vec![0.0; d_h];
        let mut dxs = vec![vec![0.0; d_in]; n];
        let mut dh_carry = vec![0.0; d_h];
        let mut dc_carry = vec![0.0; d_h];
        let mut grads = GateGrads::zeros_like(&self.params);
        for t in (0..n).rev() {
            let dh: Vec<f64> = dhs[t].iter().zip(&dh_carry).map(|(a, b)| a + b).collect();
            let (h_prev, c_prev) = if t == 0 {
                (&zero, &zero)
            } else {
                (&cache.acts[t - 1].h, &cache.acts[t - 1].c)
            };
            let (dx, dh_prev, dc_prev) = cell_backward(
                &self.params,
                &mut grads,
                d_in,
                &cache.xs[t],
                h_prev,
                c_prev,
                &cache.acts[t],
                &dh,
                &dc_carry,
            );
            dxs[t] = dx;
            dh_carry = dh_prev;
            dc_carry = dc_prev;
        }
        grads.flush_into(&mut self.params);
        self.cache = Some(cache);
        Ok(dxs)
    }
}

/// Bidirectional LSTM: input `d_in × n`, output `2·d_h × n` with the forward
/// direction in the top rows and the backward direction, time-aligned, below.
pub struct BiLstm {
    fwd: Direction,
    bwd: Direction,
    d_in: usize,
    d_h: usize,
    n: usize,
}

impl BiLstm {
    pub fn new(d_in: usize, d_h: usize, rng: &mut Rng) -> Result<BiLstm> {
        if d_in == 0 || d_h == 0 {
            return Err(Error::Config("bilstm dimensions must be >= 1".into()));
        }
        // forward direction draws first, then backward
        let fwd = Direction {
            params: new_direction_params(d_in, d_h, rng)?,
            cache: None,
        };
        let bwd = Direction {
            params: new_direction_params(d_in, d_h, rng)?,
            cache: None,
        };
        Ok(BiLstm {
            fwd,
            bwd,
            d_in,
            d_h,
            n: 0,
        })
    }

    pub fn hidden_dim(&self) -> usize {
        self.d_h
    }

    pub fn input_dim(&self) -> usize {
        self.d_in
    }

    pub fn output_dim(&self) -> usize {
        2 * self.d_h
    }

    pub fn fwd_params(&self) -> &LayerParams {
        &self.fwd.params
    }

    pub fn fwd_params_mut(&mut self) -> &mut LayerParams {
        &mut self.fwd.params
    }

    pub fn bwd_params(&self) -> &LayerParams {
        &self.bwd.params
    }

    pub fn bwd_params_mut(&mut self) -> &mut LayerParams {
        &mut self.bwd.params
    }
}

impl Layer for BiLstm {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (d, n) = input.dims2()?;
        if d != self.d_in || n == 0 {
            return Err(Error::dim("bilstm forward", input.shape(), &[self.d_in, 1]));
        }
        self.n = n;
        let cols: Vec<Vec<f64>> = (0..n).map(|t| input.col(t)).collect();
        let mut reversed = cols.clone();
        reversed.reverse();

        let hs_fwd = self.fwd.run(cols, self.d_h);
        let hs_bwd = self.bwd.run(reversed, self.d_h);

        let mut out = Tensor::zeros(&[2 * self.d_h, n]);
        for t in 0..n {
            for k in 0..self.d_h {
                out.set2(k, t, hs_fwd[t][k]);
                // backward processing step n−1−t saw token t
                out.set2(self.d_h + k, t, hs_bwd[n - 1 - t][k]);
            }
        }
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        if self.fwd.cache.is_none() {
            return Err(Error::State { layer: "BiLstm" });
        }
        let n = self.n;
        if grad_output.shape() != [2 * self.d_h, n] {
            return Err(Error::dim(
                "bilstm backward",
                grad_output.shape(),
                &[2 * self.d_h, n],
            ));
        }
        let dhs_fwd: Vec<Vec<f64>> = (0..n)
            .map(|t| (0..self.d_h).map(|k| grad_output.at2(k, t)).collect())
            .collect();
        let dhs_bwd: Vec<Vec<f64>> = (0..n)
            .map(|s| {
                let t = n - 1 - s; // token seen at processing step s
                (0..self.d_h)
                    .map(|k| grad_output.at2(self.d_h + k, t))
                    .collect()
            })
            .collect();

        let dxs_fwd = self.fwd.backprop(&dhs_fwd, self.d_in, self.d_h)?;
        let dxs_bwd = self.bwd.backprop(&dhs_bwd, self.d_in, self.d_h)?;

        let mut grad_in = Tensor::zeros(&[self.d_in, n]);
        for t in 0..n {
            for k in 0..self.d_in {
                grad_in.set2(k, t, dxs_fwd[t][k] + dxs_bwd[n - 1 - t][k]);
            }
        }
        Ok(grad_in)
    }

    fn param_count(&self) -> usize {
        self.fwd.params.len() + self.bwd.params.len()
    }

    fn param(&self, i: usize) -> &ParamEntry {
        let nf = self.fwd.params.len();
        if i < nf {
            self.fwd.params.at(i)
        } else {
            self.bwd.params.at(i - nf)
        }
    }

    fn param_mut(&mut self, i: usize) -> &mut ParamEntry {
        let nf = self.fwd.params.len();
        if i < nf {
            self.fwd.params.at_mut(i)
        } else {
            self.bwd.params.at_mut(i - nf)
        }
    }
}

/// Single LSTM cell exposed through the [`Layer`] contract for gradient
/// checking: input is the stacked column `[x; h_prev; c_prev]`, output the
/// stacked `[h; c]`.
pub struct LstmCellProbe {
    params: LayerParams,
    d_in: usize,
    d_h: usize,
    cache: Option<(Vec<f64>, Vec<f64>, Vec<f64>, CellActs)>,
}

impl LstmCellProbe {
    pub fn new(d_in: usize, d_h: usize, rng: &mut Rng) -> Result<LstmCellProbe> {
        Ok(LstmCellProbe {
            params: new_direction_params(d_in, d_h, rng)?,
            d_in,
            d_h,
            cache: None,
        })
    }

    pub fn zeroed(d_in: usize, d_h: usize) -> LstmCellProbe {
        let mut probe = LstmCellProbe::new(d_in, d_h, &mut Rng::new(0)).unwrap();
        for e in probe.params.iter_mut() {
            e.value.fill(0.0);
        }
        probe
    }

    pub fn params(&self) -> &LayerParams {
        &self.params
    }
}

impl Layer for LstmCellProbe {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let expected = self.d_in + 2 * self.d_h;
        if input.len() != expected {
            return Err(Error::dim("lstm cell forward", input.shape(), &[expected, 1]));
        }
        let flat = input.data();
        let x = flat[..self.d_in].to_vec();
        let h_prev = flat[self.d_in..self.d_in + self.d_h].to_vec();
        let c_prev = flat[self.d_in + self.d_h..].to_vec();
        let acts = cell_forward(&self.params, self.d_h, &x, &h_prev, &c_prev);
        let mut out = acts.h.clone();
        out.extend_from_slice(&acts.c);
        self.cache = Some((x, h_prev, c_prev, acts));
        Tensor::from_vec(&[2 * self.d_h, 1], out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let (x, h_prev, c_prev, acts) = self
            .cache
            .as_ref()
            .ok_or(Error::State { layer: "LstmCellProbe" })?
            .clone();
        if grad_output.len() != 2 * self.d_h {
            return Err(Error::dim(
                "lstm cell backward",
                grad_output.shape(),
                &[2 * self.d_h, 1],
            ));
        }
        let dh = &grad_output.data()[..self.d_h];
        let dc = &grad_output.data()[self.d_h..];
        let mut grads = GateGrads::zeros_like(&self.params);
        let (dx, dh_prev, dc_prev) = cell_backward(
            &self.params,
            &mut grads,
            self.d_in,
            &x,
            &h_prev,
            &c_prev,
            &acts,
            dh,
            dc,
        );
        grads.flush_into(&mut self.params);
        let mut out = dx;
        out.extend_from_slice(&dh_prev);
        out.extend_from_slice(&dc_prev);
        Tensor::from_vec(&[self.d_in + 2 * self.d_h, 1], out)
    }

    fn param_count(&self) -> usize {
        self.params.len()
    }

    fn param(&self, i: usize) -> &ParamEntry {
        self.params.at(i)
    }

    fn param_mut(&mut self, i: usize) -> &mut ParamEntry {
        self.params.at_mut(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::grad_check;

    fn random_input(d: usize, n: usize, seed: u64) -> Tensor {
        init(&[d, n], InitScheme::Uniform { lo: -1.0, hi: 1.0 }, &mut Rng::new(seed))
    }

    #[test]
    fn zero_cell_is_a_fixed_point() {
        let mut probe = LstmCellProbe::zeroed(2, 2);
        let x = Tensor::from_vec(&[6, 1], vec![1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let out = probe.forward(&x).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);
    }

    #[test]
    fn saturated_forget_gate_carries_cell_state() {
        let mut probe = LstmCellProbe::zeroed(2, 2);
        probe.params.entry_mut("b_f").value.fill(50.0);
        let c_prev = [0.3, -0.7];
        let x = Tensor::from_vec(&[6, 1], vec![0.5, 0.5, 0.0, 0.0, c_prev[0], c_prev[1]]).unwrap();
        let out = probe.forward(&x).unwrap();
        let c = &out.data()[2..];
        for k in 0..2 {
            assert!((c[k] - c_prev[k]).abs() < 1e-12, "c[{k}]");
        }
    }

    #[test]
    fn cell_matches_scalar_oracle() {
        // independent re-evaluation of the cell formulas with explicit loops
        let mut probe = LstmCellProbe::new(2, 2, &mut Rng::new(0)).unwrap();
        let x = [1.0, 0.0];
        let h_prev = [0.2, -0.1];
        let c_prev = [0.05, 0.3];
        let mut input = x.to_vec();
        input.extend_from_slice(&h_prev);
        input.extend_from_slice(&c_prev);
        let out = probe
            .forward(&Tensor::from_vec(&[6, 1], input).unwrap())
            .unwrap();

        let gate = |w: &str, u: &str, b: &str, k: usize| -> f64 {
            let w = &probe.params.entry(w).value;
            let u = &probe.params.entry(u).value;
            let b = &probe.params.entry(b).value;
            let mut a = b.data()[k];
            for j in 0..2 {
                a += w.at2(k, j) * x[j] + u.at2(k, j) * h_prev[j];
            }
            a
        };
        for k in 0..2 {
            let i = sigmoid(gate("w_i", "u_i", "b_i", k));
            let f = sigmoid(gate("w_f", "u_f", "b_f", k));
            let g = gate("w_g", "u_g", "b_g", k).tanh();
            let o = sigmoid(gate("w_o", "u_o", "b_o", k));
            let c = f * c_prev[k] + i * g;
            let h = o * c.tanh();
            assert!((out.data()[k] - h).abs() < 1e-14, "h[{k}]");
            assert!((out.data()[2 + k] - c).abs() < 1e-14, "c[{k}]");
        }
    }

    #[test]
    fn single_token_stacks_both_directions() {
        let mut lstm = BiLstm::new(3, 2, &mut Rng::new(1)).unwrap();
        let x = random_input(3, 1, 2);
        let h = lstm.forward(&x).unwrap();
        assert_eq!(h.shape(), &[4, 1]);
        // both directions see the same single column; with different
        // parameters the halves differ
        assert_ne!(h.row_slice(0, 2).unwrap(), h.row_slice(2, 4).unwrap());
    }

    #[test]
    fn zero_params_give_zero_output() {
        let mut lstm = BiLstm::new(2, 3, &mut Rng::new(3)).unwrap();
        for i in 0..lstm.param_count() {
            lstm.param_mut(i).value.fill(0.0);
        }
        let h = lstm.forward(&random_input(2, 4, 4)).unwrap();
        assert_eq!(h, Tensor::zeros(&[6, 4]));
    }

    #[test]
    fn palindrome_with_tied_directions_is_swap_symmetric() {
        let mut lstm = BiLstm::new(2, 3, &mut Rng::new(5)).unwrap();
        let fwd_values: Vec<Tensor> = lstm.fwd_params().iter().map(|e| e.value.clone()).collect();
        for (e, v) in lstm.bwd_params_mut().iter_mut().zip(fwd_values) {
            e.value = v;
        }
        let n = 5;
        let mut x = Tensor::zeros(&[2, n]);
        for t in 0..n {
            let v = [0.3 * (t.min(n - 1 - t) as f64 + 1.0), -0.2 * (t.min(n - 1 - t) as f64)];
            x.set_col(t, &v);
        }
        let h = lstm.forward(&x).unwrap();
        for t in 0..n {
            let top: Vec<f64> = (0..3).map(|k| h.at2(k, t)).collect();
            let bottom_rev: Vec<f64> = (0..3).map(|k| h.at2(3 + k, n - 1 - t)).collect();
            for k in 0..3 {
                assert!((top[k] - bottom_rev[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_grad_in_zero_grad_out() {
        let mut lstm = BiLstm::new(3, 2, &mut Rng::new(6)).unwrap();
        lstm.forward(&random_input(3, 4, 7)).unwrap();
        let g = lstm.backward(&Tensor::zeros(&[4, 4])).unwrap();
        assert_eq!(g, Tensor::zeros(&[3, 4]));
    }

    #[test]
    fn masked_grad_respects_direction_causality() {
        let mut lstm = BiLstm::new(2, 2, &mut Rng::new(8)).unwrap();
        let n = 5;
        lstm.forward(&random_input(2, n, 9)).unwrap();
        // gradient only on the forward half at token 2
        let mut g = Tensor::zeros(&[4, n]);
        g.set2(0, 2, 1.0);
        g.set2(1, 2, 1.0);
        let gx = lstm.backward(&g).unwrap();
        for t in 0..n {
            let any = (0..2).any(|k| gx.at2(k, t) != 0.0);
            assert_eq!(any, t <= 2, "token {t}");
        }
        // gradient only on the backward half at token 2
        let mut g = Tensor::zeros(&[4, n]);
        g.set2(2, 2, 1.0);
        g.set2(3, 2, 1.0);
        let gx = lstm.backward(&g).unwrap();
        for t in 0..n {
            let any = (0..2).any(|k| gx.at2(k, t) != 0.0);
            assert_eq!(any, t >= 2, "token {t}");
        }
    }

    #[test]
    fn direction_halves_respect_causality() {
        let mut lstm = BiLstm::new(2, 2, &mut Rng::new(10)).unwrap();
        let x = random_input(2, 5, 11);
        let h = lstm.forward(&x).unwrap();

        // perturbing the last token leaves the forward half of earlier
        // tokens untouched
        let mut x2 = x.clone();
        x2.set2(0, 4, 9.0);
        x2.set2(1, 4, -9.0);
        let h2 = lstm.forward(&x2).unwrap();
        for t in 0..4 {
            for k in 0..2 {
                assert_eq!(h.at2(k, t), h2.at2(k, t), "fwd half, token {t}");
            }
        }

        // perturbing the first token leaves the backward half of later
        // tokens untouched
        let mut x3 = x.clone();
        x3.set2(0, 0, 9.0);
        x3.set2(1, 0, -9.0);
        let h3 = lstm.forward(&x3).unwrap();
        for t in 1..5 {
            for k in 0..2 {
                assert_eq!(h.at2(2 + k, t), h3.at2(2 + k, t), "bwd half, token {t}");
            }
        }
    }

    #[test]
    fn long_rollout_stays_finite() {
        let mut lstm = BiLstm::new(2, 3, &mut Rng::new(12)).unwrap();
        let x = random_input(2, 1000, 13);
        let h = lstm.forward(&x).unwrap();
        assert!(h.is_finite());
    }

    #[test]
    fn grad_check_cell_random_and_zero() {
        let mut probe = LstmCellProbe::new(2, 2, &mut Rng::new(14)).unwrap();
        let input = init(&[6, 1], InitScheme::Uniform { lo: -0.8, hi: 0.8 }, &mut Rng::new(15));
        let r = grad_check(&mut probe, &input, 1e-5, 1e-4).unwrap();
        assert!(r.passed(), "cell max rel error {}", r.max_rel_error);

        let mut zeroed = LstmCellProbe::zeroed(2, 2);
        let r = grad_check(&mut zeroed, &input, 1e-5, 1e-4).unwrap();
        assert!(r.passed(), "zero cell max rel error {}", r.max_rel_error);
    }

    #[test]
    fn grad_check_bilstm() {
        let mut lstm = BiLstm::new(3, 2, &mut Rng::new(16)).unwrap();
        let x = random_input(3, 4, 17);
        let r = grad_check(&mut lstm, &x, 1e-5, 1e-4).unwrap();
        assert!(r.passed(), "bilstm max rel error {}", r.max_rel_error);
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut lstm = BiLstm::new(2, 2, &mut Rng::new(18)).unwrap();
        assert!(matches!(
            lstm.backward(&Tensor::zeros(&[4, 3])),
            Err(Error::State { .. })
        ));
    }
}
