//! The differentiable-layer contract and its finite-difference checker.
//!
//! Every network block implements [`Layer`]: `forward` caches whatever the
//! matching `backward` needs, `backward` returns the loss gradient with
//! respect to the input and *adds into* each parameter's gradient buffer.
//! Gradients accumulate across backward calls; callers zero them explicitly
//! once per optimizer step. A second backward after one forward is legal and
//! doubles the accumulated gradient.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One named parameter tensor with its paired gradient buffer.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Entries with `trainable = false` are skipped by the optimizer but
    /// still receive gradients (the gradient checker exercises them too).
    pub trainable: bool,
}

impl ParamEntry {
    pub fn name(&self) -> &str {
        &self.name
    }
}

/// Ordered, name-unique collection of parameter entries for one layer.
#[derive(Debug, Clone, Default)]
pub struct LayerParams {
    entries: Vec<ParamEntry>,
}

impl LayerParams {
    pub fn new() -> LayerParams {
        LayerParams::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.add_entry(name, value, true)
    }

    pub fn add_fixed(&mut self, name: &str, value: Tensor) -> Result<()> {
        self.add_entry(name, value, false)
    }

    fn add_entry(&mut self, name: &str, value: Tensor, trainable: bool) -> Result<()> {
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::Argument(format!("duplicate parameter name {name:?}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            value,
            grad,
            trainable,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, name: &str) -> &ParamEntry {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("no parameter named {name:?}"))
    }

    pub fn entry_mut(&mut self, name: &str) -> &mut ParamEntry {
        self.entries
            .iter_mut()
            .find(|e| e.name == name)
            .unwrap_or_else(|| panic!("no parameter named {name:?}"))
    }

    pub fn at(&self, i: usize) -> &ParamEntry {
        &self.entries[i]
    }

    pub fn at_mut(&mut self, i: usize) -> &mut ParamEntry {
        &mut self.entries[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry> {
        self.entries.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.fill(0.0);
        }
    }
}

/// A differentiable block of the pipeline.
pub trait Layer {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor>;

    /// Propagates `grad_output` (same shape as the last forward's output)
    /// back to the input, accumulating parameter gradients along the way.
    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor>;

    /// Number of parameter entries, counting nested sub-layers.
    fn param_count(&self) -> usize;

    fn param(&self, i: usize) -> &ParamEntry;

    fn param_mut(&mut self, i: usize) -> &mut ParamEntry;

    fn zero_grads(&mut self) {
        for i in 0..self.param_count() {
            self.param_mut(i).grad.fill(0.0);
        }
    }

    /// False for layers whose "input" is an index lookup rather than a
    /// tensor; the gradient checker then probes parameters only.
    fn input_grad_defined(&self) -> bool {
        true
    }
}

/// Affine map per column: `y = W·x + b` for `x` of shape `d_in × n`.
pub struct Linear {
    params: LayerParams,
    cache: Option<Tensor>,
}

impl Linear {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Linear> {
        let (out_dim, _) = weight.dims2()?;
        if bias.shape() != [out_dim] {
            return Err(Error::dim("Linear::new", weight.shape(), bias.shape()));
        }
        let mut params = LayerParams::new();
        params.add("weight", weight)?;
        params.add("bias", bias)?;
        Ok(Linear {
            params,
            cache: None,
        })
    }

    pub fn identity(dim: usize) -> Linear {
        let mut w = Tensor::zeros(&[dim, dim]);
        for i in 0..dim {
            w.set2(i, i, 1.0);
        }
        Linear::new(w, Tensor::zeros(&[dim])).unwrap()
    }
}

impl Layer for Linear {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let w = &self.params.entry("weight").value;
        let b = &self.params.entry("bias").value;
        let mut out = w.matmul(input)?;
        let (rows, cols) = out.dims2()?;
        for i in 0..rows {
            for j in 0..cols {
                out.add2(i, j, b.data()[i]);
            }
        }
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self.cache.as_ref().ok_or(Error::State { layer: "Linear" })?;
        // dW += g · xᵀ
        let grad_w = grad_output.matmul(&input.transpose()?)?;
        self.params.entry_mut("weight").grad.add_assign(&grad_w)?;
        // db += row sums of g. The row sum lands in the stored gradient via
        // a single addition per coordinate, keeping repeated backward calls
        // exactly additive.
        let (rows, cols) = grad_output.dims2()?;
        {
            let mut grad_b = vec![0.0; rows];
            for (i, slot) in grad_b.iter_mut().enumerate() {
                for j in 0..cols {
                    *slot += grad_output.at2(i, j);
                }
            }
            let gb = &mut self.params.entry_mut("bias").grad;
            for (slot, inc) in gb.data_mut().iter_mut().zip(&grad_b) {
                *slot += inc;
            }
        }
        // dx = Wᵀ · g
        self.params
            .entry("weight")
            .value
            .transpose()?
            .matmul(grad_output)
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

/// One coordinate where analytic and numeric gradients disagree.
#[derive(Debug, Clone)]
pub struct GradCheckFailure {
    /// Parameter name, or `"<input>"` for the input tensor.
    pub param: String,
    /// Flat index within that tensor.
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub failures: Vec<GradCheckFailure>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Error measure for the checker: relative where the gradient is O(1) or
/// larger, absolute below that, so near-zero gradients do not amplify
/// finite-difference noise.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}

/// Central finite-difference check of a layer's backward pass.
///
/// The scalarizing loss is the sum of the layer's outputs. Every parameter
/// coordinate (and every input coordinate, where defined) is probed with
/// `f(x+h)` / `f(x−h)` and compared against the analytic gradient obtained
/// from one backward call with an all-ones output gradient. Coordinates whose
/// error exceeds `tolerance` are listed in the report.
pub fn grad_check(
    layer: &mut dyn Layer,
    input: &Tensor,
    step: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    if step <= 0.0 {
        return Err(Error::Argument(format!("grad_check: step must be > 0, got {step}")));
    }

    layer.zero_grads();
    let out = layer.forward(input)?;
    if !out.is_finite() {
        return Err(Error::Numeric("grad_check forward output".into()));
    }
    let ones = Tensor::filled(out.shape(), 1.0);
    let grad_input = layer.backward(&ones)?;

    let analytic_params: Vec<(String, Vec<f64>)> = (0..layer.param_count())
        .map(|k| {
            let e = layer.param(k);
            (e.name().to_string(), e.grad.data().to_vec())
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        failures: Vec::new(),
    };

    // Parameter coordinates.
    for k in 0..layer.param_count() {
        let size = layer.param(k).value.len();
        for idx in 0..size {
            let original = layer.param(k).value.data()[idx];
            layer.param_mut(k).value.data_mut()[idx] = original + step;
            let plus = finite_loss(layer, input, k, idx)?;
            layer.param_mut(k).value.data_mut()[idx] = original - step;
            let minus = finite_loss(layer, input, k, idx)?;
            layer.param_mut(k).value.data_mut()[idx] = original;

            let numeric = (plus - minus) / (2.0 * step);
            let analytic = analytic_params[k].1[idx];
            record(&mut report, &analytic_params[k].0, idx, analytic, numeric, tolerance);
        }
    }

    // Input coordinates.
    if layer.input_grad_defined() {
        let mut probe_input = input.clone();
        for idx in 0..probe_input.len() {
            let original = probe_input.data()[idx];
            probe_input.data_mut()[idx] = original + step;
            let plus = layer.forward(&probe_input)?.sum();
            probe_input.data_mut()[idx] = original - step;
            let minus = layer.forward(&probe_input)?.sum();
            probe_input.data_mut()[idx] = original;

            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numeric(format!("grad_check probe of <input>[{idx}]")));
            }
            let numeric = (plus - minus) / (2.0 * step);
            let analytic = grad_input.data()[idx];
            record(&mut report, "<input>", idx, analytic, numeric, tolerance);
        }
    }

    // Leave the layer with a cache that matches the unperturbed input.
    layer.forward(input)?;
    Ok(report)
}

fn finite_loss(layer: &mut dyn Layer, input: &Tensor, k: usize, idx: usize) -> Result<f64> {
    let out = layer.forward(input)?;
    let loss = out.sum();
    if !loss.is_finite() {
        let name = layer.param(k).name().to_string();
        return Err(Error::Numeric(format!("grad_check probe of {name}[{idx}]")));
    }
    Ok(loss)
}

fn record(
    report: &mut GradCheckReport,
    param: &str,
    index: usize,
    analytic: f64,
    numeric: f64,
    tolerance: f64,
) {
    let err = rel_error(analytic, numeric);
    report.coords_checked += 1;
    if err > report.max_rel_error {
        report.max_rel_error = err;
    }
    if err > tolerance {
        report.failures.push(GradCheckFailure {
            param: param.to_string(),
            index,
            analytic,
            numeric,
            rel_error: err,
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use crate::tensor::{init, InitScheme};

    fn random_linear(seed: u64, out_dim: usize, in_dim: usize) -> Linear {
        let mut rng = Rng::new(seed);
        let w = init(&[out_dim, in_dim], InitScheme::ScaledUniform, &mut rng);
        let b = init(&[out_dim], InitScheme::Uniform { lo: -0.5, hi: 0.5 }, &mut rng);
        Linear::new(w, b).unwrap()
    }

    #[test]
    fn identity_linear_is_identity() {
        let mut layer = Linear::identity(3);
        let x = Tensor::from_rows(&[vec![1.0, 4.0], vec![2.0, 5.0], vec![3.0, 6.0]]).unwrap();
        assert_eq!(layer.forward(&x).unwrap(), x);
    }

    #[test]
    fn linear_backward_accumulates_weight_grad() {
        // backward(g) adds g · xᵀ into the weight gradient
        let mut layer = Linear::identity(2);
        let x = Tensor::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        layer.forward(&x).unwrap();
        let g = Tensor::from_rows(&[vec![3.0], vec![4.0]]).unwrap();
        layer.backward(&g).unwrap();
        let wg = &layer.params.entry("weight").grad;
        assert_eq!(wg.data(), &[3.0, 6.0, 4.0, 8.0]);
    }

    #[test]
    fn double_backward_doubles_grads() {
        let mut layer = random_linear(4, 3, 2);
        let x = init(&[2, 3], InitScheme::Uniform { lo: -1.0, hi: 1.0 }, &mut Rng::new(8));
        layer.forward(&x).unwrap();
        let g = Tensor::filled(&[3, 3], 1.0);
        layer.backward(&g).unwrap();
        let once: Vec<f64> = layer.param(0).grad.data().to_vec();
        layer.backward(&g).unwrap();
        let twice: Vec<f64> = layer.param(0).grad.data().to_vec();
        for (a, b) in once.iter().zip(&twice) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut layer = Linear::identity(2);
        let g = Tensor::zeros(&[2, 1]);
        assert!(matches!(layer.backward(&g), Err(Error::State { .. })));
    }

    #[test]
    fn grad_check_passes_on_random_linear() {
        let mut layer = random_linear(17, 3, 4);
        let x = init(&[4, 2], InitScheme::Uniform { lo: -1.0, hi: 1.0 }, &mut Rng::new(18));
        let report = grad_check(&mut layer, &x, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "max rel error {}", report.max_rel_error);
        assert!(report.max_rel_error <= 1e-4);
    }

    /// A linear layer whose backward inflates one weight gradient by 10%.
    struct BrokenLinear {
        inner: Linear,
        broken_index: usize,
    }

    impl Layer for BrokenLinear {
        fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
            self.inner.forward(input)
        }
        fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
            let before = self.inner.params.entry("weight").grad.data()[self.broken_index];
            let out = self.inner.backward(grad_output)?;
            let g = &mut self.inner.params.entry_mut("weight").grad;
            let fresh = g.data()[self.broken_index] - before;
            g.data_mut()[self.broken_index] = before + 1.1 * fresh;
            Ok(out)
        }
        fn param_count(&self) -> usize {
            self.inner.param_count()
        }
        fn param(&self, i: usize) -> &ParamEntry {
            self.inner.param(i)
        }
        fn param_mut(&mut self, i: usize) -> &mut ParamEntry {
            self.inner.param_mut(i)
        }
    }

    #[test]
    fn grad_check_flags_exactly_the_broken_coordinate() {
        let mut layer = BrokenLinear {
            inner: random_linear(23, 3, 3),
            broken_index: 4,
        };
        let x = init(&[3, 2], InitScheme::Uniform { lo: 0.5, hi: 1.5 }, &mut Rng::new(24));
        let report = grad_check(&mut layer, &x, 1e-5, 1e-4).unwrap();
        assert_eq!(report.failures.len(), 1);
        assert_eq!(report.failures[0].param, "weight");
        assert_eq!(report.failures[0].index, 4);
    }

    #[test]
    fn duplicate_param_names_rejected() {
        let mut p = LayerParams::new();
        p.add("w", Tensor::zeros(&[1])).unwrap();
        assert!(p.add("w", Tensor::zeros(&[1])).is_err());
    }
}
