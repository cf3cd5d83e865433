//! Gated convolution block: same-length 1-D convolution over the token axis,
//! a gated linear unit on the convolution output, and concatenation of the
//! result under the untouched input (skip connection). The block appears
//! twice in the pipeline, with independent parameters per instance.

use crate::error::{Error, Result};
use crate::layer::{Layer, LayerParams, ParamEntry};
use crate::rng::Rng;
use crate::tensor::{init, InitScheme, Tensor};

#[derive(Debug, Clone, Copy)]
pub struct GatedCnnConfig {
    pub input_dim: usize,
    /// Convolution window over tokens; must be odd so output columns stay
    /// aligned with input tokens under symmetric zero padding.
    pub window_size: usize,
    /// Convolution output channels.
    pub conv_channels: usize,
    /// Width of the gated feature appended below the input.
    pub gate_dim: usize,
}

impl GatedCnnConfig {
    /// Defaults: channels and gate width both equal to the input width, so
    /// the block doubles its input dimension.
    pub fn with_defaults(input_dim: usize, window_size: usize) -> GatedCnnConfig {
        GatedCnnConfig {
            input_dim,
            window_size,
            conv_channels: input_dim,
            gate_dim: input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_size % 2 == 0 || self.window_size == 0 {
            return Err(Error::Config(format!(
                "window_size must be odd, got {}",
                self.window_size
            )));
        }
        if self.input_dim == 0 || self.conv_channels == 0 || self.gate_dim == 0 {
            return Err(Error::Config(
                "gated-cnn dimensions must all be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim + self.gate_dim
    }
}

/// Same-length 1-D convolution over the token axis with zero padding of
/// `(window−1)/2` columns on each side; output column i corresponds to input
/// token i. Kernel shape is `channels × window × input_dim`, no bias.
pub struct Conv1d {
    params: LayerParams,
    input_dim: usize,
    window: usize,
    channels: usize,
    cache: Option<Tensor>,
}

impl Conv1d {
    pub fn new(input_dim: usize, window: usize, channels: usize, rng: &mut Rng) -> Result<Conv1d> {
        if window % 2 == 0 || window == 0 {
            return Err(Error::Config(format!("window_size must be odd, got {window}")));
        }
        let kernel = init(&[channels, window, input_dim], InitScheme::ScaledUniform, rng);
        let mut params = LayerParams::new();
        params.add("kernel", kernel)?;
        Ok(Conv1d {
            params,
            input_dim,
            window,
            channels,
            cache: None,
        })
    }

    pub fn set_kernel(&mut self, kernel: Tensor) -> Result<()> {
        let expected = [self.channels, self.window, self.input_dim];
        if kernel.shape() != expected {
            return Err(Error::dim("set_kernel", kernel.shape(), &expected));
        }
        self.params.entry_mut("kernel").value = kernel;
        Ok(())
    }

    #[inline]
    fn k_index(&self, o: usize, w: usize, c: usize) -> usize {
        (o * self.window + w) * self.input_dim + c
    }
}

impl Layer for Conv1d {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (d, n) = input.dims2()?;
        if d != self.input_dim {
            return Err(Error::dim("conv1d forward", input.shape(), &[self.input_dim, 0]));
        }
        let radius = (self.window - 1) / 2;
        let kernel = self.params.entry("kernel").value.data();
        let mut out = Tensor::zeros(&[self.channels, n]);
        for o in 0..self.channels {
            for i in 0..n {
                let mut acc = 0.0;
                for w in 0..self.window {
                    let j = i as isize + w as isize - radius as isize;
                    if j < 0 || j >= n as isize {
                        continue;
                    }
                    let j = j as usize;
                    for c in 0..d {
                        acc += kernel[(o * self.window + w) * self.input_dim + c] * input.at2(c, j);
                    }
                }
                out.set2(o, i, acc);
            }
        }
        self.cache = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cache
            .as_ref()
            .ok_or(Error::State { layer: "Conv1d" })?
            .clone();
        let (d, n) = input.dims2()?;
        if grad_output.shape() != [self.channels, n] {
            return Err(Error::dim("conv1d backward", grad_output.shape(), &[self.channels, n]));
        }
        let radius = (self.window - 1) / 2;

        // Kernel gradient.
        {
            let window = self.window;
            let input_dim = self.input_dim;
            let kg = &mut self.params.entry_mut("kernel").grad;
            for o in 0..self.channels {
                for w in 0..window {
                    for c in 0..d {
                        let mut acc = 0.0;
                        for i in 0..n {
                            let j = i as isize + w as isize - radius as isize;
                            if j < 0 || j >= n as isize {
                                continue;
                            }
                            acc += grad_output.at2(o, i) * input.at2(c, j as usize);
                        }
                        kg.data_mut()[(o * window + w) * input_dim + c] += acc;
                    }
                }
            }
        }

        // Input gradient: transposed convolution respecting the zero padding.
        let kernel = &self.params.entry("kernel").value;
        let mut grad_in = Tensor::zeros(&[d, n]);
        for c in 0..d {
            for j in 0..n {
                let mut acc = 0.0;
                for o in 0..self.channels {
                    for w in 0..self.window {
                        let i = j as isize - (w as isize - radius as isize);
                        if i < 0 || i >= n as isize {
                            continue;
                        }
                        acc += kernel.data()[self.k_index(o, w, c)] * grad_output.at2(o, i as usize);
                    }
                }
                grad_in.set2(c, j, acc);
            }
        }
        Ok(grad_in)
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

struct GluCache {
    input: Tensor,
    content: Tensor,
    gate: Tensor,
}

/// Gated linear unit applied per column:
/// `out = (W1·x + b1) ⊗ σ(W2·x + b2)`.
pub struct Glu {
    params: LayerParams,
    in_dim: usize,
    cache: Option<GluCache>,
}

impl Glu {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut Rng) -> Result<Glu> {
        let mut params = LayerParams::new();
        params.add("w1", init(&[out_dim, in_dim], InitScheme::ScaledUniform, rng))?;
        params.add("b1", Tensor::zeros(&[out_dim]))?;
        params.add("w2", init(&[out_dim, in_dim], InitScheme::ScaledUniform, rng))?;
        params.add("b2", Tensor::zeros(&[out_dim]))?;
        Ok(Glu {
            params,
            in_dim,
            cache: None,
        })
    }

    pub fn set_param(&mut self, name: &str, value: Tensor) {
        self.params.entry_mut(name).value = value;
    }

    fn affine(&self, w: &str, b: &str, x: &Tensor) -> Result<Tensor> {
        let mut out = self.params.entry(w).value.matmul(x)?;
        let bias = &self.params.entry(b).value;
        let (rows, cols) = out.dims2()?;
        for i in 0..rows {
            for j in 0..cols {
                out.add2(i, j, bias.data()[i]);
            }
        }
        Ok(out)
    }
}

impl Layer for Glu {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let (d, _) = input.dims2()?;
        if d != self.in_dim {
            return Err(Error::dim("glu forward", input.shape(), &[self.in_dim, 0]));
        }
        let content = self.affine("w1", "b1", input)?;
        let gate = self.affine("w2", "b2", input)?.sigmoid();
        let out = content.mul(&gate)?;
        self.cache = Some(GluCache {
            input: input.clone(),
            content,
            gate,
        });
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let cache = self.cache.as_ref().ok_or(Error::State { layer: "Glu" })?;
        if grad_output.shape() != cache.content.shape() {
            return Err(Error::dim("glu backward", grad_output.shape(), cache.content.shape()));
        }
        // d_content = g ⊗ gate; d_pre_gate = g ⊗ content ⊗ gate ⊗ (1 − gate)
        let d_content = grad_output.mul(&cache.gate)?;
        let d_pre_gate = grad_output
            .mul(&cache.content)?
            .mul(&cache.gate)?
            .mul(&cache.gate.map(|s| 1.0 - s))?;
        let input_t = cache.input.transpose()?;
        let (rows, cols) = d_content.dims2()?;

        let grad_w1 = d_content.matmul(&input_t)?;
        let grad_w2 = d_pre_gate.matmul(&input_t)?;
        self.params.entry_mut("w1").grad.add_assign(&grad_w1)?;
        self.params.entry_mut("w2").grad.add_assign(&grad_w2)?;
        // bias row sums go in with one addition per coordinate
        for (bias, source) in [("b1", &d_content), ("b2", &d_pre_gate)] {
            let mut sums = vec![0.0; rows];
            for (i, slot) in sums.iter_mut().enumerate() {
                for j in 0..cols {
                    *slot += source.at2(i, j);
                }
            }
            let bg = &mut self.params.entry_mut(bias).grad;
            for (slot, inc) in bg.data_mut().iter_mut().zip(&sums) {
                *slot += inc;
            }
        }

        let part1 = self.params.entry("w1").value.transpose()?.matmul(&d_content)?;
        let part2 = self.params.entry("w2").value.transpose()?.matmul(&d_pre_gate)?;
        part1.add(&part2)
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

/// The full block: `out = [input; glu(conv(input))]`, output width
/// `input_dim + gate_dim`. The top rows pass the input through untouched.
pub struct GatedCnn {
    pub conv: Conv1d,
    pub glu: Glu,
    config: GatedCnnConfig,
    forwarded: bool,
}

impl GatedCnn {
    pub fn new(config: GatedCnnConfig, rng: &mut Rng) -> Result<GatedCnn> {
        config.validate()?;
        let conv = Conv1d::new(config.input_dim, config.window_size, config.conv_channels, rng)?;
        let glu = Glu::new(config.conv_channels, config.gate_dim, rng)?;
        Ok(GatedCnn {
            conv,
            glu,
            config,
            forwarded: false,
        })
    }

    pub fn config(&self) -> &GatedCnnConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }
}

impl Layer for GatedCnn {
    fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        let conv_out = self.conv.forward(input)?;
        let gated = self.glu.forward(&conv_out)?;
        self.forwarded = true;
        Tensor::concat_rows(input, &gated)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        if !self.forwarded {
            return Err(Error::State { layer: "GatedCnn" });
        }
        let d_in = self.config.input_dim;
        let (rows, _) = grad_output.dims2()?;
        if rows != self.config.output_dim() {
            return Err(Error::dim(
                "gated-cnn backward",
                grad_output.shape(),
                &[self.config.output_dim(), 0],
            ));
        }
        let skip = grad_output.row_slice(0, d_in)?;
        let gated = grad_output.row_slice(d_in, rows)?;
        let d_conv = self.glu.backward(&gated)?;
        let mut grad_in = self.conv.backward(&d_conv)?;
        grad_in.add_assign(&skip)?;
        Ok(grad_in)
    }

    fn param_count(&self) -> usize {
        self.conv.param_count() + self.glu.param_count()
    }

    fn param(&self, i: usize) -> &ParamEntry {
        let nc = self.conv.param_count();
        if i < nc {
            self.conv.param(i)
        } else {
            self.glu.param(i - nc)
        }
    }

    fn param_mut(&mut self, i: usize) -> &mut ParamEntry {
        let nc = self.conv.param_count();
        if i < nc {
            self.conv.param_mut(i)
        } else {
            self.glu.param_mut(i - nc)
        }
    }
}
