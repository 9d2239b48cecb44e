//! Convolution layers and the four-layer network, with hand-derived
//! backprop. Convolution here means cross-correlation (no kernel flip) plus
//! a per-output-channel bias.
//!
//! Accumulation order is fixed: every output cell sums its contributions in
//! (in-channel, kernel-row, kernel-col) order, regardless of padding mode or
//! input size. Two forward passes that see the same input values therefore
//! produce bit-identical outputs, which is what makes the assembled parallel
//! prediction exactly reproduce the monolithic reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Tensor3;

use super::{leaky_relu, leaky_relu_deriv, LEAKY_EPS};

/// Spatial padding mode of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PadMode {
    /// No padding; output shrinks by k-1 per dimension.
    Valid,
    /// Zero-pad by (k-1)/2 per side; output keeps the input size.
    ZeroSame,
}

impl PadMode {
    /// Cells lost per side of each dimension.
    pub fn shrink_per_side(&self, k: usize) -> usize {
        match self {
            PadMode::Valid => (k - 1) / 2,
            PadMode::ZeroSame => 0,
        }
    }

    fn pad(&self, k: usize) -> usize {
        match self {
            PadMode::Valid => 0,
            PadMode::ZeroSame => (k - 1) / 2,
        }
    }
}

/// Total cells a whole stack of layers loses per side.
pub fn schedule_shrink_per_side(k: usize, pads: &[PadMode]) -> usize {
    pads.iter().map(|p| p.shrink_per_side(k)).sum()
}

/// One convolution layer: `out_ch` filters of shape `in_ch` x `k` x `k`
/// plus one bias per output channel. Weight layout is row-major
/// `[out][in][k][k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    k: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ConvLayer {
    pub fn zeros(in_ch: usize, out_ch: usize, k: usize) -> Result<Self> {
        if in_ch == 0 || out_ch == 0 {
            return Err(Error::Config("conv layer needs in_ch, out_ch >= 1".into()));
        }
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size {k} must be odd")));
        }
        Ok(ConvLayer {
            in_ch,
            out_ch,
            k,
            weights: vec![0.0; out_ch * in_ch * k * k],
            bias: vec![0.0; out_ch],
        })
    }

    pub fn in_ch(&self) -> usize {
        self.in_ch
    }

    pub fn out_ch(&self) -> usize {
        self.out_ch
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn w_idx(&self, o: usize, ic: usize, di: usize, dj: usize) -> usize {
        ((o * self.in_ch + ic) * self.k + di) * self.k + dj
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn out_dims(&self, x: &Tensor3, mode: PadMode) -> Result<(usize, usize)> {
        if x.c() != self.in_ch {
            return Err(Error::ShapeMismatch(format!(
                "conv input has {} channels, layer expects {}",
                x.c(),
                self.in_ch
            )));
        }
        let p = mode.pad(self.k);
        let (h, w) = (x.h() + 2 * p, x.w() + 2 * p);
        if h < self.k || w < self.k {
            return Err(Error::ShapeMismatch(format!(
                "conv input {}x{} too small for k={} in {:?} mode",
                x.h(),
                x.w(),
                self.k,
                mode
            )));
        }
        Ok((h - self.k + 1, w - self.k + 1))
    }

    /// Cross-correlate: `out[o,i,j] = b[o] + sum w[o,ic,di,dj] *
    /// x[ic, i+di-p, j+dj-p]`, reading zeros outside the input.
    pub fn forward(&self, x: &Tensor3, mode: PadMode) -> Result<Tensor3> {
        let (oh, ow) = self.out_dims(x, mode)?;
        let p = mode.pad(self.k);
        let (h, w, k) = (x.h(), x.w(), self.k);
        let mut out = Tensor3::zeros(self.out_ch, oh, ow);
        for o in 0..self.out_ch {
            out.channel_mut(o).fill(self.bias[o]);
            for ic in 0..self.in_ch {
                let xp = x.channel(ic);
                for di in 0..k {
                    // Output rows whose source row i + di - p is in range.
                    let i_lo = p.saturating_sub(di);
                    let i_hi = (h + p).saturating_sub(di).min(oh);
                    for dj in 0..k {
                        let wv = self.weights[self.w_idx(o, ic, di, dj)];
                        let j_lo = p.saturating_sub(dj);
                        let j_hi = (w + p).saturating_sub(dj).min(ow);
                        if j_lo >= j_hi {
                            continue;
                        }
                        for i in i_lo..i_hi {
                            let xrow = &xp[(i + di - p) * w..][..w];
                            let orow = &mut out.channel_mut(o)[i * ow..][..ow];
                            let xs = &xrow[j_lo + dj - p..][..j_hi - j_lo];
                            for (ov, xv) in orow[j_lo..j_hi].iter_mut().zip(xs) {
                                *ov += wv * xv;
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Exact gradients of [`ConvLayer::forward`]: returns
    /// (d loss/d input, d loss/d weights, d loss/d bias).
    pub fn backward(
        &self,
        x: &Tensor3,
        grad_out: &Tensor3,
        mode: PadMode,
    ) -> Result<(Tensor3, Vec<f64>, Vec<f64>)> {
        let (oh, ow) = self.out_dims(x, mode)?;
        if grad_out.shape() != (self.out_ch, oh, ow) {
            return Err(Error::ShapeMismatch(format!(
                "grad_out shape {:?} does not match conv output ({}, {oh}, {ow})",
                grad_out.shape(),
                self.out_ch
            )));
        }
        let p = mode.pad(self.k);
        let (h, w, k) = (x.h(), x.w(), self.k);
        let mut gx = Tensor3::zeros(self.in_ch, h, w);
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.out_ch];
        for o in 0..self.out_ch {
            let gp = grad_out.channel(o);
            gb[o] = gp.iter().sum();
            for ic in 0..self.in_ch {
                let xp = x.channel(ic);
                for di in 0..k {
                    let i_lo = p.saturating_sub(di);
                    let i_hi = (h + p).saturating_sub(di).min(oh);
                    for dj in 0..k {
                        let wv = self.weights[self.w_idx(o, ic, di, dj)];
                        let j_lo = p.saturating_sub(dj);
                        let j_hi = (w + p).saturating_sub(dj).min(ow);
                        if j_lo >= j_hi {
                            continue;
                        }
                        let mut acc = 0.0;
                        for i in i_lo..i_hi {
                            let xrow = &xp[(i + di - p) * w..][..w];
                            let grow = &gp[i * ow..][..ow];
                            let gxrow = &mut gx.channel_mut(ic)[(i + di - p) * w..][..w];
                            let xs = &xrow[j_lo + dj - p..][..j_hi - j_lo];
                            let gs = &grow[j_lo..j_hi];
                            // Adjoint of the forward SAXPY:
                            // gw accumulates <grad_out, x>, gx scatters wv * grad_out.
                            for (gv, xv) in gs.iter().zip(xs) {
                                acc += gv * xv;
                            }
                            for (gxv, gv) in
                                gxrow[j_lo + dj - p..][..j_hi - j_lo].iter_mut().zip(gs)
                            {
                                *gxv += wv * gv;
                            }
                        }
                        gw[self.w_idx(o, ic, di, dj)] = acc;
                    }
                }
            }
        }
        Ok((gx, gw, gb))
    }
}

/// Per-layer forward cache used by backprop: the layer input and the
/// pre-activation output.
#[derive(Debug, Clone)]
pub struct LayerCache {
    input: Tensor3,
    preact: Tensor3,
}

/// A stack of convolution layers with leaky-ReLU activations between them
/// and a linear final layer. The padding schedule is supplied per call, so
/// one architecture serves every halo strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    layers: Vec<ConvLayer>,
}

impl ConvNet {
    /// Zero-initialized network; `widths` lists the channel counts
    /// layer-by-layer, e.g. `[4, 6, 16, 6, 4]` for four layers.
    pub fn zeros(widths: &[usize], k: usize) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        let layers = widths
            .windows(2)
            .map(|pair| ConvLayer::zeros(pair[0], pair[1], k))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConvNet { layers })
    }

    pub fn from_layers(layers: Vec<ConvLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_ch() != pair[1].in_ch() {
                return Err(Error::ShapeMismatch(format!(
                    "layer output channels {} feed layer expecting {}",
                    pair[0].out_ch(),
                    pair[1].in_ch()
                )));
            }
        }
        Ok(ConvNet { layers })
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn in_ch(&self) -> usize {
        self.layers[0].in_ch()
    }

    pub fn out_ch(&self) -> usize {
        self.layers.last().unwrap().out_ch()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::param_count).sum()
    }

    /// All parameters as one flat vector, layer by layer, weights then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(layer.weights());
            out.extend_from_slice(layer.bias());
        }
        out
    }

    /// Inverse of [`ConvNet::params`].
    pub fn set_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "parameter vector length {} != {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            let nw = layer.weights().len();
            layer.weights_mut().copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = layer.bias().len();
            layer.bias_mut().copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    fn check_schedule(&self, pads: &[PadMode]) -> Result<()> {
        if pads.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "padding schedule has {} entries for {} layers",
                pads.len(),
                self.layers.len()
            )));
        }
        Ok(())
    }

    /// Forward pass under the given padding schedule. Leaky-ReLU after every
    /// layer except the last; the output layer is linear.
    pub fn forward(&self, x: &Tensor3, pads: &[PadMode]) -> Result<Tensor3> {
        self.check_schedule(pads)?;
        let mut cur = self.layers[0].forward(x, pads[0])?;
        for (l, layer) in self.layers.iter().enumerate().skip(1) {
            for v in cur.data_mut() {
                *v = leaky_relu(*v, LEAKY_EPS);
            }
            cur = layer.forward(&cur, pads[l])?;
        }
        Ok(cur)
    }

    /// Forward pass that keeps per-layer inputs and pre-activations for
    /// [`ConvNet::backward`]. Returns the prediction and the caches.
    pub fn forward_cached(
        &self,
        x: &Tensor3,
        pads: &[PadMode],
    ) -> Result<(Tensor3, Vec<LayerCache>)> {
        self.check_schedule(pads)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            if l > 0 {
                for v in cur.data_mut() {
                    *v = leaky_relu(*v, LEAKY_EPS);
                }
            }
            let preact = layer.forward(&cur, pads[l])?;
            caches.push(LayerCache {
                input: cur,
                preact: preact.clone(),
            });
            cur = preact;
        }
        Ok((cur, caches))
    }

    /// Backpropagate `grad_pred` (d loss / d prediction) through the cached
    /// forward pass. Returns the flat gradient vector aligned with
    /// [`ConvNet::params`].
    pub fn backward(
        &self,
        caches: &[LayerCache],
        grad_pred: &Tensor3,
        pads: &[PadMode],
    ) -> Result<Vec<f64>> {
        self.check_schedule(pads)?;
        if caches.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} caches for {} layers",
                caches.len(),
                self.layers.len()
            )));
        }
        let mut per_layer: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        let mut g = grad_pred.clone();
        for l in (0..self.layers.len()).rev() {
            let (gx, gw, gb) = self.layers[l].backward(&caches[l].input, &g, pads[l])?;
            per_layer.push((gw, gb));
            g = gx;
            if l > 0 {
                // The input of layer l is leaky_relu(preact of layer l-1).
                for (gv, zv) in g.data_mut().iter_mut().zip(caches[l - 1].preact.iter()) {
                    *gv *= leaky_relu_deriv(*zv, LEAKY_EPS);
                }
            }
        }
        let mut flat = Vec::with_capacity(self.param_count());
        for (gw, gb) in per_layer.into_iter().rev() {
            flat.extend_from_slice(&gw);
            flat.extend_from_slice(&gb);
        }
        Ok(flat)
    }
}
