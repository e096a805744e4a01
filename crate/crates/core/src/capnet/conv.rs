//! Dense CHW tensors and direct convolution / transposed-convolution kernels
//! with hand-written backward passes.
//!
//! Loops parallelize over output (or input) channels only; every element is
//! written by exactly one task with a fixed inner summation order, so results
//! are bit-identical regardless of thread scheduling.

use rayon::prelude::*;

/// A channels × height × width tensor, row-major within each channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(c, y, x)]
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// Concatenate along the channel axis. Spatial sizes must match.
    pub fn concat_channels(&self, other: &Tensor3) -> Tensor3 {
        assert_eq!(self.height, other.height, "concat height mismatch");
        assert_eq!(self.width, other.width, "concat width mismatch");
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Tensor3 {
            channels: self.channels + other.channels,
            height: self.height,
            width: self.width,
            data,
        }
    }

    /// Split the leading `front` channels from the rest (inverse of
    /// [`Tensor3::concat_channels`]).
    pub fn split_channels(&self, front: usize) -> (Tensor3, Tensor3) {
        assert!(front <= self.channels);
        let plane = self.height * self.width;
        let a = Tensor3 {
            channels: front,
            height: self.height,
            width: self.width,
            data: self.data[..front * plane].to_vec(),
        };
        let b = Tensor3 {
            channels: self.channels - front,
            height: self.height,
            width: self.width,
            data: self.data[front * plane..].to_vec(),
        };
        (a, b)
    }

    pub fn relu(&self) -> Tensor3 {
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v.max(0.0)).collect(),
        }
    }

    /// Gradient through ReLU given the post-activation output.
    pub fn relu_backward(&self, grad_out: &Tensor3) -> Tensor3 {
        assert_eq!(self.data.len(), grad_out.data.len());
        Tensor3 {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&grad_out.data)
                .map(|(&o, &g)| if o > 0.0 { g } else { 0.0 })
                .collect(),
        }
    }
}

/// Geometry of a convolution layer. Weights are `[out_ch][in_ch][k][k]` for
/// regular convolutions and `[in_ch][out_ch][k][k]` for transposed ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Extra rows/columns appended to a transposed convolution's output.
    pub out_pad: usize,
    pub transposed: bool,
}

impl ConvSpec {
    pub fn conv(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad: kernel / 2,
            out_pad: 0,
            transposed: false,
        }
    }

    /// 5×5 stride-2 transposed convolution that exactly doubles the spatial
    /// size: pad 2 with one row/column of output padding.
    pub fn deconv_double(in_ch: usize, out_ch: usize) -> Self {
        Self {
            in_ch,
            out_ch,
            kernel: 5,
            stride: 2,
            pad: 2,
            out_pad: 1,
            transposed: true,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.in_ch * self.out_ch * self.kernel * self.kernel
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        if self.transposed {
            (
                (h - 1) * self.stride + self.kernel - 2 * self.pad + self.out_pad,
                (w - 1) * self.stride + self.kernel - 2 * self.pad + self.out_pad,
            )
        } else {
            (
                (h + 2 * self.pad - self.kernel) / self.stride + 1,
                (w + 2 * self.pad - self.kernel) / self.stride + 1,
            )
        }
    }

    pub fn forward(&self, input: &Tensor3, weights: &[f64], bias: &[f64]) -> Tensor3 {
        if self.transposed {
            self.deconv_forward(input, weights, bias)
        } else {
            self.conv_forward(input, weights, bias)
        }
    }

    /// Backward pass: returns the input gradient and accumulates weight and
    /// bias gradients into `grad_w` / `grad_b`.
    pub fn backward(
        &self,
        input: &Tensor3,
        grad_out: &Tensor3,
        weights: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Tensor3 {
        if self.transposed {
            self.deconv_backward(input, grad_out, weights, grad_w, grad_b)
        } else {
            self.conv_backward(input, grad_out, weights, grad_w, grad_b)
        }
    }

    fn conv_forward(&self, input: &Tensor3, weights: &[f64], bias: &[f64]) -> Tensor3 {
        assert_eq!(input.channels, self.in_ch);
        assert_eq!(weights.len(), self.weight_len());
        let (oh, ow) = self.out_size(input.height, input.width);
        let mut out = Tensor3::zeros(self.out_ch, oh, ow);
        let k = self.kernel;
        let plane = oh * ow;
        let wpc = self.in_ch * k * k; // weights per output channel

        out.data
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(oc, out_plane)| {
                let wslice = &weights[oc * wpc..(oc + 1) * wpc];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..self.in_ch {
                            let in_plane = input.channel(ic);
                            for ky in 0..k {
                                let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                                if iy < 0 || iy >= input.height as isize {
                                    continue;
                                }
                                for kx in 0..k {
                                    let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                    if ix < 0 || ix >= input.width as isize {
                                        continue;
                                    }
                                    acc += in_plane[iy as usize * input.width + ix as usize]
                                        * wslice[(ic * k + ky) * k + kx];
                                }
                            }
                        }
                        out_plane[oy * ow + ox] = acc;
                    }
                }
            });
        out
    }

    fn conv_backward(
        &self,
        input: &Tensor3,
        grad_out: &Tensor3,
        weights: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Tensor3 {
        let k = self.kernel;
        let (oh, ow) = (grad_out.height, grad_out.width);
        let wpc = self.in_ch * k * k;

        // Bias and weight gradients, parallel over output channels (each task
        // owns a disjoint slice of grad_w).
        grad_w
            .par_chunks_mut(wpc)
            .zip(grad_b.par_iter_mut())
            .enumerate()
            .for_each(|(oc, (gw, gb))| {
                let go = grad_out.channel(oc);
                *gb += go.iter().sum::<f64>();
                for ic in 0..self.in_ch {
                    let in_plane = input.channel(ic);
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = 0.0;
                            for oy in 0..oh {
                                let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                                if iy < 0 || iy >= input.height as isize {
                                    continue;
                                }
                                for ox in 0..ow {
                                    let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                                    if ix < 0 || ix >= input.width as isize {
                                        continue;
                                    }
                                    acc += go[oy * ow + ox]
                                        * in_plane[iy as usize * input.width + ix as usize];
                                }
                            }
                            gw[(ic * k + ky) * k + kx] += acc;
                        }
                    }
                }
            });

        // Input gradient, gathered per input pixel, parallel over input
        // channels.
        let mut grad_in = Tensor3::zeros(self.in_ch, input.height, input.width);
        let in_plane_len = input.height * input.width;
        grad_in
            .data
            .par_chunks_mut(in_plane_len)
            .enumerate()
            .for_each(|(ic, gi)| {
                for iy in 0..input.height {
                    for ix in 0..input.width {
                        let mut acc = 0.0;
                        for ky in 0..k {
                            let ty = iy as isize + self.pad as isize - ky as isize;
                            if ty < 0 || ty % self.stride as isize != 0 {
                                continue;
                            }
                            let oy = (ty / self.stride as isize) as usize;
                            if oy >= oh {
                                continue;
                            }
                            for kx in 0..k {
                                let tx = ix as isize + self.pad as isize - kx as isize;
                                if tx < 0 || tx % self.stride as isize != 0 {
                                    continue;
                                }
                                let ox = (tx / self.stride as isize) as usize;
                                if ox >= ow {
                                    continue;
                                }
                                for oc in 0..self.out_ch {
                                    acc += grad_out.channel(oc)[oy * ow + ox]
                                        * weights[(oc * self.in_ch + ic) * k * k + ky * k + kx];
                                }
                            }
                        }
                        gi[iy * input.width + ix] = acc;
                    }
                }
            });
        grad_in
    }

    fn deconv_forward(&self, input: &Tensor3, weights: &[f64], bias: &[f64]) -> Tensor3 {
        assert_eq!(input.channels, self.in_ch);
        assert_eq!(weights.len(), self.weight_len());
        let (oh, ow) = self.out_size(input.height, input.width);
        let mut out = Tensor3::zeros(self.out_ch, oh, ow);
        let k = self.kernel;
        let plane = oh * ow;

        out.data
            .par_chunks_mut(plane)
            .enumerate()
            .for_each(|(oc, out_plane)| {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = bias[oc];
                        for ky in 0..k {
                            let ty = oy as isize + self.pad as isize - ky as isize;
                            if ty < 0 || ty % self.stride as isize != 0 {
                                continue;
                            }
                            let iy = (ty / self.stride as isize) as usize;
                            if iy >= input.height {
                                continue;
                            }
                            for kx in 0..k {
                                let tx = ox as isize + self.pad as isize - kx as isize;
                                if tx < 0 || tx % self.stride as isize != 0 {
                                    continue;
                                }
                                let ix = (tx / self.stride as isize) as usize;
                                if ix >= input.width {
                                    continue;
                                }
                                for ic in 0..self.in_ch {
                                    acc += input.channel(ic)[iy * input.width + ix]
                                        * weights[(ic * self.out_ch + oc) * k * k + ky * k + kx];
                                }
                            }
                        }
                        out_plane[oy * ow + ox] = acc;
                    }
                }
            });
        out
    }

    fn deconv_backward(
        &self,
        input: &Tensor3,
        grad_out: &Tensor3,
        weights: &[f64],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> Tensor3 {
        let k = self.kernel;
        let (oh, ow) = (grad_out.height, grad_out.width);

        for (oc, gb) in grad_b.iter_mut().enumerate() {
            *gb += grad_out.channel(oc).iter().sum::<f64>();
        }

        // Weight gradients, parallel over input channels (disjoint grad_w
        // slices in the [in_ch][out_ch][k][k] layout).
        let wpc = self.out_ch * k * k;
        grad_w
            .par_chunks_mut(wpc)
            .enumerate()
            .for_each(|(ic, gw)| {
                let in_plane = input.channel(ic);
                for oc in 0..self.out_ch {
                    let go = grad_out.channel(oc);
                    for ky in 0..k {
                        for kx in 0..k {
                            let mut acc = 0.0;
                            for iy in 0..input.height {
                                let oy =
                                    (iy * self.stride + ky) as isize - self.pad as isize;
                                if oy < 0 || oy >= oh as isize {
                                    continue;
                                }
                                for ix in 0..input.width {
                                    let ox =
                                        (ix * self.stride + kx) as isize - self.pad as isize;
                                    if ox < 0 || ox >= ow as isize {
                                        continue;
                                    }
                                    acc += in_plane[iy * input.width + ix]
                                        * go[oy as usize * ow + ox as usize];
                                }
                            }
                            gw[(oc * k + ky) * k + kx] += acc;
                        }
                    }
                }
            });

        // Input gradient: a stride-s convolution of grad_out with the kernel.
        let mut grad_in = Tensor3::zeros(self.in_ch, input.height, input.width);
        let in_plane_len = input.height * input.width;
        grad_in
            .data
            .par_chunks_mut(in_plane_len)
            .enumerate()
            .for_each(|(ic, gi)| {
                for iy in 0..input.height {
                    for ix in 0..input.width {
                        let mut acc = 0.0;
                        for ky in 0..k {
                            let oy = (iy * self.stride + ky) as isize - self.pad as isize;
                            if oy < 0 || oy >= oh as isize {
                                continue;
                            }
                            for kx in 0..k {
                                let ox = (ix * self.stride + kx) as isize - self.pad as isize;
                                if ox < 0 || ox >= ow as isize {
                                    continue;
                                }
                                for oc in 0..self.out_ch {
                                    acc += grad_out.channel(oc)[oy as usize * ow + ox as usize]
                                        * weights[(ic * self.out_ch + oc) * k * k + ky * k + kx];
                                }
                            }
                        }
                        gi[iy * input.width + ix] = acc;
                    }
                }
            });
        grad_in
    }
}
