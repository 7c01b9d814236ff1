use core::ops::Range;

use super::{Layer, LayerKind, Tensor};

/// Source indices `i < n_src` whose destination `i * stride + offset` lies
/// in `0..n_dst`.
#[inline]
fn span(n_src: usize, n_dst: usize, stride: usize, offset: isize) -> Range<usize> {
    let lo = if offset >= 0 { 0 } else { ((-offset) as usize).div_ceil(stride) };
    let room = n_dst as isize - offset;
    let hi = if room <= 0 { 0 } else { ((room - 1) as usize) / stride + 1 };
    lo..hi.min(n_src).max(lo)
}

pub(super) fn forward(layer: &Layer, x: &Tensor) -> Tensor {
    let out_shape = layer.kind.output_shape(x.shape()).expect("shapes checked by Network");
    match layer.kind {
        LayerKind::Dense { inputs, outputs } => {
            let mut out = Tensor::zeros(out_shape);
            for b in 0..x.batch() {
                let xi = x.sample(b);
                let yo = out.sample_mut(b);
                for (o, y) in yo.iter_mut().enumerate() {
                    let row = &layer.weight[o * inputs..(o + 1) * inputs];
                    *y = layer.bias[o] + row.iter().zip(xi).map(|(w, v)| w * v).sum::<f64>();
                }
                debug_assert_eq!(yo.len(), outputs);
            }
            out
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let [_, _, ih, iw] = x.shape();
            let [_, _, oh, ow] = out_shape;
            let mut out = Tensor::zeros(out_shape);
            for b in 0..x.batch() {
                let xi = x.sample(b);
                let yo = out.sample_mut(b);
                for co in 0..out_channels {
                    let plane = &mut yo[co * oh * ow..(co + 1) * oh * ow];
                    plane.iter_mut().for_each(|v| *v = layer.bias[co]);
                    for ci in 0..in_channels {
                        let src = &xi[ci * ih * iw..(ci + 1) * ih * iw];
                        for ky in 0..kernel {
                            let oys = span(oh, ih, stride, ky as isize - padding as isize);
                            for kx in 0..kernel {
                                let wv = layer.weight[((co * in_channels + ci) * kernel + ky) * kernel + kx];
                                let oxs = span(ow, iw, stride, kx as isize - padding as isize);
                                for oy in oys.clone() {
                                    let iy = oy * stride + ky - padding;
                                    let row = &src[iy * iw..(iy + 1) * iw];
                                    let dst = &mut plane[oy * ow..(oy + 1) * ow];
                                    for ox in oxs.clone() {
                                        dst[ox] += wv * row[ox * stride + kx - padding];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        LayerKind::ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let [_, _, ih, iw] = x.shape();
            let [_, _, oh, ow] = out_shape;
            let mut out = Tensor::zeros(out_shape);
            for b in 0..x.batch() {
                let xi = x.sample(b);
                let yo = out.sample_mut(b);
                for co in 0..out_channels {
                    yo[co * oh * ow..(co + 1) * oh * ow].iter_mut().for_each(|v| *v = layer.bias[co]);
                }
                for ci in 0..in_channels {
                    let src = &xi[ci * ih * iw..(ci + 1) * ih * iw];
                    for co in 0..out_channels {
                        let plane = &mut yo[co * oh * ow..(co + 1) * oh * ow];
                        for ky in 0..kernel {
                            let iys = span(ih, oh, stride, ky as isize - padding as isize);
                            for kx in 0..kernel {
                                let wv = layer.weight[((ci * out_channels + co) * kernel + ky) * kernel + kx];
                                let ixs = span(iw, ow, stride, kx as isize - padding as isize);
                                for iy in iys.clone() {
                                    let oy = iy * stride + ky - padding;
                                    let row = &src[iy * iw..(iy + 1) * iw];
                                    let dst = &mut plane[oy * ow..(oy + 1) * ow];
                                    for ix in ixs.clone() {
                                        dst[ix * stride + kx - padding] += wv * row[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            out
        }
        LayerKind::Reshape { .. } => x.clone().reshaped(out_shape),
        LayerKind::Scale(ref s) => {
            let mut out = x.clone();
            for b in 0..out.batch() {
                out.sample_mut(b).iter_mut().zip(s).for_each(|(v, k)| *v *= k);
            }
            out
        }
        LayerKind::LeakyRelu(slope) => {
            let mut out = x.clone();
            out.data_mut().iter_mut().for_each(|v| *v = if *v > 0.0 { *v } else { slope * *v });
            out
        }
        LayerKind::Sigmoid => {
            let mut out = x.clone();
            out.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
            out
        }
    }
}

#[inline]
pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + libm::exp(-v))
    } else {
        let e = libm::exp(v);
        e / (1.0 + e)
    }
}

/// Backpropagates `g` (gradient of `y = layer(x)`), accumulating parameter
/// gradients into `gw`/`gb` and returning the input gradient.
pub(super) fn backward(layer: &Layer, x: &Tensor, y: &Tensor, g: &Tensor, gw: &mut [f64], gb: &mut [f64]) -> Tensor {
    match layer.kind {
        LayerKind::Dense { inputs, .. } => {
            let mut gx = Tensor::zeros(x.shape());
            for b in 0..x.batch() {
                let xi = x.sample(b);
                let go = g.sample(b);
                let gxi = gx.sample_mut(b);
                for (o, &gv) in go.iter().enumerate() {
                    if gv == 0.0 {
                        continue;
                    }
                    gb[o] += gv;
                    let row = &layer.weight[o * inputs..(o + 1) * inputs];
                    let grow = &mut gw[o * inputs..(o + 1) * inputs];
                    for k in 0..inputs {
                        grow[k] += gv * xi[k];
                        gxi[k] += gv * row[k];
                    }
                }
            }
            gx
        }
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let [_, _, ih, iw] = x.shape();
            let [_, _, oh, ow] = y.shape();
            let mut gx = Tensor::zeros(x.shape());
            for b in 0..x.batch() {
                let xi = x.sample(b);
                let go = g.sample(b);
                let gxi = gx.sample_mut(b);
                for co in 0..out_channels {
                    let gplane = &go[co * oh * ow..(co + 1) * oh * ow];
                    gb[co] += gplane.iter().sum::<f64>();
                    for ci in 0..in_channels {
                        let src = &xi[ci * ih * iw..(ci + 1) * ih * iw];
                        let gsrc = &mut gxi[ci * ih * iw..(ci + 1) * ih * iw];
                        for ky in 0..kernel {
                            let oys = span(oh, ih, stride, ky as isize - padding as isize);
                            for kx in 0..kernel {
                                let wi = ((co * in_channels + ci) * kernel + ky) * kernel + kx;
                                let wv = layer.weight[wi];
                                let oxs = span(ow, iw, stride, kx as isize - padding as isize);
                                let mut acc = 0.0;
                                for oy in oys.clone() {
                                    let iy = oy * stride + ky - padding;
                                    let grow = &gplane[oy * ow..(oy + 1) * ow];
                                    for ox in oxs.clone() {
                                        let ix = iy * iw + ox * stride + kx - padding;
                                        acc += grow[ox] * src[ix];
                                        gsrc[ix] += grow[ox] * wv;
                                    }
                                }
                                gw[wi] += acc;
                            }
                        }
                    }
                }
            }
            gx
        }
        LayerKind::ConvTranspose2d {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
        } => {
            let [_, _, ih, iw] = x.shape();
            let [_, _, oh, ow] = y.shape();
            let mut gx = Tensor::zeros(x.shape());
            for b in 0..x.batch() {
                let xi = x.sample(b);
                let go = g.sample(b);
                let gxi = gx.sample_mut(b);
                for co in 0..out_channels {
                    gb[co] += go[co * oh * ow..(co + 1) * oh * ow].iter().sum::<f64>();
                }
                for ci in 0..in_channels {
                    let src = &xi[ci * ih * iw..(ci + 1) * ih * iw];
                    let gsrc = &mut gxi[ci * ih * iw..(ci + 1) * ih * iw];
                    for co in 0..out_channels {
                        let gplane = &go[co * oh * ow..(co + 1) * oh * ow];
                        for ky in 0..kernel {
                            let iys = span(ih, oh, stride, ky as isize - padding as isize);
                            for kx in 0..kernel {
                                let wi = ((ci * out_channels + co) * kernel + ky) * kernel + kx;
                                let wv = layer.weight[wi];
                                let ixs = span(iw, ow, stride, kx as isize - padding as isize);
                                let mut acc = 0.0;
                                for iy in iys.clone() {
                                    let oy = iy * stride + ky - padding;
                                    let grow = &gplane[oy * ow..(oy + 1) * ow];
                                    for ix in ixs.clone() {
                                        let gv = grow[ix * stride + kx - padding];
                                        acc += gv * src[iy * iw + ix];
                                        gsrc[iy * iw + ix] += gv * wv;
                                    }
                                }
                                gw[wi] += acc;
                            }
                        }
                    }
                }
            }
            gx
        }
        LayerKind::Reshape { .. } => g.clone().reshaped(x.shape()),
        LayerKind::Scale(ref s) => {
            let mut gx = g.clone().reshaped(x.shape());
            for b in 0..gx.batch() {
                gx.sample_mut(b).iter_mut().zip(s).for_each(|(v, k)| *v *= k);
            }
            gx
        }
        LayerKind::LeakyRelu(slope) => {
            let mut gx = g.clone();
            gx.data_mut().iter_mut().zip(x.data()).for_each(|(gv, &xv)| {
                if xv <= 0.0 {
                    *gv *= slope
                }
            });
            gx
        }
        LayerKind::Sigmoid => {
            let mut gx = g.clone();
            gx.data_mut().iter_mut().zip(y.data()).for_each(|(gv, &yv)| *gv *= yv * (1.0 - yv));
            gx
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn span_bounds() {
        // stride 2, offset -1 into 8 destinations from 4 sources.
        assert_eq!(span(4, 8, 2, -1), 1..4);
        assert_eq!(span(4, 8, 2, 2), 0..3);
        assert_eq!(span(4, 2, 2, 5), 0..0);
        assert_eq!(span(3, 6, 2, 0), 0..3);
    }
}
