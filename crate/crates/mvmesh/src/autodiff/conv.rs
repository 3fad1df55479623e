//! Direct (no im2col) 2-D and 3-D convolutions with stride and zero padding.
//!
//! Layouts: 2-D input `[C_in, H, W]`, kernel `[C_out, C_in, kH, kW]`; 3-D
//! input `[C_in, D, H, W]`, kernel `[C_out, C_in, kD, kH, kW]`. Bias is one
//! value per output channel. Backward mirrors the forward loops, so each pass
//! costs the same as the forward.

use super::tape::{Tape, Var};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

fn out_extent(op: &'static str, input: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || kernel > padded {
        return Err(Error::BadArgument {
            op,
            reason: format!("kernel extent {kernel} larger than padded input {padded}"),
        });
    }
    if stride == 0 {
        return Err(Error::BadArgument {
            op,
            reason: "stride must be positive".into(),
        });
    }
    Ok((padded - kernel) / stride + 1)
}

impl<T: Real> Tape<T> {
    /// 2-D convolution (cross-correlation) with zero padding.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 3 || ws.len() != 4 || xs[0] != ws[1] {
            return Err(Error::ShapeMismatch {
                op: "conv2d",
                left: xs,
                right: ws,
            });
        }
        let (cin, h, wd) = (xs[0], xs[1], xs[2]);
        let (cout, kh, kw) = (ws[0], ws[2], ws[3]);
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs != [cout] {
                return Err(Error::ShapeMismatch {
                    op: "conv2d bias",
                    left: bs.to_vec(),
                    right: vec![cout],
                });
            }
        }
        let oh = out_extent("conv2d", h, kh, stride, pad)?;
        let ow = out_extent("conv2d", wd, kw, stride, pad)?;

        let xd = self.value(x).data();
        let wdt = self.value(w).data();
        let bd: Option<Vec<T>> = bias.map(|b| self.value(b).data().to_vec());
        let mut out = vec![T::zero(); cout * oh * ow];
        for co in 0..cout {
            let base_b = bd.as_ref().map_or(T::zero(), |b| b[co]);
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = base_b;
                    for ci in 0..cin {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= wd as isize {
                                    continue;
                                }
                                acc += xd[(ci * h + iy as usize) * wd + ix as usize]
                                    * wdt[((co * cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        let out = Tensor::new(vec![cout, oh, ow], out).expect("sized above");

        let mut inputs = vec![x, w];
        if let Some(b) = bias {
            inputs.push(b);
        }
        let has_bias = bias.is_some();
        Ok(self.push_op(&inputs, out, move |ctx| {
            let xd = ctx.input(0).data();
            let wdt = ctx.input(1).data();
            let g = ctx.out_grad().data();
            let mut gx = vec![T::zero(); cin * h * wd];
            let mut gw = vec![T::zero(); cout * cin * kh * kw];
            let mut gb = vec![T::zero(); cout];
            for co in 0..cout {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let go = g[(co * oh + oy) * ow + ox];
                        gb[co] += go;
                        for ci in 0..cin {
                            for ky in 0..kh {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * stride + kx) as isize - pad as isize;
                                    if ix < 0 || ix >= wd as isize {
                                        continue;
                                    }
                                    let xi = (ci * h + iy as usize) * wd + ix as usize;
                                    let wi = ((co * cin + ci) * kh + ky) * kw + kx;
                                    gx[xi] += go * wdt[wi];
                                    gw[wi] += go * xd[xi];
                                }
                            }
                        }
                    }
                }
            }
            let mut grads = vec![
                Some(Tensor::new(vec![cin, h, wd], gx).expect("sized")),
                Some(Tensor::new(vec![cout, cin, kh, kw], gw).expect("sized")),
            ];
            if has_bias {
                grads.push(Some(Tensor::from_vec(gb)));
            }
            grads
        }))
    }

    /// 3-D convolution (cross-correlation) with zero padding.
    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 5 || xs[0] != ws[1] {
            return Err(Error::ShapeMismatch {
                op: "conv3d",
                left: xs,
                right: ws,
            });
        }
        let (cin, d, h, wd) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kd, kh, kw) = (ws[0], ws[2], ws[3], ws[4]);
        if let Some(b) = bias {
            let bs = self.shape(b);
            if bs != [cout] {
                return Err(Error::ShapeMismatch {
                    op: "conv3d bias",
                    left: bs.to_vec(),
                    right: vec![cout],
                });
            }
        }
        let od = out_extent("conv3d", d, kd, stride, pad)?;
        let oh = out_extent("conv3d", h, kh, stride, pad)?;
        let ow = out_extent("conv3d", wd, kw, stride, pad)?;

        let xd = self.value(x).data();
        let wdt = self.value(w).data();
        let bd: Option<Vec<T>> = bias.map(|b| self.value(b).data().to_vec());
        let mut out = vec![T::zero(); cout * od * oh * ow];
        for co in 0..cout {
            let base_b = bd.as_ref().map_or(T::zero(), |b| b[co]);
            for oz in 0..od {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = base_b;
                        for ci in 0..cin {
                            for kz in 0..kd {
                                let iz = (oz * stride + kz) as isize - pad as isize;
                                if iz < 0 || iz >= d as isize {
                                    continue;
                                }
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if ix < 0 || ix >= wd as isize {
                                            continue;
                                        }
                                        acc += xd[((ci * d + iz as usize) * h + iy as usize) * wd
                                            + ix as usize]
                                            * wdt[(((co * cin + ci) * kd + kz) * kh + ky) * kw + kx];
                                    }
                                }
                            }
                        }
                        out[((co * od + oz) * oh + oy) * ow + ox] = acc;
                    }
                }
            }
        }
        let out = Tensor::new(vec![cout, od, oh, ow], out).expect("sized above");

        let mut inputs = vec![x, w];
        if let Some(b) = bias {
            inputs.push(b);
        }
        let has_bias = bias.is_some();
        Ok(self.push_op(&inputs, out, move |ctx| {
            let xd = ctx.input(0).data();
            let wdt = ctx.input(1).data();
            let g = ctx.out_grad().data();
            let mut gx = vec![T::zero(); cin * d * h * wd];
            let mut gw = vec![T::zero(); cout * cin * kd * kh * kw];
            let mut gb = vec![T::zero(); cout];
            for co in 0..cout {
                for oz in 0..od {
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let go = g[((co * od + oz) * oh + oy) * ow + ox];
                            gb[co] += go;
                            for ci in 0..cin {
                                for kz in 0..kd {
                                    let iz = (oz * stride + kz) as isize - pad as isize;
                                    if iz < 0 || iz >= d as isize {
                                        continue;
                                    }
                                    for ky in 0..kh {
                                        let iy = (oy * stride + ky) as isize - pad as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        for kx in 0..kw {
                                            let ix = (ox * stride + kx) as isize - pad as isize;
                                            if ix < 0 || ix >= wd as isize {
                                                continue;
                                            }
                                            let xi = ((ci * d + iz as usize) * h + iy as usize)
                                                * wd
                                                + ix as usize;
                                            let wi = (((co * cin + ci) * kd + kz) * kh + ky) * kw
                                                + kx;
                                            gx[xi] += go * wdt[wi];
                                            gw[wi] += go * xd[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
            let mut grads = vec![
                Some(Tensor::new(vec![cin, d, h, wd], gx).expect("sized")),
                Some(Tensor::new(vec![cout, cin, kd, kh, kw], gw).expect("sized")),
            ];
            if has_bias {
                grads.push(Some(Tensor::from_vec(gb)));
            }
            grads
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::super::tape::Tape;
    use super::super::tensor::Tensor;

    #[test]
    fn ones_kernel_on_ones_image_sums_the_window() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::full(vec![1, 3, 3], 1.0));
        let w = tape.leaf(Tensor::full(vec![1, 1, 3, 3], 1.0));
        let y = tape.conv2d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[9.0]);
    }

    #[test]
    fn stride_and_padding_shape_arithmetic() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(vec![2, 8, 8]));
        let w = tape.leaf(Tensor::zeros(vec![4, 2, 3, 3]));
        let y = tape.conv2d(x, w, None, 2, 1).unwrap();
        assert_eq!(tape.shape(y), &[4, 4, 4]);
    }

    #[test]
    fn kernel_larger_than_padded_input_errors() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(vec![1, 2, 2]));
        let w = tape.leaf(Tensor::zeros(vec![1, 1, 5, 5]));
        let err = tape.conv2d(x, w, None, 1, 0).unwrap_err();
        assert!(err.to_string().contains("larger than padded input"));
    }

    #[test]
    fn conv3d_ones_kernel_counts_window_volume() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::full(vec![1, 2, 2, 2], 1.0));
        let w = tape.leaf(Tensor::full(vec![1, 1, 2, 2, 2], 1.0));
        let y = tape.conv3d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.shape(y), &[1, 1, 1, 1]);
        assert_eq!(tape.value(y).data(), &[8.0]);
    }

    #[test]
    fn bias_adds_per_output_channel() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(vec![1, 2, 2]));
        let w = tape.leaf(Tensor::zeros(vec![2, 1, 1, 1]));
        let b = tape.leaf(Tensor::from_vec(vec![0.5, -1.5]));
        let y = tape.conv2d(x, w, Some(b), 1, 0).unwrap();
        let d = tape.value(y).data();
        assert!(d[..4].iter().all(|&v| v == 0.5));
        assert!(d[4..].iter().all(|&v| v == -1.5));
    }
}
