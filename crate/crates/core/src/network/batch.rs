//! Batched input-derivative propagation with a layer-level reverse pass.
//!
//! For a batch of points the network is evaluated on several channels at
//! once: the value, and for each requested axis its first and (optionally)
//! second derivative. Channels are laid out as column blocks of one matrix per
//! layer, so every layer is a single matrix product. The backward pass
//! differentiates that same propagation with respect to the parameters.
//!
//! Points are processed in fixed-size chunks and gradients are accumulated in
//! chunk order, which keeps results bitwise reproducible.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayViewMut1, ArrayViewMut2};

use super::{Axis, Mlp, INPUTS};
use crate::sampling::Point;

/// Points per chunk in batched evaluation.
pub const CHUNK_POINTS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Channel {
    Value,
    D1(Axis),
    D2(Axis),
}

/// Which input derivatives to propagate: highest order per axis (0, 1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JetRequest {
    orders: [u8; 3],
}

impl JetRequest {
    pub fn value_only() -> Self {
        Self::default()
    }

    /// Raises the requested order on `axis` to at least `order` (clamped to 2).
    pub fn with(mut self, axis: Axis, order: u8) -> Self {
        let slot = &mut self.orders[axis.index()];
        *slot = (*slot).max(order.min(2));
        self
    }

    pub fn order(&self, axis: Axis) -> u8 {
        self.orders[axis.index()]
    }

    /// Value first, then per axis `D1` followed by `D2` when requested.
    pub fn channels(&self) -> Vec<Channel> {
        let mut out = vec![Channel::Value];
        for axis in Axis::ALL {
            let order = self.order(axis);
            if order >= 1 {
                out.push(Channel::D1(axis));
            }
            if order >= 2 {
                out.push(Channel::D2(axis));
            }
        }
        out
    }

    /// Per requested axis: input coordinate index, `D1` block, optional `D2` block.
    fn blocks(&self) -> Vec<(usize, usize, Option<usize>)> {
        let mut out = Vec::new();
        let mut block = 1;
        for axis in Axis::ALL {
            let order = self.order(axis);
            if order >= 1 {
                let d1 = block;
                block += 1;
                let d2 = (order >= 2).then(|| {
                    block += 1;
                    block - 1
                });
                out.push((axis.index(), d1, d2));
            }
        }
        out
    }
}

/// Channel values for a batch of points, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Jets {
    channels: Vec<Channel>,
    len: usize,
    data: Vec<f64>,
}

impl Jets {
    pub fn zeros(request: JetRequest, len: usize) -> Self {
        let channels = request.channels();
        let data = vec![0.0; channels.len() * len];
        Self { channels, len, data }
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    fn block(&self, channel: Channel) -> Option<usize> {
        self.channels.iter().position(|&c| c == channel)
    }

    pub fn get(&self, channel: Channel) -> Option<&[f64]> {
        self.block(channel).map(|b| &self.data[b * self.len..(b + 1) * self.len])
    }

    pub fn get_mut(&mut self, channel: Channel) -> Option<&mut [f64]> {
        let len = self.len;
        self.block(channel).map(move |b| &mut self.data[b * len..(b + 1) * len])
    }

    pub fn value(&self) -> &[f64] {
        &self.data[..self.len]
    }

    fn append(&mut self, other: &Jets) {
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        let total = self.len + other.len;
        for b in 0..self.channels.len() {
            data.extend_from_slice(&self.data[b * self.len..(b + 1) * self.len]);
            data.extend_from_slice(&other.data[b * other.len..(b + 1) * other.len]);
        }
        self.data = data;
        self.len = total;
    }
}

struct HiddenTrace {
    z: Array2<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    s3: Vec<f64>,
}

struct ChunkTrace {
    /// Input matrix of every layer (`inputs[k]` feeds layer `k`).
    inputs: Vec<Array2<f64>>,
    hidden: Vec<HiddenTrace>,
}

impl Mlp {
    fn input_matrix(&self, points: &[Point], request: &JetRequest, n_channels: usize) -> Array2<f64> {
        let n = points.len();
        let mut h = Array2::<f64>::zeros((INPUTS, n_channels * n));
        for (j, p) in points.iter().enumerate() {
            h[[0, j]] = p.x;
            h[[1, j]] = p.y;
            h[[2, j]] = p.t;
        }
        for (coord, d1, _) in request.blocks() {
            for j in 0..n {
                h[[coord, d1 * n + j]] = 1.0;
            }
        }
        h
    }

    fn forward_chunk(&self, points: &[Point], request: &JetRequest, keep: bool) -> (Vec<f64>, Option<ChunkTrace>) {
        let n = points.len();
        let n_channels = request.channels().len();
        let blocks = request.blocks();
        let m = n_channels * n;
        let mut h = self.input_matrix(points, request, n_channels);
        let mut inputs = Vec::new();
        let mut hidden = Vec::new();
        let n_layers = self.num_layers();
        for k in 0..n_layers {
            let (a, b) = self.layer(k);
            let n_out = a.nrows();
            let mut z = Array2::<f64>::zeros((n_out, m));
            general_mat_mul(1.0, &a, &h, 0.0, &mut z);
            {
                let zs = z.as_slice_mut().expect("standard layout");
                for r in 0..n_out {
                    let br = b[r];
                    for v in &mut zs[r * m..r * m + n] {
                        *v += br;
                    }
                }
            }
            if k + 1 == n_layers {
                if keep {
                    inputs.push(h);
                }
                let out = z.into_raw_vec_and_offset().0;
                let trace = keep.then(|| ChunkTrace { inputs, hidden });
                return (out, trace);
            }
            let mut next = Array2::<f64>::zeros((n_out, m));
            let (mut s1, mut s2, mut s3) = if keep {
                (vec![0.0; n_out * n], vec![0.0; n_out * n], vec![0.0; n_out * n])
            } else {
                (Vec::new(), Vec::new(), Vec::new())
            };
            {
                let zs = z.as_slice().expect("standard layout");
                let hs = next.as_slice_mut().expect("standard layout");
                for r in 0..n_out {
                    let zr = &zs[r * m..(r + 1) * m];
                    let hr = &mut hs[r * m..(r + 1) * m];
                    for j in 0..n {
                        let [s, d1, d2, d3] = self.activation.derivatives(zr[j]);
                        hr[j] = s;
                        for &(_, b1, b2) in &blocks {
                            let zd1 = zr[b1 * n + j];
                            hr[b1 * n + j] = d1 * zd1;
                            if let Some(b2) = b2 {
                                hr[b2 * n + j] = d1 * zr[b2 * n + j] + d2 * zd1 * zd1;
                            }
                        }
                        if keep {
                            s1[r * n + j] = d1;
                            s2[r * n + j] = d2;
                            s3[r * n + j] = d3;
                        }
                    }
                }
            }
            if keep {
                inputs.push(std::mem::replace(&mut h, next));
                hidden.push(HiddenTrace { z, s1, s2, s3 });
            } else {
                h = next;
            }
        }
        unreachable!("network has at least one layer")
    }

    fn backward_chunk(&self, trace: &ChunkTrace, request: &JetRequest, n: usize, adjoint: &[f64], grad: &mut [f64]) {
        let blocks = request.blocks();
        let m = adjoint.len();
        let mut zbar = Array2::from_shape_vec((1, m), adjoint.to_vec()).expect("adjoint shape");
        for k in (0..self.num_layers()).rev() {
            let (a, _) = self.layer(k);
            let (n_out, n_in) = a.dim();
            let (w_off, b_off) = self.layer_offsets(k);
            {
                let (head, tail) = grad.split_at_mut(b_off);
                let mut ga = ArrayViewMut2::from_shape((n_out, n_in), &mut head[w_off..]).expect("grad shape");
                general_mat_mul(1.0, &zbar, &trace.inputs[k].t(), 1.0, &mut ga);
                let mut gb = ArrayViewMut1::from(&mut tail[..n_out]);
                let zs = zbar.as_slice().expect("standard layout");
                for r in 0..n_out {
                    gb[r] += zs[r * m..r * m + n].iter().sum::<f64>();
                }
            }
            if k == 0 {
                break;
            }
            let mut hbar = Array2::<f64>::zeros((n_in, m));
            general_mat_mul(1.0, &a.t(), &zbar, 0.0, &mut hbar);
            let ht = &trace.hidden[k - 1];
            let zs = ht.z.as_slice().expect("standard layout");
            let hs = hbar.as_slice_mut().expect("standard layout");
            for r in 0..n_in {
                let zr = &zs[r * m..(r + 1) * m];
                let hr = &mut hs[r * m..(r + 1) * m];
                for j in 0..n {
                    let i = r * n + j;
                    let (s1, s2, s3) = (ht.s1[i], ht.s2[i], ht.s3[i]);
                    let mut zv_bar = s1 * hr[j];
                    for &(_, b1, b2) in &blocks {
                        let zd1 = zr[b1 * n + j];
                        let hd1_bar = hr[b1 * n + j];
                        zv_bar += s2 * zd1 * hd1_bar;
                        let mut zd1_bar = s1 * hd1_bar;
                        if let Some(b2) = b2 {
                            let zd2 = zr[b2 * n + j];
                            let hd2_bar = hr[b2 * n + j];
                            zv_bar += (s2 * zd2 + s3 * zd1 * zd1) * hd2_bar;
                            zd1_bar += 2.0 * s2 * zd1 * hd2_bar;
                            hr[b2 * n + j] = s1 * hd2_bar;
                        }
                        hr[b1 * n + j] = zd1_bar;
                    }
                    hr[j] = zv_bar;
                }
            }
            zbar = hbar;
        }
    }

    /// Evaluates the requested channels at every point.
    pub fn jets(&self, points: &[Point], request: JetRequest) -> Jets {
        let mut out = Jets::zeros(request, 0);
        for chunk in points.chunks(CHUNK_POINTS) {
            let (data, _) = self.forward_chunk(chunk, &request, false);
            let part = Jets {
                channels: out.channels.clone(),
                len: chunk.len(),
                data,
            };
            if out.is_empty() {
                out = part;
            } else {
                out.append(&part);
            }
        }
        out
    }

    /// Forward pass followed by a reverse pass, chunk by chunk.
    ///
    /// `head` receives the chunk's points, its channel values and a zeroed
    /// adjoint to fill with `d(objective)/d(channel)`; the resulting parameter
    /// gradient is added into `grad`.
    pub fn jets_backprop<E>(
        &self,
        points: &[Point],
        request: JetRequest,
        grad: &mut [f64],
        mut head: impl FnMut(&[Point], &Jets, &mut Jets) -> Result<(), E>,
    ) -> Result<(), E> {
        assert_eq!(grad.len(), self.num_params(), "gradient length");
        for chunk in points.chunks(CHUNK_POINTS) {
            let (data, trace) = self.forward_chunk(chunk, &request, true);
            let jets = Jets {
                channels: request.channels(),
                len: chunk.len(),
                data,
            };
            let mut adjoint = Jets::zeros(request, chunk.len());
            head(chunk, &jets, &mut adjoint)?;
            let trace = trace.expect("trace kept");
            self.backward_chunk(&trace, &request, chunk.len(), &adjoint.data, grad);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, NetConfig};

    fn net(activation: Activation) -> Mlp {
        Mlp::init(&NetConfig {
            num_hidden: 3,
            dim_hidden: 7,
            activation,
            seed: 42,
        })
        .unwrap()
    }

    fn points(n: usize) -> Vec<Point> {
        (0..n)
            .map(|i| {
                let s = i as f64 / n as f64;
                Point::new(0.1 + 0.8 * s, (7.0 * s).sin() * 0.5 + 0.5, 0.3 * s)
            })
            .collect()
    }

    #[test]
    fn channel_layout() {
        let req = JetRequest::value_only().with(Axis::X, 2).with(Axis::T, 1).with(Axis::X, 1);
        assert_eq!(
            req.channels(),
            vec![Channel::Value, Channel::D1(Axis::X), Channel::D2(Axis::X), Channel::D1(Axis::T)]
        );
        assert_eq!(req.blocks(), vec![(0, 1, Some(2)), (2, 3, None)]);
    }

    #[test]
    fn batched_channels_match_scalar_duals() {
        for act in [Activation::Tanh, Activation::Sigmoid] {
            let net = net(act);
            let pts = points(CHUNK_POINTS + 37);
            let req = JetRequest::value_only().with(Axis::X, 2).with(Axis::Y, 2).with(Axis::T, 2);
            let jets = net.jets(&pts, req);
            assert_eq!(jets.len(), pts.len());
            for (i, p) in pts.iter().enumerate() {
                for axis in Axis::ALL {
                    let d = net.eval_jet(p.x, p.y, p.t, axis);
                    assert!((jets.value()[i] - d.value).abs() < 1e-13);
                    assert!((jets.get(Channel::D1(axis)).unwrap()[i] - d.d1).abs() < 1e-12);
                    assert!((jets.get(Channel::D2(axis)).unwrap()[i] - d.d2).abs() < 1e-11);
                }
            }
        }
    }
}
