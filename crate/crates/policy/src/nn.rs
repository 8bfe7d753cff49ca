//! Two-hidden-layer perceptron with layer normalization and hand-written
//! backward pass. All parameters live in one flat vector so optimizers, target
//! blending and checkpoints operate on plain slices.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;

pub const LN_EPS: f64 = 1e-5;

/// Shape of an `input → hidden → hidden → output` network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MlpSpec {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    /// Squash outputs with `tanh`.
    pub tanh_output: bool,
}

/// Named parameter tensor inside the flat vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSlot {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSlot {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

impl MlpSpec {
    /// Parameter tensors in storage order.
    pub fn layout(&self) -> Vec<TensorSlot> {
        let (i, h, o) = (self.input, self.hidden, self.output);
        let shapes: [(&'static str, Vec<usize>); 10] = [
            ("w1", vec![h, i]),
            ("b1", vec![h]),
            ("ln1_gain", vec![h]),
            ("ln1_offset", vec![h]),
            ("w2", vec![h, h]),
            ("b2", vec![h]),
            ("ln2_gain", vec![h]),
            ("ln2_offset", vec![h]),
            ("w3", vec![o, h]),
            ("b3", vec![o]),
        ];
        let mut offset = 0;
        shapes
            .into_iter()
            .map(|(name, shape)| {
                let slot = TensorSlot { name, shape, offset };
                offset += slot.len();
                slot
            })
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layout().iter().map(TensorSlot::len).sum()
    }
}

/// Intermediate values of a forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    x: Array2<f64>,
    xhat1: Array2<f64>,
    inv_std1: Array1<f64>,
    pre1: Array2<f64>,
    h1: Array2<f64>,
    xhat2: Array2<f64>,
    inv_std2: Array1<f64>,
    pre2: Array2<f64>,
    h2: Array2<f64>,
    out: Array2<f64>,
}

impl MlpCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    spec: MlpSpec,
    params: Vec<f64>,
}

struct Views<'a> {
    w1: ArrayView2<'a, f64>,
    b1: ArrayView1<'a, f64>,
    g1: ArrayView1<'a, f64>,
    o1: ArrayView1<'a, f64>,
    w2: ArrayView2<'a, f64>,
    b2: ArrayView1<'a, f64>,
    g2: ArrayView1<'a, f64>,
    o2: ArrayView1<'a, f64>,
    w3: ArrayView2<'a, f64>,
    b3: ArrayView1<'a, f64>,
}

fn view2<'a>(params: &'a [f64], slot: &TensorSlot) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((slot.shape[0], slot.shape[1]), &params[slot.range()]).expect("layout shape")
}

fn view1<'a>(params: &'a [f64], slot: &TensorSlot) -> ArrayView1<'a, f64> {
    ArrayView1::from_shape(slot.shape[0], &params[slot.range()]).expect("layout shape")
}

/// Row-wise layer normalization; returns `(x̂, 1/σ, g·x̂ + o)`.
fn layer_norm(z: &Array2<f64>, gain: ArrayView1<f64>, offset: ArrayView1<f64>) -> (Array2<f64>, Array1<f64>, Array2<f64>) {
    let width = z.ncols() as f64;
    let mean = z.sum_axis(Axis(1)) / width;
    let centered = z - &mean.view().insert_axis(Axis(1));
    let var = centered.mapv(|v| v * v).sum_axis(Axis(1)) / width;
    let inv_std = var.mapv(|v| 1.0 / (v + LN_EPS).sqrt());
    let xhat = &centered * &inv_std.view().insert_axis(Axis(1));
    let y = &xhat * &gain + offset;
    (xhat, inv_std, y)
}

/// Backward pass of [`layer_norm`]; accumulates gain/offset gradients and
/// returns the gradient with respect to the normalized input.
fn layer_norm_backward(
    dy: &Array2<f64>,
    xhat: &Array2<f64>,
    inv_std: &Array1<f64>,
    gain: ArrayView1<f64>,
    mut dgain: ArrayViewMut1<f64>,
    mut doffset: ArrayViewMut1<f64>,
) -> Array2<f64> {
    dgain += &(dy * xhat).sum_axis(Axis(0));
    doffset += &dy.sum_axis(Axis(0));
    let width = dy.ncols() as f64;
    let dxhat = dy * &gain;
    let mean_d = dxhat.sum_axis(Axis(1)) / width;
    let mean_dx = (&dxhat * xhat).sum_axis(Axis(1)) / width;
    let inner = &dxhat - &mean_d.insert_axis(Axis(1)) - &(xhat * &mean_dx.insert_axis(Axis(1)));
    inner * inv_std.view().insert_axis(Axis(1))
}

impl Mlp {
    /// Uniform fan-in initialization: weights and biases in `±1/√fan_in`,
    /// normalization gains 1 and offsets 0.
    pub fn new<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Self {
        let mut params = vec![0.0; spec.num_params()];
        for slot in spec.layout() {
            let fan_in = match slot.name {
                "w1" | "b1" => spec.input,
                "w2" | "b2" | "w3" | "b3" => spec.hidden,
                _ => 0,
            };
            let range = slot.range();
            if fan_in == 0 {
                let fill = if slot.name.ends_with("gain") { 1.0 } else { 0.0 };
                params[range].iter_mut().for_each(|p| *p = fill);
            } else {
                let bound = 1.0 / (fan_in as f64).sqrt();
                params[range].iter_mut().for_each(|p| *p = rng.gen_range(-bound..bound));
            }
        }
        Self { spec, params }
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Option<Self> {
        (params.len() == spec.num_params()).then_some(Self { spec, params })
    }

    pub fn spec(&self) -> MlpSpec {
        self.spec
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn views(&self) -> Views<'_> {
        let l = self.spec.layout();
        let p = &self.params;
        Views {
            w1: view2(p, &l[0]),
            b1: view1(p, &l[1]),
            g1: view1(p, &l[2]),
            o1: view1(p, &l[3]),
            w2: view2(p, &l[4]),
            b2: view1(p, &l[5]),
            g2: view1(p, &l[6]),
            o2: view1(p, &l[7]),
            w3: view2(p, &l[8]),
            b3: view1(p, &l[9]),
        }
    }

    /// Forward pass over a batch (one row per sample).
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> MlpCache {
        assert_eq!(x.ncols(), self.spec.input, "input width");
        let v = self.views();
        let z1 = x.dot(&v.w1.t()) + v.b1;
        let (xhat1, inv_std1, pre1) = layer_norm(&z1, v.g1, v.o1);
        let h1 = pre1.mapv(|a| a.max(0.0));
        let z2 = h1.dot(&v.w2.t()) + v.b2;
        let (xhat2, inv_std2, pre2) = layer_norm(&z2, v.g2, v.o2);
        let h2 = pre2.mapv(|a| a.max(0.0));
        let mut out = h2.dot(&v.w3.t()) + v.b3;
        if self.spec.tanh_output {
            out.mapv_inplace(f64::tanh);
        }
        MlpCache {
            x: x.to_owned(),
            xhat1,
            inv_std1,
            pre1,
            h1,
            xhat2,
            inv_std2,
            pre2,
            h2,
            out,
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.forward_cached(x).out
    }

    /// Backward pass for upstream gradient `d_out` (same shape as the output).
    /// Adds parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, cache: &MlpCache, d_out: ArrayView2<f64>, grad: &mut [f64]) -> Array2<f64> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        let v = self.views();
        let layout = self.spec.layout();
        let mut dz3 = d_out.to_owned();
        if self.spec.tanh_output {
            dz3.zip_mut_with(&cache.out, |d, &y| *d *= 1.0 - y * y);
        }

        let (head, tail) = grad.split_at_mut(layout[8].offset);
        let (gw3, gb3) = tail.split_at_mut(layout[8].len());
        let mut gw3 = ArrayViewMut2::from_shape((layout[8].shape[0], layout[8].shape[1]), gw3).expect("layout");
        let mut gb3 = ArrayViewMut1::from_shape(layout[9].shape[0], &mut gb3[..layout[9].len()]).expect("layout");
        gw3 += &dz3.t().dot(&cache.h2);
        gb3 += &dz3.sum_axis(Axis(0));
        let mut dh2 = dz3.dot(&v.w3);
        dh2.zip_mut_with(&cache.pre2, |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });

        let (g_lo, g_hi) = head.split_at_mut(layout[6].offset);
        let (dg2, do2) = g_hi.split_at_mut(layout[6].len());
        let dz2 = layer_norm_backward(
            &dh2,
            &cache.xhat2,
            &cache.inv_std2,
            v.g2,
            ArrayViewMut1::from_shape(layout[6].len(), dg2).expect("layout"),
            ArrayViewMut1::from_shape(layout[7].len(), &mut do2[..layout[7].len()]).expect("layout"),
        );
        {
            let w2 = &layout[4];
            let mut gw2 = ArrayViewMut2::from_shape((w2.shape[0], w2.shape[1]), &mut g_lo[w2.range()]).expect("layout");
            gw2 += &dz2.t().dot(&cache.h1);
            let mut gb2 = ArrayViewMut1::from_shape(layout[5].len(), &mut g_lo[layout[5].range()]).expect("layout");
            gb2 += &dz2.sum_axis(Axis(0));
        }
        let mut dh1 = dz2.dot(&v.w2);
        dh1.zip_mut_with(&cache.pre1, |d, &a| {
            if a <= 0.0 {
                *d = 0.0
            }
        });

        let (g_lo, g_hi) = g_lo.split_at_mut(layout[2].offset);
        let (dg1, do1) = g_hi.split_at_mut(layout[2].len());
        let dz1 = layer_norm_backward(
            &dh1,
            &cache.xhat1,
            &cache.inv_std1,
            v.g1,
            ArrayViewMut1::from_shape(layout[2].len(), dg1).expect("layout"),
            ArrayViewMut1::from_shape(layout[3].len(), &mut do1[..layout[3].len()]).expect("layout"),
        );
        let w1 = &layout[0];
        {
            let mut gw1 = ArrayViewMut2::from_shape((w1.shape[0], w1.shape[1]), &mut g_lo[w1.range()]).expect("layout");
            gw1 += &dz1.t().dot(&cache.x);
            let mut gb1 = ArrayViewMut1::from_shape(layout[1].len(), &mut g_lo[layout[1].range()]).expect("layout");
            gb1 += &dz1.sum_axis(Axis(0));
        }
        dz1.dot(&v.w1)
    }

    /// `θ ← (1 − τ)·θ + τ·θ_source`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) {
        assert_eq!(self.spec, source.spec, "soft update between different shapes");
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = (1.0 - tau) * *t + tau * s;
        }
    }
}

/// Stacks rows into a batch matrix.
pub fn batch_from_rows<const N: usize>(rows: &[[f64; N]]) -> Array2<f64> {
    let mut m = Array2::zeros((rows.len(), N));
    for (mut dst, src) in m.rows_mut().into_iter().zip(rows) {
        dst.assign(&ArrayView1::from(&src[..]));
    }
    m
}

/// Column-wise concatenation `[a | b]`.
pub fn concat_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut m = Array2::zeros((a.nrows(), a.ncols() + b.ncols()));
    m.slice_mut(s![.., ..a.ncols()]).assign(&a);
    m.slice_mut(s![.., a.ncols()..]).assign(&b);
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_is_contiguous() {
        let spec = MlpSpec {
            input: 11,
            hidden: 8,
            output: 4,
            tanh_output: true,
        };
        let l = spec.layout();
        assert_eq!(l[0].offset, 0);
        for w in l.windows(2) {
            assert_eq!(w[0].offset + w[0].len(), w[1].offset);
        }
        assert_eq!(spec.num_params(), 8 * 11 + 8 * 3 + 8 * 8 + 8 * 3 + 4 * 8 + 4);
    }

    #[test]
    fn outputs_are_bounded_and_deterministic() {
        let spec = MlpSpec {
            input: 5,
            hidden: 16,
            output: 4,
            tanh_output: true,
        };
        let net = Mlp::new(spec, &mut ChaCha8Rng::seed_from_u64(3));
        let again = Mlp::new(spec, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(net, again);
        let x = Array2::from_shape_fn((7, 5), |(i, j)| (i as f64 - 3.0) * 10.0 + j as f64);
        let y = net.forward(x.view());
        assert!(y.iter().all(|v| v.abs() < 1.0));
        assert_eq!(y, again.forward(x.view()));
    }

    #[test]
    fn normalized_rows_have_zero_mean_unit_variance() {
        let z = Array2::from_shape_fn((3, 6), |(i, j)| (i * 7 + j * j) as f64);
        let ones = Array1::ones(6);
        let zeros = Array1::zeros(6);
        let (xhat, _, y) = layer_norm(&z, ones.view(), zeros.view());
        for row in xhat.rows() {
            assert!(row.sum().abs() < 1e-12);
            let var = row.mapv(|v| v * v).sum() / 6.0;
            assert!((var - 1.0).abs() < 1e-5);
        }
        assert_eq!(xhat, y);
    }

    #[test]
    fn soft_update_blends() {
        let spec = MlpSpec {
            input: 2,
            hidden: 3,
            output: 1,
            tanh_output: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = Mlp::new(spec, &mut rng);
        let b = Mlp::new(spec, &mut rng);
        let before = a.params()[0];
        a.soft_update_from(&b, 0.25);
        assert!((a.params()[0] - (0.75 * before + 0.25 * b.params()[0])).abs() < 1e-15);
    }
}
