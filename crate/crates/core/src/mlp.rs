//! Fully-connected tanh networks with exact input derivatives and parameter
//! gradients.
//!
//! The forward pass carries, per evaluation point, one row for the value and
//! (depending on [`DerivOrder`]) one row per input coordinate for the first
//! derivative and one for the diagonal second derivative. Every layer is then a
//! single matrix product over all rows, followed by the elementwise tanh chain
//! rule. The reverse pass runs back through that extended computation, so the
//! gradient of any scalar built from values, gradients and Laplacian terms is
//! exact.
//!
//! # Parameter layout
//!
//! For each layer `l = 0..=L` in order: the weight matrix `w_l` with shape
//! `N_{l+1} x N_l` stored row-major, followed by the bias vector `b_l` of
//! length `N_{l+1}`. Here `N_0` is the input dimension and `N_{L+1} = 1`.
//! Problems with unknown PDE parameters append that block after the network
//! parameters.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer sizes of a scalar-output tanh network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    input_dim: usize,
    hidden_widths: Vec<usize>,
}

/// Offsets of one affine layer inside a flat parameter vector.
#[derive(Debug, Clone, Copy)]
pub struct LayerSlot {
    pub n_in: usize,
    pub n_out: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden_widths: Vec<usize>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::Argument("input dimension must be positive".into()));
        }
        if hidden_widths.is_empty() {
            return Err(Error::Argument("at least one hidden layer is required".into()));
        }
        if hidden_widths.contains(&0) {
            return Err(Error::Argument("hidden widths must be positive".into()));
        }
        Ok(Self {
            input_dim,
            hidden_widths,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    /// `[N_0, N_1, .., N_L, 1]`
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_widths.len() + 2);
        sizes.push(self.input_dim);
        sizes.extend_from_slice(&self.hidden_widths);
        sizes.push(1);
        sizes
    }

    pub fn slots(&self) -> Vec<LayerSlot> {
        let sizes = self.layer_sizes();
        let mut offset = 0;
        sizes
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let slot = LayerSlot {
                    n_in,
                    n_out,
                    weight_offset: offset,
                    bias_offset: offset + n_in * n_out,
                };
                offset += n_in * n_out + n_out;
                slot
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes()
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    /// Total number of hidden units, i.e. the length of a dropout mask.
    pub fn n_hidden_units(&self) -> usize {
        self.hidden_widths.iter().sum()
    }

    /// Draws parameters with independent zero-mean Gaussian entries.
    pub fn sample_params<R: Rng + ?Sized>(&self, scales: &PriorScales, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_params()];
        for (l, slot) in self.slots().iter().enumerate() {
            let (ws, bs) = scales.layer(l);
            for v in &mut theta[slot.weight_offset..slot.bias_offset] {
                *v = ws * rng.sample::<f64, _>(StandardNormal);
            }
            for v in &mut theta[slot.bias_offset..slot.bias_offset + slot.n_out] {
                *v = bs * rng.sample::<f64, _>(StandardNormal);
            }
        }
        theta
    }

    /// Glorot-normal weights and zero biases, the usual starting point for
    /// deterministic training.
    pub fn xavier_init<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut theta = vec![0.0; self.n_params()];
        for slot in self.slots() {
            let std = (2.0 / (slot.n_in + slot.n_out) as f64).sqrt();
            for v in &mut theta[slot.weight_offset..slot.bias_offset] {
                *v = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        theta
    }
}

/// Per-layer prior standard deviations for weights and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorScales {
    pub weight_std: Vec<f64>,
    pub bias_std: Vec<f64>,
}

impl PriorScales {
    /// Every parameter standard normal.
    pub fn standard(arch: &MlpArchitecture) -> Self {
        let n = arch.depth() + 1;
        Self {
            weight_std: vec![1.0; n],
            bias_std: vec![1.0; n],
        }
    }

    fn layer(&self, l: usize) -> (f64, f64) {
        let pick = |v: &[f64]| v.get(l).or(v.last()).copied().unwrap_or(1.0);
        (pick(&self.weight_std), pick(&self.bias_std))
    }
}

/// Which input derivatives to propagate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivOrder {
    Value,
    First,
    Second,
}

impl DerivOrder {
    pub fn channels(self, n_deriv: usize) -> usize {
        match self {
            DerivOrder::Value => 1,
            DerivOrder::First => 1 + n_deriv,
            DerivOrder::Second => 1 + 2 * n_deriv,
        }
    }
}

/// Value, spatial gradient and diagonal of the spatial Hessian at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess_diag: Vec<f64>,
}

impl Jet {
    pub fn zeros(dim: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![0.0; dim],
            hess_diag: vec![0.0; dim],
        }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess_diag.iter().sum()
    }
}

/// Jets for a batch of points in struct-of-arrays form.
///
/// `grad` and `hess_diag` are point-major with `n_deriv` entries per point;
/// they are empty when the order does not include them.
#[derive(Debug, Clone, PartialEq)]
pub struct JetBatch {
    pub n_points: usize,
    pub n_deriv: usize,
    pub order: DerivOrder,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
    pub hess_diag: Vec<f64>,
}

impl JetBatch {
    pub fn zeros(n_points: usize, n_deriv: usize, order: DerivOrder) -> Self {
        let d = match order {
            DerivOrder::Value => 0,
            _ => n_points * n_deriv,
        };
        let h = match order {
            DerivOrder::Second => n_points * n_deriv,
            _ => 0,
        };
        Self {
            n_points,
            n_deriv,
            order,
            value: vec![0.0; n_points],
            grad: vec![0.0; d],
            hess_diag: vec![0.0; h],
        }
    }

    pub fn grad(&self, p: usize) -> &[f64] {
        &self.grad[p * self.n_deriv..(p + 1) * self.n_deriv]
    }

    pub fn hess_diag(&self, p: usize) -> &[f64] {
        &self.hess_diag[p * self.n_deriv..(p + 1) * self.n_deriv]
    }

    pub fn grad_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.grad[p * self.n_deriv..(p + 1) * self.n_deriv]
    }

    pub fn hess_diag_mut(&mut self, p: usize) -> &mut [f64] {
        &mut self.hess_diag[p * self.n_deriv..(p + 1) * self.n_deriv]
    }

    /// Jet of a single point; missing orders are reported as zeros.
    pub fn jet(&self, p: usize) -> Jet {
        Jet {
            value: self.value[p],
            grad: if self.grad.is_empty() {
                vec![0.0; self.n_deriv]
            } else {
                self.grad(p).to_vec()
            },
            hess_diag: if self.hess_diag.is_empty() {
                vec![0.0; self.n_deriv]
            } else {
                self.hess_diag(p).to_vec()
            },
        }
    }
}

/// Multiplicative dropout scales for every hidden unit, layers in order.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub scales: Vec<f64>,
}

impl DropoutMask {
    pub fn ones(arch: &MlpArchitecture) -> Self {
        Self {
            scales: vec![1.0; arch.n_hidden_units()],
        }
    }

    /// Inverted dropout: each unit is zeroed with probability `rate`, survivors
    /// are scaled by `1/(1-rate)`.
    pub fn sample<R: Rng + ?Sized>(arch: &MlpArchitecture, rate: f64, rng: &mut R) -> Self {
        let keep = 1.0 / (1.0 - rate);
        let scales = (0..arch.n_hidden_units())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        Self { scales }
    }

    pub fn dropped_fraction(&self) -> f64 {
        let dropped = self.scales.iter().filter(|&&s| s == 0.0).count();
        dropped as f64 / self.scales.len().max(1) as f64
    }
}

/// Evaluates `ũ(x; θ)` at a single point.
pub fn mlp_forward(arch: &MlpArchitecture, theta: &[f64], x: &[f64]) -> Result<f64> {
    check_theta(arch, theta, x)?;
    let tape = MlpTape::record(arch, theta, x, arch.input_dim(), DerivOrder::Value, None)?;
    Ok(tape.output().value[0])
}

/// Value, gradient and Hessian diagonal of `ũ(x; θ)` at a single point.
pub fn mlp_jet(arch: &MlpArchitecture, theta: &[f64], x: &[f64]) -> Result<Jet> {
    check_theta(arch, theta, x)?;
    let tape = MlpTape::record(arch, theta, x, arch.input_dim(), DerivOrder::Second, None)?;
    Ok(tape.output().jet(0))
}

fn check_theta(arch: &MlpArchitecture, theta: &[f64], x: &[f64]) -> Result<()> {
    if x.len() != arch.input_dim() {
        return Err(Error::Dimension {
            context: "evaluation point",
            expected: arch.input_dim(),
            actual: x.len(),
        });
    }
    if theta.len() != arch.n_params() {
        return Err(Error::Dimension {
            context: "network parameters",
            expected: arch.n_params(),
            actual: theta.len(),
        });
    }
    Ok(())
}

/// Recorded forward pass over a batch of points, reusable for the reverse pass.
#[derive(Debug)]
pub struct MlpTape<'a> {
    arch: &'a MlpArchitecture,
    theta: &'a [f64],
    mask: Option<&'a [f64]>,
    slots: Vec<LayerSlot>,
    n_points: usize,
    n_deriv: usize,
    order: DerivOrder,
    /// Inputs to each affine layer, `Z_0 ..= Z_L`.
    inputs: Vec<Array2<f64>>,
    /// Hidden pre-activations `A_0 .. A_{L-1}`.
    pre: Vec<Array2<f64>>,
    /// `tanh` of the value rows of each `A_l`, point-major.
    act: Vec<Vec<f64>>,
    out: JetBatch,
}

impl<'a> MlpTape<'a> {
    /// Runs the forward pass.
    ///
    /// `points` holds `n_points * input_dim` coordinates, point-major.
    /// Derivatives are taken with respect to the leading `n_deriv` input
    /// coordinates. `theta` may be longer than the network (trailing entries
    /// are ignored).
    pub fn record(
        arch: &'a MlpArchitecture,
        theta: &'a [f64],
        points: &[f64],
        n_deriv: usize,
        order: DerivOrder,
        mask: Option<&'a [f64]>,
    ) -> Result<Self> {
        let n0 = arch.input_dim();
        if theta.len() < arch.n_params() {
            return Err(Error::Dimension {
                context: "network parameters",
                expected: arch.n_params(),
                actual: theta.len(),
            });
        }
        if points.len() % n0 != 0 {
            return Err(Error::Dimension {
                context: "evaluation point",
                expected: n0,
                actual: points.len() % n0,
            });
        }
        if n_deriv > n0 {
            return Err(Error::Argument(format!(
                "cannot differentiate {n_deriv} of {n0} input coordinates"
            )));
        }
        if let Some(m) = mask {
            if m.len() != arch.n_hidden_units() {
                return Err(Error::Dimension {
                    context: "dropout mask",
                    expected: arch.n_hidden_units(),
                    actual: m.len(),
                });
            }
        }
        let n_points = points.len() / n0;
        let c = order.channels(n_deriv);
        let rows = n_points * c;
        let slots = arch.slots();

        let mut z0 = Array2::<f64>::zeros((rows, n0));
        {
            let z = z0.as_slice_mut().expect("contiguous");
            for p in 0..n_points {
                z[p * c * n0..p * c * n0 + n0].copy_from_slice(&points[p * n0..(p + 1) * n0]);
                if order != DerivOrder::Value {
                    for i in 0..n_deriv {
                        z[(p * c + 1 + i) * n0 + i] = 1.0;
                    }
                }
            }
        }

        let mut inputs = Vec::with_capacity(slots.len());
        let mut pre = Vec::with_capacity(slots.len() - 1);
        let mut act = Vec::with_capacity(slots.len() - 1);
        inputs.push(z0);
        let mut mask_offset = 0;
        for slot in &slots[..slots.len() - 1] {
            let w = weight_view(theta, slot);
            let bias = &theta[slot.bias_offset..slot.bias_offset + slot.n_out];
            let mut a = Array2::<f64>::zeros((rows, slot.n_out));
            general_mat_mul(1.0, inputs.last().expect("input"), &w.t(), 0.0, &mut a);
            let width = slot.n_out;
            {
                let av = a.as_slice_mut().expect("contiguous");
                for p in 0..n_points {
                    let row = &mut av[p * c * width..p * c * width + width];
                    for (v, b) in row.iter_mut().zip(bias) {
                        *v += b;
                    }
                }
            }
            let mut h = Array2::<f64>::zeros((rows, width));
            let mut t = vec![0.0; n_points * width];
            activate(
                a.as_slice().expect("contiguous"),
                h.as_slice_mut().expect("contiguous"),
                &mut t,
                n_points,
                n_deriv,
                order,
                width,
            );
            if let Some(m) = mask {
                let scales = &m[mask_offset..mask_offset + width];
                for mut row in h.rows_mut() {
                    for (v, s) in row.iter_mut().zip(scales) {
                        *v *= s;
                    }
                }
            }
            mask_offset += width;
            pre.push(a);
            act.push(t);
            inputs.push(h);
        }

        let last = slots.last().expect("output layer");
        let w_out = &theta[last.weight_offset..last.bias_offset];
        let b_out = theta[last.bias_offset];
        let z_last = inputs.last().expect("input").as_slice().expect("contiguous");
        let n_last = last.n_in;
        let mut out = JetBatch::zeros(n_points, n_deriv, order);
        for p in 0..n_points {
            let row = |k: usize| dot(&z_last[(p * c + k) * n_last..(p * c + k + 1) * n_last], w_out);
            out.value[p] = row(0) + b_out;
            if order != DerivOrder::Value {
                for i in 0..n_deriv {
                    out.grad[p * n_deriv + i] = row(1 + i);
                }
            }
            if order == DerivOrder::Second {
                for i in 0..n_deriv {
                    out.hess_diag[p * n_deriv + i] = row(1 + n_deriv + i);
                }
            }
        }

        Ok(Self {
            arch,
            theta,
            mask,
            slots,
            n_points,
            n_deriv,
            order,
            inputs,
            pre,
            act,
            out,
        })
    }

    pub fn output(&self) -> &JetBatch {
        &self.out
    }

    pub fn into_output(self) -> JetBatch {
        self.out
    }

    pub fn arch(&self) -> &MlpArchitecture {
        self.arch
    }

    /// Reverse pass.
    ///
    /// `adjoint` holds the derivative of a scalar objective with respect to
    /// every entry of [`output`](Self::output). The parameter gradient is
    /// accumulated into `grad[..n_params]`; when `input_grad` is given, the
    /// gradient with respect to the evaluation points is accumulated into it
    /// (layout as the `points` argument of [`record`](Self::record)).
    pub fn backward(&self, adjoint: &JetBatch, grad: &mut [f64], input_grad: Option<&mut [f64]>) {
        assert_eq!(adjoint.n_points, self.n_points, "adjoint batch size");
        assert_eq!(adjoint.order, self.order, "adjoint derivative order");
        let c = self.order.channels(self.n_deriv);
        let nd = self.n_deriv;
        let rows = self.n_points * c;
        let last = *self.slots.last().expect("output layer");

        // Seed on the output rows.
        let mut ubar = vec![0.0; rows];
        for p in 0..self.n_points {
            ubar[p * c] = adjoint.value[p];
            if self.order != DerivOrder::Value {
                ubar[p * c + 1..p * c + 1 + nd].copy_from_slice(adjoint.grad(p));
            }
            if self.order == DerivOrder::Second {
                ubar[p * c + 1 + nd..p * c + 1 + 2 * nd].copy_from_slice(adjoint.hess_diag(p));
            }
        }

        let w_out = &self.theta[last.weight_offset..last.bias_offset];
        let z_last = self.inputs[self.slots.len() - 1]
            .as_slice()
            .expect("contiguous");
        let n_last = last.n_in;
        {
            let gw = &mut grad[last.weight_offset..last.bias_offset];
            for (r, &u) in ubar.iter().enumerate() {
                if u != 0.0 {
                    axpy(u, &z_last[r * n_last..(r + 1) * n_last], gw);
                }
            }
            grad[last.bias_offset] += adjoint.value.iter().sum::<f64>();
        }
        let mut zbar = Array2::<f64>::zeros((rows, n_last));
        {
            let zb = zbar.as_slice_mut().expect("contiguous");
            for (r, &u) in ubar.iter().enumerate() {
                if u != 0.0 {
                    axpy(u, w_out, &mut zb[r * n_last..(r + 1) * n_last]);
                }
            }
        }

        let need_input = input_grad.is_some();
        let mut mask_end = self.arch.n_hidden_units();
        for l in (0..self.slots.len() - 1).rev() {
            let slot = self.slots[l];
            let width = slot.n_out;
            if let Some(m) = self.mask {
                let scales = &m[mask_end - width..mask_end];
                for mut row in zbar.rows_mut() {
                    for (v, s) in row.iter_mut().zip(scales) {
                        *v *= s;
                    }
                }
            }
            mask_end -= width;

            let mut abar = Array2::<f64>::zeros((rows, width));
            activate_adjoint(
                self.pre[l].as_slice().expect("contiguous"),
                &self.act[l],
                zbar.as_slice().expect("contiguous"),
                abar.as_slice_mut().expect("contiguous"),
                self.n_points,
                nd,
                self.order,
                width,
            );

            {
                let (wpart, rest) = grad[slot.weight_offset..].split_at_mut(slot.n_in * slot.n_out);
                let mut gw = ArrayViewMut2::from_shape((slot.n_out, slot.n_in), wpart)
                    .expect("weight gradient shape");
                general_mat_mul(1.0, &abar.t(), &self.inputs[l], 1.0, &mut gw);
                let gb = &mut rest[..slot.n_out];
                let ab = abar.as_slice().expect("contiguous");
                for p in 0..self.n_points {
                    let row = &ab[p * c * width..p * c * width + width];
                    for (g, a) in gb.iter_mut().zip(row) {
                        *g += a;
                    }
                }
            }

            if l > 0 || need_input {
                let w = weight_view(self.theta, &slot);
                let mut next = Array2::<f64>::zeros((rows, slot.n_in));
                general_mat_mul(1.0, &abar, &w, 0.0, &mut next);
                zbar = next;
            }
        }

        if let Some(ig) = input_grad {
            let n0 = self.arch.input_dim();
            let zb = zbar.as_slice().expect("contiguous");
            for p in 0..self.n_points {
                let src = &zb[p * c * n0..p * c * n0 + n0];
                for (g, s) in ig[p * n0..(p + 1) * n0].iter_mut().zip(src) {
                    *g += s;
                }
            }
        }
    }
}

fn weight_view<'t>(theta: &'t [f64], slot: &LayerSlot) -> ArrayView2<'t, f64> {
    ArrayView2::from_shape(
        (slot.n_out, slot.n_in),
        &theta[slot.weight_offset..slot.bias_offset],
    )
    .expect("weight shape")
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `tanh` from a branch-free `exp(-2|x|)`, so the activation loops
/// vectorize. Absolute error stays below 1e-15; NaN propagates.
#[inline]
pub(crate) fn fast_tanh(x: f64) -> f64 {
    let ax = x.abs();
    // tanh(20) is 1 to double precision; NaN fails the comparison and flows on.
    let ax = if ax > 20.0 { 20.0 } else { ax };
    let e = exp_nonpositive(-2.0 * ax);
    ((1.0 - e) / (1.0 + e)).copysign(x)
}

/// `exp(y)` for `y` in `[-40, 0]`: round-to-nearest range reduction by ln 2
/// and a degree-13 Taylor polynomial on `|r| <= ln2 / 2`.
#[inline]
fn exp_nonpositive(y: f64) -> f64 {
    const SHIFT: f64 = 6_755_399_441_055_744.0; // 1.5 * 2^52
    const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    let t = y * std::f64::consts::LOG2_E + SHIFT;
    let k = t - SHIFT;
    let r = (y - k * LN2_HI) - k * LN2_LO;
    let p = 1.0 / 6_227_020_800.0;
    let p = p * r + 1.0 / 479_001_600.0;
    let p = p * r + 1.0 / 39_916_800.0;
    let p = p * r + 1.0 / 3_628_800.0;
    let p = p * r + 1.0 / 362_880.0;
    let p = p * r + 1.0 / 40_320.0;
    let p = p * r + 1.0 / 5_040.0;
    let p = p * r + 1.0 / 720.0;
    let p = p * r + 1.0 / 120.0;
    let p = p * r + 1.0 / 24.0;
    let p = p * r + 1.0 / 6.0;
    let p = p * r + 0.5;
    let p = p * r + 1.0;
    let p = p * r + 1.0;
    // The low bits of `t` hold k; shifting them into the exponent field gives 2^k.
    let scale = f64::from_bits(t.to_bits().wrapping_add(1023) << 52);
    p * scale
}

/// tanh and its chain rule on the derivative rows of every point block.
fn activate(
    a: &[f64],
    h: &mut [f64],
    tanh_out: &mut [f64],
    n_points: usize,
    nd: usize,
    order: DerivOrder,
    width: usize,
) {
    let c = order.channels(nd);
    let mut d1 = vec![0.0; width];
    let mut d2 = vec![0.0; width];
    for p in 0..n_points {
        let base = p * c * width;
        for j in 0..width {
            let t = fast_tanh(a[base + j]);
            h[base + j] = t;
            tanh_out[p * width + j] = t;
            d1[j] = 1.0 - t * t;
            d2[j] = -2.0 * t * d1[j];
        }
        if order == DerivOrder::Value {
            continue;
        }
        for i in 0..nd {
            let r1 = base + (1 + i) * width;
            for j in 0..width {
                h[r1 + j] = d1[j] * a[r1 + j];
            }
            if order == DerivOrder::Second {
                let r2 = base + (1 + nd + i) * width;
                for j in 0..width {
                    let ap = a[r1 + j];
                    h[r2 + j] = d2[j] * ap * ap + d1[j] * a[r2 + j];
                }
            }
        }
    }
}

/// Pulls adjoints of the activation rows back to the pre-activation rows.
fn activate_adjoint(
    a: &[f64],
    tanh_a: &[f64],
    hbar: &[f64],
    abar: &mut [f64],
    n_points: usize,
    nd: usize,
    order: DerivOrder,
    width: usize,
) {
    let c = order.channels(nd);
    let mut d1 = vec![0.0; width];
    let mut d2 = vec![0.0; width];
    let mut d3 = vec![0.0; width];
    for p in 0..n_points {
        let base = p * c * width;
        for j in 0..width {
            let t = tanh_a[p * width + j];
            d1[j] = 1.0 - t * t;
            d2[j] = -2.0 * t * d1[j];
            d3[j] = (6.0 * t * t - 2.0) * d1[j];
            abar[base + j] = hbar[base + j] * d1[j];
        }
        if order == DerivOrder::Value {
            continue;
        }
        for i in 0..nd {
            let r1 = base + (1 + i) * width;
            match order {
                DerivOrder::First => {
                    for j in 0..width {
                        abar[base + j] += hbar[r1 + j] * d2[j] * a[r1 + j];
                        abar[r1 + j] = hbar[r1 + j] * d1[j];
                    }
                }
                DerivOrder::Second => {
                    let r2 = base + (1 + nd + i) * width;
                    for j in 0..width {
                        let ap = a[r1 + j];
                        let app = a[r2 + j];
                        let h1 = hbar[r1 + j];
                        let h2 = hbar[r2 + j];
                        abar[base + j] += h1 * d2[j] * ap + h2 * (d3[j] * ap * ap + d2[j] * app);
                        abar[r1 + j] = h1 * d1[j] + 2.0 * h2 * d2[j] * ap;
                        abar[r2 + j] = h2 * d1[j];
                    }
                }
                DerivOrder::Value => unreachable!(),
            }
        }
    }
}
