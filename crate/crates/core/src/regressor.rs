//! Multi-head max regression: per-point features to scene coordinates and
//! a reliability score, with a hand-written backward pass for toy training.
//!
//! Each block computes `z = W·f + b` with `W` of shape `(k·N) × N`, splits
//! `z` into `k` contiguous heads of width `N`, takes the elementwise max
//! across heads, then layer-normalizes and applies a leaky rectifier. A
//! final affine map produces four raw outputs; the first three are scaled
//! and offset into world meters, the fourth is the reliability `u`.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::archive::{Tensor, TensorArchive};
use crate::encoder::PointFeatures;
use crate::error::{Error, Result};

pub const NORM_EPS: f64 = 1e-5;
pub const DEFAULT_LEAK: f64 = 0.01;
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct MhmLayer {
    pub heads: usize,
    pub width: usize,
    /// Row-major `(heads·width) × width`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl MhmLayer {
    pub fn zeros(heads: usize, width: usize) -> Self {
        Self {
            heads,
            width,
            weights: vec![0.0; heads * width * width],
            bias: vec![0.0; heads * width],
        }
    }

    pub fn random(heads: usize, width: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (width as f64).sqrt();
        let mut layer = Self::zeros(heads, width);
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..bound) as f32 as f64;
        }
        for b in &mut layer.bias {
            *b = rng.random_range(-bound..bound) as f32 as f64;
        }
        layer
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.width == 0 {
            return Err(Error::ShapeMismatch("heads and width must be positive".into()));
        }
        if self.weights.len() != self.heads * self.width * self.width || self.bias.len() != self.heads * self.width {
            return Err(Error::ShapeMismatch(format!(
                "multi-head layer with {} heads of width {} has {} weights and {} biases",
                self.heads,
                self.width,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite multi-head parameters".into()));
        }
        Ok(())
    }

    /// Head-max output and, per output channel, the winning head.
    fn forward_traced(&self, f: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let n = self.width;
        let mut out = vec![f64::NEG_INFINITY; n];
        let mut winner = vec![0usize; n];
        for h in 0..self.heads {
            for j in 0..n {
                let row = h * n + j;
                let w = &self.weights[row * n..(row + 1) * n];
                let z = self.bias[row] + w.iter().zip(f).map(|(a, b)| a * b).sum::<f64>();
                if z > out[j] {
                    out[j] = z;
                    winner[j] = h;
                }
            }
        }
        (out, winner)
    }
}

/// Elementwise max over the `k` heads of `W·f + b`; ties go to the lowest head.
pub fn mhm_forward(f: &[f64], layer: &MhmLayer) -> Result<Vec<f64>> {
    layer.validate()?;
    if f.len() != layer.width {
        return Err(Error::WidthMismatch {
            expected: layer.width,
            found: f.len(),
        });
    }
    Ok(layer.forward_traced(f).0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorBlock {
    pub mhm: MhmLayer,
    pub norm_gain: Vec<f64>,
    pub norm_bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorWeights {
    pub blocks: Vec<RegressorBlock>,
    /// Row-major `4 × width`.
    pub out_weights: Vec<f64>,
    pub out_bias: Vec<f64>,
    pub leak: f64,
    /// Fixed, untrained map from raw outputs to world meters.
    pub coord_offset: Vector3<f64>,
    pub coord_scale: f64,
    /// Fixed input standardization `x = (f − shift) · gain`, per feature.
    pub input_shift: Vec<f64>,
    pub input_gain: Vec<f64>,
}

impl RegressorWeights {
    pub fn zeros(layers: usize, heads: usize, width: usize) -> Self {
        let blocks = (0..layers)
            .map(|_| RegressorBlock {
                mhm: MhmLayer::zeros(heads, width),
                norm_gain: vec![1.0; width],
                norm_bias: vec![0.0; width],
            })
            .collect();
        Self {
            blocks,
            out_weights: vec![0.0; 4 * width],
            out_bias: vec![0.0; 4],
            leak: DEFAULT_LEAK,
            coord_offset: Vector3::zeros(),
            coord_scale: 1.0,
            input_shift: vec![0.0; width],
            input_gain: vec![1.0; width],
        }
    }

    pub fn random(layers: usize, heads: usize, width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = Self::zeros(layers, heads, width);
        for block in &mut w.blocks {
            block.mhm = MhmLayer::random(heads, width, &mut rng);
        }
        let bound = 1.0 / (width as f64).sqrt();
        for v in &mut w.out_weights {
            *v = rng.random_range(-bound..bound) as f32 as f64;
        }
        w
    }

    pub fn with_output_map(mut self, offset: Vector3<f64>, scale: f64) -> Self {
        self.coord_offset = offset;
        self.coord_scale = scale;
        self
    }

    /// Standardizes each input feature to zero mean and unit variance over
    /// the given rows; constant features keep gain 1.
    pub fn with_input_standardization(mut self, features: &[&PointFeatures]) -> Self {
        let n = self.width();
        let rows: usize = features.iter().map(|f| f.len()).sum();
        if rows == 0 {
            return self;
        }
        let mut mean = vec![0.0; n];
        for f in features {
            for i in 0..f.len() {
                for (m, v) in mean.iter_mut().zip(f.row(i)) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; n];
        for f in features {
            for i in 0..f.len() {
                for ((s, v), m) in var.iter_mut().zip(f.row(i)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        self.input_gain = var
            .iter()
            .map(|s| {
                let sd = (s / rows as f64).sqrt();
                if sd > 1e-12 { 1.0 / sd } else { 1.0 }
            })
            .collect();
        self.input_shift = mean;
        self
    }

    pub fn width(&self) -> usize {
        self.out_weights.len() / 4
    }

    pub fn heads(&self) -> usize {
        self.blocks.first().map_or(1, |b| b.mhm.heads)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.width();
        if n == 0 || self.out_weights.len() != 4 * n || self.out_bias.len() != 4 {
            return Err(Error::ShapeMismatch("output layer must map width to 4".into()));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.mhm.validate()?;
            if b.mhm.width != n || b.norm_gain.len() != n || b.norm_bias.len() != n {
                return Err(Error::ShapeMismatch(format!("block {i} width differs from {n}")));
            }
        }
        if self.input_shift.len() != n || self.input_gain.len() != n {
            return Err(Error::ShapeMismatch(format!("input standardization width differs from {n}")));
        }
        let fixed_finite = self.input_shift.iter().chain(&self.input_gain).all(|v| v.is_finite());
        let finite =
            self.params().iter().all(|p| p.iter().all(|v| v.is_finite())) && self.coord_scale.is_finite() && self.leak.is_finite();
        if !finite || !fixed_finite || self.coord_offset.iter().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite regressor parameters".into()));
        }
        Ok(())
    }

    /// Trainable parameter slices in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for b in &self.blocks {
            out.extend([&b.mhm.weights[..], &b.mhm.bias[..], &b.norm_gain[..], &b.norm_bias[..]]);
        }
        out.extend([&self.out_weights[..], &self.out_bias[..]]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for b in &mut self.blocks {
            out.push(&mut b.mhm.weights);
            out.push(&mut b.mhm.bias);
            out.push(&mut b.norm_gain);
            out.push(&mut b.norm_bias);
        }
        out.push(&mut self.out_weights);
        out.push(&mut self.out_bias);
        out
    }

    /// Same shapes with every trainable parameter zero.
    pub fn zeros_like(&self) -> Self {
        let mut g = self.clone();
        for p in g.params_mut() {
            p.fill(0.0);
        }
        g
    }

    fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.params_mut().into_iter().zip(other.params()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    /// `self ← self − lr · grad`.
    pub fn descend(&mut self, grad: &Self, lr: f64) {
        for (a, b) in self.params_mut().into_iter().zip(grad.params()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x -= lr * y;
            }
        }
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new("regressor");
        let n = self.width();
        let k = self.heads();
        let o = self.coord_offset;
        a.config.extend([
            ("layers".into(), self.blocks.len().to_string()),
            ("heads".into(), k.to_string()),
            ("width".into(), n.to_string()),
            ("leak".into(), self.leak.to_string()),
            ("coord_offset".into(), format!("{},{},{}", o.x, o.y, o.z)),
            ("coord_scale".into(), self.coord_scale.to_string()),
        ]);
        for (i, b) in self.blocks.iter().enumerate() {
            a.tensors.extend([
                Tensor::new(format!("block{i}.weight"), vec![k * n, n], b.mhm.weights.clone()),
                Tensor::new(format!("block{i}.bias"), vec![k * n], b.mhm.bias.clone()),
                Tensor::new(format!("block{i}.norm_gain"), vec![n], b.norm_gain.clone()),
                Tensor::new(format!("block{i}.norm_bias"), vec![n], b.norm_bias.clone()),
            ]);
        }
        a.tensors.push(Tensor::new("out.weight", vec![4, n], self.out_weights.clone()));
        a.tensors.push(Tensor::new("out.bias", vec![4], self.out_bias.clone()));
        a.tensors.push(Tensor::new("input.shift", vec![n], self.input_shift.clone()));
        a.tensors.push(Tensor::new("input.gain", vec![n], self.input_gain.clone()));
        a
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        if a.kind != "regressor" {
            return Err(Error::ShapeMismatch(format!("expected regressor weights, found `{}`", a.kind)));
        }
        let get = |k: &str| {
            a.config_value(k)
                .ok_or_else(|| Error::ShapeMismatch(format!("missing config `{k}`")))
        };
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse::<f64>()
                .map_err(|e| Error::ShapeMismatch(format!("config `{k}`: {e}")))
        };
        let count = |k: &str| -> Result<usize> { Ok(num(k)? as usize) };
        let (layers, heads, width) = (count("layers")?, count("heads")?, count("width")?);
        let offset: Vec<f64> = get("coord_offset")?
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|e| Error::ShapeMismatch(e.to_string())))
            .collect::<Result<_>>()?;
        if offset.len() != 3 {
            return Err(Error::ShapeMismatch("coord_offset needs three values".into()));
        }
        let mut w = Self::zeros(layers, heads, width)
            .with_output_map(Vector3::new(offset[0], offset[1], offset[2]), num("coord_scale")?);
        w.leak = num("leak")?;
        let take = |name: String, shape: Vec<usize>| -> Result<Vec<f64>> {
            let t = a.tensor(&name)?;
            if t.shape != shape {
                return Err(Error::ShapeMismatch(format!("tensor `{name}` has shape {:?}", t.shape)));
            }
            Ok(t.data.clone())
        };
        for (i, b) in w.blocks.iter_mut().enumerate() {
            b.mhm.weights = take(format!("block{i}.weight"), vec![heads * width, width])?;
            b.mhm.bias = take(format!("block{i}.bias"), vec![heads * width])?;
            b.norm_gain = take(format!("block{i}.norm_gain"), vec![width])?;
            b.norm_bias = take(format!("block{i}.norm_bias"), vec![width])?;
        }
        w.out_weights = take("out.weight".into(), vec![4, width])?;
        w.out_bias = take("out.bias".into(), vec![4])?;
        w.input_shift = take("input.shift".into(), vec![width])?;
        w.input_gain = take("input.gain".into(), vec![width])?;
        w.validate()?;
        Ok(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub coords: Vec<Vector3<f64>>,
    pub reliability: Vec<f64>,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> PredictionSet {
        PredictionSet {
            coords: indices.iter().map(|&i| self.coords[i]).collect(),
            reliability: indices.iter().map(|&i| self.reliability[i]).collect(),
        }
    }
}

struct BlockTrace {
    input: Vec<f64>,
    winner: Vec<usize>,
    normalized: Vec<f64>,
    inv_std: f64,
    pre_act: Vec<f64>,
}

struct PointTrace {
    blocks: Vec<BlockTrace>,
    last: Vec<f64>,
    raw: [f64; 4],
}

fn forward_point(w: &RegressorWeights, f: &[f64]) -> PointTrace {
    let n = w.width() as f64;
    let mut x: Vec<f64> = f
        .iter()
        .zip(w.input_shift.iter().zip(&w.input_gain))
        .map(|(v, (s, g))| (v - s) * g)
        .collect();
    let mut blocks = Vec::with_capacity(w.blocks.len());
    for b in &w.blocks {
        let (m, winner) = b.mhm.forward_traced(&x);
        let mean = m.iter().sum::<f64>() / n;
        let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let inv_std = 1.0 / (var + NORM_EPS).sqrt();
        let normalized: Vec<f64> = m.iter().map(|v| (v - mean) * inv_std).collect();
        let pre_act: Vec<f64> = normalized
            .iter()
            .zip(b.norm_gain.iter().zip(&b.norm_bias))
            .map(|(xh, (g, beta))| g * xh + beta)
            .collect();
        let out = pre_act.iter().map(|&y| if y > 0.0 { y } else { w.leak * y }).collect();
        blocks.push(BlockTrace {
            input: std::mem::replace(&mut x, out),
            winner,
            normalized,
            inv_std,
            pre_act,
        });
    }
    let width = w.width();
    let mut raw = [0.0; 4];
    for (o, r) in raw.iter_mut().enumerate() {
        let row = &w.out_weights[o * width..(o + 1) * width];
        *r = w.out_bias[o] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
    }
    PointTrace { blocks, last: x, raw }
}

/// Accumulates parameter gradients into `g` and returns the input gradient.
fn backward_point(w: &RegressorWeights, t: &PointTrace, d_raw: [f64; 4], g: &mut RegressorWeights) -> Vec<f64> {
    let n = w.width();
    let mut dx = vec![0.0; n];
    for o in 0..4 {
        g.out_bias[o] += d_raw[o];
        let row = o * n;
        for j in 0..n {
            g.out_weights[row + j] += d_raw[o] * t.last[j];
            dx[j] += d_raw[o] * w.out_weights[row + j];
        }
    }
    for (bi, (b, tr)) in w.blocks.iter().zip(&t.blocks).enumerate().rev() {
        let gb = &mut g.blocks[bi];
        let dy: Vec<f64> = dx
            .iter()
            .zip(&tr.pre_act)
            .map(|(d, &y)| if y > 0.0 { *d } else { d * w.leak })
            .collect();
        let mut dxhat = vec![0.0; n];
        for j in 0..n {
            gb.norm_gain[j] += dy[j] * tr.normalized[j];
            gb.norm_bias[j] += dy[j];
            dxhat[j] = dy[j] * b.norm_gain[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / n as f64;
        let mean_dx = dxhat.iter().zip(&tr.normalized).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        let mut d_in = vec![0.0; n];
        for j in 0..n {
            let dm = tr.inv_std * (dxhat[j] - mean_d - tr.normalized[j] * mean_dx);
            let row = tr.winner[j] * n + j;
            gb.mhm.bias[row] += dm;
            let wrow = &b.mhm.weights[row * n..(row + 1) * n];
            let grow = &mut gb.mhm.weights[row * n..(row + 1) * n];
            for c in 0..n {
                grow[c] += dm * tr.input[c];
                d_in[c] += dm * wrow[c];
            }
        }
        dx = d_in;
    }
    dx.iter_mut().zip(&w.input_gain).for_each(|(d, g)| *d *= g);
    dx
}

fn check_features(features: &PointFeatures, w: &RegressorWeights) -> Result<()> {
    w.validate()?;
    if features.width != w.width() {
        return Err(Error::WidthMismatch {
            expected: w.width(),
            found: features.width,
        });
    }
    Ok(())
}

pub fn regress(features: &PointFeatures, w: &RegressorWeights) -> Result<PredictionSet> {
    check_features(features, w)?;
    let raws: Vec<[f64; 4]> = (0..features.len())
        .into_par_iter()
        .map(|i| forward_point(w, features.row(i)).raw)
        .collect();
    Ok(PredictionSet {
        coords: raws
            .iter()
            .map(|r| w.coord_offset + Vector3::new(r[0], r[1], r[2]) * w.coord_scale)
            .collect(),
        reliability: raws.iter().map(|r| r[3]).collect(),
    })
}

/// Gradients on every trainable parameter (summed over points) and on each
/// input feature, given upstream gradients on the coordinates and `u`.
pub fn regress_backward(
    features: &PointFeatures,
    w: &RegressorWeights,
    d_coords: &[Vector3<f64>],
    d_reliability: &[f64],
) -> Result<(RegressorWeights, PointFeatures)> {
    check_features(features, w)?;
    let n = features.len();
    if d_coords.len() != n || d_reliability.len() != n {
        return Err(Error::LengthMismatch {
            left: n,
            right: d_coords.len().min(d_reliability.len()),
        });
    }
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let partials: Vec<(RegressorWeights, Vec<f64>)> = starts
        .par_iter()
        .map(|&s| {
            let mut g = w.zeros_like();
            let mut dx = Vec::with_capacity(CHUNK * features.width);
            for i in s..(s + CHUNK).min(n) {
                let trace = forward_point(w, features.row(i));
                let dc = d_coords[i] * w.coord_scale;
                dx.extend(backward_point(w, &trace, [dc.x, dc.y, dc.z, d_reliability[i]], &mut g));
            }
            (g, dx)
        })
        .collect();
    let mut grad = w.zeros_like();
    let mut data = Vec::with_capacity(features.data.len());
    for (g, dx) in &partials {
        grad.add_assign(g);
        data.extend_from_slice(dx);
    }
    Ok((grad, PointFeatures { width: features.width, data }))
}
