//! Cyclic sparse convolution and the hierarchical geometric encoder.
//!
//! Features live on occupied voxels only. Every convolution looks up
//! circumferential neighbors through a cyclically padded index, so a voxel
//! at `ix = 0` sees its neighbors at `ix = L_x − 1` and output sites never
//! leave `[0, L_x)`.
//!
//! Topology (widths `c1..c5`, fused width `F`):
//!
//! ```text
//! input (y, z, I) ─ residual FC → stem ─ FC → c1
//! stages 1–4:  [stride-2 conv ‖ 2× max-pool] → conv3 → conv3
//! stage 5:     conv3(d=2) → conv3(d=2) → conv3(d=2)
//! stage 6:     transposed conv2 → [· ‖ stage 4] → FC → F → conv3(d=2) → conv3(d=2)
//! ```
//!
//! Output lives at 1/16 resolution; [`Encoder::encode`] gathers it back to
//! the input voxels.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::archive::{Tensor, TensorArchive};
use crate::error::{Error, Result};
use crate::projection::{pad_shifts, VoxelCloud, VoxelKey};

/// Total downsampling factor of stages 1–4.
pub const DOWNSAMPLE_FACTOR: i64 = 16;

/// Sparse map from voxel keys to feature rows of a fixed width.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureGrid {
    keys: Vec<VoxelKey>,
    features: Vec<f64>,
    width: usize,
    ring: i64,
}

impl SparseFeatureGrid {
    pub fn new(keys: Vec<VoxelKey>, features: Vec<f64>, width: usize, ring: i64) -> Result<Self> {
        if features.len() != keys.len() * width {
            return Err(Error::ShapeMismatch(format!(
                "{} keys × width {width} needs {} values, got {}",
                keys.len(),
                keys.len() * width,
                features.len()
            )));
        }
        if let Some(k) = keys.iter().find(|k| !(0..ring).contains(&k[0])) {
            return Err(Error::ShapeMismatch(format!("ix {} outside [0, {ring})", k[0])));
        }
        if features.iter().any(|f| !f.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite feature".into()));
        }
        Ok(Self {
            keys,
            features,
            width,
            ring,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ring(&self) -> i64 {
        self.ring
    }

    pub fn keys(&self) -> &[VoxelKey] {
        &self.keys
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    pub fn index(&self) -> HashMap<VoxelKey, usize> {
        self.keys.iter().enumerate().map(|(i, k)| (*k, i)).collect()
    }

    pub fn get(&self, key: &VoxelKey) -> Option<&[f64]> {
        self.keys.iter().position(|k| k == key).map(|i| self.row(i))
    }

    /// Circumferential shift by `delta` cells (mod ring).
    pub fn shift_circumferential(&self, delta: i64) -> SparseFeatureGrid {
        let ring = self.ring;
        SparseFeatureGrid {
            keys: self
                .keys
                .iter()
                .map(|k| [(k[0] + delta).rem_euclid(ring), k[1], k[2]])
                .collect(),
            ..self.clone()
        }
    }

    fn map_features(&self, f: impl Fn(f64) -> f64 + Sync) -> SparseFeatureGrid {
        SparseFeatureGrid {
            features: self.features.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Row-wise concatenation of two grids over the same key sequence.
    pub fn concat(&self, other: &SparseFeatureGrid) -> Result<SparseFeatureGrid> {
        if self.keys != other.keys || self.ring != other.ring {
            return Err(Error::ShapeMismatch("concat needs identical sites".into()));
        }
        let width = self.width + other.width;
        let mut features = Vec::with_capacity(self.len() * width);
        for i in 0..self.len() {
            features.extend_from_slice(self.row(i));
            features.extend_from_slice(other.row(i));
        }
        Ok(SparseFeatureGrid {
            keys: self.keys.clone(),
            features,
            width,
            ring: self.ring,
        })
    }
}

/// Initial per-voxel features `(iy·δ, iz·δ, I)`. The circumferential
/// coordinate is left out so the features do not depend on yaw.
pub fn initial_features(v: &VoxelCloud) -> Result<SparseFeatureGrid> {
    if v.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let d = v.config.voxel_size;
    let keys: Vec<VoxelKey> = v.keys().collect();
    let features = v
        .voxels
        .iter()
        .flat_map(|vox| [vox.key[1] as f64 * d, vox.key[2] as f64 * d, vox.representative.intensity])
        .collect();
    SparseFeatureGrid::new(keys, features, 3, v.config.ring())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvKind {
    /// Stride 1; output sites equal input sites. `extent` is odd.
    Submanifold { extent: usize, dilation: usize },
    /// Stride 2, kernel 2: output ring is half the input ring.
    Downsample,
    /// Transposed kernel-2 stride-1 convolution: site `o` gathers from
    /// `o − k`, `k ∈ {0, 1}³`.
    Transposed,
}

impl ConvKind {
    /// Neighbor offsets in kernel-weight order.
    pub fn offsets(&self) -> Vec<[i64; 3]> {
        let axis: Vec<i64> = match *self {
            ConvKind::Submanifold { extent, dilation } => {
                let h = (extent as i64 - 1) / 2;
                (-h..=h).map(|o| o * dilation as i64).collect()
            }
            ConvKind::Downsample => vec![0, 1],
            ConvKind::Transposed => vec![0, -1],
        };
        let mut out = Vec::with_capacity(axis.len().pow(3));
        for &a in &axis {
            for &b in &axis {
                for &c in &axis {
                    out.push([a, b, c]);
                }
            }
        }
        out
    }

    pub fn volume(&self) -> usize {
        match *self {
            ConvKind::Submanifold { extent, .. } => extent.pow(3),
            ConvKind::Downsample | ConvKind::Transposed => 8,
        }
    }

    /// Largest circumferential reach of the kernel, in cells.
    pub fn half_extent(&self) -> i64 {
        match *self {
            ConvKind::Submanifold { extent, dilation } => dilation as i64 * (extent as i64 - 1) / 2,
            ConvKind::Downsample => 0,
            ConvKind::Transposed => 1,
        }
    }

    fn tag(&self) -> String {
        match *self {
            ConvKind::Submanifold { extent, dilation } => format!("sub{extent}d{dilation}"),
            ConvKind::Downsample => "down2".into(),
            ConvKind::Transposed => "up2".into(),
        }
    }

    fn from_tag(tag: &str) -> Option<ConvKind> {
        match tag {
            "down2" => Some(ConvKind::Downsample),
            "up2" => Some(ConvKind::Transposed),
            _ => {
                let rest = tag.strip_prefix("sub")?;
                let (e, d) = rest.split_once('d')?;
                Some(ConvKind::Submanifold {
                    extent: e.parse().ok()?,
                    dilation: d.parse().ok()?,
                })
            }
        }
    }
}

/// One sparse convolution layer. Weights are laid out `[offset][in][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvSpec {
    pub kind: ConvKind,
    pub in_width: usize,
    pub out_width: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvSpec {
    pub fn zeros(kind: ConvKind, in_width: usize, out_width: usize) -> Self {
        Self {
            kind,
            in_width,
            out_width,
            weights: vec![0.0; kind.volume() * in_width * out_width],
            bias: vec![0.0; out_width],
        }
    }

    /// Uniform in `±1/√fan_in`, values representable as `f32`.
    pub fn random(kind: ConvKind, in_width: usize, out_width: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = (kind.volume() * in_width) as f32;
        let bound = 1.0 / fan_in.sqrt();
        let mut spec = Self::zeros(kind, in_width, out_width);
        for w in spec.weights.iter_mut().chain(spec.bias.iter_mut()) {
            *w = rng.random_range(-bound..bound) as f64;
        }
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if let ConvKind::Submanifold { extent, dilation } = self.kind {
            if extent % 2 == 0 || !(1..=2).contains(&dilation) {
                return Err(Error::ShapeMismatch(format!(
                    "submanifold kernel needs odd extent and dilation in {{1, 2}}, got {extent}/{dilation}"
                )));
            }
        }
        let expected = self.kind.volume() * self.in_width * self.out_width;
        if self.weights.len() != expected || self.bias.len() != self.out_width {
            return Err(Error::ShapeMismatch(format!(
                "conv weights {} (expected {expected}), bias {} (expected {})",
                self.weights.len(),
                self.bias.len(),
                self.out_width
            )));
        }
        Ok(())
    }

    #[inline]
    fn accumulate(&self, k: usize, input: &[f64], acc: &mut [f64]) {
        let base = k * self.in_width * self.out_width;
        for (c, &f) in input.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let w = &self.weights[base + c * self.out_width..base + (c + 1) * self.out_width];
            for (a, &wv) in acc.iter_mut().zip(w) {
                *a += f * wv;
            }
        }
    }
}

/// Index over the grid plus its cyclic copies: keys with `ix < w` appear
/// again at `ix + L_x`, keys with `ix > L_x − w` at `ix − L_x`.
fn padded_index(g: &SparseFeatureGrid, w: i64) -> HashMap<VoxelKey, usize> {
    let mut index = g.index();
    for (i, k) in g.keys.iter().enumerate() {
        for shift in pad_shifts(k[0], w, g.ring) {
            index.insert([k[0] + shift, k[1], k[2]], i);
        }
    }
    index
}

/// Sparse convolution with circumferential wrap-around. Linear: the
/// nonlinearity is applied by the caller.
pub fn cyclic_conv(g: &SparseFeatureGrid, spec: &ConvSpec) -> Result<SparseFeatureGrid> {
    if g.width != spec.in_width {
        return Err(Error::WidthMismatch {
            expected: spec.in_width,
            found: g.width,
        });
    }
    spec.validate()?;
    if g.is_empty() {
        return Err(Error::EmptyGrid);
    }
    match spec.kind {
        ConvKind::Downsample => downsample_conv(g, spec),
        _ => stride_one_conv(g, spec),
    }
}

fn stride_one_conv(g: &SparseFeatureGrid, spec: &ConvSpec) -> Result<SparseFeatureGrid> {
    let reach = spec.kind.half_extent();
    // The strict `ix > L_x − w` pad rule copies one cell fewer on the high
    // side, so pad with w = reach + 1 to cover offsets down to −reach.
    let w = reach + 1;
    if reach > 0 && 2 * w >= g.ring {
        return Err(Error::InvalidConfig(format!(
            "ring of {} cells is too small for a kernel reaching {reach} cells",
            g.ring
        )));
    }
    let index = padded_index(g, w);
    let offsets = spec.kind.offsets();
    let out_w = spec.out_width;
    let mut features = vec![0.0; g.len() * out_w];
    features
        .par_chunks_mut(out_w)
        .zip(g.keys.par_iter())
        .for_each(|(acc, key)| {
            acc.copy_from_slice(&spec.bias);
            for (k, off) in offsets.iter().enumerate() {
                let nb = [key[0] + off[0], key[1] + off[1], key[2] + off[2]];
                if let Some(&row) = index.get(&nb) {
                    spec.accumulate(k, g.row(row), acc);
                }
            }
        });
    Ok(SparseFeatureGrid {
        keys: g.keys.clone(),
        features,
        width: out_w,
        ring: g.ring,
    })
}

/// Coarse key of `key` one level down.
pub fn parent_key(key: &VoxelKey) -> VoxelKey {
    [key[0].div_euclid(2), key[1].div_euclid(2), key[2].div_euclid(2)]
}

/// Output sites of a stride-2 layer: every coarse cell with at least one
/// occupied child, in first-occurrence order.
fn coarse_sites(g: &SparseFeatureGrid) -> Result<Vec<VoxelKey>> {
    if g.ring % 2 != 0 {
        return Err(Error::InvalidConfig(format!("cannot halve a ring of {} cells", g.ring)));
    }
    let mut seen = std::collections::HashSet::new();
    Ok(g.keys
        .iter()
        .map(parent_key)
        .filter(|k| seen.insert(*k))
        .collect())
}

fn downsample_conv(g: &SparseFeatureGrid, spec: &ConvSpec) -> Result<SparseFeatureGrid> {
    let sites = coarse_sites(g)?;
    let index = g.index();
    let offsets = spec.kind.offsets();
    let out_w = spec.out_width;
    let mut features = vec![0.0; sites.len() * out_w];
    features
        .par_chunks_mut(out_w)
        .zip(sites.par_iter())
        .for_each(|(acc, site)| {
            acc.copy_from_slice(&spec.bias);
            for (k, off) in offsets.iter().enumerate() {
                let child = [2 * site[0] + off[0], 2 * site[1] + off[1], 2 * site[2] + off[2]];
                if let Some(&row) = index.get(&child) {
                    spec.accumulate(k, g.row(row), acc);
                }
            }
        });
    Ok(SparseFeatureGrid {
        keys: sites,
        features,
        width: out_w,
        ring: g.ring / 2,
    })
}

/// 2× max-pool over occupied children; absent children are skipped.
pub fn max_pool_down(g: &SparseFeatureGrid) -> Result<SparseFeatureGrid> {
    if g.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let sites = coarse_sites(g)?;
    let slot: HashMap<VoxelKey, usize> = sites.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let w = g.width;
    let mut features = vec![f64::NEG_INFINITY; sites.len() * w];
    for (i, key) in g.keys.iter().enumerate() {
        let s = slot[&parent_key(key)];
        for (acc, &v) in features[s * w..(s + 1) * w].iter_mut().zip(g.row(i)) {
            *acc = acc.max(v);
        }
    }
    Ok(SparseFeatureGrid {
        keys: sites,
        features,
        width: w,
        ring: g.ring / 2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Identity,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::LeakyRelu(0.01)
    }
}

impl Activation {
    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::LeakyRelu(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub stem_width: usize,
    pub widths: [usize; 5],
    pub fused_width: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl EncoderConfig {
    pub fn toy() -> Self {
        Self {
            stem_width: 4,
            widths: [4, 8, 16, 32, 48],
            fused_width: 64,
            activation: Activation::default(),
        }
    }

    pub fn full_scale() -> Self {
        Self {
            stem_width: 16,
            widths: [32, 64, 128, 256, 384],
            fused_width: 512,
            activation: Activation::default(),
        }
    }

    /// `(name, kind, in, out)` for every layer in evaluation order.
    pub fn layer_shapes(&self) -> Vec<(String, ConvKind, usize, usize)> {
        let fc = ConvKind::Submanifold { extent: 1, dilation: 1 };
        let k3 = ConvKind::Submanifold { extent: 3, dilation: 1 };
        let k3d2 = ConvKind::Submanifold { extent: 3, dilation: 2 };
        let c = self.widths;
        let mut layers = vec![
            ("stem.fc".to_string(), fc, 3, self.stem_width),
            ("stem.skip".to_string(), fc, 3, self.stem_width),
            ("stem.proj".to_string(), fc, self.stem_width, c[0]),
        ];
        let mut prev = c[0];
        for (s, &width) in c.iter().enumerate().take(4) {
            let n = s + 1;
            layers.push((format!("stage{n}.down"), ConvKind::Downsample, prev, width));
            layers.push((format!("stage{n}.conv1"), k3, width + prev, width));
            layers.push((format!("stage{n}.conv2"), k3, width, width));
            prev = width;
        }
        layers.push(("stage5.conv0".into(), k3d2, c[3], c[4]));
        layers.push(("stage5.conv1".into(), k3d2, c[4], c[4]));
        layers.push(("stage5.conv2".into(), k3d2, c[4], c[4]));
        layers.push(("stage6.up".into(), ConvKind::Transposed, c[4], c[3]));
        layers.push(("stage6.fuse".into(), fc, 2 * c[3], self.fused_width));
        layers.push(("stage6.conv1".into(), k3d2, self.fused_width, self.fused_width));
        layers.push(("stage6.conv2".into(), k3d2, self.fused_width, self.fused_width));
        layers
    }
}

/// Frozen encoder parameters following [`EncoderConfig::layer_shapes`].
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    pub config: EncoderConfig,
    pub layers: Vec<(String, ConvSpec)>,
}

impl EncoderWeights {
    pub fn random(config: EncoderConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(name, kind, i, o)| (name, ConvSpec::random(kind, i, o, &mut rng)))
            .collect();
        Self { config, layers }
    }

    pub fn zeros(config: EncoderConfig) -> Self {
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(name, kind, i, o)| (name, ConvSpec::zeros(kind, i, o)))
            .collect();
        Self { config, layers }
    }

    pub fn validate(&self) -> Result<()> {
        let shapes = self.config.layer_shapes();
        if shapes.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} layers, got {}",
                shapes.len(),
                self.layers.len()
            )));
        }
        for ((name, kind, i, o), (lname, spec)) in shapes.iter().zip(&self.layers) {
            if name != lname || *kind != spec.kind || *i != spec.in_width || *o != spec.out_width {
                return Err(Error::ShapeMismatch(format!("layer `{lname}` does not match `{name}`")));
            }
            spec.validate()?;
        }
        Ok(())
    }

    fn layer(&self, name: &str) -> &ConvSpec {
        &self
            .layers
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("validated weights lack layer {name}"))
            .1
    }

    pub fn to_archive(&self) -> TensorArchive {
        let mut a = TensorArchive::new("encoder");
        let c = &self.config;
        let widths: Vec<String> = c.widths.iter().map(usize::to_string).collect();
        a.config.push(("stem_width".into(), c.stem_width.to_string()));
        a.config.push(("widths".into(), widths.join(",")));
        a.config.push(("fused_width".into(), c.fused_width.to_string()));
        a.config.push(("activation".into(), activation_tag(&c.activation)));
        for (name, spec) in &self.layers {
            a.config.push((format!("layer.{name}"), spec.kind.tag()));
            let shape = vec![spec.kind.volume(), spec.in_width, spec.out_width];
            a.tensors.push(Tensor::new(format!("{name}.weight"), shape, spec.weights.clone()));
            a.tensors.push(Tensor::new(format!("{name}.bias"), vec![spec.out_width], spec.bias.clone()));
        }
        a
    }

    pub fn from_archive(a: &TensorArchive) -> Result<Self> {
        if a.kind != "encoder" {
            return Err(Error::ShapeMismatch(format!("expected encoder weights, found `{}`", a.kind)));
        }
        let get = |k: &str| {
            a.config_value(k)
                .ok_or_else(|| Error::ShapeMismatch(format!("missing config `{k}`")))
        };
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::ShapeMismatch(format!("bad width `{s}`: {e}")))
        };
        let widths: Vec<usize> = get("widths")?.split(',').map(parse_usize).collect::<Result<_>>()?;
        let widths: [usize; 5] = widths
            .try_into()
            .map_err(|_| Error::ShapeMismatch("need five stage widths".into()))?;
        let config = EncoderConfig {
            stem_width: parse_usize(get("stem_width")?)?,
            widths,
            fused_width: parse_usize(get("fused_width")?)?,
            activation: parse_activation(get("activation")?)?,
        };
        let mut layers = Vec::new();
        for (name, kind, i, o) in config.layer_shapes() {
            let stored = get(&format!("layer.{name}"))?;
            if ConvKind::from_tag(stored) != Some(kind) {
                return Err(Error::ShapeMismatch(format!("layer `{name}` has kind `{stored}`")));
            }
            let w = a.tensor(&format!("{name}.weight"))?;
            let b = a.tensor(&format!("{name}.bias"))?;
            if w.shape != [kind.volume(), i, o] || b.shape != [o] {
                return Err(Error::ShapeMismatch(format!("tensor shapes of `{name}`")));
            }
            layers.push((
                name,
                ConvSpec {
                    kind,
                    in_width: i,
                    out_width: o,
                    weights: w.data.clone(),
                    bias: b.data.clone(),
                },
            ));
        }
        let weights = Self { config, layers };
        weights.validate()?;
        Ok(weights)
    }
}

pub fn activation_tag(a: &Activation) -> String {
    match a {
        Activation::LeakyRelu(s) => format!("leaky_relu:{s}"),
        Activation::Identity => "identity".into(),
    }
}

pub fn parse_activation(s: &str) -> Result<Activation> {
    if s == "identity" {
        return Ok(Activation::Identity);
    }
    s.strip_prefix("leaky_relu:")
        .and_then(|v| v.parse::<f64>().ok())
        .map(Activation::LeakyRelu)
        .ok_or_else(|| Error::InvalidConfig(format!("unknown activation `{s}`")))
}

/// Per-voxel encoder output aligned with the input [`VoxelCloud`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatures {
    pub width: usize,
    pub data: Vec<f64>,
}

impl PointFeatures {
    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    weights: EncoderWeights,
}

impl Encoder {
    pub fn new(weights: EncoderWeights) -> Result<Self> {
        weights.validate()?;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &EncoderWeights {
        &self.weights
    }

    pub fn fused_width(&self) -> usize {
        self.weights.config.fused_width
    }

    fn act_conv(&self, g: &SparseFeatureGrid, name: &str) -> Result<SparseFeatureGrid> {
        let act = self.weights.config.activation;
        Ok(cyclic_conv(g, self.weights.layer(name))?.map_features(|v| act.apply(v)))
    }

    /// Runs the full topology on an initial grid; the result lives at 1/16
    /// resolution with the fused width.
    pub fn encode_grid(&self, input: &SparseFeatureGrid) -> Result<SparseFeatureGrid> {
        if input.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if input.width != 3 {
            return Err(Error::WidthMismatch {
                expected: 3,
                found: input.width,
            });
        }
        if input.ring % DOWNSAMPLE_FACTOR != 0 {
            return Err(Error::InvalidConfig(format!(
                "ring of {} cells is not divisible by {DOWNSAMPLE_FACTOR}",
                input.ring
            )));
        }
        let fc = self.act_conv(input, "stem.fc")?;
        let skip = cyclic_conv(input, self.weights.layer("stem.skip"))?;
        let stem = SparseFeatureGrid {
            features: fc.features.iter().zip(&skip.features).map(|(a, b)| a + b).collect(),
            ..fc
        };
        let mut x = self.act_conv(&stem, "stem.proj")?;
        for n in 1..=4 {
            let down = self.act_conv(&x, &format!("stage{n}.down"))?;
            let pooled = max_pool_down(&x)?;
            x = down.concat(&pooled)?;
            x = self.act_conv(&x, &format!("stage{n}.conv1"))?;
            x = self.act_conv(&x, &format!("stage{n}.conv2"))?;
        }
        let stage4 = x.clone();
        for name in ["stage5.conv0", "stage5.conv1", "stage5.conv2"] {
            x = self.act_conv(&x, name)?;
        }
        let up = self.act_conv(&x, "stage6.up")?;
        x = up.concat(&stage4)?;
        for name in ["stage6.fuse", "stage6.conv1", "stage6.conv2"] {
            x = self.act_conv(&x, name)?;
        }
        Ok(x)
    }

    /// Encodes a voxel cloud: initial features, the full topology, then each
    /// input voxel takes the feature of its 1/16-resolution ancestor.
    pub fn encode(&self, v: &VoxelCloud) -> Result<PointFeatures> {
        let grid = initial_features(v)?;
        let coarse = self.encode_grid(&grid)?;
        Ok(gather_to_fine(&coarse, grid.keys()))
    }
}

/// Features of the coarse ancestor of each fine key.
pub fn gather_to_fine(coarse: &SparseFeatureGrid, fine: &[VoxelKey]) -> PointFeatures {
    let index = coarse.index();
    let width = coarse.width;
    let mut data = Vec::with_capacity(fine.len() * width);
    for key in fine {
        let anc = [
            key[0].div_euclid(DOWNSAMPLE_FACTOR),
            key[1].div_euclid(DOWNSAMPLE_FACTOR),
            key[2].div_euclid(DOWNSAMPLE_FACTOR),
        ];
        data.extend_from_slice(coarse.row(index[&anc]));
    }
    PointFeatures { width, data }
}
