//! U-net over hyperspectral cubes: a 1×1 band reduction, an encoder/decoder
//! with skip concatenations and either a TanH bitfield head or a softmax
//! powerset head.

mod checkpoint;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{checkpoint_from_bytes, checkpoint_to_bytes, read_checkpoint, write_checkpoint};

use crate::data::HyperCube;
use crate::encoding::{decode, BitfieldMask, PowersetMask, NUM_CATEGORIES, NUM_PRIMARY};
use crate::numerics::{glorot_uniform, Graph, GraphOf, Real, Tensor, TensorOf, Var};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Head {
    /// K TanH outputs, one per primary class.
    Bitfield,
    /// Softmax over the eight powerset categories.
    Baseline,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Bitfield => NUM_PRIMARY,
            Head::Baseline => NUM_CATEGORIES,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub bands: usize,
    pub head: Head,
    pub spectral_reduction: usize,
    /// Channels per encoder level, bottleneck last; `depth + 1` entries.
    pub encoder_channels: Vec<usize>,
    /// Number of 2× downsamplings.
    pub depth: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(head: Head) -> Self {
        Self { bands: 224, head, spectral_reduction: 32, encoder_channels: vec![32, 64, 128], depth: 2, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_channels.len() != self.depth + 1 {
            return Err(Error::Config(format!(
                "{} encoder channel counts for depth {} (need {})",
                self.encoder_channels.len(),
                self.depth,
                self.depth + 1
            )));
        }
        if self.bands == 0 || self.spectral_reduction == 0 || self.encoder_channels.contains(&0) {
            return Err(Error::Config("band and channel counts must be positive".into()));
        }
        if self.depth > 8 {
            return Err(Error::Config(format!("depth {} is unreasonably deep", self.depth)));
        }
        Ok(())
    }

    /// Input extents must be multiples of this.
    pub fn multiple(&self) -> usize {
        1 << self.depth
    }

    pub fn outputs(&self) -> usize {
        self.head.outputs()
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut conv = |name: String, f: usize, c: usize, k: usize| {
            out.push((format!("{name}.weight"), vec![f, c, k, k]));
            out.push((format!("{name}.bias"), vec![f]));
        };
        let e = &self.encoder_channels;
        conv("reduce".into(), self.spectral_reduction, self.bands, 1);
        let mut prev = self.spectral_reduction;
        for (l, &ch) in e.iter().enumerate().take(self.depth) {
            conv(format!("enc{l}.conv1"), ch, prev, 3);
            conv(format!("enc{l}.conv2"), ch, ch, 3);
            prev = ch;
        }
        conv("mid.conv1".into(), e[self.depth], prev, 3);
        conv("mid.conv2".into(), e[self.depth], e[self.depth], 3);
        let mut layout = out;
        for l in (0..self.depth).rev() {
            layout.push((format!("up{l}.weight"), vec![e[l + 1], e[l], 2, 2]));
            layout.push((format!("up{l}.bias"), vec![e[l]]));
            layout.push((format!("dec{l}.conv1.weight"), vec![e[l], 2 * e[l], 3, 3]));
            layout.push((format!("dec{l}.conv1.bias"), vec![e[l]]));
            layout.push((format!("dec{l}.conv2.weight"), vec![e[l], e[l], 3, 3]));
            layout.push((format!("dec{l}.conv2.bias"), vec![e[l]]));
        }
        layout.push(("head.weight".into(), vec![self.outputs(), e[0], 1, 1]));
        layout.push(("head.bias".into(), vec![self.outputs()]));
        layout
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: u32,
    pub final_train_loss: f64,
    pub final_val_loss: f64,
}

/// Per-band input standardisation `(x - mean) / std`, fixed before
/// training from the training corpus and applied ahead of the network.
#[derive(Clone, Debug, PartialEq)]
pub struct BandNorm {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl BandNorm {
    pub fn identity(bands: usize) -> Self {
        Self { mean: vec![0.0; bands], std: vec![1.0; bands] }
    }

    /// Mean and standard deviation of every band over all pixels of
    /// `cubes`; deviations below 1e-6 are raised to it.
    pub fn fit<'a>(cubes: impl IntoIterator<Item = &'a HyperCube>) -> Result<Self> {
        let mut bands = None;
        let (mut sum, mut sq, mut n) = (Vec::new(), Vec::new(), 0usize);
        for cube in cubes {
            let b = *bands.get_or_insert(cube.bands());
            if b != cube.bands() {
                return Err(Error::Dimension(format!("cubes with {b} and {} bands", cube.bands())));
            }
            sum.resize(b, 0.0f64);
            sq.resize(b, 0.0f64);
            for px in cube.data().chunks_exact(b) {
                for (k, &v) in px.iter().enumerate() {
                    sum[k] += v as f64;
                    sq[k] += (v as f64) * (v as f64);
                }
            }
            n += cube.height() * cube.width();
        }
        if n == 0 {
            return Err(Error::Dimension("no pixels to fit band statistics on".into()));
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
        let std = sq.iter().zip(&mean).map(|(q, m)| ((q / n as f64 - m * m).max(0.0).sqrt().max(1e-6)) as f32).collect();
        Ok(Self { mean: mean.into_iter().map(|m| m as f32).collect(), std })
    }

    fn validate(&self, bands: usize) -> Result<()> {
        if self.mean.len() != bands || self.std.len() != bands {
            return Err(Error::Dimension(format!(
                "band statistics of length {}/{} for a {bands}-band model",
                self.mean.len(),
                self.std.len()
            )));
        }
        if !self.mean.iter().all(|m| m.is_finite()) || !self.std.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Numerical("band statistics must be finite with positive deviations".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    norm: BandNorm,
    params: Vec<(String, Tensor)>,
    pub meta: TrainingMeta,
}

/// Graph handles produced by [`TrainedModel::forward_graph`].
pub struct ForwardVars {
    /// One leaf per parameter, in storage order.
    pub params: Vec<Var>,
    /// Head output before the final activation.
    pub logits: Var,
    /// TanH scores or softmax probabilities.
    pub output: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Prediction {
    Bitfield(BitfieldMask),
    Powerset(PowersetMask),
}

impl Prediction {
    /// Both heads scored on the same eight categories.
    pub fn into_bitfield(self) -> BitfieldMask {
        match self {
            Prediction::Bitfield(m) => m,
            Prediction::Powerset(m) => m.to_bitfield(),
        }
    }
}

/// Initialises every kernel with seeded Glorot-uniform values and every
/// bias with zeros.
pub fn build(spec: &ModelSpec) -> Result<TrainedModel> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let params = spec
        .layout()
        .into_iter()
        .map(|(name, shape)| {
            let tensor = if shape.len() == 4 {
                let (a, b, field) = (shape[0], shape[1], shape[2] * shape[3]);
                glorot_uniform(&shape, b * field, a * field, &mut rng)
            } else {
                Tensor::zeros(&shape)
            };
            (name, tensor)
        })
        .collect();
    Ok(TrainedModel {
        spec: spec.clone(),
        norm: BandNorm::identity(spec.bands),
        params,
        meta: TrainingMeta { seed: spec.seed, ..Default::default() },
    })
}

impl TrainedModel {
    pub(crate) fn from_parts(
        spec: ModelSpec,
        norm: BandNorm,
        params: Vec<(String, Tensor)>,
        meta: TrainingMeta,
    ) -> Result<Self> {
        norm.validate(spec.bands)?;
        let layout = spec.layout();
        if layout.len() != params.len() {
            return Err(Error::Config(format!("{} tensors for a model with {}", params.len(), layout.len())));
        }
        for ((name, shape), (got, t)) in layout.iter().zip(&params) {
            if name != got || shape.as_slice() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {got} {:?} where {name} {shape:?} was expected",
                    t.shape()
                )));
            }
        }
        Ok(Self { spec, norm, params, meta })
    }

    pub fn band_norm(&self) -> &BandNorm {
        &self.norm
    }

    pub fn set_band_norm(&mut self, norm: BandNorm) -> Result<()> {
        norm.validate(self.spec.bands)?;
        self.norm = norm;
        Ok(())
    }

    pub fn parameters(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn parameter(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn parameter_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.iter_mut().map(|(_, t)| t).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|(_, t)| t.len()).sum()
    }

    /// Records the network on `g` for an `[N, B, H, W]` input.
    pub fn forward_graph<T: Real>(&self, g: &mut GraphOf<T>, input: Var, trainable: bool) -> Result<ForwardVars> {
        let params: Vec<TensorOf<T>> = self.params.iter().map(|(_, t)| t.cast()).collect();
        self.forward_graph_with(g, input, &params, trainable)
    }

    /// As [`TrainedModel::forward_graph`] with substitute parameter values,
    /// given in storage order.
    pub fn forward_graph_with<T: Real>(
        &self,
        g: &mut GraphOf<T>,
        input: Var,
        values: &[TensorOf<T>],
        trainable: bool,
    ) -> Result<ForwardVars> {
        if values.len() != self.params.len()
            || values.iter().zip(&self.params).any(|(v, (_, p))| v.shape() != p.shape())
        {
            return Err(Error::Dimension("substitute parameters do not match the model layout".into()));
        }
        let shape = g.value(input).shape().to_vec();
        if shape.len() != 4 || shape[1] != self.spec.bands {
            return Err(Error::Dimension(format!(
                "input {shape:?} does not match a {}-band model (expected [N, {}, H, W])",
                self.spec.bands, self.spec.bands
            )));
        }
        let m = self.spec.multiple();
        if shape[2] % m != 0 || shape[3] % m != 0 {
            return Err(Error::Dimension(format!("spatial extents {}x{} not divisible by {m}", shape[2], shape[3])));
        }
        let params: Vec<Var> = values
            .iter()
            .map(|t| {
                let mut t = t.clone();
                t.set_requires_grad(trainable);
                g.leaf(t)
            })
            .collect();
        let mut next = params.iter().copied();
        let mut take = || -> (Var, Var) { (next.next().unwrap(), next.next().unwrap()) };
        let conv = |g: &mut GraphOf<T>, x: Var, (w, b): (Var, Var), pad: usize| g.conv2d(x, w, b, 1, pad);

        let scale: Vec<T> = self.norm.std.iter().map(|&s| T::from_f64(1.0 / s as f64)).collect();
        let shift: Vec<T> = self.norm.mean.iter().zip(&self.norm.std).map(|(&m, &s)| T::from_f64(-(m as f64) / s as f64)).collect();
        let input = g.channel_affine(input, &scale, &shift)?;
        let mut x = conv(g, input, take(), 0)?;
        let mut skips = Vec::with_capacity(self.spec.depth);
        for _ in 0..self.spec.depth {
            let y = conv(g, x, take(), 1)?;
            let y = g.relu(y);
            let y = conv(g, y, take(), 1)?;
            let y = g.relu(y);
            skips.push(y);
            x = g.maxpool2d(y, 2, 2)?;
        }
        for _ in 0..2 {
            let y = conv(g, x, take(), 1)?;
            x = g.relu(y);
        }
        for skip in skips.into_iter().rev() {
            let (w, b) = take();
            let up = g.conv_transpose2d(x, w, b, 2, 0)?;
            let y = g.concat(&[up, skip], 1)?;
            let y = conv(g, y, take(), 1)?;
            let y = g.relu(y);
            let y = conv(g, y, take(), 1)?;
            x = g.relu(y);
        }
        let logits = conv(g, x, take(), 0)?;
        let output = match self.spec.head {
            Head::Bitfield => g.tanh(logits),
            Head::Baseline => g.softmax(logits, 1)?,
        };
        Ok(ForwardVars { params, logits, output })
    }

    /// Activated scores `[N, outputs, H, W]` for an `[N, B, H, W]` input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let mut x = input.clone();
        x.set_requires_grad(false);
        let x = g.leaf(x);
        let vars = self.forward_graph(&mut g, x, false)?;
        let out = g.value(vars.output).clone();
        if !out.all_finite() {
            return Err(Error::Numerical("network produced non-finite scores".into()));
        }
        Ok(out)
    }

    /// Scores `[outputs, H, W]` for a whole cube. Extents are padded up to
    /// a multiple of `2^depth` by edge replication and cropped back.
    pub fn forward_cube(&self, cube: &HyperCube) -> Result<Vec<f32>> {
        if cube.bands() != self.spec.bands {
            return Err(Error::Dimension(format!(
                "cube has {} bands, model expects {}",
                cube.bands(),
                self.spec.bands
            )));
        }
        let m = self.spec.multiple();
        let (h, w) = (cube.height(), cube.width());
        let (ph, pw) = (h.div_ceil(m) * m, w.div_ceil(m) * m);
        let input = Tensor::new(&[1, cube.bands(), ph, pw], cube.window_chw(0, 0, ph, pw))?;
        let scores = self.forward(&input)?;
        let k = self.spec.outputs();
        let mut out = Vec::with_capacity(k * h * w);
        for c in 0..k {
            for r in 0..h {
                let start = (c * ph + r) * pw;
                out.extend_from_slice(&scores.data()[start..start + w]);
            }
        }
        Ok(out)
    }

    /// Decodes `[outputs, H, W]` scores: thresholding for the bitfield head,
    /// argmax for the baseline head.
    pub fn decode_scores(&self, height: usize, width: usize, scores: &[f32], threshold: f32) -> Result<Prediction> {
        match self.spec.head {
            Head::Bitfield => {
                let plane = height * width;
                let data = (0..plane)
                    .map(|i| {
                        let s: [f32; NUM_PRIMARY] = std::array::from_fn(|k| scores[k * plane + i]);
                        decode(&s, threshold)
                    })
                    .collect();
                Ok(Prediction::Bitfield(BitfieldMask::from_vec(height, width, data)?))
            }
            Head::Baseline => Ok(Prediction::Powerset(PowersetMask::from_scores(height, width, scores)?)),
        }
    }

    pub fn predict(&self, cube: &HyperCube, threshold: f32) -> Result<Prediction> {
        let scores = self.forward_cube(cube)?;
        self.decode_scores(cube.height(), cube.width(), &scores, threshold)
    }
}
