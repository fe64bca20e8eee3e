//! Frame-wise chord classifiers.
//!
//! Two architectures share one code path:
//!
//! * `Logistic`: a single softmax layer over the standardized CQT frame.
//! * `Hidden`: a tanh layer over `2w + 1` stacked neighbouring frames
//!   (zero-padded at the edges), followed by the softmax layer.
//!
//! With the structured loss enabled (`gamma < 1`) two auxiliary heads read
//! the representation: a 14-way root softmax (12 roots, N, X) and 12
//! independent pitch-class sigmoids. Their outputs are concatenated with the
//! representation before the chord layer. Gradients are derived by hand.

use std::io::{self, Read, Write};
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{frame_labels, Annotation};
use crate::decode::argmax;
use crate::features::{self, beat_pool, max_overlap_labels, BeatIntervals, FeatureError, FeatureMatrix};
use crate::par::{self, Execution};
use crate::vocab::{ChordId, Vocabulary};

pub const ROOT_CLASSES: usize = 14;
pub const PITCH_CLASSES: usize = 12;
/// Semitone shifts drawn for augmentation.
pub const SHIFT_SET: [i32; 11] = [-5, -4, -3, -2, -1, 1, 2, 3, 4, 5, 6];
const LOG_FLOOR: f64 = 1e-12;
const CHECKPOINT_MAGIC: &[u8; 4] = b"CKPT";
const CHECKPOINT_VERSION: u32 = 1;

type DenseParts = (Option<Array2<f64>>, Option<Array1<f64>>);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("input has {found} features, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("target id {0} out of range")]
    TargetOutOfRange(usize),
    #[error("all class counts are zero")]
    AllZeroCounts,
    #[error("empty training set")]
    EmptyDataset,
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("structured loss needs auxiliary heads")]
    MissingAuxHeads,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Logistic,
    Hidden { units: usize, context: usize },
}

impl Architecture {
    pub fn context(self) -> usize {
        match self {
            Architecture::Logistic => 0,
            Architecture::Hidden { context, .. } => context,
        }
    }
}

/// Per-bin affine normalization fitted on training frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub inv_std: Array1<f64>,
}

impl Standardizer {
    pub fn identity(n_bins: usize) -> Self {
        Self {
            mean: Array1::zeros(n_bins),
            inv_std: Array1::ones(n_bins),
        }
    }

    pub fn fit<'a>(feats: impl IntoIterator<Item = &'a FeatureMatrix>, n_bins: usize) -> Self {
        let mut sum = Array1::<f64>::zeros(n_bins);
        let mut sq = Array1::<f64>::zeros(n_bins);
        let mut n = 0usize;
        for f in feats {
            for row in f.data().rows() {
                for (b, &v) in row.iter().enumerate() {
                    let v = f64::from(v);
                    sum[b] += v;
                    sq[b] += v * v;
                }
                n += 1;
            }
        }
        if n == 0 {
            return Self::identity(n_bins);
        }
        let mean = &sum / n as f64;
        let var = &sq / n as f64 - &mean * &mean;
        let inv_std = var.mapv(|v| if v > 1e-8 { 1.0 / v.sqrt() } else { 1.0 });
        Self { mean, inv_std }
    }

    pub fn apply(&self, feat: &FeatureMatrix) -> Array2<f64> {
        let mut x = feat.data().mapv(f64::from);
        x -= &self.mean;
        x *= &self.inv_std;
        x
    }
}

/// Dense layer `y = x Wᵀ + b`, with `W` stored out × in.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            w: Array2::zeros((out, inp)),
            b: Array1::zeros(out),
        }
    }

    fn init(out: usize, inp: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (inp as f64).sqrt();
        Self {
            w: Array2::from_shape_fn((out, inp), |_| rng.random_range(-bound..bound)),
            b: Array1::from_shape_fn(out, |_| rng.random_range(-bound..bound)),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    fn accumulate(&mut self, delta: &Array2<f64>, input: &Array2<f64>) {
        self.w += &delta.t().dot(input);
        self.b += &delta.sum_axis(Axis(0));
    }
}

/// Trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Layers {
    pub hidden: Option<Dense>,
    pub root: Option<Dense>,
    pub pitch: Option<Dense>,
    pub output: Dense,
}

impl Layers {
    fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.w.nrows(), d.w.ncols());
        Self {
            hidden: self.hidden.as_ref().map(z),
            root: self.root.as_ref().map(z),
            pitch: self.pitch.as_ref().map(z),
            output: z(&self.output),
        }
    }

    fn denses(&self) -> Vec<&Dense> {
        [
            self.hidden.as_ref(),
            self.root.as_ref(),
            self.pitch.as_ref(),
            Some(&self.output),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    fn denses_mut(&mut self) -> Vec<&mut Dense> {
        [
            self.hidden.as_mut(),
            self.root.as_mut(),
            self.pitch.as_mut(),
            Some(&mut self.output),
        ]
        .into_iter()
        .flatten()
        .collect()
    }

    /// Flat views of every tensor, in a fixed order.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.denses()
            .into_iter()
            .flat_map(|d| [d.w.as_slice().unwrap(), d.b.as_slice().unwrap()])
            .collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.denses_mut()
            .into_iter()
            .flat_map(|d| [d.w.as_slice_mut().unwrap(), d.b.as_slice_mut().unwrap()])
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    fn add_assign(&mut self, other: &Layers) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn scale(&mut self, k: f64) {
        for s in self.slices_mut() {
            for x in s {
                *x *= k;
            }
        }
    }

    fn all_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// A per-frame probability distribution over chord classes.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    probs: Array2<f64>,
}

impl Posteriorgram {
    pub fn new(probs: Array2<f64>) -> Result<Self, ModelError> {
        for (i, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.sum() - 1.0).abs() > 1e-6 {
                return Err(ModelError::InvalidConfig(format!("row {i} is not a distribution")));
            }
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.probs.view()
    }

    pub fn n_frames(&self) -> usize {
        self.probs.nrows()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.probs
    }

    /// Per-frame argmax, ties to the lowest id.
    pub fn argmax_ids(&self) -> Vec<ChordId> {
        argmax_rows(&self.probs)
    }
}

pub fn argmax_rows(m: &Array2<f64>) -> Vec<ChordId> {
    m.rows()
        .into_iter()
        .map(|r| ChordId(argmax(r.iter().copied()) as u16))
        .collect()
}

/// Everything a forward pass produces.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub logits: Array2<f64>,
    pub chord: Posteriorgram,
    pub root: Option<Array2<f64>>,
    pub pitch: Option<Array2<f64>>,
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Cache {
    x: Array2<f64>,
    h: Array2<f64>,
    root: Option<Array2<f64>>,
    pitch: Option<Array2<f64>>,
    z: Array2<f64>,
    logits: Array2<f64>,
    probs: Array2<f64>,
}

/// Loss components, summed (not averaged) over frames.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub chord: f64,
    pub root: f64,
    pub pitch: f64,
    pub frames: usize,
}

impl LossParts {
    fn add(&mut self, o: &LossParts) {
        self.chord += o.chord;
        self.root += o.root;
        self.pitch += o.pitch;
        self.frames += o.frames;
    }

    /// `γ·L_chord + (1−γ)·(L_root + L_pitch)`, each term a frame mean.
    pub fn total(&self, gamma: f64) -> f64 {
        if self.frames == 0 {
            return 0.0;
        }
        let n = self.frames as f64;
        let aux = if gamma < 1.0 {
            (1.0 - gamma) * (self.root + self.pitch) / n
        } else {
            0.0
        };
        gamma * self.chord / n + aux
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordModel {
    pub arch: Architecture,
    pub n_bins: usize,
    pub n_classes: usize,
    pub vocab_hash: String,
    pub standardizer: Standardizer,
    pub layers: Layers,
}

impl ChordModel {
    pub fn new(
        arch: Architecture,
        n_bins: usize,
        vocab: &Vocabulary,
        with_aux: bool,
        standardizer: Standardizer,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = n_bins * (2 * arch.context() + 1);
        let (hidden, rep) = match arch {
            Architecture::Logistic => (None, input),
            Architecture::Hidden { units, .. } => (Some(Dense::init(units, input, &mut rng)), units),
        };
        let (root, pitch) = if with_aux {
            (
                Some(Dense::init(ROOT_CLASSES, rep, &mut rng)),
                Some(Dense::init(PITCH_CLASSES, rep, &mut rng)),
            )
        } else {
            (None, None)
        };
        let z_dim = rep + if with_aux { ROOT_CLASSES + PITCH_CLASSES } else { 0 };
        let output = Dense::init(vocab.size(), z_dim, &mut rng);
        Self {
            arch,
            n_bins,
            n_classes: vocab.size(),
            vocab_hash: vocab.manifest_hash(),
            standardizer,
            layers: Layers {
                hidden,
                root,
                pitch,
                output,
            },
        }
    }

    pub fn has_aux(&self) -> bool {
        self.layers.root.is_some()
    }

    pub fn input_dim(&self) -> usize {
        self.n_bins * (2 * self.arch.context() + 1)
    }

    /// Standardizes and, for context models, stacks neighbouring frames.
    pub fn prepare_input(&self, feat: &FeatureMatrix) -> Result<Array2<f64>, ModelError> {
        if feat.n_bins() != self.n_bins {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_bins,
                found: feat.n_bins(),
            });
        }
        Ok(stack_context(&self.standardizer.apply(feat), self.arch.context()))
    }

    fn forward_cache(&self, x: Array2<f64>) -> Cache {
        let h = match &self.layers.hidden {
            Some(d) => d.apply(&x).mapv(f64::tanh),
            None => x.clone(),
        };
        let (root, pitch) = match (&self.layers.root, &self.layers.pitch) {
            (Some(r), Some(p)) => (Some(softmax_rows(&r.apply(&h))), Some(p.apply(&h).mapv(sigmoid))),
            _ => (None, None),
        };
        let z = match (&root, &pitch) {
            (Some(r), Some(p)) => concatenate![Axis(1), h, *r, *p],
            _ => h.clone(),
        };
        let logits = self.layers.output.apply(&z);
        let probs = softmax_rows(&logits);
        Cache {
            x,
            h,
            root,
            pitch,
            z,
            logits,
            probs,
        }
    }

    /// Forward pass on already prepared input rows.
    pub fn forward_inputs(&self, x: Array2<f64>) -> Result<ModelOutput, ModelError> {
        if x.ncols() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let c = self.forward_cache(x);
        Ok(ModelOutput {
            logits: c.logits,
            chord: Posteriorgram { probs: c.probs },
            root: c.root,
            pitch: c.pitch,
        })
    }

    pub fn forward(&self, feat: &FeatureMatrix) -> Result<ModelOutput, ModelError> {
        self.forward_inputs(self.prepare_input(feat)?)
    }

    /// Summed loss and gradient over the rows of `x`.
    pub fn loss_and_gradient(
        &self,
        x: Array2<f64>,
        targets: &[ChordId],
        mask: Option<&[bool]>,
        weights: &[f64],
        gamma: f64,
        vocab: &Vocabulary,
    ) -> Result<(LossParts, Layers), ModelError> {
        let n = x.nrows();
        if x.ncols() != self.input_dim() {
            return Err(ModelError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        if targets.len() != n || mask.is_some_and(|m| m.len() != n) {
            return Err(ModelError::DimensionMismatch {
                expected: n,
                found: targets.len(),
            });
        }
        if gamma < 1.0 && !self.has_aux() {
            return Err(ModelError::MissingAuxHeads);
        }
        if let Some(t) = targets.iter().find(|t| t.index() >= self.n_classes) {
            return Err(ModelError::TargetOutOfRange(t.index()));
        }
        let c = self.forward_cache(x);
        let valid = |f: usize| mask.is_none_or(|m| m[f]);
        let mut parts = LossParts::default();
        let mut grad = self.layers.zeros_like();

        let mut d_logits = c.probs.clone();
        for f in 0..n {
            let t = targets[f].index();
            if !valid(f) {
                d_logits.row_mut(f).fill(0.0);
                continue;
            }
            parts.frames += 1;
            let w = weights[t];
            parts.chord += -w * c.probs[[f, t]].max(LOG_FLOOR).ln();
            d_logits[[f, t]] -= 1.0;
            let k = gamma * w;
            d_logits.row_mut(f).mapv_inplace(|v| v * k);
        }
        grad.output.accumulate(&d_logits, &c.z);
        let dz = d_logits.dot(&self.layers.output.w);
        let rep = c.h.ncols();
        let mut dh = dz.slice(s![.., ..rep]).to_owned();

        if let (Some(rp), Some(pp), Some(root_l), Some(pitch_l)) =
            (&c.root, &c.pitch, &self.layers.root, &self.layers.pitch)
        {
            let d_rp = dz.slice(s![.., rep..rep + ROOT_CLASSES]);
            let d_pp = dz.slice(s![.., rep + ROOT_CLASSES..]);
            let mut d_root = Array2::<f64>::zeros(rp.raw_dim());
            let mut d_pitch = Array2::<f64>::zeros(pp.raw_dim());
            for f in 0..n {
                // through the concatenation into the chord layer
                let dot: f64 = d_rp.row(f).iter().zip(rp.row(f)).map(|(a, b)| a * b).sum();
                for k in 0..ROOT_CLASSES {
                    d_root[[f, k]] = rp[[f, k]] * (d_rp[[f, k]] - dot);
                }
                for k in 0..PITCH_CLASSES {
                    let p = pp[[f, k]];
                    d_pitch[[f, k]] = d_pp[[f, k]] * p * (1.0 - p);
                }
                if !valid(f) {
                    continue;
                }
                let (rt, pt) = aux_targets(targets[f], vocab);
                parts.root += -rp[[f, rt]].max(LOG_FLOOR).ln();
                d_root[[f, rt]] -= 1.0 - gamma;
                for k in 0..ROOT_CLASSES {
                    d_root[[f, k]] += (1.0 - gamma) * rp[[f, k]];
                }
                for k in 0..PITCH_CLASSES {
                    let p = pp[[f, k]];
                    let y = if pt[k] { 1.0 } else { 0.0 };
                    parts.pitch += bce(p, y) / PITCH_CLASSES as f64;
                    d_pitch[[f, k]] += (1.0 - gamma) * (p - y) / PITCH_CLASSES as f64;
                }
            }
            let g_root = grad.root.as_mut().expect("aux grads");
            g_root.accumulate(&d_root, &c.h);
            grad.pitch.as_mut().expect("aux grads").accumulate(&d_pitch, &c.h);
            dh += &d_root.dot(&root_l.w);
            dh += &d_pitch.dot(&pitch_l.w);
        }

        if let (Some(hidden), Some(g)) = (&self.layers.hidden, grad.hidden.as_mut()) {
            let _ = hidden;
            let da = &dh * &c.h.mapv(|v| 1.0 - v * v);
            g.accumulate(&da, &c.x);
        }
        Ok((parts, grad))
    }
}

fn bce(p: f64, y: f64) -> f64 {
    -(y * p.max(LOG_FLOOR).ln() + (1.0 - y) * (1.0 - p).max(LOG_FLOOR).ln())
}

/// Root class (0..12, 12 = N, 13 = X) and pitch-class membership for a target.
pub fn aux_targets(id: ChordId, vocab: &Vocabulary) -> (usize, [bool; 12]) {
    let mut pcs = [false; 12];
    if let Some(set) = vocab.pitch_set(id) {
        for p in set.iter() {
            pcs[p as usize] = true;
        }
    }
    (vocab.root_class(id), pcs)
}

/// Concatenates frames `i-w ..= i+w` for every frame, zero outside the matrix.
pub fn stack_context(x: &Array2<f64>, w: usize) -> Array2<f64> {
    if w == 0 {
        return x.clone();
    }
    let (n, d) = x.dim();
    let mut out = Array2::<f64>::zeros((n, d * (2 * w + 1)));
    for i in 0..n {
        for (slot, offset) in (-(w as isize)..=w as isize).enumerate() {
            let j = i as isize + offset;
            if (0..n as isize).contains(&j) {
                out.slice_mut(s![i, slot * d..(slot + 1) * d])
                    .assign(&x.row(j as usize));
            }
        }
    }
    out
}

/// Loss of a forward pass against targets, computed from the output
/// probabilities: `γ·L_chord + (1−γ)·(L_root + L_pitch)`.
pub fn total_loss(
    out: &ModelOutput,
    targets: &[ChordId],
    mask: Option<&[bool]>,
    weights: &[f64],
    gamma: f64,
    vocab: &Vocabulary,
) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(ModelError::InvalidConfig(format!("gamma {gamma}")));
    }
    let probs = out.chord.probs();
    if targets.len() != probs.nrows() {
        return Err(ModelError::DimensionMismatch {
            expected: probs.nrows(),
            found: targets.len(),
        });
    }
    if gamma < 1.0 && (out.root.is_none() || out.pitch.is_none()) {
        return Err(ModelError::MissingAuxHeads);
    }
    let mut parts = LossParts::default();
    for (f, &t) in targets.iter().enumerate() {
        if t.index() >= probs.ncols() {
            return Err(ModelError::TargetOutOfRange(t.index()));
        }
        if mask.is_some_and(|m| !m[f]) {
            continue;
        }
        parts.frames += 1;
        parts.chord += -weights[t.index()] * probs[[f, t.index()]].max(LOG_FLOOR).ln();
        if let (Some(r), Some(p)) = (&out.root, &out.pitch) {
            let (rt, pt) = aux_targets(t, vocab);
            parts.root += -r[[f, rt]].max(LOG_FLOOR).ln();
            parts.pitch += (0..PITCH_CLASSES)
                .map(|k| bce(p[[f, k]], if pt[k] { 1.0 } else { 0.0 }))
                .sum::<f64>()
                / PITCH_CLASSES as f64;
        }
    }
    Ok(parts.total(gamma))
}

/// Class weights `w_c = 1 / (count_c + 10)^α`, rescaled so that the
/// count-weighted mean weight is 1.
pub fn class_weights(counts: &[f64], alpha: f64) -> Result<Vec<f64>, ModelError> {
    if !(alpha >= 0.0) || counts.iter().any(|&c| !(c >= 0.0)) {
        return Err(ModelError::InvalidConfig(
            "counts and alpha must be non-negative".into(),
        ));
    }
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(ModelError::AllZeroCounts);
    }
    let raw: Vec<f64> = counts.iter().map(|&c| (c + 10.0).powf(-alpha)).collect();
    let s = counts.iter().zip(&raw).map(|(c, w)| c * w).sum::<f64>() / total;
    Ok(raw.into_iter().map(|w| w / s).collect())
}

/// Frame counts expected under shift augmentation with probability `p`:
/// `(1−p)·count(c) + (p/12)·Σ_k count(transpose(c, −k))` for chord classes;
/// N and X unchanged.
pub fn expected_counts(counts: &[f64], p: f64, vocab: &Vocabulary) -> Vec<f64> {
    vocab
        .ids()
        .map(|id| {
            let own = counts[id.index()];
            if vocab.pitch_set(id).is_none() {
                return own;
            }
            let spread: f64 = (0..12)
                .map(|k| counts[vocab.transpose_id(id, -k).expect("valid id").index()])
                .sum();
            (1.0 - p) * own + p / 12.0 * spread
        })
        .collect()
}

pub fn class_counts<'a>(targets: impl IntoIterator<Item = &'a ChordId>, n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0.0; n_classes];
    for t in targets {
        counts[t.index()] += 1.0;
    }
    counts
}

pub fn predict_frames(model: &ChordModel, feat: &FeatureMatrix) -> Result<Vec<ChordId>, ModelError> {
    Ok(model.forward(feat)?.chord.argmax_ids())
}

/// Features with one target per row (frame or beat interval).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSong {
    pub features: FeatureMatrix,
    pub targets: Vec<ChordId>,
}

impl TrainingSong {
    /// Frame-center labels on the feature grid.
    pub fn from_annotation(features: FeatureMatrix, ann: &Annotation, vocab: &Vocabulary) -> Self {
        let targets = frame_labels(ann, &features.grid(), vocab);
        Self { features, targets }
    }

    /// Beat-pooled features with max-overlap labels per interval.
    pub fn from_beats(
        features: &FeatureMatrix,
        ann: &Annotation,
        beats: &BeatIntervals,
        vocab: &Vocabulary,
    ) -> Result<Self, ModelError> {
        let (pooled, intervals) = beat_pool(features, beats)?;
        let targets = max_overlap_labels(ann, &intervals, vocab);
        Ok(Self {
            features: pooled,
            targets,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Patch length in seconds.
    pub patch_seconds: f64,
    pub shift_probability: f64,
    pub weight_alpha: f64,
    pub structured_gamma: f64,
    pub seed: u64,
    pub validate_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::Logistic,
            learning_rate: 0.001,
            epochs: 150,
            batch_size: 64,
            patch_seconds: 10.0,
            shift_probability: 0.0,
            weight_alpha: 0.0,
            structured_gamma: 1.0,
            seed: 0,
            validate_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.validate_every == 0 {
            return bad("epochs, batch size and validation interval must be positive");
        }
        if !(self.patch_seconds > 0.0) {
            return bad("patch length must be positive");
        }
        if !(0.0..=1.0).contains(&self.shift_probability) {
            return bad("shift probability outside [0, 1]");
        }
        if !(self.weight_alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.structured_gamma) {
            return bad("gamma outside [0, 1]");
        }
        if let Architecture::Hidden { units, .. } = self.arch {
            if units == 0 {
                return bad("hidden layer needs units");
            }
        }
        Ok(())
    }

    /// Cosine annealing from the initial rate down to a tenth of it.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let min = self.learning_rate / 10.0;
        let phase = std::f64::consts::PI * epoch as f64 / self.epochs as f64;
        min + (self.learning_rate - min) * (1.0 + phase.cos()) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (the final ones without a
    /// validation set).
    pub model: ChordModel,
    pub best_epoch: usize,
    pub class_weights: Vec<f64>,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn history_jsonl(&self) -> String {
        self.history
            .iter()
            .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
            .collect()
    }
}

struct Adam {
    m: Layers,
    v: Layers,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &Layers) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut Layers, grad: &Layers, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        let slices = params
            .slices_mut()
            .into_iter()
            .zip(grad.slices())
            .zip(self.m.slices_mut())
            .zip(self.v.slices_mut());
        for (((p, g), m), v) in slices {
            for i in 0..p.len() {
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

struct Patch {
    song: usize,
    start: usize,
    len: usize,
    shift: i32,
}

fn patch_inputs(
    model: &ChordModel,
    song: &TrainingSong,
    patch: &Patch,
    vocab: &Vocabulary,
) -> Result<(Array2<f64>, Vec<ChordId>), ModelError> {
    let mut feat = song.features.slice_frames(patch.start, patch.start + patch.len);
    let mut targets = song.targets[patch.start..patch.start + patch.len].to_vec();
    if patch.shift != 0 {
        feat = features::pitch_shift_cqt(&feat, patch.shift)?;
        for t in &mut targets {
            *t = vocab
                .transpose_id(*t, patch.shift)
                .map_err(|_| ModelError::TargetOutOfRange(t.index()))?;
        }
    }
    Ok((model.prepare_input(&feat)?, targets))
}

/// Mean loss and frame accuracy over whole songs.
pub fn evaluate(
    exec: Execution,
    model: &ChordModel,
    songs: &[TrainingSong],
    weights: &[f64],
    gamma: f64,
    vocab: &Vocabulary,
) -> Result<(f64, f64), ModelError> {
    let per_song = par::map(exec, songs, |song| -> Result<(LossParts, usize), ModelError> {
        let out = model.forward(&song.features)?;
        let correct = out
            .chord
            .argmax_ids()
            .iter()
            .zip(&song.targets)
            .filter(|(a, b)| a == b)
            .count();
        let n = song.targets.len();
        let loss = total_loss(&out, &song.targets, None, weights, gamma, vocab)?;
        let parts = LossParts {
            chord: loss * n as f64,
            root: 0.0,
            pitch: 0.0,
            frames: n,
        };
        Ok((parts, correct))
    });
    let mut total = LossParts::default();
    let mut correct = 0usize;
    for r in per_song {
        let (p, c) = r?;
        total.add(&p);
        correct += c;
    }
    let n = total.frames.max(1) as f64;
    Ok((total.chord / n, correct as f64 / n))
}

/// Trains a classifier with Adam, cosine learning-rate decay, one random
/// patch per song per epoch, optional pitch-shift augmentation and
/// best-on-validation checkpointing.
pub fn train(
    train_set: &[TrainingSong],
    val_set: &[TrainingSong],
    cfg: &TrainConfig,
    vocab: &Vocabulary,
) -> Result<TrainOutcome, ModelError> {
    train_with(Execution::default(), train_set, val_set, cfg, vocab)
}

pub fn train_with(
    exec: Execution,
    train_set: &[TrainingSong],
    val_set: &[TrainingSong],
    cfg: &TrainConfig,
    vocab: &Vocabulary,
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    let usable: Vec<usize> = (0..train_set.len())
        .filter(|&i| !train_set[i].targets.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let n_bins = train_set[usable[0]].features.n_bins();
    for song in train_set.iter().chain(val_set) {
        if song.features.n_bins() != n_bins {
            return Err(ModelError::DimensionMismatch {
                expected: n_bins,
                found: song.features.n_bins(),
            });
        }
        if song.features.n_frames() != song.targets.len() {
            return Err(ModelError::DimensionMismatch {
                expected: song.features.n_frames(),
                found: song.targets.len(),
            });
        }
        if let Some(t) = song.targets.iter().find(|t| t.index() >= vocab.size()) {
            return Err(ModelError::TargetOutOfRange(t.index()));
        }
    }

    let counts = class_counts(train_set.iter().flat_map(|s| &s.targets), vocab.size());
    let weights = class_weights(
        &expected_counts(&counts, cfg.shift_probability, vocab),
        cfg.weight_alpha,
    )?;
    let standardizer = Standardizer::fit(train_set.iter().map(|s| &s.features), n_bins);
    let gamma = cfg.structured_gamma;
    let mut model = ChordModel::new(cfg.arch, n_bins, vocab, gamma < 1.0, standardizer, cfg.seed);
    let mut adam = Adam::new(&model.layers);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_c0de);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Layers)> = None;

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let mut order = usable.clone();
        order.shuffle(&mut rng);

        let patches: Vec<Patch> = order
            .iter()
            .map(|&i| {
                let song = &train_set[i];
                let n = song.targets.len();
                let want = ((cfg.patch_seconds / song.features.hop()).round() as usize).max(1);
                let len = want.min(n);
                let start = rng.random_range(0..=n - len);
                let shift = if cfg.shift_probability > 0.0 && rng.random::<f64>() < cfg.shift_probability {
                    *SHIFT_SET.choose(&mut rng).expect("non-empty")
                } else {
                    0
                };
                Patch {
                    song: i,
                    start,
                    len,
                    shift,
                }
            })
            .collect();

        let mut epoch_parts = LossParts::default();
        for batch in patches.chunks(cfg.batch_size) {
            let results = par::map(exec, batch, |p| {
                let (x, t) = patch_inputs(&model, &train_set[p.song], p, vocab)?;
                model.loss_and_gradient(x, &t, None, &weights, gamma, vocab)
            });
            let mut parts = LossParts::default();
            let mut grad = model.layers.zeros_like();
            for r in results {
                let (p, g) = r?;
                parts.add(&p);
                grad.add_assign(&g);
            }
            if parts.frames == 0 {
                continue;
            }
            grad.scale(1.0 / parts.frames as f64);
            adam.update(&mut model.layers, &grad, lr);
            epoch_parts.add(&parts);
        }

        let train_loss = epoch_parts.total(gamma);
        if !train_loss.is_finite() || !model.layers.all_finite() {
            return Err(ModelError::NonFiniteLoss(epoch + 1));
        }
        let mut record = EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss,
            val_loss: None,
            val_accuracy: None,
        };
        let validate = (epoch + 1) % cfg.validate_every == 0 || epoch + 1 == cfg.epochs;
        if validate && !val_set.is_empty() {
            let (val_loss, val_acc) = evaluate(exec, &model, val_set, &weights, gamma, vocab)?;
            if !val_loss.is_finite() {
                return Err(ModelError::NonFiniteLoss(epoch + 1));
            }
            record.val_loss = Some(val_loss);
            record.val_accuracy = Some(val_acc);
            if best.as_ref().is_none_or(|(b, _, _)| val_loss < *b) {
                best = Some((val_loss, epoch + 1, model.layers.clone()));
            }
        }
        log::debug!(
            "epoch {} lr {:.6} train {:.4} val {:?}",
            epoch + 1,
            lr,
            train_loss,
            record.val_loss
        );
        history.push(record);
    }

    let best_epoch = match best {
        Some((_, epoch, layers)) => {
            model.layers = layers;
            epoch
        }
        None => cfg.epochs,
    };
    Ok(TrainOutcome {
        model,
        best_epoch,
        class_weights: weights,
        history,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    arch: Architecture,
    n_bins: usize,
    n_classes: usize,
    vocab_hash: String,
    tensors: Vec<(String, Vec<usize>)>,
}

impl ChordModel {
    fn named_tensors(&self) -> Vec<(String, Vec<usize>, Vec<f64>)> {
        let mut out = vec![
            (
                "std.mean".to_string(),
                vec![self.n_bins],
                self.standardizer.mean.to_vec(),
            ),
            (
                "std.inv".to_string(),
                vec![self.n_bins],
                self.standardizer.inv_std.to_vec(),
            ),
        ];
        let named = [
            ("hidden", self.layers.hidden.as_ref()),
            ("root", self.layers.root.as_ref()),
            ("pitch", self.layers.pitch.as_ref()),
            ("output", Some(&self.layers.output)),
        ];
        for (name, d) in named {
            if let Some(d) = d {
                out.push((format!("{name}.w"), d.w.shape().to_vec(), d.w.iter().copied().collect()));
                out.push((format!("{name}.b"), vec![d.b.len()], d.b.to_vec()));
            }
        }
        out
    }

    /// Binary checkpoint: `CKPT`, u32 version, u32 header length, JSON
    /// header (architecture, vocabulary hash, tensor shapes), then f32 blobs.
    pub fn write_checkpoint(&self, mut w: impl Write) -> Result<(), ModelError> {
        let tensors = self.named_tensors();
        let header = CheckpointHeader {
            arch: self.arch,
            n_bins: self.n_bins,
            n_classes: self.n_classes,
            vocab_hash: self.vocab_hash.clone(),
            tensors: tensors.iter().map(|(n, s, _)| (n.clone(), s.clone())).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
        buf.extend_from_slice(&json);
        for (_, _, values) in &tensors {
            for &v in values {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint(mut r: impl Read) -> Result<Self, ModelError> {
        let bad = |m: &str| ModelError::Checkpoint(m.to_string());
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() < 12 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(bad("unsupported version"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?)
                .map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let mut offset = 12 + hlen;
        let mut take = |shape: &[usize]| -> Result<Vec<f64>, ModelError> {
            let n: usize = shape.iter().product();
            let chunk = bytes
                .get(offset..offset + 4 * n)
                .ok_or_else(|| bad("truncated tensor"))?;
            offset += 4 * n;
            Ok(chunk
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
                .collect())
        };
        let mut mean = None;
        let mut inv = None;
        let mut dense: std::collections::HashMap<String, DenseParts> = Default::default();
        for (name, shape) in &header.tensors {
            let values = take(shape)?;
            match name.as_str() {
                "std.mean" => mean = Some(Array1::from(values)),
                "std.inv" => inv = Some(Array1::from(values)),
                other => {
                    let (layer, part) = other.split_once('.').ok_or_else(|| bad("bad tensor name"))?;
                    let entry = dense.entry(layer.to_string()).or_default();
                    match (part, shape.as_slice()) {
                        ("w", [o, i]) => {
                            entry.0 = Some(
                                Array2::from_shape_vec((*o, *i), values)
                                    .map_err(|e| ModelError::Checkpoint(e.to_string()))?,
                            )
                        }
                        ("b", [_]) => entry.1 = Some(Array1::from(values)),
                        _ => return Err(bad("bad tensor shape")),
                    }
                }
            }
        }
        let mut layer = |name: &str| -> Result<Option<Dense>, ModelError> {
            match dense.remove(name) {
                None => Ok(None),
                Some((Some(w), Some(b))) if w.nrows() == b.len() => Ok(Some(Dense { w, b })),
                _ => Err(bad("incomplete layer")),
            }
        };
        let layers = Layers {
            hidden: layer("hidden")?,
            root: layer("root")?,
            pitch: layer("pitch")?,
            output: layer("output")?.ok_or_else(|| bad("missing output layer"))?,
        };
        let model = ChordModel {
            arch: header.arch,
            n_bins: header.n_bins,
            n_classes: header.n_classes,
            vocab_hash: header.vocab_hash,
            standardizer: Standardizer {
                mean: mean.ok_or_else(|| bad("missing standardizer"))?,
                inv_std: inv.ok_or_else(|| bad("missing standardizer"))?,
            },
            layers,
        };
        if model.layers.output.w.nrows() != model.n_classes {
            return Err(bad("output layer does not match class count"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        Self::read_checkpoint(io::Cursor::new(std::fs::read(path)?))
    }

    /// Fails unless the checkpoint was trained against `vocab`.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<(), ModelError> {
        if self.vocab_hash != vocab.manifest_hash() || self.n_classes != vocab.size() {
            return Err(ModelError::Checkpoint("vocabulary does not match checkpoint".into()));
        }
        Ok(())
    }
}
