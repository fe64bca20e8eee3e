//! HMM smoothing of posteriorgrams and smoothness analytics.
//!
//! The transition matrix is homogeneous: self-transition probability `beta`,
//! every other transition `(1 - beta) / (C - 1)`. The initial distribution
//! is uniform and posteriors are floored at 1e-12 before taking logs.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::{self, Execution};
use crate::vocab::ChordId;

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("empty sequence")]
    EmptySequence,
    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid decoder config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum DecodeMethod {
    /// Max-product path.
    #[default]
    Viterbi,
    /// Per-frame argmax of forward-backward marginals.
    MaxMarginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub beta: f64,
    pub n_classes: usize,
    pub method: DecodeMethod,
}

impl DecoderConfig {
    pub fn new(beta: f64, n_classes: usize) -> Result<Self, DecodeError> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(DecodeError::InvalidConfig(format!("beta {beta} outside (0, 1)")));
        }
        if n_classes < 2 {
            return Err(DecodeError::InvalidConfig("need at least two classes".into()));
        }
        Ok(Self {
            beta,
            n_classes,
            method: DecodeMethod::Viterbi,
        })
    }

    pub fn with_method(mut self, method: DecodeMethod) -> Self {
        self.method = method;
        self
    }

    pub fn off_diagonal(&self) -> f64 {
        (1.0 - self.beta) / (self.n_classes - 1) as f64
    }

    fn log_stay(&self) -> f64 {
        self.beta.ln()
    }

    fn log_move(&self) -> f64 {
        self.off_diagonal().ln()
    }
}

fn log_emissions(post: ArrayView2<'_, f64>) -> Array2<f64> {
    post.mapv(|p| p.max(PROB_FLOOR).ln())
}

/// Log score of a state path: emissions plus transitions (uniform prior omitted).
pub fn path_score(post: ArrayView2<'_, f64>, path: &[usize], cfg: &DecoderConfig) -> f64 {
    let mut score = 0.0;
    for (t, &s) in path.iter().enumerate() {
        score += post[[t, s]].max(PROB_FLOOR).ln();
        if t > 0 {
            score += if path[t - 1] == s {
                cfg.log_stay()
            } else {
                cfg.log_move()
            };
        }
    }
    score
}

fn check(post: ArrayView2<'_, f64>, cfg: &DecoderConfig) -> Result<(), DecodeError> {
    if post.nrows() == 0 {
        return Err(DecodeError::EmptySequence);
    }
    if post.ncols() != cfg.n_classes {
        return Err(DecodeError::InvalidConfig(format!(
            "posteriorgram has {} classes, config {}",
            post.ncols(),
            cfg.n_classes
        )));
    }
    Ok(())
}

fn viterbi_path(post: ArrayView2<'_, f64>, cfg: &DecoderConfig) -> Vec<usize> {
    let (t_len, c) = post.dim();
    let emit = log_emissions(post);
    let (stay, jump) = (cfg.log_stay(), cfg.log_move());
    let mut delta: Vec<f64> = emit.row(0).to_vec();
    let mut back = vec![0u32; t_len * c];
    let mut next = vec![0.0; c];

    for t in 1..t_len {
        // best and runner-up predecessors, lowest index on ties
        let (mut b1, mut b2) = (0usize, usize::MAX);
        for s in 1..c {
            if delta[s] > delta[b1] {
                b2 = b1;
                b1 = s;
            } else if b2 == usize::MAX || delta[s] > delta[b2] {
                b2 = s;
            }
        }
        for s in 0..c {
            let other = if s == b1 { b2 } else { b1 };
            let via_stay = delta[s] + stay;
            let via_jump = delta[other] + jump;
            let (score, from) = if via_stay > via_jump || (via_stay == via_jump && s < other) {
                (via_stay, s)
            } else {
                (via_jump, other)
            };
            next[s] = score + emit[[t, s]];
            back[t * c + s] = from as u32;
        }
        std::mem::swap(&mut delta, &mut next);
    }

    let mut state = (0..c).fold(0, |best, s| if delta[s] > delta[best] { s } else { best });
    let mut path = vec![0usize; t_len];
    for t in (0..t_len).rev() {
        path[t] = state;
        if t > 0 {
            state = back[t * c + state] as usize;
        }
    }
    path
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        m
    } else {
        m + ((a - m).exp() + (b - m).exp()).ln()
    }
}

/// Forward-backward posterior marginals in the log domain.
pub fn marginals(post: ArrayView2<'_, f64>, cfg: &DecoderConfig) -> Array2<f64> {
    let (t_len, c) = post.dim();
    let emit = log_emissions(post);
    let (stay, jump) = (cfg.log_stay(), cfg.log_move());
    let lse = |row: &[f64]| {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    };
    // sum_{s'} exp(x[s'] + A[s', s]) = exp(x[s] + stay) + (total - exp(x[s])) * exp(jump)
    let propagate = |x: &[f64]| -> Vec<f64> {
        let total = lse(x);
        x.iter()
            .map(|&xs| {
                let rest = if total - xs < 1e-12 {
                    f64::NEG_INFINITY
                } else {
                    total + (1.0 - (xs - total).exp()).ln()
                };
                log_sum_exp(xs + stay, rest + jump)
            })
            .collect()
    };

    let mut alpha = Array2::<f64>::zeros((t_len, c));
    alpha.row_mut(0).assign(&emit.row(0));
    for t in 1..t_len {
        let prev = alpha.row(t - 1).to_vec();
        let moved = propagate(&prev);
        let norm = lse(&moved);
        for s in 0..c {
            alpha[[t, s]] = moved[s] - norm + emit[[t, s]];
        }
    }
    let mut beta = Array2::<f64>::zeros((t_len, c));
    for t in (0..t_len.saturating_sub(1)).rev() {
        let x: Vec<f64> = (0..c).map(|s| beta[[t + 1, s]] + emit[[t + 1, s]]).collect();
        let moved = propagate(&x);
        let norm = lse(&moved);
        for s in 0..c {
            beta[[t, s]] = moved[s] - norm;
        }
    }
    let mut out = &alpha + &beta;
    for mut row in out.rows_mut() {
        let norm = lse(row.as_slice().unwrap());
        row.mapv_inplace(|v| (v - norm).exp());
    }
    out
}

/// Smooths a posteriorgram (frames × classes) into a class sequence.
pub fn viterbi_smooth(post: ArrayView2<'_, f64>, cfg: &DecoderConfig) -> Result<Vec<ChordId>, DecodeError> {
    check(post, cfg)?;
    let path = match cfg.method {
        DecodeMethod::Viterbi => viterbi_path(post, cfg),
        DecodeMethod::MaxMarginal => marginals(post, cfg)
            .rows()
            .into_iter()
            .map(|r| argmax(r.iter().copied()))
            .collect(),
    };
    Ok(path.into_iter().map(|s| ChordId(s as u16)).collect())
}

/// Smooths many songs, one task per song.
pub fn smooth_batch(
    exec: Execution,
    posts: &[Array2<f64>],
    cfg: &DecoderConfig,
) -> Result<Vec<Vec<ChordId>>, DecodeError> {
    par::map(exec, posts, |p| viterbi_smooth(p.view(), cfg))
        .into_iter()
        .collect()
}

/// Index of the maximum; lowest index on ties.
pub fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn count_transitions(ids: &[ChordId]) -> Result<usize, DecodeError> {
    if ids.is_empty() {
        return Err(DecodeError::EmptySequence);
    }
    Ok(ids.windows(2).filter(|w| w[0] != w[1]).count())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncorrectRegion {
    pub start: usize,
    pub length: usize,
    pub predicted: ChordId,
}

/// Maximal runs of wrong frames that share one predicted class.
pub fn incorrect_regions(pred: &[ChordId], truth: &[ChordId]) -> Result<Vec<IncorrectRegion>, DecodeError> {
    if pred.len() != truth.len() {
        return Err(DecodeError::LengthMismatch(pred.len(), truth.len()));
    }
    let mut regions: Vec<IncorrectRegion> = Vec::new();
    let mut open = false;
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        if p == t {
            open = false;
            continue;
        }
        match regions.last_mut() {
            Some(r) if open && r.predicted == p => r.length += 1,
            _ => regions.push(IncorrectRegion {
                start: i,
                length: 1,
                predicted: p,
            }),
        }
        open = true;
    }
    Ok(regions)
}
