//! Two-dimensional embedding `(X, Y)`, its arc length, zero-protophase signal
//! features, and the arc-length protophase.

use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::series::{check_strictly_increasing, GriddedSignal};

pub const MIN_FEATURES: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub grid: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl Embedding {
    pub fn new(grid: Vec<f64>, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if grid.len() != x.len() || x.len() != y.len() {
            return Err(Error::InvalidArgument("embedding components differ in length".into()));
        }
        check_strictly_increasing(&grid)?;
        Ok(Self { grid, x, y })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Number of sign changes of the discrete curvature (turning direction)
    /// along the curve. A simple loop has none; every small noise-induced loop
    /// adds two. Turns whose sine is below [`MIN_TURN`] keep the previous
    /// direction, so rounding along nearly straight stretches is not counted.
    pub fn curvature_sign_changes(&self) -> usize {
        self.turn_sign_changes(MIN_TURN)
    }

    pub fn turn_sign_changes(&self, min_turn: f64) -> usize {
        let mut changes = 0;
        let mut last = 0.0f64;
        for i in 1..self.len().saturating_sub(1) {
            let (ax, ay) = (self.x[i] - self.x[i - 1], self.y[i] - self.y[i - 1]);
            let (bx, by) = (self.x[i + 1] - self.x[i], self.y[i + 1] - self.y[i]);
            let cross = ax * by - ay * bx;
            let norm = ax.hypot(ay) * bx.hypot(by);
            if cross.abs() > min_turn * norm {
                if last != 0.0 && cross.signum() != last.signum() {
                    changes += 1;
                }
                last = cross;
            }
        }
        changes
    }
}

/// Sine of the smallest turning angle that counts towards curvature sign changes.
pub const MIN_TURN: f64 = 1e-2;

/// Cumulative chord length of an embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct ArcLength {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Segments whose end points coincided; they were given a negligible
    /// positive length so the arc length stays strictly increasing.
    pub merged: Vec<usize>,
}

impl ArcLength {
    pub fn total(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    pub fn as_signal(&self) -> GriddedSignal {
        GriddedSignal { grid: self.grid.clone(), values: self.values.clone() }
    }
}

const MERGED_CHORD_FRACTION: f64 = 1e-6;

/// `L(t_i) = sum_{k<i} sqrt(dx_k^2 + dy_k^2)`, the chord discretization of
/// `int sqrt(X'^2 + Y'^2) dt`.
pub fn arc_length(emb: &Embedding) -> ArcLength {
    let n = emb.len();
    let chords: Vec<f64> = (1..n).map(|i| (emb.x[i] - emb.x[i - 1]).hypot(emb.y[i] - emb.y[i - 1])).collect();
    let positive: Vec<f64> = chords.iter().copied().filter(|&c| c > 0.0).collect();
    let mean_chord = if positive.is_empty() { 1.0 } else { positive.iter().sum::<f64>() / positive.len() as f64 };
    let mut merged = Vec::new();
    let mut values = Vec::with_capacity(n);
    let mut acc = 0.0;
    if n > 0 {
        values.push(0.0);
    }
    for (k, &c) in chords.iter().enumerate() {
        let step = if c > 0.0 {
            c
        } else {
            merged.push(k + 1);
            MERGED_CHORD_FRACTION * mean_chord
        };
        acc += step;
        values.push(acc);
    }
    ArcLength { grid: emb.grid.clone(), values, merged }
}

/// Sample positions attributed to zero protophase (mod 2 pi).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Sample index of each selected local maximum.
    pub indices: Vec<usize>,
    /// Fractional sample position after parabolic refinement of the maximum.
    pub positions: Vec<f64>,
    /// Grid coordinate at `positions`.
    pub times: Vec<f64>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureOptions {
    /// Maxima must exceed this quantile of the signal values.
    pub quantile: f64,
    /// Minimum separation as a fraction of the median inter-maximum spacing.
    pub refractory: f64,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self { quantile: 0.75, refractory: 0.5 }
    }
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// Greedy non-maximum suppression: strongest maxima first.
fn suppress(cands: &[usize], sig: &GriddedSignal, min_sep: f64) -> Vec<usize> {
    let mut order: Vec<usize> = cands.to_vec();
    order.sort_by(|&a, &b| sig.values[b].total_cmp(&sig.values[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let t = sig.grid[i];
        let pos = kept.partition_point(|&k| sig.grid[k] < t);
        let near_left = pos > 0 && t - sig.grid[kept[pos - 1]] < min_sep;
        let near_right = pos < kept.len() && sig.grid[kept[pos]] - t < min_sep;
        if !near_left && !near_right {
            kept.insert(pos, i);
        }
    }
    kept
}

/// Dominant local maxima: one per excursion above the value quantile, at least
/// `refractory * median spacing` apart. The spacing estimate is refined until
/// the selection is stable, which collapses clusters of noise maxima and the
/// secondary maxima of multi-component waveforms to one feature per period.
pub fn detect_features(sig: &GriddedSignal, opts: FeatureOptions) -> Result<FeatureSet> {
    if !(0.0..1.0).contains(&opts.quantile) || !(opts.refractory >= 0.0) {
        return Err(Error::InvalidArgument("quantile must be in [0, 1) and refractory >= 0".into()));
    }
    let n = sig.len();
    if n < 3 {
        return Err(Error::InsufficientFeatures { found: 0, needed: MIN_FEATURES });
    }
    let x = &sig.values;
    let level = quantile(x, opts.quantile);
    // strongest sample of each excursion above the level, if it is a local maximum
    let mut cands: Vec<usize> = Vec::new();
    let mut i = 0;
    while i < n {
        if x[i] <= level {
            i += 1;
            continue;
        }
        let mut best = i;
        while i < n && x[i] > level {
            if x[i] > x[best] {
                best = i;
            }
            i += 1;
        }
        if best > 0 && best < n - 1 && x[best] > x[best - 1] && x[best] >= x[best + 1] {
            cands.push(best);
        }
    }
    if cands.len() < MIN_FEATURES {
        return Err(Error::InsufficientFeatures { found: cands.len(), needed: MIN_FEATURES });
    }

    let mut kept = cands.clone();
    let mut min_sep = 0.0;
    for _ in 0..32 {
        if kept.len() < 2 {
            break;
        }
        let spacing = median(kept.windows(2).map(|w| sig.grid[w[1]] - sig.grid[w[0]]).collect());
        let sep = opts.refractory * spacing;
        if sep <= min_sep {
            break;
        }
        min_sep = sep;
        kept = suppress(&cands, sig, min_sep);
    }
    if kept.len() < MIN_FEATURES {
        return Err(Error::InsufficientFeatures { found: kept.len(), needed: MIN_FEATURES });
    }

    let mut positions = Vec::with_capacity(kept.len());
    let mut times = Vec::with_capacity(kept.len());
    for &i in &kept {
        let curv = x[i - 1] - 2.0 * x[i] + x[i + 1];
        let delta = if curv < 0.0 { (0.5 * (x[i - 1] - x[i + 1]) / curv).clamp(-0.5, 0.5) } else { 0.0 };
        let pos = i as f64 + delta;
        positions.push(pos);
        times.push(lerp_at(&sig.grid, pos));
    }
    Ok(FeatureSet { indices: kept, positions, times })
}

/// Linear interpolation of `values` at a fractional sample position.
pub fn lerp_at(values: &[f64], pos: f64) -> f64 {
    let last = values.len() - 1;
    let i = (pos.floor().max(0.0) as usize).min(last.saturating_sub(1));
    let f = pos - i as f64;
    values[i] + f * (values[(i + 1).min(last)] - values[i])
}

/// Spline protophase over arc length.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthProtophase {
    /// Arc length at each feature.
    pub knots: Vec<f64>,
    /// Protophase at every sample; equals `2 pi j` at knot `j`.
    pub theta: Vec<f64>,
}

/// Monotone cubic spline through `(L(t_j), 2 pi j)`, evaluated at every sample,
/// continued linearly with the slope of the adjacent knot interval outside the
/// first and last feature.
pub fn protophase_from_length(length: &[f64], feats: &FeatureSet) -> Result<LengthProtophase> {
    if feats.len() < MIN_FEATURES {
        return Err(Error::InsufficientFeatures { found: feats.len(), needed: MIN_FEATURES });
    }
    let knots: Vec<f64> = feats.positions.iter().map(|&p| lerp_at(length, p)).collect();
    check_strictly_increasing(&knots).map_err(|_| Error::InternalInvariant("arc length is not increasing between features".into()))?;
    let targets: Vec<f64> = (0..knots.len()).map(|j| TAU * j as f64).collect();
    let spline = Pchip::new(&knots, &targets)?;
    let m = knots.len();
    let first_slope = TAU / (knots[1] - knots[0]);
    let last_slope = TAU / (knots[m - 1] - knots[m - 2]);
    let (l_first, l_last) = (knots[0], knots[m - 1]);

    let inside_start = length.partition_point(|&l| l < l_first);
    let inside_end = length.partition_point(|&l| l <= l_last);
    let mut theta = Vec::with_capacity(length.len());
    theta.extend(length[..inside_start].iter().map(|&l| first_slope * (l - l_first)));
    theta.extend(spline.eval_sorted(&length[inside_start..inside_end]));
    theta.extend(length[inside_end..].iter().map(|&l| targets[m - 1] + last_slope * (l - l_last)));

    if let Some(i) = theta.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::InternalInvariant(format!("protophase not strictly increasing at sample {}", i + 1)));
    }
    Ok(LengthProtophase { knots, theta })
}
