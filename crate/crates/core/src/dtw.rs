//! Exact dynamic time warping and FastDTW over frame sequences with a
//! pluggable frame distance.
//!
//! Steps are `(1,0)`, `(0,1)` and `(1,1)` with no slope weights. Detection
//! scores divide the accumulated cost by the warp-path length so one
//! threshold serves utterances of any duration.

use serde::{Deserialize, Serialize};

use crate::dsp::MelSpectrogram;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::verdict::DetectionVerdict;

pub const DEFAULT_RADIUS: usize = 2;

/// Monotone alignment from `(0, 0)` to `(len_a − 1, len_b − 1)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpPath(pub Vec<(usize, usize)>);

impl WarpPath {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.0
    }

    /// Checks the start, end and unit-step rules for sequences of the given
    /// lengths.
    pub fn is_valid(&self, len_a: usize, len_b: usize) -> bool {
        let p = &self.0;
        if p.first() != Some(&(0, 0)) || p.last() != Some(&(len_a - 1, len_b - 1)) {
            return false;
        }
        p.windows(2).all(|w| {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult<T> {
    pub cost: T,
    pub path: WarpPath,
}

impl<T: Real> DtwResult<T> {
    /// Accumulated cost divided by the number of path steps.
    pub fn normalized_cost(&self) -> T {
        self.cost / T::from_len(self.path.len())
    }
}

/// Per-row admissible column ranges `[lo, hi]` for constrained DTW.
#[derive(Debug, Clone)]
struct Window {
    ranges: Vec<(usize, usize)>,
}

impl Window {
    fn full(n: usize, m: usize) -> Self {
        Self {
            ranges: vec![(0, m - 1); n],
        }
    }

    fn contains(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = self.ranges[i];
        j >= lo && j <= hi
    }
}

fn constrained_dtw<F, T, D>(a: &[F], b: &[F], window: &Window, dist: &D) -> DtwResult<T>
where
    T: Real,
    D: Fn(&F, &F) -> T,
{
    let (n, m) = (a.len(), b.len());
    let inf = T::infinity();
    let mut acc = vec![inf; n * m];
    for i in 0..n {
        let (lo, hi) = window.ranges[i];
        for j in lo..=hi {
            let d = dist(&a[i], &b[j]);
            let best = if i == 0 && j == 0 {
                T::zero()
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { inf };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { inf };
                let left = if j > 0 { acc[i * m + j - 1] } else { inf };
                diag.min(up).min(left)
            };
            acc[i * m + j] = best + d;
        }
    }

    // Backtrack preferring the diagonal, then (i−1, j), then (i, j−1).
    let mut path = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while i > 0 || j > 0 {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { inf };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { inf };
        let left = if j > 0 { acc[i * m + j - 1] } else { inf };
        if i > 0 && j > 0 && diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if i > 0 && up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    DtwResult {
        cost: acc[n * m - 1],
        path: WarpPath(path),
    }
}

/// Exact DTW: minimal accumulated frame distance over all monotone
/// alignments.
pub fn dtw<F, T, D>(a: &[F], b: &[F], dist: D) -> Result<DtwResult<T>>
where
    T: Real,
    D: Fn(&F, &F) -> T,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("dtw input sequence".into()));
    }
    Ok(constrained_dtw(a, b, &Window::full(a.len(), b.len()), &dist))
}

fn coarsen<T: Real, F: AsRef<[T]>>(frames: &[F]) -> Vec<Vec<T>> {
    let half = T::lit(0.5);
    frames
        .chunks(2)
        .map(|pair| match pair {
            [x, y] => x
                .as_ref()
                .iter()
                .zip(y.as_ref())
                .map(|(&p, &q)| (p + q) * half)
                .collect(),
            [x] => x.as_ref().to_vec(),
            _ => unreachable!(),
        })
        .collect()
}

/// Projects a low-resolution path onto the next resolution, widened by
/// `radius` cells at the coarse level.
fn expand_window(path: &WarpPath, n: usize, m: usize, radius: usize) -> Window {
    let mut ranges: Vec<Option<(usize, usize)>> = vec![None; n];
    let r = radius as isize;
    for &(ci, cj) in path.pairs() {
        for di in -r..=r {
            let li = ci as isize + di;
            if li < 0 {
                continue;
            }
            let (jlo, jhi) = ((cj as isize - r).max(0) as usize, cj + radius);
            for hi_i in [2 * li as usize, 2 * li as usize + 1] {
                if hi_i >= n {
                    continue;
                }
                let lo = (2 * jlo).min(m - 1);
                let hi = (2 * jhi + 1).min(m - 1);
                let slot = &mut ranges[hi_i];
                *slot = Some(match *slot {
                    None => (lo, hi),
                    Some((a, b)) => (a.min(lo), b.max(hi)),
                });
            }
        }
    }
    // Every row is covered by the projection of a connected coarse path; the
    // fallback only guards degenerate shapes.
    Window {
        ranges: ranges
            .into_iter()
            .map(|r| r.unwrap_or((0, m - 1)))
            .collect(),
    }
}

/// FastDTW: recursively aligns half-resolution copies (pairwise frame means),
/// projects the coarse path, and refines exactly inside the projected band.
/// When `radius + 2 >= min(len_a, len_b)` the exact recursion runs directly.
pub fn fast_dtw<F, T, D>(a: &[F], b: &[F], radius: usize, dist: D) -> Result<DtwResult<T>>
where
    T: Real,
    F: AsRef<[T]>,
    D: Fn(&[T], &[T]) -> T,
{
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("fast_dtw input sequence".into()));
    }
    let a: Vec<&[T]> = a.iter().map(AsRef::as_ref).collect();
    let b: Vec<&[T]> = b.iter().map(AsRef::as_ref).collect();
    Ok(fast_dtw_rec(&a, &b, radius, &dist))
}

fn fast_dtw_rec<T, D>(a: &[&[T]], b: &[&[T]], radius: usize, dist: &D) -> DtwResult<T>
where
    T: Real,
    D: Fn(&[T], &[T]) -> T,
{
    let (n, m) = (a.len(), b.len());
    let frame_dist = |x: &&[T], y: &&[T]| dist(x, y);
    let min_size = radius + 2;
    if n <= min_size || m <= min_size {
        return constrained_dtw(a, b, &Window::full(n, m), &frame_dist);
    }
    let ca = coarsen(a);
    let cb = coarsen(b);
    let ca_ref: Vec<&[T]> = ca.iter().map(Vec::as_slice).collect();
    let cb_ref: Vec<&[T]> = cb.iter().map(Vec::as_slice).collect();
    let coarse = fast_dtw_rec(&ca_ref, &cb_ref, radius, dist);
    let window = expand_window(&coarse.path, n, m, radius);
    debug_assert!(window.contains(0, 0) && window.contains(n - 1, m - 1));
    constrained_dtw(a, b, &window, &frame_dist)
}

pub fn euclidean<T: Real>(x: &[T], y: &[T]) -> T {
    squared_euclidean(x, y).sqrt()
}

pub fn squared_euclidean<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&p, &q)| (p - q) * (p - q)).sum()
}

/// Raw-DTW baseline detector over Mel frames with Euclidean frame distance.
/// `radius = None` runs exact DTW; `Some(r)` runs FastDTW with radius `r`.
pub fn dtw_score<T: Real>(
    user: &MelSpectrogram<T>,
    tts: &MelSpectrogram<T>,
    radius: Option<usize>,
) -> Result<T> {
    if user.n_mels() != tts.n_mels() {
        return Err(Error::shape(format!(
            "n_mels differ: {} vs {}",
            user.n_mels(),
            tts.n_mels()
        )));
    }
    let result = match radius {
        Some(r) => fast_dtw(user.frames(), tts.frames(), r, euclidean)?,
        None => dtw(user.frames(), tts.frames(), |x: &Vec<T>, y: &Vec<T>| euclidean(x, y))?,
    };
    Ok(result.normalized_cost())
}

/// FastDTW (default radius) baseline verdict.
pub fn dtw_detect<T: Real>(
    user: &MelSpectrogram<T>,
    tts: &MelSpectrogram<T>,
    threshold: T,
) -> Result<DetectionVerdict<T>> {
    DetectionVerdict::new(dtw_score(user, tts, Some(DEFAULT_RADIUS))?, threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs(x: &f64, y: &f64) -> f64 {
        (x - y).abs()
    }

    #[test]
    fn identical_is_zero_on_diagonal() {
        let a = [1.0, 2.0, 3.0, 2.0];
        let r = dtw(&a, &a, abs).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path.pairs(), &[(0, 0), (1, 1), (2, 2), (3, 3)]);
    }

    #[test]
    fn single_frame_against_ramp() {
        let r = dtw(&[0.0], &[0.0, 1.0, 2.0], abs).unwrap();
        assert_eq!(r.cost, 3.0);
        assert_eq!(r.path.pairs(), &[(0, 0), (0, 1), (0, 2)]);
        assert!(r.path.is_valid(1, 3));
    }

    #[test]
    fn empty_rejected() {
        let e: [f64; 0] = [];
        assert!(dtw(&e, &[1.0], abs).is_err());
        let f: [Vec<f64>; 0] = [];
        assert!(fast_dtw(&f, &[vec![1.0]], 1, euclidean).is_err());
    }

    #[test]
    fn fast_dtw_identical_inputs_cost_zero() {
        let a: Vec<Vec<f64>> = (0..40).map(|i| vec![(i as f64 * 0.3).sin(), i as f64]).collect();
        for radius in 0..4 {
            let r = fast_dtw(&a, &a, radius, euclidean).unwrap();
            assert_eq!(r.cost, 0.0);
            assert!(r.path.is_valid(40, 40));
        }
    }

    #[test]
    fn fast_dtw_path_is_valid_for_odd_lengths() {
        let a: Vec<Vec<f64>> = (0..37).map(|i| vec![(i as f64 * 0.2).cos()]).collect();
        let b: Vec<Vec<f64>> = (0..23).map(|i| vec![(i as f64 * 0.33).cos()]).collect();
        let r = fast_dtw(&a, &b, 1, euclidean).unwrap();
        assert!(r.path.is_valid(37, 23));
        let sum: f64 = r.path.pairs().iter().map(|&(i, j)| euclidean(&a[i], &b[j])).sum();
        assert!((sum - r.cost).abs() < 1e-9);
    }

    #[test]
    fn single_precision_kernel() {
        let a: Vec<Vec<f32>> = vec![vec![0.0], vec![1.0]];
        let r = fast_dtw(&a, &a, 2, euclidean).unwrap();
        assert_eq!(r.cost, 0.0f32);
    }
}
