//! Conditioning-tensor layout: latent concatenation and token assembly.
//!
//! Clip tokens are ordered frame-major, view-minor (token `t·N + i` belongs
//! to frame `t`, view `i`); text tokens follow all clip tokens. Every
//! embedding is added in the shared dimension `d`, never concatenated.

use ndarray::{concatenate, s, Array1, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::stream_indexed;

pub const MAX_CONDITION_TOKENS: usize = 512;
/// Side of the average-pooling grid used by [`stub_encode`].
pub const STUB_GRID: usize = 4;
const STUB_SEED: u64 = 0x5eed_c11b;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConditioningError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{requested} conditioning tokens exceed the budget of {limit}")]
    TokenBudgetExceeded { requested: usize, limit: usize },
}

fn mismatch<T>(msg: impl Into<String>) -> Result<T, ConditioningError> {
    Err(ConditioningError::ShapeMismatch(msg.into()))
}

/// Wrist latent and condition latent, both `C×H×W`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentFrame {
    pub z_w: Array3<f64>,
    pub z_c: Array3<f64>,
}

/// Stack `z_w` over `z_c` along the channel axis.
pub fn concat_latents(frame: &LatentFrame) -> Result<Array3<f64>, ConditioningError> {
    if frame.z_w.dim() != frame.z_c.dim() {
        return mismatch(format!("z_w {:?} vs z_c {:?}", frame.z_w.dim(), frame.z_c.dim()));
    }
    if frame.z_w.iter().chain(frame.z_c.iter()).any(|v| !v.is_finite()) {
        return mismatch("latents contain non-finite values");
    }
    Ok(concatenate(Axis(0), &[frame.z_w.view(), frame.z_c.view()]).expect("shapes checked"))
}

/// Inverse of [`concat_latents`].
pub fn split_latents(z: &Array3<f64>) -> Result<LatentFrame, ConditioningError> {
    let c2 = z.dim().0;
    if !c2.is_multiple_of(2) {
        return mismatch(format!("odd channel count {c2}"));
    }
    let c = c2 / 2;
    Ok(LatentFrame { z_w: z.slice(s![..c, .., ..]).to_owned(), z_c: z.slice(s![c.., .., ..]).to_owned() })
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64, tag: &str, index: u64) -> Array2<f64> {
    let mut rng = stream_indexed(seed, tag, index);
    let scale = 1.0 / (cols.max(1) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || {
        let v: f64 = StandardNormal.sample(&mut rng);
        v * scale
    })
}

fn cell_range(g: usize, n: usize) -> (usize, usize) {
    let start = g * n / STUB_GRID;
    (start, ((g + 1) * n / STUB_GRID).max(start + 1).min(n))
}

/// Per-channel means over a `STUB_GRID × STUB_GRID` cell grid, channel-minor.
pub fn pooled_patches(image: &ArrayView3<f64>) -> Result<Array1<f64>, ConditioningError> {
    let (h, w, c) = image.dim();
    if h == 0 || w == 0 || c == 0 {
        return mismatch(format!("empty image {h}x{w}x{c}"));
    }
    let mut out = Vec::with_capacity(STUB_GRID * STUB_GRID * c);
    for gy in 0..STUB_GRID {
        let (y0, y1) = cell_range(gy, h);
        for gx in 0..STUB_GRID {
            let (x0, x1) = cell_range(gx, w);
            let cell = image.slice(s![y0..y1, x0..x1, ..]);
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            for ch in 0..c {
                out.push(cell.index_axis(Axis(2), ch).sum() / n);
            }
        }
    }
    Ok(Array1::from(out))
}

/// Deterministic stand-in image encoder: pooled patches times a fixed seeded
/// Gaussian matrix of shape `d_c × (16·channels)`.
pub fn stub_encode(image: &ArrayView3<f64>, d_c: usize) -> Result<Array1<f64>, ConditioningError> {
    let pooled = pooled_patches(image)?;
    stub_projection(pooled.len(), d_c).map(|p| p.dot(&pooled))
}

pub fn stub_projection(input_dim: usize, d_c: usize) -> Result<Array2<f64>, ConditioningError> {
    if d_c == 0 {
        return mismatch("d_c must be positive");
    }
    Ok(gaussian_matrix(d_c, input_dim, STUB_SEED, "stub-encode", input_dim as u64))
}

/// Positional tables and projections; rows of the positional tables cover
/// at least the frames, views and text positions being assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    /// `T×d`
    pub temporal: Array2<f64>,
    /// `N×d`
    pub view: Array2<f64>,
    /// `L×d`
    pub text_pos: Array2<f64>,
    /// `d×d_c`
    pub proj_clip: Array2<f64>,
    /// `d×d_text`
    pub proj_text: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableDims {
    pub frames: usize,
    pub views: usize,
    pub text_len: usize,
    pub d: usize,
    pub d_c: usize,
    pub d_text: usize,
}

impl EmbeddingTable {
    pub fn zeros(dims: TableDims) -> Self {
        let TableDims { frames, views, text_len, d, d_c, d_text } = dims;
        Self {
            temporal: Array2::zeros((frames, d)),
            view: Array2::zeros((views, d)),
            text_pos: Array2::zeros((text_len, d)),
            proj_clip: Array2::zeros((d, d_c)),
            proj_text: Array2::zeros((d, d_text)),
        }
    }

    /// Gaussian-initialized constants standing in for learned parameters.
    pub fn seeded(dims: TableDims, seed: u64) -> Self {
        let TableDims { frames, views, text_len, d, d_c, d_text } = dims;
        Self {
            temporal: gaussian_matrix(frames, d, seed, "table-temporal", 0),
            view: gaussian_matrix(views, d, seed, "table-view", 0),
            text_pos: gaussian_matrix(text_len, d, seed, "table-text-pos", 0),
            proj_clip: gaussian_matrix(d, d_c, seed, "table-proj-clip", 0),
            proj_text: gaussian_matrix(d, d_text, seed, "table-proj-text", 0),
        }
    }

    pub fn d(&self) -> usize {
        self.proj_clip.nrows()
    }

    pub fn validate(&self) -> Result<(), ConditioningError> {
        let d = self.d();
        if d == 0 {
            return mismatch("shared dimension d must be positive");
        }
        let named = [("temporal", &self.temporal), ("view", &self.view), ("text_pos", &self.text_pos)];
        for (name, t) in named {
            if t.ncols() != d {
                return mismatch(format!("{name} has {} columns, expected d = {d}", t.ncols()));
            }
        }
        if self.proj_text.nrows() != d {
            return mismatch(format!("proj_text has {} rows, expected d = {d}", self.proj_text.nrows()));
        }
        let all = [&self.temporal, &self.view, &self.text_pos, &self.proj_clip, &self.proj_text];
        if all.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return mismatch("embedding tables contain non-finite values");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TokenBundle {
    /// `(N·T)×d`, row `t·N + i`.
    pub clip_tokens: Array2<f64>,
    /// `L×d`
    pub text_tokens: Array2<f64>,
    pub d: usize,
}

impl TokenBundle {
    pub fn len(&self) -> usize {
        self.clip_tokens.nrows() + self.text_tokens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All tokens in order, clip then text.
    pub fn tokens(&self) -> Array2<f64> {
        concatenate(Axis(0), &[self.clip_tokens.view(), self.text_tokens.view()]).expect("shared d")
    }
}

/// `features` is `N×T×d_c` (view, frame, channel); `text` is `L×d_text`.
pub fn assemble_condition_tokens(
    features: &ArrayView3<f64>,
    text: &ArrayView2<f64>,
    tables: &EmbeddingTable,
) -> Result<TokenBundle, ConditioningError> {
    tables.validate()?;
    let (n, t, d_c) = features.dim();
    let (l, d_text) = text.dim();
    let requested = n * t + l;
    if requested > MAX_CONDITION_TOKENS {
        return Err(ConditioningError::TokenBudgetExceeded { requested, limit: MAX_CONDITION_TOKENS });
    }
    if d_c != tables.proj_clip.ncols() {
        return mismatch(format!("features have d_c = {d_c}, proj_clip expects {}", tables.proj_clip.ncols()));
    }
    if l > 0 && d_text != tables.proj_text.ncols() {
        return mismatch(format!("text has d_text = {d_text}, proj_text expects {}", tables.proj_text.ncols()));
    }
    if t > tables.temporal.nrows() || n > tables.view.nrows() || l > tables.text_pos.nrows() {
        return mismatch(format!(
            "(N, T, L) = ({n}, {t}, {l}) exceeds table rows ({}, {}, {})",
            tables.view.nrows(),
            tables.temporal.nrows(),
            tables.text_pos.nrows()
        ));
    }
    let d = tables.d();
    let mut clip = Array2::<f64>::zeros((n * t, d));
    for ti in 0..t {
        for vi in 0..n {
            let e = features.slice(s![vi, ti, ..]);
            let tok = tables.proj_clip.dot(&e) + tables.temporal.row(ti) + tables.view.row(vi);
            clip.row_mut(ti * n + vi).assign(&tok);
        }
    }
    let mut text_tokens = Array2::<f64>::zeros((l, d));
    for j in 0..l {
        let tok = tables.proj_text.dot(&text.row(j)) + tables.text_pos.row(j);
        text_tokens.row_mut(j).assign(&tok);
    }
    Ok(TokenBundle { clip_tokens: clip, text_tokens, d })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr3, Array};

    fn dims(n: usize, t: usize, l: usize) -> TableDims {
        TableDims { frames: t, views: n, text_len: l, d: 8, d_c: 6, d_text: 5 }
    }

    #[test]
    fn concat_single_channel() {
        let f = LatentFrame { z_w: arr3(&[[[1.0]]]), z_c: arr3(&[[[2.0]]]) };
        assert_eq!(concat_latents(&f).unwrap(), arr3(&[[[1.0]], [[2.0]]]));
        let bad = LatentFrame { z_w: Array3::zeros((1, 2, 2)), z_c: Array3::zeros((2, 2, 2)) };
        assert!(matches!(concat_latents(&bad), Err(ConditioningError::ShapeMismatch(_))));
    }

    #[test]
    fn identity_projection_single_token() {
        let mut tables = EmbeddingTable::zeros(TableDims { d: 3, d_c: 3, ..dims(1, 1, 0) });
        tables.proj_clip = Array2::eye(3);
        let f = Array::from_shape_vec((1, 1, 3), vec![0.5, -1.0, 2.0]).unwrap();
        let b = assemble_condition_tokens(&f.view(), &Array2::zeros((0, 5)).view(), &tables).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.clip_tokens.row(0).to_vec(), vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn zero_inputs_give_positional_tables() {
        let tables = EmbeddingTable::seeded(dims(2, 3, 4), 9);
        let b = assemble_condition_tokens(&Array3::zeros((2, 3, 6)).view(), &Array2::zeros((4, 5)).view(), &tables).unwrap();
        assert_eq!(b.len(), 10);
        for t in 0..3 {
            for i in 0..2 {
                let want = &tables.temporal.row(t) + &tables.view.row(i);
                assert_eq!(b.clip_tokens.row(t * 2 + i), want);
            }
        }
        assert_eq!(b.text_tokens, tables.text_pos);
    }

    #[test]
    fn budget_is_enforced() {
        let tables = EmbeddingTable::seeded(TableDims { frames: 600, views: 1, text_len: 0, d: 2, d_c: 2, d_text: 2 }, 1);
        let f = Array3::zeros((1, 513, 2));
        let err = assemble_condition_tokens(&f.view(), &Array2::zeros((0, 2)).view(), &tables).unwrap_err();
        assert_eq!(err, ConditioningError::TokenBudgetExceeded { requested: 513, limit: 512 });
    }

    #[test]
    fn stub_encoder_is_deterministic_and_sensitive() {
        let img = Array3::from_shape_fn((16, 12, 3), |(y, x, c)| ((y * 5 + x * 3 + c) % 7) as f64 / 7.0);
        let a = stub_encode(&img.view(), 32).unwrap();
        assert_eq!(a, stub_encode(&img.view(), 32).unwrap());
        let mut other = img.clone();
        other[(5, 5, 1)] += 0.25;
        assert_ne!(a, stub_encode(&other.view(), 32).unwrap());
    }

    #[test]
    fn constant_image_projects_constant_patch() {
        let img = Array3::from_elem((9, 7, 2), 0.5);
        let p = stub_projection(STUB_GRID * STUB_GRID * 2, 16).unwrap();
        let want = p.dot(&Array1::from_elem(STUB_GRID * STUB_GRID * 2, 0.5));
        assert_eq!(stub_encode(&img.view(), 16).unwrap(), want);
    }
}
