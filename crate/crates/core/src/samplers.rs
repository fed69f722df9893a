//! Perturbation direction samplers.
//!
//! Every iteration draws an `L x d` set of directions. The four IID families
//! (GS, BeS and their shrinkage variants) differ only in the entry
//! distribution; Orthogonal ES post-processes Gaussian rows with Gram-Schmidt
//! and Guided ES biases a Gaussian toward the span of recent gradients.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{invalid, Error, Result};
use crate::linalg::{axpy, dot, norm_sq, orthonormal_basis, scale};
use crate::randomness::RngStream;

/// Default Guided ES mixing weight once the gradient buffer is full.
pub const GUIDED_ALPHA: f64 = 0.5;

/// Gram-Schmidt residual below which a row counts as linearly dependent.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Gs,
    Bes,
    GsShrinkage,
    BesShrinkage,
    OrthogonalEs,
    GuidedEs,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 6] = [
        SamplerKind::Gs,
        SamplerKind::Bes,
        SamplerKind::GsShrinkage,
        SamplerKind::BesShrinkage,
        SamplerKind::OrthogonalEs,
        SamplerKind::GuidedEs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Gs => "gs",
            SamplerKind::Bes => "bes",
            SamplerKind::GsShrinkage => "gs-shrinkage",
            SamplerKind::BesShrinkage => "bes-shrinkage",
            SamplerKind::OrthogonalEs => "orthogonal",
            SamplerKind::GuidedEs => "guided",
        }
    }

    /// Whether direction entries are IID, which the closed-form MSE needs.
    pub fn is_iid(self) -> bool {
        !matches!(self, SamplerKind::OrthogonalEs | SamplerKind::GuidedEs)
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid("algo", alloc::format!("unknown algorithm `{s}`")))
    }
}

/// `L / (L + d + 1)`, the variance minimizing the gradient part of the GS MSE.
pub fn gs_shrinkage_variance(l: usize, d: usize) -> f64 {
    let l = l as f64;
    l / (l + d as f64 + 1.0)
}

/// `sqrt((L + d - 1) / (4L))`, the Bernoulli scale with `p = 0.5` minimizing
/// the gradient part of the BeS MSE. Only valid when `L + d > 5`.
pub fn bes_shrinkage_scale(l: usize, d: usize) -> Result<f64> {
    if l == 0 || d == 0 {
        return Err(invalid("L/d", "must both be at least 1"));
    }
    if l + d <= 5 {
        return Err(Error::Hypothesis(alloc::format!(
            "Bernoulli shrinkage needs L + d > 5, got L={l}, d={d}"
        )));
    }
    Ok((((l + d - 1) as f64) / (4.0 * l as f64)).sqrt())
}

/// Guided ES subspace size: 50, or 10 for problems with fewer than 50 dimensions.
pub fn guided_subspace_dim(d: usize) -> usize {
    if d >= 50 {
        50
    } else {
        10
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplerSpec {
    pub kind: SamplerKind,
    pub gaussian_variance: f64,
    pub bernoulli_p: f64,
    pub bernoulli_scale: f64,
    pub guided_alpha: f64,
    pub guided_subspace_dim: usize,
    guided_buffer: VecDeque<Vec<f64>>,
    guided_warm: bool,
}

impl SamplerSpec {
    /// Spec for `kind` at `L` directions in `d` dimensions. Shrinkage
    /// parameters are derived from `(L, d)` here.
    pub fn new(kind: SamplerKind, l: usize, d: usize) -> Result<Self> {
        if l == 0 {
            return Err(invalid("L", "must be at least 1"));
        }
        if d == 0 {
            return Err(invalid("d", "must be at least 1"));
        }
        let mut spec = SamplerSpec {
            kind,
            gaussian_variance: 1.0,
            bernoulli_p: 0.5,
            bernoulli_scale: 0.5,
            guided_alpha: GUIDED_ALPHA,
            guided_subspace_dim: guided_subspace_dim(d),
            guided_buffer: VecDeque::new(),
            guided_warm: false,
        };
        match kind {
            SamplerKind::GsShrinkage => spec.gaussian_variance = gs_shrinkage_variance(l, d),
            SamplerKind::BesShrinkage => spec.bernoulli_scale = bes_shrinkage_scale(l, d)?,
            _ => {}
        }
        Ok(spec)
    }

    pub fn with_guided(mut self, alpha: f64, subspace_dim: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid("guided_alpha", "must lie in [0, 1]"));
        }
        if subspace_dim == 0 {
            return Err(invalid("guided_subspace_dim", "must be at least 1"));
        }
        self.guided_alpha = alpha;
        self.guided_subspace_dim = subspace_dim;
        Ok(self)
    }

    /// Variance of a single Bernoulli entry, `p(1-p)/m^2`.
    pub fn bernoulli_variance(&self) -> f64 {
        let p = self.bernoulli_p;
        p * (1.0 - p) / (self.bernoulli_scale * self.bernoulli_scale)
    }

    pub fn guided_buffer(&self) -> impl Iterator<Item = &[f64]> {
        self.guided_buffer.iter().map(Vec::as_slice)
    }

    pub fn guided_buffer_len(&self) -> usize {
        self.guided_buffer.len()
    }

    /// Mixing weight in effect: 1 until the buffer first fills.
    pub fn effective_alpha(&self) -> f64 {
        if self.guided_warm {
            self.guided_alpha
        } else {
            1.0
        }
    }

    /// Push a gradient estimate into the Guided ES buffer (FIFO, capacity
    /// `guided_subspace_dim`). Zero vectors are ignored.
    pub fn guided_update(&mut self, gradient: &[f64]) {
        if norm_sq(gradient) == 0.0 {
            return;
        }
        self.guided_buffer.push_back(gradient.to_vec());
        while self.guided_buffer.len() > self.guided_subspace_dim {
            self.guided_buffer.pop_front();
        }
        if self.guided_buffer.len() == self.guided_subspace_dim {
            self.guided_warm = true;
        }
    }

    fn snapshot(&self) -> SamplerSnapshot {
        SamplerSnapshot {
            kind: self.kind,
            gaussian_variance: self.gaussian_variance,
            bernoulli_p: self.bernoulli_p,
            bernoulli_scale: self.bernoulli_scale,
            alpha: self.effective_alpha(),
        }
    }
}

/// The sampler parameters a direction set was drawn with.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerSnapshot {
    pub kind: SamplerKind,
    pub gaussian_variance: f64,
    pub bernoulli_p: f64,
    pub bernoulli_scale: f64,
    pub alpha: f64,
}

/// `L x d` directions stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSet {
    data: Vec<f64>,
    l: usize,
    d: usize,
    pub spec: SamplerSnapshot,
}

impl DirectionSet {
    pub fn from_rows(rows: &[Vec<f64>], spec: SamplerSnapshot) -> Result<Self> {
        let l = rows.len();
        if l == 0 {
            return Err(invalid("directions", "need at least one row"));
        }
        let d = rows[0].len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return Err(invalid("directions", "rows must share a positive length"));
        }
        Ok(Self {
            data: rows.concat(),
            l,
            d,
            spec,
        })
    }

    pub fn len(&self) -> usize {
        self.l
    }

    pub fn is_empty(&self) -> bool {
        self.l == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }

    fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Draw `L` directions in `d` dimensions from `spec`.
pub fn sample_directions(
    spec: &SamplerSpec,
    l: usize,
    d: usize,
    stream: &RngStream,
) -> Result<DirectionSet> {
    if l == 0 {
        return Err(invalid("L", "must be at least 1"));
    }
    if d == 0 {
        return Err(invalid("d", "must be at least 1"));
    }
    let mut rng = stream.clone();
    let mut set = DirectionSet {
        data: alloc::vec![0.0; l * d],
        l,
        d,
        spec: spec.snapshot(),
    };
    match spec.kind {
        SamplerKind::Gs | SamplerKind::GsShrinkage => {
            let sd = spec.gaussian_variance.sqrt();
            rng.fill_normal(&mut set.data);
            if sd != 1.0 {
                scale(sd, &mut set.data);
            }
        }
        SamplerKind::Bes | SamplerKind::BesShrinkage => {
            if spec.kind == SamplerKind::BesShrinkage && l + d <= 5 {
                bes_shrinkage_scale(l, d)?;
            }
            rng.fill_bernoulli_standardized(&mut set.data, spec.bernoulli_p, spec.bernoulli_scale)?;
        }
        SamplerKind::OrthogonalEs => {
            // Resample on (measure-zero) rank deficiency.
            let mut attempt = 0u64;
            loop {
                let mut draw = stream.derive(attempt);
                draw.fill_normal(&mut set.data);
                match orthogonalize(&set) {
                    Ok(done) => return Ok(done),
                    Err(Error::RankDeficient { .. }) if attempt < 16 => attempt += 1,
                    Err(e) => return Err(e),
                }
            }
        }
        SamplerKind::GuidedEs => {
            let alpha = spec.effective_alpha();
            let k = spec.guided_subspace_dim as f64;
            let iso = (alpha / d as f64).sqrt();
            rng.fill_normal(&mut set.data);
            scale(iso, &mut set.data);
            if alpha < 1.0 {
                let basis = orthonormal_basis(spec.guided_buffer(), RANK_TOL);
                let sub = ((1.0 - alpha) / k).sqrt();
                for i in 0..l {
                    let row = set.row_mut(i);
                    for q in &basis {
                        let nu = rng.normal();
                        axpy(sub * nu, q, row);
                    }
                }
            }
        }
    }
    Ok(set)
}

/// Gram-Schmidt the rows, then rescale each row back to its original norm.
///
/// Sets with more rows than dimensions are processed in independent blocks
/// of `d` rows.
pub fn orthogonalize(raw: &DirectionSet) -> Result<DirectionSet> {
    let d = raw.d;
    let mut out = raw.clone();
    for block_start in (0..raw.l).step_by(d) {
        let block_end = (block_start + d).min(raw.l);
        for i in block_start..block_end {
            let norm0 = norm_sq(raw.row(i)).sqrt();
            let mut r = raw.row(i).to_vec();
            for j in block_start..i {
                let q = out.row(j);
                let proj = dot(&r, q) / norm_sq(q);
                axpy(-proj, q, &mut r);
            }
            let residual = norm_sq(&r).sqrt();
            if residual < RANK_TOL {
                return Err(Error::RankDeficient { row: i, residual });
            }
            scale(norm0 / residual, &mut r);
            out.row_mut(i).copy_from_slice(&r);
        }
    }
    Ok(out)
}
