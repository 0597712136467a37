//! Low-dimensional linear codecs over norm-map populations.
//!
//! A codec is fit on a holdout set of maps the attacker can legitimately
//! measure (their own sheets). Principal axes come from the N x N Gram
//! matrix of the centered holdout rather than the d x d covariance, which is
//! exact for the span of N samples and cheap when N is small. Retained axis
//! count `m` is the smallest prefix explaining the requested variance
//! fraction of the holdout.
//!
//! Codecs compress one component field (the default: separate x and y
//! codecs) or both stacked (joint). Decoding clamps back into the unit disk
//! so any latent point yields a physically admissible map.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg;
use crate::map::NormMap;
use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// Relative eigenvalue floor: smaller Gram eigenvalues are rank noise.
const RANK_TOL: f64 = 1e-12;

/// Which projected-normal component a codec addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Component {
    X,
    Y,
}

impl Component {
    pub fn as_str(&self) -> &'static str {
        match self {
            Component::X => "x",
            Component::Y => "y",
        }
    }
}

/// Field layout a codec was fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum CodecScope {
    /// One component field, d = w*h.
    Component(Component),
    /// Both fields stacked x-then-y, d = 2*w*h.
    Joint,
}

/// Linear encoder/decoder between maps and an m-dimensional latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCodec {
    scope: CodecScope,
    width: usize,
    height: usize,
    /// Holdout mean, length d.
    mean: Vec<f64>,
    /// Orthonormal principal axes, m rows of length d.
    basis: Vec<f64>,
    /// Per-axis sample variance of the holdout, descending.
    explained_variance: Vec<f64>,
    /// Total holdout variance including discarded axes.
    total_variance: f64,
}

impl LatentCodec {
    /// Fits a codec for one component on a holdout of identically sized maps.
    /// `variance_target` in (0, 1] picks how much holdout variance the
    /// retained axes must explain.
    pub fn fit(holdout: &[NormMap], component: Component, variance_target: f64) -> Result<Self> {
        let fields = extract_fields(holdout, CodecScope::Component(component))?;
        Self::fit_fields(fields, CodecScope::Component(component), holdout, variance_target)
    }

    /// Fits a single codec over both components stacked.
    pub fn fit_joint(holdout: &[NormMap], variance_target: f64) -> Result<Self> {
        let fields = extract_fields(holdout, CodecScope::Joint)?;
        Self::fit_fields(fields, CodecScope::Joint, holdout, variance_target)
    }

    fn fit_fields(
        data: Vec<Vec<f64>>,
        scope: CodecScope,
        holdout: &[NormMap],
        variance_target: f64,
    ) -> Result<Self> {
        if !(variance_target > 0.0 && variance_target <= 1.0) {
            return Err(Error::InvalidParam("variance_target must be in (0, 1]"));
        }
        let n = data.len();
        if n < 2 {
            return Err(Error::InsufficientData { have: n, need: 2 });
        }
        let d = data[0].len();
        let (width, height) = (holdout[0].width(), holdout[0].height());

        let mut mean = vec![0.0; d];
        for row in &data {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
        let centered: Vec<Vec<f64>> = data
            .into_iter()
            .map(|mut row| {
                for (v, m) in row.iter_mut().zip(mean.iter()) {
                    *v -= m;
                }
                row
            })
            .collect();

        // Gram matrix G[i][j] = <c_i, c_j>; eigenvalues are (n-1) times the
        // sample variances along the principal axes.
        let mut gram = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let dot: f64 = centered[i]
                    .iter()
                    .zip(centered[j].iter())
                    .map(|(a, b)| a * b)
                    .sum();
                gram[i * n + j] = dot;
                gram[j * n + i] = dot;
            }
        }
        let eig = linalg::symmetric_eigen(&gram, n);
        let lead = eig.values[0].max(0.0);
        let kept: Vec<usize> = (0..n)
            .filter(|&i| eig.values[i] > RANK_TOL * lead && eig.values[i] > 0.0)
            .collect();
        if kept.is_empty() {
            return Err(Error::ConstantInput);
        }
        let total_theta: f64 = kept.iter().map(|&i| eig.values[i]).sum();
        let mut m = kept.len();
        let mut acc = 0.0;
        for (rank, &i) in kept.iter().enumerate() {
            acc += eig.values[i];
            if acc >= variance_target * total_theta - 1e-12 {
                m = rank + 1;
                break;
            }
        }

        let mut basis = vec![0.0; m * d];
        let mut explained = Vec::with_capacity(m);
        for (row, &i) in kept.iter().take(m).enumerate() {
            let theta = eig.values[i];
            let scale = 1.0 / theta.sqrt();
            let out = &mut basis[row * d..(row + 1) * d];
            for (j, sample) in centered.iter().enumerate() {
                let u = eig.vectors[i * n + j] * scale;
                if u == 0.0 {
                    continue;
                }
                for (o, v) in out.iter_mut().zip(sample.iter()) {
                    *o += u * v;
                }
            }
            // Deterministic sign: the largest-magnitude entry is positive.
            let mut arg = 0usize;
            for (k, v) in out.iter().enumerate() {
                if v.abs() > out[arg].abs() {
                    arg = k;
                }
            }
            if out[arg] < 0.0 {
                for v in out.iter_mut() {
                    *v = -*v;
                }
            }
            explained.push(theta / (n as f64 - 1.0));
        }

        Ok(LatentCodec {
            scope,
            width,
            height,
            mean,
            basis,
            explained_variance: explained,
            total_variance: total_theta / (n as f64 - 1.0),
        })
    }

    /// Rebuilds a codec from stored fields, repairing basis rounding with a
    /// Gram-Schmidt pass. Variances must be non-negative and non-increasing.
    pub fn from_raw(
        scope: CodecScope,
        width: usize,
        height: usize,
        mean: Vec<f64>,
        mut basis: Vec<f64>,
        explained_variance: Vec<f64>,
        total_variance: f64,
    ) -> Result<Self> {
        let d = match scope {
            CodecScope::Component(_) => width * height,
            CodecScope::Joint => 2 * width * height,
        };
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("codec dimensions must be positive"));
        }
        if mean.len() != d {
            return Err(Error::LengthMismatch { left: mean.len(), right: d });
        }
        let m = explained_variance.len();
        if m == 0 || basis.len() != m * d {
            return Err(Error::LengthMismatch { left: basis.len(), right: m * d });
        }
        for w in explained_variance.windows(2) {
            if w[1] > w[0] {
                return Err(Error::InvalidParam("explained variances must be non-increasing"));
            }
        }
        if explained_variance.iter().any(|&v| !(v >= 0.0)) || !(total_variance >= 0.0) {
            return Err(Error::InvalidParam("variances must be non-negative"));
        }
        linalg::orthonormalize_rows(&mut basis, m, d);
        Ok(LatentCodec {
            scope,
            width,
            height,
            mean,
            basis,
            explained_variance,
            total_variance,
        })
    }

    pub fn scope(&self) -> CodecScope {
        self.scope
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Latent dimensionality.
    pub fn m(&self) -> usize {
        self.explained_variance.len()
    }

    /// Ambient field dimensionality.
    pub fn d(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major m x d orthonormal basis.
    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Fraction of holdout variance the retained axes explain.
    pub fn explained_fraction(&self) -> f64 {
        if self.total_variance <= 0.0 {
            return 1.0;
        }
        self.explained_variance.iter().sum::<f64>() / self.total_variance
    }

    /// Projects a map's field onto the basis: z = B (x - mean).
    pub fn encode(&self, map: &NormMap) -> Result<Vec<f64>> {
        if map.dims() != (self.width, self.height) {
            return Err(Error::DimensionMismatch {
                expected: (self.width, self.height),
                got: map.dims(),
            });
        }
        let field = field_of(map, self.scope);
        let d = self.d();
        let mut z = Vec::with_capacity(self.m());
        for row in 0..self.m() {
            let b = &self.basis[row * d..(row + 1) * d];
            let mut dot = 0.0;
            for ((bv, xv), mv) in b.iter().zip(field.iter()).zip(self.mean.iter()) {
                dot += bv * (xv - mv);
            }
            z.push(dot);
        }
        Ok(z)
    }

    /// Reconstructs the raw field mean + B^T z (no disk clamping).
    pub(crate) fn decode_field(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.m() {
            return Err(Error::LengthMismatch { left: z.len(), right: self.m() });
        }
        let d = self.d();
        let mut field = self.mean.clone();
        for (row, &zv) in z.iter().enumerate() {
            if zv == 0.0 {
                continue;
            }
            let b = &self.basis[row * d..(row + 1) * d];
            for (f, bv) in field.iter_mut().zip(b.iter()) {
                *f += zv * bv;
            }
        }
        Ok(field)
    }

    /// Decodes a latent point to an admissible map. Component codecs leave
    /// the other component at zero; out-of-disk pixels are projected back.
    pub fn decode(&self, z: &[f64]) -> Result<NormMap> {
        let field = self.decode_field(z)?;
        let wh = self.width * self.height;
        match self.scope {
            CodecScope::Component(Component::X) => {
                NormMap::new_projected(self.width, self.height, field, vec![0.0; wh])
            }
            CodecScope::Component(Component::Y) => {
                NormMap::new_projected(self.width, self.height, vec![0.0; wh], field)
            }
            CodecScope::Joint => {
                let ny = field[wh..].to_vec();
                let mut nx = field;
                nx.truncate(wh);
                NormMap::new_projected(self.width, self.height, nx, ny)
            }
        }
    }
}

/// The default arrangement: one codec per component, fit on one holdout.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecPair {
    pub x: LatentCodec,
    pub y: LatentCodec,
}

impl CodecPair {
    pub fn fit(holdout: &[NormMap], variance_target: f64) -> Result<Self> {
        Ok(CodecPair {
            x: LatentCodec::fit(holdout, Component::X, variance_target)?,
            y: LatentCodec::fit(holdout, Component::Y, variance_target)?,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.x.dims()
    }

    /// Decodes both latent vectors into one admissible map.
    pub fn decode_map(&self, zx: &[f64], zy: &[f64]) -> Result<NormMap> {
        let fx = self.x.decode_field(zx)?;
        let fy = self.y.decode_field(zy)?;
        let (w, h) = self.x.dims();
        NormMap::new_projected(w, h, fx, fy)
    }

    pub fn encode_map(&self, map: &NormMap) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((self.x.encode(map)?, self.y.encode(map)?))
    }
}

fn extract_fields(holdout: &[NormMap], scope: CodecScope) -> Result<Vec<Vec<f64>>> {
    if holdout.len() < 2 {
        return Err(Error::InsufficientData { have: holdout.len(), need: 2 });
    }
    let dims = holdout[0].dims();
    for map in holdout {
        if map.dims() != dims {
            return Err(Error::DimensionMismatch { expected: dims, got: map.dims() });
        }
    }
    Ok(holdout.iter().map(|m| field_of(m, scope)).collect())
}

fn field_of(map: &NormMap, scope: CodecScope) -> Vec<f64> {
    match scope {
        CodecScope::Component(Component::X) => map.nx().to_vec(),
        CodecScope::Component(Component::Y) => map.ny().to_vec(),
        CodecScope::Joint => {
            let mut f = Vec::with_capacity(2 * map.len());
            f.extend_from_slice(map.nx());
            f.extend_from_slice(map.ny());
            f
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface::{generate_patch, true_norm_map};
    use approx::assert_relative_eq;

    fn holdout(n: usize, size: usize) -> Vec<NormMap> {
        (0..n)
            .map(|i| true_norm_map(&generate_patch(400 + i as u64, size, 2.0, 0.08).unwrap()))
            .collect()
    }

    #[test]
    fn insufficient_data_is_rejected() {
        let h = holdout(1, 32);
        assert!(matches!(
            LatentCodec::fit(&h, Component::X, 0.99),
            Err(Error::InsufficientData { have: 1, need: 2 })
        ));
    }

    #[test]
    fn variance_target_validated() {
        let h = holdout(3, 32);
        for vt in [0.0, -0.5, 1.5] {
            assert!(LatentCodec::fit(&h, Component::X, vt).is_err());
        }
    }

    #[test]
    fn basis_is_orthonormal() {
        let h = holdout(8, 32);
        let c = LatentCodec::fit(&h, Component::X, 0.99).unwrap();
        let (m, d) = (c.m(), c.d());
        for i in 0..m {
            for j in 0..m {
                let dot: f64 = (0..d)
                    .map(|k| c.basis()[i * d + k] * c.basis()[j * d + k])
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(dot, want, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn full_variance_reconstructs_holdout() {
        let h = holdout(6, 32);
        let c = LatentCodec::fit(&h, Component::X, 1.0).unwrap();
        // Six samples span at most five centered directions.
        assert!(c.m() <= 5);
        for map in &h {
            let z = c.encode(map).unwrap();
            let field = c.decode_field(&z).unwrap();
            for (a, b) in field.iter().zip(map.nx().iter()) {
                // f32 canonicalization in NormMap construction dominates.
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn variance_target_trims_axes() {
        let h = holdout(10, 32);
        let full = LatentCodec::fit(&h, Component::X, 1.0).unwrap();
        let half = LatentCodec::fit(&h, Component::X, 0.5).unwrap();
        assert!(half.m() < full.m());
        assert!(half.explained_fraction() >= 0.5);
    }

    #[test]
    fn explained_variances_descend() {
        let h = holdout(9, 32);
        let c = LatentCodec::fit(&h, Component::Y, 0.99).unwrap();
        for w in c.explained_variance().windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(c.total_variance() >= c.explained_variance().iter().sum::<f64>() - 1e-12);
    }

    #[test]
    fn encode_of_mean_is_zero() {
        let h = holdout(5, 32);
        let c = LatentCodec::fit(&h, Component::X, 0.99).unwrap();
        let zero = c.decode(&vec![0.0; c.m()]).unwrap();
        let z = c.encode(&zero).unwrap();
        for v in z {
            // Mean decode then re-encode only moves by f32 rounding.
            assert!(v.abs() < 1e-4, "residual {v}");
        }
    }

    #[test]
    fn joint_codec_round_trips_both_components() {
        let h = holdout(6, 24);
        let c = LatentCodec::fit_joint(&h, 1.0).unwrap();
        assert_eq!(c.d(), 2 * 24 * 24);
        let z = c.encode(&h[2]).unwrap();
        let back = c.decode(&z).unwrap();
        let s = crate::map::score(&back, &h[2]).unwrap();
        assert!(s.corr_x > 0.999 && s.corr_y > 0.999);
    }

    #[test]
    fn decode_clamps_into_disk() {
        let h = holdout(4, 24);
        let c = LatentCodec::fit(&h, Component::X, 1.0).unwrap();
        let z: Vec<f64> = c
            .explained_variance()
            .iter()
            .map(|v| 1000.0 * v.sqrt())
            .collect();
        let map = c.decode(&z).unwrap();
        for (x, y) in map.nx().iter().zip(map.ny().iter()) {
            assert!(x * x + y * y <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn from_raw_round_trip() {
        let h = holdout(5, 24);
        let c = LatentCodec::fit(&h, Component::X, 0.99).unwrap();
        let rebuilt = LatentCodec::from_raw(
            c.scope(),
            24,
            24,
            c.mean().to_vec(),
            c.basis().to_vec(),
            c.explained_variance().to_vec(),
            c.total_variance(),
        )
        .unwrap();
        for (a, b) in rebuilt.basis().iter().zip(c.basis().iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn from_raw_validates_shapes() {
        let bad = LatentCodec::from_raw(
            CodecScope::Component(Component::X),
            4,
            4,
            vec![0.0; 15],
            vec![0.0; 16],
            vec![1.0],
            1.0,
        );
        assert!(matches!(bad, Err(Error::LengthMismatch { .. })));
        let worse = LatentCodec::from_raw(
            CodecScope::Component(Component::X),
            4,
            4,
            vec![0.0; 16],
            vec![1.0; 32],
            vec![0.5, 1.0],
            1.0,
        );
        assert!(worse.is_err());
    }

    #[test]
    fn pair_decode_projects_joint_excess() {
        let h = holdout(4, 24);
        let pair = CodecPair::fit(&h, 1.0).unwrap();
        let zx: Vec<f64> = pair.x.explained_variance().iter().map(|v| 500.0 * v.sqrt()).collect();
        let zy: Vec<f64> = pair.y.explained_variance().iter().map(|v| 500.0 * v.sqrt()).collect();
        let map = pair.decode_map(&zx, &zy).unwrap();
        for (x, y) in map.nx().iter().zip(map.ny().iter()) {
            assert!(x * x + y * y <= 1.0 + 1e-9);
        }
    }
}
