//! The authentication feature: projected-normal maps and their similarity.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

#[allow(unused_imports)]
use num_traits::Float;

/// How far outside the unit disk a stored (nx, ny) pair may fall before the
/// strict constructor rejects it instead of projecting it back.
const DISK_SLACK: f64 = 1e-6;

/// An H x W grid of projected surface-normal components.
///
/// Per pixel, `nx` and `ny` are the x and y components of a unit normal;
/// the z component is implied as sqrt(1 - nx^2 - ny^2) and therefore every
/// pair must lie inside the unit disk. Values are canonicalized through f32
/// on construction so that the in-memory map and its serialized form (f32 on
/// disk) are bit-identical after a round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct NormMap {
    width: usize,
    height: usize,
    nx: Vec<f64>,
    ny: Vec<f64>,
}

impl NormMap {
    /// Builds a map, canonicalizing values through f32 and validating the
    /// unit-disk invariant. Pairs exceeding the disk by at most `1e-6` are
    /// projected back onto it; anything worse is rejected.
    pub fn new(width: usize, height: usize, nx: Vec<f64>, ny: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("map dimensions must be positive"));
        }
        let n = width * height;
        if nx.len() != n || ny.len() != n {
            return Err(Error::LengthMismatch {
                left: nx.len().max(ny.len()),
                right: n,
            });
        }
        let mut map = NormMap { width, height, nx, ny };
        for i in 0..n {
            let (x, y) = canonical_pair(map.nx[i], map.ny[i], DISK_SLACK)?;
            map.nx[i] = x;
            map.ny[i] = y;
        }
        Ok(map)
    }

    /// Like [`NormMap::new`] but projects any pair outside the unit disk back
    /// onto it, without a slack limit. Used by decoders whose linear
    /// reconstruction can leave the disk.
    pub fn new_projected(width: usize, height: usize, nx: Vec<f64>, ny: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParam("map dimensions must be positive"));
        }
        let n = width * height;
        if nx.len() != n || ny.len() != n {
            return Err(Error::LengthMismatch {
                left: nx.len().max(ny.len()),
                right: n,
            });
        }
        let mut map = NormMap { width, height, nx, ny };
        for i in 0..n {
            let (x, y) = canonical_pair(map.nx[i], map.ny[i], f64::INFINITY)
                .expect("projection cannot fail without a slack limit");
            map.nx[i] = x;
            map.ny[i] = y;
        }
        Ok(map)
    }

    /// All-zero map (a perfectly flat surface).
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        NormMap::new(width, height, vec![0.0; width * height], vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Pixel count per component field.
    pub fn len(&self) -> usize {
        self.nx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nx.is_empty()
    }

    /// Row-major x-component field.
    pub fn nx(&self) -> &[f64] {
        &self.nx
    }

    /// Row-major y-component field.
    pub fn ny(&self) -> &[f64] {
        &self.ny
    }
}

/// Canonicalizes one (nx, ny) pair: round through f32, then enforce the unit
/// disk. `slack` bounds how far outside the disk the input may be.
fn canonical_pair(x: f64, y: f64, slack: f64) -> Result<(f64, f64)> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::InvalidParam("norm-map component not finite"));
    }
    let mut cx = x as f32 as f64;
    let mut cy = y as f32 as f64;
    let r2 = x * x + y * y;
    if r2 > 1.0 + slack {
        return Err(Error::InvalidParam("norm-map pair outside the unit disk"));
    }
    // Projection onto the disk, repeated because the f32 rounding after the
    // scale can land marginally outside again.
    for _ in 0..8 {
        let c2 = cx * cx + cy * cy;
        if c2 <= 1.0 {
            return Ok((cx, cy));
        }
        let scale = (1.0 / c2.sqrt()) * (1.0 - 1e-7);
        cx = (cx * scale) as f32 as f64;
        cy = (cy * scale) as f32 as f64;
    }
    Err(Error::InvalidParam("norm-map pair could not be projected"))
}

/// The two per-component Pearson correlations of a comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimilarityScore {
    pub corr_x: f64,
    pub corr_y: f64,
}

impl SimilarityScore {
    /// The conservative conjunction both components must clear.
    pub fn min_component(&self) -> f64 {
        self.corr_x.min(self.corr_y)
    }
}

/// Pearson correlation coefficient of two equal-length samples.
///
/// Symmetric, and invariant to positive affine transforms of either argument.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { left: a.len(), right: b.len() });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::ConstantInput);
    }
    let mean_a = a.iter().sum::<f64>() / n as f64;
    let mean_b = b.iter().sum::<f64>() / n as f64;
    let mut ss_a = 0.0;
    let mut ss_b = 0.0;
    let mut cov = 0.0;
    for i in 0..n {
        let da = a[i] - mean_a;
        let db = b[i] - mean_b;
        ss_a += da * da;
        ss_b += db * db;
        cov += da * db;
    }
    if ss_a == 0.0 || ss_b == 0.0 {
        return Err(Error::ConstantInput);
    }
    let r = cov / (ss_a * ss_b).sqrt();
    // Rounding can push |r| marginally past 1 on perfectly collinear input.
    Ok(r.clamp(-1.0, 1.0))
}

/// Per-component similarity of two maps of equal dimensions.
pub fn score(query: &NormMap, reference: &NormMap) -> Result<SimilarityScore> {
    if query.dims() != reference.dims() {
        return Err(Error::DimensionMismatch {
            expected: reference.dims(),
            got: query.dims(),
        });
    }
    Ok(SimilarityScore {
        corr_x: pearson(query.nx(), reference.nx())?,
        corr_y: pearson(query.ny(), reference.ny())?,
    })
}

/// Mean per-pixel Euclidean distance between two maps. Provided as an
/// alternative metric only; the decision rule uses [`score`].
pub fn l2_distance(a: &NormMap, b: &NormMap) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch { expected: b.dims(), got: a.dims() });
    }
    let mut acc = 0.0;
    for i in 0..a.len() {
        let dx = a.nx()[i] - b.nx()[i];
        let dy = a.ny()[i] - b.ny()[i];
        acc += (dx * dx + dy * dy).sqrt();
    }
    Ok(acc / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_identity() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn pearson_reversal() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    }

    #[test]
    fn pearson_orthogonal_zero_mean() {
        let r = pearson(&[1.0, 0.0, -1.0, 0.0], &[0.0, 1.0, 0.0, -1.0]).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn pearson_rejects_constant_and_mismatch() {
        assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::ConstantInput));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::LengthMismatch { .. })
        ));
        assert_eq!(pearson(&[1.0], &[2.0]), Err(Error::ConstantInput));
    }

    #[test]
    fn pearson_affine_invariance() {
        let a = [0.3, -0.1, 0.7, 0.2, -0.5];
        let b = [1.0, 0.4, -0.2, 0.9, 0.1];
        let scaled: alloc::vec::Vec<f64> = a.iter().map(|v| 2.5 * v + 7.0).collect();
        let r0 = pearson(&a, &b).unwrap();
        let r1 = pearson(&scaled, &b).unwrap();
        assert!((r0 - r1).abs() < 1e-12);
    }

    fn small_map(seedish: u64) -> NormMap {
        let mut nx = alloc::vec::Vec::new();
        let mut ny = alloc::vec::Vec::new();
        let mut s = seedish;
        for _ in 0..64 {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            nx.push(((s >> 12) as f64 / (1u64 << 52) as f64 - 0.5) * 0.4);
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ny.push(((s >> 12) as f64 / (1u64 << 52) as f64 - 0.5) * 0.4);
        }
        NormMap::new(8, 8, nx, ny).unwrap()
    }

    #[test]
    fn score_self_and_negation() {
        let m = small_map(3);
        let s = score(&m, &m).unwrap();
        assert_eq!(s.corr_x, 1.0);
        assert_eq!(s.corr_y, 1.0);

        let neg = NormMap::new(
            8,
            8,
            m.nx().iter().map(|v| -v).collect(),
            m.ny().iter().map(|v| -v).collect(),
        )
        .unwrap();
        let s = score(&neg, &m).unwrap();
        assert_eq!(s.corr_x, -1.0);
        assert_eq!(s.corr_y, -1.0);
    }

    #[test]
    fn score_is_symmetric() {
        let a = small_map(5);
        let b = small_map(11);
        let ab = score(&a, &b).unwrap();
        let ba = score(&b, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn score_dimension_mismatch() {
        let a = small_map(5);
        let b = NormMap::zeros(4, 4).unwrap();
        assert!(matches!(score(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constructor_canonicalizes_through_f32() {
        let v = 0.123456789012345_f64;
        let m = NormMap::new(1, 1, vec![v], vec![0.0]).unwrap();
        assert_eq!(m.nx()[0], v as f32 as f64);
    }

    #[test]
    fn constructor_projects_marginal_excess() {
        // Slightly outside the disk but within the slack.
        let x = 0.8;
        let y = (1.0f64 - 0.64 + 5e-7).sqrt();
        let m = NormMap::new(1, 1, vec![x], vec![y]).unwrap();
        let r2 = m.nx()[0] * m.nx()[0] + m.ny()[0] * m.ny()[0];
        assert!(r2 <= 1.0);
    }

    #[test]
    fn constructor_rejects_gross_excess() {
        assert!(NormMap::new(1, 1, vec![1.0], vec![1.0]).is_err());
        assert!(NormMap::new_projected(1, 1, vec![1.0], vec![1.0]).is_ok());
    }

    #[test]
    fn projected_constructor_lands_on_disk() {
        let m = NormMap::new_projected(1, 1, vec![3.0], vec![-4.0]).unwrap();
        let r2 = m.nx()[0] * m.nx()[0] + m.ny()[0] * m.ny()[0];
        assert!(r2 <= 1.0 && r2 > 0.98);
        // Direction preserved.
        assert!(m.nx()[0] > 0.0 && m.ny()[0] < 0.0);
        assert!((m.ny()[0] / m.nx()[0] + 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn l2_distance_zero_on_self() {
        let m = small_map(9);
        assert_eq!(l2_distance(&m, &m).unwrap(), 0.0);
    }
}
