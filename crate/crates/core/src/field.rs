//! Core domain types: evaluation sites in parameter space, sampled path
//! values, norms on the value space, and the global field configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point of the parameter space `R^l`.
pub type Point = Vec<f64>;

/// Norm on the value space `R^d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Sup,
    Euclidean,
    L1,
}

/// Global configuration: homogeneity index `alpha`, value dimension `d`,
/// parameter dimension `l`, and the norm used on `R^d`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldConfig {
    pub alpha: f64,
    pub dim_d: usize,
    pub dim_l: usize,
    pub norm: NormKind,
}

impl FieldConfig {
    pub fn new(alpha: f64, dim_d: usize, dim_l: usize, norm: NormKind) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        if dim_d == 0 || dim_l == 0 {
            return Err(Error::Config("dimensions must be >= 1".into()));
        }
        Ok(Self { alpha, dim_d, dim_l, norm })
    }

    /// Scalar field on the real line; the setting of most experiments.
    pub fn scalar_line(alpha: f64) -> Self {
        Self { alpha, dim_d: 1, dim_l: 1, norm: NormKind::Sup }
    }
}

/// Selected norm of a value vector. 1-homogeneous:
/// `norm_value(c*v) = c * norm_value(v)` for `c >= 0`.
pub fn norm_value(v: &[f64], norm: NormKind) -> Result<f64> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(format!("norm_value on {v:?}")));
    }
    Ok(norm_unchecked(v, norm))
}

#[inline]
pub(crate) fn norm_unchecked(v: &[f64], norm: NormKind) -> f64 {
    match norm {
        NormKind::Sup => v.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        NormKind::Euclidean => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
    }
}

/// An ordered, finite list of evaluation sites. Order is part of the
/// contract: samplers return values row-aligned with `points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    points: Vec<Point>,
}

impl PointSet {
    pub fn new(dim: usize, points: Vec<Point>) -> Result<Self> {
        for p in &points {
            if p.len() != dim {
                return Err(Error::Config(format!(
                    "point {p:?} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("site {p:?}")));
            }
        }
        Ok(Self { dim, points })
    }

    /// Sites on the real line.
    pub fn on_line(coords: &[f64]) -> Self {
        Self { dim: 1, points: coords.iter().map(|&c| vec![c]).collect() }
    }

    pub fn empty(dim: usize) -> Self {
        Self { dim, points: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &Point {
        &self.points[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Point> {
        self.points.iter()
    }

    /// Index of the first site equal (exactly) to `p`, if any.
    pub fn position_of(&self, p: &[f64]) -> Option<usize> {
        let key = coord_key(p);
        self.points.iter().position(|q| coord_key(q) == key)
    }

    /// Duplicate sites, as `(first_index, duplicate_index)` pairs.
    /// Duplicates are permitted but most callers want to know.
    pub fn duplicates(&self) -> Vec<(usize, usize)> {
        let mut seen: std::collections::BTreeMap<Vec<u64>, usize> = Default::default();
        let mut dups = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            match seen.entry(coord_key(p)) {
                std::collections::btree_map::Entry::Occupied(e) => dups.push((*e.get(), i)),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(i);
                }
            }
        }
        dups
    }
}

/// Bit-level key for exact coordinate equality; `-0.0` folds into `0.0`.
fn coord_key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|&x| if x == 0.0 { 0.0f64.to_bits() } else { x.to_bits() }).collect()
}

/// Site transformation implementing the shift operator: evaluating a field
/// at `shift_points(pts, h)` yields the shifted field `B^h Z` at `pts`,
/// since `(B^h Z)(t) = Z(t - h)`.
pub fn shift_points(pts: &PointSet, h: &[f64]) -> Result<PointSet> {
    if h.len() != pts.dim() {
        return Err(Error::Config(format!(
            "shift vector has dimension {}, sites have {}",
            h.len(),
            pts.dim()
        )));
    }
    let shifted = pts
        .points
        .iter()
        .map(|p| p.iter().zip(h).map(|(a, b)| a - b).collect())
        .collect();
    PointSet::new(pts.dim, shifted)
}

/// Deduplicated union of two site lists with exact coordinate equality.
/// The returned maps recover each input's rows from a sample taken on the
/// union: `union.point(map_a[i]) == a.point(i)`.
pub fn union_sites(a: &PointSet, b: &PointSet) -> Result<(PointSet, Vec<usize>, Vec<usize>)> {
    if a.dim() != b.dim() {
        return Err(Error::Config("site sets differ in dimension".into()));
    }
    let mut binder = SiteBinder::new(a.dim());
    let map_a = a.iter().map(|p| binder.add(p)).collect();
    let map_b = b.iter().map(|p| binder.add(p)).collect();
    Ok((binder.into_sites(), map_a, map_b))
}

/// Incremental site-union builder. Repeated `add`s of the same coordinates
/// return the same index.
pub struct SiteBinder {
    dim: usize,
    points: Vec<Point>,
    index: std::collections::BTreeMap<Vec<u64>, usize>,
}

impl SiteBinder {
    pub fn new(dim: usize) -> Self {
        Self { dim, points: Vec::new(), index: Default::default() }
    }

    pub fn add(&mut self, p: &[f64]) -> usize {
        debug_assert_eq!(p.len(), self.dim);
        let key = coord_key(p);
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        let i = self.points.len();
        self.points.push(p.to_vec());
        self.index.insert(key, i);
        i
    }

    pub fn add_set(&mut self, pts: &PointSet) -> Vec<usize> {
        pts.iter().map(|p| self.add(p)).collect()
    }

    pub fn into_sites(self) -> PointSet {
        PointSet { dim: self.dim, points: self.points }
    }
}

/// The symmetric box `[-m, m]^l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub half_width: f64,
}

impl Window {
    pub fn new(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::Config(format!("window half-width must be positive, got {half_width}")));
        }
        Ok(Self { half_width })
    }

    /// Lebesgue volume `(2m)^l`.
    pub fn volume(&self, dim_l: usize) -> f64 {
        (2.0 * self.half_width).powi(dim_l as i32)
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter().all(|x| x.abs() <= self.half_width)
    }
}

/// Field values at a finite list of sites: one row per site, `dim_d`
/// columns. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    sites: PointSet,
    dim_d: usize,
    values: Vec<f64>,
}

impl PathSample {
    pub fn new(sites: PointSet, dim_d: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != sites.len() * dim_d {
            return Err(Error::Contract(format!(
                "value matrix has {} entries, expected {} sites x {} components",
                values.len(),
                sites.len(),
                dim_d
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("path sample contains NaN or infinity".into()));
        }
        Ok(Self { sites, dim_d, values })
    }

    pub fn sites(&self) -> &PointSet {
        &self.sites
    }

    pub fn dim_d(&self) -> usize {
        self.dim_d
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Value vector at site index `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim_d..(i + 1) * self.dim_d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Norm of the value at each site, in site order.
    pub fn norms(&self, norm: NormKind) -> Vec<f64> {
        (0..self.len()).map(|i| norm_unchecked(self.row(i), norm)).collect()
    }

    /// Restriction to a subset of rows; `rows[k]` becomes row `k`.
    pub fn project(&self, rows: &[usize], sites: PointSet) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * self.dim_d);
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        PathSample::new(sites, self.dim_d, values)
    }

    /// Pointwise scaling by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            sites: self.sites.clone(),
            dim_d: self.dim_d,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn norms_match_hand_values() {
        assert_eq!(norm_value(&[3.0, -4.0], NormKind::Euclidean).unwrap(), 5.0);
        assert_eq!(norm_value(&[0.0, 0.0, 0.0], NormKind::Sup).unwrap(), 0.0);
        assert_eq!(norm_value(&[0.0, 0.0, 0.0], NormKind::L1).unwrap(), 0.0);
        assert_eq!(norm_value(&[1.0, -2.0, 0.5], NormKind::Sup).unwrap(), 2.0);
    }

    #[test]
    fn norm_rejects_non_finite() {
        assert!(norm_value(&[f64::NAN], NormKind::Sup).is_err());
        assert!(norm_value(&[1.0, f64::INFINITY], NormKind::L1).is_err());
    }

    #[test]
    fn shift_matches_definition() {
        let pts = PointSet::on_line(&[0.0, 1.0, 2.0]);
        let shifted = shift_points(&pts, &[1.0]).unwrap();
        assert_eq!(shifted, PointSet::on_line(&[-1.0, 0.0, 1.0]));

        let same = shift_points(&pts, &[0.0]).unwrap();
        assert_eq!(same, pts);

        let p2 = PointSet::new(2, vec![vec![1.0, 1.0]]).unwrap();
        let s2 = shift_points(&p2, &[1.0, -1.0]).unwrap();
        assert_eq!(s2.point(0), &[0.0, 2.0]);
    }

    #[test]
    fn union_dedups_and_maps() {
        let a = PointSet::on_line(&[0.0, 1.0]);
        let b = PointSet::on_line(&[1.0, 2.0]);
        let (u, ma, mb) = union_sites(&a, &b).unwrap();
        assert_eq!(u, PointSet::on_line(&[0.0, 1.0, 2.0]));
        assert_eq!(ma, vec![0, 1]);
        assert_eq!(mb, vec![1, 2]);

        let (u2, _, mb2) = union_sites(&PointSet::empty(1), &PointSet::on_line(&[5.0])).unwrap();
        assert_eq!(u2, PointSet::on_line(&[5.0]));
        assert_eq!(mb2, vec![0]);

        let (u3, ma3, mb3) =
            union_sites(&PointSet::on_line(&[0.0]), &PointSet::on_line(&[0.0])).unwrap();
        assert_eq!(u3.len(), 1);
        assert_eq!(ma3, mb3);
    }

    #[test]
    fn union_treats_negative_zero_as_zero() {
        let a = PointSet::on_line(&[0.0]);
        let b = PointSet::on_line(&[-0.0]);
        let (u, _, mb) = union_sites(&a, &b).unwrap();
        assert_eq!(u.len(), 1);
        assert_eq!(mb, vec![0]);
    }

    #[test]
    fn window_volume_exact() {
        let w = Window::new(1.0).unwrap();
        assert_eq!(w.volume(1), 2.0);
        assert_eq!(w.volume(3), 8.0);
    }

    #[test]
    fn path_sample_rejects_shape_and_nan() {
        let sites = PointSet::on_line(&[0.0, 1.0]);
        assert!(PathSample::new(sites.clone(), 1, vec![1.0]).is_err());
        assert!(PathSample::new(sites, 1, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn duplicates_flagged() {
        let pts = PointSet::on_line(&[0.0, 1.0, 0.0]);
        assert_eq!(pts.duplicates(), vec![(0, 2)]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn norm_triangle_and_homogeneity(
            v in prop::collection::vec(-100.0..100.0f64, 1..6),
            w_seed in prop::collection::vec(-100.0..100.0f64, 1..6),
            c in 0.0..50.0f64,
        ) {
            let mut w = w_seed;
            w.resize(v.len(), 0.0);
            for kind in [NormKind::Sup, NormKind::Euclidean, NormKind::L1] {
                let nv = norm_value(&v, kind).unwrap();
                let nw = norm_value(&w, kind).unwrap();
                let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
                let ns = norm_value(&sum, kind).unwrap();
                prop_assert!(ns <= nv + nw + 1e-12 * (1.0 + nv + nw));

                let scaled: Vec<f64> = v.iter().map(|a| c * a).collect();
                let nsc = norm_value(&scaled, kind).unwrap();
                prop_assert!((nsc - c * nv).abs() <= 1e-12 * (1.0 + c * nv));
            }
        }

        // Exact round trip holds on a dyadic lattice, which is how shifts
        // are chosen throughout the test suite.
        #[test]
        fn shift_round_trip_is_exact(
            ticks in prop::collection::vec(-4000i64..4000, 0..8),
            h_tick in -4000i64..4000,
        ) {
            let coords: Vec<f64> = ticks.iter().map(|&k| k as f64 * 0.25).collect();
            let h = h_tick as f64 * 0.25;
            let pts = PointSet::on_line(&coords);
            let back = shift_points(&shift_points(&pts, &[h]).unwrap(), &[-h]).unwrap();
            prop_assert_eq!(back, pts);
        }
    }
}
