//! Experimental units, neighborhoods and exposure mappings.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One experimental unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: String,
    pub coords: Vec<f64>,
    pub treatment: bool,
    pub outcome: f64,
    /// Upper bound on the outcome (e.g. enrollment), used by the full-control
    /// bound.
    pub enrollment: Option<f64>,
}

impl Unit {
    pub fn new(
        id: impl Into<String>,
        coords: Vec<f64>,
        treatment: bool,
        outcome: f64,
        enrollment: Option<f64>,
    ) -> Self {
        Self {
            id: id.into(),
            coords,
            treatment,
            outcome,
            enrollment,
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let invalid = |reason: String| Error::InvalidUnit { index, reason };
        if !self.outcome.is_finite() || self.outcome < 0.0 {
            return Err(invalid(format!("outcome {} must be finite and >= 0", self.outcome)));
        }
        if let Some(n) = self.enrollment {
            if !n.is_finite() || n < 0.0 {
                return Err(invalid(format!("enrollment {n} must be finite and >= 0")));
            }
            if self.outcome > n {
                return Err(invalid(format!(
                    "outcome {} exceeds enrollment {n}",
                    self.outcome
                )));
            }
        }
        if self.coords.iter().any(|c| !c.is_finite()) {
            return Err(invalid("coordinates must be finite".into()));
        }
        Ok(())
    }
}

/// The units of an experiment together with the Bernoulli treatment
/// probability that generated their assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    units: Vec<Unit>,
    rho: f64,
}

impl Population {
    pub fn new(units: Vec<Unit>, rho: f64) -> Result<Self> {
        if units.len() < 2 {
            return Err(Error::TooFewUnits(units.len()));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidRho(rho));
        }
        let dim = units[0].coords.len();
        for (index, unit) in units.iter().enumerate() {
            unit.validate(index)?;
            if unit.coords.len() != dim {
                return Err(Error::DimensionMismatch {
                    index,
                    expected: dim,
                    found: unit.coords.len(),
                });
            }
        }
        Ok(Self { units, rho })
    }

    /// Convenience constructor used by simulations: anonymous units with the
    /// given coordinates, assignment and outcomes.
    pub fn from_parts(
        coords: &[Vec<f64>],
        treatment: &[bool],
        outcomes: &[f64],
        rho: f64,
    ) -> Result<Self> {
        let n = coords.len();
        check_len(n, treatment.len())?;
        check_len(n, outcomes.len())?;
        let units = coords
            .iter()
            .zip(treatment)
            .zip(outcomes)
            .enumerate()
            .map(|(i, ((c, &t), &y))| Unit::new(format!("{i}"), c.clone(), t, y, None))
            .collect();
        Self::new(units, rho)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn dimension(&self) -> usize {
        self.units[0].coords.len()
    }

    pub fn treatments(&self) -> Vec<bool> {
        self.units.iter().map(|u| u.treatment).collect()
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.outcome).collect()
    }

    pub fn coords(&self) -> Vec<Vec<f64>> {
        self.units.iter().map(|u| u.coords.clone()).collect()
    }

    /// Enrollment vector, if every unit has one.
    pub fn enrollments(&self) -> Result<Vec<f64>> {
        self.units
            .iter()
            .enumerate()
            .map(|(i, u)| u.enrollment.ok_or(Error::MissingEnrollment(i)))
            .collect()
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}

/// Neighborhoods `η_i`, one per unit, each containing the unit itself and
/// all of the same size.
///
/// Neighborhoods need not be symmetric: `j ∈ η_i` does not imply `i ∈ η_j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborhoodSet {
    sets: Vec<Vec<usize>>,
    #[serde(skip)]
    sorted: Vec<Vec<usize>>,
}

impl NeighborhoodSet {
    pub fn new(sets: Vec<Vec<usize>>) -> Result<Self> {
        let n = sets.len();
        if n == 0 {
            return Err(Error::InvalidNeighborhoods("no neighborhoods".into()));
        }
        let size = sets[0].len();
        let mut sorted = Vec::with_capacity(n);
        for (i, set) in sets.iter().enumerate() {
            if set.len() != size {
                return Err(Error::InvalidNeighborhoods(format!(
                    "neighborhood {i} has size {}, expected {size} (sizes must be equal)",
                    set.len()
                )));
            }
            let mut s = set.clone();
            s.sort_unstable();
            if s.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidNeighborhoods(format!(
                    "neighborhood {i} has duplicate members"
                )));
            }
            if s.last().is_some_and(|&m| m >= n) {
                return Err(Error::InvalidNeighborhoods(format!(
                    "neighborhood {i} refers to a unit outside 0..{n}"
                )));
            }
            if s.binary_search(&i).is_err() {
                return Err(Error::InvalidNeighborhoods(format!(
                    "neighborhood {i} does not contain unit {i}"
                )));
            }
            sorted.push(s);
        }
        Ok(Self { sets, sorted })
    }

    /// Self-only neighborhoods `η_i = {i}`.
    pub fn singletons(n: usize) -> Self {
        let sets: Vec<Vec<usize>> = (0..n).map(|i| alloc::vec![i]).collect();
        Self {
            sorted: sets.clone(),
            sets,
        }
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Common neighborhood size `k`.
    pub fn size(&self) -> usize {
        self.sets[0].len()
    }

    /// Members of `η_i` in construction order (for k-NN: self first, then by
    /// increasing distance).
    pub fn members(&self, i: usize) -> &[usize] {
        &self.sets[i]
    }

    /// Members of `η_i` in increasing index order.
    pub fn sorted_members(&self, i: usize) -> &[usize] {
        &self.sorted[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.sorted[i].binary_search(&j).is_ok()
    }

    pub fn intersects(&self, i: usize, j: usize) -> bool {
        let (a, b) = (&self.sorted[i], &self.sorted[j]);
        let (mut x, mut y) = (0, 0);
        while x < a.len() && y < b.len() {
            match a[x].cmp(&b[y]) {
                Ordering::Less => x += 1,
                Ordering::Greater => y += 1,
                Ordering::Equal => return true,
            }
        }
        false
    }

    /// For each unit `i`, the sorted list of other units `j ≠ i` whose
    /// neighborhoods intersect `η_i`.
    pub fn overlap_lists(&self) -> Vec<Vec<usize>> {
        let n = self.len();
        let mut owners: Vec<Vec<usize>> = alloc::vec![Vec::new(); n];
        for (i, set) in self.sorted.iter().enumerate() {
            for &m in set {
                owners[m].push(i);
            }
        }
        (0..n)
            .map(|i| {
                let mut list: Vec<usize> = self.sorted[i]
                    .iter()
                    .flat_map(|&m| owners[m].iter().copied())
                    .filter(|&j| j != i)
                    .collect();
                list.sort_unstable();
                list.dedup();
                list
            })
            .collect()
    }
}

/// `η_i` = unit `i` plus its `d - 1` nearest units by Euclidean distance.
///
/// Ties are broken by ascending unit index.
pub fn build_knn_neighborhoods(pop: &Population, d: usize) -> Result<NeighborhoodSet> {
    knn_from_coords(&pop.coords(), d)
}

/// k-NN neighborhoods straight from a coordinate list.
pub fn knn_from_coords(coords: &[Vec<f64>], d: usize) -> Result<NeighborhoodSet> {
    let n = coords.len();
    if d == 0 || d > n {
        return Err(Error::InvalidNeighborhoodSize { d, n });
    }
    let dim = coords[0].len();
    if let Some((index, c)) = coords.iter().enumerate().find(|(_, c)| c.len() != dim) {
        return Err(Error::DimensionMismatch {
            index,
            expected: dim,
            found: c.len(),
        });
    }
    let sq_dist = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    };
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));

    let mut sets = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        scratch.clear();
        scratch.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&coords[i], &coords[j]), j)),
        );
        let k = d - 1;
        if k > 0 && k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, by_distance);
        }
        let nearest = &mut scratch[..k];
        nearest.sort_unstable_by(by_distance);
        let mut set = Vec::with_capacity(d);
        set.push(i);
        set.extend(nearest.iter().map(|&(_, j)| j));
        sets.push(set);
    }
    NeighborhoodSet::new(sets)
}

/// How a neighborhood's treatment pattern maps to effective treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExposureMapping {
    /// `Z_i = 1` iff every unit in `η_i` is treated.
    Product,
    /// `Z_i = 1` iff `i` is treated and at least `d_min` units of `η_i`
    /// (counting `i`) are treated.
    Threshold { d_min: usize },
}

impl ExposureMapping {
    pub fn validate(&self, neighborhood_size: usize) -> Result<()> {
        match *self {
            Self::Product => Ok(()),
            Self::Threshold { d_min } if d_min >= 1 && d_min <= neighborhood_size => Ok(()),
            Self::Threshold { d_min } => Err(Error::InvalidThreshold {
                d_min,
                size: neighborhood_size,
            }),
        }
    }

    /// Exposure of a single unit.
    pub fn exposed(&self, nbhd: &NeighborhoodSet, i: usize, x: &[bool]) -> bool {
        let members = nbhd.members(i);
        match *self {
            Self::Product => members.iter().all(|&j| x[j]),
            Self::Threshold { d_min } => {
                x[i] && members.iter().filter(|&&j| x[j]).count() >= d_min
            }
        }
    }

    /// Effective treatment for a whole assignment vector.
    pub fn evaluate(&self, nbhd: &NeighborhoodSet, x: &[bool]) -> Result<EffectiveTreatment> {
        check_len(nbhd.len(), x.len())?;
        self.validate(nbhd.size())?;
        Ok(self.evaluate_unchecked(nbhd, x))
    }

    pub(crate) fn evaluate_unchecked(&self, nbhd: &NeighborhoodSet, x: &[bool]) -> EffectiveTreatment {
        EffectiveTreatment::new((0..nbhd.len()).map(|i| self.exposed(nbhd, i, x)).collect())
    }
}

/// Effective-treatment indicators `Z` and their count `L`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveTreatment {
    z: Vec<bool>,
    count: usize,
}

impl EffectiveTreatment {
    pub fn new(z: Vec<bool>) -> Self {
        let count = z.iter().filter(|&&b| b).count();
        Self { z, count }
    }

    pub fn indicators(&self) -> &[bool] {
        &self.z
    }

    /// `L`, the number of effectively treated units.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Indices with `Z_i = 1`, ascending.
    pub fn active(&self) -> Vec<usize> {
        self.z
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }
}

/// Effective treatment of the population's observed assignment.
pub fn evaluate_exposure(
    pop: &Population,
    nbhd: &NeighborhoodSet,
    mapping: ExposureMapping,
) -> Result<EffectiveTreatment> {
    check_len(pop.len(), nbhd.len())?;
    mapping.evaluate(nbhd, &pop.treatments())
}

/// Neighborhoods, mapping and treatment probability: everything that fixes
/// the randomization distribution of `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureDesign {
    nbhd: NeighborhoodSet,
    mapping: ExposureMapping,
    rho: f64,
}

impl ExposureDesign {
    pub fn new(nbhd: NeighborhoodSet, mapping: ExposureMapping, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::InvalidRho(rho));
        }
        mapping.validate(nbhd.size())?;
        Ok(Self { nbhd, mapping, rho })
    }

    /// The `(d_min, d)` family: k-NN neighborhoods of size `d` with a
    /// threshold mapping.
    pub fn knn_threshold(coords: &[Vec<f64>], d_min: usize, d: usize, rho: f64) -> Result<Self> {
        Self::new(knn_from_coords(coords, d)?, ExposureMapping::Threshold { d_min }, rho)
    }

    pub fn neighborhoods(&self) -> &NeighborhoodSet {
        &self.nbhd
    }

    pub fn mapping(&self) -> ExposureMapping {
        self.mapping
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.nbhd.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nbhd.is_empty()
    }

    pub fn evaluate(&self, x: &[bool]) -> Result<EffectiveTreatment> {
        check_len(self.len(), x.len())?;
        Ok(self.mapping.evaluate_unchecked(&self.nbhd, x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    fn sets(n: &NeighborhoodSet) -> Vec<Vec<usize>> {
        (0..n.len()).map(|i| n.members(i).to_vec()).collect()
    }

    // Brute force over all pairs: nearest d-1 by (distance, index).
    fn brute_knn(coords: &[Vec<f64>], d: usize) -> Vec<Vec<usize>> {
        let n = coords.len();
        (0..n)
            .map(|i| {
                let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                for a in 0..others.len() {
                    for b in a + 1..others.len() {
                        let da: f64 = coords[i].iter().zip(&coords[others[a]]).map(|(x, y)| (x - y) * (x - y)).sum();
                        let db: f64 = coords[i].iter().zip(&coords[others[b]]).map(|(x, y)| (x - y) * (x - y)).sum();
                        if db < da || (db == da && others[b] < others[a]) {
                            others.swap(a, b);
                        }
                    }
                }
                let mut s = vec![i];
                s.extend_from_slice(&others[..d - 1]);
                s
            })
            .collect()
    }

    #[test]
    fn knn_self_only() {
        let n = knn_from_coords(&line(&[3.0, 1.0, 2.0]), 1).unwrap();
        assert_eq!(sets(&n), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn knn_three_collinear() {
        let coords = line(&[0.0, 1.0, 10.0]);
        let n = knn_from_coords(&coords, 2).unwrap();
        assert_eq!(sets(&n), vec![vec![0, 1], vec![1, 0], vec![2, 1]]);
        assert_eq!(sets(&n), brute_knn(&coords, 2));
    }

    #[test]
    fn knn_five_on_line() {
        let coords = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let n = knn_from_coords(&coords, 3).unwrap();
        assert_eq!(n.members(2), &[2, 1, 3]);
        assert_eq!(sets(&n), brute_knn(&coords, 3));
    }

    #[test]
    fn knn_errors() {
        assert!(matches!(
            knn_from_coords(&line(&[0.0, 1.0]), 3),
            Err(Error::InvalidNeighborhoodSize { d: 3, n: 2 })
        ));
        let bad = vec![vec![0.0, 1.0], vec![2.0]];
        assert!(matches!(knn_from_coords(&bad, 1), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn neighborhoods_must_be_uniform_and_contain_self() {
        assert!(NeighborhoodSet::new(vec![vec![0, 1], vec![1]]).is_err());
        assert!(NeighborhoodSet::new(vec![vec![1], vec![0]]).is_err());
        assert!(NeighborhoodSet::new(vec![vec![0, 0], vec![1, 0]]).is_err());
        // asymmetric is fine
        assert!(NeighborhoodSet::new(vec![vec![0, 1], vec![1, 2], vec![2, 1]]).is_ok());
    }

    #[test]
    fn exposure_examples() {
        let nbhd = NeighborhoodSet::new(vec![vec![0, 1], vec![1, 0], vec![2, 1]]).unwrap();
        let z = ExposureMapping::Product.evaluate(&nbhd, &[true, true, false]).unwrap();
        assert_eq!(z.indicators(), &[true, true, false]);
        assert_eq!(z.count(), 2);

        let all = ExposureMapping::Product.evaluate(&nbhd, &[true; 3]).unwrap();
        assert_eq!(all.count(), 3);

        let x = [true, false, true, true];
        let z = ExposureMapping::Threshold { d_min: 1 }
            .evaluate(&NeighborhoodSet::singletons(4), &x)
            .unwrap();
        assert_eq!(z.indicators(), &x);
    }

    #[test]
    fn threshold_larger_than_neighborhood_is_rejected() {
        let nbhd = NeighborhoodSet::singletons(3);
        assert!(matches!(
            ExposureMapping::Threshold { d_min: 2 }.evaluate(&nbhd, &[true; 3]),
            Err(Error::InvalidThreshold { d_min: 2, size: 1 })
        ));
    }

    #[test]
    fn population_validation() {
        let u = |y: f64, n: Option<f64>| Unit::new("a", vec![0.0], true, y, n);
        assert!(Population::new(vec![u(1.0, None)], 0.5).is_err());
        assert!(Population::new(vec![u(1.0, None), u(2.0, None)], 1.0).is_err());
        assert!(Population::new(vec![u(-1.0, None), u(2.0, None)], 0.5).is_err());
        assert!(Population::new(vec![u(3.0, Some(2.0)), u(2.0, None)], 0.5).is_err());
        assert!(Population::new(vec![u(1.0, Some(2.0)), u(2.0, None)], 0.5).is_ok());
    }

    #[test]
    fn overlap_lists_on_line() {
        let n = knn_from_coords(&line(&[0.0, 1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        // η = {0,1},{1,0},{2,1},{3,2},{4,3}
        let o = n.overlap_lists();
        assert_eq!(o[0], vec![1, 2]);
        assert_eq!(o[2], vec![0, 1, 3]);
        assert_eq!(o[4], vec![3]);
    }
}
