//! Feature-space mixup between geometrically adjacent classes.
//!
//! Class centers are averaged from the training features, classes are
//! ranked by Euclidean distance between centers, and each synthetic pair
//! interpolates a real sample with a sample from one of its class's
//! closest classes. The same weight mixes the two semantic vectors.

use std::collections::BTreeMap;

use crate::condgan::ConditionedFeature;
use crate::data::{LabeledFeatureSet, SemanticTable};
use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::scalar::Scalar;

/// Mean feature and sample count per class present in a set.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCenters<T> {
    /// Sorted by class id.
    pub classes: Vec<u32>,
    pub centers: Vec<Vec<T>>,
    pub counts: Vec<usize>,
}

impl<T: Scalar> ClassCenters<T> {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn position(&self, class: u32) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }
}

pub fn class_centers<T: Scalar>(set: &LabeledFeatureSet<T>) -> ClassCenters<T> {
    let b = set.feature_dim();
    let mut sums: BTreeMap<u32, (Vec<T>, usize)> = BTreeMap::new();
    for (i, &l) in set.labels().iter().enumerate() {
        let (acc, n) = sums.entry(l).or_insert_with(|| (vec![T::zero(); b], 0));
        for (a, &x) in acc.iter_mut().zip(set.feature(i)) {
            *a = *a + x;
        }
        *n += 1;
    }
    let mut out = ClassCenters {
        classes: Vec::with_capacity(sums.len()),
        centers: Vec::with_capacity(sums.len()),
        counts: Vec::with_capacity(sums.len()),
    };
    for (class, (acc, n)) in sums {
        let denom = T::count(n);
        out.classes.push(class);
        out.centers.push(acc.into_iter().map(|a| a / denom).collect());
        out.counts.push(n);
    }
    out
}

/// Pairwise Euclidean distances between class centers, indexed by the
/// position of each class in [`ClassCenters::classes`].
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix<T> {
    pub classes: Vec<u32>,
    values: Vec<T>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn size(&self) -> usize {
        self.classes.len()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.size() + j]
    }
}

pub fn similarity_matrix<T: Scalar>(centers: &ClassCenters<T>) -> Result<SimilarityMatrix<T>> {
    let c = centers.len();
    if c < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 classes for a similarity matrix, have {c}"
        )));
    }
    let mut values = vec![T::zero(); c * c];
    for i in 0..c {
        for j in (i + 1)..c {
            let d = centers.centers[i]
                .iter()
                .zip(&centers.centers[j])
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>()
                .sqrt();
            values[i * c + j] = d;
            values[j * c + i] = d;
        }
    }
    Ok(SimilarityMatrix {
        classes: centers.classes.clone(),
        values,
    })
}

/// The `neighbors` classes nearest to `class`, excluding itself. Ties go to
/// the lower class id.
pub fn closest_classes<T: Scalar>(matrix: &SimilarityMatrix<T>, class: u32, neighbors: usize) -> Result<Vec<u32>> {
    let c = matrix.size();
    if neighbors < 1 || neighbors > c.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!(
            "neighbors must be in 1..={}, got {neighbors}",
            c.saturating_sub(1)
        )));
    }
    let me = matrix
        .classes
        .iter()
        .position(|&k| k == class)
        .ok_or_else(|| Error::UnknownClass(format!("class id {class} has no center")))?;
    let mut others: Vec<usize> = (0..c).filter(|&j| j != me).collect();
    others.sort_by(|&a, &b| {
        matrix
            .get(me, a)
            .partial_cmp(&matrix.get(me, b))
            .expect("distances are finite")
            .then(matrix.classes[a].cmp(&matrix.classes[b]))
    });
    Ok(others[..neighbors].iter().map(|&j| matrix.classes[j]).collect())
}

/// Source of interpolation weights; tests can pin them.
pub trait MixWeight {
    fn draw(&mut self, rng: &mut SeededRng) -> f64;
}

/// `beta ~ U(0, 1)`.
pub struct UniformWeight;

impl MixWeight for UniformWeight {
    fn draw(&mut self, rng: &mut SeededRng) -> f64 {
        rng.uniform()
    }
}

/// Always returns the same weight.
pub struct FixedWeight(pub f64);

impl MixWeight for FixedWeight {
    fn draw(&mut self, _: &mut SeededRng) -> f64 {
        self.0
    }
}

/// One interpolated pair with the provenance needed to audit it.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedPair<T> {
    pub pair: ConditionedFeature<T>,
    pub beta: f64,
    pub anchor_row: usize,
    pub partner_row: usize,
}

/// `floor(gamma * N)` interpolated pairs drawn with `beta ~ U(0, 1)`.
pub fn synthesize_mixup<T: Scalar>(
    set: &LabeledFeatureSet<T>,
    semantics: &SemanticTable<T>,
    neighbors: usize,
    gamma: f64,
    rng: &mut SeededRng,
) -> Result<Vec<ConditionedFeature<T>>> {
    Ok(
        synthesize_mixup_traced(set, semantics, neighbors, gamma, &mut UniformWeight, rng)?
            .into_iter()
            .map(|m| m.pair)
            .collect(),
    )
}

/// [`synthesize_mixup`] with a pluggable weight source, keeping each pair's
/// weight and endpoint rows.
pub fn synthesize_mixup_traced<T: Scalar>(
    set: &LabeledFeatureSet<T>,
    semantics: &SemanticTable<T>,
    neighbors: usize,
    gamma: f64,
    weights: &mut dyn MixWeight,
    rng: &mut SeededRng,
) -> Result<Vec<MixedPair<T>>> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidArgument(format!("gamma must be >= 0, got {gamma}")));
    }
    let count = (gamma * set.len() as f64).floor() as usize;
    if count == 0 {
        return Ok(Vec::new());
    }

    let centers = class_centers(set);
    let matrix = similarity_matrix(&centers)?;
    let by_label = set.indices_by_label();
    let mut embeddings: BTreeMap<u32, Vec<T>> = BTreeMap::new();
    let mut partners: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &class in &centers.classes {
        let name = set.catalog().name(class).expect("labels are in the catalog");
        embeddings.insert(class, semantics.resolve(name)?);
        partners.insert(class, closest_classes(&matrix, class, neighbors)?);
    }

    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let anchor_row = rng.index(set.len());
        let class = set.labels()[anchor_row];
        let near = &partners[&class];
        let partner_class = near[rng.index(near.len())];
        let pool = by_label
            .get(&partner_class)
            .filter(|p| !p.is_empty())
            .ok_or_else(|| Error::Data(format!("neighbor class {partner_class} has no samples")))?;
        let partner_row = pool[rng.index(pool.len())];
        let beta = weights.draw(rng);
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!("mix weight {beta} outside [0, 1]")));
        }
        let bt = T::lit(beta);
        let mix =
            |a: &[T], b: &[T]| -> Vec<T> { a.iter().zip(b).map(|(&x, &y)| bt * x + (T::one() - bt) * y).collect() };
        let feature = mix(set.feature(anchor_row), set.feature(partner_row));
        let semantic = mix(&embeddings[&class], &embeddings[&partner_class]);
        out.push(MixedPair {
            pair: ConditionedFeature {
                feature,
                semantic,
                class,
            },
            beta,
            anchor_row,
            partner_row,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ClassCatalog;
    use crate::tensor::Tensor;

    fn set_from(rows: &[[f64; 2]], labels: &[u32], names: &[&str]) -> LabeledFeatureSet<f64> {
        LabeledFeatureSet::new(
            Tensor::from_rows(rows).unwrap(),
            labels.to_vec(),
            ClassCatalog::new(names.iter().copied()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_sample_centers_are_the_samples() {
        let set = set_from(&[[1.0, 2.0], [3.0, -1.0]], &[1, 0], &["a", "b"]);
        let c = class_centers(&set);
        assert_eq!(c.classes, vec![0, 1]);
        assert_eq!(c.centers, vec![vec![3.0, -1.0], vec![1.0, 2.0]]);
        assert_eq!(c.counts, vec![1, 1]);
    }

    #[test]
    fn center_is_mean() {
        let set = set_from(&[[0.0, 0.0], [2.0, 2.0]], &[0, 0], &["a", "b"]);
        let c = class_centers(&set);
        assert_eq!(c.classes, vec![0]);
        assert_eq!(c.centers[0], vec![1.0, 1.0]);
    }

    #[test]
    fn three_four_five() {
        let set = set_from(&[[0.0, 0.0], [3.0, 4.0]], &[0, 1], &["a", "b"]);
        let m = similarity_matrix(&class_centers(&set)).unwrap();
        assert_eq!(m.get(0, 1), 5.0);
        assert_eq!(m.get(1, 0), 5.0);
        assert_eq!(m.get(0, 0), 0.0);
    }

    #[test]
    fn single_class_has_no_matrix() {
        let set = set_from(&[[0.0, 0.0]], &[0], &["a", "b"]);
        assert!(similarity_matrix(&class_centers(&set)).is_err());
    }

    #[test]
    fn colinear_neighbors() {
        let set = set_from(&[[0.0, 0.0], [1.0, 0.0], [10.0, 0.0]], &[0, 1, 2], &["a", "b", "c"]);
        let m = similarity_matrix(&class_centers(&set)).unwrap();
        assert_eq!(closest_classes(&m, 0, 1).unwrap(), vec![1]);
        assert_eq!(closest_classes(&m, 0, 2).unwrap(), vec![1, 2]);
        assert_eq!(closest_classes(&m, 2, 1).unwrap(), vec![1]);
        assert!(closest_classes(&m, 0, 0).is_err());
        assert!(closest_classes(&m, 0, 3).is_err());
    }

    #[test]
    fn ties_go_to_lower_id() {
        let set = set_from(&[[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]], &[0, 2, 1], &["a", "b", "c"]);
        let m = similarity_matrix(&class_centers(&set)).unwrap();
        assert_eq!(closest_classes(&m, 0, 1).unwrap(), vec![1]);
    }

    fn two_class_world() -> (LabeledFeatureSet<f64>, SemanticTable<f64>) {
        let set = set_from(&[[2.0, 0.0], [0.0, 2.0]], &[0, 1], &["a", "b"]);
        let mut sem = SemanticTable::new(2);
        sem.insert("a", vec![1.0, 0.0]).unwrap();
        sem.insert("b", vec![0.0, 1.0]).unwrap();
        (set, sem)
    }

    #[test]
    fn gamma_zero_is_empty() {
        let (set, sem) = two_class_world();
        assert!(synthesize_mixup(&set, &sem, 1, 0.0, &mut SeededRng::new(1))
            .unwrap()
            .is_empty());
        assert!(synthesize_mixup(&set, &sem, 1, -1.0, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn count_is_floor_gamma_n() {
        let (set, sem) = two_class_world();
        let out = synthesize_mixup(&set, &sem, 1, 2.7, &mut SeededRng::new(1)).unwrap();
        assert_eq!(out.len(), 5);
    }

    #[test]
    fn beta_one_returns_anchor() {
        let (set, sem) = two_class_world();
        let out = synthesize_mixup_traced(&set, &sem, 1, 3.0, &mut FixedWeight(1.0), &mut SeededRng::new(2)).unwrap();
        for m in out {
            assert_eq!(m.pair.feature, set.feature(m.anchor_row).to_vec());
            let name = set.catalog().name(m.pair.class).unwrap();
            assert_eq!(m.pair.semantic, sem.get(name).unwrap().to_vec());
        }
    }

    #[test]
    fn beta_half_is_midpoint() {
        let (set, sem) = two_class_world();
        let out = synthesize_mixup_traced(&set, &sem, 1, 1.0, &mut FixedWeight(0.5), &mut SeededRng::new(3)).unwrap();
        for m in out {
            assert_eq!(m.pair.feature, vec![1.0, 1.0]);
            assert_eq!(m.pair.semantic, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn unresolvable_semantic_is_an_error() {
        let (set, _) = two_class_world();
        let mut sem = SemanticTable::new(2);
        sem.insert("a", vec![1.0, 0.0]).unwrap();
        assert!(synthesize_mixup(&set, &sem, 1, 1.0, &mut SeededRng::new(1)).is_err());
    }
}
