//! Exact nearest-neighbor search over a static point set.

use crate::error::{Error, Result};
use crate::linalg::Vec3;
use crate::scalar::Real;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: usize, left: usize, right: usize },
}

/// Nearest hit: Euclidean distance and the index of the matched point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Nearest<T> {
    pub distance: T,
    pub index: usize,
}

/// Squared distance, shared by the tree and the brute-force scan so both
/// produce bit-identical values.
#[inline]
pub fn squared_distance<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    let dx = a.0[0] - b.0[0];
    let dy = a.0[1] - b.0[1];
    let dz = a.0[2] - b.0[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn better<T: Real>(d2: T, index: usize, best: (T, usize)) -> bool {
    d2 < best.0 || (d2 == best.0 && index < best.1)
}

/// Brute-force scan. Ties go to the lowest index.
pub fn brute_force_nearest<T: Real>(points: &[Vec3<T>], query: &Vec3<T>) -> Result<Nearest<T>> {
    if points.is_empty() {
        return Err(Error::invalid("nearest-neighbor query against an empty point set"));
    }
    let mut best = (T::infinity(), usize::MAX);
    for (i, p) in points.iter().enumerate() {
        let d2 = squared_distance(p, query);
        if better(d2, i, best) {
            best = (d2, i);
        }
    }
    Ok(Nearest { distance: best.0.sqrt(), index: best.1 })
}

/// Immutable kd-tree. Queries return exactly what [`brute_force_nearest`]
/// returns, including the lowest-index rule for ties.
#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    order: Vec<usize>,
    splits: Vec<T>,
    nodes: Vec<Node>,
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Vec3<T>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot index an empty point set"));
        }
        if !points.iter().all(Vec3::is_finite) {
            return Err(Error::invalid("point set contains non-finite coordinates"));
        }
        let mut tree = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            splits: Vec::new(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.len());
        Ok(tree)
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let slice = &self.order[start..end];
        let axis = (0..3)
            .map(|a| {
                let (lo, hi) = slice.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
                    let v = self.points[i].0[a];
                    (lo.min(v), hi.max(v))
                });
                (a, hi - lo)
            })
            .fold((0, T::neg_infinity()), |best, (a, e)| if e > best.1 { (a, e) } else { best })
            .0;
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&i, &j| {
            points[i].0[axis]
                .partial_cmp(&points[j].0[axis])
                .expect("finite coordinates")
                .then(i.cmp(&j))
        });
        let value = self.splits.len();
        self.splits.push(self.points[self.order[mid]].0[axis]);
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    pub fn nearest(&self, query: &Vec3<T>) -> Nearest<T> {
        let mut best = (T::infinity(), usize::MAX);
        self.search(0, query, &mut best);
        Nearest { distance: best.0.sqrt(), index: best.1 }
    }

    fn search(&self, node: usize, q: &Vec3<T>, best: &mut (T, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = squared_distance(&self.points[i], q);
                    if better(d2, i, *best) {
                        *best = (d2, i);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q.0[axis] - self.splits[value];
                let (near, far) = if diff < T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // Equality still descends: a tie on the far side may carry a lower index.
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec3<f64>> {
        (0..n)
            .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn coincident_point_has_zero_distance() {
        let pts = vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 3.0)];
        let t = KdTree::build(&pts).unwrap();
        assert_eq!(t.nearest(&pts[1]), Nearest { distance: 0.0, index: 1 });
    }

    #[test]
    fn symmetric_tie_picks_first() {
        let pts = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)];
        assert_eq!(KdTree::build(&pts).unwrap().nearest(&Vec3::zeros()).index, 0);
    }

    #[test]
    fn empty_set_is_rejected() {
        assert!(KdTree::<f64>::build(&[]).is_err());
        assert!(brute_force_nearest::<f64>(&[], &Vec3::zeros()).is_err());
    }

    #[test]
    fn many_duplicates_resolve_to_lowest_index() {
        // Grid points repeated so ties are everywhere.
        let mut pts = Vec::new();
        for _ in 0..3 {
            for x in 0..5 {
                for y in 0..5 {
                    pts.push(Vec3::new(x as f64, y as f64, 0.0));
                }
            }
        }
        let t = KdTree::build(&pts).unwrap();
        for x in 0..9 {
            for y in 0..9 {
                let q = Vec3::new(x as f64 * 0.5, y as f64 * 0.5, 0.0);
                assert_eq!(t.nearest(&q), brute_force_nearest(&pts, &q).unwrap());
            }
        }
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force(seed in any::<u64>(), n in 1usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = cloud(&mut rng, n);
            let t = KdTree::build(&pts).unwrap();
            for q in cloud(&mut rng, 50) {
                prop_assert_eq!(t.nearest(&q), brute_force_nearest(&pts, &q).unwrap());
            }
        }
    }
}
