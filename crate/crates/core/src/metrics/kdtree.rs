use crate::scalar::Real;

const LEAF: usize = 16;

enum Node<T> {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: T, left: Box<Node<T>>, right: Box<Node<T>> },
}

/// Static kd-tree over borrowed points for k-nearest-neighbour distances.
pub struct KdTree<'a, T: Real> {
    points: &'a [Vec<T>],
    index: Vec<usize>,
    root: Node<T>,
}

impl<'a, T: Real> KdTree<'a, T> {
    pub fn new(points: &'a [Vec<T>]) -> Self {
        let mut index: Vec<usize> = (0..points.len()).collect();
        let dim = points.first().map_or(0, Vec::len);
        let root = build(points, &mut index, 0, dim);
        KdTree { points, index, root }
    }

    /// Distance from `query` to its `k`-th nearest point, ignoring the point at
    /// position `exclude` and any point at distance zero (duplicates).
    pub fn kth_nonzero_distance(&self, query: &[T], k: usize, exclude: Option<usize>) -> Option<T> {
        let mut best: Vec<T> = Vec::with_capacity(k + 1);
        self.search(&self.root, query, k, exclude, &mut best);
        if best.len() == k { Some(best[k - 1].sqrt()) } else { None }
    }

    fn search(&self, node: &Node<T>, q: &[T], k: usize, exclude: Option<usize>, best: &mut Vec<T>) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.index[*start..*end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d2: T = self.points[i].iter().zip(q).map(|(&a, &b)| (a - b) * (a - b)).sum();
                    if d2 == T::zero() {
                        continue;
                    }
                    if best.len() < k || d2 < best[best.len() - 1] {
                        let pos = best.partition_point(|&b| b <= d2);
                        best.insert(pos, d2);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[*axis] - *value;
                let (near, far) = if diff <= T::zero() { (left, right) } else { (right, left) };
                self.search(near, q, k, exclude, best);
                if best.len() < k || diff * diff < best[best.len() - 1] {
                    self.search(far, q, k, exclude, best);
                }
            }
        }
    }
}

fn build<T: Real>(points: &[Vec<T>], index: &mut [usize], offset: usize, dim: usize) -> Node<T> {
    let n = index.len();
    if n <= LEAF || dim == 0 {
        return Node::Leaf { start: offset, end: offset + n };
    }
    // split on the widest coordinate
    let mut axis = 0;
    let mut widest = T::neg_infinity();
    for a in 0..dim {
        let (mut lo, mut hi) = (T::infinity(), T::neg_infinity());
        for &i in index.iter() {
            let v = points[i][a];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > widest {
            widest = hi - lo;
            axis = a;
        }
    }
    if !(widest > T::zero()) {
        return Node::Leaf { start: offset, end: offset + n };
    }
    let mid = n / 2;
    index.select_nth_unstable_by(mid, |&a, &b| points[a][axis].partial_cmp(&points[b][axis]).unwrap());
    let value = points[index[mid]][axis];
    let (l, r) = index.split_at_mut(mid);
    let left = build(points, l, offset, dim);
    let right = build(points, r, offset + mid, dim);
    Node::Split { axis, value, left: Box::new(left), right: Box::new(right) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{std_normal, Stream};

    #[test]
    fn matches_brute_force() {
        let mut rng = Stream::new(11).rng();
        let pts: Vec<Vec<f64>> = (0..500).map(|_| (0..3).map(|_| std_normal(&mut rng)).collect()).collect();
        let tree = KdTree::new(&pts);
        for qi in 0..50 {
            let q = &pts[qi];
            let mut d: Vec<f64> = pts
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != qi)
                .map(|(_, p)| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for k in [1, 3] {
                assert_eq!(tree.kth_nonzero_distance(q, k, Some(qi)).unwrap(), d[k - 1]);
            }
        }
    }

    #[test]
    fn duplicates_are_skipped() {
        let pts = vec![vec![0.0f64], vec![0.0], vec![0.0], vec![2.0], vec![5.0]];
        let tree = KdTree::new(&pts);
        assert_eq!(tree.kth_nonzero_distance(&[0.0], 1, Some(0)), Some(2.0));
        assert_eq!(tree.kth_nonzero_distance(&[0.0], 2, None), Some(5.0));
        assert_eq!(tree.kth_nonzero_distance(&[0.0], 3, None), None);
    }
}
