//! Lloyd's k-means with k-means++ seeding.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::numgrad::sq_dist;
use crate::rng::{rng_for, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub centroids: Vec<Vec<f64>>,
    /// `assignment[i]` is the centroid index of point `i`.
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assign step, first entry from the seeding.
    pub inertia_history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter(move |(_, &c)| c == cluster)
            .map(|(i, _)| i)
    }
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<ClusterAssignment> {
    if k == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if k > points.len() {
        return Err(Error::invalid(format!(
            "k-means with k = {k} over {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::invalid("k-means points differ in dimension"));
    }

    let mut centroids = plus_plus_init(points, k, seed);
    let mut assignment = vec![0; points.len()];
    let mut inertia = assign(points, &centroids, &mut assignment);
    repair_empty(points, &mut centroids, &mut assignment, &mut inertia);
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        update(points, &assignment, &mut centroids);
        let mut next = assignment.clone();
        let mut next_inertia = assign(points, &centroids, &mut next);
        repair_empty(points, &mut centroids, &mut next, &mut next_inertia);
        history.push(next_inertia);
        let fixpoint = next == assignment;
        assignment = next;
        inertia = next_inertia;
        if fixpoint {
            break;
        }
    }

    Ok(ClusterAssignment {
        centroids,
        assignment,
        inertia,
        iterations,
        inertia_history: history,
    })
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng_for(seed, Purpose::Kmeans, 0);
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                if r < *d {
                    pick = Some(i);
                    break;
                }
                r -= d;
            }
            // rounding can run past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).unwrap())
        } else {
            // every remaining point coincides with a centroid
            chosen.iter().position(|c| !c).unwrap()
        };
        chosen[pick] = true;
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[pick]));
        }
        centroids.push(points[pick].clone());
    }
    centroids
}

/// Nearest centroid per point, ties to the lowest centroid index.
fn assign(points: &[Vec<f64>], centroids: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (p, a) in points.iter().zip(out.iter_mut()) {
        let mut best = (0, f64::INFINITY);
        for (c, cen) in centroids.iter().enumerate() {
            let d = sq_dist(p, cen);
            if d < best.1 {
                best = (c, d);
            }
        }
        *a = best.0;
        inertia += best.1;
    }
    inertia
}

fn update(points: &[Vec<f64>], assignment: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &a) in points.iter().zip(assignment) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
        if n > 0 {
            *c = s.into_iter().map(|v| v / n as f64).collect();
        }
    }
}

/// Moves each empty centroid onto the point farthest from its own centroid,
/// then reassigns. Stops when no point is off its centroid (all coincide).
fn repair_empty(
    points: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    assignment: &mut [usize],
    inertia: &mut f64,
) {
    for _ in 0..centroids.len() {
        let mut counts = vec![0usize; centroids.len()];
        for &a in assignment.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let mut far = (usize::MAX, 0.0);
        for (i, p) in points.iter().enumerate() {
            // only steal from clusters that keep at least one point
            if counts[assignment[i]] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[assignment[i]]);
            if d > far.1 {
                far = (i, d);
            }
        }
        if far.0 == usize::MAX {
            return;
        }
        centroids[empty] = points[far.0].clone();
        *inertia = assign(points, centroids, assignment);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> Vec<Vec<f64>> {
        vec![
            vec![0.0, 0.0],
            vec![0.1, 0.0],
            vec![0.0, 0.2],
            vec![0.2, 0.1],
            vec![5.0, 5.0],
            vec![5.1, 4.9],
            vec![4.8, 5.2],
        ]
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let pts = blobs();
        let c = kmeans(&pts, pts.len(), 3, 100).unwrap();
        assert_eq!(c.inertia, 0.0);
        let mut a = c.assignment.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), pts.len());
    }

    #[test]
    fn k_one_is_the_mean() {
        let pts = blobs();
        let c = kmeans(&pts, 1, 0, 100).unwrap();
        let n = pts.len() as f64;
        for d in 0..2 {
            let m: f64 = pts.iter().map(|p| p[d]).sum::<f64>() / n;
            assert!((c.centroids[0][d] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn separates_two_blobs() {
        let c = kmeans(&blobs(), 2, 9, 100).unwrap();
        let a = &c.assignment;
        assert!(a[..4].iter().all(|&x| x == a[0]));
        assert!(a[4..].iter().all(|&x| x == a[4]));
        assert_ne!(a[0], a[4]);
    }

    #[test]
    fn too_many_clusters() {
        assert!(kmeans(&blobs(), 8, 0, 10).is_err());
        assert!(kmeans(&blobs(), 0, 0, 10).is_err());
    }

    #[test]
    fn identical_points() {
        let pts = vec![vec![1.0, 1.0]; 5];
        let c = kmeans(&pts, 3, 0, 10).unwrap();
        assert_eq!(c.inertia, 0.0);
    }
}
