//! Spherical k-means kernel shared by initialization, splitting, and the
//! fixed-partition baseline.
//!
//! Points are unit vectors, so nearest-centroid assignment by Euclidean
//! distance equals assignment by cosine; centroids are renormalized means.
//! All arithmetic runs in f64 and converts to f32 storage only at the end.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embed::EmbeddingVector;
use crate::error::{EngineError, Result};

pub const KMEANS_RESTARTS: usize = 4;
pub const KMEANS_MAX_ITERATIONS: usize = 100;
pub const KMEANS_SHIFT_TOLERANCE: f64 = 1e-6;
/// Bisections of at most this many points are solved exactly by enumerating
/// all 2-partitions instead of running Lloyd's. Restarted Lloyd's can settle
/// in a local optimum even at this scale (k-means++ favors near-antipodal
/// seeds whose basin may exclude the global minimum), and exhaustive search
/// costs at most 2^15 partition evaluations here.
pub const KMEANS_EXACT_BISECTION_LIMIT: usize = 16;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    /// Point index to centroid index.
    pub assignments: Vec<usize>,
    pub centroids: Vec<EmbeddingVector>,
    /// Total squared Euclidean distance of points to their centroids.
    pub inertia: f64,
    /// Lloyd's rounds used by the winning restart.
    pub iterations: usize,
}

/// Seeded k-means with `KMEANS_RESTARTS` k-means++ restarts; the lowest
/// inertia wins (first restart on ties). Bisections of up to
/// `KMEANS_EXACT_BISECTION_LIMIT` points bypass Lloyd's and are solved
/// exactly, so at that scale the returned inertia is the true minimum.
pub fn kmeans(points: &[&EmbeddingVector], k: usize, seed: u64) -> Result<KMeansResult> {
    if k < 1 {
        return Err(EngineError::InvalidArgument("kmeans needs k >= 1".into()));
    }
    if points.len() < k {
        return Err(EngineError::InvalidArgument(format!(
            "kmeans needs at least k={k} points, got {}",
            points.len()
        )));
    }
    let data: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.as_slice().iter().map(|&x| x as f64).collect())
        .collect();

    let mut best: Option<Candidate> = None;
    if k == 2 && data.len() <= KMEANS_EXACT_BISECTION_LIMIT {
        best = exact_bisection(&data);
    }
    if best.is_none() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..KMEANS_RESTARTS {
            let centers = seed_plus_plus(&data, k, &mut rng);
            let (assignments, centers, iterations) = lloyd(&data, centers);
            let inertia = total_inertia(&data, &assignments, &centers);
            if best.as_ref().map(|(i, ..)| inertia < *i).unwrap_or(true) {
                best = Some((inertia, assignments, centers, iterations));
            }
        }
    }
    let (inertia, assignments, centers, iterations) = best.unwrap();
    let centroids = centers
        .into_iter()
        .map(|c| EmbeddingVector::new(c.iter().map(|&x| x as f32).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia,
        iterations,
    })
}

/// One candidate clustering: inertia, assignments, centers, iterations.
type Candidate = (f64, Vec<usize>, Vec<Vec<f64>>, usize);

/// Exhaustive minimum-inertia 2-partition. Point 0 is pinned to side 0 to
/// halve the search; sides whose members cancel to the zero vector cannot
/// carry a unit centroid and are skipped. Returns None when every split is
/// degenerate, letting the caller fall back to Lloyd's.
fn exact_bisection(data: &[Vec<f64>]) -> Option<Candidate> {
    let n = data.len();
    if n < 2 {
        return None;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for mask in 1u32..(1u32 << (n - 1)) {
        let assignments: Vec<usize> = (0..n)
            .map(|i| {
                if i == 0 {
                    0
                } else {
                    ((mask >> (i - 1)) & 1) as usize
                }
            })
            .collect();
        let mut inertia = 0.0;
        let mut degenerate = false;
        for side in 0..2 {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == side).collect();
            let Some(centroid) = spherical_mean(data, &members) else {
                degenerate = true;
                break;
            };
            for &m in &members {
                inertia += squared_distance(&data[m], &centroid);
            }
        }
        if !degenerate && best.as_ref().map(|(i, _)| inertia < *i).unwrap_or(true) {
            best = Some((inertia, assignments));
        }
    }
    let (inertia, assignments) = best?;
    let centers: Vec<Vec<f64>> = (0..2)
        .map(|side| {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == side).collect();
            spherical_mean(data, &members).expect("winning split has unit centroids")
        })
        .collect();
    Some((inertia, assignments, centers, 1))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

fn nearest_center(point: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best_index = 0;
    let mut best_distance = squared_distance(point, &centers[0]);
    for (index, center) in centers.iter().enumerate().skip(1) {
        let distance = squared_distance(point, center);
        if distance < best_distance {
            best_distance = distance;
            best_index = index;
        }
    }
    (best_index, best_distance)
}

fn total_inertia(data: &[Vec<f64>], assignments: &[usize], centers: &[Vec<f64>]) -> f64 {
    data.iter()
        .zip(assignments)
        .map(|(point, &a)| squared_distance(point, &centers[a]))
        .sum()
}

/// k-means++: first center uniform, later centers drawn with probability
/// proportional to squared distance from the nearest chosen center.
fn seed_plus_plus(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(data[rng.gen_range(0..data.len())].clone());
    let mut distances: Vec<f64> = data
        .iter()
        .map(|p| squared_distance(p, &centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = distances.iter().sum();
        let chosen = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = data.len() - 1;
            for (index, &weight) in distances.iter().enumerate() {
                if target < weight {
                    chosen = index;
                    break;
                }
                target -= weight;
            }
            chosen
        } else {
            // All points coincide with a chosen center; duplicates are fine.
            rng.gen_range(0..data.len())
        };
        centers.push(data[chosen].clone());
        for (index, point) in data.iter().enumerate() {
            let distance = squared_distance(point, centers.last().unwrap());
            if distance < distances[index] {
                distances[index] = distance;
            }
        }
    }
    centers
}

/// Renormalized mean of the member points; None when they cancel out.
fn spherical_mean(data: &[Vec<f64>], members: &[usize]) -> Option<Vec<f64>> {
    let dim = data[0].len();
    let mut sum = vec![0.0f64; dim];
    for &m in members {
        for (slot, &x) in sum.iter_mut().zip(&data[m]) {
            *slot += x;
        }
    }
    let norm: f64 = sum.iter().map(|&x| x * x).sum::<f64>().sqrt();
    if norm <= f64::EPSILON {
        return None;
    }
    for slot in sum.iter_mut() {
        *slot /= norm;
    }
    Some(sum)
}

fn lloyd(data: &[Vec<f64>], mut centers: Vec<Vec<f64>>) -> (Vec<usize>, Vec<Vec<f64>>, usize) {
    let mut assignments = vec![0usize; data.len()];
    let mut iterations = 0;
    for _ in 0..KMEANS_MAX_ITERATIONS {
        iterations += 1;
        for (index, point) in data.iter().enumerate() {
            assignments[index] = nearest_center(point, &centers).0;
        }
        repair_empty(data, &mut assignments, &centers);

        let mut shift: f64 = 0.0;
        for (center_index, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..data.len())
                .filter(|&i| assignments[i] == center_index)
                .collect();
            if members.is_empty() {
                continue;
            }
            if let Some(mean) = spherical_mean(data, &members) {
                shift = shift.max(squared_distance(&mean, center).sqrt());
                *center = mean;
            }
        }
        if shift < KMEANS_SHIFT_TOLERANCE {
            break;
        }
    }
    (assignments, centers, iterations)
}

/// Give each memberless centroid the point farthest from its assigned
/// centroid. When every point sits exactly on its centroid there is nothing
/// to move and the duplicate centroid stays (degenerate geometry).
fn repair_empty(data: &[Vec<f64>], assignments: &mut [usize], centers: &[Vec<f64>]) {
    loop {
        let mut counts = vec![0usize; centers.len()];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut farthest: Option<(usize, f64)> = None;
        for (index, point) in data.iter().enumerate() {
            // Only steal from clusters that can spare a member.
            if counts[assignments[index]] <= 1 {
                continue;
            }
            let distance = squared_distance(point, &centers[assignments[index]]);
            if farthest.map(|(_, d)| distance > d).unwrap_or(true) {
                farthest = Some((index, distance));
            }
        }
        match farthest {
            Some((index, distance)) if distance > 0.0 => assignments[index] = empty,
            // Coincident points: duplicate centroids allowed, stop repairing.
            _ => return,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(xs: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    /// Independent oracle: enumerate every 2-partition, compute renormalized
    /// mean centroids, return the minimum inertia.
    fn bisection_oracle(points: &[EmbeddingVector]) -> f64 {
        let n = points.len();
        let data: Vec<Vec<f64>> = points
            .iter()
            .map(|p| p.as_slice().iter().map(|&x| x as f64).collect())
            .collect();
        let mut best = f64::INFINITY;
        // Fix point 0 in side A to halve the enumeration; skip the empty B.
        for mask in 0..(1u32 << (n - 1)) {
            let sides: Vec<usize> = (0..n)
                .map(|i| {
                    if i == 0 {
                        0
                    } else {
                        ((mask >> (i - 1)) & 1) as usize
                    }
                })
                .collect();
            if !sides.contains(&1) {
                continue;
            }
            let mut inertia = 0.0;
            let mut degenerate = false;
            for side in 0..2 {
                let members: Vec<usize> = (0..n).filter(|&i| sides[i] == side).collect();
                let dim = data[0].len();
                let mut sum = vec![0.0f64; dim];
                for &m in &members {
                    for (slot, &x) in sum.iter_mut().zip(&data[m]) {
                        *slot += x;
                    }
                }
                let norm: f64 = sum.iter().map(|&x| x * x).sum::<f64>().sqrt();
                if norm <= f64::EPSILON {
                    degenerate = true;
                    break;
                }
                let centroid: Vec<f64> = sum.iter().map(|&x| x / norm).collect();
                for &m in &members {
                    inertia += data[m]
                        .iter()
                        .zip(&centroid)
                        .map(|(&x, &c)| (x - c) * (x - c))
                        .sum::<f64>();
                }
            }
            if !degenerate && inertia < best {
                best = inertia;
            }
        }
        best
    }

    #[test]
    fn k1_returns_normalized_mean() {
        let points = [unit(&[1.0, 0.0]), unit(&[0.0, 1.0])];
        let refs: Vec<&EmbeddingVector> = points.iter().collect();
        let result = kmeans(&refs, 1, 0).unwrap();
        assert_eq!(result.assignments, vec![0, 0]);
        let c = result.centroids[0].as_slice();
        let expected = (0.5f64).sqrt() as f32;
        assert!((c[0] - expected).abs() < 1e-6);
        assert!((c[1] - expected).abs() < 1e-6);
    }

    #[test]
    fn well_separated_pairs_split_cleanly() {
        let points = vec![
            unit(&[1.0, 0.0]),
            unit(&[0.99, 0.14]),
            unit(&[0.0, 1.0]),
            unit(&[0.14, 0.99]),
        ];
        let refs: Vec<&EmbeddingVector> = points.iter().collect();
        let result = kmeans(&refs, 2, 7).unwrap();
        assert_eq!(result.assignments[0], result.assignments[1]);
        assert_eq!(result.assignments[2], result.assignments[3]);
        assert_ne!(result.assignments[0], result.assignments[2]);
        let oracle = bisection_oracle(&points);
        assert!(
            (result.inertia - oracle).abs() < 1e-9,
            "engine {} vs oracle {oracle}",
            result.inertia
        );
    }

    #[test]
    fn identical_points_duplicate_centroids() {
        let points = vec![unit(&[1.0, 0.0]); 4];
        let refs: Vec<&EmbeddingVector> = points.iter().collect();
        let result = kmeans(&refs, 2, 3).unwrap();
        assert!(result.inertia.abs() < 1e-12);
        assert_eq!(result.centroids[0], result.centroids[1]);
    }

    #[test]
    fn deterministic_given_seed() {
        let points: Vec<EmbeddingVector> = (0..6)
            .map(|i| {
                let angle = i as f64 * 0.9;
                unit(&[angle.cos() as f32, angle.sin() as f32])
            })
            .collect();
        let refs: Vec<&EmbeddingVector> = points.iter().collect();
        let a = kmeans(&refs, 3, 42).unwrap();
        let b = kmeans(&refs, 3, 42).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.inertia, b.inertia);
        assert_eq!(a.centroids, b.centroids);
    }

    #[test]
    fn k_larger_than_points_is_an_error() {
        let points = vec![unit(&[1.0, 0.0])];
        let refs: Vec<&EmbeddingVector> = points.iter().collect();
        assert!(kmeans(&refs, 2, 0).is_err());
        assert!(kmeans(&refs, 0, 0).is_err());
    }

    #[test]
    fn random_instances_match_bisection_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let n = rng.gen_range(3..=8);
            let dim = rng.gen_range(2..=4);
            let points: Vec<EmbeddingVector> = (0..n)
                .map(|_| {
                    let raw: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
                    EmbeddingVector::new(raw).unwrap()
                })
                .collect();
            let refs: Vec<&EmbeddingVector> = points.iter().collect();
            let result = kmeans(&refs, 2, seed).unwrap();
            let oracle = bisection_oracle(&points);
            assert!(
                (result.inertia - oracle).abs() < 1e-9,
                "seed {seed}: engine {} vs oracle {oracle}",
                result.inertia
            );
        }
    }

    #[test]
    fn every_point_assigned_within_k() {
        let points: Vec<EmbeddingVector> = (0..9)
            .map(|i| {
                let angle = i as f64;
                unit(&[angle.cos() as f32, angle.sin() as f32, 0.2])
            })
            .collect();
        let refs: Vec<&EmbeddingVector> = points.iter().collect();
        let result = kmeans(&refs, 3, 11).unwrap();
        assert_eq!(result.assignments.len(), 9);
        assert!(result.assignments.iter().all(|&a| a < 3));
        assert_eq!(result.centroids.len(), 3);
        for c in 0..3 {
            assert!(result.assignments.contains(&c), "centroid {c} unused");
        }
    }
}
