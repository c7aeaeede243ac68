use super::{splitmix64, DenseVector};
use crate::types::{SparseVector, TermId};

/// +1 or -1 for (term, row), from a keyed hash.
pub(crate) fn projection_sign(term: TermId, row: u32, seed: u64) -> f32 {
    let h = splitmix64(seed ^ ((term as u64) << 32 | row as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    if h & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Signed random projection of a sparse vector to `dims` dimensions.
pub fn random_projection(sparse: &SparseVector, dims: usize, seed: u64) -> DenseVector {
    let mut out = vec![0.0f32; dims];
    for &(t, w) in sparse.entries() {
        for (r, slot) in out.iter_mut().enumerate() {
            *slot += projection_sign(t, r as u32, seed) * w as f32;
        }
    }
    DenseVector(out)
}

/// Same projection over real-valued weights.
pub(crate) fn project_raw(entries: &[(TermId, f32)], dims: usize, seed: u64) -> Vec<f32> {
    let mut out = vec![0.0f32; dims];
    for &(t, w) in entries {
        for (r, slot) in out.iter_mut().enumerate() {
            *slot += projection_sign(t, r as u32, seed) * w;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_vector_projects_to_zero() {
        assert_eq!(random_projection(&SparseVector::empty(), 16, 3), DenseVector::zeros(16));
    }

    #[test]
    fn additive_over_disjoint_terms() {
        let a = SparseVector::new([(1, 3), (7, 2)]).unwrap();
        let b = SparseVector::new([(2, 5), (9, 1)]).unwrap();
        let both = SparseVector::new([(1, 3), (7, 2), (2, 5), (9, 1)]).unwrap();
        let pa = random_projection(&a, 32, 11);
        let pb = random_projection(&b, 32, 11);
        let sum: Vec<f32> = pa.values().iter().zip(pb.values()).map(|(x, y)| x + y).collect();
        assert_eq!(random_projection(&both, 32, 11).values(), &sum[..]);
    }

    fn sparse_cosine(a: &SparseVector, b: &SparseVector) -> f64 {
        let na: f64 = a.entries().iter().map(|&(_, w)| (w as f64).powi(2)).sum();
        let nb: f64 = b.entries().iter().map(|&(_, w)| (w as f64).powi(2)).sum();
        a.dot(b) as f64 / (na.sqrt() * nb.sqrt())
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn projected_cosine_tracks_sparse_cosine() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut sparse_sims = Vec::new();
        let mut dense_sims = Vec::new();
        for _ in 0..1000 {
            // b keeps a random share of a's terms and replaces the rest
            let a: Vec<(u32, u32)> = (0..30).map(|i| (i * 97 % 5000 + rng.random_range(0..90) * 5000, rng.random_range(1..256))).collect();
            let keep = rng.random::<f64>();
            let b: Vec<(u32, u32)> = a.iter().map(|&(t, w)| if rng.random::<f64>() < keep { (t, w) } else { (t + 1_000_000, w) }).collect();
            let (a, b) = (SparseVector::new(a).unwrap(), SparseVector::new(b).unwrap());
            sparse_sims.push(sparse_cosine(&a, &b));
            dense_sims.push(random_projection(&a, 64, 1).cosine(&random_projection(&b, 64, 1)));
        }
        let r = pearson(&sparse_sims, &dense_sims);
        assert!(r > 0.5, "pearson r = {r}");
    }
}
