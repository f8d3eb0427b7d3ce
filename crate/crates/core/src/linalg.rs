//! Dense linear-algebra helpers shared by the reduction pipeline.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::operator::{CMatrix, Operator, C64, ZERO};

pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigen-decomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), CMatrix::zeros(0, 0));
    }
    let eig = hermitian_part(m).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Connected components of the sparsity graph of a square matrix: `i ~ j` when
/// `|m_ij|` or `|m_ji|` exceeds `threshold`. Components are sorted by their
/// smallest index; indices inside a component are ascending.
pub fn sparsity_components(m: &CMatrix, threshold: f64) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for j in 0..n {
        for i in 0..n {
            if i != j && m[(i, j)].norm() > threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

pub fn submatrix(m: &CMatrix, rows: &[usize], cols: &[usize]) -> CMatrix {
    CMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

/// Spectrum of a Hermitian matrix computed component by component over its
/// sparsity pattern. Entries below `1e-13 · max|m_ij|` are treated as zero; the
/// Frobenius norm of the discarded entries bounds the eigenvalue perturbation
/// and is returned alongside.
pub struct BlockSpectrum {
    /// `(eigenvalue, eigenvector)` pairs; eigenvectors are full-length.
    pub pairs: Vec<(f64, nalgebra::DVector<C64>)>,
    pub dropped_norm: f64,
}

pub fn block_hermitian_spectrum(m: &CMatrix, with_vectors: bool) -> BlockSpectrum {
    let n = m.nrows();
    let h = hermitian_part(m);
    let max = h.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let threshold = 1e-13 * max;
    let comps = sparsity_components(&h, threshold);
    let mut in_comp = vec![0usize; n];
    for (c, comp) in comps.iter().enumerate() {
        for &i in comp {
            in_comp[i] = c;
        }
    }
    let mut dropped = 0.0;
    for j in 0..n {
        for i in 0..n {
            if in_comp[i] != in_comp[j] {
                dropped += h[(i, j)].norm_sqr();
            }
        }
    }
    let mut pairs = Vec::with_capacity(n);
    for comp in &comps {
        let sub = submatrix(&h, comp, comp);
        if with_vectors {
            let (vals, vecs) = hermitian_eigen(&sub);
            for (k, &v) in vals.iter().enumerate() {
                let mut full = nalgebra::DVector::from_element(n, ZERO);
                for (a, &i) in comp.iter().enumerate() {
                    full[i] = vecs[(a, k)];
                }
                pairs.push((v, full));
            }
        } else {
            let vals = if sub.nrows() == 1 {
                vec![sub[(0, 0)].re]
            } else {
                sub.symmetric_eigenvalues().iter().cloned().collect()
            };
            for v in vals {
                pairs.push((v, nalgebra::DVector::zeros(0)));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    BlockSpectrum {
        pairs,
        dropped_norm: dropped.sqrt(),
    }
}

/// Smallest eigenvalue of a Hermitian matrix, exploiting sparsity.
pub fn min_hermitian_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let s = block_hermitian_spectrum(m, false);
    s.pairs.first().map(|p| p.0).unwrap_or(0.0) - s.dropped_norm
}

/// Orthonormal basis (columns) of the right null space of `m`; singular values
/// up to `tol · σ_max` count as zero.
pub fn null_space(m: &CMatrix, tol: f64) -> CMatrix {
    let cols = m.ncols();
    if cols == 0 {
        return CMatrix::zeros(0, 0);
    }
    // SVD only returns a full V when rows ≥ cols.
    let padded;
    let a = if m.nrows() < cols {
        let mut p = CMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (m.nrows(), cols)).copy_from(m);
        padded = p;
        &padded
    } else {
        m
    };
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cut = tol * smax.max(f64::MIN_POSITIVE);
    let idx: Vec<usize> = (0..cols)
        .filter(|&k| svd.singular_values[k] <= cut || smax == 0.0)
        .collect();
    let mut out = CMatrix::zeros(cols, idx.len());
    for (dst, &k) in idx.iter().enumerate() {
        let row = v_t.row(k);
        for r in 0..cols {
            out[(r, dst)] = row[r].conj();
        }
    }
    out
}

/// Unitary polar factor `U V†` of a square matrix.
pub fn polar_unitary(m: &CMatrix) -> CMatrix {
    let svd = m.clone().svd(true, true);
    svd.u.expect("U") * svd.v_t.expect("V")
}

/// Groups ascending eigenvalues: a new cluster starts whenever the gap to the
/// previous value exceeds `rel_gap · (max − min)`.
pub fn cluster_sorted(values: &[f64], rel_gap: f64) -> Vec<Vec<usize>> {
    if values.is_empty() {
        return Vec::new();
    }
    let range = values[values.len() - 1] - values[0];
    let scale = values.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1.0);
    if range <= 1e-13 * scale {
        return vec![(0..values.len()).collect()];
    }
    let gap = rel_gap * range;
    let mut clusters = vec![vec![0]];
    for k in 1..values.len() {
        if values[k] - values[k - 1] > gap {
            clusters.push(Vec::new());
        }
        clusters.last_mut().unwrap().push(k);
    }
    clusters
}

/// Estimate of the spectral norm by power iteration on `m† m`.
pub fn spectral_norm_estimate(m: &CMatrix) -> f64 {
    let n = m.ncols();
    if n == 0 {
        return 0.0;
    }
    let mut v = nalgebra::DVector::from_fn(n, |i, _| C64::new(1.0 + 0.1 * (i % 7) as f64, 0.05 * (i % 3) as f64));
    v /= C64::new(v.norm(), 0.0);
    let mut est = 0.0;
    for _ in 0..60 {
        let w = m * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return m.norm().min(est).max(0.0);
        }
        let z = m.adjoint() * w;
        let nz = z.norm();
        let next = nz.sqrt();
        v = z / C64::new(nz, 0.0);
        if (next - est).abs() <= 1e-6 * next {
            est = next;
            break;
        }
        est = next;
    }
    // Power iteration underestimates; never report below the max column norm.
    let colmax = (0..n).map(|j| m.column(j).norm()).fold(0.0, f64::max);
    est.max(colmax)
}

/// Matrix exponential applied block-wise over the given index components.
/// Entries coupling different components must be zero.
pub fn expm_blocks(m: &CMatrix, comps: &[Vec<usize>]) -> Vec<CMatrix> {
    comps
        .iter()
        .map(|comp| {
            let sub = submatrix(m, comp, comp);
            if sub.nrows() == 1 {
                CMatrix::from_element(1, 1, sub[(0, 0)].exp())
            } else {
                sub.exp()
            }
        })
        .collect()
}

pub fn random_complex<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im)
}

pub fn random_real<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Complex Gaussian operator (Ginibre ensemble).
pub fn random_operator<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Operator {
    Operator::from_matrix_unchecked(CMatrix::from_fn(n, n, |_, _| random_complex(rng)))
}

pub fn random_hermitian<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Operator {
    let a = random_operator(n, rng);
    Operator::from_matrix_unchecked(hermitian_part(a.matrix()))
}

/// Haar-ish unitary from the polar factor of a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    let a = random_operator(n, rng);
    polar_unitary(a.matrix())
}

/// Full-rank mixed state `G G† / tr(G G†)`.
pub fn random_density<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Operator {
    let g = random_operator(n, rng);
    let m = g.matrix() * g.matrix().adjoint();
    let tr = m.trace();
    Operator::from_matrix_unchecked(hermitian_part(&(m / tr)))
}

/// Mixed state of rank `rank`.
pub fn random_density_rank<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> Operator {
    let g = CMatrix::from_fn(n, rank.max(1), |_, _| random_complex(rng));
    let m = &g * g.adjoint();
    let tr = m.trace();
    Operator::from_matrix_unchecked(hermitian_part(&(m / tr)))
}

pub fn real_matrix(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ONE;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn block_spectrum_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_hermitian(3, &mut rng);
        let b = random_hermitian(2, &mut rng);
        // Interleave the two blocks so that components are not contiguous.
        let idx_a = [0usize, 2, 4];
        let idx_b = [1usize, 3];
        let mut m = CMatrix::zeros(5, 5);
        for (x, &i) in idx_a.iter().enumerate() {
            for (y, &j) in idx_a.iter().enumerate() {
                m[(i, j)] = a.matrix()[(x, y)];
            }
        }
        for (x, &i) in idx_b.iter().enumerate() {
            for (y, &j) in idx_b.iter().enumerate() {
                m[(i, j)] = b.matrix()[(x, y)];
            }
        }
        let comps = sparsity_components(&m, 0.0);
        assert_eq!(comps, vec![vec![0, 2, 4], vec![1, 3]]);
        let (dense, _) = hermitian_eigen(&m);
        let s = block_hermitian_spectrum(&m, true);
        for (k, (v, vec)) in s.pairs.iter().enumerate() {
            assert!((v - dense[k]).abs() < 1e-12);
            let r = &m * vec - vec * C64::new(*v, 0.0);
            assert!(r.norm() < 1e-12);
        }
        assert!((min_hermitian_eigenvalue(&m) - dense[0]).abs() < 1e-12);
    }

    #[test]
    fn null_space_of_rank_deficient() {
        let m = CMatrix::from_row_slice(2, 3, &[ONE, ZERO, ZERO, ZERO, ONE, ZERO]);
        let ns = null_space(&m, 1e-12);
        assert_eq!(ns.ncols(), 1);
        assert!((ns[(2, 0)].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn clustering() {
        let c = cluster_sorted(&[-1.0, -1.0 + 1e-12, 0.5, 2.0, 2.0], 1e-8);
        assert_eq!(c, vec![vec![0, 1], vec![2], vec![3, 4]]);
        assert_eq!(cluster_sorted(&[3.0, 3.0], 1e-8), vec![vec![0, 1]]);
    }

    #[test]
    fn polar_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(4, &mut rng);
        assert!((u.adjoint() * &u - CMatrix::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn spectral_norm_estimate_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_operator(6, &mut rng);
        let exact = a.operator_norm();
        let est = spectral_norm_estimate(a.matrix());
        assert!((est - exact).abs() < 1e-3 * exact);
    }
}
