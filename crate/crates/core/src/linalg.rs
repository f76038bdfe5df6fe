//! Small dense complex linear algebra used throughout: Hermitian eigensolves,
//! Kronecker products, partial traces, matrix functions.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Unit-modulus phase factor e^{iθ}.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn kron_all(ms: &[CMat]) -> CMat {
    let mut it = ms.iter();
    let first = it.next().cloned().unwrap_or_else(|| CMat::identity(1, 1));
    it.fold(first, |acc, m| kron(&acc, m))
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigendecomposition of the Hermitian part of `m`, eigenvalues ascending.
pub fn herm_eig(m: &CMat) -> (Vec<f64>, CMat) {
    let h = hermitian_part(m);
    let n = h.nrows();
    let eig = nalgebra::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let vals = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (col, &i) in idx.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Rebuild V diag(λ) V†.
pub fn from_eig(vals: &[f64], vecs: &CMat) -> CMat {
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= l;
        }
    }
    &scaled * vecs.adjoint()
}

pub fn min_eig(m: &CMat) -> f64 {
    herm_eig(m).0.first().copied().unwrap_or(0.0)
}

/// Principal square root of a PSD matrix (negative eigenvalues clipped).
pub fn psd_sqrt(m: &CMat) -> CMat {
    let (vals, vecs) = herm_eig(m);
    let s: Vec<f64> = vals.iter().map(|&v| v.max(0.0).sqrt()).collect();
    from_eig(&s, &vecs)
}

/// Uhlmann fidelity (Tr√(√ρ σ √ρ))².
pub fn uhlmann(rho: &CMat, sigma: &CMat) -> f64 {
    let sr = psd_sqrt(rho);
    let inner = &sr * sigma * &sr;
    let (vals, _) = herm_eig(&inner);
    let t: f64 = vals.iter().map(|&v| v.max(0.0).sqrt()).sum();
    (t * t).min(1.0)
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().sum()
}

/// Re Tr(A B) without forming the product.
pub fn tr_prod(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut s = ZERO;
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// exp(−i H t) for Hermitian H.
pub fn expm_herm(h: &CMat, t: f64) -> CMat {
    let (vals, vecs) = herm_eig(h);
    let n = vecs.nrows();
    let mut scaled = vecs.clone();
    for (j, &l) in vals.iter().enumerate() {
        let ph = cis(-l * t);
        for i in 0..n {
            scaled[(i, j)] *= ph;
        }
    }
    &scaled * vecs.adjoint()
}

/// Trace out every subsystem not listed in `keep` (kept in ascending order).
pub fn partial_trace(rho: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let n = dims.len();
    let total: usize = dims.iter().product();
    assert_eq!(rho.nrows(), total, "partial_trace: dimension mismatch");
    let mut keep_sorted = keep.to_vec();
    keep_sorted.sort_unstable();
    let kd: usize = keep_sorted.iter().map(|&k| dims[k]).product();
    let mut out = CMat::zeros(kd, kd);
    let strides: Vec<usize> = (0..n)
        .map(|i| dims[i + 1..].iter().product::<usize>())
        .collect();
    let digits =
        |idx: usize| -> Vec<usize> { (0..n).map(|i| (idx / strides[i]) % dims[i]).collect() };
    let kept_index = |d: &[usize]| -> usize {
        keep_sorted
            .iter()
            .fold(0usize, |acc, &k| acc * dims[k] + d[k])
    };
    for r in 0..total {
        let dr = digits(r);
        for col in 0..total {
            let dc = digits(col);
            let traced_match = (0..n)
                .filter(|i| !keep_sorted.contains(i))
                .all(|i| dr[i] == dc[i]);
            if traced_match {
                out[(kept_index(&dr), kept_index(&dc))] += rho[(r, col)];
            }
        }
    }
    out
}

pub fn outer(v: &CVec) -> CMat {
    v * v.adjoint()
}

pub fn pauli(idx: usize) -> CMat {
    match idx {
        0 => CMat::identity(2, 2),
        1 => CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]),
        2 => CMat::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]),
        3 => CMat::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
        _ => panic!("pauli index {idx} out of range"),
    }
}

/// Euclidean projection of `v` onto the scaled simplex {x ≥ 0, Σx = total}.
pub fn project_simplex(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - total) / (i as f64 + 1.0);
        if ui - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Frobenius norm.
pub fn fro(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_projection_sums_to_total() {
        let p = project_simplex(&[0.7, -0.2, 0.9, 0.1], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| x >= 0.0));
        assert_eq!(project_simplex(&[0.25, 0.75], 1.0), vec![0.25, 0.75]);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let a = CMat::from_row_slice(2, 2, &[c(0.3, 0.), c(0.1, 0.2), c(0.1, -0.2), c(0.7, 0.)]);
        let b = CMat::from_diagonal(&CVec::from_vec(vec![c(0.2, 0.), c(0.5, 0.), c(0.3, 0.)]));
        let ab = kron(&a, &b);
        let ra = partial_trace(&ab, &[2, 3], &[0]);
        let rb = partial_trace(&ab, &[2, 3], &[1]);
        assert!(fro(&(ra - &a)) < 1e-12);
        assert!(fro(&(rb - &b)) < 1e-12);
    }

    #[test]
    fn uhlmann_pure_states_is_overlap() {
        let v = CVec::from_vec(vec![c(0.6, 0.), c(0., 0.8)]);
        let w = CVec::from_vec(vec![c(1., 0.), c(0., 0.)]);
        let f = uhlmann(&outer(&v), &outer(&w));
        assert!((f - 0.36).abs() < 1e-9);
    }

    #[test]
    fn expm_is_unitary() {
        let h = CMat::from_row_slice(2, 2, &[c(1., 0.), c(0.3, 0.4), c(0.3, -0.4), c(-0.5, 0.)]);
        let u = expm_herm(&h, 0.7);
        let id = &u * u.adjoint();
        assert!(fro(&(id - CMat::identity(2, 2))) < 1e-12);
    }
}
