#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Hildreth's dual coordinate ascent for `min 0.5 x^T H x + c^T x`, `G x >= d`.
pub fn hildreth(h: &DMatrix<f64>, c: &DVector<f64>, g: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    let hinv = h.clone().try_inverse().unwrap();
    let m = g.nrows();
    let mut lam = DVector::zeros(m);
    let diag: Vec<f64> = (0..m)
        .map(|j| (g.row(j) * &hinv * g.row(j).transpose())[(0, 0)])
        .collect();
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for j in 0..m {
            let x = &hinv * (g.transpose() * &lam - c);
            let r = d[j] - (g.row(j) * &x)[(0, 0)];
            let new = (lam[j] + r / diag[j]).max(0.0);
            change = change.max((new - lam[j]).abs());
            lam[j] = new;
        }
        if change < 1e-14 {
            break;
        }
    }
    &hinv * (g.transpose() * &lam - c)
}

/// `(risk, improvement)` pairs not dominated by any other, sorted by risk.
/// O(n^2) on purpose.
pub fn non_dominated(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let dominated = |p: &(f64, f64)| {
        points
            .iter()
            .any(|q| q.0 <= p.0 && q.1 >= p.1 && (q.0 < p.0 || q.1 > p.1))
    };
    let mut out: Vec<(f64, f64)> = points.iter().filter(|p| !dominated(p)).copied().collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    out.dedup();
    out
}

/// Random subset of `0..n` of size `k`.
pub fn choose<R: rand::Rng>(n: usize, k: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..n {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    let mut out = idx[..k].to_vec();
    out.sort();
    out
}
