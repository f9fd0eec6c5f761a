//! Dense matrix exponential by scaling and squaring with diagonal Padé
//! approximants of degree 3, 5, 7, 9 or 13, chosen from the 1-norm.

use nalgebra::DMatrix;

/// Largest 1-norm for which the degree-m approximant is accurate to unit
/// roundoff in double precision.
const THETA: [(usize, f64); 5] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_230e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
    (13, 5.371_920_351_148_152),
];

/// Coefficients of the degree-m diagonal Padé numerator, normalized to b₀ = 1.
fn pade_coefficients(m: usize) -> Vec<f64> {
    let mut b = vec![1.0; m + 1];
    for j in 0..m {
        b[j + 1] = b[j] * (m - j) as f64 / (((2 * m - j) * (j + 1)) as f64);
    }
    b
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let b = pade_coefficients(m);
    let ident = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let (u, v) = if m == 13 {
        let a4 = &a2 * &a2;
        let a6 = &a4 * &a2;
        let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
            + &a6 * b[7]
            + &a4 * b[5]
            + &a2 * b[3]
            + &ident * b[1];
        let u = a * u_inner;
        let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
            + &a6 * b[6]
            + &a4 * b[4]
            + &a2 * b[2]
            + &ident * b[0];
        (u, v)
    } else {
        let mut even = vec![ident.clone(), a2.clone()];
        while even.len() <= m / 2 {
            let next = even.last().unwrap() * &a2;
            even.push(next);
        }
        let mut u_inner = DMatrix::zeros(n, n);
        let mut v = DMatrix::zeros(n, n);
        for (k, p) in even.iter().enumerate() {
            if 2 * k < m {
                u_inner += p * b[2 * k + 1];
            }
            v += p * b[2 * k];
        }
        (a * u_inner, v)
    };
    let denom = &v - &u;
    let numer = v + u;
    denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular for norms within theta")
}

/// `exp(a)` for a square matrix.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return DMatrix::from_element(n, n, f64::NAN);
    }
    for &(m, theta) in &THETA[..4] {
        if norm <= theta {
            return pade(a, m);
        }
    }
    let theta13 = THETA[4].1;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil() as i32
    } else {
        0
    };
    let mut r = pade(&(a * 2f64.powi(-s)), 13);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
