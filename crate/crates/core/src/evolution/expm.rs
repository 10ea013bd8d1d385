//! Dense matrix exponential and spectral norm.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::EvolutionError;

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^{−tA}` by Padé scaling and squaring (degrees 3–13). Diagonal input is
/// exponentiated entrywise.
pub fn matrix_exponential(a: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>, EvolutionError> {
    if !a.is_square() || a.nrows() == 0 {
        return Err(EvolutionError::BadDimension(a.nrows()));
    }
    if t < 0.0 {
        return Err(EvolutionError::Backwards { s: 0.0, t });
    }
    if !t.is_finite() || a.iter().any(|v| !v.is_finite()) {
        return Err(EvolutionError::NonFinite);
    }
    let n = a.nrows();
    let x = a * (-t);
    let is_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || x[(i, j)] == 0.0));
    let result = if is_diagonal {
        DMatrix::from_diagonal(&x.diagonal().map(f64::exp))
    } else {
        pade_exp(&x)?
    };
    if result.iter().any(|v| !v.is_finite()) {
        return Err(EvolutionError::ExpOverflow { norm: one_norm(a), t });
    }
    Ok(result)
}

fn pade_exp(x: &DMatrix<f64>) -> Result<DMatrix<f64>, EvolutionError> {
    let n = x.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let norm = one_norm(x);
    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let x2 = x * x;
            let mut even = &id * b[0];
            let mut odd = &id * b[1];
            let mut power = id.clone();
            for k in 1..=m / 2 {
                power = &power * &x2;
                even += &power * b[2 * k];
                odd += &power * b[2 * k + 1];
            }
            return solve_pade(x * odd, even, x.norm());
        }
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let xs = x * 2f64.powi(-s);
    let b = &B13;
    let x2 = &xs * &xs;
    let x4 = &x2 * &x2;
    let x6 = &x4 * &x2;
    let u_inner = &x6 * (&x6 * b[13] + &x4 * b[11] + &x2 * b[9]) + &x6 * b[7] + &x4 * b[5] + &x2 * b[3] + &id * b[1];
    let u = &xs * u_inner;
    let v = &x6 * (&x6 * b[12] + &x4 * b[10] + &x2 * b[8]) + &x6 * b[6] + &x4 * b[4] + &x2 * b[2] + &id * b[0];
    let mut r = solve_pade(u, v, norm)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn solve_pade(u: DMatrix<f64>, v: DMatrix<f64>, norm: f64) -> Result<DMatrix<f64>, EvolutionError> {
    let q = &v - &u;
    let p = &v + &u;
    q.lu()
        .solve(&p)
        .ok_or(EvolutionError::ExpOverflow { norm, t: 1.0 })
}

/// Largest singular value by power iteration on `MᵀM` from a fixed seed.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 0 || m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut v = nalgebra::DVector::from_fn(m.ncols(), |_, _| rng.random::<f64>() - 0.5);
    v /= v.norm();
    let gram = m.transpose() * m;
    let mut estimate = 0.0;
    for _ in 0..2000 {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
        if (norm - estimate).abs() <= 1e-15 * norm {
            estimate = norm;
            break;
        }
        estimate = norm;
    }
    (m * &v).norm().max(estimate.sqrt())
}
