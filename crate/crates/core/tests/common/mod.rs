#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use timeavg::evolution::MatrixFamily;
use timeavg::operator::{Coefficient, CoefficientFamily, DeclaredConstants};
use timeavg::spectral::{make_grid, SpectralGrid};

/// Dormand–Prince 5(4) with standard step control, integrating
/// `U' = −A(t)U`, `U(s) = I` up to `t`.
pub fn dopri5_propagator(a: impl Fn(f64) -> DMatrix<f64>, n: usize, s: f64, t: f64, tol: f64) -> DMatrix<f64> {
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let rhs = |time: f64, u: &DMatrix<f64>| -(a(time) * u);
    let mut u = DMatrix::<f64>::identity(n, n);
    let mut time = s;
    let mut h = ((t - s) / 100.0).max(1e-6);
    while time < t {
        if time + h > t {
            h = t - time;
        }
        let mut k: Vec<DMatrix<f64>> = Vec::with_capacity(7);
        for i in 0..7 {
            let mut stage = u.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[i][j] != 0.0 {
                    stage += kj * (h * A[i][j]);
                }
            }
            k.push(rhs(time + C[i] * h, &stage));
        }
        let mut high = u.clone();
        let mut low = u.clone();
        for i in 0..7 {
            high += &k[i] * (h * B5[i]);
            low += &k[i] * (h * B4[i]);
        }
        let scale = 1.0 + u.amax().max(high.amax());
        let err = (&high - &low).amax() / (tol * scale);
        if err <= 1.0 {
            time += h;
            u = high;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    u
}

/// Composite Simpson rule with `n` (rounded up to even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = if n % 2 == 1 { n + 1 } else { n };
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        acc += f(a + h * i as f64) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

pub fn rotation(theta: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
}

/// `A(t) = R(t/4) diag(1, 3) R(t/4)ᵀ`; `[A(t), A(s)] ≠ 0`.
pub fn rotating_2x2() -> MatrixFamily {
    MatrixFamily::new(2, 1.0, |t| {
        let r = rotation(t / 4.0);
        &r * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[1.0, 3.0])) * r.transpose()
    })
    .unwrap()
}

/// Skew generator of the 4×4 rotation `Q(t) = exp(tW)`.
pub fn skew_4x4() -> DMatrix<f64> {
    DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0, 0.3, -0.1, 0.2, //
            -0.3, 0.0, 0.25, -0.15, //
            0.1, -0.25, 0.0, 0.35, //
            -0.2, 0.15, -0.35, 0.0,
        ],
    )
}

/// `A(t) = Q(t) diag(1,2,3,4) Q(t)ᵀ` with `Q(t) = exp(tW)`.
pub fn rotating_4x4() -> MatrixFamily {
    let w = skew_4x4();
    MatrixFamily::new(4, 1.0, move |t| {
        let q = skew_exp(&w, t);
        &q * DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(&[1.0, 2.0, 3.0, 4.0])) * q.transpose()
    })
    .unwrap()
}

/// `exp(tW)` by scaling and squaring of a 20-term Taylor series.
pub fn skew_exp(w: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let n = w.nrows();
    let squarings = ((t.abs() * w.norm()).log2().ceil().max(0.0) as u32) + 2;
    let m = w * (t / f64::from(2u32.pow(squarings)));
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..20 {
        term = &term * &m / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

pub fn declared(nu0: f64, c1: f64, c2: f64) -> DeclaredConstants {
    DeclaredConstants {
        nu0,
        c1,
        c2,
        holder_l: 1.0,
        holder_gamma: 1.0,
    }
}

/// `a(t) = 2 + cos t` with potential `g`.
pub fn cosine_family(g: f64) -> Arc<CoefficientFamily> {
    Arc::new(CoefficientFamily::scalar(
        Coefficient::cosine(2.0, 1.0, 1.0, 0.0),
        Coefficient::Constant(g),
        declared(1.0, g, g),
    ))
}

pub fn line_grid(points: usize) -> Arc<SpectralGrid> {
    make_grid(1, points, 2.0 * PI).unwrap()
}
