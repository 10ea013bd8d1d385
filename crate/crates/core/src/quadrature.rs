//! Quadrature rules shared by the coefficient integrals, Cesàro means and
//! the Duhamel step.

use crate::error::QuadratureError;

// Gauss–Kronrod 7/15 abscissae and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Settings for [`integrate_adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveRule {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for AdaptiveRule {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            rel_tol: 0.0,
            max_subdivisions: 4096,
        }
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK.iter().take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) integration of `f` over `[a, b]`.
///
/// The interval with the largest error estimate is bisected until the summed
/// estimate meets `max(abs_tol, rel_tol·|I|)` or the subdivision cap is hit.
pub fn integrate_adaptive<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rule: AdaptiveRule,
) -> Result<f64, QuadratureError> {
    if a == b {
        return Ok(0.0);
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(QuadratureError::NonFinite { a, b });
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let (v, e) = gk15(&f, lo, hi);
    let mut pieces = vec![(lo, hi, v, e)];
    let mut total = v;
    let mut err = e;
    loop {
        if !total.is_finite() {
            return Err(QuadratureError::NonFinite { a, b });
        }
        let target = rule.abs_tol.max(rule.rel_tol * total.abs());
        if err <= target {
            return Ok(sign * total);
        }
        if pieces.len() >= rule.max_subdivisions {
            return Err(QuadratureError::SubdivisionCap {
                a,
                b,
                estimate: err,
                cap: rule.max_subdivisions,
            });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (pa, pb, pv, pe) = pieces.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        if mid <= pa || mid >= pb {
            // interval below f64 resolution; accept what we have
            return Ok(sign * total);
        }
        let (lv, le) = gk15(&f, pa, mid);
        let (rv, re) = gk15(&f, mid, pb);
        total += lv + rv - pv;
        err += le + re - pe;
        pieces.push((pa, mid, lv, le));
        pieces.push((mid, pb, rv, re));
        // resum to keep accumulated cancellation out of the estimate
        if pieces.len() % 64 == 0 {
            total = pieces.iter().map(|p| p.2).sum();
            err = pieces.iter().map(|p| p.3).sum();
        }
    }
}

/// Integrate over `[a, b]` by splitting into panels no wider than `panel`
/// and running the adaptive rule on each. Used for long oscillatory ranges.
pub fn integrate_paneled<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    panel: f64,
    rule: AdaptiveRule,
) -> Result<f64, QuadratureError> {
    let width = (b - a).abs();
    if width == 0.0 {
        return Ok(0.0);
    }
    let count = (width / panel).ceil().max(1.0) as usize;
    let h = (b - a) / count as f64;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for k in 0..count {
        let lo = a + h * k as f64;
        let hi = if k + 1 == count { b } else { a + h * (k + 1) as f64 };
        let piece = integrate_adaptive(&f, lo, hi, rule)?;
        // Kahan summation: thousands of panels at small λ
        let y = piece - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    Ok(sum)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Composite-rule weights on a uniform mesh of `intervals` panels that are
/// fourth-order accurate for any panel count: Simpson on an even number of
/// panels, with a closing 3/8 block when the count is odd.
pub fn composite_fourth_order_weights(intervals: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; intervals + 1];
    match intervals {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        2 => simpson_block(&mut w, 0, h),
        _ => {
            let simpson_panels = if intervals % 2 == 0 { intervals } else { intervals - 3 };
            let mut j = 0;
            while j < simpson_panels {
                simpson_block(&mut w, j, h);
                j += 2;
            }
            if simpson_panels < intervals {
                let s = 3.0 * h / 8.0;
                w[j] += s;
                w[j + 1] += 3.0 * s;
                w[j + 2] += 3.0 * s;
                w[j + 3] += s;
            }
        }
    }
    w
}

fn simpson_block(w: &mut [f64], j: usize, h: f64) {
    let s = h / 3.0;
    w[j] += s;
    w[j + 1] += 4.0 * s;
    w[j + 2] += s;
}
