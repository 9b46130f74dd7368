//! Globally adaptive Gauss-Kronrod (10/21) quadrature for complex-valued
//! integrands, plus cached Gauss-Legendre rules.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::{Mutex, OnceLock};
use std::collections::HashMap;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208980224863,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-15,
            rel: 1e-10,
            max_intervals: 200_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
#[allow(dead_code)]
pub struct Estimate {
    pub value: Complex64,
    pub error: f64,
}

#[derive(Debug, Clone, Copy)]
struct Interval {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk21<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Interval {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    let mut fv = [(Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)); 10];
    for (j, slot) in fv.iter_mut().enumerate() {
        let dx = half * XGK[j];
        let (f1, f2) = (f(center - dx), f(center + dx));
        kronrod += (f1 + f2) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
        *slot = (f1, f2);
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[10] * (fc - mean).norm();
    for (j, &(f1, f2)) in fv.iter().enumerate() {
        resasc += WGK[j] * ((f1 - mean).norm() + (f2 - mean).norm());
    }
    let resasc = resasc * half.abs();
    let value = kronrod * half;
    let mut error = ((kronrod - gauss) * half).norm();
    if resasc != 0.0 && error != 0.0 {
        error = resasc * (200.0 * error / resasc).powf(1.5).min(1.0);
    }
    Interval { a, b, value, error }
}

/// Integrates `f` over the union of consecutive intervals given by sorted
/// `breakpoints`, refining the worst interval until the summed error estimate
/// is below `max(abs, rel * |value|)`.
pub fn integrate<F: Fn(f64) -> Complex64>(f: F, breakpoints: &[f64], tol: Tolerance) -> Result<Estimate> {
    if breakpoints.len() < 2 {
        return Err(Error::Domain("integration needs at least two breakpoints".into()));
    }
    let mut heap = BinaryHeap::with_capacity(breakpoints.len() * 2);
    for w in breakpoints.windows(2) {
        if w[1] > w[0] {
            heap.push(gk21(&f, w[0], w[1]));
        }
    }
    let total = |heap: &BinaryHeap<Interval>| -> (Complex64, f64) {
        heap.iter().fold((Complex64::new(0.0, 0.0), 0.0), |(v, e), iv| (v + iv.value, e + iv.error))
    };
    let (mut value, mut error) = total(&heap);
    let mut steps = 0usize;
    while error > tol.abs.max(tol.rel * value.norm()) {
        if heap.len() >= tol.max_intervals {
            return Err(Error::QuadratureFailure(format!(
                "error estimate {error:e} on |I| = {:e} after {} intervals",
                value.norm(),
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::QuadratureFailure(format!(
                "interval [{}, {}] cannot be bisected further",
                worst.a, worst.b
            )));
        }
        let left = gk21(&f, worst.a, mid);
        let right = gk21(&f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        steps += 1;
        // Re-sum periodically so incremental updates do not drift.
        if steps % 512 == 0 {
            (value, error) = total(&heap);
        }
    }
    let (value, error) = total(&heap);
    Ok(Estimate { value, error })
}

/// Integrates `f` over `[0, upper]` when `f(ω) ~ ω^{p}` with `p > -1` near the
/// origin, through `ω = upper · u^m` so the transformed integrand vanishes at
/// `u = 0` at least linearly.
pub fn integrate_power_law_origin<F: Fn(f64) -> Complex64>(
    f: F,
    upper: f64,
    exponent: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    if exponent <= -1.0 {
        return Err(Error::Domain(format!("ω^{exponent} is not integrable at 0")));
    }
    let m = if exponent >= 1.0 { 1.0 } else { (2.0 / (exponent + 1.0)).ceil() };
    let g = |u: f64| {
        if u <= 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let w = upper * u.powf(m);
        f(w) * (upper * m * u.powf(m - 1.0))
    };
    integrate(g, &[0.0, 0.25, 0.5, 1.0], tol)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`, computed once per degree.
pub fn gauss_legendre(n: usize) -> std::sync::Arc<Vec<(f64, f64)>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, std::sync::Arc<Vec<(f64, f64)>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let rule = GaussLegendre::new(n.max(2)).expect("degree ≥ 2");
            let mut pairs = rule.into_node_weight_pairs();
            pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
            std::sync::Arc::new(pairs)
        })
        .clone()
}
