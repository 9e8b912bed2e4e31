//! Matrix exponential of 9×9 complex superoperators.
//!
//! Scaling and squaring with diagonal Padé approximants of degree 3, 5, 7, 9
//! or 13, selected from the 1-norm (Higham 2005). The degree-13 branch meets
//! unit-roundoff backward error for any norm after scaling.

use nalgebra::SMatrix;
use num_complex::Complex64;

pub type Mat9 = SMatrix<Complex64, 9, 9>;

const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539398330063230e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068;
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
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

/// Maximum absolute column sum.
pub fn norm1(a: &Mat9) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scale(a: &Mat9, s: f64) -> Mat9 {
    a * Complex64::new(s, 0.0)
}

fn solve_pade(u: Mat9, v: Mat9) -> Mat9 {
    let p = v + u;
    let q = v - u;
    // q is well conditioned for the norms each degree is used at.
    q.lu()
        .solve(&p)
        .expect("Padé denominator is nonsingular within its norm bound")
}

fn pade_low(a: &Mat9, b: &[f64]) -> Mat9 {
    // b.len() = m + 1 for degree m in {3, 5, 7, 9}
    let id = Mat9::identity();
    let a2 = a * a;
    let mut even = scale(&id, b[0]);
    let mut odd = scale(&id, b[1]);
    let mut pow = id;
    let mut k = 2;
    while k < b.len() {
        pow *= a2;
        even += scale(&pow, b[k]);
        if k + 1 < b.len() {
            odd += scale(&pow, b[k + 1]);
        }
        k += 2;
    }
    solve_pade(a * odd, even)
}

fn pade13(a: &Mat9) -> Mat9 {
    let b = &B13;
    let id = Mat9::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let inner_u = a6 * (scale(&a6, b[13]) + scale(&a4, b[11]) + scale(&a2, b[9]))
        + scale(&a6, b[7])
        + scale(&a4, b[5])
        + scale(&a2, b[3])
        + scale(&id, b[1]);
    let u = a * inner_u;
    let v = a6 * (scale(&a6, b[12]) + scale(&a4, b[10]) + scale(&a2, b[8]))
        + scale(&a6, b[6])
        + scale(&a4, b[4])
        + scale(&a2, b[2])
        + scale(&id, b[0]);
    solve_pade(u, v)
}

/// `exp(a)` for a 9×9 complex matrix.
pub fn expm(a: &Mat9) -> Mat9 {
    let n1 = norm1(a);
    if !n1.is_finite() {
        return Mat9::from_element(Complex64::new(f64::NAN, f64::NAN));
    }
    if n1 <= THETA_3 {
        return pade_low(a, &B3);
    }
    if n1 <= THETA_5 {
        return pade_low(a, &B5);
    }
    if n1 <= THETA_7 {
        return pade_low(a, &B7);
    }
    if n1 <= THETA_9 {
        return pade_low(a, &B9);
    }
    let s = (n1 / THETA_13).log2().ceil().max(0.0) as i32;
    let scaled = scale(a, 2f64.powi(-s));
    let mut r = pade13(&scaled);
    for _ in 0..s {
        r = r * r;
    }
    r
}
