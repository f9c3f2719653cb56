//! Quintic Hermite segments: coefficient construction from boundary
//! states, evaluation, the closed-form squared-jerk integral, and the
//! reverse-mode chain rules used by the optimizer.

/// Quintic coefficients for one axis given boundary position, velocity and
/// acceleration at both segment ends.
pub fn quintic_coeffs(p0: f64, v0: f64, a0: f64, p1: f64, v1: f64, a1: f64, t: f64) -> [f64; 6] {
    debug_assert!(t > 0.0);
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let dp = p1 - p0 - v0 * t - 0.5 * a0 * t2;
    let dv = v1 - v0 - a0 * t;
    let da = a1 - a0;
    [
        p0,
        v0,
        0.5 * a0,
        (10.0 * dp - 4.0 * dv * t + 0.5 * da * t2) / t3,
        (-15.0 * dp + 7.0 * dv * t - da * t2) / t4,
        (6.0 * dp - 3.0 * dv * t + 0.5 * da * t2) / t5,
    ]
}

/// Position, velocity, acceleration and jerk of the quintic at local time
/// `tau`.
pub fn eval_quintic(c: &[f64; 6], tau: f64) -> (f64, f64, f64, f64) {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    let t4 = t3 * tau;
    let t5 = t4 * tau;
    let p = c[0] + c[1] * tau + c[2] * t2 + c[3] * t3 + c[4] * t4 + c[5] * t5;
    let v = c[1] + 2.0 * c[2] * tau + 3.0 * c[3] * t2 + 4.0 * c[4] * t3 + 5.0 * c[5] * t4;
    let a = 2.0 * c[2] + 6.0 * c[3] * tau + 12.0 * c[4] * t2 + 20.0 * c[5] * t3;
    let j = 6.0 * c[3] + 24.0 * c[4] * tau + 60.0 * c[5] * t2;
    (p, v, a, j)
}

/// Closed-form integral of the squared third derivative over [0, T].
pub fn jerk_integral(c: &[f64; 6], t: f64) -> f64 {
    let a = 6.0 * c[3];
    let b = 24.0 * c[4];
    let cc = 60.0 * c[5];
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    a * a * t + a * b * t2 + (b * b + 2.0 * a * cc) * t3 / 3.0 + b * cc * t4 / 2.0
        + cc * cc * t5 / 5.0
}

/// Gradient of [`jerk_integral`] with respect to (c3, c4, c5) and its
/// direct partial with respect to T at fixed coefficients.
pub fn jerk_integral_grad(c: &[f64; 6], t: f64) -> ([f64; 3], f64) {
    let a = 6.0 * c[3];
    let b = 24.0 * c[4];
    let cc = 60.0 * c[5];
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let da = 2.0 * a * t + b * t2 + 2.0 * cc * t3 / 3.0;
    let db = a * t2 + 2.0 * b * t3 / 3.0 + cc * t4 / 2.0;
    let dc = 2.0 * a * t3 / 3.0 + b * t4 / 2.0 + 2.0 * cc * t5(t);
    let dt = (a + b * t + cc * t2).powi(2);
    ([6.0 * da, 24.0 * db, 60.0 * dc], dt)
}

fn t5(t: f64) -> f64 {
    t * t * t * t * t / 5.0
}

/// Accumulated gradients flowing out of one segment's coefficient
/// construction: contributions to the six boundary states and the
/// duration.
#[derive(Debug, Default, Clone, Copy)]
pub struct BoundaryGrad {
    pub p0: f64,
    pub v0: f64,
    pub a0: f64,
    pub p1: f64,
    pub v1: f64,
    pub a1: f64,
    pub t: f64,
}

/// Backpropagate a coefficient gradient `gc` through
/// [`quintic_coeffs`].
#[allow(clippy::too_many_arguments)]
pub fn backprop_coeffs(
    gc: &[f64; 6],
    p0: f64,
    v0: f64,
    a0: f64,
    p1: f64,
    v1: f64,
    a1: f64,
    t: f64,
) -> BoundaryGrad {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let t6 = t5 * t;
    let dp = p1 - p0 - v0 * t - 0.5 * a0 * t2;
    let dv = v1 - v0 - a0 * t;
    let da = a1 - a0;

    let gdp = gc[3] * 10.0 / t3 + gc[4] * (-15.0) / t4 + gc[5] * 6.0 / t5;
    let gdv = gc[3] * (-4.0) / t2 + gc[4] * 7.0 / t3 + gc[5] * (-3.0) / t4;
    let gda = gc[3] * 0.5 / t + gc[4] * (-1.0) / t2 + gc[5] * 0.5 / t3;
    let gt_coeffs = gc[3] * (-30.0 * dp / t4 + 8.0 * dv / t3 - 0.5 * da / t2)
        + gc[4] * (60.0 * dp / t5 - 21.0 * dv / t4 + 2.0 * da / t3)
        + gc[5] * (-30.0 * dp / t6 + 12.0 * dv / t5 - 1.5 * da / t4);

    BoundaryGrad {
        p0: -gdp + gc[0],
        v0: -t * gdp - gdv + gc[1],
        a0: -0.5 * t2 * gdp - t * gdv - gda + 0.5 * gc[2],
        p1: gdp,
        v1: gdv,
        a1: gda,
        t: gt_coeffs + gdp * (-v0 - a0 * t) + gdv * (-a0),
    }
}
