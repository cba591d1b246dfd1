//! Exact binomial sampling with O(1) expected time for counts up to 2^62.
//!
//! The total-offspring sampler for finite-support laws reduces to a chain of
//! binomial draws whose count is the whole current population, so looping
//! per trial is not an option. Two standard exact methods cover the range:
//!
//! * `np < 10`: inversion (BINV) — expected iterations `np + 1`, independent
//!   of `n` itself;
//! * otherwise: the BTPE accept-reject method of Kachitvichyanukul and
//!   Schmeiser (1988) — a triangle/parallelogram/exponential-tail envelope
//!   around the normal region with a squeeze, O(1) expected draws.
//!
//! Both sample the exact binomial pmf (no normal or Poisson approximation);
//! accuracy is limited only by f64 rounding of the pmf ratios.

use crate::rng::SimRng;
use rand::Rng;

const BINV_THRESHOLD: f64 = 10.0;
const FAR_FROM_MODE: i64 = 20;

/// Draws `Binomial(n, p)`.
pub fn sample(n: u64, p: f64, rng: &mut SimRng) -> u64 {
    assert!((0.0..=1.0).contains(&p), "binomial p out of [0,1]: {p}");
    if n == 0 || p == 0.0 {
        return 0;
    }
    if p == 1.0 {
        return n;
    }
    // Work with the smaller tail probability and flip the result back.
    let flipped = p > 0.5;
    let r = if flipped { 1.0 - p } else { p };
    let x = if (n as f64) * r < BINV_THRESHOLD {
        binv(n, r, rng)
    } else {
        btpe(n, r, rng)
    };
    if flipped {
        n - x
    } else {
        x
    }
}

/// Inversion method. Requires `n * p` small; expected cost `np + 1`.
fn binv(n: u64, p: f64, rng: &mut SimRng) -> u64 {
    let q = 1.0 - p;
    let s = p / q;
    let a = (n as f64 + 1.0) * s;
    // q^n computed in log space: np < 10 keeps this well above underflow.
    let r0 = ((n as f64) * (-p).ln_1p()).exp();
    // The walk is capped far out in the tail (P < 1e-30 at np < 10); on the
    // astronomically rare overrun we redraw.
    let cutoff = 110u64.min(n);
    loop {
        let mut u: f64 = rng.random();
        let mut x = 0u64;
        let mut r = r0;
        loop {
            if u <= r {
                return x;
            }
            u -= r;
            x += 1;
            if x > cutoff {
                break;
            }
            r *= a / (x as f64) - s;
        }
    }
}

/// BTPE. Requires `p <= 0.5` and `n * p >= 10`.
fn btpe(n: u64, p: f64, rng: &mut SimRng) -> u64 {
    let nf = n as f64;
    let q = 1.0 - p;
    let np = nf * p;
    let npq = np * q;
    let f_m = np + p;
    let m = f_m as i64; // floor: f_m >= 10 > 0
    let p1 = (2.195 * npq.sqrt() - 4.6 * q).floor() + 0.5;
    let x_m = m as f64 + 0.5;
    let x_l = x_m - p1;
    let x_r = x_m + p1;
    let c = 0.134 + 20.5 / (15.3 + m as f64);
    let lambda = |a: f64| a * (1.0 + 0.5 * a);
    let lambda_l = lambda((f_m - x_l) / (f_m - x_l * p));
    let lambda_r = lambda((x_r - f_m) / (x_r * q));
    let p2 = p1 * (1.0 + 2.0 * c);
    let p3 = p2 + c / lambda_l;
    let p4 = p3 + c / lambda_r;

    loop {
        // Region selection.
        let u: f64 = rng.random::<f64>() * p4;
        let mut v: f64 = rng.random();
        let y: i64;
        if u <= p1 {
            // Triangular central region: accept immediately.
            return (x_m - p1 * v + u).floor() as u64;
        } else if u <= p2 {
            // Parallelogram.
            let x = x_l + (u - p1) / c;
            v = v * c + 1.0 - (x - x_m).abs() / p1;
            if v > 1.0 {
                continue;
            }
            y = x.floor() as i64;
        } else if u <= p3 {
            // Left exponential tail.
            y = (x_l + v.ln() / lambda_l).floor() as i64;
            if y < 0 {
                continue;
            }
            v *= (u - p2) * lambda_l;
        } else {
            // Right exponential tail.
            y = (x_r - v.ln() / lambda_r).floor() as i64;
            if y > n as i64 {
                continue;
            }
            v *= (u - p3) * lambda_r;
        }

        // Acceptance test of y with uniform v.
        let k = (y - m).abs();
        if k <= FAR_FROM_MODE || (k as f64) >= 0.5 * npq - 1.0 {
            // Evaluate f(y)/f(m) by the pmf recurrence; the loop length is
            // bounded because this branch only runs near the mode or where
            // npq is small.
            let s = p / q;
            let a = s * (nf + 1.0);
            let mut f = 1.0f64;
            match m.cmp(&y) {
                std::cmp::Ordering::Less => {
                    for i in (m + 1)..=y {
                        f *= a / (i as f64) - s;
                    }
                }
                std::cmp::Ordering::Greater => {
                    for i in (y + 1)..=m {
                        f /= a / (i as f64) - s;
                    }
                }
                std::cmp::Ordering::Equal => {}
            }
            if v <= f {
                return y as u64;
            }
            continue;
        }

        // Squeeze on log scale.
        let kf = k as f64;
        let rho = (kf / npq) * ((kf * (kf / 3.0 + 0.625) + 1.0 / 6.0) / npq + 0.5);
        let t = -0.5 * kf * kf / npq;
        let alpha = v.ln();
        if alpha < t - rho {
            return y as u64;
        }
        if alpha > t + rho {
            continue;
        }

        // Final comparison via Stirling-corrected log f(y).
        let x1 = (y + 1) as f64;
        let f1 = (m + 1) as f64;
        let z = (n as i64 + 1 - m) as f64;
        let w = (n as i64 - y + 1) as f64;
        let bound = x_m * (f1 / x1).ln()
            + (nf - m as f64 + 0.5) * (z / w).ln()
            + ((y - m) as f64) * (w * p / (x1 * q)).ln()
            + stirling_tail(f1)
            + stirling_tail(z)
            + stirling_tail(x1)
            + stirling_tail(w);
        if alpha <= bound {
            return y as u64;
        }
    }
}

/// Correction term of Stirling's series, `ln(a!) - (a + 1/2) ln a + a - ln sqrt(2 pi)`
/// evaluated by the standard continued polynomial.
#[inline]
fn stirling_tail(a: f64) -> f64 {
    let a2 = a * a;
    (13860.0 - (462.0 - (132.0 - (99.0 - 140.0 / a2) / a2) / a2) / a2) / a / 166320.0
}
