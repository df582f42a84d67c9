//! Helpers for angles on the circle.

use std::f64::consts::{PI, TAU};

/// Wraps an angle into `[0, 2π)`.
pub fn wrap(angle: f64) -> f64 {
    let w = angle.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Shortest arc length between two angles, always in `[0, π]`.
pub fn distance(a: f64, b: f64) -> f64 {
    let d = wrap(a - b);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

/// Signed shortest displacement `a - b`, in `[-π, π)`.
pub fn signed_difference(a: f64, b: f64) -> f64 {
    let d = wrap(a - b + PI) - PI;
    if d >= PI {
        d - TAU
    } else {
        d
    }
}
