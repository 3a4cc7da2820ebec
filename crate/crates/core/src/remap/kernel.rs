//! The M4' interpolation kernel.

/// `W₄` in units of the spacing: `s = |x| / h`.
#[inline]
pub fn w4(s: f64) -> f64 {
    let s = s.abs();
    if s <= 1.0 {
        1.0 - 2.5 * s * s + 1.5 * s * s * s
    } else if s <= 2.0 {
        0.5 * (2.0 - s) * (2.0 - s) * (1.0 - s)
    } else {
        0.0
    }
}

pub fn w4_eval(x: f64, h: f64) -> f64 {
    assert!(h > 0.0, "kernel spacing must be positive");
    w4(x / h)
}

/// Stencil of a point at `s` cell widths from the lower domain edge, on
/// cells centered at `j + 1/2`: the first of four cell indices and their
/// weights.
#[inline]
pub fn w4_stencil(s: f64) -> (i64, [f64; 4]) {
    let base = (s - 0.5).floor() as i64;
    let first = base - 1;
    let w = std::array::from_fn(|k| w4(s - ((first + k as i64) as f64 + 0.5)));
    (first, w)
}
