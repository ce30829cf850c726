//! Deterministic ranking and count helpers shared by selection and fault planning.

/// Indices of the `k` largest values, descending, ties by ascending index.
/// NaN sorts below every number.
pub fn top_k_descending(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let key = |i: usize| {
        let v = values[i];
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    };
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order.truncate(k.min(values.len()));
    order
}

/// `ceil(fraction * n)`, snapping products within 1e-9 relative of an integer so
/// that e.g. `0.07 * 100` selects 7 despite binary rounding.
pub fn ceil_count(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let r = x.round();
    let c = if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    };
    (c.max(0.0) as usize).min(n)
}

/// `round(x)` with ties to even, as a count.
pub fn round_half_even(x: f64) -> usize {
    let r = x.round_ties_even();
    if r <= 0.0 {
        0
    } else {
        r as usize
    }
}
