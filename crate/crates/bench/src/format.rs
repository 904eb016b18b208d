//! Shortest round-trip decimal formatting for CSV and text outputs.

/// Plain notation for moderate magnitudes, scientific otherwise. Both forms
/// are the shortest strings that parse back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
