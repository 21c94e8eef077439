//! Fixed-precision decimal output shared by every CSV writer.

/// Formats `x` with 17 significant digits, which round-trips any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
