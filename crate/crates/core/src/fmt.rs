/// Formats a float with 15 significant digits in scientific notation.
pub fn sig15(x: f64) -> String {
    format!("{x:.14e}")
}
