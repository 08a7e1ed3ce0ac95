//! Text formatting shared by the CSV emitters.

use std::io::{self, Write};

/// Full-precision, locale-free rendering: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        "NA".to_string()
    }
}

pub fn write_row<W: Write + ?Sized>(w: &mut W, values: &[f64]) -> io::Result<()> {
    let line: Vec<String> = values.iter().map(|&v| fmt_num(v)).collect();
    writeln!(w, "{}", line.join(","))
}
