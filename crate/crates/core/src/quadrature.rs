//! Composite Newton-Cotes rules on uniform grids.

/// Integral of uniformly spaced samples with spacing `h`.
///
/// Composite Simpson when the interval count is even; otherwise Simpson on all
/// but the last three intervals and Simpson 3/8 on those.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        _ if n % 2 == 1 => simpson_even_intervals(values, h),
        _ => {
            let split = n - 4;
            let head = if split >= 2 {
                simpson_even_intervals(&values[..=split], h)
            } else {
                0.0
            };
            let t = &values[split..];
            head + 3.0 * h / 8.0 * (t[0] + 3.0 * t[1] + 3.0 * t[2] + t[3])
        }
    }
}

fn simpson_even_intervals(values: &[f64], h: f64) -> f64 {
    let last = values.len() - 1;
    let inner: f64 = values[1..last]
        .iter()
        .enumerate()
        .map(|(i, v)| if i % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    h / 3.0 * (values[0] + inner + values[last])
}
