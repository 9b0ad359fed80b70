//! Fixed-grid quadrature rules.

/// Composite Simpson rule on `[a, b]` with `intervals` sub-intervals (rounded up to even).
pub fn simpson<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, intervals: usize) -> f64 {
    if b == a {
        return 0.0;
    }
    let n = (intervals.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

/// Evenly spaced nodes `a, ..., b` (inclusive), `intervals + 1` points.
pub fn linspace(a: f64, b: f64, intervals: usize) -> Vec<f64> {
    let n = intervals.max(1);
    let h = (b - a) / n as f64;
    (0..=n).map(|i| if i == n { b } else { a + i as f64 * h }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_on_cubics() {
        let v = simpson(|x| x * x * x - 2.0 * x + 1.0, 0.0, 2.0, 2);
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn odd_interval_count_is_rounded_up() {
        let v = simpson(f64::exp, 0.0, 1.0, 199);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-10);
    }

    #[test]
    fn linspace_hits_both_ends() {
        let g = linspace(0.0, 3.0, 7);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[7], 3.0);
    }
}
