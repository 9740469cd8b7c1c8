//! Adaptive Simpson quadrature and a fixed-grid trapezoid rule.

/// Integrates `f` over `[a, b]` with recursive adaptive Simpson refinement.
///
/// The recursion stops when the Richardson estimate of the local error is
/// below `15 * tol` scaled to the sub-interval, or at `max_depth`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, rel_tol: f64, max_depth: u32) -> f64
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // seed the absolute tolerance from a coarse composite estimate so that a
    // relative request works for integrands of any scale
    let coarse = composite_simpson(&f, a, b, 64).abs().max(whole.abs());
    let tol = (rel_tol * coarse).max(f64::MIN_POSITIVE);
    simpson_step(&f, a, b, fa, fm, fb, whole, tol, max_depth)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn composite_simpson<F>(f: &F, a: f64, b: f64, panels: usize) -> f64
where
    F: Fn(f64) -> f64,
{
    let n = panels + panels % 2;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + k as f64 * h);
    }
    sum * h / 3.0
}

/// Trapezoid rule on a uniform grid of samples with spacing `h`.
///
/// Summation runs left to right so results are bit-stable for a fixed grid.
pub fn trapezoid_uniform(samples: &[f64], h: f64) -> f64 {
    match samples.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = samples[1..n - 1].iter().sum();
            h * (inner + 0.5 * (samples[0] + samples[n - 1]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_polynomial_is_exact() {
        let v = adaptive_simpson(|x| 3.0 * x * x + 1.0, 0.0, 2.0, 1e-12, 30);
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn simpson_gaussian() {
        let v = adaptive_simpson(|x: f64| (-x * x).exp(), -8.0, 8.0, 1e-11, 40);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn trapezoid_linear() {
        let xs: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        assert!((trapezoid_uniform(&xs, 0.1) - 0.5).abs() < 1e-15);
    }
}
