//! Dual-periodic domain structures: Fourier orders, reciprocal vectors,
//! real-space wall synthesis and exact spectral verification.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Walls closer than this (μm) are treated as coincident and annihilate.
const WALL_MERGE_TOL_UM: f64 = 1e-7;
/// Tolerance (rad/μm) for two reciprocal vectors to count as equal.
const ORDER_MATCH_TOL: f64 = 1e-9;

/// Two superposed cosine-centred square gratings, `f1(x)·f2(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolingDesign {
    pub period1_um: f64,
    pub period2_um: f64,
    pub duty1: f64,
    pub duty2: f64,
    pub length_cm: f64,
}

impl PolingDesign {
    pub fn new(period1_um: f64, period2_um: f64, length_cm: f64) -> Result<Self> {
        let d = Self {
            period1_um,
            period2_um,
            duty1: 0.5,
            duty2: 0.5,
            length_cm,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        let duty_ok = |d: f64| d > 0.0 && d < 1.0;
        if self.period1_um > 0.0
            && self.period1_um < self.period2_um
            && self.length_cm > 0.0
            && duty_ok(self.duty1)
            && duty_ok(self.duty2)
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid poling design {self:?}")))
        }
    }

    pub fn length_um(&self) -> f64 {
        self.length_cm * 1e4
    }

    pub fn reciprocal_vector(&self, m: i64, n: i64) -> f64 {
        reciprocal_vector(m, n, self.period1_um, self.period2_um)
    }

    pub fn coefficient(&self, m: i64, n: i64) -> f64 {
        axis_coefficient(m, self.duty1) * axis_coefficient(n, self.duty2)
    }
}

/// One Fourier component of the modulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierOrder {
    pub m: i64,
    pub n: i64,
    /// Signed coefficient `G_{m,n}`.
    pub g: f64,
    /// Reciprocal vector `K_{m,n}` in rad/μm.
    pub k: f64,
}

/// `sin(π·x)` with exact zeros and unit values at integer and half-integer `x`.
fn sin_pi(x: f64) -> f64 {
    let r = x - 2.0 * (x / 2.0).round();
    if r == r.trunc() {
        0.0
    } else if r == 0.5 {
        1.0
    } else if r == -0.5 {
        -1.0
    } else {
        (PI * r).sin()
    }
}

/// Fourier coefficient of one cosine-centred ±1 square wave with duty `duty`.
///
/// `m = 0` returns the mean value `2·duty − 1`.
pub fn axis_coefficient(m: i64, duty: f64) -> f64 {
    if m == 0 {
        return 2.0 * duty - 1.0;
    }
    let mf = m as f64;
    2.0 / (mf * PI) * sin_pi(mf * duty)
}

/// `G_{m,n}` of the product modulation.
///
/// At duty 0.5 this is `4/(m n π²)·sin(mπ/2)·sin(nπ/2)`; other duties use
/// the factorized `(2/(mπ))·sin(mπD)` per axis.
pub fn fourier_coefficient(m: i64, n: i64, duty1: f64, duty2: f64) -> Result<f64> {
    for d in [duty1, duty2] {
        if !(d > 0.0 && d < 1.0) {
            return Err(Error::InvalidParameter(format!("duty cycle {d} outside (0, 1)")));
        }
    }
    if (m == 0 && duty1 == 0.5) || (n == 0 && duty2 == 0.5) {
        return Err(Error::ZeroOrderUnsupported { m, n });
    }
    Ok(axis_coefficient(m, duty1) * axis_coefficient(n, duty2))
}

/// `K_{m,n} = 2mπ/Λ1 + 2nπ/Λ2` in rad/μm.
pub fn reciprocal_vector(m: i64, n: i64, period1_um: f64, period2_um: f64) -> f64 {
    TAU * m as f64 / period1_um + TAU * n as f64 / period2_um
}

/// Piecewise-constant ±1 domain pattern over `[0, L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPattern {
    pub start_sign: i8,
    /// Strictly increasing wall positions inside `(0, L)`, μm.
    pub walls_um: Vec<f64>,
    pub length_um: f64,
}

impl DomainPattern {
    /// `(start, end, sign)` for every domain.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, i8)> + '_ {
        let n = self.walls_um.len();
        (0..=n).map(move |j| {
            let a = if j == 0 { 0.0 } else { self.walls_um[j - 1] };
            let b = if j == n { self.length_um } else { self.walls_um[j] };
            let sign = if j % 2 == 0 { self.start_sign } else { -self.start_sign };
            (a, b, sign)
        })
    }

    pub fn sign_at(&self, x: f64) -> i8 {
        let crossed = self.walls_um.partition_point(|&w| w <= x);
        if crossed % 2 == 0 {
            self.start_sign
        } else {
            -self.start_sign
        }
    }

    /// Mean of `f(x)²` over the pattern.
    pub fn mean_power(&self) -> f64 {
        self.segments()
            .map(|(a, b, s)| f64::from(s * s) * (b - a))
            .sum::<f64>()
            / self.length_um
    }

    /// Plain-text segment list, one `start end sign` line per domain.
    pub fn to_segment_text(&self) -> String {
        let mut out = String::from("# start_um end_um sign\n");
        for (a, b, s) in self.segments() {
            let _ = writeln!(out, "{a:.8e} {b:.8e} {s:+}");
        }
        out
    }
}

fn factor_walls(period: f64, duty: f64, length: f64) -> Vec<f64> {
    let fall = 0.5 * duty * period;
    let rise = period - fall;
    let mut walls = Vec::new();
    let mut k = 0.0;
    loop {
        let base = k * period;
        if base + fall >= length {
            break;
        }
        walls.push(base + fall);
        if base + rise < length {
            walls.push(base + rise);
        }
        k += 1.0;
    }
    walls
}

/// Wall positions of `sign[f1(x)]·sign[f2(x)]` over `[0, L]`.
///
/// Walls of the two factors are merged; a wall shared by both factors
/// leaves the product unchanged and is dropped.
pub fn synthesize_pattern(design: &PolingDesign) -> Result<DomainPattern> {
    design.validate()?;
    let length = design.length_um();
    let mut all = factor_walls(design.period1_um, design.duty1, length);
    all.extend(factor_walls(design.period2_um, design.duty2, length));
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite wall positions"));
    let mut walls: Vec<f64> = Vec::with_capacity(all.len());
    for w in all {
        if w <= 0.0 || w >= length {
            continue;
        }
        match walls.last() {
            Some(&prev) if (w - prev).abs() < WALL_MERGE_TOL_UM => {
                walls.pop();
            }
            _ => walls.push(w),
        }
    }
    Ok(DomainPattern {
        start_sign: 1,
        walls_um: walls,
        length_um: length,
    })
}

/// `(1/L)·∫₀ᴸ f(x)·e^{−iKx} dx`, integrated exactly segment by segment.
pub fn spectrum_amplitude(pattern: &DomainPattern, k: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b, s) in pattern.segments() {
        let piece = if k == 0.0 {
            Complex64::new(b - a, 0.0)
        } else {
            (Complex64::from_polar(1.0, -k * a) - Complex64::from_polar(1.0, -k * b))
                / Complex64::new(0.0, k)
        };
        acc += piece * f64::from(s);
    }
    acc / pattern.length_um
}

/// Every non-vanishing order with `|m|, |n| ≤ cutoff` whose reciprocal
/// vector equals `k_target`, sorted by `|G|` descending.
pub fn coincident_orders(k_target: f64, design: &PolingDesign, cutoff: i64) -> Vec<FourierOrder> {
    let (p1, p2) = (design.period1_um, design.period2_um);
    let mut found = Vec::new();
    for m in -cutoff..=cutoff {
        let n = ((k_target - TAU * m as f64 / p1) * p2 / TAU).round();
        if n.abs() > cutoff as f64 {
            continue;
        }
        let n = n as i64;
        let k = reciprocal_vector(m, n, p1, p2);
        if (k - k_target).abs() >= ORDER_MATCH_TOL {
            continue;
        }
        let g = design.coefficient(m, n);
        if g != 0.0 {
            found.push(FourierOrder { m, n, g, k });
        }
    }
    found.sort_by(|a, b| {
        b.g.abs()
            .partial_cmp(&a.g.abs())
            .expect("finite coefficients")
            .then((a.m, a.n).cmp(&(b.m, b.n)))
    });
    found
}

/// Sum of `G` over the coincident orders; `cutoff = 1` keeps only the
/// lowest orders.
pub fn effective_coefficient(k_target: f64, design: &PolingDesign, cutoff: i64) -> f64 {
    let mut orders = coincident_orders(k_target, design, cutoff);
    // add small terms first
    orders.reverse();
    orders.iter().map(|o| o.g).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duty_half_coefficients() {
        let g11 = fourier_coefficient(1, 1, 0.5, 0.5).unwrap();
        assert!((g11 - 4.0 / (PI * PI)).abs() < 1e-15);
        assert!((g11 - 0.405_285).abs() < 1e-6);
        assert_eq!(fourier_coefficient(2, 1, 0.5, 0.5).unwrap(), 0.0);
        let g31 = fourier_coefficient(3, 1, 0.5, 0.5).unwrap();
        assert!((g31 + 0.135_095).abs() < 1e-6);
        assert_eq!(
            fourier_coefficient(0, 1, 0.5, 0.5),
            Err(Error::ZeroOrderUnsupported { m: 0, n: 1 })
        );
    }

    #[test]
    fn general_duty_has_dc() {
        let g = fourier_coefficient(0, 1, 0.3, 0.5).unwrap();
        assert!((g - (2.0 * 0.3 - 1.0) * 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn reciprocal_vectors_of_design_periods() {
        assert_eq!(reciprocal_vector(0, 0, 25.84, 154.96), 0.0);
        assert!((reciprocal_vector(3, 1, 25.84, 154.96) - 0.770_019_1).abs() < 1e-6);
        assert!((reciprocal_vector(1, 1, 25.84, 154.96) - 0.283_704).abs() < 1e-6);
    }

    #[test]
    fn single_grating_walls() {
        let d = PolingDesign {
            period1_um: 20.0,
            period2_um: 1e12,
            duty1: 0.5,
            duty2: 0.5,
            length_cm: 20.0e-4,
        };
        let p = synthesize_pattern(&d).unwrap();
        assert_eq!(p.walls_um, vec![5.0, 15.0]);
        let a = spectrum_amplitude(&p, TAU / 20.0).norm();
        assert!((a - 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn integer_ratio_pattern_is_periodic() {
        let l1 = 25.84;
        let d = PolingDesign::new(l1, 6.0 * l1, 3.0 * 6.0 * l1 * 1e-4).unwrap();
        let p = synthesize_pattern(&d).unwrap();
        let per = 6.0 * l1;
        for k in 0..1000 {
            let x = 0.37 + k as f64 * per / 1000.0;
            assert_eq!(p.sign_at(x), p.sign_at(x + per));
            assert_eq!(p.sign_at(x), p.sign_at(x + 2.0 * per));
        }
    }

    #[test]
    fn pattern_walls_alternate_and_increase() {
        let d = PolingDesign::new(25.84, 154.96, 0.5).unwrap();
        let p = synthesize_pattern(&d).unwrap();
        assert!(p.walls_um.windows(2).all(|w| w[0] < w[1]));
        assert!(p.walls_um.iter().all(|&w| w > 0.0 && w < p.length_um));
        assert_eq!(p.mean_power(), 1.0);
    }

    #[test]
    fn coincident_walls_annihilate() {
        // Λ2 = 3Λ1: the f2 walls at 3Λ1/4 and 9Λ1/4 fall on f1 walls
        let d = PolingDesign::new(4.0, 12.0, 12.0e-4).unwrap();
        let p = synthesize_pattern(&d).unwrap();
        assert_eq!(p.walls_um, vec![1.0, 5.0, 7.0, 11.0]);
    }

    #[test]
    fn coincidence_audit() {
        let irr = PolingDesign::new(25.84, 25.84 * 2f64.sqrt() * 4.0, 1.0).unwrap();
        let k = irr.reciprocal_vector(3, 1);
        let orders = coincident_orders(k, &irr, 50);
        assert_eq!(orders.len(), 1);
        assert_eq!((orders[0].m, orders[0].n), (3, 1));

        let six = PolingDesign::new(25.84, 6.0 * 25.84, 1.0).unwrap();
        let orders = coincident_orders(six.reciprocal_vector(3, 1), &six, 15);
        let mn: Vec<(i64, i64)> = orders.iter().map(|o| (o.m, o.n)).collect();
        assert!(mn.contains(&(3, 1)) && mn.contains(&(1, 13)));
        assert!(orders.iter().all(|o| 6 * o.m + o.n == 19));

        let few = coincident_orders(six.reciprocal_vector(1, 1), &six, 1);
        assert!(few.iter().all(|o| o.m.abs() <= 1 && o.n.abs() <= 1));
    }

    #[test]
    fn segment_text_format() {
        let d = PolingDesign {
            period1_um: 20.0,
            period2_um: 1e12,
            duty1: 0.5,
            duty2: 0.5,
            length_cm: 20.0e-4,
        };
        let txt = synthesize_pattern(&d).unwrap().to_segment_text();
        let lines: Vec<&str> = txt.lines().collect();
        assert_eq!(lines[1], "0.00000000e0 5.00000000e0 +1");
        assert_eq!(lines.len(), 4);
    }
}
