use crate::error::{Error, Result};

/// Bessel function of the first kind, order zero.
///
/// Power series for `|x| <= 8`, Miller's backward recurrence up to
/// `|x| <= 50` and the Hankel asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("bessel_j0 of non-finite input {x}")));
    }
    let ax = x.abs();
    Ok(if ax <= 8.0 {
        j0_series(ax)
    } else if ax <= 50.0 {
        j0_miller(ax)
    } else {
        j0_asymptotic(ax)
    })
}

fn j0_series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= -q / (k * k);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-300) || k > 200.0 {
            break;
        }
        k += 1.0;
    }
    sum
}

fn j0_miller(x: f64) -> f64 {
    // Start well above x so the seeded values are negligible by the time the
    // recurrence reaches the orders that matter.
    let mut n = (x + 30.0 + (40.0 * x).sqrt()) as usize;
    n += n % 2;
    let (mut j_next, mut j_cur) = (0.0_f64, 1e-300_f64);
    let mut norm = 0.0;
    for k in (1..=n).rev() {
        let mut j_prev = 2.0 * k as f64 / x * j_cur - j_next;
        if j_prev.abs() > 1e250 {
            j_prev *= 1e-250;
            j_cur *= 1e-250;
            norm *= 1e-250;
        }
        j_next = j_cur;
        j_cur = j_prev;
        // j_cur now holds order k - 1
        if k > 1 && (k - 1) % 2 == 0 {
            norm += 2.0 * j_cur;
        }
    }
    j_cur / (norm + j_cur)
}

fn j0_asymptotic(x: f64) -> f64 {
    // |a_k| = prod_{j=1..k} (2j-1)^2 / (k! 8^k); q collects the odd terms
    // with the sign that makes J0 ~ sqrt(2/(pi x)) (p cos + q sin).
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0;
    let mut last = f64::INFINITY;
    for k in 1..60 {
        let kf = k as f64;
        a *= (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
        if a.abs() > last {
            break;
        }
        last = a.abs();
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * a;
        } else {
            q += sign * a;
        }
    }
    let phase = x - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * phase.cos() + q * phase.sin())
}

#[cfg(test)]
mod tests {
    use super::*;

    // J0(x) = (1/pi) * integral_0^pi cos(x sin t) dt; the trapezoid rule on a
    // smooth periodic integrand converges geometrically.
    fn quadrature_oracle(x: f64) -> f64 {
        let n = 400;
        let h = std::f64::consts::PI / n as f64;
        let mut s = 0.5 * (1.0 + (x * 0.0f64.sin()).cos());
        for i in 1..n {
            s += (x * (i as f64 * h).sin()).cos();
        }
        s * h / std::f64::consts::PI
    }

    #[test]
    fn known_points() {
        assert_eq!(bessel_j0(0.0).unwrap(), 1.0);
        assert!((bessel_j0(1.0).unwrap() - 0.765_197_686_557_966_6).abs() < 1e-12);
        assert!(bessel_j0(2.404_825_557_695_773).unwrap().abs() < 1e-12);
    }

    #[test]
    fn matches_quadrature_to_twenty() {
        let mut x = -20.0;
        while x <= 20.0 {
            let got = bessel_j0(x).unwrap();
            let want = quadrature_oracle(x);
            assert!((got - want).abs() < 1e-10, "x={x}: {got} vs {want}");
            x += 0.173;
        }
    }

    #[test]
    fn branches_agree_at_seams() {
        assert!((j0_series(8.0) - j0_miller(8.0)).abs() < 1e-13);
        assert!((j0_miller(50.0) - j0_asymptotic(50.0)).abs() < 1e-13);
        assert!((j0_miller(60.0) - j0_asymptotic(60.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(bessel_j0(f64::NAN).is_err());
        assert!(bessel_j0(f64::INFINITY).is_err());
    }
}
