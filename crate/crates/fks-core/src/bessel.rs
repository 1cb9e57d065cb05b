//! Bessel functions of the first kind, orders zero and one.
//!
//! Needed by the radial (Hankel) representation of the fractional heat
//! kernel in two dimensions, where the angular integral of a plane wave
//! produces `J_0`.  Small arguments use the ascending power series; large
//! arguments use the Hankel asymptotic expansion
//! `J_nu(z) ~ sqrt(2/(pi z)) [P cos(omega) - Q sin(omega)]` with
//! `omega = z - nu pi/2 - pi/4`.  The switch point `z = 14` balances the
//! series' cancellation growth against the asymptotic tail's smallest
//! term (about 1e-12 there); unit tests pin both branches against
//! independently computed references.

/// Argument at which evaluation switches from the power series to the
/// asymptotic expansion.
const SWITCH: f64 = 14.0;

/// `J_0(x)` for real arguments.
pub fn j0(x: f64) -> f64 {
    let z = x.abs();
    if z <= SWITCH {
        series(0, z)
    } else {
        asymptotic(0, z)
    }
}

/// `J_1(x)` for real arguments (odd: `J_1(-x) = -J_1(x)`).
pub fn j1(x: f64) -> f64 {
    let z = x.abs();
    let v = if z <= SWITCH {
        series(1, z)
    } else {
        asymptotic(1, z)
    };
    if x < 0.0 {
        -v
    } else {
        v
    }
}

/// Ascending series `J_nu(z) = (z/2)^nu sum_k (-(z/2)^2)^k / (k! (k+nu)!)`.
fn series(nu: usize, z: f64) -> f64 {
    let q = -0.25 * z * z;
    let mut term = if nu == 0 { 1.0 } else { 0.5 * z };
    let mut sum = term;
    for k in 1..60 {
        let kf = k as f64;
        term *= q / (kf * (kf + nu as f64));
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-30) {
            break;
        }
    }
    sum
}

/// Hankel asymptotic expansion for large `z`.
fn asymptotic(nu: usize, z: f64) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    // c_k = prod_{j=1..k} (mu - (2j-1)^2) / (k! (8z)^k); P sums even k with
    // alternating sign, Q sums odd k.
    let mut p = 1.0;
    let mut q = 0.0;
    let mut c = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..=20usize {
        let j = (2 * k - 1) as f64;
        c *= (mu - j * j) / (k as f64 * 8.0 * z);
        if c.abs() >= prev {
            break; // divergent asymptotic tail: stop at the smallest term
        }
        prev = c.abs();
        match k % 4 {
            0 => p += c,
            1 => q += c,
            2 => p -= c,
            _ => q -= c,
        }
    }
    let omega = z - (nu as f64) * std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4;
    (2.0 / (std::f64::consts::PI * z)).sqrt() * (p * omega.cos() - q * omega.sin())
}
