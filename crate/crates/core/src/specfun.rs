//! Special functions and unit-sphere quadrature.
//!
//! Legendre polynomials, spherical Hankel functions of the second kind
//! (outgoing waves under the e^{+j2πft} time convention), Gauss–Legendre
//! rules, and the product quadrature grid used for all spectral integrals.

use crate::error::{CoreError, Result};
use crate::linalg::Vec3;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Magnitudes above this are reported as overflow instead of returned.
const HANKEL_OVERFLOW_LIMIT: f64 = 1e300;

/// Unit-sphere quadrature: directions k̂_q, weights w_q (steradian), and the
/// band limit it integrates exactly.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    pub directions: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub band_limit: usize,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Validates the type invariants: unit directions, positive weights,
    /// total solid angle 4π.
    pub fn validate(&self) -> Result<()> {
        if self.directions.len() != self.weights.len() {
            return Err(CoreError::Domain(
                "direction/weight length mismatch".into(),
            ));
        }
        for d in &self.directions {
            if (d.norm() - 1.0).abs() > 1e-12 {
                return Err(CoreError::Domain(format!(
                    "non-unit direction {:?}",
                    d
                )));
            }
        }
        if self.weights.iter().any(|&w| w <= 0.0) {
            return Err(CoreError::Domain("non-positive quadrature weight".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if ((total - 4.0 * PI) / (4.0 * PI)).abs() > 1e-10 {
            return Err(CoreError::Domain(format!(
                "weights sum to {total}, expected 4π"
            )));
        }
        Ok(())
    }
}

/// Legendre polynomial P_l(x) by the three-term recurrence.
pub fn legendre_p(l: usize, x: f64) -> Result<f64> {
    if x.abs() > 1.0 + 1e-12 {
        return Err(CoreError::Domain(format!(
            "legendre_p argument |x| = {} > 1",
            x.abs()
        )));
    }
    let x = x.clamp(-1.0, 1.0);
    let mut p_prev = 1.0;
    if l == 0 {
        return Ok(p_prev);
    }
    let mut p = x;
    for n in 1..l {
        let n_f = n as f64;
        let p_next = ((2.0 * n_f + 1.0) * x * p - n_f * p_prev) / (n_f + 1.0);
        p_prev = p;
        p = p_next;
    }
    Ok(p)
}

/// All of P_0(x)..P_l(x) in one recurrence pass.
pub fn legendre_p_table(l_max: usize, x: f64) -> Result<Vec<f64>> {
    if x.abs() > 1.0 + 1e-12 {
        return Err(CoreError::Domain(format!(
            "legendre_p argument |x| = {} > 1",
            x.abs()
        )));
    }
    let x = x.clamp(-1.0, 1.0);
    let mut table = Vec::with_capacity(l_max + 1);
    table.push(1.0);
    if l_max == 0 {
        return Ok(table);
    }
    table.push(x);
    for n in 1..l_max {
        let n_f = n as f64;
        let next = ((2.0 * n_f + 1.0) * x * table[n] - n_f * table[n - 1]) / (n_f + 1.0);
        table.push(next);
    }
    Ok(table)
}

/// Spherical Hankel function of the second kind h_l^(2)(x).
///
/// Closed forms for l ≤ 1, upward recurrence above; upward recurrence is
/// stable for the Hankel function (dominant solution), so no backward pass.
pub fn sph_hankel2(l: usize, x: f64) -> Result<Complex64> {
    Ok(*sph_hankel2_table(l, x)?.last().unwrap())
}

/// h_0^(2)(x)..h_l^(2)(x) in a single upward pass.
pub fn sph_hankel2_table(l_max: usize, x: f64) -> Result<Vec<Complex64>> {
    if x <= 0.0 {
        return Err(CoreError::Domain(format!(
            "sph_hankel2 argument x = {x} must be positive"
        )));
    }
    // h_0^(2)(x) = j·e^{−jx}/x, h_1^(2)(x) = (−1/x + j/x²)·e^{−jx}
    let e = Complex64::new(0.0, -x).exp();
    let mut table = Vec::with_capacity(l_max + 1);
    table.push(Complex64::new(0.0, 1.0) * e / x);
    if l_max == 0 {
        return Ok(table);
    }
    table.push(Complex64::new(-1.0 / x, 1.0 / (x * x)) * e);
    for n in 1..l_max {
        let n_f = n as f64;
        let next = (2.0 * n_f + 1.0) / x * table[n] - table[n - 1];
        if !next.is_finite()
            || next.re.abs() > HANKEL_OVERFLOW_LIMIT
            || next.im.abs() > HANKEL_OVERFLOW_LIMIT
        {
            return Err(CoreError::Overflow {
                context: format!("sph_hankel2(l={}, x={x})", n + 1),
                limit: HANKEL_OVERFLOW_LIMIT,
            });
        }
        table.push(next);
    }
    Ok(table)
}

/// n-point Gauss–Legendre rule on [−1, 1], exact for degree ≤ 2n−1.
///
/// Nodes are the roots of P_n found by Newton iteration from the Chebyshev
/// initial guess; weights w_i = 2/((1−x_i²)·P_n'(x_i)²).
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(CoreError::Domain("gauss_legendre requires n ≥ 1".into()));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // evaluate P_n and P_n' at x via the recurrence
            let mut p_prev = 1.0;
            let mut p = x;
            for k in 1..n {
                let k_f = k as f64;
                let p_next = ((2.0 * k_f + 1.0) * x * p - k_f * p_prev) / (k_f + 1.0);
                p_prev = p;
                p = p_next;
            }
            let p_n = if n == 1 { x } else { p };
            let p_nm1 = if n == 1 { 1.0 } else { p_prev };
            dp = n as f64 * (x * p_n - p_nm1) / (x * x - 1.0);
            let dx = p_n / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Product quadrature on the unit sphere: (L+1) Gauss–Legendre nodes in
/// cos θ and 2L+2 uniform nodes in φ. Exact for spherical harmonics of
/// degree ≤ 2L, band_limit = L.
pub fn sphere_quadrature(band_limit: usize) -> Result<QuadratureGrid> {
    if band_limit == 0 {
        return Err(CoreError::Domain("sphere_quadrature requires L ≥ 1".into()));
    }
    let n_theta = band_limit + 1;
    let n_phi = 2 * band_limit + 2;
    let (ct_nodes, ct_weights) = gauss_legendre(n_theta)?;
    let phi_weight = 2.0 * PI / n_phi as f64;

    let mut directions = Vec::with_capacity(n_theta * n_phi);
    let mut weights = Vec::with_capacity(n_theta * n_phi);
    for (cos_theta, w_theta) in ct_nodes.iter().zip(&ct_weights) {
        let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
        for j in 0..n_phi {
            let phi = 2.0 * PI * j as f64 / n_phi as f64;
            directions.push(Vec3::new(
                sin_theta * phi.cos(),
                sin_theta * phi.sin(),
                *cos_theta,
            ));
            weights.push(w_theta * phi_weight);
        }
    }
    Ok(QuadratureGrid {
        directions,
        weights,
        band_limit,
    })
}
