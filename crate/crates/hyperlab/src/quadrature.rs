//! Gauss–Legendre rules and product quadrature on the unit sphere.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`,
/// nodes increasing.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Product rule on S²: Gauss–Legendre in `cos θ` times the trapezoid in `φ`,
/// with the polar axis along `axis`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    pub thetas: Vec<f64>,
    pub phis: Vec<f64>,
    pub axis: [f64; 3],
    /// Unit directions, θ-major.
    pub nodes: Vec<[f64; 3]>,
    /// Weights for `dΩ`, summing to 4π.
    pub weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn product(n_theta: usize, n_phi: usize, axis: [f64; 3]) -> Self {
        let (ct, wt) = gauss_legendre(n_theta);
        // θ increasing ⇔ cos θ decreasing
        let thetas: Vec<f64> = ct.iter().rev().map(|c| c.acos()).collect();
        let wts: Vec<f64> = wt.iter().rev().copied().collect();
        let phis: Vec<f64> = (0..n_phi).map(|j| 2.0 * PI * j as f64 / n_phi as f64).collect();
        let frame = polar_frame(axis);
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (th, wth) in thetas.iter().zip(&wts) {
            for ph in &phis {
                nodes.push(direction_in_frame(&frame, *th, *ph));
                weights.push(wth * 2.0 * PI / n_phi as f64);
            }
        }
        Self { thetas, phis, axis: frame[2], nodes, weights }
    }

    /// A single node along `axis` carrying the full solid angle; exact for
    /// integrands that are constant on the sphere.
    pub fn single(axis: [f64; 3]) -> Self {
        let frame = polar_frame(axis);
        let node = direction_in_frame(&frame, 0.5 * PI, 0.0);
        Self { thetas: vec![0.5 * PI], phis: vec![0.0], axis: frame[2], nodes: vec![node], weights: vec![4.0 * PI] }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Right-handed orthonormal frame `(e1, e2, axis)`.
pub fn polar_frame(axis: [f64; 3]) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let z = if n > 0.0 { [axis[0] / n, axis[1] / n, axis[2] / n] } else { [0.0, 0.0, 1.0] };
    let seed = if z[2].abs() < 0.9 { [0.0, 0.0, 1.0] } else { [1.0, 0.0, 0.0] };
    let mut x = cross(&seed, &z);
    let nx = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
    for v in &mut x {
        *v /= nx;
    }
    let y = cross(&z, &x);
    [x, y, z]
}

pub fn direction_in_frame(frame: &[[f64; 3]; 3], theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let mut d = [0.0; 3];
    for i in 0..3 {
        d[i] = st * cp * frame[0][i] + st * sp * frame[1][i] + ct * frame[2][i];
    }
    d
}

pub fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        // exact through degree 9
        let i8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((i8 - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn sphere_rule_area_and_moments() {
        let q = SphereQuadrature::product(8, 16, [1.0, 0.0, 0.0]);
        assert!((q.weights.iter().sum::<f64>() - 4.0 * PI).abs() < 1e-12);
        let vals: Vec<f64> = q.nodes.iter().map(|n| n[1] * n[1]).collect();
        assert!((q.integrate(&vals) - 4.0 * PI / 3.0).abs() < 1e-12);
    }
}
