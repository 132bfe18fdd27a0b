//! One-dimensional Gauss–Legendre rules and the product rules built from
//! them.

use std::f64::consts::PI;

use gauss_quad::GaussLegendre;

use crate::Vec3;

/// Nodes and weights of a one-dimensional rule.
#[derive(Clone, Debug)]
pub struct Rule1d {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// `n`-point Gauss–Legendre rule on `[a, b]`, nodes ascending.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule1d {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let rule = GaussLegendre::new(n.try_into().expect("n >= 1"));
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let (nodes, weights) = rule
        .iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .unzip();
    Rule1d { nodes, weights }
}

/// Composite Gauss–Legendre rule: `panels` equal panels of `n` nodes each.
pub fn composite_gauss_legendre(n: usize, panels: usize, a: f64, b: f64) -> Rule1d {
    let width = (b - a) / panels as f64;
    let mut out = Rule1d {
        nodes: Vec::with_capacity(n * panels),
        weights: Vec::with_capacity(n * panels),
    };
    for p in 0..panels {
        let lo = a + width * p as f64;
        let r = gauss_legendre(n, lo, lo + width);
        out.nodes.extend(r.nodes);
        out.weights.extend(r.weights);
    }
    out
}

/// Product rule on the unit sphere: Gauss–Legendre in the polar cosine,
/// uniform (half-offset) in azimuth. Weights sum to `4π`.
pub fn unit_sphere_rule(n_theta: usize, n_phi: usize) -> Vec<(Vec3, f64)> {
    let polar = gauss_legendre(n_theta, -1.0, 1.0);
    let dphi = 2.0 * PI / n_phi as f64;
    let mut out = Vec::with_capacity(n_theta * n_phi);
    for (ct, wt) in polar.iter() {
        let st = (1.0 - ct * ct).max(0.0).sqrt();
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * dphi;
            out.push((Vec3::new(st * phi.cos(), st * phi.sin(), ct), wt * dphi));
        }
    }
    out
}

/// Orthonormal pair completing `axis` (assumed unit) to a right-handed frame.
pub fn orthonormal_frame(axis: &Vec3) -> (Vec3, Vec3) {
    let helper = if axis.x.abs() < 0.9 {
        Vec3::x()
    } else {
        Vec3::y()
    };
    let b1 = axis.cross(&helper).normalize();
    let b2 = axis.cross(&b1);
    (b1, b2)
}

/// Deterministic quasi-uniform directions on the unit sphere (Fibonacci
/// lattice).
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
