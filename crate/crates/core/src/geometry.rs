//! Sectors, keyhole regions and the truncated keyhole contour.
//!
//! The keyhole region Λ(δ,θ) is the closed disk of radius δ together with the
//! sector |arg λ| ≥ θ. Its boundary, traversed so that the positive real axis
//! lies to the left, is
//!
//! ```text
//! C1: λ = δ e^{s} e^{+iθ},  s from ∞ down to 0
//! C2: λ = δ e^{-iφ},        φ from −θ to θ
//! C3: λ = δ e^{s} e^{-iθ},  s from 0 up to ∞
//! ```
//!
//! so that (2πi)⁻¹∫_C λ^z (λ−a)⁻¹ dλ = a^z for every a outside Λ(δ,θ).
//! Rays are truncated at s = s_max and the omitted tail is reported.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// The closed sector {|arg λ| ≥ θ} ∪ {0}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    theta: f64,
}

impl Sector {
    pub fn new(theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Sector { theta })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn contains(&self, lambda: Complex64) -> bool {
        in_sector(lambda, self)
    }
}

/// Λ(δ,θ): the disk of radius δ joined with a sector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyholeRegion {
    delta: f64,
    theta: f64,
}

impl KeyholeRegion {
    pub fn new(delta: f64, theta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid("delta", format!("must be a positive radius, got {delta}")));
        }
        check_theta(theta)?;
        Ok(KeyholeRegion { delta, theta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn sector(&self) -> Sector {
        Sector { theta: self.theta }
    }

    /// True if λ lies in the closed region.
    pub fn contains(&self, lambda: Complex64) -> bool {
        lambda.norm() <= self.delta || in_sector(lambda, &self.sector())
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < PI {
        Ok(())
    } else {
        Err(invalid("theta", format!("sector angle must lie in (0, π), got {theta}")))
    }
}

/// Principal argument normalised to [−π, π).
pub fn arg(lambda: Complex64) -> f64 {
    let a = lambda.arg();
    // atan2 returns (−π, π]; fold the closed end over.
    if a >= PI {
        -PI
    } else {
        a
    }
}

/// λ^z on the principal branch, λ^z = |λ|^z e^{iz·arg λ} with arg ∈ [−π, π).
pub fn powc(lambda: Complex64, z: Complex64) -> Complex64 {
    if lambda == Complex64::new(0.0, 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    let log = Complex64::new(lambda.norm().ln(), arg(lambda));
    (z * log).exp()
}

pub fn in_sector(lambda: Complex64, sector: &Sector) -> bool {
    lambda == Complex64::new(0.0, 0.0) || arg(lambda).abs() >= sector.theta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    C1,
    C2,
    C3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContourNode {
    pub lambda: Complex64,
    /// Quadrature weight including the dλ factor and orientation.
    pub w: Complex64,
    /// Weight against |dλ|; on C2 these sum to the arc length 2δθ.
    pub arc_weight: f64,
    pub segment: Segment,
}

/// How nodes are placed along each piece of the contour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QuadratureRule {
    /// Equispaced nodes with trapezoid weights, endpoints included.
    Trapezoid,
    /// Composite Gauss–Legendre on equal panels of `order` nodes each.
    ///
    /// The pieces of C meet at corners, so the trapezoid rule only reaches
    /// O(h²) there; the composite rule keeps the accuracy of the smooth parts.
    GaussLegendre { order: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourQuadrature {
    pub delta: f64,
    pub theta: f64,
    pub s_max: f64,
    pub rule: QuadratureRule,
    pub nodes: Vec<ContourNode>,
    /// Bound on the omitted scalar tail for the `re_z` the contour was built for.
    pub tail_bound: f64,
}

/// Trapezoid-rule contour, exactly as parametrised above.
pub fn contour_nodes(
    region: KeyholeRegion,
    s_max: f64,
    n_ray: usize,
    n_arc: usize,
    re_z: f64,
) -> Result<ContourQuadrature> {
    contour_nodes_with(region, s_max, n_ray, n_arc, re_z, QuadratureRule::Trapezoid)
}

pub fn contour_nodes_with(
    region: KeyholeRegion,
    s_max: f64,
    n_ray: usize,
    n_arc: usize,
    re_z: f64,
    rule: QuadratureRule,
) -> Result<ContourQuadrature> {
    if !(s_max > 0.0 && s_max.is_finite()) {
        return Err(invalid("s_max", format!("must be positive, got {s_max}")));
    }
    if n_ray < 2 {
        return Err(invalid("n_ray", format!("need at least 2 nodes per ray, got {n_ray}")));
    }
    if n_arc < 2 {
        return Err(invalid("n_arc", format!("need at least 2 arc nodes, got {n_arc}")));
    }
    if !(re_z < 0.0) {
        return Err(invalid(
            "re_z",
            format!("the truncated tail only converges for Re z < 0, got {re_z}"),
        ));
    }
    if let QuadratureRule::GaussLegendre { order } = rule {
        if order == 0 {
            return Err(invalid("order", "Gauss–Legendre panels need at least one node"));
        }
    }

    let (delta, theta) = (region.delta, region.theta);
    let ray = rule_on(rule, 0.0, s_max, n_ray);
    let arc = rule_on(rule, -theta, theta, n_arc);

    let mut nodes = Vec::with_capacity(2 * ray.len() + arc.len());
    let up = Complex64::from_polar(delta, theta);

    // C1 is walked inwards: largest s first, and ds < 0.
    for &(s, ws) in ray.iter().rev() {
        let lambda = up * s.exp();
        nodes.push(ContourNode {
            lambda,
            w: -lambda * ws,
            arc_weight: lambda.norm() * ws,
            segment: Segment::C1,
        });
    }
    for &(phi, wp) in &arc {
        let lambda = Complex64::from_polar(delta, -phi);
        nodes.push(ContourNode {
            lambda,
            w: Complex64::new(0.0, -1.0) * lambda * wp,
            arc_weight: delta * wp,
            segment: Segment::C2,
        });
    }
    for &(s, ws) in &ray {
        let lambda = up.conj() * s.exp();
        nodes.push(ContourNode {
            lambda,
            w: lambda * ws,
            arc_weight: lambda.norm() * ws,
            segment: Segment::C3,
        });
    }

    Ok(ContourQuadrature {
        delta,
        theta,
        s_max,
        rule,
        nodes,
        tail_bound: tail_bound(delta, s_max, re_z),
    })
}

/// Both omitted ray tails of ∫|λ|^{−1+Re z}|dλ|: 2·δ^{Re z}·e^{s_max Re z}/|Re z|.
pub fn tail_bound(delta: f64, s_max: f64, re_z: f64) -> f64 {
    2.0 * delta.powf(re_z) * (s_max * re_z).exp() / re_z.abs()
}

/// Nodes and positive weights on [a, b].
fn rule_on(rule: QuadratureRule, a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    match rule {
        QuadratureRule::Trapezoid => {
            let h = (b - a) / (n - 1) as f64;
            (0..n)
                .map(|i| {
                    let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
                    // Pin the last node to b exactly.
                    let x = if i == n - 1 { b } else { a + i as f64 * h };
                    (x, w)
                })
                .collect()
        }
        QuadratureRule::GaussLegendre { order } => {
            let panels = n.div_ceil(order).max(1);
            gauss_panels(a, b, panels, order)
        }
    }
}

pub(crate) fn gauss_panels(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::new(NonZeroUsize::new(order).expect("order ≥ 1"));
    let mut ref_nodes: Vec<(f64, f64)> = gl.iter().map(|(x, w)| (*x, *w)).collect();
    ref_nodes.sort_by(|p, q| p.0.total_cmp(&q.0));
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let lo = a + k as f64 * width;
        let mid = lo + 0.5 * width;
        for &(x, w) in &ref_nodes {
            out.push((mid + 0.5 * width * x, 0.5 * width * w));
        }
    }
    out
}

impl ContourQuadrature {
    /// Σ w·f(λ) over all nodes.
    pub fn integrate(&self, f: impl Fn(Complex64) -> Complex64) -> Complex64 {
        self.nodes.iter().map(|n| n.w * f(n.lambda)).sum()
    }

    /// Nodes in the closed upper half-plane with their weights; a node on the
    /// real axis (its own mirror image) is halved.
    ///
    /// The node set is closed under λ ↦ λ̄ with w ↦ −w̄, so for a real matrix
    /// Σ_all w λ^z R(λ) = S(z) − conj S(z̄), where S runs over these nodes.
    pub fn upper_half(&self) -> Vec<(Complex64, Complex64)> {
        let eps = 1e-14 * self.delta;
        self.nodes
            .iter()
            .filter_map(|n| {
                if n.lambda.im > eps {
                    Some((n.lambda, n.w))
                } else if n.lambda.im.abs() <= eps {
                    Some((n.lambda, 0.5 * n.w))
                } else {
                    None
                }
            })
            .collect()
    }

    /// Smallest distance from `lambda` to a node.
    pub fn distance_to(&self, lambda: Complex64) -> f64 {
        self.nodes.iter().map(|n| (n.lambda - lambda).norm()).fold(f64::INFINITY, f64::min)
    }

    /// Distance from `lambda` to the (untruncated) curve C.
    pub fn distance_to_curve(&self, lambda: Complex64) -> f64 {
        let r = lambda.norm();
        let a = arg(lambda);
        let arc = if a.abs() <= self.theta {
            (r - self.delta).abs()
        } else {
            let ends = [Complex64::from_polar(self.delta, self.theta), Complex64::from_polar(self.delta, -self.theta)];
            ends.iter().map(|e| (e - lambda).norm()).fold(f64::INFINITY, f64::min)
        };
        let ray = |dir: Complex64| {
            let along = (lambda * dir.conj()).re;
            if along <= self.delta {
                (lambda - dir * self.delta).norm()
            } else {
                (lambda * dir.conj()).im.abs()
            }
        };
        let d1 = ray(Complex64::from_polar(1.0, self.theta));
        let d3 = ray(Complex64::from_polar(1.0, -self.theta));
        arc.min(d1).min(d3)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
