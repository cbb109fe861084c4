//! Gauss-Legendre rules and a bounded scalar minimizer.

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss-Legendre rule on `[-1, 1]`.
///
/// Roots of P_n are found by Newton iteration from the Tricomi-style guess
/// `cos(pi (i - 1/4) / (n + 1/2))`; the rule is exact for polynomials of
/// degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Gauss-Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    (
        x.iter().map(|xi| mid + half * xi).collect(),
        w.iter().map(|wi| half * wi).collect(),
    )
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Result of a bounded scalar minimization.
#[derive(Debug, Clone, Copy)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Brent's method (golden section with parabolic steps) on `[a, b]`.
///
/// Stops when the bracket shrinks below `tol * |x| + 1e-14`; fails after
/// `max_iter` iterations.
pub fn minimize_bounded<F>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<Minimum>
where
    F: Fn(f64) -> f64,
{
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::invalid(format!("bad bracket [{a}, {b}]")));
    }
    const GOLDEN: f64 = 0.381_966_011_250_105_1;
    let (mut a, mut b) = (a, b);
    let mut x = a + GOLDEN * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;

    for iter in 0..max_iter {
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-14;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            return Ok(Minimum {
                x,
                value: fx,
                iterations: iter,
            });
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else {
            x + tol1.copysign(d)
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(Error::NoConvergence(format!(
        "bounded minimization did not converge in {max_iter} iterations"
    )))
}

/// Maximizes `f` on `[a, b]`; returns the argmax and the maximum value.
pub fn maximize_bounded<F>(f: F, a: f64, b: f64, tol: f64, max_iter: usize) -> Result<Minimum>
where
    F: Fn(f64) -> f64,
{
    let m = minimize_bounded(|x| -f(x), a, b, tol, max_iter)?;
    Ok(Minimum {
        value: -m.value,
        ..m
    })
}

/// Node counts for the product rule over the sphere: Gauss-Legendre in
/// `cos(theta)` times a uniform trapezoid in `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureSpec {
    pub nodes_theta: usize,
    pub nodes_phi: usize,
}

impl QuadratureSpec {
    pub const MIN_NODES: usize = 16;

    pub fn new(nodes_theta: usize, nodes_phi: usize) -> Result<Self> {
        let q = QuadratureSpec {
            nodes_theta,
            nodes_phi,
        };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_theta < Self::MIN_NODES || self.nodes_phi < Self::MIN_NODES {
            return Err(Error::invalid(format!(
                "quadrature needs at least {} nodes per direction, got {}x{}",
                Self::MIN_NODES,
                self.nodes_theta,
                self.nodes_phi
            )));
        }
        Ok(())
    }

    /// Same rule with both node counts doubled.
    pub fn doubled(&self) -> Self {
        QuadratureSpec {
            nodes_theta: 2 * self.nodes_theta,
            nodes_phi: 2 * self.nodes_phi,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            nodes_theta: 512,
            nodes_phi: 256,
        }
    }
}
