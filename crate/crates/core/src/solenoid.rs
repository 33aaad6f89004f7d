//! The skew product on the solid torus `S^1 x D^2`,
//!
//! ```text
//! g(x, y, z) = (f(x), y/10 + cos(2 pi x)/2, z/10 + sin(2 pi x)/2)
//! ```
//!
//! whose attractor is an intermittent solenoid. The circle is the chart
//! `[-1/2, 1/2)` of [`crate::circle_map`], so the angle is `2 pi x`.
//!
//! Points of the attractor are described by a circle point and a backward
//! itinerary (which inverse branch each preimage takes). Pushing a point
//! and a horizontal tangent forward along that itinerary gives the point on
//! the attractor and the slope of its unstable leaf; vertical errors shrink
//! by `1/10` per step.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::circle_map::{circle_dist, reduce, CircleMapParams};
use crate::error::{Error, Result};

pub const CONTRACTION: f64 = 0.1;
pub const AMPLITUDE: f64 = 0.5;

/// Bound on the slope of unstable leaves over the circle factor: the slope
/// recursion `s' <= (s/10 + pi) / f'` with `f' >= 1` stays below `pi/0.9`.
pub const LEAF_SLOPE_BOUND: f64 = PI / (1.0 - CONTRACTION);

/// `(0, 5/9, 0)`.
pub const FIXED_POINT: Point3 = Point3 {
    x: 0.0,
    y: AMPLITUDE / (1.0 - CONTRACTION),
    z: 0.0,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolenoidParams {
    pub circle: CircleMapParams,
}

impl SolenoidParams {
    pub fn new(circle: CircleMapParams) -> Self {
        Self { circle }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn in_torus(&self) -> bool {
        (-0.5..0.5).contains(&self.x) && self.y * self.y + self.z * self.z <= 1.0 + 1e-12
    }
}

#[inline]
pub fn g_eval(params: &SolenoidParams, p: Point3) -> Point3 {
    let (s, c) = (2.0 * PI * p.x).sin_cos();
    Point3 {
        x: params.circle.eval(p.x),
        y: CONTRACTION * p.y + AMPLITUDE * c,
        z: CONTRACTION * p.z + AMPLITUDE * s,
    }
}

/// `p0, g(p0), ..., g^{n-1}(p0)`.
pub fn orbit(params: &SolenoidParams, p0: Point3, n: usize) -> Vec<Point3> {
    let mut out = Vec::with_capacity(n);
    let mut p = p0;
    for _ in 0..n {
        out.push(p);
        p = g_eval(params, p);
    }
    out
}

/// A Lebesgue-random point of the solid torus.
pub fn random_point<R: Rng + ?Sized>(rng: &mut R) -> Point3 {
    let x = rng.random::<f64>() - 0.5;
    let r = rng.random::<f64>().sqrt();
    let t = 2.0 * PI * rng.random::<f64>();
    Point3::new(x, r * t.cos(), r * t.sin())
}

#[derive(Clone, Debug)]
pub struct OrbitSample {
    pub points: Vec<Point3>,
    pub seed: u64,
    pub burn_in: usize,
}

/// An orbit from a Lebesgue-random start, after discarding `burn_in` steps.
pub fn sample_orbit(params: &SolenoidParams, seed: u64, burn_in: usize, n: usize) -> OrbitSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = random_point(&mut rng);
    for _ in 0..burn_in {
        p = g_eval(params, p);
    }
    OrbitSample {
        points: orbit(params, p, n),
        seed,
        burn_in,
    }
}

pub fn write_orbit_csv(path: &Path, sample: &OrbitSample) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "j,x,y,z")?;
    for (j, p) in sample.points.iter().enumerate() {
        writeln!(w, "{j},{:.17e},{:.17e},{:.17e}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

/// Observables on the solid torus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// Euclidean distance to the fixed point, circle distance in `x`.
    DistFixed,
    /// `cos(2 pi x)`: Lipschitz, so Hölder with exponent 1.
    Cos2pix,
    /// Indicator of `x in [0, 1/2)`.
    IndicatorHalfcircle,
    /// `|x| + y`.
    LipschitzXy,
    /// The constant `1`.
    One,
}

impl Observable {
    pub const ALL: [Observable; 5] = [
        Observable::DistFixed,
        Observable::Cos2pix,
        Observable::IndicatorHalfcircle,
        Observable::LipschitzXy,
        Observable::One,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Observable::DistFixed => "dist_fixed",
            Observable::Cos2pix => "cos2pix",
            Observable::IndicatorHalfcircle => "indicator_halfcircle",
            Observable::LipschitzXy => "lipschitz_xy",
            Observable::One => "one",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::UnknownObservable(s.to_string()))
    }

    /// Hölder exponent, `None` for the discontinuous indicator.
    pub fn holder_exponent(self) -> Option<f64> {
        match self {
            Observable::IndicatorHalfcircle => None,
            _ => Some(1.0),
        }
    }

    /// Whether the observable factors through the circle coordinate.
    pub fn x_only(self) -> bool {
        matches!(
            self,
            Observable::Cos2pix | Observable::IndicatorHalfcircle | Observable::One
        )
    }

    #[inline]
    pub fn eval(self, p: &Point3) -> f64 {
        match self {
            Observable::DistFixed => {
                let dx = circle_dist(p.x, FIXED_POINT.x);
                let dy = p.y - FIXED_POINT.y;
                (dx * dx + dy * dy + p.z * p.z).sqrt()
            }
            Observable::Cos2pix => (2.0 * PI * p.x).cos(),
            Observable::IndicatorHalfcircle => {
                if reduce(p.x) >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Observable::LipschitzXy => reduce(p.x).abs() + p.y,
            Observable::One => 1.0,
        }
    }
}

impl std::str::FromStr for Observable {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s)
    }
}

/// `(1/n) sum_{j<n} phi(g^{burn_in + j}(p0))`.
pub fn birkhoff_average(
    params: &SolenoidParams,
    observable: Observable,
    p0: Point3,
    n: usize,
    burn_in: usize,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be at least 1".into()));
    }
    let mut p = p0;
    for _ in 0..burn_in {
        p = g_eval(params, p);
    }
    let mut sum = 0.0;
    for _ in 0..n {
        sum += observable.eval(&p);
        p = g_eval(params, p);
    }
    Ok(sum / n as f64)
}

/// A point of the attractor with the slope `(dy/dx, dz/dx)` of its unstable
/// leaf.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LeafPoint {
    pub point: Point3,
    pub slope: [f64; 2],
}

impl LeafPoint {
    /// Follows the preimages of `x` along `history` (branch indices, the
    /// first entry one step back), starts at the centre of the disc with a
    /// horizontal tangent, and pushes forward again.
    pub fn from_history(params: &SolenoidParams, x: f64, history: &[usize]) -> Result<Self> {
        let mut xs = Vec::with_capacity(history.len());
        let mut cur = reduce(x);
        for &b in history {
            cur = params.circle.inverse_branch(b, cur)?;
            xs.push(cur);
        }
        let mut lp = LeafPoint {
            point: Point3::new(cur, 0.0, 0.0),
            slope: [0.0, 0.0],
        };
        // Step along the stored preimages instead of re-iterating f, which
        // would amplify rounding in the circle coordinate.
        for j in (0..xs.len()).rev() {
            lp.point.x = xs[j];
            lp = lp.step(params);
        }
        // Rounding in the round trip must not move the base point.
        lp.point.x = reduce(x);
        Ok(lp)
    }

    /// The leaf through the unstable manifold of the fixed point: every
    /// preimage taken in the first fundamental domain.
    pub fn reference(params: &SolenoidParams, x: f64, depth: usize) -> Result<Self> {
        Self::from_history(params, x, &vec![1; depth])
    }

    /// `g` together with its action on the unstable slope.
    pub fn step(&self, params: &SolenoidParams) -> Self {
        let x = self.point.x;
        let fp = params.circle.deriv(x);
        let (s, c) = (2.0 * PI * x).sin_cos();
        // d/dx of (cos, sin)(2 pi x)/2 is pi (-sin, cos)(2 pi x).
        let sy = (CONTRACTION * self.slope[0] - PI * s) / fp;
        let sz = (CONTRACTION * self.slope[1] + PI * c) / fp;
        LeafPoint {
            point: g_eval(params, self.point),
            slope: [sy, sz],
        }
    }

    fn slope_norm(&self) -> f64 {
        (1.0 + self.slope[0] * self.slope[0] + self.slope[1] * self.slope[1]).sqrt()
    }

    /// Expansion of `g` along the unstable direction at this point.
    pub fn det_du(&self, params: &SolenoidParams) -> f64 {
        let next = self.step(params);
        params.circle.deriv(self.point.x) * next.slope_norm() / self.slope_norm()
    }
}

fn u_hat_product(
    params: &SolenoidParams,
    p: &LeafPoint,
    reference: &LeafPoint,
    depth: usize,
) -> f64 {
    let (mut a, mut b) = (*p, *reference);
    let mut log = 0.0;
    for _ in 0..depth {
        log += a.det_du(params).ln() - b.det_du(params).ln();
        a = a.step(params);
        b = b.step(params);
        // Both orbits share the circle coordinate; keep it bitwise equal.
        b.point.x = a.point.x;
    }
    log.exp()
}

/// The density factor `u-hat(p) = prod_i det Dg^u(g^i p) / det Dg^u(g^i p-hat)`
/// truncated to `depth` factors, `p-hat` being `reference` (same circle
/// coordinate, other leaf).
pub fn u_hat_truncated(
    params: &SolenoidParams,
    p: &LeafPoint,
    reference: &LeafPoint,
    depth: usize,
) -> Result<f64> {
    if depth == 0 {
        return Err(Error::InvalidParameter("depth must be at least 1".into()));
    }
    if p.point.x != reference.point.x {
        return Err(Error::InvalidParameter(format!(
            "reference point must share the circle coordinate ({} vs {})",
            reference.point.x, p.point.x
        )));
    }
    let u = u_hat_product(params, p, reference, depth);
    let u5 = u_hat_product(params, p, reference, depth + 5);
    let gap = (u - u5).abs();
    if gap > 1e-6 {
        return Err(Error::DepthTooSmall { depth, gap });
    }
    Ok(u)
}

/// `log Jf^r(p) = log det D(g^r)^u(p) + log u-hat(g^r p) - log u-hat(p)`, the
/// Jacobian of `g^r` with respect to the leaf measures `u-hat Leb`.
pub fn log_jacobian_return(
    params: &SolenoidParams,
    p: &LeafPoint,
    r: usize,
    depth: usize,
) -> Result<f64> {
    let reference_depth = 60;
    let mut q = *p;
    let mut log_det = 0.0;
    for _ in 0..r {
        log_det += q.det_du(params).ln();
        q = q.step(params);
    }
    let ref_p = LeafPoint::reference(params, p.point.x, reference_depth)?;
    let ref_q = LeafPoint::reference(params, q.point.x, reference_depth)?;
    let u0 = u_hat_truncated(params, p, &ref_p, depth)?;
    let ur = u_hat_truncated(params, &q, &ref_q, depth)?;
    Ok(log_det + ur.ln() - u0.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sol(g: f64) -> SolenoidParams {
        SolenoidParams::new(CircleMapParams::with_gamma(g).unwrap())
    }

    #[test]
    fn fixed_point_is_fixed() {
        let q = g_eval(&sol(0.5), FIXED_POINT);
        assert_eq!(q.x, 0.0);
        assert!((q.y - 5.0 / 9.0).abs() < 1e-15 && q.z.abs() < 1e-15);
    }

    #[test]
    fn image_stays_in_smaller_disc() {
        let s = sol(0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100_000 {
            let p = random_point(&mut rng);
            assert!(p.in_torus());
            let q = g_eval(&s, p);
            assert!(q.y.abs() <= 0.6 && q.z.abs() <= 0.6 && q.in_torus());
        }
    }

    #[test]
    fn vertical_contraction_is_exact() {
        let s = sol(0.5);
        let mut a = Point3::new(0.3, 0.2, -0.1);
        let mut b = Point3::new(0.3, -0.4, 0.5);
        let d0 = ((a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
        for n in 1..=6 {
            a = g_eval(&s, a);
            b = g_eval(&s, b);
            let d = ((a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt();
            // Cancellation against the O(1) forcing term costs relative accuracy.
            assert!((d / d0 - 0.1f64.powi(n)).abs() < 1e-9 * 0.1f64.powi(n));
        }
    }

    #[test]
    fn observables_by_name() {
        for o in Observable::ALL {
            assert_eq!(Observable::from_name(o.name()).unwrap(), o);
        }
        assert!(matches!(
            Observable::from_name("nope"),
            Err(Error::UnknownObservable(_))
        ));
        assert!(Observable::DistFixed.eval(&FIXED_POINT).abs() < 1e-15);
    }

    #[test]
    fn constant_average() {
        // The indicator is constant on an orbit stuck at the fixed point.
        let a = birkhoff_average(
            &sol(0.5),
            Observable::IndicatorHalfcircle,
            FIXED_POINT,
            100,
            3,
        )
        .unwrap();
        assert_eq!(a, 1.0);
    }

    #[test]
    fn slope_stays_bounded_and_step_matches_derivative() {
        let s = sol(0.5);
        let h = 1e-7;
        let lp = LeafPoint::from_history(
            &s,
            0.2,
            &[1, 2, 2, 1, 2, 1, 1, 2, 2, 2, 1, 1, 2, 1, 2, 2, 1, 1, 1, 2],
        )
        .unwrap();
        assert!(lp.slope[0].hypot(lp.slope[1]) <= LEAF_SLOPE_BOUND);
        // The next slope is the derivative of the image curve.
        let next = lp.step(&s);
        let q1 = g_eval(
            &s,
            Point3::new(
                lp.point.x + h,
                lp.point.y + h * lp.slope[0],
                lp.point.z + h * lp.slope[1],
            ),
        );
        let q0 = g_eval(
            &s,
            Point3::new(
                lp.point.x - h,
                lp.point.y - h * lp.slope[0],
                lp.point.z - h * lp.slope[1],
            ),
        );
        let dx = reduce(q1.x - q0.x);
        assert!(((q1.y - q0.y) / dx - next.slope[0]).abs() < 1e-5);
        assert!(((q1.z - q0.z) / dx - next.slope[1]).abs() < 1e-5);
    }

    #[test]
    fn u_hat_on_reference_leaf_is_one() {
        let s = sol(0.5);
        let r = LeafPoint::reference(&s, 0.17, 50).unwrap();
        assert_eq!(u_hat_truncated(&s, &r, &r, 40).unwrap(), 1.0);
    }

    #[test]
    fn u_hat_telescopes() {
        let s = sol(0.5);
        let x = -0.31;
        let p = LeafPoint::from_history(&s, x, &[2; 50]).unwrap();
        let r = LeafPoint::reference(&s, x, 50).unwrap();
        let u = u_hat_truncated(&s, &p, &r, 40).unwrap();
        let oracle = r.slope_norm() / p.slope_norm();
        assert!((u - oracle).abs() < 1e-9, "{u} vs {oracle}");
        let u45 = u_hat_product(&s, &p, &r, 45);
        assert!((u - u45).abs() < 1e-6);
    }

    #[test]
    fn shallow_depth_is_reported() {
        let s = sol(0.5);
        let x = 0.05;
        let p = LeafPoint::from_history(&s, x, &[2; 50]).unwrap();
        let r = LeafPoint::reference(&s, x, 50).unwrap();
        assert!(matches!(
            u_hat_truncated(&s, &p, &r, 1),
            Err(Error::DepthTooSmall { .. })
        ));
    }

    #[test]
    fn return_jacobian_is_constant_on_stable_leaves() {
        let s = sol(0.5);
        let x = 0.21;
        let a = LeafPoint::from_history(&s, x, &[2; 60]).unwrap();
        let b = LeafPoint::from_history(
            &s,
            x,
            &[
                1, 2, 1, 1, 2, 2, 2, 1, 2, 1, 1, 2, 1, 2, 2, 1, 2, 2, 1, 1, 2, 1, 2, 1, 1, 2, 2, 1,
                2, 1, 2, 1, 2, 1, 1, 2, 2, 1, 1, 2, 1, 2, 1, 2, 2, 1, 1, 2, 2, 1, 1, 1, 2, 1, 2, 2,
                1, 2, 1, 2,
            ],
        )
        .unwrap();
        for r in [1, 3, 7] {
            let ja = log_jacobian_return(&s, &a, r, 40).unwrap();
            let jb = log_jacobian_return(&s, &b, r, 40).unwrap();
            assert!((ja - jb).abs() < 1e-8, "r={r}: {ja} {jb}");
        }
    }
}
