//! The degree-`d` intermittent circle map.
//!
//! The circle is parameterized by `[-1/2, 1/2)` with the indifferent fixed
//! point at `0`. On that chart
//!
//! ```text
//! f(x) = x * (1 + (d - 1) * (2|x|)^gamma)   (mod 1)
//! ```
//!
//! which for `d = 2` is `x * (1 + (2|x|)^gamma)`. The map is C^1 on the whole
//! circle, `f(0) = 0`, `f'(0) = 1` and `f' > 1` elsewhere. All root finding goes
//! through the monotone lift `F: R -> R`, `F(x + 1) = F(x) + d`.

use crate::error::{Error, Result};

/// Reduce a real number to the circle chart `[-1/2, 1/2)`.
#[inline]
pub fn reduce(x: f64) -> f64 {
    let r = x - (x + 0.5).floor();
    if r >= 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// Distance on the circle of length one.
#[inline]
pub fn circle_dist(a: f64, b: f64) -> f64 {
    reduce(a - b).abs()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CircleMapParams {
    gamma: f64,
    degree: u32,
}

/// A closed arc of the circle given in lift coordinates, `start < end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arc {
    pub start: f64,
    pub end: f64,
}

impl Arc {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

impl CircleMapParams {
    pub fn new(gamma: f64, degree: u32) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be a positive finite number, got {gamma}"
            )));
        }
        if degree < 2 {
            return Err(Error::InvalidParameter(format!(
                "degree must be at least 2, got {degree}"
            )));
        }
        Ok(Self { gamma, degree })
    }

    /// The default degree-two family.
    pub fn with_gamma(gamma: f64) -> Result<Self> {
        Self::new(gamma, 2)
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    #[inline]
    fn slope_coeff(&self) -> f64 {
        (self.degree - 1) as f64
    }

    /// The map on the centered chart, without reduction: `[-1/2,1/2] -> [-d/2, d/2]`.
    #[inline]
    pub fn central(&self, u: f64) -> f64 {
        u * (1.0 + self.slope_coeff() * (2.0 * u.abs()).powf(self.gamma))
    }

    /// f(x) reduced to `[-1/2, 1/2)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        reduce(self.central(reduce(x)))
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        let u = reduce(x).abs();
        1.0 + self.slope_coeff() * (1.0 + self.gamma) * (2.0 * u).powf(self.gamma)
    }

    /// Monotone lift of `f` to the real line.
    #[inline]
    pub fn lift(&self, x: f64) -> f64 {
        let k = (x + 0.5).floor();
        self.central(x - k) + self.degree as f64 * k
    }

    /// Inverse of the lift, to full double precision also for points very
    /// close to 0.
    pub fn inverse_lift(&self, y: f64) -> f64 {
        let d = self.degree as f64;
        let k = (y / d).round();
        let w = y - d * k;
        self.inverse_central(w) + k
    }

    /// On `[0, 1/2]` the branch is increasing and convex, so Newton's method
    /// started right of the root decreases monotonically onto it; iterate
    /// until it stops decreasing.
    fn inverse_central(&self, w: f64) -> f64 {
        if w == 0.0 {
            return 0.0;
        }
        let a = w.abs();
        // |central(u)| lies between |u| and d|u| on [-1/2, 1/2].
        let lo = a / self.degree as f64;
        let mut u = a.min(0.5);
        if self.central(u) <= a {
            return u.copysign(w);
        }
        loop {
            let next = u - (self.central(u) - a) / self.deriv(u);
            if !(next < u) {
                break;
            }
            u = next.max(lo);
        }
        u.copysign(w)
    }

    /// Fundamental domain `I_j`, `1 <= j <= d`, as the lift preimage of `[j-1, j]`.
    /// `I_1` starts at `0` and `I_d` ends at `1` (the fixed point again).
    pub fn domain(&self, j: usize) -> Arc {
        assert!(
            j >= 1 && j <= self.degree as usize,
            "domain index out of range"
        );
        Arc {
            start: self.inverse_lift((j - 1) as f64),
            end: self.inverse_lift(j as f64),
        }
    }

    /// Index `j` of the fundamental domain containing the circle point `x`.
    pub fn domain_of(&self, x: f64) -> usize {
        let y = self.lift(reduce(x).rem_euclid(1.0));
        let j = y.floor() as i64 + 1;
        j.clamp(1, self.degree as i64) as usize
    }

    /// The unique point of `I_branch` mapped onto the circle point `y`.
    pub fn inverse_branch(&self, branch: usize, y: f64) -> Result<f64> {
        if branch == 0 || branch > self.degree as usize {
            return Err(Error::InvalidParameter(format!(
                "branch {branch} outside 1..={}",
                self.degree
            )));
        }
        if !y.is_finite() || !(-0.5..=0.5).contains(&y) {
            return Err(Error::OutOfBranchImage { branch, y });
        }
        let base = (branch - 1) as f64;
        let mut lifted = y - (y - base).floor();
        if lifted >= base + 1.0 {
            lifted -= 1.0;
        }
        Ok(reduce(self.inverse_lift(lifted)))
    }

    /// The sequences `x_n` in `I_1` and `x'_n` in `I_d` with `f(x_{n+1}) = x_n`.
    /// `x'_n` is stored in centered coordinates, so it is negative.
    pub fn boundary_sequences(&self, n_max: usize) -> Result<BoundarySequences> {
        if n_max < 1 {
            return Err(Error::InvalidParameter("n_max must be at least 1".into()));
        }
        let mut xs = Vec::with_capacity(n_max + 1);
        let mut xs_prime = Vec::with_capacity(n_max + 1);
        let mut x = self.inverse_lift(1.0);
        let mut xp = self.inverse_lift(-1.0);
        xs.push(x);
        xs_prime.push(xp);
        for _ in 0..n_max {
            x = self.inverse_lift(x);
            xp = self.inverse_lift(xp);
            xs.push(x);
            xs_prime.push(xp);
        }
        Ok(BoundarySequences {
            xs,
            xs_prime,
            n_max,
        })
    }
}

/// `x_0 > x_1 > ... > x_{n_max} > 0` and `x'_0 < x'_1 < ... < 0`.
#[derive(Clone, Debug)]
pub struct BoundarySequences {
    pub xs: Vec<f64>,
    pub xs_prime: Vec<f64>,
    pub n_max: usize,
}

impl BoundarySequences {
    /// `J_n = [x_{n+1}, x_n]`.
    pub fn j(&self, n: usize) -> Arc {
        Arc {
            start: self.xs[n + 1],
            end: self.xs[n],
        }
    }

    /// `J'_n = [x'_n, x'_{n+1}]`.
    pub fn j_prime(&self, n: usize) -> Arc {
        Arc {
            start: self.xs_prime[n],
            end: self.xs_prime[n + 1],
        }
    }

    /// Lebesgue mass of `{R > n}`, that is `x_n + |x'_n|`.
    pub fn tail_mass(&self, n: usize) -> f64 {
        self.xs[n] - self.xs_prime[n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn default_map() -> CircleMapParams {
        CircleMapParams::with_gamma(0.5).unwrap()
    }

    #[test]
    fn eval_examples() {
        let f = default_map();
        assert_eq!(f.eval(0.0), 0.0);
        assert_abs_diff_eq!(f.eval(0.25), 0.25 * (1.0 + 0.5f64.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(f.eval(0.25), 0.4267767, epsilon = 1e-7);
        // the left limit at 1/2 reaches 1, i.e. 0 on the circle
        let y = f.eval(0.5 - 1e-15);
        assert!(circle_dist(y, 0.0) < 1e-13);
    }

    #[test]
    fn deriv_examples() {
        let f = default_map();
        assert_eq!(f.deriv(0.0), 1.0);
        assert_abs_diff_eq!(f.deriv(0.25), 1.0 + 1.5 * 0.5f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(f.deriv(0.25), 2.0606602, epsilon = 1e-7);
    }

    #[test]
    fn deriv_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for gamma in [0.3, 0.5, 0.8] {
            let f = CircleMapParams::with_gamma(gamma).unwrap();
            let h = 1e-7;
            for _ in 0..100 {
                let x: f64 = rng.random_range(-0.49..0.49);
                let fd = (f.lift(x + h) - f.lift(x - h)) / (2.0 * h);
                assert!((fd - f.deriv(x)).abs() < 1e-6, "x={x} fd={fd}");
            }
        }
    }

    #[test]
    fn deriv_above_one_and_continuous_at_seam() {
        let f = default_map();
        for i in 1..1000 {
            let x = -0.5 + i as f64 / 1000.0;
            if x != 0.0 {
                assert!(f.deriv(x) > 1.0);
            }
        }
        assert_abs_diff_eq!(f.deriv(0.5 - 1e-12), f.deriv(-0.5), epsilon = 1e-9);
    }

    #[test]
    fn branches_are_monotone() {
        for degree in [2u32, 3, 4] {
            let f = CircleMapParams::new(0.5, degree).unwrap();
            for j in 1..=degree as usize {
                let arc = f.domain(j);
                let mut prev = f.lift(arc.start);
                for i in 1..=1000 {
                    let x = arc.start + arc.len() * i as f64 / 1000.0;
                    let y = f.lift(x);
                    assert!(y > prev);
                    prev = y;
                }
                assert_abs_diff_eq!(f.lift(arc.end) - f.lift(arc.start), 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn inverse_branch_examples() {
        let f = default_map();
        assert_eq!(f.inverse_branch(1, 0.0).unwrap(), 0.0);
        let x1 = f.inverse_branch(1, 0.5).unwrap();
        // root of x (1 + sqrt(2x)) = 1/2, by an independent bisection
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if m * (1.0 + (2.0 * m).sqrt()) < 0.5 {
                lo = m
            } else {
                hi = m
            }
        }
        assert_abs_diff_eq!(x1, lo, epsilon = 1e-13);
        assert_abs_diff_eq!(x1, 0.2849, epsilon = 1e-4);
        assert!(matches!(
            f.inverse_branch(1, 0.7),
            Err(Error::OutOfBranchImage { .. })
        ));
        assert!(f.inverse_branch(3, 0.1).is_err());
    }

    #[test]
    fn boundary_sequences_recursion_and_monotonicity() {
        let f = default_map();
        let b = f.boundary_sequences(2000).unwrap();
        assert_eq!(b.xs[0], 0.5);
        assert_eq!(b.xs_prime[0], -0.5);
        for n in 0..b.n_max {
            assert!(b.xs[n + 1] < b.xs[n]);
            assert!(b.xs_prime[n + 1] > b.xs_prime[n]);
            assert!((f.eval(b.xs[n + 1]) - b.xs[n]).abs() < 1e-12 || n == 0);
            assert!(b.j(n).len() > 0.0);
        }
        // x_1 maps to x_0 = 1/2, which is -1/2 on the circle
        assert!(circle_dist(f.eval(b.xs[1]), b.xs[0]) < 1e-12);
        let total: f64 = (0..b.n_max).map(|n| b.j(n).len()).sum();
        assert_abs_diff_eq!(total, b.xs[0] - b.xs[b.n_max], epsilon = 1e-13);
    }

    #[test]
    fn boundary_ratio_asymptotics() {
        let f = default_map();
        let b = f.boundary_sequences(4000).unwrap();
        for n in [1000, 1500, 2000] {
            let r = b.xs[2 * n] / b.xs[n];
            assert!((r / 0.25 - 1.0).abs() < 0.1, "n={n} ratio={r}");
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(CircleMapParams::new(0.0, 2).is_err());
        assert!(CircleMapParams::new(-1.0, 2).is_err());
        assert!(CircleMapParams::new(0.5, 1).is_err());
        assert!(CircleMapParams::new(f64::NAN, 2).is_err());
    }

    proptest! {
        #[test]
        fn inverse_branch_round_trip(branch in 1usize..=3, y in -0.5f64..0.5, gamma in 0.2f64..1.5) {
            let f = CircleMapParams::new(gamma, 3).unwrap();
            let x = f.inverse_branch(branch, y).unwrap();
            prop_assert!(circle_dist(f.eval(x), y) < 1e-12);
            prop_assert_eq!(f.domain_of(x), branch);
        }

        #[test]
        fn lift_inverse_round_trip(y in -5.0f64..5.0) {
            let f = default_map();
            let x = f.inverse_lift(y);
            prop_assert!((f.lift(x) - y).abs() < 1e-12);
        }
    }
}
