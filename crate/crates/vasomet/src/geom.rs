//! Small 2D vector geometry: angles between directions and least-squares
//! line fits through pixel runs.

use crate::error::{Error, Result};
use crate::num::Real;
use serde::{Deserialize, Serialize};

/// 2D vector / point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec2<F> {
    pub x: F,
    pub y: F,
}

impl<F: Real> Vec2<F> {
    pub fn new(x: F, y: F) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Self) -> F {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> F {
        self.dot(self).sqrt()
    }

    pub fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: F) -> Self {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn neg(self) -> Self {
        Vec2::new(-self.x, -self.y)
    }

    /// Unit vector with the same direction; error on (near-)zero vectors.
    pub fn normalized(self) -> Result<Self> {
        let n = self.norm();
        if n <= F::zero() || !n.is_finite() {
            return Err(Error::Input("cannot normalize zero vector".into()));
        }
        Ok(self.scale(F::one() / n))
    }

    pub fn dist(self, o: Self) -> F {
        self.sub(o).norm()
    }

    /// Rotate by `deg` degrees about `center`. Positive angles rotate from
    /// +x toward +y (clockwise on screen with y pointing down).
    pub fn rotated_about(self, center: Self, deg: F) -> Self {
        let r = deg.to_radians();
        let (s, c) = (r.sin(), r.cos());
        let d = self.sub(center);
        Vec2::new(c * d.x - s * d.y + center.x, s * d.x + c * d.y + center.y)
    }
}

impl<F: Real> std::ops::Add for Vec2<F> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<F: Real> std::ops::Sub for Vec2<F> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<F: Real> std::ops::Mul<F> for Vec2<F> {
    type Output = Self;
    fn mul(self, s: F) -> Self {
        self.scale(s)
    }
}

impl<F: Real> std::ops::Neg for Vec2<F> {
    type Output = Self;
    fn neg(self) -> Self {
        Vec2::new(-self.x, -self.y)
    }
}

/// Angle between two nonzero vectors in degrees, in [0, 180].
pub fn angle_between_deg<F: Real>(u: Vec2<F>, v: Vec2<F>) -> Result<F> {
    let (nu, nv) = (u.norm(), v.norm());
    if nu <= F::zero() || nv <= F::zero() || !nu.is_finite() || !nv.is_finite() {
        return Err(Error::Input("angle of zero vector".into()));
    }
    let c = (u.dot(v) / (nu * nv)).max(-F::one()).min(F::one());
    Ok(c.acos().to_degrees())
}

/// Direction of the total-least-squares line through `points`, returned as
/// a unit vector oriented so that it points from `origin` toward the far
/// end of the run.
///
/// Uses the principal axis of the 2x2 coordinate covariance, which handles
/// vertical runs that an y-on-x regression cannot.
pub fn fit_direction<F: Real>(points: &[Vec2<F>], origin: Vec2<F>) -> Result<Vec2<F>> {
    if points.len() < 2 {
        return Err(Error::UndefinedDirection(format!(
            "{} point(s), need at least 2",
            points.len()
        )));
    }
    let n = F::from_usize(points.len()).unwrap();
    let mut mx = F::zero();
    let mut my = F::zero();
    for p in points {
        mx = mx + p.x;
        my = my + p.y;
    }
    mx = mx / n;
    my = my / n;
    let (mut sxx, mut sxy, mut syy) = (F::zero(), F::zero(), F::zero());
    for p in points {
        let dx = p.x - mx;
        let dy = p.y - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx + syy <= F::zero() {
        return Err(Error::UndefinedDirection("all points coincident".into()));
    }
    // Largest-eigenvalue eigenvector of [[sxx, sxy], [sxy, syy]].
    let half = F::of(0.5);
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr * F::of(0.25) - det).max(F::zero()).sqrt();
    let lambda = tr * half + disc;
    let dir = if sxy.abs() > F::epsilon() * tr {
        Vec2::new(lambda - syy, sxy)
    } else if sxx >= syy {
        Vec2::new(F::one(), F::zero())
    } else {
        Vec2::new(F::zero(), F::one())
    };
    let dir = dir.normalized()?;
    // Orient away from the origin end of the run.
    let far = points[points.len() - 1];
    if dir.dot(far.sub(origin)) < F::zero() {
        Ok(dir.neg())
    } else {
        Ok(dir)
    }
}
