//! Plane representations and the angle-to-point construction used by the
//! point distributor.
//!
//! A plane is `{x : u(theta, phi) . x = r}` where
//! `u(theta, phi) = (sin theta cos phi, sin theta sin phi, cos theta)`.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Planes closer to the origin than this are treated as passing through it.
pub const EPS_R: f64 = 1e-6;
/// Minimum magnitude of the ray/normal cosine in [`radius_from_angles`].
pub const EPS_D: f64 = 1e-6;
/// Below this `sin(theta)` the azimuth is undefined and pinned to zero.
const EPS_POLE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeomError {
    /// The plane passes through the origin; carries the canonical fallback.
    #[error("plane passes through the origin (r < {EPS_R})")]
    DegeneratePlane(PolarPlane),
    #[error("direction is parallel to the plane (|D| = {0:e})")]
    ParallelDirection(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ZERO: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Self) -> Self {
        Self::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Self) -> f64 {
        (self - o).norm()
    }

    #[inline]
    pub fn distance_squared(self, o: Self) -> f64 {
        (self - o).norm_squared()
    }

    /// Unit vector in the same direction, or `None` for (near) zero vectors.
    pub fn normalized(self) -> Option<Self> {
        let n = self.norm();
        (n > 1e-300 && n.is_finite()).then(|| self / n)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Any unit vector orthogonal to `self` (which must be unit length).
    pub fn any_orthonormal(self) -> Self {
        let helper = if self.x.abs() < 0.9 {
            Point3::new(1.0, 0.0, 0.0)
        } else {
            Point3::new(0.0, 1.0, 0.0)
        };
        let t = helper - self * helper.dot(self);
        t / t.norm()
    }
}

impl Add for Point3 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Self;
    #[inline]
    fn div(self, s: f64) -> Self {
        Self::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Point3 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Point3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Unit direction for spherical angles.
#[inline]
pub fn unit_direction(theta: f64, phi: f64) -> Point3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Point3::new(st * cp, st * sp, ct)
}

/// Plane as distance from the origin plus spherical normal angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPlane {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl PolarPlane {
    pub const fn new(r: f64, theta: f64, phi: f64) -> Self {
        Self { r, theta, phi }
    }

    pub fn normal(&self) -> Point3 {
        unit_direction(self.theta, self.phi)
    }

    /// Checks the range constraints `r >= 0`, `theta in [0, pi]`, `phi in [-pi, pi)`.
    pub fn is_valid(&self) -> bool {
        self.r.is_finite()
            && self.r >= 0.0
            && (0.0..=PI).contains(&self.theta)
            && self.phi >= -PI
            && self.phi < PI
    }
}

/// Plane `n . x = d` with unit normal `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartesianPlane {
    pub n: Point3,
    pub d: f64,
}

impl CartesianPlane {
    pub fn new(n: Point3, d: f64) -> Self {
        Self { n, d }
    }

    /// Plane through `point` with (not necessarily unit) normal `normal`.
    pub fn from_point_normal(point: Point3, normal: Point3) -> Option<Self> {
        let n = normal.normalized()?;
        Some(Self { n, d: n.dot(point) })
    }

    /// Flips to `d >= 0`; for planes through the origin the first nonzero
    /// normal component is made positive instead.
    pub fn canonical(&self) -> Self {
        let flip = if self.d.abs() < EPS_R {
            first_nonzero_negative(self.n)
        } else {
            self.d < 0.0
        };
        if flip {
            Self {
                n: -self.n,
                d: -self.d,
            }
        } else {
            *self
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: Point3) -> f64 {
        signed_distance(self, p)
    }

    /// Orthogonal projection of `p` onto the plane.
    pub fn project(&self, p: Point3) -> Point3 {
        p - self.n * self.signed_distance(p)
    }
}

fn first_nonzero_negative(n: Point3) -> bool {
    for c in n.to_array() {
        if c.abs() > EPS_POLE {
            return c < 0.0;
        }
    }
    false
}

/// A plane together with its inlier points and a confidence score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanePrimitive {
    pub plane: PolarPlane,
    pub points: Vec<Point3>,
    pub confidence: f64,
}

impl PlanePrimitive {
    pub fn cartesian(&self) -> CartesianPlane {
        polar_to_cartesian(&self.plane)
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Point3::ZERO, |acc, &p| acc + p);
        Some(sum / self.points.len() as f64)
    }
}

pub fn polar_to_cartesian(p: &PolarPlane) -> CartesianPlane {
    CartesianPlane {
        n: p.normal(),
        d: p.r,
    }
}

/// Converts to polar form, canonicalizing the sign first.
///
/// Planes through the origin yield `Err(DegeneratePlane(p))` where `p` is the
/// canonical fallback with `r = 0`.
pub fn cartesian_to_polar(c: &CartesianPlane) -> Result<PolarPlane, GeomError> {
    let mut c = *c;
    if c.d < 0.0 {
        c = CartesianPlane { n: -c.n, d: -c.d };
    }
    let degenerate = c.d < EPS_R;
    if degenerate {
        c = CartesianPlane { n: c.n, d: 0.0 }.canonical();
        c.d = 0.0;
    }
    let n = c.n;
    let theta = n.z.clamp(-1.0, 1.0).acos();
    let phi = if theta.sin() < EPS_POLE {
        0.0
    } else {
        let p = n.y.atan2(n.x);
        if p >= PI {
            -PI
        } else {
            p
        }
    };
    let polar = PolarPlane { r: c.d, theta, phi };
    if degenerate {
        Err(GeomError::DegeneratePlane(polar))
    } else {
        Ok(polar)
    }
}

/// Cosine between the ray direction `u(theta_ij, phi_ij)` and the plane normal.
#[inline]
pub fn ray_cosine(plane: &PolarPlane, theta_ij: f64, phi_ij: f64) -> f64 {
    // Written so that equal angles give exactly 1.
    (theta_ij - plane.theta).cos()
        - theta_ij.sin() * plane.theta.sin() * (1.0 - (phi_ij - plane.phi).cos())
}

/// Distance along `u(theta_ij, phi_ij)` at which the ray meets the plane.
pub fn radius_from_angles(
    plane: &PolarPlane,
    theta_ij: f64,
    phi_ij: f64,
) -> Result<f64, GeomError> {
    let d = ray_cosine(plane, theta_ij, phi_ij);
    if d.abs() <= EPS_D {
        return Err(GeomError::ParallelDirection(d));
    }
    Ok(plane.r / d)
}

pub fn point_from_angles(
    plane: &PolarPlane,
    theta_ij: f64,
    phi_ij: f64,
) -> Result<Point3, GeomError> {
    let r = radius_from_angles(plane, theta_ij, phi_ij)?;
    Ok(unit_direction(theta_ij, phi_ij) * r)
}

#[inline]
pub fn signed_distance(c: &CartesianPlane, p: Point3) -> f64 {
    c.n.dot(p) - c.d
}

/// Angle in radians between two unsigned normals, in `[0, pi/2]`.
pub fn unsigned_angle(a: Point3, b: Point3) -> f64 {
    a.dot(b).abs().min(1.0).acos()
}
