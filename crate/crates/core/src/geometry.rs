//! Node poses, Euler-angle rotations and array layouts.
//!
//! Orientation matrices follow the yaw-pitch-roll sequence
//! `Q = R_z(alpha) * R_y(psi) * R_x(phi)`. Antenna element `n` of a node sits
//! at `position + Q * s̃_n` in the global frame, where `s̃_n` is the n-th column
//! of the node's local (centroid-centered) coordinate matrix.

use nalgebra::{Matrix3, Matrix3xX, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};

/// Tolerance on the centroid of a local coordinate matrix.
const CENTROID_TOL: f64 = 1e-12;

/// Orientation angles of a node, in radians.
///
/// Stored exactly as given; no wrapping into `[0, 2π)` is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub psi: f64,
    pub phi: f64,
}

impl EulerAngles {
    pub fn new(alpha: f64, psi: f64, phi: f64) -> Result<Self> {
        let angles = Self { alpha, psi, phi };
        angles.check_finite()?;
        Ok(angles)
    }

    pub fn zero() -> Self {
        Self {
            alpha: 0.0,
            psi: 0.0,
            phi: 0.0,
        }
    }

    pub fn from_array(a: [f64; 3]) -> Result<Self> {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.psi, self.phi]
    }

    /// Returns a copy with component `index` (0 = alpha, 1 = psi, 2 = phi)
    /// shifted by `delta`.
    pub fn shifted(self, index: usize, delta: f64) -> Self {
        let mut a = self.to_array();
        a[index] += delta;
        Self {
            alpha: a[0],
            psi: a[1],
            phi: a[2],
        }
    }

    fn check_finite(&self) -> Result<()> {
        if self.to_array().iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "non-finite Euler angles {:?}",
                self
            )))
        }
    }
}

/// A proper rotation (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }
}

fn rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn d_rot_z(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

/// `R_z(alpha) * R_y(psi) * R_x(phi)`.
pub fn rotation_matrix(angles: &EulerAngles) -> Result<RotationMatrix> {
    angles.check_finite()?;
    Ok(RotationMatrix(
        rot_z(angles.alpha) * rot_y(angles.psi) * rot_x(angles.phi),
    ))
}

/// Partial derivatives `(∂Q/∂alpha, ∂Q/∂psi, ∂Q/∂phi)` of [`rotation_matrix`].
pub fn rotation_derivatives(angles: &EulerAngles) -> Result<[Matrix3<f64>; 3]> {
    angles.check_finite()?;
    let (z, y, x) = (rot_z(angles.alpha), rot_y(angles.psi), rot_x(angles.phi));
    Ok([
        d_rot_z(angles.alpha) * y * x,
        z * d_rot_y(angles.psi) * x,
        z * y * d_rot_x(angles.phi),
    ])
}

/// Centroid position plus orientation of a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub angles: EulerAngles,
}

impl Pose {
    pub fn new(position: Vector3<f64>, angles: EulerAngles) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite position {:?}",
                position.as_slice()
            )));
        }
        angles.check_finite()?;
        Ok(Self { position, angles })
    }
}

/// Antenna element coordinates in the node's local frame, before rotation.
///
/// Columns are element offsets from the array centroid; the column mean is
/// the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    local: Matrix3xX<f64>,
}

impl ArrayGeometry {
    pub fn new(local: Matrix3xX<f64>) -> Result<Self> {
        let n = local.ncols();
        if n == 0 {
            return Err(Error::invalid("array must have at least one element"));
        }
        if !local.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite element coordinate"));
        }
        let mean = local.column_sum() / n as f64;
        if mean.amax() > CENTROID_TOL {
            return Err(Error::invalid(format!(
                "array is not centered on its centroid (mean offset {:e} m)",
                mean.amax()
            )));
        }
        Ok(Self { local })
    }

    /// A single element at the centroid.
    pub fn point() -> Self {
        Self {
            local: Matrix3xX::zeros(1),
        }
    }

    /// Uniform planar array in the local x-y plane.
    ///
    /// `count` elements are laid out on an `rows x cols` grid where `rows` is
    /// the largest divisor of `count` not exceeding `sqrt(count)`; elements are
    /// listed row by row (x varies fastest) and the grid is centered.
    pub fn upa(count: usize, spacing: f64) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("array must have at least one element"));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::invalid(format!(
                "element spacing {spacing} must be > 0"
            )));
        }
        let (rows, cols) = upa_shape(count);
        let x0 = (cols as f64 - 1.0) / 2.0;
        let y0 = (rows as f64 - 1.0) / 2.0;
        let local = Matrix3xX::from_fn(count, |i, n| {
            let (r, c) = (n / cols, n % cols);
            match i {
                0 => (c as f64 - x0) * spacing,
                1 => (r as f64 - y0) * spacing,
                _ => 0.0,
            }
        });
        Ok(Self { local })
    }

    pub fn count(&self) -> usize {
        self.local.ncols()
    }

    pub fn local_coords(&self) -> &Matrix3xX<f64> {
        &self.local
    }

    /// Largest distance between any two elements.
    pub fn max_diameter(&self) -> f64 {
        let n = self.count();
        let mut best = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                best = best.max((self.local.column(i) - self.local.column(j)).norm());
            }
        }
        best
    }
}

/// Grid shape `(rows, cols)` used by [`ArrayGeometry::upa`].
pub fn upa_shape(count: usize) -> (usize, usize) {
    let mut rows = (count as f64).sqrt().floor() as usize;
    while rows > 1 && !count.is_multiple_of(rows) {
        rows -= 1;
    }
    let rows = rows.max(1);
    (rows, count / rows)
}

/// Global coordinates of every element: column `n` is `position + Q s̃_n`.
pub fn global_antenna_positions(pose: &Pose, array: &ArrayGeometry) -> Matrix3xX<f64> {
    // Pose invariants guarantee finite angles.
    let q = rotation_matrix(&pose.angles)
        .expect("pose angles are finite")
        .into_inner();
    let mut out = q * array.local_coords();
    for mut col in out.column_iter_mut() {
        col += pose.position;
    }
    out
}

/// Distance and direction from one point to another.
///
/// When the direction is vertical (`theta` is 0 or π) the azimuth is
/// undefined and reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionInfo {
    pub distance: f64,
    pub unit_vector: Vector3<f64>,
    pub azimuth: f64,
    pub elevation: f64,
}

pub fn direction_info(p_from: &Vector3<f64>, p_to: &Vector3<f64>) -> Result<DirectionInfo> {
    let diff = p_to - p_from;
    let distance = diff.norm();
    if distance == 0.0 || !distance.is_finite() {
        return Err(Error::degenerate(format!(
            "points {:?} and {:?} coincide",
            p_from.as_slice(),
            p_to.as_slice()
        )));
    }
    let unit_vector = diff / distance;
    let horizontal = unit_vector.x.hypot(unit_vector.y);
    let elevation = horizontal.atan2(unit_vector.z);
    let azimuth = if horizontal == 0.0 {
        0.0
    } else {
        unit_vector.y.atan2(unit_vector.x)
    };
    Ok(DirectionInfo {
        distance,
        unit_vector,
        azimuth,
        elevation,
    })
}

/// Near/far boundary `2 D² / λ`.
pub fn fraunhofer_distance(max_diameter: f64, wavelength: f64) -> Result<f64> {
    if !(max_diameter > 0.0 && max_diameter.is_finite()) {
        return Err(Error::invalid(format!(
            "array diameter {max_diameter} must be positive"
        )));
    }
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(Error::invalid(format!(
            "wavelength {wavelength} must be positive"
        )));
    }
    Ok(2.0 * max_diameter * max_diameter / wavelength)
}
