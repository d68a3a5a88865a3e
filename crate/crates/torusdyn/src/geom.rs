//! Points on the torus, phase-space points, the symplectic pairing, and
//! symplectic frames along orbits. All angles live in [0, 2π); distances on
//! the torus take the shorter way around each circle.

use nalgebra::{Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

pub const TAU: f64 = std::f64::consts::TAU;

/// Wrap an angle into [0, 2π).
pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r == TAU {
        0.0
    } else {
        r
    }
}

/// Signed angular difference a − b reduced to (−π, π].
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let mut d = (a - b).rem_euclid(TAU);
    if d > std::f64::consts::PI {
        d -= TAU;
    }
    d
}

/// Point on the flat 2-torus R²/2πZ².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x1: f64,
    pub x2: f64,
}

impl TorusPoint {
    pub fn new(x1: f64, x2: f64) -> Self {
        TorusPoint { x1, x2 }
    }

    pub fn wrap(self) -> Self {
        TorusPoint {
            x1: wrap_angle(self.x1),
            x2: wrap_angle(self.x2),
        }
    }

    /// Geodesic distance on the flat torus.
    pub fn dist(self, other: Self) -> f64 {
        let d1 = angle_diff(self.x1, other.x1);
        let d2 = angle_diff(self.x2, other.x2);
        (d1 * d1 + d2 * d2).sqrt()
    }

    pub fn as_vector(self) -> Vector2<f64> {
        Vector2::new(self.x1, self.x2)
    }
}

/// Cotangent point (x, p) ∈ T*T².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: TorusPoint,
    /// Momentum covector components (p1, p2).
    pub p1: f64,
    pub p2: f64,
}

impl PhasePoint {
    pub fn new(x1: f64, x2: f64, p1: f64, p2: f64) -> Self {
        PhasePoint {
            x: TorusPoint::new(x1, x2),
            p1,
            p2,
        }
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        PhasePoint::new(v[0], v[1], v[2], v[3])
    }

    /// State vector (x1, x2, p1, p2); angles are NOT wrapped here so that
    /// trajectories stay continuous in the covering space.
    pub fn as_vector(self) -> Vector4<f64> {
        Vector4::new(self.x.x1, self.x.x2, self.p1, self.p2)
    }

    pub fn momentum(self) -> Vector2<f64> {
        Vector2::new(self.p1, self.p2)
    }

    pub fn wrap(self) -> Self {
        PhasePoint {
            x: self.x.wrap(),
            ..self
        }
    }

    /// Product metric: torus distance on the base, Euclidean on momenta.
    pub fn dist(self, other: Self) -> f64 {
        let dx = self.x.dist(other.x);
        let dp1 = self.p1 - other.p1;
        let dp2 = self.p2 - other.p2;
        (dx * dx + dp1 * dp1 + dp2 * dp2).sqrt()
    }
}

/// Tangent point (x, v) ∈ TT², the domain of the Legendre transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentPoint {
    pub x: TorusPoint,
    /// Velocity components (v1, v2).
    pub v1: f64,
    pub v2: f64,
}

impl TangentPoint {
    pub fn new(x1: f64, x2: f64, v1: f64, v2: f64) -> Self {
        TangentPoint {
            x: TorusPoint::new(x1, x2),
            v1,
            v2,
        }
    }

    pub fn velocity(self) -> Vector2<f64> {
        Vector2::new(self.v1, self.v2)
    }
}

/// Structure matrix of the pairing ω(ξ, ζ) = ξᵀ J ζ in (x, p) coordinates.
#[rustfmt::skip]
pub fn j_matrix() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, -1.0, 0.0,
        0.0, 0.0, 0.0, -1.0,
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
    )
}

/// Canonical matrix J_c = −J; Hamilton's equations read ż = J_c ∇H(z).
#[rustfmt::skip]
pub fn jc_matrix() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        -1.0, 0.0, 0.0, 0.0,
        0.0, -1.0, 0.0, 0.0,
    )
}

/// Symplectic pairing ω(a, b) = aᵀ J b = a_p·b_x − a_x·b_p.
pub fn omega(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    a[2] * b[0] + a[3] * b[1] - a[0] * b[2] - a[1] * b[3]
}

/// Canonical pairing ω_c(a, b) = a_x·b_p − a_p·b_x = −ω(a, b).
pub fn omega_c(a: &Vector4<f64>, b: &Vector4<f64>) -> f64 {
    -omega(a, b)
}

/// 4×4 matrix wrapper with symplectic diagnostics. Monodromy and transition
/// matrices of the flow satisfy Mᵀ J_c M = J_c (equivalently with J).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SymplecticMatrix4(pub Matrix4<f64>);

impl SymplecticMatrix4 {
    pub fn identity() -> Self {
        SymplecticMatrix4(Matrix4::identity())
    }

    /// Max-abs entry of Mᵀ J_c M − J_c; zero for exactly symplectic M.
    pub fn symplectic_defect(&self) -> f64 {
        let jc = jc_matrix();
        let r = self.0.transpose() * jc * self.0 - jc;
        r.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Symplectic inverse J_c⁻¹ Mᵀ J_c, exact for symplectic M and immune
    /// to the conditioning of Gaussian elimination.
    pub fn symplectic_inverse(&self) -> Self {
        let jc = jc_matrix();
        // J_c⁻¹ = −J_c
        SymplecticMatrix4(-jc * self.0.transpose() * jc)
    }

    /// Characteristic polynomial coefficients [c0, c1, c2, c3, 1] of
    /// λ⁴ + c3 λ³ + c2 λ² + c1 λ + c0, by the Faddeev–LeVerrier recursion.
    pub fn char_poly(&self) -> [f64; 5] {
        let a = self.0;
        let i = Matrix4::identity();
        let m1 = a;
        let c3 = -m1.trace();
        let m2 = a * (m1 + i * c3);
        let c2 = -m2.trace() / 2.0;
        let m3 = a * (m2 + i * c2);
        let c1 = -m3.trace() / 3.0;
        let m4 = a * (m3 + i * c1);
        let c0 = -m4.trace() / 4.0;
        [c0, c1, c2, c3, 1.0]
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }
}

/// Symplectic frame (u1, u2, u1*, u2*) at a phase point: ω(ui, uj*) = δij
/// and all other pairings vanish, i.e. Fᵀ J F = J_c for F = [u1 u2 u1* u2*].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SymplecticFrame {
    pub u1: Vector4<f64>,
    pub u2: Vector4<f64>,
    pub u1_star: Vector4<f64>,
    pub u2_star: Vector4<f64>,
}

impl SymplecticFrame {
    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_columns(&[self.u1, self.u2, self.u1_star, self.u2_star])
    }

    /// Max-abs entry of Fᵀ J F − J_c.
    pub fn defect(&self) -> f64 {
        let r = self.matrix().transpose() * j_matrix() * self.matrix() - jc_matrix();
        r.iter().fold(0.0, |m, &v| m.max(v.abs()))
    }

    /// Inverse of the frame matrix, computed symplectically: F⁻¹ = J Fᵀ J.
    pub fn inverse(&self) -> Matrix4<f64> {
        let j = j_matrix();
        j * self.matrix().transpose() * j
    }

    /// Coordinates c with F c = v.
    pub fn coords(&self, v: &Vector4<f64>) -> Vector4<f64> {
        self.inverse() * v
    }

    /// Conjugate a matrix into frame coordinates: F⁻¹ M F.
    pub fn conjugate(&self, m: &Matrix4<f64>) -> Matrix4<f64> {
        self.inverse() * m * self.matrix()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn j_and_jc_are_negatives_and_square_to_minus_one() {
        let j = j_matrix();
        let jc = jc_matrix();
        assert_eq!(j, -jc);
        assert_eq!(j * j, -Matrix4::identity());
        assert_eq!(jc * jc, -Matrix4::identity());
    }

    #[test]
    fn omega_of_free_particle_frame_vectors() {
        // u1 = (1,0,0,0), u1* = (0,0,-1,0): dH pairing against the flow
        let u1 = Vector4::new(1.0, 0.0, 0.0, 0.0);
        let u1s = Vector4::new(0.0, 0.0, -1.0, 0.0);
        assert_relative_eq!(omega(&u1, &u1s), 1.0);
        assert_relative_eq!(omega(&u1s, &u1), -1.0);
        assert_relative_eq!(omega(&u1, &u1), 0.0);
    }

    #[test]
    fn frame_inverse_is_symplectic_inverse() {
        let f = SymplecticFrame {
            u1: Vector4::new(1.0, 0.0, 0.0, 0.0),
            u2: Vector4::new(0.0, 1.0, 0.0, 0.0),
            u1_star: Vector4::new(0.0, 0.0, -1.0, 0.0),
            u2_star: Vector4::new(0.0, 0.0, 0.0, -1.0),
        };
        assert!(f.defect() < 1e-15);
        let prod = f.inverse() * f.matrix();
        assert_relative_eq!(prod, Matrix4::identity(), epsilon = 1e-14);
    }

    #[test]
    fn char_poly_of_diagonal_matrix() {
        let m = SymplecticMatrix4(Matrix4::from_diagonal(&Vector4::new(1.0, 2.0, 3.0, 4.0)));
        // (λ−1)(λ−2)(λ−3)(λ−4) = λ⁴ −10λ³ +35λ² −50λ +24
        let c = m.char_poly();
        assert_relative_eq!(c[4], 1.0);
        assert_relative_eq!(c[3], -10.0, max_relative = 1e-14);
        assert_relative_eq!(c[2], 35.0, max_relative = 1e-14);
        assert_relative_eq!(c[1], -50.0, max_relative = 1e-14);
        assert_relative_eq!(c[0], 24.0, max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn wrap_and_dist_are_consistent(a in -50.0..50.0f64, b in -50.0..50.0f64, k in -5i32..5) {
            let w = wrap_angle(a);
            prop_assert!((0.0..TAU).contains(&w));
            // distance is invariant under deck transformations
            let p = TorusPoint::new(a, b);
            let q = TorusPoint::new(a + k as f64 * TAU, b - k as f64 * TAU);
            prop_assert!(p.dist(q) < 1e-9);
            // diff is inverse of wrap up to 2π
            let d = angle_diff(a, w);
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn omega_is_antisymmetric(ax in -3.0..3.0f64, ay in -3.0..3.0f64, ap in -3.0..3.0f64, aq in -3.0..3.0f64,
                                  bx in -3.0..3.0f64, by in -3.0..3.0f64, bp in -3.0..3.0f64, bq in -3.0..3.0f64) {
            let a = Vector4::new(ax, ay, ap, aq);
            let b = Vector4::new(bx, by, bp, bq);
            prop_assert!((omega(&a, &b) + omega(&b, &a)).abs() < 1e-12);
            prop_assert!((omega(&a, &b) + omega_c(&a, &b)).abs() < 1e-12);
        }
    }
}
