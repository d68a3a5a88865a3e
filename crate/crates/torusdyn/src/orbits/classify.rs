//! Stability type and m-th order nondegeneracy of the transverse return
//! map, plus a diagnostic factorization check tying the full monodromy
//! spectrum to the transverse block.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::geom::SymplecticMatrix4;

/// Stability type of the transverse 2×2 return map (determinant 1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitClass {
    /// Real reciprocal multipliers λ, 1/λ with |λ| > 1.
    Hyperbolic,
    /// Unit-circle multipliers e^{±iα}.
    Elliptic,
    /// |trace| within tolerance of 2: multipliers at ±1.
    Parabolic,
}

/// Stability classification with the multipliers as (re, im) pairs.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub class: OrbitClass,
    pub trace: f64,
    pub multipliers: [[f64; 2]; 2],
}

/// Classify the transverse return map by its trace; `tol` is the margin
/// around |tr| = 2 inside which the orbit is reported parabolic.
pub fn classify_stability(d_p: &Matrix2<f64>, tol: f64) -> StabilityReport {
    let tr = d_p.trace();
    let disc = tr * tr - 4.0;
    let (class, multipliers) = if tr.abs() > 2.0 + tol {
        let root = disc.sqrt();
        let l1 = 0.5 * (tr + root);
        let l2 = 0.5 * (tr - root);
        (OrbitClass::Hyperbolic, [[l1, 0.0], [l2, 0.0]])
    } else if tr.abs() < 2.0 - tol {
        let root = (-disc).sqrt();
        (
            OrbitClass::Elliptic,
            [[0.5 * tr, 0.5 * root], [0.5 * tr, -0.5 * root]],
        )
    } else {
        let l = 0.5 * tr;
        (OrbitClass::Parabolic, [[l, 0.0], [l, 0.0]])
    };
    StabilityReport {
        class,
        trace: tr,
        multipliers,
    }
}

/// Verdict for one iterate count m.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct MVerdict {
    pub m: u32,
    pub nondegenerate: bool,
    /// Scaled |det(I − dPᵐ)|; compared against the tolerance.
    pub margin: f64,
}

/// Nondegeneracy of dPᵐ for m = 1..=m_max.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NondegeneracyReport {
    pub per_m: Vec<MVerdict>,
}

impl NondegeneracyReport {
    pub fn all_nondegenerate(&self) -> bool {
        self.per_m.iter().all(|v| v.nondegenerate)
    }

    pub fn degenerate_orders(&self) -> Vec<u32> {
        self.per_m
            .iter()
            .filter(|v| !v.nondegenerate)
            .map(|v| v.m)
            .collect()
    }
}

/// An orbit is m-nondegenerate when 1 is not an eigenvalue of dPᵐ, i.e.
/// det(I − dPᵐ) ≠ 0. The determinant is scaled by the squared size of dPᵐ
/// so hyperbolic growth does not inflate the margin.
pub fn classify_nondegeneracy(
    d_p: &Matrix2<f64>,
    m_max: u32,
    tol: f64,
) -> NondegeneracyReport {
    let mut per_m = Vec::with_capacity(m_max as usize);
    let mut power = Matrix2::identity();
    for m in 1..=m_max {
        power *= d_p;
        let det = (Matrix2::identity() - power).determinant();
        let scale = (1.0 + power.norm()).powi(2);
        let margin = det.abs() / scale;
        per_m.push(MVerdict {
            m,
            nondegenerate: margin > tol,
            margin,
        });
    }
    NondegeneracyReport { per_m }
}

/// Multiply ascending-coefficient polynomials.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// The full monodromy spectrum splits as the two trivial multipliers at 1
/// (flow and energy directions) times the transverse spectrum:
/// char(Mᵐ) = (λ − 1)² · char(dPᵐ). Returns the maximum relative
/// coefficient mismatch between the two sides.
pub fn monodromy_factorization_defect(
    monodromy: &SymplecticMatrix4,
    d_p: &Matrix2<f64>,
    m: u32,
) -> f64 {
    let mut m_pow = monodromy.0;
    let mut p_pow = *d_p;
    for _ in 1..m {
        m_pow *= monodromy.0;
        p_pow *= d_p;
    }
    let left = SymplecticMatrix4(m_pow).char_poly();
    // (λ − 1)² = λ² − 2λ + 1; char(dPᵐ) = λ² − tr λ + det
    let quad = [1.0, -2.0, 1.0];
    let trans = [p_pow.determinant(), -p_pow.trace(), 1.0];
    let right = poly_mul(&quad, &trans);
    let mut worst: f64 = 0.0;
    for k in 0..5 {
        let denom = 1.0 + left[k].abs().max(right[k].abs());
        worst = worst.max((left[k] - right[k]).abs() / denom);
    }
    worst
}
