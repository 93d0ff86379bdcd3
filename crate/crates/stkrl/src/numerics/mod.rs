//! Small dense linear-algebra kernel plus the numeric helpers shared by the
//! encoders, the energy function and the gradient checker.

mod gradcheck;
mod matrix;
mod vector;

pub use gradcheck::{finite_diff_check, GradCheckEntry, GradCheckReport, GradCheckTarget};
pub use matrix::Matrix;
pub use vector::Vector;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{real, Scalar};

/// Which vector norm scores a translation residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    L2,
}

/// `‖v‖` under the selected norm.
pub fn norm_score<T: Scalar>(v: &Vector<T>, kind: NormKind) -> T {
    match kind {
        NormKind::L1 => v.iter().map(|&a| a.abs()).sum(),
        NormKind::L2 => v.norm2(),
    }
}

/// Subgradient of `norm_score` at `v`.
///
/// For L1 this is `sign(v)` elementwise with `sign(0) = 0`; for L2 it is
/// `v / ‖v‖`, taken as the zero vector when `‖v‖ = 0`. Both conventions pick
/// the minimum-norm element of the subdifferential at the kink.
pub fn norm_subgradient<T: Scalar>(v: &Vector<T>, kind: NormKind) -> Vector<T> {
    let mut out = Vector::zeros(v.len());
    match kind {
        NormKind::L1 => {
            for i in 0..v.len() {
                let x = v[i];
                out[i] = if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
            }
        }
        NormKind::L2 => {
            let n = v.norm2();
            if n > T::zero() {
                for i in 0..v.len() {
                    out[i] = v[i] / n;
                }
            }
        }
    }
    out
}

/// Cosine similarity. Zero-norm inputs score 0 by convention. Errors if the
/// lengths differ.
pub fn cosine<T: Scalar>(a: &Vector<T>, b: &Vector<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::Usage(format!(
            "cosine: length mismatch ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let na = a.norm2();
    let nb = b.norm2();
    if na == T::zero() || nb == T::zero() {
        return Ok(T::zero());
    }
    Ok(a.dot(b) / (na * nb))
}

/// Numerically stable logistic function.
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Derivative of `tanh` expressed through its output: `1 - y²`.
pub fn dtanh_from_output<T: Scalar>(y: T) -> T {
    T::one() - y * y
}

/// Derivative of the logistic function expressed through its output: `y (1 - y)`.
pub fn dsigmoid_from_output<T: Scalar>(y: T) -> T {
    y * (T::one() - y)
}

/// Projects `v` onto the unit L2 ball: rescales only when `‖v‖₂ > 1`.
pub fn project_unit_ball<T: Scalar>(v: &mut Vector<T>) {
    let n = v.norm2();
    if n > T::one() {
        v.scale(T::one() / n);
    }
}

/// Scales `v` to unit L2 norm; leaves the zero vector untouched.
pub fn normalize_l2<T: Scalar>(v: &mut Vector<T>) {
    let n = v.norm2();
    if n > T::zero() {
        v.scale(T::one() / n);
    }
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "l1" | "L1" => Ok(NormKind::L1),
            "l2" | "L2" => Ok(NormKind::L2),
            other => Err(Error::Config(format!("unknown norm '{other}'"))),
        }
    }
}

/// Convenience used all over the gradient code: `a + r - b`.
pub fn translation_residual<T: Scalar>(a: &Vector<T>, r: &Vector<T>, b: &Vector<T>) -> Vector<T> {
    let mut out = a.clone();
    out.add_assign(r);
    out.sub_assign(b);
    out
}

/// Guard that turns a non-finite scalar into a reportable error.
pub fn ensure_finite<T: Scalar>(x: T, what: &str) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numeric(format!("{what} is not finite ({x})")))
    }
}

/// `max(x, floor)` for weight clamping.
pub fn clamp_min<T: Scalar>(x: T, floor: T) -> T {
    if x < floor {
        floor
    } else {
        x
    }
}

/// Mean of an `f64` slice; 0 for empty input.
pub fn mean_f64(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Uniform draw from `[-width, width]`.
pub fn uniform_symmetric<T: Scalar, R: rand::Rng>(rng: &mut R, width: f64) -> T {
    real::<T>(rng.random_range(-width..=width))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn l1_norm_and_subgradient() {
        let v = Vector::from_vec(vec![1.0f64, -2.0, 0.0, 3.5]);
        assert_eq!(norm_score(&v, NormKind::L1), 6.5);
        let g = norm_subgradient(&v, NormKind::L1);
        assert_eq!(g.as_slice(), &[1.0, -1.0, 0.0, 1.0]);
    }

    #[test]
    fn l2_norm_and_gradient() {
        let v = Vector::from_vec(vec![3.0f64, 4.0]);
        assert_eq!(norm_score(&v, NormKind::L2), 5.0);
        let g = norm_subgradient(&v, NormKind::L2);
        assert!((g[0] - 0.6).abs() < 1e-15);
        assert!((g[1] - 0.8).abs() < 1e-15);
        let zero = Vector::<f64>::zeros(2);
        assert_eq!(norm_subgradient(&zero, NormKind::L2).as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn cosine_reference_values() {
        let a = Vector::from_vec(vec![1.0f64, 1.0]);
        let b = Vector::from_vec(vec![1.0f64, 0.0]);
        // 1/sqrt(2), evaluated independently.
        let got = cosine(&a, &b).unwrap();
        assert!((got - 0.7071067811865476).abs() < 1e-15);

        let c = Vector::from_vec(vec![0.0f64, 2.0]);
        assert_eq!(cosine(&b, &c).unwrap(), 0.0);

        let zero = Vector::<f64>::zeros(2);
        assert_eq!(cosine(&zero, &b).unwrap(), 0.0);

        let short = Vector::<f64>::zeros(3);
        assert!(cosine(&short, &b).is_err());
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let a = Vector::from_vec(vec![0.3f64, -1.2, 2.0]);
        let b = Vector::from_vec(vec![-0.5f64, 0.4, 1.1]);
        let c1 = cosine(&a, &b).unwrap();
        let c2 = cosine(&a.scaled(7.5), &b.scaled(0.2)).unwrap();
        assert!((c1 - c2).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&c1));
    }

    #[test]
    fn sigmoid_values() {
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
        // 1/(1+e^{-1}), evaluated independently.
        assert!((sigmoid(1.0f64) - 0.7310585786300049).abs() < 1e-15);
        assert!(sigmoid(-100.0f64) >= 0.0);
        assert!(sigmoid(100.0f64) <= 1.0);
    }

    #[test]
    fn matvec_and_transpose_agree_with_manual_computation() {
        let m = Matrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        let x = Vector::from_vec(vec![1.0f64, 2.0, 3.0]);
        let y = m.matvec(&x);
        assert_eq!(y.as_slice(), &[8.0, 26.0]);
        let yt = m.matvec_t(&Vector::from_vec(vec![1.0f64, 1.0]));
        assert_eq!(yt.as_slice(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn outer_product_accumulates() {
        let mut m = Matrix::zeros(2, 2);
        let y = Vector::from_vec(vec![1.0f64, 2.0]);
        let x = Vector::from_vec(vec![3.0f64, 4.0]);
        m.add_outer(&y, &x);
        m.add_outer(&y, &x);
        assert_eq!(m.as_slice(), &[6.0, 8.0, 12.0, 16.0]);
    }

    #[test]
    fn projection_only_shrinks_long_vectors() {
        let mut v = Vector::from_vec(vec![3.0f64, 4.0]);
        project_unit_ball(&mut v);
        assert!((v.norm2() - 1.0).abs() < 1e-12);
        let mut w = Vector::from_vec(vec![0.3f64, 0.4]);
        let before = w.clone();
        project_unit_ball(&mut w);
        assert_eq!(w, before);
    }
}
