//! Volume comparison.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensors::Volume;

/// Root-mean-square difference, accumulated in `f64`. The volumes must agree
/// in dimensions and layout.
pub fn rmse<T: Scalar>(a: &Volume<T>, b: &Volume<T>) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch(format!(
            "volumes {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    if a.layout() != b.layout() {
        return Err(Error::LayoutMismatch {
            expected: a.layout(),
            found: b.layout(),
        });
    }
    Ok(rmse_slices(a.data(), b.data()))
}

pub(crate) fn rmse_slices<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let sq: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    (sq / a.len() as f64).sqrt()
}

/// Largest absolute value in the volume, as `f64`.
pub fn max_abs<T: Scalar>(v: &Volume<T>) -> f64 {
    v.data().iter().map(|x| x.as_f64().abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensors::Layout;
    use proptest::prelude::*;

    fn vol(data: Vec<f32>) -> Volume<f32> {
        let n = data.len();
        Volume::from_vec(data, n, 1, 1, Layout::Natural).unwrap()
    }

    #[test]
    fn known_values() {
        assert_eq!(rmse(&vol(vec![1.0, 2.0]), &vol(vec![1.0, 2.0])).unwrap(), 0.0);
        let r = rmse(&vol(vec![0.0, 0.0, 0.0, 0.0]), &vol(vec![1.0, -1.0, 1.0, -1.0])).unwrap();
        assert!((r - 1.0).abs() < 1e-15);
        let r = rmse(&vol(vec![0.0, 0.0]), &vol(vec![3.0, 4.0])).unwrap();
        assert!((r - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mismatches_rejected() {
        assert!(rmse(&vol(vec![0.0; 4]), &vol(vec![0.0; 3])).is_err());
        let a = Volume::<f32>::zeros(2, 2, 2, Layout::Natural).unwrap();
        let b = Volume::<f32>::zeros(2, 2, 2, Layout::Transposed).unwrap();
        assert!(rmse(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(
            pairs in proptest::collection::vec((-100.0f32..100.0, -100.0f32..100.0), 1..64)
        ) {
            let (a, b): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
            let (a, b) = (vol(a), vol(b));
            let ab = rmse(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, rmse(&b, &a).unwrap());
            prop_assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn triangle_inequality(
            triples in proptest::collection::vec((-10.0f32..10.0, -10.0f32..10.0, -10.0f32..10.0), 1..32)
        ) {
            let a = vol(triples.iter().map(|t| t.0).collect());
            let b = vol(triples.iter().map(|t| t.1).collect());
            let c = vol(triples.iter().map(|t| t.2).collect());
            let lhs = rmse(&a, &c).unwrap();
            let rhs = rmse(&a, &b).unwrap() + rmse(&b, &c).unwrap();
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
