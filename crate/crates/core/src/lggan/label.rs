use crate::diffnet::{Mat, Real};
use crate::error::{ModelError, ModelResult};

/// One-hot target code fed to every label-concatenating decoder layer.
///
/// The same vector `z_t` is used at each layer and repeated once per point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelCode {
    target: usize,
    classes: usize,
    layers: usize,
}

impl LabelCode {
    pub fn new(target: usize, classes: usize, layers: usize) -> ModelResult<Self> {
        if target >= classes {
            return Err(ModelError::TargetOutOfRange { target, classes });
        }
        Ok(Self { target, classes, layers })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Number of decoder layers receiving the code.
    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn one_hot<T: Real>(&self) -> Vec<T> {
        (0..self.classes)
            .map(|c| if c == self.target { T::one() } else { T::zero() })
            .collect()
    }

    /// The code repeated for `points` rows.
    pub fn broadcast<T: Real>(&self, points: usize) -> Mat<T> {
        let row = self.one_hot::<T>();
        Mat::from_vec(points, self.classes, row.iter().copied().cycle().take(points * self.classes).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exactly_one_hot_entry() {
        for t in 0..5 {
            let code = LabelCode::new(t, 5, 3).unwrap();
            let v = code.one_hot::<f64>();
            assert_eq!(v.iter().filter(|&&x| x == 1.0).count(), 1);
            assert_eq!(v.iter().sum::<f64>(), 1.0);
            assert_eq!(v[t], 1.0);
            let b = code.broadcast::<f32>(4);
            assert_eq!((b.rows(), b.cols()), (4, 5));
            for r in 0..4 {
                assert_eq!(b.row(r)[t], 1.0);
            }
        }
        assert!(LabelCode::new(5, 5, 3).is_err());
    }
}
