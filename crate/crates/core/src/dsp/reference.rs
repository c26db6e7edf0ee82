use ndarray::{Array2, Axis};

use crate::{Error, Result};

/// Subtract the instantaneous mean over channels from every channel.
pub fn common_average_reference(data: &Array2<f64>) -> Result<Array2<f64>> {
    if data.nrows() < 2 {
        return Err(Error::InvalidConfig(format!(
            "common average reference needs ≥ 2 channels, got {}",
            data.nrows()
        )));
    }
    let mean = data.mean_axis(Axis(0)).expect("non-empty channel axis");
    Ok(data - &mean.insert_axis(Axis(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_by_two() {
        let out = common_average_reference(&array![[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(out, array![[-1.0, -1.0], [1.0, 1.0]]);
    }

    #[test]
    fn projection_and_zero_mean() {
        let x = Array2::from_shape_fn((8, 50), |(c, t)| ((c * 31 + t * 7) % 13) as f64 - 2.5 * c as f64);
        let once = common_average_reference(&x).unwrap();
        for m in once.mean_axis(Axis(0)).unwrap() {
            assert!(m.abs() < 1e-12);
        }
        let twice = common_average_reference(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn single_channel_rejected() {
        assert!(common_average_reference(&Array2::zeros((1, 10))).is_err());
    }
}
