use crate::error::{MrsError, Result};

/// Linear interpolation between order statistics (the "type 7" rule).
pub fn quantile(data: &[f64], p: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(MrsError::arg("quantile of an empty series"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(MrsError::arg(format!("quantile level {p} outside [0, 1]")));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Spike and drop shifts: the first and third quartile of the data.
pub fn quartile_shifts(data: &[f64]) -> Result<(f64, f64)> {
    Ok((quantile(data, 0.25)?, quantile(data, 0.75)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_quartiles() {
        assert_eq!(
            quartile_shifts(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            (2.0, 4.0)
        );
        // h = 0.75 and 2.25 for n = 4.
        assert_eq!(
            quartile_shifts(&[4.0, 1.0, 3.0, 2.0]).unwrap(),
            (1.75, 3.25)
        );
    }

    #[test]
    fn constant_series() {
        assert_eq!(quartile_shifts(&[7.5; 9]).unwrap(), (7.5, 7.5));
    }

    #[test]
    fn empty_is_an_error() {
        assert!(quartile_shifts(&[]).is_err());
    }

    proptest! {
        #[test]
        fn translation_equivariant(data in prop::collection::vec(-1e3f64..1e3, 1..60), c in -100.0f64..100.0) {
            let (s, d) = quartile_shifts(&data).unwrap();
            let moved: Vec<f64> = data.iter().map(|x| x + c).collect();
            let (s2, d2) = quartile_shifts(&moved).unwrap();
            prop_assert!((s2 - s - c).abs() < 1e-9);
            prop_assert!((d2 - d - c).abs() < 1e-9);
        }
    }
}
