use crate::square;

pub fn mean(xs: &[i64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    Some(xs.iter().sum::<i64>() as f64 / xs.len() as f64)
}

pub fn sum_of_squares(xs: &[i64]) -> i64 {
    xs.iter().map(|&x| square(x)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_empty() {
        assert_eq!(mean(&[]), None);
    }

    #[test]
    fn squares_sum() {
        assert_eq!(sum_of_squares(&[1, 2, 3]), 14);
    }
}
