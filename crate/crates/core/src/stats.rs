//! Sample statistics used by estimators and reports.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_err(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Least-squares slope of `ys` against `xs` and its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub std_err: f64,
}

impl SlopeFit {
    /// Whether the slope is distinguishable from zero at the two-sided 95% level.
    pub fn significant(&self) -> bool {
        if self.std_err == 0.0 {
            return self.slope.abs() > 1e-12;
        }
        (self.slope / self.std_err).abs() > 1.96
    }
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> SlopeFit {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let (mx, my) = (mean(xs), mean(ys));
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return SlopeFit {
            slope: 0.0,
            intercept: my,
            std_err: f64::INFINITY,
        };
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let std_err = if n > 2.0 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::INFINITY
    };
    SlopeFit {
        slope,
        intercept,
        std_err,
    }
}

/// Most frequent value; ties go to the smaller value.
pub fn mode(values: &[usize]) -> Option<usize> {
    let mut counts = std::collections::BTreeMap::new();
    for v in values {
        *counts.entry(*v).or_insert(0usize) += 1;
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(v, _)| v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn exact_line_has_zero_error() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&xs, &ys);
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!(f.std_err < 1e-12);
        assert!(f.significant());
        let flat = linear_fit(&xs, &[2.0; 4]);
        assert!(!flat.significant());
    }

    #[test]
    fn mode_prefers_smaller_on_ties() {
        assert_eq!(mode(&[2, 2, 1, 1, 3]), Some(1));
        assert_eq!(mode(&[2, 2, 2, 1]), Some(2));
        assert_eq!(mode(&[]), None);
    }
}
