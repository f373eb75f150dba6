//! Small dense helpers for `d×d` row-major matrices stored in slices, and the
//! re-orthonormalizing accumulator used for long Jacobian products.

use nalgebra::DMatrix;

pub(crate) fn identity_into(out: &mut [f64], d: usize) {
    out.fill(0.0);
    for i in 0..d {
        out[i * d + i] = 1.0;
    }
}

/// `out = a · b` for row-major `d×d` matrices.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], d: usize) {
    for i in 0..d {
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..d {
                acc += a[i * d + k] * b[k * d + j];
            }
            out[i * d + j] = acc;
        }
    }
}

/// `b ← a · b` using `tmp` as workspace.
pub(crate) fn left_mul_assign(a: &[f64], b: &mut [f64], tmp: &mut [f64], d: usize) {
    matmul_into(a, b, tmp, d);
    b.copy_from_slice(&tmp[..d * d]);
}

pub(crate) fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn to_dmatrix(a: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(d, d, &a[..d * d])
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    m.singular_values().max()
}

pub fn vec_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Holds a product `J_n ⋯ J_1` as `e^{log_scale} · Q · R` with `Q` orthogonal
/// and `R` upper triangular, normalized so its largest entry is 1.
///
/// `log_diag[i]` accumulates `ln |R'_ii|` over every re-orthonormalization,
/// which is what the QR method for Lyapunov spectra needs.
#[derive(Clone, Debug)]
pub struct QrAccumulator {
    d: usize,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    log_scale: f64,
    log_diag: Vec<f64>,
}

impl QrAccumulator {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            q: DMatrix::identity(d, d),
            r: DMatrix::identity(d, d),
            log_scale: 0.0,
            log_diag: vec![0.0; d],
        }
    }

    /// Multiplies the accumulated product on the left by `block` (row-major).
    pub fn absorb(&mut self, block: &[f64]) {
        let b = to_dmatrix(block, self.d);
        let m = b * &self.q;
        let qr = m.qr();
        let (mut q, mut r) = qr.unpack();
        // Fix signs so diag(R) ≥ 0; keeps Q continuous along the orbit.
        for i in 0..self.d {
            if r[(i, i)] < 0.0 {
                for j in 0..self.d {
                    r[(i, j)] = -r[(i, j)];
                    q[(j, i)] = -q[(j, i)];
                }
            }
        }
        for i in 0..self.d {
            self.log_diag[i] += r[(i, i)].ln();
        }
        let mut total = r * &self.r;
        let scale = total.amax();
        if scale > 0.0 && scale.is_finite() {
            total /= scale;
            self.log_scale += scale.ln();
        }
        self.q = q;
        self.r = total;
    }

    pub fn log_diag(&self) -> &[f64] {
        &self.log_diag
    }

    /// `ln ‖J_n ⋯ J_1‖₂`.
    pub fn log_norm(&self) -> f64 {
        self.log_scale + spectral_norm(&self.r).ln()
    }

    pub fn log_scale(&self) -> f64 {
        self.log_scale
    }

    /// The product divided by `e^{log_scale}`.
    pub fn scaled_matrix(&self) -> DMatrix<f64> {
        &self.q * &self.r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn accumulator_matches_plain_product() {
        let blocks = [[1.2, 0.3, -0.4, 0.9], [0.5, -1.1, 0.2, 0.7], [2.0, 0.0, 0.1, 0.3]];
        let mut acc = QrAccumulator::new(2);
        let mut plain = vec![0.0; 4];
        identity_into(&mut plain, 2);
        let mut tmp = vec![0.0; 4];
        for b in &blocks {
            acc.absorb(b);
            left_mul_assign(b, &mut plain, &mut tmp, 2);
        }
        let got = acc.scaled_matrix() * acc.log_scale().exp();
        let want = to_dmatrix(&plain, 2);
        assert_relative_eq!(got, want, epsilon = 1e-12);
        assert_relative_eq!(acc.log_norm(), spectral_norm(&want).ln(), epsilon = 1e-12);
        let logdet: f64 = acc.log_diag().iter().sum();
        assert_relative_eq!(logdet, want.determinant().abs().ln(), epsilon = 1e-12);
    }

    #[test]
    fn accumulator_survives_overflow_scale() {
        let mut acc = QrAccumulator::new(1);
        for _ in 0..2000 {
            acc.absorb(&[1e10]);
        }
        assert_relative_eq!(acc.log_norm(), 2000.0 * 1e10f64.ln(), max_relative = 1e-12);
    }
}
