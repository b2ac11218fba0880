//! Analytic sensitivity quantities for the g-function and for models that
//! are linear in one input, `G = a(z) x_i + b(z)` with `x_i ~ U(0, 1)`.

use std::f64::consts::PI;

/// `G = prod_i (|4 x_i - 2| + a_i) / (1 + a_i)` on the unit cube.
#[derive(Debug, Clone)]
pub struct GFunction {
    pub a: Vec<f64>,
}

impl GFunction {
    pub fn new(a: Vec<f64>) -> Self {
        Self { a }
    }

    pub fn dimension(&self) -> usize {
        self.a.len()
    }

    /// First-order partial variance `1 / (3 (1 + a_i)^2)`.
    pub fn partial_variance(&self, i: usize) -> f64 {
        1.0 / (3.0 * (1.0 + self.a[i]).powi(2))
    }

    /// `prod_{j != i} (1 + V_j)`, the mean square of the other factors.
    fn others(&self, i: usize) -> f64 {
        (0..self.dimension())
            .filter(|&j| j != i)
            .map(|j| 1.0 + self.partial_variance(j))
            .product()
    }

    pub fn variance(&self) -> f64 {
        (0..self.dimension())
            .map(|j| 1.0 + self.partial_variance(j))
            .product::<f64>()
            - 1.0
    }

    pub fn first_index(&self, i: usize) -> f64 {
        self.partial_variance(i) / self.variance()
    }

    pub fn total_variance(&self, i: usize) -> f64 {
        self.partial_variance(i) * self.others(i)
    }

    pub fn total_index(&self, i: usize) -> f64 {
        self.total_variance(i) / self.variance()
    }

    pub fn nu(&self, i: usize) -> f64 {
        16.0 / (1.0 + self.a[i]).powi(2) * self.others(i)
    }

    /// `nu_i / 12`, since `E[x(1-x)] = 1/6` and `|dG/dx_i|` does not depend on `x_i`.
    pub fn sigma_small(&self, i: usize) -> f64 {
        self.nu(i) / 12.0
    }

    pub fn ub1(&self, i: usize) -> f64 {
        self.nu(i) / (PI * PI * self.variance())
    }

    pub fn ub2(&self, i: usize) -> f64 {
        self.sigma_small(i) / self.variance()
    }

    /// Zero: `G(0, z) = G(1, z)` for every `z`.
    pub fn lb1(&self, _i: usize) -> f64 {
        0.0
    }

    pub fn gamma(&self, i: usize, m: f64) -> f64 {
        let inner = 1.0 - 4.0 * (1.0 - 0.5f64.powf(m + 1.0)) / (m + 2.0);
        (2.0 * m + 1.0) * inner * inner
            / ((1.0 + self.a[i]).powi(2) * (m + 1.0).powi(2) * self.variance())
    }
}

/// `G = a(z) x_i + b(z)`, described by `E[a]`, `E[a^2]` and the total variance.
#[derive(Debug, Clone, Copy)]
pub struct LinearInOne {
    pub mean_a: f64,
    pub mean_a_sq: f64,
    pub variance: f64,
}

impl LinearInOne {
    /// `G = c x + g0` alone: `E[a] = c`, `E[a^2] = c^2`, `V = c^2 / 12`.
    pub fn single(c: f64) -> Self {
        Self {
            mean_a: c,
            mean_a_sq: c * c,
            variance: c * c / 12.0,
        }
    }

    pub fn total_variance(&self) -> f64 {
        self.mean_a_sq / 12.0
    }

    pub fn total_index(&self) -> f64 {
        self.total_variance() / self.variance
    }

    pub fn nu(&self) -> f64 {
        self.mean_a_sq
    }

    pub fn sigma_small(&self) -> f64 {
        self.mean_a_sq / 12.0
    }

    pub fn ub1(&self) -> f64 {
        self.nu() / (PI * PI * self.variance)
    }

    pub fn ub2(&self) -> f64 {
        self.sigma_small() / self.variance
    }

    /// Zero: `G(1,z) + G(0,z) - 2 G(x)` integrates to zero against `a(z)`.
    pub fn lb1(&self) -> f64 {
        0.0
    }

    pub fn gamma(&self, m: f64) -> f64 {
        (2.0 * m + 1.0) * m * m * self.mean_a * self.mean_a
            / (4.0 * (m + 2.0).powi(2) * (m + 1.0).powi(2) * self.variance)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gfunction_ratios() {
        let g = GFunction::new(vec![0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0]);
        for i in 0..8 {
            assert_relative_eq!(g.total_index(i) / g.ub1(i), PI * PI / 48.0, max_relative = 1e-12);
            assert_relative_eq!(g.total_index(i) / g.ub2(i), 0.25, max_relative = 1e-12);
            assert_relative_eq!(g.ub2(i) / g.ub1(i), PI * PI / 12.0, max_relative = 1e-12);
        }
        assert_relative_eq!(g.variance(), 0.4654244, max_relative = 1e-6);
    }

    #[test]
    fn linear_in_one() {
        let l = LinearInOne::single(2.5);
        assert_relative_eq!(l.total_index(), 1.0);
        assert_relative_eq!(l.ub2(), l.total_index());
        assert_relative_eq!(l.ub1(), 12.0 / (PI * PI), max_relative = 1e-14);
    }
}
