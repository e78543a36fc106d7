//! Four-body gates acting on three control sites and one target site.

use crate::rules::{AngleTable, Neighbourhood};
use crate::tensor::{DenseTensor, C64};
use faer::Mat;

/// Order-8 tensor with axes `(l, c, r, t, l', c', r', t')`; unprimed axes are
/// outputs. Reshaped to 16x16 the row index is `8l + 4c + 2r + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateTensor {
    tensor: DenseTensor,
}

impl GateTensor {
    pub fn from_matrix(m: DenseTensor) -> Self {
        assert_eq!(m.shape(), &[16, 16], "gate must be 16x16");
        Self {
            tensor: m.reshape(&[2; 8]).expect("16x16 has 256 entries"),
        }
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn matrix(&self) -> DenseTensor {
        self.tensor.clone().reshape(&[16, 16]).expect("256 entries")
    }

    /// `max |G^dagger G - 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let m = self.matrix();
        let prod = crate::tensor::matmul_tensors(&m.adjoint().unwrap(), &m).unwrap();
        prod.max_abs_diff(&DenseTensor::identity(16))
    }

    /// Largest element that couples different control configurations.
    pub fn control_offdiagonal(&self) -> f64 {
        let m = self.matrix();
        let mut worst: f64 = 0.0;
        for row in 0..16 {
            for col in 0..16 {
                if row >> 1 != col >> 1 {
                    worst = worst.max(m.get(&[row, col]).norm());
                }
            }
        }
        worst
    }

    /// The 2x2 target block for controls fixed to `n`.
    pub fn target_block(&self, n: Neighbourhood) -> [[C64; 2]; 2] {
        let base = 2 * n.index();
        let m = self.matrix();
        [
            [m.get(&[base, base]), m.get(&[base, base + 1])],
            [m.get(&[base + 1, base]), m.get(&[base + 1, base + 1])],
        ]
    }
}

/// `G = sum_n P_n ⊗ exp(-i sigma_x alpha(n))`.
pub fn build_gate(angles: &AngleTable) -> GateTensor {
    let mut m = DenseTensor::zeros(&[16, 16]);
    for n in Neighbourhood::ALL {
        let a = angles.angle(n);
        let (s, c) = a.sin_cos();
        let base = 2 * n.index();
        m.set(&[base, base], C64::new(c, 0.0));
        m.set(&[base, base + 1], C64::new(0.0, -s));
        m.set(&[base + 1, base], C64::new(0.0, -s));
        m.set(&[base + 1, base + 1], C64::new(c, 0.0));
    }
    GateTensor::from_matrix(m)
}

/// `h_{1,2} + h_{2,3}` on three sites with `h_{i,j} = sigma^x_i n_j + n_i sigma^x_j`.
/// Basis index `4 s1 + 2 s2 + s3`.
pub fn unitary_limit_generator() -> DenseTensor {
    let mut h = DenseTensor::zeros(&[8, 8]);
    let bit = |x: usize, site: usize| (x >> (2 - site)) & 1;
    for x in 0..8 {
        for (i, j) in [(0, 1), (1, 2)] {
            // sigma^x on i, controlled by n on j
            if bit(x, j) == 1 {
                let y = x ^ (1 << (2 - i));
                h.set(&[y, x], h.get(&[y, x]) + C64::new(1.0, 0.0));
            }
            if bit(x, i) == 1 {
                let y = x ^ (1 << (2 - j));
                h.set(&[y, x], h.get(&[y, x]) + C64::new(1.0, 0.0));
            }
        }
    }
    h
}

/// `exp(-i dt h)` on the control row, identity on the target.
pub fn build_unitary_limit_gate(dt: f64) -> GateTensor {
    let u = unitary_limit_propagator(dt);
    let mut m = DenseTensor::zeros(&[16, 16]);
    for a in 0..8 {
        for b in 0..8 {
            for t in 0..2 {
                m.set(&[2 * a + t, 2 * b + t], u.get(&[a, b]));
            }
        }
    }
    GateTensor::from_matrix(m)
}

/// `exp(-i dt h)` from the eigendecomposition of the real symmetric generator.
pub fn unitary_limit_propagator(dt: f64) -> DenseTensor {
    let h = unitary_limit_generator();
    let hr = Mat::<f64>::from_fn(8, 8, |i, j| h.get(&[i, j]).re);
    let eig = hr
        .self_adjoint_eigen(faer::Side::Lower)
        .expect("symmetric 8x8 eigendecomposition");
    let v = eig.U();
    let w = eig.S();
    DenseTensor::from_fn(&[8, 8], |ix| {
        (0..8)
            .map(|k| {
                let phase = C64::from_polar(1.0, -dt * w[k]);
                phase * v[(ix[0], k)] * v[(ix[1], k)]
            })
            .sum()
    })
}
