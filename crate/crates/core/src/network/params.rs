use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Activation;
use crate::error::{Error, Result};

/// Layer widths of the network: `L` basis functions, `J` encoder units,
/// `K` bottleneck scores and `R` decoder units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub basis: usize,
    pub hidden: usize,
    pub components: usize,
    pub decoder: usize,
}

impl Dims {
    pub fn new(basis: usize, hidden: usize, components: usize, decoder: usize) -> Result<Self> {
        let dims = Self {
            basis,
            hidden,
            components,
            decoder,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.basis == 0 || self.hidden == 0 || self.components == 0 || self.decoder == 0 {
            return Err(Error::InvalidDimension(format!(
                "all network dimensions must be >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Trainable scalars: `J(L + K + 1) + R(KL + L + 1)`.
    pub fn parameter_count(&self) -> usize {
        let Dims {
            basis: l,
            hidden: j,
            components: k,
            decoder: r,
        } = *self;
        j * (l + k + 1) + r * (k * l + l + 1)
    }
}

/// All trainable quantities. The same shape doubles as a gradient container.
///
/// Layouts are row-major:
/// `d[j*L + h]`, `w[j*K + k]`, `a[r*L + l]`, `v[(k*R + r)*L + l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub dims: Dims,
    pub activation: Activation,
    /// Encoder intercepts (J).
    pub b: Vec<f64>,
    /// Encoder weights folded with the Gram matrix (J x L).
    pub d: Vec<f64>,
    /// Bottleneck weights (J x K).
    pub w: Vec<f64>,
    /// Decoder intercept-function coefficients (R x L).
    pub a: Vec<f64>,
    /// Decoder weight-function coefficients (K x R x L).
    pub v: Vec<f64>,
    /// Output weights (R).
    pub u: Vec<f64>,
}

pub const FIELD_NAMES: [&str; 6] = ["b", "d", "w", "a", "v", "u"];

impl NetworkParams {
    pub fn zeros(dims: Dims, activation: Activation) -> Self {
        let Dims {
            basis: l,
            hidden: j,
            components: k,
            decoder: r,
        } = dims;
        Self {
            dims,
            activation,
            b: vec![0.0; j],
            d: vec![0.0; j * l],
            w: vec![0.0; j * k],
            a: vec![0.0; r * l],
            v: vec![0.0; k * r * l],
            u: vec![0.0; r],
        }
    }

    /// Fan-based uniform initialisation with zero intercepts.
    ///
    /// `d ~ U(+-sqrt(6/(L+J)))`, `w ~ U(+-sqrt(6/(J+K)))`,
    /// `v ~ U(+-sqrt(6/(K+L)))` (each decoder unit maps K scores to an
    /// L-vector of coefficients), `u ~ U(+-sqrt(6/(R+1)))`.
    pub fn init(dims: Dims, activation: Activation, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut p = Self::zeros(dims, activation);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Dims {
            basis: l,
            hidden: j,
            components: k,
            decoder: r,
        } = dims;
        fill_uniform(&mut rng, &mut p.d, glorot(l, j));
        fill_uniform(&mut rng, &mut p.w, glorot(j, k));
        fill_uniform(&mut rng, &mut p.v, glorot(k, l));
        fill_uniform(&mut rng, &mut p.u, glorot(r, 1));
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.dims, self.activation)
    }

    pub fn fields(&self) -> [&[f64]; 6] {
        [&self.b, &self.d, &self.w, &self.a, &self.v, &self.u]
    }

    pub fn fields_mut(&mut self) -> [&mut [f64]; 6] {
        [
            &mut self.b,
            &mut self.d,
            &mut self.w,
            &mut self.a,
            &mut self.v,
            &mut self.u,
        ]
    }

    /// Shapes matching [`FIELD_NAMES`].
    pub fn shapes(&self) -> [Vec<usize>; 6] {
        let Dims {
            basis: l,
            hidden: j,
            components: k,
            decoder: r,
        } = self.dims;
        [
            vec![j],
            vec![j, l],
            vec![j, k],
            vec![r, l],
            vec![k, r, l],
            vec![r],
        ]
    }

    pub fn len(&self) -> usize {
        self.fields().iter().map(|f| f.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_finite(&self) -> bool {
        self.fields()
            .iter()
            .all(|f| f.iter().all(|x| x.is_finite()))
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.fields().concat()
    }

    pub fn copy_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::shape(self.len(), flat.len()));
        }
        let mut off = 0;
        for f in self.fields_mut() {
            let n = f.len();
            f.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        for f in self.fields_mut() {
            f.fill(value);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for f in self.fields_mut() {
            f.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.fields()
            .iter()
            .flat_map(|f| f.iter())
            .fold(0.0, |m, x| m.max(x.abs()))
    }
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn fill_uniform(rng: &mut ChaCha8Rng, xs: &mut [f64], limit: f64) {
    for x in xs {
        *x = rng.random_range(-limit..limit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_init_is_reproducible() {
        let dims = Dims::new(10, 20, 2, 20).unwrap();
        let p = NetworkParams::init(dims, Activation::Tanh, 42).unwrap();
        let q = NetworkParams::init(dims, Activation::Tanh, 42).unwrap();
        let bits = |p: &NetworkParams| p.to_flat().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        let other = NetworkParams::init(dims, Activation::Tanh, 43).unwrap();
        assert_ne!(p, other);
    }

    #[test]
    fn intercepts_start_at_zero_and_weights_are_bounded() {
        let dims = Dims::new(10, 20, 2, 20).unwrap();
        let p = NetworkParams::init(dims, Activation::Tanh, 1).unwrap();
        assert!(p.b.iter().all(|&x| x == 0.0));
        assert!(p.a.iter().all(|&x| x == 0.0));
        let bound = (6.0f64 / 30.0).sqrt();
        assert!(p.d.iter().all(|x| x.abs() <= bound));
        assert!(p.d.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(Dims::new(10, 0, 2, 20).is_err());
        let bad = Dims {
            basis: 4,
            hidden: 3,
            components: 0,
            decoder: 2,
        };
        assert!(NetworkParams::init(bad, Activation::Tanh, 0).is_err());
    }

    #[test]
    fn parameter_count_matches_layout() {
        let dims = Dims::new(10, 20, 2, 20).unwrap();
        let p = NetworkParams::zeros(dims, Activation::Tanh);
        assert_eq!(p.len(), dims.parameter_count());
        // with J = R the count is J(KL + K + 2L + 2)
        assert_eq!(p.len(), 20 * (2 * 10 + 2 + 2 * 10 + 2));
    }

    #[test]
    fn flat_round_trip() {
        let dims = Dims::new(4, 3, 2, 3).unwrap();
        let p = NetworkParams::init(dims, Activation::Sigmoid, 5).unwrap();
        let mut q = p.zeros_like();
        q.copy_from_flat(&p.to_flat()).unwrap();
        assert_eq!(p, q);
        assert!(q.copy_from_flat(&[1.0]).is_err());
    }
}
