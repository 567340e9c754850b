use num_complex::Complex;

use super::statevector::for_pairs;
use crate::Real;

/// Density matrix of `n` qubits stored as a vector of length `4^n`.
///
/// Element `rho[r][c]` lives at index `(r << n) | c`, so the row index
/// occupies bits `n..2n` and the column index bits `0..n`. A unitary `U`
/// on qubit `q` acts as `U` on bit `q + n` and `conj(U)` on bit `q`.
#[derive(Debug, Clone)]
pub struct DensityMatrix<T> {
    n: usize,
    rho: Vec<Complex<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn zero_state(n: usize) -> Self {
        let mut rho = vec![Complex::new(T::zero(), T::zero()); 1usize << (2 * n)];
        rho[0] = Complex::new(T::one(), T::zero());
        Self { n, rho }
    }

    pub fn apply_h(&mut self, q: usize) {
        let s = T::FRAC_1_SQRT_2();
        for bit in [q + self.n, q] {
            for_pairs(self.rho.len(), bit, |i, j| {
                let (a, b) = (self.rho[i], self.rho[j]);
                self.rho[i] = (a + b).scale(s);
                self.rho[j] = (a - b).scale(s);
            });
        }
    }

    pub fn apply_x(&mut self, q: usize) {
        for bit in [q + self.n, q] {
            for_pairs(self.rho.len(), bit, |i, j| self.rho.swap(i, j));
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        for offset in [self.n, 0] {
            let (cb, tb) = (1usize << (control + offset), 1usize << (target + offset));
            for i in 0..self.rho.len() {
                if i & cb != 0 && i & tb == 0 {
                    self.rho.swap(i, i | tb);
                }
            }
        }
    }

    /// `rho -> (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z)` on qubit `q`.
    pub fn depolarize(&mut self, q: usize, p: T) {
        if p == T::zero() {
            return;
        }
        let flip = T::lit(2.0) * p / T::lit(3.0);
        let keep = T::one() - flip;
        let coherence = T::one() - T::lit(4.0) * p / T::lit(3.0);
        let row = 1usize << (q + self.n);
        let col = 1usize << q;
        for i in 0..self.rho.len() {
            if i & (row | col) != 0 {
                continue;
            }
            let (i00, i01, i10, i11) = (i, i | col, i | row, i | row | col);
            let (a, d) = (self.rho[i00], self.rho[i11]);
            self.rho[i00] = a.scale(keep) + d.scale(flip);
            self.rho[i11] = a.scale(flip) + d.scale(keep);
            self.rho[i01] = self.rho[i01].scale(coherence);
            self.rho[i10] = self.rho[i10].scale(coherence);
        }
    }

    /// Diagonal of the density matrix.
    pub fn probabilities(&self) -> Vec<T> {
        let dim = 1usize << self.n;
        (0..dim).map(|i| self.rho[(i << self.n) | i].re).collect()
    }

    pub fn trace(&self) -> T {
        self.probabilities().into_iter().sum()
    }
}
