use num_complex::Complex;

use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];
}

/// Pure state of `num_qubits` qubits. Qubit `q` is bit `q` of the basis
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector<T> {
    num_qubits: usize,
    amps: Vec<Complex<T>>,
}

impl<T: Real> Statevector<T> {
    /// `|0...0>`.
    pub fn zero_state(num_qubits: usize) -> Self {
        let mut amps = vec![Complex::new(T::zero(), T::zero()); 1usize << num_qubits];
        amps[0] = Complex::new(T::one(), T::zero());
        Self { num_qubits, amps }
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> T {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<T> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn apply_h(&mut self, q: usize) {
        let s = T::FRAC_1_SQRT_2();
        for_pairs(self.amps.len(), q, |i, j| {
            let (a, b) = (self.amps[i], self.amps[j]);
            self.amps[i] = (a + b).scale(s);
            self.amps[j] = (a - b).scale(s);
        });
    }

    pub fn apply_x(&mut self, q: usize) {
        for_pairs(self.amps.len(), q, |i, j| self.amps.swap(i, j));
    }

    pub fn apply_y(&mut self, q: usize) {
        let i_unit = Complex::new(T::zero(), T::one());
        for_pairs(self.amps.len(), q, |i, j| {
            let (a, b) = (self.amps[i], self.amps[j]);
            // Y = [[0, -i], [i, 0]]
            self.amps[i] = -i_unit * b;
            self.amps[j] = i_unit * a;
        });
    }

    pub fn apply_z(&mut self, q: usize) {
        let bit = 1usize << q;
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & bit != 0 {
                *a = -*a;
            }
        }
    }

    pub fn apply_cnot(&mut self, control: usize, target: usize) {
        let (cb, tb) = (1usize << control, 1usize << target);
        for i in 0..self.amps.len() {
            if i & cb != 0 && i & tb == 0 {
                self.amps.swap(i, i | tb);
            }
        }
    }

    pub fn apply_pauli(&mut self, q: usize, p: Pauli) {
        match p {
            Pauli::X => self.apply_x(q),
            Pauli::Y => self.apply_y(q),
            Pauli::Z => self.apply_z(q),
        }
    }
}

/// Calls `f(i, j)` for every index pair differing only in bit `q`, with bit
/// `q` clear in `i`.
pub(crate) fn for_pairs(len: usize, q: usize, mut f: impl FnMut(usize, usize)) {
    let bit = 1usize << q;
    for i in 0..len {
        if i & bit == 0 {
            f(i, i | bit);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hh_is_identity() {
        let mut s = Statevector::<f64>::zero_state(1);
        s.apply_h(0);
        assert!((s.probabilities()[0] - 0.5).abs() < 1e-15);
        s.apply_h(0);
        assert!((s.probabilities()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn y_is_i_x_z() {
        // Y|0> = i|1>
        let mut s = Statevector::<f64>::zero_state(1);
        s.apply_y(0);
        assert_eq!(s.amplitudes()[1], Complex::new(0.0, 1.0));
    }

    #[test]
    fn cnot_entangles() {
        let mut s = Statevector::<f32>::zero_state(2);
        s.apply_h(0);
        s.apply_cnot(0, 1);
        let p = s.probabilities();
        assert!((p[0] - 0.5).abs() < 1e-6 && (p[3] - 0.5).abs() < 1e-6);
    }

    proptest! {
        // every gate preserves the norm
        #[test]
        fn gates_are_unitary(ops in prop::collection::vec((0u8..6, 0usize..4, 0usize..4), 0..40)) {
            let mut s = Statevector::<f64>::zero_state(4);
            for (kind, a, b) in ops {
                match kind {
                    0 => s.apply_h(a),
                    1 => s.apply_x(a),
                    2 => s.apply_y(a),
                    3 => s.apply_z(a),
                    _ if a != b => s.apply_cnot(a, b),
                    _ => {}
                }
            }
            prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }
}
