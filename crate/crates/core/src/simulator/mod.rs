//! Ideal, exact-noisy and trajectory-sampled circuit simulation.
//!
//! Only the qubits a circuit touches are simulated, so a single-qubit test
//! on qubit 17 of a 20-qubit device costs a one-qubit simulation.

mod density;
mod sampled;
mod statevector;

pub use density::DensityMatrix;
pub use sampled::ClassicalChannel;
pub use statevector::{Pauli, Statevector};

use crate::circuit::{Circuit, GateKind};
use crate::distribution::{Counts, OutcomeDistribution};
use crate::error::{Error, Result};
use crate::noise::{apply_readout_to_distribution, CompositeNoiseModel, ReadoutModel};
use crate::Real;

/// Width limit for statevector routes.
pub const MAX_STATEVECTOR_QUBITS: usize = 24;
/// Default width limit for exact noisy simulation.
pub const DEFAULT_EXACT_MAX_QUBITS: usize = 8;

#[derive(Debug, Clone, Copy)]
enum Op {
    H(usize),
    X(usize),
    Cnot(usize, usize),
}

/// A depolarizing site: after op `op`, qubit `qubit` is depolarized with
/// probability `p`.
#[derive(Debug, Clone, Copy)]
struct Site<T> {
    op: usize,
    qubit: usize,
    p: T,
}

#[derive(Debug, Clone, Copy)]
struct MeasureOp<T> {
    qubit: usize,
    clbit: usize,
    readout: ReadoutModel<T>,
}

/// A circuit lowered onto its active qubits with noise attached.
#[derive(Debug, Clone)]
struct Program<T> {
    width: usize,
    num_clbits: usize,
    ops: Vec<Op>,
    sites: Vec<Site<T>>,
    measures: Vec<MeasureOp<T>>,
}

impl<T: Real> Program<T> {
    fn compile(circuit: &Circuit, model: Option<&CompositeNoiseModel<T>>, limit: usize) -> Result<Self> {
        circuit.check()?;
        if let Some(m) = model {
            m.check_coverage(circuit)?;
        }
        let active = circuit.active_qubits();
        if active.len() > limit {
            return Err(Error::TooWide {
                width: active.len(),
                limit,
            });
        }
        let local = |q: usize| active.binary_search(&q).expect("active qubit");
        let mut ops = Vec::new();
        let mut sites = Vec::new();
        let mut measures = Vec::new();
        let site = |op: usize, qubit: usize, p: T, sites: &mut Vec<Site<T>>| {
            if p > T::zero() {
                sites.push(Site { op, qubit, p });
            }
        };
        for g in &circuit.gates {
            let idx = ops.len();
            match *g {
                GateKind::H { target } => {
                    ops.push(Op::H(local(target)));
                    let p = model.map_or(T::zero(), |m| m.h_for(target));
                    site(idx, local(target), p, &mut sites);
                }
                GateKind::X { target } => {
                    ops.push(Op::X(local(target)));
                    let p = model.map_or(Ok(T::zero()), |m| m.x_for(target))?;
                    site(idx, local(target), p, &mut sites);
                }
                GateKind::Cnot { control, target } => {
                    ops.push(Op::Cnot(local(control), local(target)));
                    let p = model.map_or(Ok(T::zero()), |m| m.cnot_for(control, target))?;
                    site(idx, local(control), p, &mut sites);
                    site(idx, local(target), p, &mut sites);
                }
                GateKind::Measure { target, clbit } => {
                    let readout = match model {
                        Some(m) => m.readout_for(target)?,
                        None => ReadoutModel::ideal(),
                    };
                    measures.push(MeasureOp {
                        qubit: local(target),
                        clbit,
                        readout,
                    });
                }
                GateKind::Identity { .. } => {}
            }
        }
        Ok(Self {
            width: active.len(),
            num_clbits: circuit.num_clbits,
            ops,
            sites,
            measures,
        })
    }

    fn is_noiseless(&self) -> bool {
        self.sites.is_empty() && self.measures.iter().all(|m| m.readout.is_ideal())
    }

    /// Classical register value produced by basis state `basis`.
    fn clbit_mask(&self, basis: usize) -> u64 {
        self.measures
            .iter()
            .filter(|m| basis >> m.qubit & 1 == 1)
            .fold(0u64, |acc, m| acc | 1 << m.clbit)
    }

    fn readout_per_clbit(&self) -> Vec<ReadoutModel<T>> {
        let mut r = vec![ReadoutModel::ideal(); self.num_clbits];
        for m in &self.measures {
            r[m.clbit] = m.readout;
        }
        r
    }

    /// Evolves `|0..0>` through the ops, inserting the Paulis of `pattern`
    /// (pairs of site index and Pauli) right after their op.
    fn evolve(&self, pattern: &[(usize, Pauli)]) -> Statevector<T> {
        let mut state = Statevector::zero_state(self.width);
        let mut next = pattern.iter().peekable();
        for (i, op) in self.ops.iter().enumerate() {
            match *op {
                Op::H(q) => state.apply_h(q),
                Op::X(q) => state.apply_x(q),
                Op::Cnot(c, t) => state.apply_cnot(c, t),
            }
            while let Some(&&(s, p)) = next.peek() {
                if self.sites[s].op != i {
                    break;
                }
                state.apply_pauli(self.sites[s].qubit, p);
                next.next();
            }
        }
        state
    }

    fn marginal(&self, probs: &[T]) -> Result<OutcomeDistribution<T>> {
        OutcomeDistribution::from_masks(
            self.num_clbits,
            probs.iter().enumerate().map(|(i, &p)| (self.clbit_mask(i), p)),
        )
    }
}

/// Exact measurement distribution of the noiseless circuit.
pub fn simulate_ideal<T: Real>(circuit: &Circuit) -> Result<OutcomeDistribution<T>> {
    let prog = Program::<T>::compile(circuit, None, MAX_STATEVECTOR_QUBITS)?;
    prog.marginal(&prog.evolve(&[]).probabilities())
}

/// Channel-averaged output distribution under `model`, with the readout
/// channel applied to the classical outcomes. Limited to
/// [`DEFAULT_EXACT_MAX_QUBITS`] active qubits.
pub fn simulate_noisy_exact<T: Real>(
    circuit: &Circuit,
    model: &CompositeNoiseModel<T>,
) -> Result<OutcomeDistribution<T>> {
    simulate_noisy_exact_with_limit(circuit, model, DEFAULT_EXACT_MAX_QUBITS)
}

pub fn simulate_noisy_exact_with_limit<T: Real>(
    circuit: &Circuit,
    model: &CompositeNoiseModel<T>,
    limit: usize,
) -> Result<OutcomeDistribution<T>> {
    let prog = Program::compile(circuit, Some(model), limit)?;
    if prog.is_noiseless() {
        return prog.marginal(&prog.evolve(&[]).probabilities());
    }
    let mut rho = DensityMatrix::zero_state(prog.width);
    let mut sites = prog.sites.iter().peekable();
    for (i, op) in prog.ops.iter().enumerate() {
        match *op {
            Op::H(q) => rho.apply_h(q),
            Op::X(q) => rho.apply_x(q),
            Op::Cnot(c, t) => rho.apply_cnot(c, t),
        }
        while let Some(s) = sites.next_if(|s| s.op == i) {
            rho.depolarize(s.qubit, s.p);
        }
    }
    let ideal_readout = prog.marginal(&rho.probabilities())?;
    apply_readout_to_distribution(&ideal_readout, &prog.readout_per_clbit())
}

/// Monte Carlo trajectories: per noise site a uniformly chosen Pauli with
/// the site's probability, then per measured bit a readout flip.
/// Deterministic for a fixed seed regardless of thread count.
pub fn simulate_noisy_sampled<T: Real>(
    circuit: &Circuit,
    model: &CompositeNoiseModel<T>,
    shots: u64,
    seed: u64,
) -> Result<Counts> {
    simulate_noisy_sampled_with(circuit, model, shots, seed, None)
}

/// [`simulate_noisy_sampled`] with an extra classical channel applied after
/// readout.
pub fn simulate_noisy_sampled_with<T: Real>(
    circuit: &Circuit,
    model: &CompositeNoiseModel<T>,
    shots: u64,
    seed: u64,
    post: Option<&dyn ClassicalChannel>,
) -> Result<Counts> {
    let prog = Program::compile(circuit, Some(model), MAX_STATEVECTOR_QUBITS)?;
    Ok(sampled::run_trajectories(&prog, shots, seed, post))
}

/// Multinomial draw of `shots` outcomes from `dist`.
pub fn sample_from_distribution<T: Real>(dist: &OutcomeDistribution<T>, shots: u64, seed: u64) -> Counts {
    sampled::sample_distribution(dist, shots, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::{Coupling, DeviceTopology};
    use crate::evaluation::tvd;
    use crate::noise::{bell_frequencies, DepolarizingParam, NoiseFlags};

    fn bell() -> Circuit {
        let mut c = Circuit::new("bell", 2, 2);
        c.h(0).cnot(0, 1).measure(0, 0).measure(1, 1);
        c
    }

    fn ghz(n: usize) -> Circuit {
        let mut c = Circuit::new(format!("ghz:{n}"), n, n);
        c.h(0);
        for i in 1..n {
            c.cnot(i - 1, i);
        }
        for i in 0..n {
            c.measure(i, i);
        }
        c
    }

    fn cnot_only(p: f64) -> CompositeNoiseModel<f64> {
        let mut m = CompositeNoiseModel::noiseless();
        m.flags = NoiseFlags {
            readout_on: false,
            cnot_dp_on: true,
            single_qubit_dp_on: false,
        };
        m.cnot.insert(Coupling::new(0, 1), DepolarizingParam::new(p).unwrap());
        m
    }

    #[test]
    fn ideal_examples() {
        let d = simulate_ideal::<f64>(&ghz(2)).unwrap();
        assert_eq!(d.support(), vec!["00", "11"]);
        assert!((d.probability("00") - 0.5).abs() < 1e-15);

        let mut x = Circuit::new("x", 1, 1);
        x.x(0).measure(0, 0);
        assert_eq!(simulate_ideal::<f64>(&x).unwrap().probability("1"), 1.0);

        let mut hh = Circuit::new("hh", 1, 1);
        hh.h(0).h(0).measure(0, 0);
        let d = simulate_ideal::<f64>(&hh).unwrap();
        assert_eq!(d.support(), vec!["0"]);
        assert_eq!(d.probability("0"), 1.0);
    }

    #[test]
    fn ideal_uses_only_active_qubits() {
        let mut c = Circuit::new("far", 20, 1);
        c.x(17).measure(17, 0);
        assert_eq!(simulate_ideal::<f64>(&c).unwrap().probability("1"), 1.0);
    }

    #[test]
    fn too_wide() {
        let c = ghz(10);
        let m = CompositeNoiseModel::<f64>::noiseless();
        assert!(matches!(
            simulate_noisy_exact(&c, &m),
            Err(Error::TooWide { width: 10, limit: 8 })
        ));
        let big = ghz(25);
        assert!(matches!(simulate_ideal::<f64>(&big), Err(Error::TooWide { .. })));
    }

    #[test]
    fn exact_bell_examples() {
        let d = simulate_noisy_exact(&bell(), &cnot_only(0.0)).unwrap();
        assert_eq!(d, simulate_ideal(&bell()).unwrap());

        let d = simulate_noisy_exact(&bell(), &cnot_only(0.75)).unwrap();
        for k in ["00", "01", "10", "11"] {
            assert!((d.probability(k) - 0.25).abs() < 1e-14);
        }

        // 1/2 - (2/3)(0.1) + (4/9)(0.01) = 0.437777..., (2/3)(0.1) - (4/9)(0.01) = 0.062222...
        let d = simulate_noisy_exact(&bell(), &cnot_only(0.1)).unwrap();
        assert!((d.probability("00") - 0.43778).abs() < 5e-6);
        assert!((d.probability("11") - 0.43778).abs() < 5e-6);
        assert!((d.probability("01") - 0.06222).abs() < 5e-6);
        assert!((d.probability("10") - 0.06222).abs() < 5e-6);
    }

    #[test]
    fn exact_matches_bell_closed_form() {
        for i in 0..=20 {
            let p = i as f64 / 20.0;
            let d = simulate_noisy_exact(&bell(), &cnot_only(p)).unwrap();
            let f = bell_frequencies(p).unwrap();
            for k in ["00", "01", "10", "11"] {
                assert!((d.probability(k) - f.probability(k)).abs() < 1e-12, "p={p} k={k}");
            }
        }
    }

    #[test]
    fn noiseless_sampling_matches_support() {
        let topo = DeviceTopology::line(5);
        let m = CompositeNoiseModel::<f64>::noiseless();
        let counts = simulate_noisy_sampled(&ghz(5), &m, 8192, 3).unwrap();
        let keys: Vec<_> = counts.iter().map(|(k, _)| k.to_string()).collect();
        assert_eq!(keys, vec!["00000", "11111"]);
        assert_eq!(counts.shots(), 8192);
        let _ = topo;
    }

    #[test]
    fn sampling_is_deterministic() {
        let topo = DeviceTopology::line(4);
        let m = CompositeNoiseModel::uniform(&topo, ReadoutModel::aro(0.02, 0.07).unwrap(), 0.003, 0.05).unwrap();
        let a = simulate_noisy_sampled(&ghz(4), &m, 5000, 11).unwrap();
        let b = simulate_noisy_sampled(&ghz(4), &m, 5000, 11).unwrap();
        let c = simulate_noisy_sampled(&ghz(4), &m, 5000, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn sampled_converges_to_exact() {
        let topo = DeviceTopology::line(2);
        let m = CompositeNoiseModel::uniform(&topo, ReadoutModel::aro(0.03, 0.08).unwrap(), 0.0, 0.1).unwrap();
        let exact = simulate_noisy_exact(&bell(), &m).unwrap();
        let counts = simulate_noisy_sampled(&bell(), &m, 1_000_000, 5).unwrap();
        let d = tvd(&exact, &counts).unwrap();
        assert!(d <= 0.005, "tvd {d}");
    }

    #[test]
    fn sample_from_distribution_examples() {
        let d = OutcomeDistribution::<f64>::point("0").unwrap();
        let c = sample_from_distribution(&d, 100, 1);
        assert_eq!(c.get("0"), 100);

        let half = OutcomeDistribution::<f64>::from_dense(1, &[0.5, 0.5]).unwrap();
        let c = sample_from_distribution(&half, 8192, 9);
        // binomial sigma = sqrt(8192/4) = 45.25
        assert!((c.get("0") as f64 - 4096.0).abs() <= 4.0 * 45.26);
        assert_eq!(c.shots(), 8192);

        let c = sample_from_distribution(&half, 0, 9);
        assert!(c.is_empty());
        assert_eq!(c.shots(), 0);
    }
}
