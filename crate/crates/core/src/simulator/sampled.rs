use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;

use super::{Pauli, Program};
use crate::distribution::{parse_outcome, Counts, OutcomeDistribution};
use crate::rng::{stream_rng, SimRng};
use crate::Real;

const CHUNK: u64 = 1024;

/// Extra classical noise applied to each shot after readout.
pub trait ClassicalChannel: Sync {
    /// `pre`: register value before readout noise, `post`: after.
    /// `measured`: mask of classical bits written by the circuit.
    fn apply(&self, pre: u64, post: u64, measured: u64, rng: &mut SimRng) -> u64;
}

/// Cumulative table over register values.
struct Table {
    cum: Vec<f64>,
    masks: Vec<u64>,
}

impl Table {
    fn new(entries: impl IntoIterator<Item = (u64, f64)>) -> Self {
        let mut cum = Vec::new();
        let mut masks = Vec::new();
        let mut acc = 0.0;
        for (m, p) in entries {
            if p > 0.0 {
                acc += p;
                cum.push(acc);
                masks.push(m);
            }
        }
        Self { cum, masks }
    }

    fn draw(&self, rng: &mut SimRng) -> u64 {
        let total = *self.cum.last().expect("nonempty table");
        let u = rng.gen::<f64>() * total;
        let i = self.cum.partition_point(|&c| c <= u).min(self.cum.len() - 1);
        self.masks[i]
    }
}

fn chunked(shots: u64, seed: u64, body: impl Fn(u64, &mut SimRng, &mut HashMap<u64, u64>) + Sync) -> Vec<HashMap<u64, u64>> {
    let chunks = shots.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c);
            let mut tally = HashMap::new();
            let n = CHUNK.min(shots - c * CHUNK);
            body(n, &mut rng, &mut tally);
            tally
        })
        .collect()
}

fn merge(num_bits: usize, parts: Vec<HashMap<u64, u64>>) -> Counts {
    Counts::from_masks(num_bits, parts.into_iter().flatten())
}

pub(super) fn run_trajectories<T: Real>(
    prog: &Program<T>,
    shots: u64,
    seed: u64,
    post: Option<&dyn ClassicalChannel>,
) -> Counts {
    let site_p: Vec<f64> = prog.sites.iter().map(|s| s.p.as_f64()).collect();
    let flips: Vec<(usize, f64, f64)> = prog
        .measures
        .iter()
        .map(|m| (m.clbit, m.readout.p0().as_f64(), m.readout.p1().as_f64()))
        .collect();
    let measured = prog.measures.iter().fold(0u64, |a, m| a | 1 << m.clbit);
    let table_for = |pattern: &[(usize, Pauli)]| {
        let probs = prog.evolve(pattern).probabilities();
        let mut by_mask: Vec<(u64, f64)> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| (prog.clbit_mask(i), p.as_f64()))
            .collect();
        by_mask.sort_by_key(|e| e.0);
        by_mask.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        Table::new(by_mask)
    };
    let parts = chunked(shots, seed, |n, rng, tally| {
        let mut cache: HashMap<Vec<(usize, Pauli)>, Table> = HashMap::new();
        let mut pattern = Vec::new();
        for _ in 0..n {
            pattern.clear();
            for (i, &p) in site_p.iter().enumerate() {
                if rng.gen::<f64>() < p {
                    pattern.push((i, Pauli::ALL[rng.gen_range(0..3)]));
                }
            }
            if !cache.contains_key(&pattern) {
                let t = table_for(&pattern);
                cache.insert(pattern.clone(), t);
            }
            let pre = cache[&pattern].draw(rng);
            let mut out = pre;
            for &(bit, p0, p1) in &flips {
                let flip = if pre >> bit & 1 == 1 { p1 } else { p0 };
                if flip > 0.0 && rng.gen::<f64>() < flip {
                    out ^= 1 << bit;
                }
            }
            if let Some(ch) = post {
                out = ch.apply(pre, out, measured, rng);
            }
            *tally.entry(out).or_insert(0) += 1;
        }
    });
    merge(prog.num_clbits, parts)
}

pub(super) fn sample_distribution<T: Real>(dist: &OutcomeDistribution<T>, shots: u64, seed: u64) -> Counts {
    let table = Table::new(
        dist.iter()
            .map(|(k, p)| (parse_outcome(k).expect("validated outcome"), p.as_f64())),
    );
    let parts = chunked(shots, seed, |n, rng, tally| {
        for _ in 0..n {
            *tally.entry(table.draw(rng)).or_insert(0) += 1;
        }
    });
    merge(dist.num_bits(), parts)
}
