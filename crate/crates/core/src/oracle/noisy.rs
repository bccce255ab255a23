use rand::RngCore;

use super::{validate_dist, Capabilities, Oracle, OracleError, Seq};
use crate::alphabet::{Alphabet, Symbol};
use crate::wa::draw_index;

/// Wraps an oracle and perturbs every answer by a multiplicative factor
/// `1 + level·ξ`, `ξ ∈ [-1, 1)`. The perturbation is a pure function of the
/// seed and the query, so repeated queries get identical answers.
pub struct NoisyOracle<O> {
    inner: O,
    level: f64,
    seed: u64,
}

impl<O: Oracle> NoisyOracle<O> {
    pub fn new(inner: O, level: f64, seed: u64) -> Self {
        assert!((0.0..1.0).contains(&level), "noise level must lie in [0, 1)");
        Self { inner, level, seed }
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    fn factor(&self, tag: u64, seq: &[Symbol]) -> f64 {
        let mut h = splitmix(self.seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        for &s in seq {
            h = splitmix(h ^ (s as u64 + 1));
        }
        h = splitmix(h ^ seq.len() as u64);
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        1.0 + self.level * (2.0 * unit - 1.0)
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl<O: Oracle> Oracle for NoisyOracle<O> {
    fn alphabet(&self) -> &Alphabet {
        self.inner.alphabet()
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn identity(&self) -> String {
        format!("noisy({},{},{})", self.inner.identity(), self.level, self.seed)
    }

    fn logprob_batch(&self, seqs: &[Seq]) -> Vec<Result<f64, OracleError>> {
        self.inner
            .logprob_batch(seqs)
            .into_iter()
            .zip(seqs)
            .map(|(lp, seq)| lp.map(|lp| lp + self.factor(0, seq).ln()))
            .collect()
    }

    fn next_dist_batch(&self, prefixes: &[Seq]) -> Vec<Result<Vec<f64>, OracleError>> {
        let k = self.alphabet().len();
        self.inner
            .next_dist_batch(prefixes)
            .into_iter()
            .zip(prefixes)
            .map(|(dist, prefix)| {
                let mut dist = dist?;
                for (i, p) in dist.iter_mut().enumerate() {
                    *p *= self.factor(1 + i as u64, prefix);
                }
                let total: f64 = dist.iter().sum();
                if total <= 0.0 {
                    return Err(OracleError::CorruptAnswer("empty distribution".into()));
                }
                validate_dist(dist.into_iter().map(|p| p / total).collect(), k)
            })
            .collect()
    }

    fn sample_sequence(&self, rng: &mut dyn RngCore, max_len: usize) -> Result<Seq, OracleError> {
        if !self.capabilities().supports_next_dist {
            return Err(OracleError::Capability("next_dist"));
        }
        let end = self.alphabet().end();
        let mut seq = Vec::new();
        while seq.len() < max_len {
            let dist = super::next_dist(self, &seq)?;
            let next = draw_index(rng, &dist);
            if next == end {
                break;
            }
            seq.push(next);
        }
        Ok(seq)
    }
}
