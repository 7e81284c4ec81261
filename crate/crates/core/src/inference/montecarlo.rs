use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{holds, numeric_domain, var_id, Estimate, InferenceError, Query, QueryResult, Result, Target};
use crate::model::Scm;
use crate::value::to_f64;
use crate::worlds::Plan;

/// Samples per independently seeded chunk.
pub(crate) const CHUNK: u64 = 1 << 14;

/// Generator for chunk `chunk` of a run seeded with `seed`.
pub(crate) fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// `(chunk index, chunk length)` covering `n` samples.
pub(crate) fn chunks(n: u64) -> Vec<(u64, u64)> {
    (0..n.div_ceil(CHUNK)).map(|c| (c, CHUNK.min(n - c * CHUNK))).collect()
}

struct ExoSampler {
    id: usize,
    conditioners: Vec<usize>,
    strides: Vec<usize>,
    /// Cumulative probabilities per conditioner row.
    cdf: Vec<Vec<f64>>,
}

/// Draws exogenous configurations by ancestral sampling.
pub(crate) struct Sampler {
    exo: Vec<ExoSampler>,
}

impl Sampler {
    pub(crate) fn new(scm: &Scm) -> Self {
        let exo = scm
            .exogenous_ids()
            .iter()
            .map(|&id| {
                let table = scm.table(scm.name(id)).expect("exogenous variable has a table");
                let conditioners: Vec<usize> = scm.parent_ids(id).to_vec();
                let mut strides = vec![1usize; conditioners.len()];
                for i in (0..conditioners.len().saturating_sub(1)).rev() {
                    strides[i] = strides[i + 1] * scm.domain_size(conditioners[i + 1]);
                }
                let cdf = table
                    .rows
                    .iter()
                    .map(|row| {
                        let last = row.probs.iter().rposition(|p| *p > num_traits::Zero::zero()).unwrap_or(0);
                        let mut acc = 0.0;
                        row.probs
                            .iter()
                            .enumerate()
                            .map(|(k, p)| {
                                acc += to_f64(p);
                                if k >= last {
                                    1.0
                                } else {
                                    acc
                                }
                            })
                            .collect()
                    })
                    .collect();
                ExoSampler { id, conditioners, strides, cdf }
            })
            .collect();
        Self { exo }
    }

    pub(crate) fn draw(&self, rng: &mut impl Rng, cfg: &mut [u32]) {
        for e in &self.exo {
            let row: usize = e.conditioners.iter().zip(&e.strides).map(|(&c, &s)| cfg[c] as usize * s).sum();
            let cdf = &e.cdf[row];
            let u: f64 = rng.gen();
            cfg[e.id] = cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1) as u32;
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Tally {
    kept: u64,
    hits: u64,
    sum: f64,
    sumsq: f64,
}

/// Monte Carlo estimate of `query` from `n` draws. Chunks are seeded from
/// `seed` and reduced in chunk order, so results do not depend on the thread
/// count.
pub fn monte_carlo(scm: &Scm, query: &Query, n: u64, seed: u64) -> Result<QueryResult> {
    if n == 0 {
        return Err(InferenceError::ZeroSamples);
    }
    let plan = Plan::compile(scm, &query.world)?;
    let given = query.given.as_ref().map(|g| g.compile(scm)).transpose()?.unwrap_or_default();
    enum Kind {
        Prob(Vec<(usize, u32)>),
        Expect(usize, Vec<f64>),
    }
    let kind = match &query.target {
        Target::Prob(e) => Kind::Prob(e.compile(scm)?),
        Target::Expect(v) => {
            let id = var_id(scm, v)?;
            Kind::Expect(id, numeric_domain(scm, id)?.iter().map(to_f64).collect())
        }
    };
    let sampler = Sampler::new(scm);
    let tallies: Vec<Tally> = chunks(n)
        .into_par_iter()
        .map(|(c, len)| -> Result<Tally> {
            let mut rng = chunk_rng(seed, c);
            let mut cfg = vec![0u32; scm.len()];
            let mut out = vec![0u32; scm.len()];
            let mut t = Tally::default();
            for _ in 0..len {
                sampler.draw(&mut rng, &mut cfg);
                plan.run(scm, &cfg, &mut out)?;
                if !holds(&given, &out) {
                    continue;
                }
                t.kept += 1;
                match &kind {
                    Kind::Prob(ev) => {
                        if holds(ev, &out) {
                            t.hits += 1;
                        }
                    }
                    Kind::Expect(id, nums) => {
                        let x = nums[out[*id] as usize];
                        t.sum += x;
                        t.sumsq += x * x;
                    }
                }
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let total = tallies.iter().fold(Tally::default(), |a, t| Tally {
        kept: a.kept + t.kept,
        hits: a.hits + t.hits,
        sum: a.sum + t.sum,
        sumsq: a.sumsq + t.sumsq,
    });
    if total.kept == 0 {
        return Err(InferenceError::ZeroConditioningEvent(
            query.given.as_ref().map(ToString::to_string).unwrap_or_default(),
        ));
    }
    let m = total.kept as f64;
    let (value, stderr) = match kind {
        Kind::Prob(_) => {
            let p = total.hits as f64 / m;
            (p, (p * (1.0 - p) / m).sqrt())
        }
        Kind::Expect(..) => {
            let mean = total.sum / m;
            let var = if total.kept > 1 { ((total.sumsq - m * mean * mean) / (m - 1.0)).max(0.0) } else { 0.0 };
            (mean, (var / m).sqrt())
        }
    };
    Ok(QueryResult { query: query.to_string(), estimate: Estimate::MonteCarlo { value, stderr, n, seed } })
}
