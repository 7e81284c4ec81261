use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Shape;
use crate::expr::{Expr, LookupTable};
use crate::model::{for_each_tuple, DraftRow, ModelDraft, Modifiability, Scm};
use crate::value::{rat, Rational, Value};

/// Bounds for [`random_scm`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomConfig {
    /// Largest domain size for non-binary variables, clamped to 2..=3.
    pub max_domain: usize,
    /// Largest denominator of a table entry, clamped to 3..=16.
    pub max_denominator: u32,
    /// Draw every table entry strictly positive.
    pub strictly_positive: bool,
}

impl Default for RandomConfig {
    fn default() -> Self {
        Self { max_domain: 3, max_denominator: 16, strictly_positive: true }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    cfg: RandomConfig,
    draft: ModelDraft,
    sizes: Vec<(String, usize)>,
}

impl Gen {
    fn size_of(&self, name: &str) -> usize {
        self.sizes.iter().find(|(n, _)| n == name).expect("declared").1
    }

    fn domain_size(&mut self) -> usize {
        self.rng.gen_range(2..=self.cfg.max_domain)
    }

    /// Probabilities over `k` values with a common denominator.
    fn dist(&mut self, k: usize) -> Vec<Rational> {
        let max = self.cfg.max_denominator as usize;
        if self.cfg.strictly_positive {
            let d = self.rng.gen_range(k..=max);
            let mut cuts: Vec<usize> = sample(&mut self.rng, d - 1, k - 1).into_iter().map(|c| c + 1).collect();
            cuts.sort_unstable();
            cuts.push(d);
            let mut prev = 0;
            cuts.into_iter()
                .map(|c| {
                    let part = c - prev;
                    prev = c;
                    rat(part as i64, d as i64)
                })
                .collect()
        } else {
            let d = self.rng.gen_range(1..=max);
            let mut cuts: Vec<usize> = (0..k - 1).map(|_| self.rng.gen_range(0..=d)).collect();
            cuts.sort_unstable();
            cuts.push(d);
            let mut prev = 0;
            cuts.into_iter()
                .map(|c| {
                    let part = c - prev;
                    prev = c;
                    rat(part as i64, d as i64)
                })
                .collect()
        }
    }

    fn values(k: usize) -> Vec<Value> {
        (0..k as i64).map(Value::int).collect()
    }

    fn exo(&mut self, name: &str) {
        let k = self.domain_size();
        let probs = Self::values(k).into_iter().zip(self.dist(k)).collect();
        self.draft = std::mem::take(&mut self.draft).exo(name, probs);
        self.sizes.push((name.into(), k));
    }

    fn exo_given(&mut self, name: &str, given: &str, modifiable: bool) {
        let k = self.domain_size();
        let rows = Self::values(self.size_of(given))
            .into_iter()
            .map(|g| DraftRow { given: vec![g], probs: Self::values(k).into_iter().zip(self.dist(k)).collect() })
            .collect();
        let mut d = std::mem::take(&mut self.draft).exo_given(name, &[given], rows);
        if modifiable {
            d = d.flags(None, Some(Modifiability::Modifiable));
        }
        self.draft = d;
        self.sizes.push((name.into(), k));
    }

    /// Random lookup table over `keys`; retried until `accept` holds.
    fn table(&mut self, keys: &[&str], k: usize, accept: impl Fn(&[Vec<u32>], &[u32]) -> bool) -> Expr {
        let sizes: Vec<usize> = keys.iter().map(|n| self.size_of(n)).collect();
        let mut tuples = Vec::new();
        for_each_tuple(&sizes, |t| tuples.push(t.to_vec()));
        loop {
            let outs: Vec<u32> = (0..tuples.len()).map(|_| self.rng.gen_range(0..k as u32)).collect();
            if accept(&tuples, &outs) {
                let rows = tuples
                    .iter()
                    .zip(&outs)
                    .map(|(t, &o)| (t.iter().map(|&v| Value::int(v as i64)).collect(), Value::int(o as i64)))
                    .collect();
                return Expr::Table(LookupTable {
                    keys: keys.iter().map(|s| s.to_string()).collect(),
                    rows,
                    default: None,
                });
            }
        }
    }

    fn var(&mut self, name: &str, k: usize, body: Expr, modifiability: Option<Modifiability>) {
        self.draft = std::mem::take(&mut self.draft).var(name, Self::values(k), body).flags(None, modifiability);
        self.sizes.push((name.into(), k));
    }
}

/// Both outputs occur among the rows sharing each value of the `fixed` key
/// positions.
fn surjective_within(tuples: &[Vec<u32>], outs: &[u32], fixed: &[usize]) -> bool {
    let mut seen: std::collections::BTreeMap<Vec<u32>, [bool; 2]> = std::collections::BTreeMap::new();
    for (t, &o) in tuples.iter().zip(outs) {
        let key: Vec<u32> = fixed.iter().map(|&i| t[i]).collect();
        seen.entry(key).or_default()[o as usize] = true;
    }
    seen.values().all(|s| s[0] && s[1])
}

fn any(_: &[Vec<u32>], _: &[u32]) -> bool {
    true
}

/// A validated model of the requested shape with binary `X` and `Y`, lookup
/// table equations and rational exogenous tables. Deterministic in `seed`.
pub fn random_scm(seed: u64, shape: Shape, config: &RandomConfig) -> Scm {
    let cfg = RandomConfig {
        max_domain: config.max_domain.clamp(2, 3),
        max_denominator: config.max_denominator.clamp(3, 16),
        strictly_positive: config.strictly_positive,
    };
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), cfg, draft: ModelDraft::new(), sizes: Vec::new() };
    match shape {
        Shape::Fig1a => {
            g.exo("U");
            g.exo("ξ");
            let fx = g.table(&["U"], 2, |t, o| surjective_within(t, o, &[]));
            g.var("X", 2, fx, None);
            let fy = g.table(&["X", "ξ"], 2, any);
            g.var("Y", 2, fy, None);
        }
        Shape::Fig1b => {
            g.exo("ϑ");
            g.exo_given("V", "ϑ", true);
            g.exo("ξ");
            let fx = g.table(&["V", "ϑ"], 2, |t, o| surjective_within(t, o, &[1]));
            g.var("X", 2, fx, None);
            let fy = g.table(&["X", "ξ"], 2, any);
            g.var("Y", 2, fy, None);
        }
        Shape::Fig2a => {
            g.exo("U");
            g.exo("η");
            g.exo("ξ");
            let kw = g.domain_size();
            let fw = g.table(&["η"], kw, any);
            g.var("W", kw, fw, None);
            let fx = g.table(&["U", "W"], 2, |t, o| surjective_within(t, o, &[0]) && surjective_within(t, o, &[1]));
            g.var("X", 2, fx, None);
            let fy = g.table(&["X", "W", "ξ"], 2, any);
            g.var("Y", 2, fy, None);
        }
        Shape::Fig2b => {
            g.exo("ϑ");
            g.exo_given("V", "ϑ", true);
            g.exo("ζ");
            g.exo("ξ");
            let kz = g.domain_size();
            let fz = g.table(&["ζ"], kz, any);
            g.var("Z", kz, fz, Some(Modifiability::NonModifiable));
            let kw = g.domain_size();
            let fw = g.table(&["Z", "ζ"], kw, any);
            g.var("W", kw, fw, None);
            let fx = g.table(&["V", "ϑ", "W", "Z"], 2, |t, o| surjective_within(t, o, &[1, 3]));
            g.var("X", 2, fx, None);
            let fy = g.table(&["X", "W", "Z", "ξ"], 2, any);
            g.var("Y", 2, fy, None);
        }
    }
    g.draft.validate().expect("generated model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identities::detect_shape;

    #[test]
    fn deterministic_and_shaped() {
        let cfg = RandomConfig::default();
        assert_eq!(random_scm(7, Shape::Fig2a, &cfg), random_scm(7, Shape::Fig2a, &cfg));
        for shape in Shape::ALL {
            for seed in 0..20 {
                let scm = random_scm(seed, shape, &cfg);
                assert_eq!(detect_shape(&scm, "X", "Y").unwrap().shape, shape, "{shape} seed {seed}");
                assert!(scm.exogenous_names().len() <= 4);
                for t in scm.tables() {
                    for row in &t.rows {
                        assert!(row.probs.iter().all(|p| *p > Rational::from_integer(0.into())));
                        assert!(row.probs.iter().all(|p| *p.denom() <= 16.into()));
                    }
                }
            }
        }
    }

    #[test]
    fn nonpositive_tables_still_validate() {
        let cfg = RandomConfig { strictly_positive: false, ..RandomConfig::default() };
        for seed in 0..30 {
            random_scm(seed, Shape::Fig2b, &cfg);
        }
    }
}
