use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde_json::json;

use super::montecarlo::chunk_rng;
use super::{exact_distribution, require_binary, Dataset, InferenceError, Result};
use crate::model::{for_each_tuple, Scm};
use crate::value::{fmt_rational, json_int, Rational, Value};
use crate::worlds::{Bindings, WorldSpec};

/// One stratum's contribution to an adjusted contrast.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumTerm {
    pub stratum: Bindings,
    pub weight: Rational,
    pub p_treated: Rational,
    pub contrast: Rational,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjustmentResult {
    pub value: Rational,
    pub strata: Vec<StratumTerm>,
    /// Strata with zero weight, left out of the sum.
    pub skipped: Vec<Bindings>,
}

impl AdjustmentResult {
    pub fn to_json(&self, query: &str) -> serde_json::Value {
        json!({
            "query": query,
            "method": "adjust",
            "num": json_int(self.value.numer()),
            "den": json_int(self.value.denom()),
            "value": crate::value::to_f64(&self.value),
            "strata": self.strata.iter().map(|s| json!({
                "stratum": bindings_json(&s.stratum),
                "weight": fmt_rational(&s.weight),
                "p_treated": fmt_rational(&s.p_treated),
                "contrast": fmt_rational(&s.contrast),
            })).collect::<Vec<_>>(),
            "skipped": self.skipped.iter().map(bindings_json).collect::<Vec<_>>(),
        })
    }
}

fn bindings_json(b: &Bindings) -> serde_json::Value {
    serde_json::Value::Object(b.iter().map(|(n, v)| (n.clone(), json!(v.to_string()))).collect())
}

/// Joint weights of (adjustment stratum, treatment, outcome).
struct Cells {
    adjust: Vec<String>,
    values: Vec<Vec<Value>>,
    weights: BTreeMap<(Vec<Value>, bool, bool), Rational>,
}

impl Cells {
    fn strata(&self) -> Vec<Vec<Value>> {
        let sizes: Vec<usize> = self.values.iter().map(Vec::len).collect();
        let mut out = Vec::new();
        for_each_tuple(&sizes, |t| {
            out.push(t.iter().zip(&self.values).map(|(&k, vs)| vs[k as usize].clone()).collect())
        });
        out
    }

    fn get(&self, w: &[Value], x: bool, y: bool) -> Rational {
        self.weights.get(&(w.to_vec(), x, y)).cloned().unwrap_or_else(Rational::zero)
    }

    fn bind(&self, w: &[Value]) -> Bindings {
        self.adjust.iter().cloned().zip(w.iter().cloned()).collect()
    }

    fn adjust(&self) -> Result<AdjustmentResult> {
        let total = self.weights.values().fold(Rational::zero(), |a, p| a + p);
        let mut out = AdjustmentResult { value: Rational::zero(), strata: Vec::new(), skipped: Vec::new() };
        if total.is_zero() {
            return Ok(out);
        }
        for w in self.strata() {
            let [n00, n01, n10, n11] =
                [(false, false), (false, true), (true, false), (true, true)].map(|(x, y)| self.get(&w, x, y));
            let (n0, n1) = (&n00 + &n01, &n10 + &n11);
            let nw = &n0 + &n1;
            if nw.is_zero() {
                out.skipped.push(self.bind(&w));
                continue;
            }
            let p_treated = &n1 / &nw;
            if n0.is_zero() || n1.is_zero() {
                return Err(InferenceError::PositivityViolation { stratum: self.bind(&w), p_treated });
            }
            let contrast = n11 / n1 - n01 / n0;
            let weight = nw / &total;
            out.value += &weight * &contrast;
            out.strata.push(StratumTerm { stratum: self.bind(&w), weight, p_treated, contrast });
        }
        Ok(out)
    }
}

fn bool_of(v: &Value, name: &str) -> Result<bool> {
    v.as_bool().ok_or_else(|| InferenceError::NonBinaryVariable(name.to_string()))
}

fn model_cells(scm: &Scm, x: &str, y: &str, adjust: &[&str]) -> Result<Cells> {
    require_binary(scm, x)?;
    require_binary(scm, y)?;
    let mut vars: Vec<&str> = adjust.to_vec();
    vars.extend([x, y]);
    let joint = exact_distribution(scm, &vars, &WorldSpec::Observational)?;
    let k = adjust.len();
    let mut weights = BTreeMap::new();
    for (key, p) in joint.iter() {
        let cell = (key[..k].to_vec(), bool_of(&key[k], x)?, bool_of(&key[k + 1], y)?);
        *weights.entry(cell).or_insert_with(Rational::zero) += p;
    }
    let values = adjust
        .iter()
        .map(|a| Ok(scm.variable(a).expect("checked by exact_distribution").domain.clone()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Cells { adjust: adjust.iter().map(|s| s.to_string()).collect(), values, weights })
}

fn data_cells(data: &Dataset, x: &str, y: &str, adjust: &[&str]) -> Result<Cells> {
    let (ix, iy) = (data.column(x)?, data.column(y)?);
    let ia = adjust.iter().map(|a| data.column(a)).collect::<Result<Vec<_>>>()?;
    let mut counts: BTreeMap<(Vec<Value>, bool, bool), u64> = BTreeMap::new();
    let mut seen: Vec<BTreeSet<Value>> = vec![BTreeSet::new(); ia.len()];
    for row in &data.rows {
        let w: Vec<Value> = ia.iter().map(|&i| row[i].clone()).collect();
        for (s, v) in seen.iter_mut().zip(&w) {
            s.insert(v.clone());
        }
        *counts.entry((w, bool_of(&row[ix], x)?, bool_of(&row[iy], y)?)).or_default() += 1;
    }
    Ok(Cells {
        adjust: adjust.iter().map(|s| s.to_string()).collect(),
        values: seen.into_iter().map(|s| s.into_iter().collect()).collect(),
        weights: counts.into_iter().map(|(k, c)| (k, Rational::from_integer(c.into()))).collect(),
    })
}

/// Σ_w P(w) [P(y=1 | x=1, w) - P(y=1 | x=0, w)] from the model's observational law.
pub fn adjustment_ace(scm: &Scm, x: &str, y: &str, adjust: &[&str]) -> Result<AdjustmentResult> {
    model_cells(scm, x, y, adjust)?.adjust()
}

/// The same plug-in estimator over empirical frequencies.
pub fn adjustment_ace_data(data: &Dataset, x: &str, y: &str, adjust: &[&str]) -> Result<AdjustmentResult> {
    data_cells(data, x, y, adjust)?.adjust()
}

/// Standard deviation of the adjusted estimate over `replicates` bootstrap
/// resamples. Resamples in which positivity fails are dropped.
pub fn bootstrap_stderr(data: &Dataset, x: &str, y: &str, adjust: &[&str], replicates: u64, seed: u64) -> Result<f64> {
    if replicates < 2 || data.is_empty() {
        return Err(InferenceError::ZeroSamples);
    }
    let (ix, iy) = (data.column(x)?, data.column(y)?);
    let ia = adjust.iter().map(|a| data.column(a)).collect::<Result<Vec<_>>>()?;
    let mut ids: BTreeMap<Vec<Value>, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(data.len());
    for row in &data.rows {
        let w: Vec<Value> = ia.iter().map(|&i| row[i].clone()).collect();
        let next = ids.len();
        let s = *ids.entry(w).or_insert(next);
        rows.push((s, bool_of(&row[ix], x)? as usize, bool_of(&row[iy], y)? as usize));
    }
    let strata = ids.len();
    let n = rows.len();
    let estimates: Vec<Option<f64>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = chunk_rng(seed, b);
            let mut counts = vec![[[0u64; 2]; 2]; strata];
            for _ in 0..n {
                let (s, xv, yv) = rows[rng.gen_range(0..n)];
                counts[s][xv][yv] += 1;
            }
            let mut est = 0.0;
            for c in &counts {
                let n0 = (c[0][0] + c[0][1]) as f64;
                let n1 = (c[1][0] + c[1][1]) as f64;
                if n0 + n1 == 0.0 {
                    continue;
                }
                if n0 == 0.0 || n1 == 0.0 {
                    return None;
                }
                est += (n0 + n1) / n as f64 * (c[1][1] as f64 / n1 - c[0][1] as f64 / n0);
            }
            Some(est)
        })
        .collect();
    let kept: Vec<f64> = estimates.into_iter().flatten().collect();
    if kept.len() < 2 {
        return Err(InferenceError::ZeroSamples);
    }
    let m = kept.len() as f64;
    let mean = kept.iter().sum::<f64>() / m;
    Ok((kept.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositivityEntry {
    pub stratum: Bindings,
    pub weight: Rational,
    pub p_treated: Rational,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PositivityReport {
    pub entries: Vec<PositivityEntry>,
    pub pass: bool,
}

/// 0 < P(x=1 | w) < 1 for every positive-probability stratum w.
pub fn positivity(scm: &Scm, x: &str, adjust: &[&str]) -> Result<PositivityReport> {
    require_binary(scm, x)?;
    let mut vars = adjust.to_vec();
    vars.push(x);
    let joint = exact_distribution(scm, &vars, &WorldSpec::Observational)?;
    let k = adjust.len();
    let mut by_stratum: BTreeMap<Vec<Value>, (Rational, Rational)> = BTreeMap::new();
    for (key, p) in joint.iter() {
        let e = by_stratum.entry(key[..k].to_vec()).or_insert_with(|| (Rational::zero(), Rational::zero()));
        e.0 += p;
        if bool_of(&key[k], x)? {
            e.1 += p;
        }
    }
    let entries: Vec<PositivityEntry> = by_stratum
        .into_iter()
        .map(|(w, (pw, p1))| {
            let p_treated = p1 / &pw;
            let pass = !p_treated.is_zero() && !p_treated.is_one();
            PositivityEntry {
                stratum: adjust.iter().map(|s| s.to_string()).zip(w).collect(),
                weight: pw,
                p_treated,
                pass,
            }
        })
        .collect();
    let pass = entries.iter().all(|e| e.pass);
    Ok(PositivityReport { entries, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::inference::sample_dataset;
    use crate::value::rat;

    #[test]
    fn adjusting_for_w_recovers_ace() {
        let m2 = fixtures::m2();
        let r = adjustment_ace(&m2, "X", "Y", &["W"]).unwrap();
        assert_eq!(r.value, rat(3, 8));
        assert_eq!(r.strata.len(), 2);
        let naive = adjustment_ace(&m2, "X", "Y", &[]).unwrap();
        assert_eq!(naive.value, rat(9, 16));
    }

    #[test]
    fn positivity_violation_is_reported() {
        let m1 = fixtures::m1();
        match adjustment_ace(&m1, "X", "Y", &["X"]) {
            Err(InferenceError::PositivityViolation { p_treated, .. }) => assert!(p_treated.is_zero()),
            other => panic!("{other:?}"),
        }
        let rep = positivity(&m1, "X", &["X"]).unwrap();
        assert!(!rep.pass);
        assert!(positivity(&fixtures::m2(), "X", &["W"]).unwrap().pass);
    }

    #[test]
    fn data_estimate_and_bootstrap() {
        let m2 = fixtures::m2();
        let d = sample_dataset(&m2, 20_000, 5).unwrap();
        let r = adjustment_ace_data(&d, "X", "Y", &["W"]).unwrap();
        let se = bootstrap_stderr(&d, "X", "Y", &["W"], 100, 9).unwrap();
        assert!(se > 0.0 && se < 0.05);
        assert!((crate::value::to_f64(&r.value) - 0.375).abs() < 5.0 * se);
        assert!(matches!(adjustment_ace_data(&d, "X", "Q", &[]), Err(InferenceError::UnknownColumn(_))));
    }
}
