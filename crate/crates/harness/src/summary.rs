use std::collections::BTreeMap;

use serde::Serialize;

use crate::config::Scenario;
use crate::experiment::ErrorRecord;
use crate::HarnessError;

/// Five-number summary plus mean.
///
/// Quartiles use linear interpolation between order statistics: the
/// `p`-quantile of sorted `x_0 <= … <= x_{m-1}` sits at position `p (m - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Stats {
    pub fn from_values(values: &[f64]) -> Result<Self, HarnessError> {
        if values.is_empty() {
            return Err(HarnessError::EmptyGroup);
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Self {
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

fn quantile_sorted(v: &[f64], p: f64) -> f64 {
    let pos = p * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub n: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub count: usize,
    pub converged: usize,
    pub shift: Stats,
    pub pattern: Stats,
}

impl CellSummary {
    pub fn metric(&self, name: &str) -> Result<&Stats, HarnessError> {
        match name {
            "shift" | "shift_err" => Ok(&self.shift),
            "pattern" | "pattern_err" => Ok(&self.pattern),
            other => Err(HarnessError::UnknownMetric(other.to_string())),
        }
    }
}

/// Groups records by `(scenario, n, J)`, in that sort order.
pub fn summarize(records: &[ErrorRecord]) -> Result<Vec<CellSummary>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyGroup);
    }
    let mut groups: BTreeMap<(Scenario, usize, usize), Vec<&ErrorRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.scenario, r.n, r.j)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((scenario, n, j), rs)| {
            let shift: Vec<f64> = rs.iter().map(|r| r.shift_error).collect();
            let pattern: Vec<f64> = rs.iter().map(|r| r.pattern_error).collect();
            Ok(CellSummary {
                scenario,
                n,
                j,
                count: rs.len(),
                converged: rs.iter().filter(|r| r.converged).count(),
                shift: Stats::from_values(&shift)?,
                pattern: Stats::from_values(&pattern)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(n: usize, j: usize, rep: usize, value: f64) -> ErrorRecord {
        ErrorRecord {
            scenario: Scenario::Sim,
            n,
            j,
            rep,
            seed: rep as u64,
            shift_error: value,
            pattern_error: 2.0 * value,
            criterion: 0.0,
            converged: true,
            ms: 0,
        }
    }

    #[test]
    fn single_record() {
        let s = summarize(&[record(8, 2, 0, 0.7)]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].shift.median, 0.7);
        assert_eq!(s[0].shift.iqr(), 0.0);
    }

    #[test]
    fn one_to_five() {
        let rs: Vec<_> = [3.0, 1.0, 5.0, 2.0, 4.0].iter().enumerate().map(|(i, &v)| record(8, 2, i, v)).collect();
        let s = summarize(&rs).unwrap()[0].shift;
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max, s.mean), (1.0, 2.0, 3.0, 4.0, 5.0, 3.0));
    }

    #[test]
    fn interpolates_between_order_statistics() {
        let s = Stats::from_values(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn empty_is_error() {
        assert!(matches!(summarize(&[]), Err(HarnessError::EmptyGroup)));
        assert!(Stats::from_values(&[]).is_err());
    }

    #[test]
    fn groups_by_cell() {
        let rs = vec![record(16, 4, 0, 1.0), record(8, 2, 0, 1.0), record(8, 2, 1, 3.0), record(8, 4, 0, 1.0)];
        let s = summarize(&rs).unwrap();
        let keys: Vec<_> = s.iter().map(|c| (c.n, c.j, c.count)).collect();
        assert_eq!(keys, vec![(8, 2, 2), (8, 4, 1), (16, 4, 1)]);
        assert_eq!(s[0].pattern.median, 4.0);
        assert!(s[0].metric("volume").is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(values in prop::collection::vec(0.0f64..10.0, 1..30), seed in any::<u64>()) {
            let rs: Vec<_> = values.iter().enumerate().map(|(i, &v)| record(8, 2, i, v)).collect();
            let mut shuffled = rs.clone();
            // deterministic Fisher–Yates driven by a splitmix sequence
            let mut h = seed;
            for i in (1..shuffled.len()).rev() {
                h = shiftreg::synthdata::splitmix64(h);
                shuffled.swap(i, (h % (i as u64 + 1)) as usize);
            }
            prop_assert_eq!(summarize(&rs).unwrap(), summarize(&shuffled).unwrap());
        }

        #[test]
        fn ordered_statistics(values in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let s = Stats::from_values(&values).unwrap();
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert!(s.min - 1e-12 <= s.mean && s.mean <= s.max + 1e-12);
        }
    }
}
