use std::collections::BTreeSet;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataError, Group, RoiTable};
use crate::numerics::Matrix;

/// Fractional decrease applied to affected ROIs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rate {
    Fixed(f64),
    /// One rate per participant, drawn from U(lo, hi).
    Uniform { lo: f64, hi: f64 },
}

impl Rate {
    fn validate(&self) -> Result<(), DataError> {
        let ok = |r: f64| (0.0..1.0).contains(&r);
        match *self {
            Rate::Fixed(r) if ok(r) => Ok(()),
            Rate::Uniform { lo, hi } if ok(lo) && ok(hi) && lo <= hi => Ok(()),
            other => Err(DataError::SpecInvalid(format!("rate {other:?} outside [0, 1)"))),
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Rate::Fixed(r) => r,
            Rate::Uniform { lo, hi } if lo == hi => lo,
            Rate::Uniform { lo, hi } => rng.random_range(lo..=hi),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrophyPattern {
    pub name: String,
    pub rois: Vec<usize>,
    pub rate: Rate,
    /// Number of PT participants carrying this pattern; `None` shares the
    /// remaining PT rows evenly.
    #[serde(default)]
    pub count: Option<usize>,
}

/// Non-disease variation applied to random rows of both groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confounder {
    pub rois: Vec<usize>,
    pub rate: Rate,
    pub cn_count: usize,
    pub pt_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrophySpec {
    pub patterns: Vec<AtrophyPattern>,
    #[serde(default)]
    pub confounder: Option<Confounder>,
}

/// Cohort shape for [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticCounts {
    pub n_features: usize,
    pub n_cn: usize,
    pub n_pt: usize,
}

impl SyntheticCounts {
    /// 1200 participants, half CN, 145 ROIs.
    pub fn benchmark() -> Self {
        Self { n_features: 145, n_cn: 600, n_pt: 600 }
    }
}

fn range(lo: usize, hi: usize) -> Vec<usize> {
    (lo..hi).collect()
}

impl AtrophySpec {
    /// Three overlapping 16-ROI patterns at 20% atrophy, 200 PT each, plus a
    /// 40% confounder on 30 other ROIs hitting 200 CN and 200 PT rows.
    pub fn three_pattern() -> Self {
        let pattern = |name: &str, lo, hi| AtrophyPattern {
            name: name.into(),
            rois: range(lo, hi),
            rate: Rate::Fixed(0.2),
            count: Some(200),
        };
        Self {
            patterns: vec![pattern("P1", 0, 16), pattern("P2", 12, 28), pattern("P3", 24, 40)],
            confounder: Some(Confounder {
                rois: range(60, 90),
                rate: Rate::Fixed(0.4),
                cn_count: 200,
                pt_count: 200,
            }),
        }
    }

    /// Two ROI groups (a compact "medial temporal" block and a wide "global"
    /// block) and their union, all at the same rate, with even group sizes.
    pub fn semi_synthetic(rate: Rate) -> Self {
        let mtl = range(0, 12);
        let global: Vec<usize> = (30..110).step_by(4).collect();
        let union: Vec<usize> = mtl.iter().chain(&global).copied().collect::<BTreeSet<_>>().into_iter().collect();
        Self {
            patterns: vec![
                AtrophyPattern { name: "MTL".into(), rois: mtl, rate, count: None },
                AtrophyPattern { name: "global".into(), rois: global, rate, count: None },
                AtrophyPattern { name: "combined".into(), rois: union, rate, count: None },
            ],
            confounder: None,
        }
    }

    pub fn with_rate(mut self, rate: Rate) -> Self {
        self.patterns.iter_mut().for_each(|p| p.rate = rate);
        self
    }

    fn validate(&self, n_features: usize, n_cn: usize, n_pt: usize) -> Result<Vec<usize>, DataError> {
        if self.patterns.is_empty() {
            return Err(DataError::SpecInvalid("no atrophy patterns".into()));
        }
        for p in &self.patterns {
            p.rate.validate()?;
            if let Some(&bad) = p.rois.iter().find(|&&r| r >= n_features) {
                return Err(DataError::SpecInvalid(format!("pattern {} uses ROI {bad} >= {n_features}", p.name)));
            }
        }
        if let Some(c) = &self.confounder {
            c.rate.validate()?;
            if let Some(&bad) = c.rois.iter().find(|&&r| r >= n_features) {
                return Err(DataError::SpecInvalid(format!("confounder uses ROI {bad} >= {n_features}")));
            }
            if c.cn_count > n_cn || c.pt_count > n_pt {
                return Err(DataError::SpecInvalid(format!(
                    "confounder needs {} CN / {} PT rows, have {n_cn} / {n_pt}",
                    c.cn_count, c.pt_count
                )));
            }
        }
        // resolve pattern sizes
        let fixed: usize = self.patterns.iter().filter_map(|p| p.count).sum();
        let open = self.patterns.iter().filter(|p| p.count.is_none()).count();
        if fixed > n_pt || (open == 0 && fixed != n_pt) {
            return Err(DataError::SpecInvalid(format!(
                "pattern sizes sum to {fixed} but there are {n_pt} PT rows"
            )));
        }
        let rest = n_pt - fixed;
        let mut k = 0;
        Ok(self
            .patterns
            .iter()
            .map(|p| {
                p.count.unwrap_or_else(|| {
                    let share = rest / open + usize::from(k < rest % open);
                    k += 1;
                    share
                })
            })
            .collect())
    }
}

/// What the simulation did to each row.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub ids: Vec<String>,
    /// Pattern index for PT rows, `None` for CN rows.
    pub pattern: Vec<Option<usize>>,
    pub confounder: Vec<bool>,
    pub pattern_rois: Vec<Vec<usize>>,
    pub confounder_rois: Vec<usize>,
    /// Per-row atrophy rate actually applied (0 for CN rows).
    pub rates: Vec<f64>,
    /// Confounder ROIs that also belong to some pattern (allowed, reported).
    pub confounder_overlap: Vec<usize>,
}

impl GroundTruth {
    /// Pattern labels of the PT rows, in table order.
    pub fn pt_labels(&self) -> Vec<usize> {
        self.pattern.iter().flatten().copied().collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(["id", "pattern", "confounder_flag"]).expect("in-memory write");
        for i in 0..self.ids.len() {
            let pattern = self.pattern[i].map(|p| p.to_string()).unwrap_or_default();
            let flag = if self.confounder[i] { "1" } else { "0" };
            w.write_record([self.ids[i].as_str(), pattern.as_str(), flag]).expect("in-memory write");
        }
        File::create(path)?.write_all(&w.into_inner().expect("in-memory flush"))?;
        Ok(())
    }
}

/// Fresh cohort: every ROI ~ N(1, 0.1) i.i.d., a random CN/PT split, then
/// [`inject_atrophy`] on the PT rows.
pub fn generate_synthetic(
    spec: &AtrophySpec,
    counts: SyntheticCounts,
    seed: u64,
) -> Result<(RoiTable, GroundTruth), DataError> {
    let SyntheticCounts { n_features, n_cn, n_pt } = counts;
    spec.validate(n_features, n_cn, n_pt)?;
    let n = n_cn + n_pt;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(1.0, 0.1).expect("valid normal");
    let values: Vec<f64> = (0..n * n_features).map(|_| normal.sample(&mut rng)).collect();
    let mut groups: Vec<Group> = (0..n).map(|i| if i < n_cn { Group::Cn } else { Group::Pt }).collect();
    groups.shuffle(&mut rng);
    let width = n.to_string().len().max(4);
    let base = RoiTable::new(
        (0..n).map(|i| format!("sub{i:0width$}")).collect(),
        groups,
        None,
        (1..=n_features).map(|i| format!("roi_{i}")).collect(),
        Matrix::from_raw(n, n_features, values),
    )?;
    inject_with_rng(&base, spec, &mut rng)
}

/// Applies the spec's patterns to the PT rows of `base` (its pseudo-patients)
/// and the optional confounder to random rows of both groups.
pub fn inject_atrophy(base: &RoiTable, spec: &AtrophySpec, seed: u64) -> Result<(RoiTable, GroundTruth), DataError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    inject_with_rng(base, spec, &mut rng)
}

fn inject_with_rng(
    base: &RoiTable,
    spec: &AtrophySpec,
    rng: &mut ChaCha8Rng,
) -> Result<(RoiTable, GroundTruth), DataError> {
    let cn = base.indices_of(Group::Cn);
    let mut pt = base.indices_of(Group::Pt);
    let sizes = spec.validate(base.num_features(), cn.len(), pt.len())?;

    let n = base.len();
    let mut out = base.clone();
    let mut pattern = vec![None; n];
    let mut rates = vec![0.0; n];

    pt.shuffle(rng);
    let mut cursor = 0;
    for (k, (p, &size)) in spec.patterns.iter().zip(&sizes).enumerate() {
        for &row in &pt[cursor..cursor + size] {
            let r = p.rate.draw(rng);
            pattern[row] = Some(k);
            rates[row] = r;
            let values = out.values.row_mut(row);
            for &roi in &p.rois {
                values[roi] *= 1.0 - r;
            }
        }
        cursor += size;
    }

    let mut confounder = vec![false; n];
    let mut confounder_overlap = Vec::new();
    if let Some(c) = &spec.confounder {
        let pattern_rois: BTreeSet<usize> = spec.patterns.iter().flat_map(|p| p.rois.iter().copied()).collect();
        confounder_overlap = c.rois.iter().copied().filter(|r| pattern_rois.contains(r)).collect();
        let pt_all = base.indices_of(Group::Pt);
        let chosen = cn
            .choose_multiple(rng, c.cn_count)
            .chain(pt_all.choose_multiple(rng, c.pt_count))
            .copied()
            .collect::<Vec<_>>();
        for row in chosen {
            confounder[row] = true;
            let r = c.rate.draw(rng);
            let values = out.values.row_mut(row);
            for &roi in &c.rois {
                values[roi] *= 1.0 - r;
            }
        }
    }

    let truth = GroundTruth {
        ids: base.ids.clone(),
        pattern,
        confounder,
        pattern_rois: spec.patterns.iter().map(|p| p.rois.clone()).collect(),
        confounder_rois: spec.confounder.as_ref().map(|c| c.rois.clone()).unwrap_or_default(),
        rates,
        confounder_overlap,
    };
    Ok((out, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, var.sqrt())
    }

    #[test]
    fn benchmark_preset_counts() {
        let (t, truth) = generate_synthetic(&AtrophySpec::three_pattern(), SyntheticCounts::benchmark(), 7).unwrap();
        assert_eq!(t.len(), 1200);
        assert_eq!(t.num_features(), 145);
        assert_eq!(t.indices_of(Group::Cn).len(), 600);
        let labels = truth.pt_labels();
        assert_eq!(labels.len(), 600);
        for k in 0..3 {
            assert_eq!(labels.iter().filter(|&&l| l == k).count(), 200);
        }
        let cn_conf = (0..1200).filter(|&i| truth.confounder[i] && t.groups[i] == Group::Cn).count();
        let pt_conf = (0..1200).filter(|&i| truth.confounder[i] && t.groups[i] == Group::Pt).count();
        assert_eq!((cn_conf, pt_conf), (200, 200));
        assert!(truth.confounder_overlap.is_empty());
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = AtrophySpec::three_pattern();
        let a = generate_synthetic(&spec, SyntheticCounts::benchmark(), 3).unwrap();
        let b = generate_synthetic(&spec, SyntheticCounts::benchmark(), 3).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&spec, SyntheticCounts::benchmark(), 4).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn unaffected_column_statistics() {
        let (t, _) = generate_synthetic(&AtrophySpec::three_pattern(), SyntheticCounts::benchmark(), 11).unwrap();
        let col = t.values.column(140);
        let (m, sd) = mean_sd(&col);
        let n = col.len() as f64;
        assert!((m - 1.0).abs() < 3.0 * 0.1 / n.sqrt(), "mean {m}");
        assert!((sd - 0.1).abs() < 3.0 * 0.1 / (2.0 * (n - 1.0)).sqrt(), "sd {sd}");
    }

    #[test]
    fn affected_roi_mean_matches_rate() {
        let (t, truth) = generate_synthetic(&AtrophySpec::three_pattern(), SyntheticCounts::benchmark(), 12).unwrap();
        // ROI 5 belongs to pattern 0 only
        let rows: Vec<f64> = (0..t.len()).filter(|&i| truth.pattern[i] == Some(0)).map(|i| t.values.get(i, 5)).collect();
        let (m, _) = mean_sd(&rows);
        let se = 0.8 * 0.1 / (rows.len() as f64).sqrt();
        assert!((m - 0.8).abs() < 3.0 * se, "mean {m}");
    }

    #[test]
    fn null_simulation_is_indistinguishable() {
        let spec = AtrophySpec::three_pattern().with_rate(Rate::Fixed(0.0));
        let spec = AtrophySpec { confounder: None, ..spec };
        let (t, _) = generate_synthetic(&spec, SyntheticCounts::benchmark(), 5).unwrap();
        let (cn, pt) = (t.cn_rows(), t.pt_rows());
        for j in 0..t.num_features() {
            let (m1, s1) = mean_sd(&cn.column(j));
            let (m2, s2) = mean_sd(&pt.column(j));
            let se = (s1 * s1 / 600.0 + s2 * s2 / 600.0).sqrt();
            assert!((m1 - m2).abs() < 4.0 * se, "ROI {j}");
        }
    }

    #[test]
    fn fixed_rate_injection() {
        let base = RoiTable::new(
            vec!["a".into(), "b".into()],
            vec![Group::Cn, Group::Pt],
            None,
            vec!["r0".into(), "r1".into()],
            Matrix::new(2, 2, vec![1.0; 4]).unwrap(),
        )
        .unwrap();
        let spec = AtrophySpec {
            patterns: vec![AtrophyPattern { name: "x".into(), rois: vec![1], rate: Rate::Fixed(0.3), count: None }],
            confounder: None,
        };
        let (t, truth) = inject_atrophy(&base, &spec, 0).unwrap();
        assert_eq!(t.values.row(1), &[1.0, 0.7]);
        assert_eq!(t.values.row(0), &[1.0, 1.0]);
        assert_eq!(truth.pattern, vec![None, Some(0)]);

        let empty = AtrophySpec {
            patterns: vec![AtrophyPattern { name: "e".into(), rois: vec![], rate: Rate::Fixed(0.3), count: None }],
            confounder: None,
        };
        assert_eq!(inject_atrophy(&base, &empty, 0).unwrap().0, base);
    }

    #[test]
    fn ranged_rates_are_per_participant() {
        let null = AtrophySpec::semi_synthetic(Rate::Fixed(0.0));
        let (base, _) =
            generate_synthetic(&null, SyntheticCounts { n_features: 145, n_cn: 200, n_pt: 326 }, 1).unwrap();
        let spec = AtrophySpec::semi_synthetic(Rate::Uniform { lo: 0.1, hi: 0.3 });
        let (t, truth) = inject_atrophy(&base, &spec, 9).unwrap();
        let sizes: Vec<usize> = (0..3).map(|k| truth.pt_labels().iter().filter(|&&l| l == k).count()).collect();
        assert_eq!(sizes, vec![109, 109, 108]);
        for i in 0..t.len() {
            if let Some(k) = truth.pattern[i] {
                let r = truth.rates[i];
                assert!((0.1..=0.3).contains(&r));
                for &roi in &spec.patterns[k].rois {
                    let ratio = t.values.get(i, roi) / base.values.get(i, roi);
                    assert!((ratio - (1.0 - r)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = AtrophySpec::three_pattern();
        spec.confounder.as_mut().unwrap().cn_count = 601;
        assert!(generate_synthetic(&spec, SyntheticCounts::benchmark(), 0).is_err());
        let spec = AtrophySpec::three_pattern().with_rate(Rate::Fixed(1.2));
        assert!(generate_synthetic(&spec, SyntheticCounts::benchmark(), 0).is_err());
        let mut spec = AtrophySpec::three_pattern();
        spec.patterns[0].rois.push(500);
        assert!(generate_synthetic(&spec, SyntheticCounts::benchmark(), 0).is_err());
        let counts = SyntheticCounts { n_pt: 500, ..SyntheticCounts::benchmark() };
        assert!(generate_synthetic(&AtrophySpec::three_pattern(), counts, 0).is_err());
    }

    #[test]
    fn confounder_overlap_is_flagged() {
        let mut spec = AtrophySpec::three_pattern();
        spec.confounder.as_mut().unwrap().rois.push(3);
        let (_, truth) = generate_synthetic(&spec, SyntheticCounts::benchmark(), 0).unwrap();
        assert_eq!(truth.confounder_overlap, vec![3]);
    }
}
