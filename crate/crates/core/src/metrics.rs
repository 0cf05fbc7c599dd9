//! Evaluation metrics over generation records: consumption growth,
//! recessions, mortality, consumption dispersion and failure rates, plus the
//! cross-strategy report indexed to Strategy 0.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::GenerationRecord;
use crate::strategies::StrategyKind;

/// Generation-over-generation relative change in total consumption. `None`
/// where the base generation consumed nothing.
pub fn growth_series(records: &[GenerationRecord]) -> Vec<Option<f64>> {
    records
        .windows(2)
        .map(|w| {
            let prev = w[0].total_consumption();
            let next = w[1].total_consumption();
            (prev > 0.0).then(|| (next - prev) / prev)
        })
        .collect()
}

/// Number of maximal runs of at least three consecutive negative values.
pub fn count_recessions(growth: &[f64]) -> usize {
    count_recessions_opt(growth.iter().map(|&g| Some(g)))
}

fn count_recessions_opt(growth: impl IntoIterator<Item = Option<f64>>) -> usize {
    let mut count = 0;
    let mut run = 0;
    for g in growth {
        if matches!(g, Some(v) if v < 0.0) {
            run += 1;
            if run == 3 {
                count += 1;
            }
        } else {
            run = 0;
        }
    }
    count
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation over the mean.
pub fn coefficient_of_variation(values: &[f64]) -> Result<f64> {
    if values.len() < 2 {
        return Err(Error::UndefinedStatistic("coefficient of variation needs at least two values".into()));
    }
    let m = mean(values);
    if !(m > 0.0) {
        return Err(Error::UndefinedStatistic(format!("coefficient of variation needs a positive mean, got {m}")));
    }
    let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
    Ok(var.sqrt() / m)
}

/// Standardised third central moment, population convention.
pub fn skewness(values: &[f64]) -> Result<f64> {
    if values.len() < 3 {
        return Err(Error::UndefinedStatistic("skewness needs at least three values".into()));
    }
    let m = mean(values);
    let n = values.len() as f64;
    let (mut m2, mut m3) = (0.0, 0.0);
    for v in values {
        let d = v - m;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m2 <= (f64::EPSILON * scale).powi(2) {
        return Err(Error::UndefinedStatistic("skewness of a sample without spread".into()));
    }
    Ok(m3 / m2.powf(1.5))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocietySummary {
    pub society_index: u64,
    pub strategy: StrategyKind,
    pub generations_completed: usize,
    pub failed: bool,
    pub capped: bool,
    /// Mean per-generation consumption growth; `None` if no ratio was defined.
    pub mean_growth: Option<f64>,
    /// Growth ratios that were undefined because the base generation consumed nothing.
    pub undefined_growth: usize,
    pub recession_count: usize,
    pub total_deaths: u64,
    pub total_agent_generations: u64,
    pub mean_cv: Option<f64>,
    pub final_skewness: Option<f64>,
    pub final_consumption_sample: Vec<f64>,
}

impl SocietySummary {
    pub fn from_records(
        society_index: u64,
        strategy: StrategyKind,
        records: &[GenerationRecord],
        final_consumption_sample: Vec<f64>,
    ) -> Result<Self> {
        let last = records.last().ok_or_else(|| Error::State("society produced no generations".into()))?;
        let growth = growth_series(records);
        let defined: Vec<f64> = growth.iter().flatten().copied().collect();
        let cvs: Vec<f64> = records.iter().filter_map(|r| r.consumption_cv).collect();
        let total_deaths: u64 = records.iter().map(|r| r.deaths).sum();
        let total_agent_generations: u64 = records.iter().map(|r| r.population).sum();
        if total_deaths > total_agent_generations {
            return Err(Error::Invariant(format!(
                "society {society_index}: {total_deaths} deaths exceed {total_agent_generations} agent-generations"
            )));
        }
        Ok(Self {
            society_index,
            strategy,
            generations_completed: records.len(),
            failed: last.failed,
            capped: last.capped,
            mean_growth: (!defined.is_empty()).then(|| mean(&defined)),
            undefined_growth: growth.len() - defined.len(),
            recession_count: count_recessions_opt(growth.iter().copied()),
            total_deaths,
            total_agent_generations,
            mean_cv: (!cvs.is_empty()).then(|| mean(&cvs)),
            final_skewness: skewness(&final_consumption_sample).ok(),
            final_consumption_sample,
        })
    }
}

/// Deaths per agent-generation of exposure.
pub fn mortality_rate(summary: &SocietySummary) -> Result<f64> {
    if summary.total_agent_generations == 0 {
        return Err(Error::UndefinedStatistic("mortality rate with zero exposure".into()));
    }
    Ok(summary.total_deaths as f64 / summary.total_agent_generations as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRow {
    pub strategy: StrategyKind,
    pub societies: usize,
    /// Mean growth over societies that did not fail, in percent.
    pub growth: Option<f64>,
    /// Recessions per 100 completed generations.
    pub recession_frequency: Option<f64>,
    /// Mean deaths per agent-generation relative to Strategy 0, in percent.
    pub mortality_index: Option<f64>,
    /// Mean consumption CV relative to Strategy 0, in percent.
    pub cv_index: Option<f64>,
    pub failed_pct: f64,
    pub capped_pct: f64,
    pub mortality_rate: Option<f64>,
    pub mean_cv: Option<f64>,
    /// Mean final-generation consumption skewness over societies that did not fail.
    pub final_skewness: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub master_seed: u64,
    pub config_digest: String,
    pub version: String,
    /// Denominator behind the mortality index, spelled out for readers of the report.
    pub mortality_normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<StrategyRow>,
    pub metadata: ReportMetadata,
}

impl ExperimentReport {
    pub fn row(&self, kind: StrategyKind) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == kind)
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| mean(&v))
}

fn index(value: Option<f64>, baseline: Option<f64>) -> Option<f64> {
    match (value, baseline) {
        (Some(v), Some(b)) if b != 0.0 && b.is_finite() => Some(100.0 * (v / b)),
        _ => None,
    }
}

/// Aggregates per-society summaries into one row per strategy. Strategy 0
/// summaries must be present; they are the 100% reference for the mortality
/// and CV indices.
pub fn build_report(summaries: &[SocietySummary], metadata: ReportMetadata) -> Result<ExperimentReport> {
    let mut sorted: Vec<&SocietySummary> = summaries.iter().collect();
    sorted.sort_by_key(|s| (s.strategy, s.society_index));

    struct Agg {
        strategy: StrategyKind,
        row: StrategyRow,
    }
    let mut aggs: Vec<Agg> = Vec::new();
    for kind in StrategyKind::ALL {
        let group: Vec<&SocietySummary> = sorted.iter().copied().filter(|s| s.strategy == kind).collect();
        if group.is_empty() {
            continue;
        }
        let ok: Vec<&SocietySummary> = group.iter().copied().filter(|s| !s.failed).collect();
        let generations: usize = group.iter().map(|s| s.generations_completed).sum();
        let recessions: usize = group.iter().map(|s| s.recession_count).sum();
        let rates: Vec<f64> = group.iter().map(|s| mortality_rate(s)).collect::<Result<_>>()?;
        let n = group.len() as f64;
        aggs.push(Agg {
            strategy: kind,
            row: StrategyRow {
                strategy: kind,
                societies: group.len(),
                growth: mean_of(ok.iter().filter_map(|s| s.mean_growth)).map(|g| 100.0 * g),
                recession_frequency: (generations > 0).then(|| 100.0 * recessions as f64 / generations as f64),
                mortality_index: None,
                cv_index: None,
                failed_pct: 100.0 * group.iter().filter(|s| s.failed).count() as f64 / n,
                capped_pct: 100.0 * group.iter().filter(|s| s.capped).count() as f64 / n,
                mortality_rate: Some(mean(&rates)),
                mean_cv: mean_of(ok.iter().filter_map(|s| s.mean_cv)),
                final_skewness: mean_of(ok.iter().filter_map(|s| s.final_skewness)),
            },
        });
    }
    let baseline = aggs
        .iter()
        .find(|a| a.strategy == StrategyKind::S0)
        .map(|a| (a.row.mortality_rate, a.row.mean_cv))
        .ok_or_else(|| Error::State("report needs Strategy 0 societies as the baseline".into()))?;
    for a in &mut aggs {
        a.row.mortality_index = index(a.row.mortality_rate, baseline.0);
        a.row.cv_index = index(a.row.mean_cv, baseline.1);
    }
    Ok(ExperimentReport { rows: aggs.into_iter().map(|a| a.row).collect(), metadata })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(generation: u32, population: u64, mean_consumption: f64) -> GenerationRecord {
        GenerationRecord { generation, population, mean_consumption, ..GenerationRecord::empty(generation) }
    }

    #[test]
    fn growth_examples() {
        let flat = vec![record(0, 10, 5.0), record(1, 10, 5.0), record(2, 10, 5.0)];
        assert_eq!(growth_series(&flat), vec![Some(0.0), Some(0.0)]);
        let g = growth_series(&[record(0, 10, 10.0), record(1, 10, 10.25)]);
        assert!((g[0].unwrap() - 0.025).abs() < 1e-12);
        let g = growth_series(&[record(0, 10, 10.0), record(1, 10, 0.0), record(2, 10, 3.0)]);
        assert_eq!(g[0], Some(-1.0));
        assert_eq!(g[1], None);
    }

    #[test]
    fn recession_examples() {
        assert_eq!(count_recessions(&[-0.01, -0.02, -0.005]), 1);
        assert_eq!(count_recessions(&[-0.01, -0.02, 0.005, -0.01]), 0);
        assert_eq!(count_recessions(&[-1.0, -1.0, -1.0, 0.1, -1.0, -1.0, -1.0, -1.0]), 2);
        assert_eq!(count_recessions(&[-1.0; 5]), 1);
        assert_eq!(count_recessions(&[]), 0);
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[4.0, 4.0, 4.0]).unwrap(), 0.0);
        assert_eq!(coefficient_of_variation(&[1.0, 3.0]).unwrap(), 0.5);
        let expected = 1.25f64.sqrt() / 2.5;
        assert!((coefficient_of_variation(&[1.0, 2.0, 3.0, 4.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.4472).abs() < 1e-4);
        assert!(coefficient_of_variation(&[1.0]).is_err());
        assert!(coefficient_of_variation(&[-1.0, 1.0]).is_err());
    }

    #[test]
    fn skewness_examples() {
        assert_eq!(skewness(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert!(skewness(&[1.0, 1.0, 1.0, 10.0]).unwrap() > 0.0);
        assert!((skewness(&[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap() - 1.5).abs() < 1e-12);
        assert!(skewness(&[2.0, 2.0, 2.0]).is_err());
        assert!(skewness(&[1.0, 2.0]).is_err());
    }

    fn summary(strategy: StrategyKind, index: u64, deaths: u64, exposure: u64, cv: f64, failed: bool) -> SocietySummary {
        SocietySummary {
            society_index: index,
            strategy,
            generations_completed: 10,
            failed,
            capped: false,
            mean_growth: Some(0.01 * index as f64),
            undefined_growth: 0,
            recession_count: 1,
            total_deaths: deaths,
            total_agent_generations: exposure,
            mean_cv: Some(cv),
            final_skewness: Some(0.5),
            final_consumption_sample: vec![],
        }
    }

    #[test]
    fn mortality_rate_examples() {
        let s = summary(StrategyKind::S0, 0, 10, 1000, 0.2, false);
        assert_eq!(mortality_rate(&s).unwrap(), 0.01);
        let s = summary(StrategyKind::S0, 0, 0, 1000, 0.2, false);
        assert_eq!(mortality_rate(&s).unwrap(), 0.0);
        let s = summary(StrategyKind::S0, 0, 0, 0, 0.2, false);
        assert!(mortality_rate(&s).is_err());
    }

    #[test]
    fn report_indices() {
        let mut v = vec![
            summary(StrategyKind::S0, 0, 10, 1000, 0.2, false),
            summary(StrategyKind::S0, 1, 10, 1000, 0.2, false),
            summary(StrategyKind::SAb, 0, 20, 1000, 0.5, false),
            summary(StrategyKind::SAb, 1, 20, 1000, 0.5, true),
        ];
        let r = build_report(&v, ReportMetadata::default()).unwrap();
        let s0 = r.row(StrategyKind::S0).unwrap();
        assert_eq!(s0.mortality_index, Some(100.0));
        assert_eq!(s0.cv_index, Some(100.0));
        let ab = r.row(StrategyKind::SAb).unwrap();
        assert!((ab.mortality_index.unwrap() - 200.0).abs() < 1e-12);
        assert!((ab.cv_index.unwrap() - 250.0).abs() < 1e-12);
        assert_eq!(ab.failed_pct, 50.0);
        // failed society 1 is excluded from growth
        assert_eq!(ab.growth, Some(0.0));
        assert_eq!(ab.recession_frequency, Some(10.0));
        v.reverse();
        assert_eq!(build_report(&v, ReportMetadata::default()).unwrap(), r);
    }

    #[test]
    fn failed_percentage() {
        let v: Vec<SocietySummary> =
            (0..100).map(|i| summary(StrategyKind::S0, i, 1, 100, 0.1, i < 29)).collect();
        let r = build_report(&v, ReportMetadata::default()).unwrap();
        assert_eq!(r.rows[0].failed_pct, 29.0);
    }

    #[test]
    fn report_requires_baseline() {
        let v = vec![summary(StrategyKind::SA, 0, 1, 100, 0.1, false)];
        assert!(build_report(&v, ReportMetadata::default()).is_err());
    }

    #[test]
    fn zero_baseline_marks_index_undefined() {
        let v = vec![summary(StrategyKind::S0, 0, 0, 100, 0.1, false), summary(StrategyKind::SA, 0, 3, 100, 0.1, false)];
        let r = build_report(&v, ReportMetadata::default()).unwrap();
        assert_eq!(r.row(StrategyKind::SA).unwrap().mortality_index, None);
        assert_eq!(r.row(StrategyKind::S0).unwrap().mortality_index, None);
    }
}
