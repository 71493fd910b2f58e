use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learner::CurvePoint;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

pub const PLOT_HEADER: [&str; 5] = ["timestep", "reward_mean", "reward_ci95", "eplen_mean", "eplen_ci95"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatePoint {
    pub timestep: u64,
    pub reward_mean: f64,
    pub reward_ci95: f64,
    pub eplen_mean: f64,
    pub eplen_ci95: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub points: Vec<AggregatePoint>,
    pub n_seeds: usize,
}

/// Mean and `1.96·s/√n` half-width, `s` the sample standard deviation.
pub fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Z95 * var.sqrt() / n.sqrt())
}

/// Pointwise mean and confidence half-width over per-seed curves, which
/// must share their sample timesteps.
pub fn aggregate_seeds(curves: &[Vec<CurvePoint>]) -> Result<AggregateCurve> {
    if curves.len() < 2 {
        return Err(Error::Alignment(format!(
            "need at least two seeds, got {}",
            curves.len()
        )));
    }
    let first = &curves[0];
    for (i, c) in curves.iter().enumerate().skip(1) {
        let same = c.len() == first.len()
            && c.iter().zip(first).all(|(a, b)| a.timestep == b.timestep);
        if !same {
            return Err(Error::Alignment(format!("curve {i} is sampled at different timesteps")));
        }
    }
    let points = (0..first.len())
        .map(|k| {
            let rewards: Vec<f64> = curves.iter().map(|c| c[k].avg_reward).collect();
            let lens: Vec<f64> = curves.iter().map(|c| c[k].avg_episode_length).collect();
            let (reward_mean, reward_ci95) = mean_ci95(&rewards);
            let (eplen_mean, eplen_ci95) = mean_ci95(&lens);
            AggregatePoint {
                timestep: first[k].timestep,
                reward_mean,
                reward_ci95,
                eplen_mean,
                eplen_ci95,
            }
        })
        .collect();
    Ok(AggregateCurve {
        points,
        n_seeds: curves.len(),
    })
}

/// Writes the plot CSV.
pub fn emit_plot_data<W: Write>(aggregate: &AggregateCurve, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for p in &aggregate.points {
        w.write_record([
            p.timestep.to_string(),
            p.reward_mean.to_string(),
            p.reward_ci95.to_string(),
            p.eplen_mean.to_string(),
            p.eplen_ci95.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a plot CSV back. The seed count is not stored there.
pub fn parse_plot_data<R: Read>(input: R, n_seeds: usize) -> Result<AggregateCurve> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != PLOT_HEADER {
        return Err(Error::InvalidInput(format!("unexpected plot header {header:?}")));
    }
    let points = r.deserialize().collect::<std::result::Result<Vec<AggregatePoint>, _>>()?;
    Ok(AggregateCurve { points, n_seeds })
}

/// Area under the mean reward curve by the trapezoid rule.
pub fn reward_auc(aggregate: &AggregateCurve) -> f64 {
    aggregate
        .points
        .windows(2)
        .map(|w| (w[1].timestep - w[0].timestep) as f64 * (w[0].reward_mean + w[1].reward_mean) / 2.0)
        .sum()
}

/// Median with `None` standing for "never", which sorts above every value.
pub fn median_first_success(values: &[Option<u64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| match (a, b) {
        (Some(a), Some(b)) => a.cmp(b),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => Ordering::Equal,
    });
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2].map(|x| x as f64)
    } else {
        Some((v[n / 2 - 1]? as f64 + v[n / 2]? as f64) / 2.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompareMetric {
    FirstSuccess,
    FinalReward,
    FinalEpisodeLength,
    Auc,
}

impl std::str::FromStr for CompareMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "first-success" => CompareMetric::FirstSuccess,
            "final-reward" => CompareMetric::FinalReward,
            "final-episode-length" | "final-eplen" => CompareMetric::FinalEpisodeLength,
            "auc" => CompareMetric::Auc,
            other => return Err(Error::InvalidInput(format!("unknown metric `{other}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub rank: usize,
    pub name: String,
    pub dir: PathBuf,
    /// `None` when the median seed never succeeded.
    pub median_first_success: Option<f64>,
    pub final_reward: f64,
    pub final_episode_length: f64,
    pub auc: f64,
}

impl CompareMetric {
    fn order(self, a: &ComparisonRow, b: &ComparisonRow) -> Ordering {
        match self {
            CompareMetric::FirstSuccess => match (a.median_first_success, b.median_first_success) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (Some(_), None) => Ordering::Less,
                (None, Some(_)) => Ordering::Greater,
                (None, None) => Ordering::Equal,
            },
            CompareMetric::FinalReward => b.final_reward.total_cmp(&a.final_reward),
            CompareMetric::FinalEpisodeLength => a.final_episode_length.total_cmp(&b.final_episode_length),
            CompareMetric::Auc => b.auc.total_cmp(&a.auc),
        }
    }
}

#[derive(Deserialize)]
struct SummaryRow {
    steps_to_first_success: Option<u64>,
}

fn run_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Reads each run directory's aggregate and seed summary and ranks them,
/// best first. Equal runs keep name order and share a rank.
pub fn compare_runs(dirs: &[PathBuf], metric: CompareMetric) -> Result<Vec<ComparisonRow>> {
    if dirs.len() < 2 {
        return Err(Error::InvalidInput("compare needs at least two runs".into()));
    }
    let mut rows = Vec::new();
    for dir in dirs {
        let aggregate_path = dir.join("aggregate.csv");
        let summary_path = dir.join("summary.csv");
        if !aggregate_path.is_file() || !summary_path.is_file() {
            return Err(Error::MissingRun(dir.clone()));
        }
        let aggregate = parse_plot_data(std::fs::File::open(&aggregate_path)?, 0)?;
        let firsts = csv::Reader::from_path(&summary_path)?
            .deserialize()
            .map(|r| r.map(|s: SummaryRow| s.steps_to_first_success))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let last = aggregate
            .points
            .last()
            .ok_or_else(|| Error::MissingRun(dir.clone()))?;
        rows.push(ComparisonRow {
            rank: 0,
            name: run_name(dir),
            dir: dir.clone(),
            median_first_success: median_first_success(&firsts),
            final_reward: last.reward_mean,
            final_episode_length: last.eplen_mean,
            auc: reward_auc(&aggregate),
        });
    }
    rows.sort_by(|a, b| metric.order(a, b).then_with(|| a.name.cmp(&b.name)).then_with(|| a.dir.cmp(&b.dir)));
    for i in 0..rows.len() {
        rows[i].rank = if i > 0 && metric.order(&rows[i - 1], &rows[i]) == Ordering::Equal {
            rows[i - 1].rank
        } else {
            i + 1
        };
    }
    Ok(rows)
}

/// Comparison table as CSV.
pub fn write_comparison<W: Write>(rows: &[ComparisonRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "name", "median_first_success", "final_reward", "final_episode_length", "auc"])?;
    for r in rows {
        w.write_record([
            r.rank.to_string(),
            r.name.clone(),
            r.median_first_success.map_or_else(|| "never".into(), |v| v.to_string()),
            r.final_reward.to_string(),
            r.final_episode_length.to_string(),
            r.auc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
