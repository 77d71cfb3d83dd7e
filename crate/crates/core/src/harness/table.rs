use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{sort_rows, ResultRow, RESULTS_SCHEMA_VERSION};
use super::schedule::NRule;
use crate::error::{Error, Result};
use crate::inference::config_hash;

pub fn write_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: ResultRow = rec?;
        if row.schema != RESULTS_SCHEMA_VERSION {
            return Err(Error::Config(format!("result schema {} is not supported", row.schema)));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Serialize)]
struct TimingRow<'a> {
    n: usize,
    rule: &'a str,
    replication: usize,
    seconds: f64,
}

/// One wall-clock row per cell.
pub fn write_timings(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut last = None;
    for r in rows {
        let key = (r.n, r.rule.as_str(), r.replication);
        if last != Some(key) {
            w.serialize(TimingRow { n: r.n, rule: &r.rule, replication: r.replication, seconds: r.wall_clock })?;
            last = Some(key);
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    schema: u32,
    name: String,
    config_hash: String,
    rows: usize,
    error_rows: usize,
}

/// Files written by [`write_run`].
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub results: PathBuf,
    pub timings: PathBuf,
    pub config: PathBuf,
    pub manifest: PathBuf,
}

/// Writes `results.csv`, `timings.csv`, the resolved `config.toml` and
/// `manifest.json` into `dir`.
pub fn write_run(cfg: &ExperimentConfig, rows: &[ResultRow], dir: &Path) -> Result<RunFiles> {
    fs::create_dir_all(dir)?;
    let files = RunFiles {
        results: dir.join("results.csv"),
        timings: dir.join("timings.csv"),
        config: dir.join("config.toml"),
        manifest: dir.join("manifest.json"),
    };
    write_results(rows, &files.results)?;
    write_timings(rows, &files.timings)?;
    cfg.save(&files.config)?;
    let manifest = Manifest {
        schema: RESULTS_SCHEMA_VERSION,
        name: cfg.name.clone(),
        config_hash: config_hash(cfg),
        rows: rows.len(),
        error_rows: rows.iter().filter(|r| r.is_error()).count(),
    };
    fs::write(&files.manifest, serde_json::to_string_pretty(&manifest)?)?;
    Ok(files)
}

/// Mean and sample sd of one metric over the replications of one `(n, rule)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub method: String,
    pub n: usize,
    pub rule: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
}

/// Aggregates finite metric values, ordered by `(n, rule, metric)`.
pub fn aggregate(rows: &[ResultRow]) -> Vec<Aggregate> {
    let mut sorted = rows.to_vec();
    sort_rows(&mut sorted);
    let rule_index = |r: &str| r.parse::<NRule>().map(NRule::index).unwrap_or(usize::MAX);
    let mut groups: BTreeMap<(usize, usize, String), (String, String, String, Vec<f64>)> = BTreeMap::new();
    for r in sorted.iter().filter(|r| !r.is_error() && r.value.is_finite()) {
        groups
            .entry((r.n, rule_index(&r.rule), r.metric.clone()))
            .or_insert_with(|| (r.model.clone(), r.method.clone(), r.rule.clone(), Vec::new()))
            .3
            .push(r.value);
    }
    groups
        .into_iter()
        .map(|((n, _, metric), (model, method, rule, v))| {
            let count = v.len();
            let mean = v.iter().sum::<f64>() / count as f64;
            let sd = if count > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt() } else { 0.0 };
            Aggregate { model, method, n, rule, metric, count, mean, sd }
        })
        .collect()
}

pub fn write_aggregates(aggs: &[Aggregate], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for a in aggs {
        w.serialize(a)?;
    }
    w.flush()?;
    Ok(())
}

/// Coverage of `parameter` laid out with one row per `n` and one column per
/// N-rule; each cell reads `c80/c90/c95` for the given levels.
pub fn coverage_table(rows: &[ResultRow], parameter: &str, levels: &[f64]) -> Result<String> {
    // (n, rule) -> per level (hits, replications)
    let mut cells: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    let mut rules_seen = std::collections::BTreeSet::new();
    for r in rows.iter().filter(|r| !r.is_error()) {
        let Some(level_idx) = levels.iter().position(|l| r.metric == format!("cover@{l:.2}:{parameter}")) else { continue };
        let rule: NRule = r.rule.parse()?;
        rules_seen.insert(rule);
        let cell = cells.entry((r.n, rule.index())).or_insert_with(|| vec![(0, 0); levels.len()]);
        cell[level_idx].1 += 1;
        if r.value == 1.0 {
            cell[level_idx].0 += 1;
        }
    }
    if cells.is_empty() {
        return Err(Error::InsufficientData(format!("no coverage rows for parameter {parameter}")));
    }
    let rules: Vec<NRule> = rules_seen.into_iter().collect();
    let ns: Vec<usize> = cells.keys().map(|k| k.0).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let mut out = String::from("n");
    for r in &rules {
        out.push_str(&format!(",N={r}"));
    }
    out.push('\n');
    for n in ns {
        out.push_str(&n.to_string());
        for r in &rules {
            out.push(',');
            if let Some(c) = cells.get(&(n, r.index())) {
                let parts: Vec<String> = c.iter().map(|&(h, t)| if t == 0 { "NA".into() } else { format!("{:.2}", h as f64 / t as f64) }).collect();
                out.push_str(&parts.join("/"));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(n: usize, rule: &str, rep: usize, metric: &str, value: f64) -> ResultRow {
        ResultRow {
            schema: RESULTS_SCHEMA_VERSION,
            model: "stereo".into(),
            method: "npe".into(),
            n,
            rule: rule.into(),
            realized_n: n,
            replication: rep,
            seed: 1,
            metric: metric.into(),
            value,
            simulations: n as u64,
            message: String::new(),
            wall_clock: 0.5,
        }
    }

    #[test]
    fn coverage_table_layout() {
        let mut rows = Vec::new();
        for rep in 0..4 {
            rows.push(row(100, "n", rep, "cover@0.80:lambda", 1.0));
            rows.push(row(100, "n", rep, "cover@0.90:lambda", 1.0));
            rows.push(row(100, "n2", rep, "cover@0.80:lambda", f64::from(u8::from(rep < 3))));
            rows.push(row(100, "n2", rep, "cover@0.90:lambda", 1.0));
        }
        let t = coverage_table(&rows, "lambda", &[0.8, 0.9]).unwrap();
        assert_eq!(t, "n,N=n,N=n2\n100,1.00/1.00,0.75/1.00\n");
        assert!(coverage_table(&rows, "sigma", &[0.8]).is_err());
    }

    #[test]
    fn csv_round_trip_and_aggregates() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![row(100, "n", 0, "kld", 1.0), row(100, "n", 1, "kld", 3.0), row(100, "n", 2, "error", f64::NAN)];
        let p = dir.path().join("r.csv");
        write_results(&rows, &p).unwrap();
        let back = read_results(&p).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[1].value, 3.0);
        assert!(back[2].value.is_nan());
        let a = aggregate(&back);
        assert_eq!(a.len(), 1);
        assert_eq!((a[0].mean, a[0].count), (2.0, 2));
        assert!((a[0].sd - 2f64.sqrt()).abs() < 1e-12);
    }
}
