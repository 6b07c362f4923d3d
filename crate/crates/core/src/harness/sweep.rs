//! Parameter sweeps over scenario families.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::aggregate::{aggregate, SummaryTable};
use super::outcome::{classify_run, HarnessError, RunOutcome};
use crate::ransim::{run_scenario, ScenarioConfig};

/// One point of a grid: a label and a partial config merged over each base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub label: String,
    pub overrides: Value,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub cells: Vec<GridCell>,
}

/// `"params.eps_rssi"` and `1.0` become `{"params": {"eps_rssi": 1.0}}`.
pub fn nested(path: &str, value: Value) -> Value {
    path.rsplit('.').fold(value, |acc, key| {
        let mut m = Map::new();
        m.insert(key.to_string(), acc);
        Value::Object(m)
    })
}

fn merge_into(dst: &mut Value, src: &Value) {
    match (dst, src) {
        (Value::Object(d), Value::Object(s)) => {
            for (k, v) in s {
                merge_into(d.entry(k.clone()).or_insert(Value::Null), v);
            }
        }
        (d, s) => *d = s.clone(),
    }
}

impl ParamGrid {
    /// Cartesian product of `(dotted path, values)` axes.
    pub fn product(axes: &[(&str, Vec<Value>)]) -> ParamGrid {
        let mut cells = vec![GridCell { label: String::new(), overrides: Value::Object(Map::new()) }];
        for (path, values) in axes {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for cell in &cells {
                for v in values {
                    let mut overrides = cell.overrides.clone();
                    merge_into(&mut overrides, &nested(path, v.clone()));
                    let part = format!("{path}={v}");
                    let label = if cell.label.is_empty() { part } else { format!("{},{part}", cell.label) };
                    next.push(GridCell { label, overrides });
                }
            }
            cells = next;
        }
        ParamGrid { cells }
    }

    pub fn labelled(cells: Vec<(String, Value)>) -> ParamGrid {
        ParamGrid { cells: cells.into_iter().map(|(label, overrides)| GridCell { label, overrides }).collect() }
    }
}

/// Merge `overrides` over `base`; the result is re-validated.
pub fn apply_overrides(base: &ScenarioConfig, overrides: &Value) -> Result<ScenarioConfig, HarnessError> {
    let mut v = serde_json::to_value(base).map_err(|e| HarnessError::Override(e.to_string()))?;
    merge_into(&mut v, overrides);
    let cfg: ScenarioConfig = serde_json::from_value(v).map_err(|e| HarnessError::Override(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub overrides: Value,
    pub summary: SummaryTable,
    pub outcomes: Vec<RunOutcome>,
}

pub fn run_one(cfg: &ScenarioConfig) -> Result<RunOutcome, HarnessError> {
    let trace = run_scenario(cfg)?;
    classify_run(&trace, cfg)
}

/// Run and classify a batch in parallel; output order follows input order.
pub fn run_batch(configs: &[ScenarioConfig]) -> Result<Vec<RunOutcome>, HarnessError> {
    configs.par_iter().map(run_one).collect()
}

/// Every cell runs every base scenario once per seed.
pub fn sweep(bases: &[ScenarioConfig], grid: &ParamGrid, seeds: &[u64]) -> Result<Vec<SweepRow>, HarnessError> {
    if grid.cells.is_empty() {
        return Err(HarnessError::EmptyGrid);
    }
    let mut jobs = Vec::new();
    for (ci, cell) in grid.cells.iter().enumerate() {
        for base in bases {
            let cfg = apply_overrides(base, &cell.overrides)?;
            for &seed in seeds {
                jobs.push((ci, ScenarioConfig { seed, ..cfg.clone() }));
            }
        }
    }
    let configs: Vec<ScenarioConfig> = jobs.iter().map(|(_, c)| c.clone()).collect();
    let outcomes = run_batch(&configs)?;
    let mut per_cell: Vec<Vec<RunOutcome>> = vec![Vec::new(); grid.cells.len()];
    for ((ci, _), o) in jobs.iter().zip(outcomes) {
        per_cell[*ci].push(o);
    }
    Ok(grid
        .cells
        .iter()
        .zip(per_cell)
        .map(|(cell, outcomes)| SweepRow {
            label: cell.label.clone(),
            overrides: cell.overrides.clone(),
            summary: aggregate(&outcomes),
            outcomes,
        })
        .collect())
}

#[derive(Serialize)]
struct CsvRow<'a> {
    label: &'a str,
    overrides: String,
    runs: u32,
    tp: u32,
    fp: u32,
    tn: u32,
    #[serde(rename = "fn")]
    fn_: u32,
    accuracy: f64,
    tp_rate: Option<f64>,
    fp_rate: Option<f64>,
    tn_rate: Option<f64>,
    fn_rate: Option<f64>,
    cbr: Option<f64>,
    mean_detection_ms: Option<f64>,
    mean_mitigation_ms: Option<f64>,
    mean_detect_mitigate_ms: Option<f64>,
    mean_depletion_ms: Option<f64>,
    success_rate: String,
}

/// One CSV row per cell.
pub fn write_rows_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        let s = &r.summary;
        w.serialize(CsvRow {
            label: &r.label,
            overrides: r.overrides.to_string(),
            runs: s.runs,
            tp: s.tp,
            fp: s.fp,
            tn: s.tn,
            fn_: s.fn_,
            accuracy: s.accuracy,
            tp_rate: s.tp_rate,
            fp_rate: s.fp_rate,
            tn_rate: s.tn_rate,
            fn_rate: s.fn_rate,
            cbr: s.cbr,
            mean_detection_ms: s.mean_detection_ms,
            mean_mitigation_ms: s.mean_mitigation_ms,
            mean_detect_mitigate_ms: s.mean_detect_mitigate_ms,
            mean_depletion_ms: s.mean_depletion_ms,
            success_rate: serde_json::to_string(&s.success_rate).expect("map of floats"),
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenarios;
    use serde_json::json;

    #[test]
    fn product_grid() {
        let g = ParamGrid::product(&[
            ("params.eps_rssi", vec![json!(1.0), json!(4.0)]),
            ("gnb.max_ue", vec![json!(16), json!(32), json!(48)]),
        ]);
        assert_eq!(g.cells.len(), 6);
        assert_eq!(g.cells[1].label, "params.eps_rssi=1.0,gnb.max_ue=32");
        assert_eq!(g.cells[1].overrides, json!({"params": {"eps_rssi": 1.0}, "gnb": {"max_ue": 32}}));
    }

    #[test]
    fn overrides_apply_and_validate() {
        let base = scenarios::attack_1mue(1);
        let c = apply_overrides(&base, &json!({"params": {"t1": 10}, "gnb": {"max_ue": 32}})).unwrap();
        assert_eq!(c.params.t1, 10);
        assert_eq!(c.gnb.max_ue, 32);
        assert_eq!(c.params.eps_rssi, base.params.eps_rssi);
        assert!(apply_overrides(&base, &json!({"params": {"nope": 1}})).is_err());
        assert!(apply_overrides(&base, &json!({"params": {"t2": 3.0}})).is_err());
    }

    #[test]
    fn sweep_groups_by_cell() {
        let grid = ParamGrid::product(&[("params.t1", vec![json!(3), json!(10)])]);
        let bases = [scenarios::attack_1mue(0), scenarios::benign_only(0)];
        let rows = sweep(&bases, &grid, &[1, 2, 3]).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.summary.runs, 6);
            assert_eq!(r.summary.tn, 3);
        }
        assert_eq!(rows[0].summary.tp, 3);
        assert_eq!(rows[1].summary.fn_, 3);
        let mut buf = Vec::new();
        write_rows_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("label,overrides,runs,tp,fp,tn,fn,accuracy"));
    }

    #[test]
    fn empty_grid_is_rejected() {
        let r = sweep(&[scenarios::benign_only(0)], &ParamGrid::default(), &[1]);
        assert!(matches!(r, Err(HarnessError::EmptyGrid)));
    }

    #[test]
    fn batch_matches_sequential() {
        let cfgs: Vec<_> = (0..6).map(scenarios::attack_2mue).collect();
        let par = run_batch(&cfgs).unwrap();
        let seq: Vec<_> = cfgs.iter().map(|c| run_one(c).unwrap()).collect();
        assert_eq!(par, seq);
    }
}
