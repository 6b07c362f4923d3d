//! Named evaluation suites.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::aging::{aging_curve, AgingCurve};
use super::outcome::HarnessError;
use super::scenarios::{self, LabPosition, MUE_P0, MUE_P9, VUE_POSITIONS};
use super::sweep::{apply_overrides, sweep, write_rows_csv, ParamGrid, SweepRow};
use crate::model::SimTime;
use crate::ransim::{run_scenario, sample_fingerprint, RadioModel, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Fig7,
    Fig9,
    Table4,
    Table5,
    Table6,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Fig7, Preset::Fig9, Preset::Table4, Preset::Table5, Preset::Table6];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Fig7 => "fig7",
            Preset::Fig9 => "fig9",
            Preset::Table4 => "table4",
            Preset::Table5 => "table5",
            Preset::Table6 => "table6",
        }
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown preset '{s}' (expected fig7, fig9, table4, table5 or table6)"))
    }
}

/// Measured vs. target fingerprint statistics at one lab position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub label: String,
    pub target_ta: f64,
    pub target_rssi: f64,
    pub target_sigma: f64,
    pub mean_ta: f64,
    pub mean_rssi: f64,
    pub sigma_rssi: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresetReport {
    pub preset: Preset,
    pub seeds: Vec<u64>,
    pub rows: Vec<SweepRow>,
    pub aging: Vec<AgingCurve>,
    pub calibration: Vec<CalibrationRow>,
}

/// The seven fine-tuning parameter sets.
pub fn table5_grid() -> ParamGrid {
    let sets = [
        ("E1", 4.0, 1.0, 3, 0.25),
        ("E2", 1.0, 1.0, 3, 0.25),
        ("E3", 10.0, 1.0, 3, 0.25),
        ("E4", 4.0, 1.0, 1, 0.25),
        ("E5", 4.0, 1.0, 10, 0.25),
        ("E6", 4.0, 1.0, 1, 1.0),
        ("E7", 4.0, 1.0, 10, 1.0),
    ];
    ParamGrid::labelled(
        sets.iter()
            .map(|&(label, eps_rssi, eps_ta, t1, t2)| {
                (label.to_string(), json!({"params": {"eps_rssi": eps_rssi, "eps_ta": eps_ta, "t1": t1, "t2": t2}}))
            })
            .collect(),
    )
}

pub const FIG7_MAX_UE: [usize; 4] = [16, 32, 48, 64];
pub const FIG9_DELTAS_MS: [u64; 4] = [100, 250, 500, 1000];

fn single(label: &str) -> ParamGrid {
    ParamGrid::labelled(vec![(label.to_string(), json!({}))])
}

pub fn seeds(first: u64, runs: usize) -> Vec<u64> {
    (first..first + runs as u64).collect()
}

pub fn run_preset(preset: Preset, seeds: &[u64]) -> Result<PresetReport, HarnessError> {
    let mut report = PresetReport { preset, seeds: seeds.to_vec(), rows: Vec::new(), aging: Vec::new(), calibration: Vec::new() };
    match preset {
        Preset::Fig7 => {
            let grid = ParamGrid::product(&[("gnb.max_ue", FIG7_MAX_UE.iter().map(|&n| json!(n)).collect())]);
            report.rows = sweep(&[scenarios::depletion(0, 64)], &grid, seeds)?;
        }
        Preset::Fig9 => {
            let grid = ParamGrid::product(&[("params.delta_ms", FIG9_DELTAS_MS.iter().map(|&d| json!(d)).collect())]);
            let base = scenarios::aging(0, 500);
            report.rows = sweep(std::slice::from_ref(&base), &grid, seeds)?;
            let seed = seeds.first().copied().unwrap_or(0);
            for cell in &grid.cells {
                let cfg = ScenarioConfig { seed, ..apply_overrides(&base, &cell.overrides)? };
                report.aging.extend(aging_curve(&run_scenario(&cfg)?, &cfg));
            }
        }
        Preset::Table4 => {
            let benign = scenarios::benign_only(0);
            let suites: [(&str, ScenarioConfig); 3] = [
                ("1 static VUE & 1 static MUE", scenarios::attack_1mue(0)),
                ("1 static VUE & 2 static MUE", scenarios::attack_2mue(0)),
                ("1 static VUE & 1 mobile MUE", scenarios::attack_mobile_mue(0)),
            ];
            for (label, attack) in suites {
                report.rows.extend(sweep(&[attack, benign.clone()], &single(label), seeds)?);
            }
            let victims: Vec<ScenarioConfig> =
                VUE_POSITIONS[..5].iter().map(|p| scenarios::victim_at_position(0, *p)).collect();
            report.rows.extend(sweep(&victims, &single("1 mobile VUE & 2 static MUE"), seeds)?);
        }
        Preset::Table5 => {
            report.rows = sweep(&[scenarios::attack_1mue(0), scenarios::benign_burst(0)], &table5_grid(), seeds)?;
        }
        Preset::Table6 => {
            let seed = seeds.first().copied().unwrap_or(0);
            let positions: Vec<LabPosition> = [MUE_P0, MUE_P9].into_iter().chain(VUE_POSITIONS).collect();
            report.calibration = positions.iter().map(|p| calibrate(p, seed, 1000)).collect();
        }
    }
    Ok(report)
}

/// Sample `n` fingerprints at a static lab position using its measured spread.
pub fn calibrate(pos: &LabPosition, seed: u64, n: usize) -> CalibrationRow {
    let radio = RadioModel::default();
    let ue = pos.ue(1, scenarios::periodic_attach(0, 1, 1, 0));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples: Vec<_> = (0..n).map(|_| sample_fingerprint(&radio, &ue, [0.0, 0.0], SimTime::ZERO, &mut rng)).collect();
    let mean_ta = samples.iter().map(|f| f64::from(f.ta)).sum::<f64>() / n as f64;
    let mean_rssi = samples.iter().map(|f| f.rssi).sum::<f64>() / n as f64;
    let var = samples.iter().map(|f| (f.rssi - mean_rssi).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    CalibrationRow {
        label: pos.label.to_string(),
        target_ta: pos.ta_mean,
        target_rssi: pos.rssi_mean,
        target_sigma: pos.rssi_sigma_db,
        mean_ta,
        mean_rssi,
        sigma_rssi: var.sqrt(),
        samples: n,
    }
}

/// One threshold of a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> SuiteCheck {
    SuiteCheck { name: name.into(), passed, detail }
}

#[derive(Serialize)]
struct AgingCsvRow {
    delta_ms: u64,
    t_ms: u64,
    tau_ms: u64,
    match_count: u32,
}

impl PresetReport {
    /// Writes `<preset>_summary.csv`, `<preset>.json` and, where relevant,
    /// `<preset>_aging.csv` / `<preset>_calibration.csv`.
    pub fn write_outputs(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let name = self.preset.name();
        let mut written = Vec::new();
        let to_io = |e: csv::Error| io::Error::other(e);

        if !self.rows.is_empty() {
            let p = dir.join(format!("{name}_summary.csv"));
            write_rows_csv(&self.rows, fs::File::create(&p)?).map_err(to_io)?;
            written.push(p);
        }
        if !self.aging.is_empty() {
            let p = dir.join(format!("{name}_aging.csv"));
            let mut w = csv::Writer::from_path(&p).map_err(to_io)?;
            for c in &self.aging {
                for pt in &c.points {
                    w.serialize(AgingCsvRow { delta_ms: c.delta_ms, t_ms: pt.t_ms, tau_ms: pt.tau_ms, match_count: pt.match_count })
                        .map_err(to_io)?;
                }
                if let Some(t) = c.removed_at_ms {
                    w.serialize(AgingCsvRow { delta_ms: c.delta_ms, t_ms: t, tau_ms: 0, match_count: 0 }).map_err(to_io)?;
                }
            }
            w.flush()?;
            written.push(p);
        }
        if !self.calibration.is_empty() {
            let p = dir.join(format!("{name}_calibration.csv"));
            let mut w = csv::Writer::from_path(&p).map_err(to_io)?;
            for row in &self.calibration {
                w.serialize(row).map_err(to_io)?;
            }
            w.flush()?;
            written.push(p);
        }
        let p = dir.join(format!("{name}.json"));
        fs::write(&p, serde_json::to_vec_pretty(self).map_err(io::Error::from)?)?;
        written.push(p);
        Ok(written)
    }

    /// Thresholds for this suite; an empty report fails nothing.
    pub fn checks(&self) -> Vec<SuiteCheck> {
        let row = |label: &str| self.rows.iter().find(|r| r.label == label).map(|r| &r.summary);
        let fn_rate = |label: &str| row(label).and_then(|s| s.fn_rate).unwrap_or(0.0);
        match self.preset {
            Preset::Fig7 => {
                let pts: Vec<(f64, f64)> = self
                    .rows
                    .iter()
                    .filter_map(|r| Some((r.overrides.pointer("/gnb/max_ue")?.as_f64()?, &r.outcomes)))
                    .flat_map(|(n, outcomes)| outcomes.iter().filter_map(move |o| Some((n, o.depletion_time_ms? as f64))))
                    .collect();
                if pts.len() < 2 {
                    return vec![check("linear depletion", false, "not enough depleted runs".into())];
                }
                let (a, b, r2) = super::acceptance::ols(&pts);
                let period = 1000.0 / scenarios::ATTACK_RATE_HZ;
                vec![check(
                    "linear depletion",
                    r2 > 0.99 && a.abs() <= period,
                    format!("R²={r2:.5} slope={b:.2} intercept={a:.1}"),
                )]
            }
            Preset::Fig9 => {
                let mut out = Vec::new();
                for c in &self.aging {
                    let ok = c.is_non_decreasing() && c.removed_at_ms == Some(c.last_refresh_ms + c.final_tau_ms);
                    out.push(check(&format!("Δ={} monotone, expires after τ_final", c.delta_ms), ok, format!("τ_final={}", c.final_tau_ms)));
                }
                if let Some(c) = self.aging.iter().max_by_key(|c| c.delta_ms) {
                    out.push(check(
                        "largest Δ saturates",
                        c.saturated_at_ms.is_some_and(|t| c.attack_stop_ms.is_some_and(|s| t < s)),
                        format!("saturated at {:?}", c.saturated_at_ms),
                    ));
                }
                out
            }
            Preset::Table4 => self
                .rows
                .iter()
                .map(|r| {
                    let s = &r.summary;
                    check(&format!("{}: no false positives", r.label), s.fp == 0, format!("accuracy {:.3}", s.accuracy))
                })
                .collect(),
            Preset::Table5 => {
                let acc = |l: &str| row(l).map_or(0.0, |s| s.accuracy);
                let best = self.rows.iter().map(|r| r.summary.accuracy).fold(0.0, f64::max);
                let burst_fp = row("E6").and_then(|s| s.fp_rate).unwrap_or(0.0);
                vec![
                    check("E1 dominates accuracy", acc("E1") >= best, format!("E1 {:.3}, best {best:.3}", acc("E1"))),
                    check("E2 FN > E1 FN", fn_rate("E2") > fn_rate("E1"), format!("{:.2} vs {:.2}", fn_rate("E2"), fn_rate("E1"))),
                    check("E6 benign FP ≥ 0.5", burst_fp >= 0.5, format!("{burst_fp:.2}")),
                    check("E5 FN ≥ 0.5", fn_rate("E5") >= 0.5, format!("{:.2}", fn_rate("E5"))),
                    check("E7 FN ≥ 0.5", fn_rate("E7") >= 0.5, format!("{:.2}", fn_rate("E7"))),
                ]
            }
            Preset::Table6 => self
                .calibration
                .iter()
                .map(|r| {
                    let ok = (r.mean_rssi - r.target_rssi).abs() < 0.5
                        && (r.mean_ta - r.target_ta).abs() <= 0.55
                        && (r.sigma_rssi - r.target_sigma).abs() < 0.35;
                    check(
                        &format!("{} calibrated", r.label),
                        ok,
                        format!("TA {:.2}/{} RSSI {:.2}/{} σ {:.2}/{}", r.mean_ta, r.target_ta, r.mean_rssi, r.target_rssi, r.sigma_rssi, r.target_sigma),
                    )
                })
                .collect(),
        }
    }

    /// Compact machine-readable summary without per-run outcomes.
    pub fn summary_json(&self) -> Value {
        json!({
            "preset": self.preset.name(),
            "seeds": self.seeds.len(),
            "rows": self.rows.iter().map(|r| json!({"label": r.label, "summary": r.summary})).collect::<Vec<_>>(),
            "aging": self.aging.iter().map(|c| json!({
                "delta_ms": c.delta_ms,
                "final_tau_ms": c.final_tau_ms,
                "saturated_at_ms": c.saturated_at_ms,
                "removed_at_ms": c.removed_at_ms,
            })).collect::<Vec<_>>(),
            "calibration": self.calibration,
            "checks": self.checks(),
        })
    }
}
