//! Backbone, weight-sharing, strategy and variant comparison grids.

use std::fmt::Write as _;
use std::path::Path;

use egopose_core::metrics::EvalReport;
use egopose_model::{Pose2DConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, Strategy};
use crate::data::Datasets;
use crate::report::{write_json, RunReport};
use crate::run::{aggregate_reports, create_dir, train_runs};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationGrid {
    pub backbones: Vec<u32>,
    pub weight_sharing: Vec<bool>,
    pub strategies: Vec<Strategy>,
    pub variants: Vec<Variant>,
}

impl Default for AblationGrid {
    fn default() -> Self {
        Self {
            backbones: vec![18, 34, 50, 101],
            weight_sharing: vec![true, false],
            strategies: Strategy::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub backbone: u32,
    pub weight_sharing: bool,
    pub strategy: Strategy,
    pub variant: Variant,
}

impl Cell {
    pub fn name(&self) -> String {
        format!(
            "{}-r{}-{}-{}",
            self.variant.name(),
            self.backbone,
            if self.weight_sharing { "ws" } else { "nows" },
            self.strategy.name()
        )
    }

    pub fn apply(&self, base: &Experiment) -> Experiment {
        let mut exp = base.clone();
        exp.model.pose2d = Pose2DConfig {
            backbone_depth: self.backbone,
            weight_sharing: self.weight_sharing,
            variant: self.variant,
            ..exp.model.pose2d
        };
        exp.train.strategy = self.strategy;
        exp
    }
}

impl AblationGrid {
    /// The grid's cells. Disabling weight sharing only means something for
    /// the stereo-shared variant, so other variants appear with sharing on only.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &variant in &self.variants {
            for &backbone in &self.backbones {
                for &weight_sharing in &self.weight_sharing {
                    if !weight_sharing && variant != Variant::StereoShared {
                        continue;
                    }
                    for &strategy in &self.strategies {
                        cells.push(Cell {
                            backbone,
                            weight_sharing,
                            strategy,
                            variant,
                        });
                    }
                }
            }
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell: Cell,
    pub reports: Vec<RunReport>,
    pub eval: Option<EvalReport>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn encoder_params(&self) -> Option<usize> {
        self.reports.first().map(|r| r.encoder_params)
    }
}

/// Runs every cell with the base experiment's seed list. A failing cell is
/// recorded and the suite moves on. With `out`, each cell writes its runs
/// under `<out>/<cell name>` and the suite writes `ablation.json` / `ablation.txt`.
pub fn ablation_suite(root: &Path, base: &Experiment, grid: &AblationGrid, out: Option<&Path>) -> Result<Vec<CellResult>> {
    let mut results = Vec::new();
    for cell in grid.cells() {
        let exp = cell.apply(base);
        log::info!("ablation cell {}", cell.name());
        let outcome = run_cell(root, &exp, out.map(|o| o.join(cell.name())).as_deref());
        results.push(match outcome {
            Ok((reports, eval)) => CellResult {
                cell,
                reports,
                eval: Some(eval),
                error: None,
            },
            Err(e) => {
                log::warn!("ablation cell {} failed: {e}", cell.name());
                CellResult {
                    cell,
                    reports: Vec::new(),
                    eval: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    if let Some(out) = out {
        create_dir(out)?;
        write_json(&out.join("ablation.json"), &results)?;
        std::fs::write(out.join("ablation.txt"), ablation_table(&results)).map_err(|e| crate::TrainError::Io {
            path: out.join("ablation.txt").display().to_string(),
            source: e,
        })?;
    }
    Ok(results)
}

fn run_cell(root: &Path, exp: &Experiment, out: Option<&Path>) -> Result<(Vec<RunReport>, EvalReport)> {
    exp.validate()?;
    let data = Datasets::open(root, exp)?;
    match out {
        Some(dir) => train_runs(&data, exp, dir),
        None => {
            let reports = exp
                .train
                .run_seeds()
                .into_iter()
                .map(|seed| crate::run::train(&data, exp, seed).map(|t| t.report))
                .collect::<Result<Vec<_>>>()?;
            let eval = aggregate_reports(&reports)?;
            Ok((reports, eval))
        }
    }
}

/// One row per cell: mean (σ) over seeds of MPJPE and PA-MPJPE in mm.
pub fn ablation_table(results: &[CellResult]) -> String {
    let mut s = format!(
        "{:<14} {:>8} {:>7} {:>9} {:>12} {:>16} {:>16}\n",
        "variant", "backbone", "sharing", "strategy", "enc. params", "MPJPE", "PA-MPJPE"
    );
    for r in results {
        let c = &r.cell;
        let _ = write!(
            s,
            "{:<14} {:>8} {:>7} {:>9} {:>12}",
            c.variant.name(),
            format!("ResNet{}", c.backbone),
            if c.weight_sharing { "yes" } else { "no" },
            c.strategy.name(),
            r.encoder_params().map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
        );
        match (&r.eval, &r.error) {
            (Some(e), _) => {
                let _ = writeln!(s, " {:>16} {:>16}", e.overall.mpjpe.to_string(), e.overall.pa_mpjpe.to_string());
            }
            (None, err) => {
                let _ = writeln!(s, "  failed: {}", err.as_deref().unwrap_or("unknown error"));
            }
        }
    }
    s
}
