use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use handmotion::metrics::{sig6, EvalReport};
use handmotion::nets::ReprMode;
use handmotion::training::{Method, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::config::{self, invalid, RunConfig};
use crate::train::{headline, load_dataset, run_into};

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[arg(long)]
    data: PathBuf,
    /// TOML grid; the full default grid when omitted.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Seeds per cell, counting up from the base seed.
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Axes of the grid plus the training settings shared by every cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub methods: Vec<Method>,
    pub seq_lens: Vec<usize>,
    pub reprs: Vec<ReprMode>,
    pub aug: Vec<bool>,
    pub sn: Vec<bool>,
    pub train: TrainConfig,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            methods: vec![Method::PosePrior, Method::TemporalSmoother, Method::MotionModel],
            seq_lens: vec![1, 16, 32, 64],
            reprs: vec![ReprMode::TwoHalfD, ReprMode::ThreeD],
            aug: vec![true, false],
            sn: vec![false, true],
            train: TrainConfig::default(),
        }
    }
}

/// One grid point. Axes that a method ignores are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: Method,
    pub seq_len: usize,
    pub repr: ReprMode,
    pub aug: Option<bool>,
    pub sn: Option<bool>,
}

fn on_off(v: Option<bool>) -> &'static str {
    match v {
        Some(true) => "on",
        Some(false) => "off",
        None => "n/a",
    }
}

impl Cell {
    /// Directory-safe cell name.
    pub fn key(&self) -> String {
        let tag = |v| match v {
            None => "na",
            v => on_off(v),
        };
        format!(
            "{}_s{}_{}_aug-{}_sn-{}",
            self.method.name(),
            self.seq_len,
            self.repr.name(),
            tag(self.aug),
            tag(self.sn)
        )
    }

    fn config(&self, base: &TrainConfig, seed: u64) -> TrainConfig {
        let mut t = base.clone();
        t.method = self.method;
        t.seq_len = self.seq_len;
        t.repr = self.repr;
        t.augment = self.aug.unwrap_or(base.augment);
        t.spectral_norm = self.sn.unwrap_or(base.spectral_norm);
        t.seed = seed;
        t
    }
}

impl Grid {
    /// Expands the axes. The pose prior always sees single frames, and the
    /// smoother needs two frames and has no discriminator to augment or normalize.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out: Vec<Cell> = Vec::new();
        for &method in &self.methods {
            for &s in &self.seq_lens {
                for &repr in &self.reprs {
                    for &aug in &self.aug {
                        for &sn in &self.sn {
                            let cell = match method {
                                Method::PosePrior => Cell { method, seq_len: 1, repr, aug: Some(aug), sn: Some(sn) },
                                Method::TemporalSmoother if s < 2 => continue,
                                Method::TemporalSmoother | Method::None => {
                                    Cell { method, seq_len: s, repr, aug: None, sn: None }
                                }
                                Method::MotionModel => Cell { method, seq_len: s, repr, aug: Some(aug), sn: Some(sn) },
                            };
                            if !out.contains(&cell) {
                                out.push(cell);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

pub const TABLE_COLUMNS: [&str; 8] = ["method", "S", "repr", "aug", "sn", "mpjpe_abs_mm", "mpjpe_rootrel_mm", "seeds"];

/// Headline of a finished cell, or `None` when it must be (re)run.
fn finished(dir: &Path) -> Option<[f64; 4]> {
    let text = fs::read_to_string(dir.join("report.txt")).ok()?;
    EvalReport::parse_headline(&text).ok()
}

pub fn run(a: AblateArgs) -> Result<()> {
    if a.repeats == 0 {
        return Err(invalid("--repeats must be at least 1"));
    }
    let grid: Grid = match &a.grid {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Grid::default(),
    };
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(invalid("the grid has no runnable cells"));
    }
    for c in &cells {
        c.config(&grid.train, grid.train.seed).validate()?;
    }
    let dataset = load_dataset(&a.data)?;
    config::write(&a.out.join("grid.toml"), toml::to_string(&grid)?)?;
    let seeds: Vec<u64> = (0..a.repeats as u64).map(|r| grid.train.seed + r).collect();

    let mut cache = HashMap::new();
    let mut table = TABLE_COLUMNS.join(",");
    table.push('\n');
    for cell in &cells {
        let mut sums = [0.0; 2];
        for &seed in &seeds {
            let dir = a.out.join("cells").join(cell.key()).join(format!("seed_{seed}"));
            let h = match finished(&dir) {
                Some(h) => {
                    log::info!("{} seed {seed}: reusing finished run", cell.key());
                    h
                }
                None => {
                    log::info!("{} seed {seed}", cell.key());
                    let cfg = RunConfig {
                        data: Some(a.data.clone()),
                        train: cell.config(&grid.train, seed),
                        ..RunConfig::default()
                    };
                    let o = run_into(&dir, &dataset, &cfg, &mut cache)?;
                    print!("{} seed {seed}\n{}", cell.key(), headline(&o));
                    [o.report.mpjpe_abs_mm, o.report.mpjpe_rootrel_mm, 0.0, 0.0]
                }
            };
            sums[0] += h[0];
            sums[1] += h[1];
        }
        let n = seeds.len() as f64;
        let seed_list: Vec<String> = seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{},{}",
            cell.method.name(),
            cell.seq_len,
            cell.repr.name(),
            on_off(cell.aug),
            on_off(cell.sn),
            sig6(sums[0] / n),
            sig6(sums[1] / n),
            seed_list.join(" ")
        );
    }
    config::write(&a.out.join("table.csv"), &table)?;
    print!("{table}");
    Ok(())
}
