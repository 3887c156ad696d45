use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use handmotion::dataset::Dataset;
use handmotion::metrics::{sig6, EvalReport};
use handmotion::numcore::Checkpoint;
use handmotion::training::run::{check_compatible, test_videos};
use handmotion::training::{evaluate, model_from_checkpoint, EvalOptions};

use crate::config::{self, invalid};
use crate::train::{load_dataset, write_report, StModeArg};

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the reports.
    #[arg(long)]
    out: PathBuf,
    /// Second checkpoint; writes `delta.csv` with its improvement over `--ckpt`.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "per_sequence")]
    st_mode: StModeArg,
    /// Diagnostics: frames with failed root refinement use the true root depth.
    #[arg(long)]
    gt_root_on_failure: bool,
}

fn eval_checkpoint(path: &Path, dataset: &Dataset, opts: &EvalOptions) -> Result<EvalReport> {
    let ckpt = Checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    let mut model = model_from_checkpoint(&ckpt).with_context(|| format!("checkpoint {}", path.display()))?;
    check_compatible(&model, dataset)?;
    let tests = test_videos(dataset);
    if tests.is_empty() {
        return Err(invalid("dataset has no test videos"));
    }
    Ok(evaluate(&mut model, &tests, opts)?)
}

pub const DELTA_COLUMNS: [&str; 5] = ["metric", "ckpt_mm", "compare_mm", "improvement_mm", "improvement_pct"];

/// Signed improvement of `other` over `base` per headline metric; positive
/// means `other` has the lower error.
pub fn delta_csv(base: &EvalReport, other: &EvalReport) -> String {
    let rows = [
        ("mpjpe_abs_mm", base.mpjpe_abs_mm, other.mpjpe_abs_mm),
        ("mpjpe_rootrel_mm", base.mpjpe_rootrel_mm, other.mpjpe_rootrel_mm),
        ("epe_st_aligned_mm", base.epe_st_aligned_mm, other.epe_st_aligned_mm),
        ("epe_procrustes_mm", base.epe_procrustes_mm, other.epe_procrustes_mm),
    ];
    let mut out = DELTA_COLUMNS.join(",");
    out.push('\n');
    for (name, b, o) in rows {
        let pct = if b > 0.0 { 100.0 * (b - o) / b } else { 0.0 };
        let _ = writeln!(out, "{name},{},{},{},{}", sig6(b), sig6(o), sig6(b - o), sig6(pct));
    }
    out
}

pub fn run(a: EvalArgs) -> Result<()> {
    let dataset = load_dataset(&a.data)?;
    let opts = EvalOptions {
        st_mode: handmotion::training::StModeConfig::from(a.st_mode).into(),
        gt_root_on_failure: a.gt_root_on_failure,
    };
    let report = eval_checkpoint(&a.ckpt, &dataset, &opts)?;
    write_report(&a.out, "report", &report)?;
    print!("{}", report.to_text());
    if let Some(other) = &a.compare {
        let second = eval_checkpoint(other, &dataset, &opts)?;
        write_report(&a.out, "compare_report", &second)?;
        let delta = delta_csv(&report, &second);
        config::write(&a.out.join("delta.csv"), &delta)?;
        print!("{delta}");
    }
    Ok(())
}
