//! Evaluation report output: JSON plus a flat CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::metrics::EvalReport;

pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(report)?)?;
    Ok(())
}

pub fn read_report_json(path: &Path) -> Result<EvalReport> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

pub fn report_csv(report: &EvalReport) -> String {
    let mut out = String::from("view,psnr,ssim,depth_mae\n");
    for v in &report.views {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            v.view,
            v.psnr,
            v.ssim,
            v.depth_mae.map_or(String::new(), |d| d.to_string())
        );
    }
    let _ = writeln!(
        out,
        "mean,{},{},{}",
        report.mean_psnr,
        report.mean_ssim,
        report.mean_depth_mae.map_or(String::new(), |d| d.to_string())
    );
    out
}

pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    fs::write(path, report_csv(report))?;
    Ok(())
}
