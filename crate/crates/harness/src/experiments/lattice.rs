#![allow(unused)]
use lrm_core::calibrate::CalibrationResult;

use crate::config::Config;
use crate::experiments::{RunOpts, RunOutput};
use crate::report::Reporter;
use crate::Result;

pub fn run_ising(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    todo!()
}
pub fn run_potts(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    todo!()
}
pub fn write_ising_datasets(cfg: &Config, rep: &mut Reporter) -> Result<()> {
    todo!()
}
pub fn write_potts_dataset(cfg: &Config, rep: &mut Reporter) -> Result<()> {
    todo!()
}
pub fn ising_calibration_curve(cfg: &Config) -> Result<CalibrationResult> {
    todo!()
}
pub fn potts_calibration_curve(cfg: &Config) -> Result<CalibrationResult> {
    todo!()
}
