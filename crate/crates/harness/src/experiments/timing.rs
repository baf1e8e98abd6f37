#![allow(unused)]
use lrm_core::calibrate::CalibrationResult;

use crate::config::Config;
use crate::experiments::{RunOpts, RunOutput};
use crate::report::Reporter;
use crate::Result;

pub fn run(cfg: &Config, rep: &mut Reporter, opts: RunOpts) -> Result<RunOutput> {
    todo!()
}
