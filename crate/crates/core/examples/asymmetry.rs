//! Prints the work-optimal asymmetry of the oscillator engine for a few cycle times.

use otto_core::config::EngineConfig;
use otto_core::optimize::{optimize, OptimizerSettings, SweepMode};

fn main() -> Result<(), otto_core::error::OttoError> {
    let template = EngineConfig::harmonic(2.0, 0.1, 0.5);
    let taus = [2.0, 4.0, 6.0, 8.0];
    let run = optimize(&template, &taus, SweepMode::Perfect, &OptimizerSettings::default())?;
    println!("tau_u  r_star  work_output");
    for row in run.series.rows.iter().flatten() {
        if let Some(best) = row.work {
            println!("{:5.1}  {:.4}  {:.6}", row.tau_u, best.r_u, best.value);
        }
    }
    Ok(())
}
