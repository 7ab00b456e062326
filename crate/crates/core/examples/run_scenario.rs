//! Run a builtin scenario and write the three log files.
//!
//! `cargo run --example run_scenario -- sim2-enclose out/sim2`

use std::path::PathBuf;

use dgvf::cli::write_outputs;
use dgvf::engine::run;
use dgvf::scenario::{load, Overrides};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "sim2-enclose".into());
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "out".into()));
    let loaded = load(&name, &Overrides::default())?;
    let output = run(&loaded.scenario)?;
    write_outputs(&dir, &loaded, &output)?;
    let s = &output.summary;
    println!("{}: {} robots, {} steps, t = {}", s.scenario, s.robots, s.steps, s.final_time);
    println!("final max |phi|      {:.3e}", s.final_max_phi_norm);
    println!("final max coord err  {:.3e}", s.final_max_coord_err);
    println!("logs in {}", dir.display());
    Ok(())
}
