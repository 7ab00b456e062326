//! Connectivity and derivative-bound audit of every builtin scenario.

use dgvf::scenario::{audit, load, Overrides, BUILTINS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for b in BUILTINS {
        let report = audit(&load(b.name, &Overrides::default())?);
        println!("{} connected = {} ({} component(s))", b.name, report.connected, report.components);
        for c in &report.curves {
            println!(
                "  {} {} |d/dw| <= {:.3} |d2/dw2| <= {:.3}",
                if c.pass { "ok " } else { "BAD" },
                c.label,
                c.bounds.first,
                c.bounds.second
            );
        }
    }
    Ok(())
}
