//! Heading control of a unicycle toward a fixed field direction: the heading
//! error decays as `exp(-k_theta t)`.

use dgvf::robot::{unicycle_controls, wrap_angle, SaturationLimits};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let k_theta = 2.0;
    let heading: f64 = 1.2;
    let field = [heading.cos(), heading.sin(), 0.5, 0.0, 0.0];
    let limits = SaturationLimits { v: Some(0.2), uz: Some(0.2), utheta: Some(3.0) };
    let dt = 1e-2;
    let mut theta = wrap_angle(heading + 3.0);
    for step in 0..=300 {
        let u = unicycle_controls(&field, theta, k_theta, &limits, None)?;
        if step % 50 == 0 {
            println!(
                "t = {:4.1}  error = {:+.5}  v = {:.2}  u_z = {:.2}  u_theta = {:+.3}",
                step as f64 * dt,
                wrap_angle(heading - theta),
                u.v,
                u.u_z,
                u.u_theta
            );
        }
        theta = wrap_angle(theta + dt * u.u_theta);
    }
    Ok(())
}
