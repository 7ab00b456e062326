//! Evaluate the navigation field on a circle-enclosing manifold through both
//! the wedge product and the expanded formula.

use dgvf::field::{navigation_field, navigation_field_closed_form, FieldGains, GeneralizedState, PropagationSpeeds};
use dgvf::paths::{CompositeManifold, ParametricCurve};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let f = ParametricCurve::parse(&["30*cos(w)", "30*sin(w)", "0"])?;
    let g = ParametricCurve::parse(&["10*sin(w)*atan(w)", "0", "10*cos(w)"])?;
    let manifold = CompositeManifold::parametric(f, g)?;
    let gains = FieldGains::new(vec![0.2; 3], 40.0, 40.0)?;
    let speeds = PropagationSpeeds::new(3.0, 3.0);

    for xi in [
        GeneralizedState::new(vec![40.0, 0.0, 10.0], 0.0, 0.0),
        GeneralizedState::new(vec![0.0, 0.0, 0.0], 1.0, 2.0),
    ] {
        let wedge = navigation_field(&manifold, &xi, &gains, &speeds, 0.0)?;
        let closed = navigation_field_closed_form(&manifold, &xi, &gains, &speeds, 0.0)?;
        println!("phi    {:?}", manifold.phi(&xi, 0.0)?);
        println!("wedge  {wedge:.6?}");
        println!("closed {closed:.6?}");
    }
    Ok(())
}
