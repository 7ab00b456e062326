//! Parse a curve component, differentiate it symbolically and compare with a
//! finite difference.

use dgvf::expr::Expr;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e = Expr::parse("10*sin(w)*atan(w)")?;
    let d = e.differentiate();
    println!("f(w)  = {e}");
    println!("f'(w) = {d}");
    let h = 1e-5;
    for w in [-2.0, 0.0, 0.5, 3.0] {
        let fd = (e.eval(w + h)? - e.eval(w - h)?) / (2.0 * h);
        println!("w = {w:5.2}  f' = {:+.8}  fd = {fd:+.8}", d.eval(w)?);
    }
    Ok(())
}
