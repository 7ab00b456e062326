#![allow(dead_code)]

use dgvf::expr::{BinaryOp, Expr, UnaryOp};
use rand::Rng;

/// Random tree of depth at most `depth` over the full node set.
pub fn random_expr<R: Rng>(rng: &mut R, depth: usize) -> Expr {
    if depth <= 1 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.5) {
            Expr::Var
        } else {
            // two decimals keep printed constants short
            Expr::Const(rng.gen_range(-300..=300) as f64 / 100.0)
        };
    }
    let unary = |op, rng: &mut R| Expr::Unary(op, Box::new(random_expr(rng, depth - 1)));
    let binary = |op, rng: &mut R| {
        let a = random_expr(rng, depth - 1);
        let b = random_expr(rng, depth - 1);
        Expr::Binary(op, Box::new(a), Box::new(b))
    };
    match rng.gen_range(0..9) {
        0 => unary(UnaryOp::Neg, rng),
        1 => unary(UnaryOp::Sin, rng),
        2 => unary(UnaryOp::Cos, rng),
        3 => unary(UnaryOp::Atan, rng),
        4 => binary(BinaryOp::Add, rng),
        5 => binary(BinaryOp::Sub, rng),
        6 => binary(BinaryOp::Mul, rng),
        7 => binary(BinaryOp::Div, rng),
        _ => {
            let base = random_expr(rng, depth - 1);
            Expr::Pow(Box::new(base), rng.gen_range(0..=4))
        }
    }
}

/// Fourth-order central difference.
pub fn central_difference(f: impl Fn(f64) -> Option<f64>, x: f64, h: f64) -> Option<f64> {
    let (a, b, c, d) = (f(x - 2.0 * h)?, f(x - h)?, f(x + h)?, f(x + 2.0 * h)?);
    Some((a - 8.0 * b + 8.0 * c - d) / (12.0 * h))
}

/// Finite-difference derivative where `f` is smooth at `x`: two step sizes
/// must agree, otherwise `x` counts as near a singularity and `None` is
/// returned.
pub fn smooth_derivative(f: impl Fn(f64) -> Option<f64> + Copy, x: f64) -> Option<f64> {
    let h = 1e-3 * x.abs().max(1.0);
    let coarse = central_difference(f, x, h)?;
    let fine = central_difference(f, x, h / 2.0)?;
    let scale = coarse.abs().max(1.0);
    let smooth = coarse.is_finite() && fine.is_finite() && (coarse - fine).abs() <= 1e-8 * scale;
    (smooth && scale < 1e6).then_some(fine)
}

/// `|a - b| <= tol * max(1, |b|)`.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
