//! Graph Laplacian spectra and consensus residuals for the topologies the
//! scenarios use.

use dgvf::graph::{coordination_residuals, OffsetTable, Snapshot, Topology};

fn lambda_2(t: &Topology) -> f64 {
    let mut eig: Vec<f64> = t.laplacian().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig[1]
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, t) in [
        ("ring(10)", Topology::ring(10)),
        ("complete(10)", Topology::complete(10)),
        ("ring(82)", Topology::ring(82)),
        ("ring:4(82)", Topology::circulant(82, 4)),
    ] {
        println!("{name:<13} lambda_2 = {:.4}", lambda_2(&t));
    }

    let topo = Topology::ring(4);
    let offsets = OffsetTable::new(vec![0.0; 4], vec![0.0, 1.0, 2.0, 3.0])?;
    let w1 = [0.0, 0.1, -0.1, 0.0];
    let w2 = [0.0, 1.0, 2.5, 3.0];
    let snap = Snapshot { w1: &w1, w2: &w2 };
    for i in 0..4 {
        let (c1, c2) = coordination_residuals(&topo, &offsets, &snap, i);
        println!("robot {} residuals ({c1:+.2}, {c2:+.2})", i + 1);
    }
    Ok(())
}
