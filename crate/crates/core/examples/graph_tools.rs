//! Random graphs, spanning trees, incidence matrices and the MAOM
//! proximal matrix.
//!
//! cargo run --example graph_tools

use decentral_el::graph::matrix_rank;
use decentral_el::maom::ProxMatrix;
use decentral_el::gen_erdos_renyi;

fn main() -> decentral_el::Result<()> {
    let g = gen_erdos_renyi(8, 0.4, 3)?;
    println!("G(8, 0.4): {} edges, degrees {:?}", g.edge_count(), g.degrees());
    print!("{}", g.to_edge_list());

    let tree = g.spanning_tree()?;
    let inc = tree.incidence();
    println!("spanning tree: {} edges, rank(A) = {}", tree.edge_count(), matrix_rank(&inc.a));
    print!("{}", tree.to_edge_list());

    for rho in [1.0, 100.0] {
        println!("rho = {rho}: min eig(D - rho L) = {:.4}", ProxMatrix::new(&g, rho).min_eigenvalue(&g));
    }
    Ok(())
}
