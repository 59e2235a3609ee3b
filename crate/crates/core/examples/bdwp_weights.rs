//! Forward and backward sparse weights derived from one master matrix.
use nmsat::nm::{bdwp_bp, bdwp_ff, unpack_nm, DenseMatrix, NmConfig};

fn show(label: &str, m: &DenseMatrix) {
    println!("{label}:");
    for r in 0..m.rows() {
        println!("  {:?}", m.row(r));
    }
}

fn main() -> nmsat::Result<()> {
    let nm = NmConfig::new(1, 2)?;
    // fan_in x fan_out
    let w = DenseMatrix::from_rows(&[&[1.0, -3.0], &[9.0, 2.0]])?;
    show("master", &w);
    show(
        "FF weights (pruned along fan-in)",
        &unpack_nm(&bdwp_ff(&w, nm)?),
    );
    show(
        "BP weights, transposed (pruned along fan-out)",
        &unpack_nm(&bdwp_bp(&w, nm)?),
    );
    Ok(())
}
