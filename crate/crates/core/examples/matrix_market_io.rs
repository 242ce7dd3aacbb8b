//! Exports the `J^2` and Hamiltonian blocks of a spin chain as Matrix
//! Market files plus a manifest, then reads them back.
//!
//! ```text
//! cargo run --release --example matrix_market_io -- /tmp/chain6
//! ```

use std::path::PathBuf;

use nucsolve::manifest::BlockManifest;
use nucsolve::spin::SpinChain;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("chain6"));
    let chain = SpinChain::uniform(6, 1.0, false);
    let (jsq, h) = (chain.jsq()?, chain.hamiltonian()?);
    let manifest = BlockManifest::export(&dir, &jsq, &h)?;
    println!("wrote {} blocks to {}", manifest.blocks.len(), dir.display());
    for e in &manifest.blocks {
        println!("  {:<8} 2M = {:>3}  dim {:>3}  {} {}", e.label, e.two_m, e.dim, e.jsq, e.hamiltonian);
    }

    let (jsq_back, h_back) = BlockManifest::load(&dir.join("manifest.json"))?.read_operators(&dir)?;
    let same = jsq.blocks().iter().zip(jsq_back.blocks()).all(|(a, b)| a.1.to_dense() == b.1.to_dense())
        && h.blocks().iter().zip(h_back.blocks()).all(|(a, b)| a.1.to_dense() == b.1.to_dense());
    println!("round trip exact: {same}");
    Ok(())
}
