//! Runs every finite-difference gradient check and prints one line each.
//!
//! ```text
//! cargo run --release -p vtcc --example gradcheck -- [seed]
//! ```

use std::time::Instant;

fn main() -> Result<(), vtcc::VtccError> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let start = Instant::now();
    let checks = vtcc::gradcheck::full_suite(seed)?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed, {:.1?}", checks.len(), start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
    Ok(())
}
