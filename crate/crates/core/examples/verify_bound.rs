//! Full probe-and-compare pipeline over the bundled systems.
use localmix::bench::{bundled_system, verify_bound, BUNDLED_SYSTEMS};

fn main() -> localmix::Result<()> {
    for (name, _) in BUNDLED_SYSTEMS {
        let r = verify_bound(&bundled_system(name)?, None, None, 20_000, 0)?.report;
        println!("{name:<28} tau {:>6?}  phi {:.4}  {}", r.tau, r.phi, r.verdict);
    }
    Ok(())
}
