//! Cyclic-shift partitions of masked index sets, checked for coverage,
//! disjointness and transversality.

use mwdml::partition::{build_transversal_partition, verify_partition, write_partition_csv};
use mwdml::{Mask, Shape};

fn main() -> mwdml::Result<()> {
    let shape = Shape::new(vec![3, 5])?;
    for e in shape.masks() {
        let p = build_transversal_partition(&shape, e)?;
        let report = verify_partition(&p);
        println!("mask {e}: {} groups of {} ({report:?})", p.groups.len(), p.groups[0].len());
    }

    let p = build_transversal_partition(&shape, Mask::full(2))?;
    for (g, members) in p.groups.iter().enumerate().take(3) {
        let cells: Vec<String> = members.iter().map(|m| format!("{:?}", m.coords())).collect();
        println!("group {g}: {}", cells.join(" "));
    }
    write_partition_csv(&p, std::io::stdout().lock())?;
    Ok(())
}
