//! Draws a two-way PLR array and shows that growing the lattice extends the
//! same draw instead of replacing it.

use mwdml::se_array::{simulate, PlrDesign};
use mwdml::{MultiIndex, Shape};

fn main() -> mwdml::Result<()> {
    let design = PlrDesign::default();
    let small = simulate(&design.spec(Shape::new(vec![3, 4])?)?, 7)?;
    let large = simulate(&design.spec(Shape::new(vec![6, 8])?)?, 7)?;

    println!("fields: {:?}", small.fields());
    for lin in 0..small.len().min(4) {
        println!("{:?}", small.record(lin));
    }
    let corner = MultiIndex::new(vec![2, 3]);
    println!(
        "cell (2,3) in 3x4: y = {:.6}; in 6x8: y = {:.6}",
        small.record_at(&corner)[0],
        large.record_at(&corner)[0]
    );

    let mut csv = Vec::new();
    small.write_csv(&mut csv)?;
    print!("{}", String::from_utf8_lossy(&csv).lines().take(3).collect::<Vec<_>>().join("\n"));
    println!("\n... {} rows", small.len());
    Ok(())
}
