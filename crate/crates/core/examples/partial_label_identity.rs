//! Uplift of a binary population from its group shares: with groups A
//! (always responds), B (responds only if treated) and C (never responds),
//! the average effect is `1 - P(A) - P(C)`. Each observed (t, y) pair maps
//! to the set of groups it is consistent with.

use gnum::estimators::{partial_label, pl_uplift};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (t, y) in [(1u8, 1.0), (1, 0.0), (0, 1.0), (0, 0.0)] {
        let code = partial_label(t, y)?.code();
        let groups: Vec<&str> = ["A", "B", "C"].iter().zip(code).filter(|(_, c)| *c == 1).map(|(g, _)| *g).collect();
        println!("t={t} y={y}: one of {groups:?}");
    }
    let (pa, pb, pc) = (0.2, 0.5, 0.3);
    println!("shares A {pa} B {pb} C {pc}: uplift {:.2}", pl_uplift(&[pa], &[pc])[0]);
    Ok(())
}
