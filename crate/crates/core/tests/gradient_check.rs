//! Backprop gradients vs central finite differences over random architectures,
//! including dropout and DropConnect with replayed (frozen) masks.

mod common;

#[test]
fn gradients_match_finite_differences() {
    let (checked, skipped) = common::gradient_suite();
    println!("checked {checked} gradient entries ({skipped} kink skips)");
}
