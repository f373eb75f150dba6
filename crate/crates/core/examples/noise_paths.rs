//! Reproducible two-sided noise paths and shifts along the base flow.

use cylinder_rds::base::{ergodic_component_sampler, BaseFlow, NoisePath};

fn main() -> cylinder_rds::Result<()> {
    let path = NoisePath::new(42, 1.0 / 128.0, 2);

    // Increments are a pure function of (seed, slot); negative slots are the past.
    println!("dW at slot -3:  {:?}", path.increment(-3));
    println!("dW at slot  0:  {:?}", path.increment(0));

    // θ_t shifts the slot origin; reading slot 0 of θ_{1/64}ω is slot 2 of ω.
    let shifted = path.shift(1.0 / 64.0)?;
    assert_eq!(shifted.increment(0), path.increment(2));
    println!("θ_(1/64) moves the origin by {} slots", shifted.shift_offset());

    // Shifts must land on the grid.
    match path.shift(0.001) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }

    // Base points for the k-th iterate of a rational rotation stay in one ergodic component.
    let flow = BaseFlow::Rotation { alpha: 0.25 };
    let sample = ergodic_component_sampler(&flow, 2, 4, 7, 1.0 / 128.0)?;
    println!("{}: component {:?}", flow.description(), sample.component);
    for p in &sample.points {
        println!("  phase {:.4}", p.phase().unwrap_or_default());
    }
    Ok(())
}
