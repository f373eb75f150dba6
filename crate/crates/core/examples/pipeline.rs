//! A configured run with manifest, a bit-for-bit replay, and a comparison
//! against a different model.

use cylinder_rds::harness::{compare_runs, replay, run_pipeline, Config, RunOptions, Stage};

const CONFIG: &str = r#"
[run]
name = "forced"
stages = ["simulate", "attractor", "curves", "verify"]

[model]
name = "forced_linear"

[attractor]
box_lo = [-1.0]
box_hi = [1.0]
bins = 64
horizon = 30

[verify]
shifts = 2
"#;

fn main() -> cylinder_rds::Result<()> {
    let root = std::env::temp_dir().join("cylinder-rds-example-runs");
    let opts = RunOptions {
        out_dir: Some(root.clone()),
        ..RunOptions::default()
    };
    let cfg = Config::from_toml_str(CONFIG, std::env::vars())?;
    let first = run_pipeline(&cfg, &opts)?;
    println!("run written to {}", first.run_dir);
    for (name, check) in &first.acceptance {
        println!(
            "  {} {name}: {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.detail
        );
    }

    let (_, rep) = replay(&first, Some(&root))?;
    println!("replay identical: {}", rep.identical);

    let mut other = cfg.clone();
    other.model.name = "winding_two".into();
    other.attractor.box_lo = Some(vec![-2.0, -2.0]);
    other.attractor.box_hi = Some(vec![2.0, 2.0]);
    other.attractor.grid_per_axis = 4;
    other.attractor.tol_k = None;
    other.curves.gap_threshold = Some(0.2);
    let second = run_pipeline(
        &other,
        &RunOptions {
            stages: Some(vec![Stage::Curves]),
            ..opts
        },
    )?;
    let diff = compare_runs(&first, &second)?;
    println!("periods differ: {:?}", diff.periods);
    Ok(())
}
