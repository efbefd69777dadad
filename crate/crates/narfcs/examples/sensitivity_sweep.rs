//! Rerun the pooled analysis over a grid of sensitivity parameters and render
//! the estimates as a heatmap.
//!
//! Writes `sweep.csv` and `heatmap.svg` under `target/example-out/`.

use narfcs::report;
use narfcs::sensitivity::{run_sweep, DeltaGrid, SweepMode};
use narfcs::simulate::{default_analysis_model, generate, SimConfig};
use narfcs::MiceSpec;

fn main() -> narfcs::Result<()> {
    let (ds, _) = generate(&SimConfig::cohort_default(2000, 77))?;
    let mut spec = MiceSpec::mar_default(&ds, 77)?;
    spec.m = 10;
    spec.maxit = 5;
    spec.set_mnar(&ds, "sdqw3", "0")?;
    spec.set_mnar(&ds, "matmhw1", "0")?;

    let mut grid = DeltaGrid::new();
    grid.add_intercepts("sdqw3", &[-0.22, 0.78, 3.8]);
    grid.add_intercepts("matmhw1", &[-0.15, 0.11, 0.47]);

    let model = default_analysis_model();
    let sweep = run_sweep(&ds, &spec, &grid, &model, "matmhw1", SweepMode::Joint, 0.05)?;

    println!("{:>8} {:>8} {:>9} {:>9} {:>9}", "d_sdqw3", "d_mat..", "estimate", "ci_low", "ci_high");
    for row in sweep.coef_rows() {
        println!(
            "{:>8} {:>8} {:>9.3} {:>9.3} {:>9.3}",
            row.deltas[0], row.deltas[1], row.estimate, row.ci_low, row.ci_high
        );
    }

    let out = std::path::Path::new("target/example-out");
    std::fs::create_dir_all(out).expect("create output directory");
    report::write_sweep(out, &sweep)?;
    report::write_heatmap(out, &sweep, None)?;
    println!("\nwrote {}/sweep.csv and {}/heatmap.svg", out.display(), out.display());
    Ok(())
}
