//! Inspect the missingness structure of a dataset before imputing.

use narfcs::report::missingness_table;
use narfcs::simulate::{generate, SimConfig};

fn main() -> narfcs::Result<()> {
    // a synthetic cohort with realistic missingness rates
    let cfg = SimConfig::cohort_default(4882, 20240001);
    let (ds, _) = generate(&cfg)?;

    let summary = ds.summarize_missingness();
    print!("{}", missingness_table(&summary));

    println!(
        "\n{:.0}% of rows are incomplete; recommended m = {}",
        summary.pct_incomplete_cases(),
        narfcs::recommend_m(summary.pct_incomplete_cases())?
    );

    // per-variable missingness indicators line up with the counts
    let indicator = ds.missingness_indicator("sdqw3")?;
    let ones: usize = indicator.iter().map(|&b| b as usize).sum();
    assert_eq!(ones, summary.for_variable("sdqw3").unwrap().n_missing);
    Ok(())
}
