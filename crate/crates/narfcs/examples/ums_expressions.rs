//! The offset-expression ("ums") mini-language: an intercept delta plus
//! optional coefficient*variable terms.

use std::collections::HashSet;

use narfcs::simulate::{generate, SimConfig};
use narfcs::ums::parse_ums;

fn main() -> narfcs::Result<()> {
    let known: HashSet<&str> = ["matage", "sex", "finhard"].into_iter().collect();

    for text in ["0.78", "0.11", "0", "0.78 + 0.2*matage", "-0.22 - 0.1*sex", "1e-2 + 2*finhard"] {
        let expr = parse_ums(text, &known, "sdqw3")?;
        println!(
            "{text:<22} -> intercept {:+}, {} term(s), canonical \"{}\"",
            expr.intercept,
            expr.terms.len(),
            expr.canonical()
        );
    }

    println!();
    for bad in ["0.2*matage", "0.78 + foo", "0.1 + 0.2", "0.3 + 0.1*sdqw3", "0.5 +"] {
        let err = parse_ums(bad, &known, "sdqw3").unwrap_err();
        println!("{bad:<22} -> rejected: {err}");
    }

    // evaluation happens against completed data, row by row
    let (ds, _) = generate(&SimConfig::cohort_default(5, 1))?;
    let expr = parse_ums("0.78 + 0.2*matage", &ds.var_names().collect(), "sdqw3")?;
    let offsets = expr.evaluate(&ds, &[0, 1, 2])?;
    println!("\nrow offsets for \"0.78 + 0.2*matage\": {offsets:.3?}");
    Ok(())
}
