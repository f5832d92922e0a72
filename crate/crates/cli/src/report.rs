use std::fmt::Write as _;
use std::path::Path;

use nhpg_core::mcmc::{Block, Checkpoint, CoefficientSummary};

use crate::fit::{FitDocument, COEFFICIENTS, DRAWS, MODEL};
use crate::Failure;

pub const REPORT_FILE: &str = "report.md";

fn read(dir: &Path, name: &str) -> Result<String, Failure> {
    let path = dir.join(name);
    std::fs::read_to_string(&path)
        .map_err(|e| Failure::Artifact(format!("cannot read {} (run `fit` first?): {e}", path.display())))
}

fn coefficients(dir: &Path) -> Result<Vec<CoefficientSummary>, Failure> {
    let text = read(dir, COEFFICIENTS)?;
    let rows = csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .collect::<Result<Vec<CoefficientSummary>, _>>()
        .map_err(|e| Failure::Artifact(format!("{COEFFICIENTS}: {e}")))?;
    if rows.is_empty() {
        return Err(Failure::Artifact(format!("{COEFFICIENTS} has no coefficients")));
    }
    Ok(rows)
}

fn cell(c: Option<&CoefficientSummary>) -> String {
    match c {
        Some(c) if c.significant => format!("{:.3}*", c.mean),
        Some(c) => format!("{:.3}", c.mean),
        None => "n/a".into(),
    }
}

/// Markdown table of posterior means from the artifacts in `dir`: one row per
/// covariate with the mean-equation and transition coefficients of both
/// states, then intercepts, variances and state occupancy.
pub fn render(dir: &Path) -> Result<String, Failure> {
    let coefs = coefficients(dir)?;
    let doc: FitDocument =
        serde_json::from_str(&read(dir, MODEL)?).map_err(|e| Failure::Artifact(format!("{MODEL}: {e}")))?;
    let draws: Checkpoint =
        serde_json::from_str(&read(dir, DRAWS)?).map_err(|e| Failure::Artifact(format!("{DRAWS}: {e}")))?;
    if draws.total_draws() == 0 {
        return Err(Failure::Artifact(format!("{DRAWS} contains no posterior draws")));
    }
    let find = |block, state, name: &str| coefs.iter().find(|c| c.block == block && c.state == state && c.name == name);
    let columns = [(Block::Mean, 1), (Block::Mean, 2), (Block::Transition, 1), (Block::Transition, 2)];

    let mut out = String::from("# Posterior mean estimates\n\n");
    let _ = writeln!(
        out,
        "{} series, {} to {}, {} observations, {} retained draws from {} chain(s).",
        doc.transform, doc.first_date, doc.last_date, doc.observations, doc.retained_draws, doc.chains
    );
    let _ = writeln!(
        out,
        "Entries marked * are significant at the {} level ({}).\n",
        doc.level, doc.significance_rule
    );
    out.push_str("| Variable | B1 | B2 | beta1 | beta2 |\n|---|---:|---:|---:|---:|\n");
    for name in &doc.covariate_names {
        let _ = write!(out, "| {name} |");
        for (block, state) in columns {
            let _ = write!(out, " {} |", cell(find(block, state, name)));
        }
        out.push('\n');
    }
    out.push_str("\n| Intercept | B1 | B2 | beta1 | beta2 |\n|---|---:|---:|---:|---:|\n| intercept |");
    for (block, state) in columns {
        let _ = write!(out, " {} |", cell(find(block, state, "intercept")));
    }
    out.push_str("\n\n");
    for (s, iv) in doc.sigma2.iter().enumerate() {
        let _ = writeln!(
            out,
            "sigma2_{}: {:.4} [{:.4}, {:.4}]",
            s + 1,
            iv.mean,
            iv.lower,
            iv.upper
        );
    }
    let total = (doc.state_sizes[0] + doc.state_sizes[1]).max(1) as f64;
    let _ = writeln!(
        out,
        "\nState occupancy (P(Z = 1) > 0.5): state 1: {} ({:.1}%), state 2: {} ({:.1}%)",
        doc.state_sizes[0],
        100.0 * doc.state_sizes[0] as f64 / total,
        doc.state_sizes[1],
        100.0 * doc.state_sizes[1] as f64 / total
    );
    Ok(out)
}
