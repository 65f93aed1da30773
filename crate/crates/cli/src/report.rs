//! Markdown summary of a bundle.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde_json::Value;

use crate::bundle::{read_csv, Manifest, CLUSTERS, GLM, MANIFEST, REQUIRED, SCORES, TESTS};
use crate::format::g6;
use crate::CliError;

type Record = BTreeMap<String, String>;

fn num(r: &Record, key: &str) -> Option<f64> {
    r.get(key).and_then(|s| s.parse().ok())
}

fn title(analysis_id: &str) -> &str {
    match analysis_id {
        "age_spearman" => "Age (Spearman)",
        "sex_point_biserial" => "Sex (point-biserial, F = 1)",
        "scenario_friedman" => "Scenarios (Friedman)",
        "scenario_wilcoxon" => "Scenarios (Wilcoxon post-hoc)",
        "session_friedman" => "Sessions (Friedman)",
        "session_wilcoxon" => "Sessions (Wilcoxon post-hoc)",
        "cluster_mann_whitney" => "Clusters (Mann–Whitney)",
        other => other,
    }
}

/// `a (M=1.2) < b (M=3.4)` when both means are known.
fn direction(r: &Record) -> String {
    match (num(r, "mean_a"), num(r, "mean_b")) {
        (Some(a), Some(b)) => {
            let op = if a < b {
                "<"
            } else if a > b {
                ">"
            } else {
                "="
            };
            format!("{} (M={}) {op} {} (M={})", r["group_a"], g6(a), r["group_b"], g6(b))
        }
        _ if r["group_b"].is_empty() => r["group_a"].clone(),
        _ => format!("{} vs {}", r["group_a"], r["group_b"]),
    }
}

fn test_table(out: &mut String, rows: &[&Record]) {
    out.push_str("| feature | subgroup | comparison | statistic | p | n | method |\n|---|---|---|---|---|---|---|\n");
    for r in rows {
        let stat = match r.get("z").filter(|z| !z.is_empty()) {
            Some(z) => format!("{} = {} (Z = {z})", r["statistic_name"], r["statistic"]),
            None => format!("{} = {}", r["statistic_name"], r["statistic"]),
        };
        writeln!(out, "| {} | {} | {} | {stat} | {} | {} | {} |", r["feature"], r["subgroup"], direction(r), r["p"], r["n"], r["method"]).unwrap();
    }
}

fn grouped<'a>(rows: &'a [Record], keep: impl Fn(&Record) -> bool) -> BTreeMap<&'a str, Vec<&'a Record>> {
    let mut out: BTreeMap<&str, Vec<&Record>> = BTreeMap::new();
    for r in rows.iter().filter(|r| keep(r)) {
        out.entry(r["analysis_id"].as_str()).or_default().push(r);
    }
    out
}

/// Renders the report. `alpha` overrides the significance level recorded in
/// the manifest.
pub fn render(bundle: &Path, alpha: Option<f64>) -> Result<String, CliError> {
    for name in REQUIRED {
        if !bundle.join(name).is_file() {
            return Err(CliError::IncompleteBundle(name.into()));
        }
    }
    let manifest: Manifest = serde_json::from_str(&std::fs::read_to_string(bundle.join(MANIFEST)).map_err(CliError::io("cannot read manifest"))?)
        .map_err(|e| CliError::Data(format!("{MANIFEST}: {e}")))?;
    let alpha = alpha.unwrap_or(manifest.alpha);
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let tests = read_csv(&bundle.join(TESTS))?;
    let scores = read_csv(&bundle.join(SCORES))?;
    let clusters = read_csv(&bundle.join(CLUSTERS))?;
    let glm: Value = serde_json::from_str(&std::fs::read_to_string(bundle.join(GLM)).map_err(CliError::io("cannot read glm.json"))?)
        .map_err(|e| CliError::Data(format!("{GLM}: {e}")))?;

    let mut out = String::new();
    out.push_str("# Session analysis report\n\n");
    writeln!(
        out,
        "{} session files, {} processed, {} failed; {} traces dropped for missing data. Config `{}`, seed {}.\n",
        manifest.sessions_total,
        manifest.sessions_processed,
        manifest.sessions_failed,
        manifest.traces_dropped,
        &manifest.config_sha256[..12.min(manifest.config_sha256.len())],
        manifest.seeds.seed
    )
    .unwrap();
    for n in &manifest.notes {
        writeln!(out, "> {n}\n").unwrap();
    }

    writeln!(out, "## Significant results (p < {})\n", g6(alpha)).unwrap();
    let significant = grouped(&tests, |r| num(r, "p").is_some_and(|p| p < alpha));
    if significant.is_empty() {
        out.push_str("No significant results.\n\n");
    }
    for (id, rows) in &significant {
        writeln!(out, "### {}\n", title(id)).unwrap();
        test_table(&mut out, rows);
        out.push('\n');
    }

    out.push_str("## Generalized linear models\n\n");
    let models = glm.as_array().map(Vec::as_slice).unwrap_or_default();
    if models.is_empty() {
        out.push_str("No models were fitted.\n\n");
    } else {
        out.push_str("| target | family | n | deviance | AIC | pseudo-R² | terms with p < α |\n|---|---|---|---|---|---|---|\n");
        for m in models {
            let target = m["target"].as_str().unwrap_or("?");
            let fit = &m["fit"];
            if fit.is_null() {
                writeln!(out, "| {target} | | {} | | | | not fitted: {} |", m["n"], m["error"].as_str().unwrap_or("unknown error")).unwrap();
                continue;
            }
            let f = |k: &str| fit[k].as_f64().map(g6).unwrap_or_default();
            let terms: Vec<String> = fit["coefficients"]
                .as_array()
                .into_iter()
                .flatten()
                .skip(1)
                .filter(|c| c["p_value"].as_f64().is_some_and(|p| p < alpha))
                .map(|c| format!("{} (β={}, p={})", c["name"].as_str().unwrap_or("?"), g6(c["estimate"].as_f64().unwrap_or(f64::NAN)), g6(c["p_value"].as_f64().unwrap_or(f64::NAN))))
                .collect();
            writeln!(out, "| {target} | {} | {} | {} | {} | {} | {} |", fit["family"].as_str().unwrap_or(""), m["n"], f("deviance"), f("aic"), f("pseudo_r2"), if terms.is_empty() { "none".into() } else { terms.join(", ") }).unwrap();
        }
        out.push('\n');
    }

    out.push_str("## Clusters\n\n");
    match scores.iter().find(|r| r.get("selected").map(String::as_str) == Some("true")) {
        None => out.push_str("No clustering result.\n\n"),
        Some(best) => {
            let mut sizes: BTreeMap<usize, usize> = BTreeMap::new();
            for r in &clusters {
                if let Some(l) = r.get("cluster").and_then(|s| s.parse().ok()) {
                    *sizes.entry(l).or_default() += 1;
                }
            }
            writeln!(
                out,
                "{} clusters selected (silhouette {}, Davies–Bouldin {}). Sizes: {}.\n",
                best["k"],
                best["silhouette"],
                best["davies_bouldin"],
                sizes.iter().map(|(l, n)| format!("cluster{l} = {n}")).collect::<Vec<_>>().join(", ")
            )
            .unwrap();
            out.push_str("| k | silhouette | Davies–Bouldin | inertia |\n|---|---|---|---|\n");
            for r in &scores {
                writeln!(out, "| {} | {} | {} | {} |", r["k"], r["silhouette"], r["davies_bouldin"], r["inertia"]).unwrap();
            }
            out.push('\n');
        }
    }

    out.push_str("## Appendix: all tests\n\n");
    if tests.is_empty() {
        out.push_str("No tests were run.\n");
    }
    for (id, rows) in &grouped(&tests, |_| true) {
        writeln!(out, "### {}\n", title(id)).unwrap();
        test_table(&mut out, rows);
        out.push('\n');
    }
    Ok(out)
}
