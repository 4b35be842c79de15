//! Rendering of command outputs as JSON, aligned text or CSV.

use std::fmt::Write as _;

use serde::Serialize;

use crate::commands::{ContrastOutput, EstimateOutput, ProbcheckOutput, SimulateOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Text,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Text => "txt",
            Format::Csv => "csv",
        }
    }
}

pub enum Output {
    Estimate(EstimateOutput),
    Contrast(ContrastOutput),
    Simulate(SimulateOutput),
    Probcheck(ProbcheckOutput),
}

impl Output {
    pub fn render(&self, format: Format) -> anyhow::Result<String> {
        Ok(match format {
            Format::Json => match self {
                Output::Estimate(o) => json(o)?,
                Output::Contrast(o) => json(o)?,
                Output::Simulate(o) => json(o)?,
                Output::Probcheck(o) => json(o)?,
            },
            Format::Text => self.table().to_text(),
            Format::Csv => self.table().to_csv()?,
        })
    }

    fn table(&self) -> Table {
        match self {
            Output::Estimate(o) => estimate_table(o),
            Output::Contrast(o) => contrast_table(o),
            Output::Simulate(o) => simulate_table(o),
            Output::Probcheck(o) => probcheck_table(o),
        }
    }
}

fn json<T: Serialize>(value: &T) -> anyhow::Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// A header row, data rows and free-form notes printed under the text table.
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    notes: Vec<String>,
}

impl Table {
    fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
            let parts: Vec<String> = cells.zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &mut self.header.iter().copied());
        for row in &self.rows {
            line(&mut out, &mut row.iter().map(String::as_str));
        }
        for note in &self.notes {
            let _ = writeln!(out, "note: {note}");
        }
        out
    }

    fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "-".into())
}

fn pct(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

fn estimate_table(o: &EstimateOutput) -> Table {
    let rows = o
        .entries
        .iter()
        .map(|e| {
            let r = &e.report;
            vec![
                e.label.clone(),
                r.n.to_string(),
                r.l.to_string(),
                num(r.p),
                num(r.p_min),
                r.overlap_degree.to_string(),
                num(r.theta_hat_y),
                num(r.sigma_tilde_y),
                r.condition_ok.to_string(),
                num(r.ci_upper),
                e.valid.to_string(),
                opt(e.full_control.as_ref().map(|f| num(f.lower_bound))),
            ]
        })
        .collect();
    let mut notes = vec![format!(
        "alpha {} ({} per configuration){}",
        o.alpha,
        o.alpha_per_config,
        if o.bonferroni { ", Bonferroni" } else { "" }
    )];
    for e in &o.entries {
        notes.extend(e.notes.iter().map(|n| format!("{}: {n}", e.label)));
    }
    Table {
        header: vec![
            "config", "N", "L", "p", "p_min", "D", "theta_hat", "sigma_tilde", "condition", "ci_upper", "valid",
            "full_control_lower",
        ],
        rows,
        notes,
    }
}

fn contrast_table(o: &ContrastOutput) -> Table {
    let rows = [Some(&o.cat), o.zcat.as_ref()]
        .into_iter()
        .flatten()
        .map(|r| {
            vec![
                format!("{:?}", r.kind).to_uppercase(),
                r.treated.to_string(),
                r.control.to_string(),
                num(r.delta),
                num(r.one_sided_lower),
                num(r.two_sided.lower),
                num(r.two_sided.upper),
                opt(r.lambda_1.map(num)),
                opt(r.p.map(num)),
            ]
        })
        .collect();
    Table {
        header: vec!["kind", "treated", "control", "delta", "one_sided_lower", "lower", "upper", "lambda_1", "p"],
        rows,
        notes: o.notes.clone(),
    }
}

fn simulate_table(o: &SimulateOutput) -> Table {
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for t in &o.tables {
        let scenario = serde_json::to_value(t.scenario)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        for c in &t.cells {
            rows.push(vec![
                scenario.clone(),
                format!("({},{})", c.d_min, c.d),
                c.replicates.to_string(),
                c.no_effective.to_string(),
                c.degenerate.to_string(),
                c.condition_met.to_string(),
                pct(c.condition_met_fraction),
                pct(c.coverage),
                pct(c.coverage_ignoring_condition),
            ]);
        }
        notes.extend(t.warnings.iter().map(|w| format!("{scenario}: {w}")));
    }
    Table {
        header: vec![
            "scenario", "config", "replicates", "no_effective", "degenerate", "condition_met", "condition_frac",
            "coverage", "coverage_ignoring",
        ],
        rows,
        notes,
    }
}

fn probcheck_table(o: &ProbcheckOutput) -> Table {
    let mut rows = vec![
        vec!["N".into(), o.n.to_string()],
        vec!["p".into(), num(o.p)],
        vec!["p_min".into(), num(o.p_min)],
        vec!["D".into(), o.overlap_degree.to_string()],
    ];
    if let Some(or) = &o.oracle {
        rows.push(vec!["oracle_max_abs_diff".into(), format!("{:e}", or.max_abs_diff)]);
        rows.push(vec!["disjoint_max_dev_from_p2".into(), opt(or.max_disjoint_deviation.map(|x| format!("{x:e}")))]);
    }
    if let Some(mc) = &o.mc {
        rows.push(vec!["mc_samples".into(), mc.samples.to_string()]);
        rows.push(vec!["mc_max_abs_diff".into(), format!("{:e}", mc.max_abs_diff)]);
        rows.push(vec!["mc_max_abs_z".into(), format!("{:.3}", mc.max_abs_z)]);
        rows.push(vec!["mc_within_4se".into(), format!("{}/{}", mc.within_4se, mc.tracked)]);
    }
    Table {
        header: vec!["quantity", "value"],
        rows,
        notes: vec![format!("design {}", o.label)],
    }
}
