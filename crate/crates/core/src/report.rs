//! Ranked findings report: module and screen grouping, risk ordering, and
//! the JSON and HTML emitters.
//!
//! [`build_report`] folds per-candidate analysis results into a
//! [`Report`] tree ordered by descending risk (name-ascending on ties),
//! so the riskiest modules and screens come first. [`emit_json`] is the
//! machine interface and is byte-deterministic for equal inputs;
//! [`emit_html`] renders the same tree as a single self-contained page
//! for human review.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::candidates::Candidate;
use crate::index::{ElementRef, FactoryIndex};
use crate::model::{AccessMode, FORMAT_VERSION};
use crate::roleflow::{CandidateAnalysis, WitnessStep};

/// Top-level report document. The serde derivation of this tree is the
/// stable JSON schema that `analyze` emits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u64,
    /// Name of the analyzed factory.
    pub factory: String,
    /// Wall-clock time of the run, present only when explicitly requested;
    /// omitted by default so equal inputs give byte-equal output.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub generated_at: Option<String>,
    pub summary: ReportSummary,
    /// Modules that have findings (or screens whose analysis was cut
    /// short), highest risk first.
    pub modules: Vec<ModuleEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub modules_with_findings: u64,
    pub screens_with_findings: u64,
    pub total_findings: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleEntry {
    pub name: String,
    /// Sum of the screen risks below.
    pub risk: u64,
    pub screens: Vec<ScreenEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenEntry {
    /// Screen name without the module prefix; the module is the parent
    /// entry.
    pub name: String,
    pub risk: u64,
    pub allowed_roles: Vec<String>,
    /// True when some analysis under this screen ran out of state budget,
    /// so findings may be missing. A screen can appear with zero findings
    /// for this reason alone: an exhausted analysis is not a clean one.
    pub incomplete: bool,
    pub findings: Vec<ReportFinding>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFinding {
    pub entity: String,
    pub mode: AccessMode,
    pub violating_roles: Vec<String>,
    /// Containers traversed from the entrypoint to the access, ending with
    /// the access label and the entity.
    pub call_path: Vec<String>,
    /// Node-level trace through those containers.
    pub witness: Vec<WitnessStep>,
    /// True when path enumeration for the underlying candidate hit its
    /// cap, so more routes exist than the graph search recorded.
    pub truncated: bool,
}

/// Review-ordering weight of a set of findings: each contributes
/// `w(mode) × |violating_roles| × d` with `w(write) = 2`, `w(read) = 1`,
/// and `d = 2` when any violating role is held by default (those flaws are
/// open to anyone). The score is a heuristic for sorting, not a calibrated
/// severity.
pub fn risk_score(findings: &[ReportFinding], default_roles: &BTreeSet<String>) -> u64 {
    findings
        .iter()
        .map(|f| {
            let w: u64 = match f.mode {
                AccessMode::Read => 1,
                AccessMode::Write => 2,
            };
            let d: u64 = if f.violating_roles.iter().any(|r| default_roles.contains(r)) {
                2
            } else {
                1
            };
            w * f.violating_roles.len() as u64 * d
        })
        .sum()
}

/// Fold candidate analyses into the ranked report tree.
///
/// `candidates` and `analyses` run in parallel: `analyses[i]` is the
/// verdict for `candidates[i]`. Candidates whose analysis confirmed
/// nothing are dropped, except that a screen whose analysis was cut short
/// stays visible with its `incomplete` flag set. Every confirmed finding
/// appears exactly once.
pub fn build_report(
    index: &FactoryIndex<'_>,
    candidates: &[Candidate],
    analyses: &[CandidateAnalysis],
    generated_at: Option<&str>,
) -> Report {
    assert_eq!(
        candidates.len(),
        analyses.len(),
        "one analysis per candidate"
    );
    let defaults: BTreeSet<String> = index
        .universe
        .names_of(&index.default_roles)
        .into_iter()
        .map(str::to_string)
        .collect();

    let mut per_screen: BTreeMap<(usize, usize), (Vec<ReportFinding>, bool)> = BTreeMap::new();
    for (candidate, analysis) in candidates.iter().zip(analyses) {
        let Some(ElementRef::Screen(s)) = index.lookup(&candidate.entrypoint) else {
            continue;
        };
        let info = &index.screens[s];
        let slot = per_screen.entry((info.module, s)).or_default();
        slot.1 |= analysis.incomplete;
        for finding in &analysis.findings {
            slot.0.push(ReportFinding {
                entity: finding.entity.clone(),
                mode: finding.mode,
                violating_roles: index
                    .universe
                    .names_of(&finding.violating_roles)
                    .into_iter()
                    .map(str::to_string)
                    .collect(),
                call_path: finding.call_path.clone(),
                witness: finding.witness.clone(),
                truncated: candidate.truncated,
            });
        }
    }

    let mut per_module: BTreeMap<usize, Vec<ScreenEntry>> = BTreeMap::new();
    for ((module, s), (mut findings, incomplete)) in per_screen {
        if findings.is_empty() && !incomplete {
            continue;
        }
        findings.sort_by(|a, b| {
            (&a.entity, a.mode, &a.violating_roles, &a.call_path).cmp(&(
                &b.entity,
                b.mode,
                &b.violating_roles,
                &b.call_path,
            ))
        });
        let info = &index.screens[s];
        let risk = risk_score(&findings, &defaults);
        per_module.entry(module).or_default().push(ScreenEntry {
            name: index.factory.modules[module].screens[info.screen].name.clone(),
            risk,
            allowed_roles: index
                .universe
                .names_of(&info.allowed)
                .into_iter()
                .map(str::to_string)
                .collect(),
            incomplete,
            findings,
        });
    }

    let mut modules: Vec<ModuleEntry> = per_module
        .into_iter()
        .map(|(module, mut screens)| {
            screens.sort_by(|a, b| b.risk.cmp(&a.risk).then_with(|| a.name.cmp(&b.name)));
            ModuleEntry {
                name: index.factory.modules[module].name.clone(),
                risk: screens.iter().map(|s| s.risk).sum(),
                screens,
            }
        })
        .collect();
    modules.sort_by(|a, b| b.risk.cmp(&a.risk).then_with(|| a.name.cmp(&b.name)));

    let total_findings: u64 = modules
        .iter()
        .flat_map(|m| &m.screens)
        .map(|s| s.findings.len() as u64)
        .sum();
    let screens_with_findings = modules
        .iter()
        .flat_map(|m| &m.screens)
        .filter(|s| !s.findings.is_empty())
        .count() as u64;
    let modules_with_findings = modules
        .iter()
        .filter(|m| m.screens.iter().any(|s| !s.findings.is_empty()))
        .count() as u64;

    Report {
        format_version: FORMAT_VERSION,
        factory: index.factory.name.clone(),
        generated_at: generated_at.map(str::to_string),
        summary: ReportSummary {
            modules_with_findings,
            screens_with_findings,
            total_findings,
        },
        modules,
    }
}

/// Serialize the report as pretty-printed UTF-8 JSON with a trailing
/// newline. Equal reports give byte-equal output.
pub fn emit_json(report: &Report) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
    out.push(b'\n');
    out
}

/// Render the report as one self-contained HTML page: no scripts, no
/// external fetches, expand/collapse via native `<details>` elements.
/// Findings are grouped module → screen → accessing container, each
/// finding carrying an "Inspect Call Graph" view built from its call path
/// and witness trace.
pub fn emit_html(report: &Report) -> Vec<u8> {
    let mut h = String::with_capacity(8 * 1024);
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    h.push_str(&format!(
        "<title>Role access report: {}</title>\n",
        escape(&report.factory)
    ));
    h.push_str("<style>\n");
    h.push_str(STYLE);
    h.push_str("</style>\n</head>\n<body>\n");
    h.push_str(&format!(
        "<h1>Role access report: {}</h1>\n",
        escape(&report.factory)
    ));
    if let Some(ts) = &report.generated_at {
        h.push_str(&format!("<p class=\"meta\">generated {}</p>\n", escape(ts)));
    }

    let s = &report.summary;
    if s.total_findings == 0 {
        h.push_str("<p class=\"totals\">No findings. Every analyzed access is covered by the policy.</p>\n");
    } else {
        h.push_str(&format!(
            "<p class=\"totals\">{} finding{} across {} screen{} in {} module{}.</p>\n",
            s.total_findings,
            plural(s.total_findings),
            s.screens_with_findings,
            plural(s.screens_with_findings),
            s.modules_with_findings,
            plural(s.modules_with_findings),
        ));
    }

    for module in &report.modules {
        let count: usize = module.screens.iter().map(|s| s.findings.len()).sum();
        h.push_str("<details class=\"module\" open>\n<summary>");
        h.push_str(&format!(
            "<strong>{}</strong> <span class=\"risk\">risk {}</span> <span class=\"count\">{} finding{}</span>",
            escape(&module.name),
            module.risk,
            count,
            plural(count as u64)
        ));
        h.push_str("</summary>\n");
        for screen in &module.screens {
            emit_screen(&mut h, screen);
        }
        h.push_str("</details>\n");
    }

    h.push_str("<footer>\n<p>Risk is a heuristic ordering aid, not a calibrated severity: \
each finding counts 2 for a write or 1 for a read, times the number of violating roles, \
doubled again when one of those roles is held by default.</p>\n</footer>\n");
    h.push_str("</body>\n</html>\n");
    h.into_bytes()
}

fn emit_screen(h: &mut String, screen: &ScreenEntry) {
    let violating: BTreeSet<&str> = screen
        .findings
        .iter()
        .flat_map(|f| f.violating_roles.iter().map(String::as_str))
        .collect();
    h.push_str("<details class=\"screen\">\n<summary>");
    h.push_str(&format!(
        "<strong>{}</strong> <span class=\"risk\">risk {}</span> <span class=\"count\">{} finding{}</span>",
        escape(&screen.name),
        screen.risk,
        screen.findings.len(),
        plural(screen.findings.len() as u64)
    ));
    if !violating.is_empty() {
        h.push_str(&format!(
            " <span class=\"roles\">violating: {}</span>",
            escape(&join(&violating))
        ));
    }
    if screen.incomplete {
        h.push_str(" <span class=\"badge incomplete\">incomplete</span>");
    }
    h.push_str("</summary>\n");
    h.push_str(&format!(
        "<p class=\"meta\">allowed roles: {}</p>\n",
        if screen.allowed_roles.is_empty() {
            "none".to_string()
        } else {
            escape(&screen.allowed_roles.join(", "))
        }
    ));
    if screen.incomplete {
        h.push_str("<p class=\"notice\">The analysis of this screen ran out of state budget; findings may be missing below.</p>\n");
    }

    let mut by_container: BTreeMap<&str, Vec<&ReportFinding>> = BTreeMap::new();
    for finding in &screen.findings {
        let container = finding
            .witness
            .last()
            .map(|step| step.container.as_str())
            .unwrap_or(screen.name.as_str());
        by_container.entry(container).or_default().push(finding);
    }
    for (container, findings) in by_container {
        h.push_str("<details class=\"action\">\n<summary>");
        h.push_str(&format!(
            "{} <span class=\"count\">{} finding{}</span>",
            escape(container),
            findings.len(),
            plural(findings.len() as u64)
        ));
        h.push_str("</summary>\n");
        for finding in findings {
            emit_finding(h, finding);
        }
        h.push_str("</details>\n");
    }
    h.push_str("</details>\n");
}

fn emit_finding(h: &mut String, finding: &ReportFinding) {
    h.push_str("<div class=\"finding\">\n<p>");
    h.push_str(&format!(
        "{} of <strong>{}</strong> reachable by: {}",
        finding.mode,
        escape(&finding.entity),
        escape(&finding.violating_roles.join(", "))
    ));
    if finding.truncated {
        h.push_str(" <span class=\"badge truncated\">paths truncated</span>");
    }
    h.push_str("</p>\n<details class=\"graph\">\n<summary>Inspect Call Graph</summary>\n");
    h.push_str("<ol class=\"path\">\n");
    for step in &finding.call_path {
        h.push_str(&format!("<li>{}</li>\n", escape(step)));
    }
    h.push_str("</ol>\n");
    h.push_str("<table class=\"witness\">\n<tr><th>container</th><th>node</th></tr>\n");
    for step in &finding.witness {
        h.push_str(&format!(
            "<tr><td>{}</td><td>{}</td></tr>\n",
            escape(&step.container),
            escape(&step.node)
        ));
    }
    h.push_str("</table>\n");
    if finding.truncated {
        h.push_str("<p class=\"notice\">Path enumeration was cut off at the configured cap; the call graph holds more routes to this access than listed.</p>\n");
    }
    h.push_str("</details>\n</div>\n");
}

const STYLE: &str = "\
body { font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 60rem; padding: 0 1rem; color: #1a1a1a; }
h1 { font-size: 1.4rem; }
details { border: 1px solid #d0d0d0; border-radius: 4px; margin: 0.4rem 0; padding: 0.3rem 0.6rem; }
details.screen { margin-left: 1rem; }
details.action { margin-left: 1rem; background: #fafafa; }
details.graph { margin-left: 1rem; border-style: dashed; }
summary { cursor: pointer; }
.risk { color: #8a2d2d; font-weight: 600; margin-left: 0.5rem; }
.count, .roles, .meta { color: #555; margin-left: 0.5rem; }
.badge { border-radius: 3px; padding: 0 0.35rem; font-size: 0.85em; margin-left: 0.5rem; }
.badge.incomplete { background: #fff3cd; border: 1px solid #d4b106; }
.badge.truncated { background: #e7ecf6; border: 1px solid #5470a8; }
.notice { color: #7a5a00; font-size: 0.9em; }
.finding { border-top: 1px solid #e5e5e5; padding-top: 0.3rem; }
ol.path li { font-family: ui-monospace, monospace; font-size: 0.9em; }
table.witness { border-collapse: collapse; font-family: ui-monospace, monospace; font-size: 0.85em; }
table.witness th, table.witness td { border: 1px solid #ccc; padding: 0.15rem 0.5rem; text-align: left; }
footer { margin-top: 2rem; color: #666; font-size: 0.85em; border-top: 1px solid #ddd; }
";

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn plural(n: u64) -> &'static str {
    if n == 1 {
        ""
    } else {
        "s"
    }
}

fn join(set: &BTreeSet<&str>) -> String {
    set.iter().copied().collect::<Vec<_>>().join(", ")
}
