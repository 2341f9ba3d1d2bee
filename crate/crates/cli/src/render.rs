//! Plain-text summaries of reports. Output depends only on the report.

use std::fmt::Write;

use qcr_core::process::SegmentValidity;
use qcr_core::tomography::{FactorFit, Identifiability};

use crate::config::invalid;
use crate::report::{Body, ClassicalBody, Report, ReverseBody, SimulateBody, Status, TomographyBody};

pub fn parse_report(text: &str, origin: &str) -> anyhow::Result<Report> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        invalid(format!("{origin}: not a report (at `{path}`): {}", e.into_inner()))
    })
}

pub fn render(r: &Report) -> String {
    let mut s = String::new();
    let status = match r.status {
        Status::Ok => "ok",
        Status::CheckFailed => "check failed",
    };
    let _ = writeln!(s, "{} report (schema {}), status: {status}, tolerance {:e}", r.kind, r.schema_version, r.tolerance);
    match &r.body {
        Body::Simulate(b) => simulate(&mut s, b),
        Body::Tomography(b) => tomography(&mut s, b),
        Body::Reverse(b) => reverse(&mut s, b),
        Body::Identifiability(b) => identifiability(&mut s, b),
        Body::Classical(b) => classical(&mut s, b),
    }
    let _ = writeln!(s, "artifacts: {}", r.artifacts.join(", "));
    s
}

fn validity(s: &mut String, v: &[SegmentValidity], first_is_initial: bool) {
    let mut any = false;
    for (i, sv) in v.iter().enumerate() {
        let name = match (first_is_initial, i) {
            (true, 0) => "initial state".to_string(),
            (true, i) => format!("segment {i} (layer {i} -> {})", i + 1),
            (false, i) => format!("factor {i}"),
        };
        for viol in &sv.violations {
            any = true;
            let _ = writeln!(s, "  VIOLATED {name}: {} (deviation {:.3e})", viol.condition.describe(), viol.deviation);
        }
    }
    if !any {
        let _ = writeln!(s, "  all CPT conditions satisfied");
    }
}

fn simulate(s: &mut String, b: &SimulateBody) {
    let _ = writeln!(s, "SIMULATION: {} outcomes over nodes {}", b.entries, b.nodes.join(", "));
    let _ = writeln!(s, "  total probability {:.16e}, smallest entry {:.3e}", b.total_probability, b.min_entry);
    if !b.intervened_nodes.is_empty() {
        let _ = writeln!(s, "  intervened table with substituted instruments at {}", b.intervened_nodes.join(", "));
    }
    validity(s, &b.validity, true);
}

fn fit_line(s: &mut String, name: &str, f: &FactorFit) {
    let _ = writeln!(
        s,
        "  {name}: rank {}/{}, residual {:.3e}, condition number {:.3e}{}",
        f.rank,
        f.required_rank,
        f.residual,
        f.condition_number,
        if f.dropped_rows.is_empty() { String::new() } else { format!(", dropped rows {:?}", f.dropped_rows) }
    );
}

fn tomography(s: &mut String, b: &TomographyBody) {
    let r = &b.reconstruction;
    let _ = writeln!(s, "RECONSTRUCTION: {}", if r.success { "success" } else { "failed" });
    fit_line(s, "initial state", &r.initial);
    for (j, f) in r.segments.iter().enumerate() {
        fit_line(s, &format!("segment {} (layer {} -> {})", j + 1, j + 1, j + 2), f);
    }
    let _ = writeln!(s, "  chain residual {:.3e}, table residual {:.3e}", r.chain_residual, r.table_residual);
    let _ = writeln!(s, "  round-trip error ||W - W_hat||_F = {:.3e}", b.round_trip_error);
    let v: Vec<SegmentValidity> = std::iter::once(&r.initial).chain(&r.segments).map(|f| f.validity.clone()).collect();
    validity(s, &v, true);
}

fn opt(x: Option<f64>) -> String {
    x.map_or("not computed".into(), |v| format!("{v:.3e}"))
}

fn reverse(s: &mut String, b: &ReverseBody) {
    let r = &b.reversal;
    let _ = writeln!(s, "REVERSIBLE: {}", if r.success { "yes" } else { "no" });
    if let Some(rej) = &r.rejection {
        let _ = writeln!(s, "  refused: {} (deviation {:.3e})", rej.reason, rej.deviation);
    }
    let _ = writeln!(s, "  forward vs reversed table max error {}", opt(r.table_max_error));
    let _ = writeln!(s, "  reversed conditionals max error {}", opt(r.conditional_max_error));
    let _ = writeln!(s, "  Bayes inversion max error {:.3e}", r.bayes_max_error);
    let _ = writeln!(s, "  marginal uniformity deviation {:.3e}", r.marginal_deviation);
    let _ = writeln!(s, "  scale factor deviation {:.3e}", r.scale_factor_deviation);
    for seg in &r.segments {
        let _ = writeln!(
            s,
            "  reversed segment layer {} -> {} (forward bias {:.3e}):",
            seg.from_layer, seg.to_layer, seg.forward_bias
        );
        for c in &seg.clauses {
            let _ = writeln!(s, "    {} {} (deviation {:.3e})", if c.ok { "ok      " } else { "VIOLATED" }, c.name, c.deviation);
        }
    }
}

fn identifiability(s: &mut String, v: &Identifiability) {
    match v {
        Identifiability::Identifiable { layers } => {
            let _ = writeln!(s, "IDENTIFIABLE: yes, layered with {} layers", layers.len());
            for (i, l) in layers.iter().enumerate() {
                let _ = writeln!(s, "  L{}: {}", i + 1, l.join(", "));
            }
        }
        Identifiability::Obstructed(ob) => {
            let _ = writeln!(s, "IDENTIFIABLE: no");
            let (j, k, l) = ob.triplet;
            let _ = writeln!(s, "  triplet ({j}, {k}, {l}): path {} skips S{k}", ob.path.join(" -> "));
            for (i, set) in ob.sets.iter().enumerate() {
                let _ = writeln!(s, "  S{}: {}", i + 1, set.join(", "));
            }
            let _ = writeln!(s, "  dims (d{j}, d{k}, d{l}) = ({}, {}, {})", ob.dims.0, ob.dims.1, ob.dims.2);
            let _ = writeln!(s, "  available {} < required {}", ob.available, ob.required);
            match ob.frame_rank {
                Some(r) => {
                    let _ = writeln!(s, "  product frame rank {r} of {}", ob.required);
                }
                None => {
                    let _ = writeln!(s, "  product frame rank not computed");
                }
            }
        }
    }
}

fn classical(s: &mut String, b: &ClassicalBody) {
    let c = &b.cmc;
    let _ = writeln!(
        s,
        "CMC: {} (max deviation {:.3e}{})",
        if c.ok { "holds" } else { "violated" },
        c.max_deviation,
        c.violating_factor.as_ref().map_or(String::new(), |f| format!(", first violating factor {f}"))
    );
    for sk in &c.skipped {
        let _ = writeln!(s, "  skipped zero-probability parents of {}: {:?}", sk.node, sk.parent_values);
    }
    for i in &b.interventions {
        let _ = writeln!(
            s,
            "do({}={}): {} mutilated model (deviation {:.3e}) -> {}",
            i.node,
            i.value,
            if i.mutilation_deviation < qcr_core::classical::CLASSICAL_TOL { "matches" } else { "DIFFERS from" },
            i.mutilation_deviation,
            i.table
        );
    }
    for m in &b.mutual_information {
        let cond: Vec<String> = m.given.iter().map(|(n, v)| format!("{n}={v}")).collect();
        let mut ctx = String::new();
        if let Some((n, v)) = &m.under_do {
            ctx.push_str(&format!(" under do({n}={v})"));
        }
        if !cond.is_empty() {
            ctx.push_str(&format!(" given {}", cond.join(", ")));
        }
        let _ = writeln!(s, "I({};{}){ctx} = {:.6} bits", m.a, m.b, m.bits);
    }
    if let Some(sm) = &b.sampling {
        let _ = writeln!(s, "sampling: {} draws, seed {}, max deviation {:.3e}", sm.samples, sm.seed, sm.max_abs_deviation);
    }
}
