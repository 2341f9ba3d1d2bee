//! Experiment pipelines and artifact output.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use anyhow::Context;
use qcr_core::classical::{
    check_cmc, do_distribution, empirical_table, enumerate_distribution, mutilate, mutual_information, sample,
    CLASSICAL_TOL,
};
use qcr_core::graph::{CausalDag, Layering, Node};
use qcr_core::instrument::Instrument;
use qcr_core::process::{validate_segment, LayeredProcess, Segment};
use qcr_core::reversal::{reverse_process, verify_reversibility};
use qcr_core::scheme::{observational_distribution, OutcomeTable, SchemeAssignment};
use qcr_core::tensor::DEFAULT_TOL;
use qcr_core::tomography::{identifiability_check, process_distance, reconstruct_process};
use serde::Serialize;

use crate::config::{invalid, ExperimentConfig, Kind, SchemeSpec, SCHEMA_VERSION};
use crate::report::{
    Body, ClassicalBody, InterventionCheck, MutualInformationResult, Report, ReverseBody, SamplingCheck,
    SimulateBody, Status, TomographyBody,
};

/// Where artifacts go and which files were written.
struct Sink<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Sink<'_> {
    fn table(&mut self, name: &str, t: &OutcomeTable) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).with_context(|| format!("writing {name}"))?;
        let mut header: Vec<&str> = t.axes().iter().map(|a| a.node.as_str()).collect();
        header.push("probability");
        w.write_record(&header)?;
        for flat in 0..t.len() {
            let mut row: Vec<String> = t.labels(flat).into_iter().map(str::to_string).collect();
            row.push(format!("{:.16e}", t.prob(flat)));
            w.write_record(&row)?;
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text).with_context(|| format!("writing {name}"))?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Table plus a JSON sidecar describing its axes.
    fn table_with_sidecar(&mut self, stem: &str, t: &OutcomeTable) -> anyhow::Result<()> {
        self.table(&format!("{stem}.csv"), t)?;
        let sidecar = serde_json::json!({
            "schema_version": SCHEMA_VERSION,
            "axes": t.axes(),
            "entries": t.len(),
            "probability_format": "{:.16e}",
            "order": "row-major, last axis fastest",
        });
        self.json(&format!("{stem}.json"), &sidecar)
    }
}

struct Quantum {
    process: LayeredProcess,
    scheme: SchemeAssignment,
    layering: Layering,
}

fn nodes_of(lp: &LayeredProcess) -> Vec<Node> {
    lp.nodes().cloned().collect()
}

fn build_scheme(spec: Option<&SchemeSpec>, nodes: &[Node]) -> anyhow::Result<SchemeAssignment> {
    let mut given: HashMap<String, Instrument> = HashMap::new();
    if let Some(SchemeSpec::Instruments { instruments }) = spec {
        for s in instruments {
            let inst = s.build().map_err(|e| invalid(format!("scheme instrument at `{}`: {e}", s.node())))?;
            if given.insert(s.node().to_string(), inst).is_some() {
                return Err(invalid(format!("scheme lists node `{}` twice", s.node())));
            }
        }
    }
    let mut insts = Vec::with_capacity(nodes.len());
    for n in nodes {
        match given.remove(&n.id) {
            Some(i) => insts.push(i),
            None => insts.push(
                qcr_core::instrument::sic_instrument(n.id.clone(), n.dim)
                    .map_err(|e| invalid(format!("default SIC instrument at `{}`: {e}", n.id)))?,
            ),
        }
    }
    if let Some(extra) = given.keys().next() {
        return Err(invalid(format!("scheme names unknown node `{extra}`")));
    }
    SchemeAssignment::new(nodes, insts).map_err(|e| invalid(format!("scheme: {e}")))
}

fn build_quantum(cfg: &ExperimentConfig) -> anyhow::Result<Quantum> {
    let g = cfg.require_graph()?;
    g.validate().map_err(|e| invalid(format!("graph: {e}")))?;
    let spec = cfg.require_process()?;
    let layering = spec.layering();
    let process = spec.build(g).map_err(|e| invalid(format!("process: {e}")))?;
    if !layering.satisfies_definition(g) {
        return Err(invalid(format!("process layers {:?} are not a layering of the graph", layering.layers)));
    }
    let scheme = build_scheme(cfg.scheme.as_ref(), &nodes_of(&process))?;
    Ok(Quantum { process, scheme, layering })
}

fn validity(lp: &LayeredProcess, tol: f64) -> Vec<qcr_core::process::SegmentValidity> {
    let d = lp.initial().rows();
    let initial = Segment::new(lp.initial().clone(), 1, d).map(|s| validate_segment(&s, tol));
    initial.into_iter().chain(lp.segments().iter().map(|s| validate_segment(s, tol))).collect()
}

/// Runs one experiment, writing artifacts and `report.json` into `out`.
pub fn run(kind: Kind, cfg: &ExperimentConfig, out: &Path, tol_override: Option<f64>) -> anyhow::Result<Report> {
    if let Some(k) = cfg.kind {
        if k != kind {
            return Err(invalid(format!("config is for `{k}` but `{kind}` was requested")));
        }
    }
    let tol = tol_override.or(cfg.tolerance).unwrap_or(DEFAULT_TOL);
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(invalid(format!("tolerance must be positive, got {tol}")));
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut sink = Sink { dir: out, written: Vec::new() };
    let (status, body) = match kind {
        Kind::Simulate => simulate(cfg, tol, &mut sink)?,
        Kind::Tomography => tomography(cfg, tol, &mut sink)?,
        Kind::Reverse => reverse(cfg, tol, &mut sink)?,
        Kind::Identifiability => identifiability(cfg)?,
        Kind::Classical => classical(cfg, &mut sink)?,
    };
    let mut artifacts = sink.written.clone();
    artifacts.push("report.json".into());
    let report = Report { schema_version: SCHEMA_VERSION, kind, status, tolerance: tol, artifacts, body };
    sink.json("report.json", &report)?;
    Ok(report)
}

fn status(ok: bool) -> Status {
    if ok {
        Status::Ok
    } else {
        Status::CheckFailed
    }
}

fn simulate(cfg: &ExperimentConfig, tol: f64, sink: &mut Sink) -> anyhow::Result<(Status, Body)> {
    let q = build_quantum(cfg)?;
    let validity = validity(&q.process, tol);
    let t = qcr_core::scheme::born_table(&q.scheme, &q.process, Default::default())?;
    sink.table_with_sidecar("table", &t)?;
    let mut intervened_nodes = Vec::new();
    if !cfg.interventions.is_empty() {
        let mut subs = HashMap::new();
        for s in &cfg.interventions {
            let inst = s.build().map_err(|e| invalid(format!("intervention at `{}`: {e}", s.node())))?;
            intervened_nodes.push(s.node().to_string());
            subs.insert(s.node().to_string(), inst);
        }
        let scheme = q.scheme.with_substitutions(&subs).map_err(|e| invalid(format!("interventions: {e}")))?;
        let ti = qcr_core::scheme::born_table(&scheme, &q.process, Default::default())?;
        sink.table_with_sidecar("intervened", &ti)?;
    }
    let ok = validity.iter().all(|v| v.is_ok()) && t.is_normalized(tol);
    let body = SimulateBody {
        nodes: t.axes().iter().map(|a| a.node.clone()).collect(),
        entries: t.len(),
        total_probability: t.total(),
        min_entry: t.min_entry(),
        validity,
        intervened_nodes,
    };
    Ok((status(ok), Body::Simulate(body)))
}

fn tomography(cfg: &ExperimentConfig, tol: f64, sink: &mut Sink) -> anyhow::Result<(Status, Body)> {
    let q = build_quantum(cfg)?;
    let t = observational_distribution(&q.scheme, &q.process)?;
    sink.table_with_sidecar("table", &t)?;
    let (hat, rep) = reconstruct_process(&t, &q.layering, &q.scheme, tol)?;
    sink.json("reconstructed.json", &hat)?;
    let round_trip_error = process_distance(&q.process, &hat)?;
    let ok = rep.success && round_trip_error < tol.max(1e-8);
    Ok((status(ok), Body::Tomography(TomographyBody { reconstruction: rep, round_trip_error })))
}

fn reverse(cfg: &ExperimentConfig, tol: f64, sink: &mut Sink) -> anyhow::Result<(Status, Body)> {
    let q = build_quantum(cfg)?;
    let forward = observational_distribution(&q.scheme, &q.process)?;
    sink.table_with_sidecar("forward", &forward)?;
    let rep = verify_reversibility(&q.process, &q.scheme, tol)?;
    if rep.rejection.is_none() {
        let (bar, _) = reverse_process(&q.process)?;
        let reversed = observational_distribution(&q.scheme, &bar)?;
        sink.table_with_sidecar("reversed", &reversed)?;
        sink.json("reversed_process.json", &bar)?;
    }
    Ok((status(rep.success), Body::Reverse(ReverseBody { reversal: rep })))
}

fn identifiability(cfg: &ExperimentConfig) -> anyhow::Result<(Status, Body)> {
    let g: &CausalDag = cfg.require_graph()?;
    g.validate().map_err(|e| invalid(format!("graph: {e}")))?;
    let verdict = identifiability_check(g)?;
    Ok((status(verdict.is_identifiable()), Body::Identifiability(verdict)))
}

fn classical(cfg: &ExperimentConfig, sink: &mut Sink) -> anyhow::Result<(Status, Body)> {
    let fm = cfg.require_model()?;
    let spec = cfg.classical.clone().unwrap_or_default();
    let t = enumerate_distribution(fm)?;
    sink.table_with_sidecar("observational", &t)?;
    let cmc = check_cmc(&t, fm.dag())?;
    let mut interventions = Vec::new();
    for d in &spec.interventions {
        let bad = |e: qcr_core::Error| invalid(format!("do({}={}): {e}", d.node, d.value));
        let mutilated = enumerate_distribution(&mutilate(fm, &d.node, d.value).map_err(bad)?)?;
        let table = do_distribution(&t, fm.dag(), &d.node, d.value)?;
        let name = format!("do_{}_{}", d.node, d.value);
        sink.table_with_sidecar(&name, &table)?;
        interventions.push(InterventionCheck {
            node: d.node.clone(),
            value: d.value,
            table: format!("{name}.csv"),
            mutilation_deviation: table.max_abs_diff(&mutilated)?,
        });
    }
    let mut mi = Vec::new();
    for q in &spec.mutual_information {
        let base = match &q.under_do {
            Some(d) => do_distribution(&t, fm.dag(), &d.node, d.value)?,
            None => t.clone(),
        };
        let given: Vec<(&str, usize)> = q.given.iter().map(|g| (g.node.as_str(), g.value)).collect();
        mi.push(MutualInformationResult {
            a: q.a.clone(),
            b: q.b.clone(),
            given: q.given.iter().map(|g| (g.node.clone(), g.value)).collect(),
            under_do: q.under_do.as_ref().map(|d| (d.node.clone(), d.value)),
            bits: mutual_information(&base, &q.a, &q.b, &given).map_err(|e| invalid(format!("mutual information: {e}")))?,
        });
    }
    let sampling = match spec.samples {
        Some(n) => {
            let seed = cfg.seed.ok_or_else(|| invalid("`classical.samples` requires a top-level `seed`"))?;
            let e = empirical_table(fm.dag(), &sample(fm, n, seed)?)?;
            sink.table_with_sidecar("sampled", &e)?;
            Some(SamplingCheck { samples: n, seed, max_abs_deviation: t.max_abs_diff(&e)? })
        }
        None => None,
    };
    let ok = cmc.ok && interventions.iter().all(|c| c.mutilation_deviation < CLASSICAL_TOL);
    Ok((status(ok), Body::Classical(ClassicalBody { cmc, interventions, mutual_information: mi, sampling })))
}
