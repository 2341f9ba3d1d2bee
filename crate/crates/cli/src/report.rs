//! JSON report schema shared by `run` and `render`.

use qcr_core::classical::CmcReport;
use qcr_core::process::SegmentValidity;
use qcr_core::reversal::ReversalReport;
use qcr_core::tomography::{Identifiability, ReconstructionReport};
use serde::{Deserialize, Serialize};

use crate::config::Kind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    CheckFailed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub kind: Kind,
    pub status: Status,
    pub tolerance: f64,
    /// Files written next to the report, relative to the output directory.
    pub artifacts: Vec<String>,
    pub body: Body,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Body {
    Simulate(SimulateBody),
    Tomography(TomographyBody),
    Reverse(ReverseBody),
    Identifiability(Identifiability),
    Classical(ClassicalBody),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBody {
    pub nodes: Vec<String>,
    pub entries: usize,
    pub total_probability: f64,
    pub min_entry: f64,
    /// Validity of the initial state (index 0) and of every segment.
    pub validity: Vec<SegmentValidity>,
    pub intervened_nodes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomographyBody {
    pub reconstruction: ReconstructionReport,
    /// Frobenius distance between the reconstructed and the configured process.
    pub round_trip_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReverseBody {
    pub reversal: ReversalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionCheck {
    pub node: String,
    pub value: usize,
    pub table: String,
    /// Max entrywise difference from enumerating the mutilated model.
    pub mutilation_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutualInformationResult {
    pub a: String,
    pub b: String,
    pub given: Vec<(String, usize)>,
    pub under_do: Option<(String, usize)>,
    pub bits: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingCheck {
    pub samples: usize,
    pub seed: u64,
    pub max_abs_deviation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalBody {
    pub cmc: CmcReport,
    pub interventions: Vec<InterventionCheck>,
    pub mutual_information: Vec<MutualInformationResult>,
    pub sampling: Option<SamplingCheck>,
}
