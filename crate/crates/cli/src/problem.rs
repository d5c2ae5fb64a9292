//! On-disk problem description.

use posobs_core::fixtures::Example;
use posobs_core::matcore::Mat;
use posobs_core::sim::TrueSystem;
use posobs_core::synth::{Domain, IntervalSystem, ObserverRealization};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub domain: Domain,
    pub n: usize,
    pub p: usize,
    #[serde(rename = "N")]
    pub subsystems: usize,
    #[serde(rename = "A_lower")]
    pub a_lower: Vec<Mat>,
    #[serde(rename = "A_upper")]
    pub a_upper: Vec<Mat>,
    pub x0_lower: Vec<f64>,
    pub x0_upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Truth>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switching: Option<Switching>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSettings>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Truth {
    #[serde(rename = "A")]
    pub a: Vec<Mat>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverBlock {
    #[serde(rename = "L")]
    pub l: Mat,
    pub omega0_lower: Vec<f64>,
    pub omega0_upper: Vec<f64>,
    /// Informational; recomputed from the bounds and `L` on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derived: Option<Derived>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Derived {
    pub ahat_lower: Vec<Mat>,
    pub ahat_upper: Vec<Mat>,
    pub g_lower: Vec<Mat>,
    pub g_upper: Vec<Mat>,
    #[serde(rename = "F")]
    pub f: Mat,
    #[serde(rename = "Chat")]
    pub chat: Mat,
    #[serde(rename = "Dhat")]
    pub dhat: Mat,
}

impl From<&ObserverRealization> for Derived {
    fn from(o: &ObserverRealization) -> Derived {
        Derived {
            ahat_lower: o.ahat_lower.clone(),
            ahat_upper: o.ahat_upper.clone(),
            g_lower: o.g_lower.clone(),
            g_upper: o.g_upper.clone(),
            f: o.f.clone(),
            chat: o.chat.clone(),
            dhat: o.dhat.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switching {
    pub seed: u64,
    /// Time units for continuous plants, steps for discrete ones.
    pub min_dwell: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub step: f64,
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<ProblemFile, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Input(format!("malformed problem file: {e}")))
    }

    pub fn read(path: &std::path::Path) -> Result<ProblemFile, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        ProblemFile::parse(&text)
    }

    /// Builds and validates the interval system, cross-checking the declared
    /// sizes against the matrices.
    pub fn system(&self) -> Result<IntervalSystem, CliError> {
        if self.a_lower.len() != self.subsystems || self.a_upper.len() != self.subsystems {
            return Err(CliError::Input(format!(
                "N = {} but A_lower has {} and A_upper has {} matrices",
                self.subsystems,
                self.a_lower.len(),
                self.a_upper.len()
            )));
        }
        for (name, set) in [("A_lower", &self.a_lower), ("A_upper", &self.a_upper)] {
            if let Some((i, m)) = set
                .iter()
                .enumerate()
                .find(|(_, m)| m.shape() != (self.n, self.n))
            {
                return Err(CliError::Input(format!(
                    "{name}[{}] is {}x{}, expected n x n = {}x{}",
                    i + 1,
                    m.rows(),
                    m.cols(),
                    self.n,
                    self.n
                )));
            }
        }
        IntervalSystem::new(
            self.domain,
            self.p,
            self.a_lower.clone(),
            self.a_upper.clone(),
            self.x0_lower.clone(),
            self.x0_upper.clone(),
        )
        .map_err(|e| CliError::Input(e.to_string()))
    }

    pub fn truth_system(&self, sys: &IntervalSystem) -> Result<Option<TrueSystem>, CliError> {
        self.truth
            .as_ref()
            .map(|t| {
                TrueSystem::new(sys, t.a.clone(), t.x0.clone())
                    .map_err(|e| CliError::Input(e.to_string()))
            })
            .transpose()
    }

    pub fn from_example(ex: &Example) -> ProblemFile {
        let sys = &ex.system;
        let (switching, sim) = match sys.domain() {
            Domain::Continuous => (
                Switching {
                    seed: ex.switching_seed,
                    min_dwell: ex.min_dwell,
                    horizon: Some(ex.horizon),
                    steps: None,
                },
                Some(SimSettings { step: ex.step }),
            ),
            Domain::Discrete => (
                Switching {
                    seed: ex.switching_seed,
                    min_dwell: ex.min_dwell,
                    horizon: None,
                    steps: Some(ex.horizon as usize),
                },
                None,
            ),
        };
        ProblemFile {
            comment: None,
            domain: sys.domain(),
            n: sys.n(),
            p: sys.p(),
            subsystems: sys.subsystems(),
            a_lower: (0..sys.subsystems())
                .map(|i| sys.a_lower(i).clone())
                .collect(),
            a_upper: (0..sys.subsystems())
                .map(|i| sys.a_upper(i).clone())
                .collect(),
            x0_lower: sys.x0_lower().to_vec(),
            x0_upper: sys.x0_upper().to_vec(),
            truth: Some(Truth {
                a: ex.truth_a.clone(),
                x0: ex.truth_x0.clone(),
            }),
            observer: Some(ObserverBlock {
                l: ex.gain.clone(),
                omega0_lower: ex.omega0_lower.clone(),
                omega0_upper: ex.omega0_upper.clone(),
                derived: None,
            }),
            switching: Some(switching),
            sim,
        }
    }

    /// Pretty JSON with every numeric array kept on one line.
    pub fn to_json(&self) -> String {
        let value = serde_json::to_value(self).expect("problem file is serializable");
        let mut out = String::new();
        write_value(&value, 0, &mut out);
        out.push('\n');
        out
    }
}

fn write_value(v: &serde_json::Value, indent: usize, out: &mut String) {
    use serde_json::Value;
    let pad = |k: usize| "  ".repeat(k);
    match v {
        Value::Array(items) if items.iter().all(|x| !x.is_array() && !x.is_object()) => {
            out.push_str(&serde_json::to_string(v).expect("scalar array"));
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (k, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(item, indent + 1, out);
                out.push_str(if k + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            out.push_str("{\n");
            for (k, (key, item)) in map.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(key).expect("key"));
                out.push_str(": ");
                write_value(item, indent + 1, out);
                out.push_str(if k + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}
