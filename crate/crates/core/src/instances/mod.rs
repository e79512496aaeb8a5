//! Test problems with verified constants and solution oracles.
//!
//! | name             | problem                                        | oracle                     |
//! |------------------|------------------------------------------------|----------------------------|
//! | `toy`            | `min x^2/2` as `x y - y^2/2`                    | analytic                   |
//! | `toy_max`        | `min |x|` as `max(x, -x)`                       | analytic                   |
//! | `game`           | logistic game on simplices                     | zooming grid + dual gap    |
//! | `classification` | multi-distribution logistic regression         | dual ascent + Newton       |
//! | `cone_qp`        | 2-D QP with one linear inequality              | KKT enumeration            |
//! | `nan_fault`      | NaN gradient, for divergence handling          | none                       |

mod classification;
mod cone_qp;
pub mod functions;
mod game;
mod libsvm;
pub mod oracle;
mod toy;

use std::path::PathBuf;

use serde::de::{self, MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize};

pub use classification::{
    build_classification_with_oracle, build_multidist_logistic, classification_oracle, synth_data, Dataset, DEFAULT_REG,
};
pub use cone_qp::{build_cone_qp, example_cone_qp};
pub use game::{
    build_game, build_game_with_oracle, game_inner_minimizer, random_game_data, simplex_grid_oracle, InverseShift,
};
pub use libsvm::{parse_libsvm, read_libsvm};
pub use toy::{build_bilinear_toy, build_max_toy, build_nan_fault};

use crate::error::{invalid, Result};
use crate::exec::Execution;
use crate::problem::{CompositeProblem, Vector};

pub const INSTANCE_NAMES: [&str; 6] = ["toy", "toy_max", "game", "classification", "cone_qp", "nan_fault"];

/// A named instance plus optional builder parameters. In JSON either a bare
/// name (`"game"`) or an object (`{"name": "game", "p": 3, "seed": 11}`).
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct InstanceSpec {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Samples per group (classification) or data rows (game).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reg: Option<f64>,
    /// LIBSVM files, one per group, replacing synthetic classification data.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<Vec<PathBuf>>,
}

impl InstanceSpec {
    pub fn named(name: impl Into<String>) -> Self {
        InstanceSpec { name: name.into(), ..Default::default() }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFields {
    name: String,
    p: Option<usize>,
    n: Option<usize>,
    samples: Option<usize>,
    seed: Option<u64>,
    reg: Option<f64>,
    data: Option<Vec<PathBuf>>,
}

impl<'de> Deserialize<'de> for InstanceSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct SpecVisitor;

        impl<'de> Visitor<'de> for SpecVisitor {
            type Value = InstanceSpec;

            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("an instance name or an object with a `name` key")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<InstanceSpec, E> {
                Ok(InstanceSpec::named(v))
            }

            fn visit_map<M: MapAccess<'de>>(self, map: M) -> std::result::Result<InstanceSpec, M::Error> {
                let f = SpecFields::deserialize(de::value::MapAccessDeserializer::new(map))?;
                Ok(InstanceSpec {
                    name: f.name,
                    p: f.p,
                    n: f.n,
                    samples: f.samples,
                    seed: f.seed,
                    reg: f.reg,
                    data: f.data,
                })
            }
        }

        deserializer.deserialize_any(SpecVisitor)
    }
}

/// A problem together with the starting point used by the runner.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: CompositeProblem,
    pub x0: Vector,
    pub y0: Vector,
}

fn uniform(n: usize) -> Vector {
    Vector::from_element(n, 1.0 / n as f64)
}

fn reject_params(spec: &InstanceSpec, allowed: &[&str]) -> Result<()> {
    let present = [
        ("p", spec.p.is_some()),
        ("n", spec.n.is_some()),
        ("samples", spec.samples.is_some()),
        ("seed", spec.seed.is_some()),
        ("reg", spec.reg.is_some()),
        ("data", spec.data.is_some()),
    ];
    for (key, set) in present {
        if set && !allowed.contains(&key) {
            return invalid(format!("parameter `{key}` does not apply to instance `{}`", spec.name));
        }
    }
    Ok(())
}

/// Builds a registered instance. `seed` is used when the `InstanceSpec` carries none;
/// otherwise each instance has its own default. Oracles are computed only
/// when `with_oracle` is set, since some of them take a while.
pub fn build_instance(spec: &InstanceSpec, seed: Option<u64>, with_oracle: bool, exec: Execution) -> Result<Instance> {
    let seed_or = |default: u64| spec.seed.or(seed).unwrap_or(default);
    match spec.name.as_str() {
        "toy" => {
            reject_params(spec, &[])?;
            Ok(Instance { problem: build_bilinear_toy(), x0: Vector::from_element(1, 1.0), y0: Vector::zeros(1) })
        }
        "toy_max" => {
            reject_params(spec, &[])?;
            Ok(Instance { problem: build_max_toy(), x0: Vector::from_element(1, 1.0), y0: uniform(2) })
        }
        "nan_fault" => {
            reject_params(spec, &[])?;
            Ok(Instance { problem: build_nan_fault(), x0: Vector::from_element(1, 1.0), y0: uniform(2) })
        }
        "cone_qp" => {
            reject_params(spec, &[])?;
            Ok(Instance { problem: example_cone_qp(), x0: Vector::from_element(2, 1.0), y0: Vector::zeros(1) })
        }
        "game" => {
            reject_params(spec, &["p", "n", "samples", "seed"])?;
            let p = spec.p.unwrap_or(3);
            let n = spec.n.unwrap_or(p.min(3));
            let samples = spec.samples.unwrap_or(20);
            if p == 0 || samples == 0 {
                return invalid("game sizes must be positive");
            }
            let (a, b) = random_game_data(p, n, samples, seed_or(11));
            let problem = if with_oracle { build_game_with_oracle(&a, &b, exec)? } else { build_game(&a, &b)? };
            Ok(Instance { problem, x0: uniform(p), y0: uniform(n) })
        }
        "classification" => {
            reject_params(spec, &["p", "n", "samples", "seed", "reg", "data"])?;
            let reg = spec.reg.unwrap_or(DEFAULT_REG);
            let datasets: Vec<Dataset> = match &spec.data {
                Some(paths) => {
                    if spec.p.is_some() || spec.n.is_some() || spec.samples.is_some() {
                        return invalid("`data` replaces the synthetic sizes p, n and samples");
                    }
                    let mut sets: Vec<Dataset> = paths.iter().map(read_libsvm).collect::<Result<_>>()?;
                    let width = sets.iter().map(|(m, _)| m.ncols()).max().unwrap_or(0);
                    for (m, _) in sets.iter_mut() {
                        let rows = m.nrows();
                        *m = m.clone().resize(rows, width, 0.0);
                    }
                    sets
                }
                None => {
                    let p = spec.p.unwrap_or(10);
                    let n = spec.n.unwrap_or(3);
                    let samples = spec.samples.unwrap_or(50);
                    if p == 0 || n == 0 || samples == 0 {
                        return invalid("classification sizes must be positive");
                    }
                    synth_data(p, n, samples, seed_or(7))
                }
            };
            let problem = if with_oracle {
                build_classification_with_oracle(&datasets, reg, exec)?
            } else {
                build_multidist_logistic(&datasets, reg)?
            };
            let (p, n) = (problem.dim_p, problem.dim_n);
            Ok(Instance { problem, x0: Vector::zeros(p), y0: uniform(n) })
        }
        other => invalid(format!("unknown instance `{other}` (known: {})", INSTANCE_NAMES.join(", "))),
    }
}
