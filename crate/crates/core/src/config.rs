//! JSON descriptions of sources and channels.
//!
//! Parse errors and validation errors both come back as
//! [`Error::Invalid`] with a dotted field path such as
//! `source.transition[1]`.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::channel::ChannelSpec;
use crate::energy::{build_binomial_discrete_source, build_birth_death_fluid, build_birth_death_mmpp};
use crate::error::{Error, Result};
use crate::sources::{
    DiscreteMarkovSource, FluidMarkovSource, MmppSource, OnOffContinuousParams, OnOffDiscreteParams, Source,
};

/// A source as written in a configuration file.
///
/// Files use a flat object tagged by `kind`; go through
/// [`SourceConfig::from_json`] and [`SourceConfig::to_json`] for that form.
/// The serde derives use the externally tagged form `{"kind": {fields}}`,
/// which keeps field paths in error messages.
///
/// ```
/// use effcap::config::SourceConfig;
/// let text = r#"{"kind": "onoff-discrete", "p11": 0.8, "p22": 0.8, "lambda": 2}"#;
/// let cfg = SourceConfig::from_json(serde_json::from_str(text).unwrap(), "source").unwrap();
/// let src = cfg.build("source").unwrap();
/// assert!((effcap::sources::average_rate(&src) - 1.0).abs() < 1e-12);
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceConfig {
    Constant {
        rate: f64,
    },
    Discrete {
        transition: Vec<Vec<f64>>,
        rates: Vec<f64>,
    },
    Fluid {
        generator: Vec<Vec<f64>>,
        rates: Vec<f64>,
    },
    Mmpp {
        generator: Vec<Vec<f64>>,
        intensities: Vec<f64>,
    },
    OnoffDiscrete {
        p11: f64,
        p22: f64,
        lambda: f64,
    },
    OnoffFluid {
        alpha: f64,
        beta: f64,
        lambda: f64,
    },
    OnoffMmpp {
        alpha: f64,
        beta: f64,
        lambda: f64,
    },
    /// `n` states, ON with probability `s` per block, rate `i * lambda` in
    /// state `i`.
    BinomialDiscrete {
        n: usize,
        s: f64,
        lambda: f64,
    },
    BirthDeathFluid {
        n: usize,
        alpha: f64,
        beta: f64,
        lambda: f64,
    },
    BirthDeathMmpp {
        n: usize,
        alpha: f64,
        beta: f64,
        lambda: f64,
    },
}

impl SourceConfig {
    /// Reads the flat `{"kind": ..., fields}` form.
    pub fn from_json(value: Value, at: &str) -> Result<Self> {
        let Value::Object(mut fields) = value else {
            return Err(Error::invalid(at, "expected an object with a \"kind\" field"));
        };
        let kind = match fields.remove("kind") {
            Some(Value::String(k)) => k,
            Some(_) => return Err(Error::invalid(join(at, "kind"), "must be a string")),
            None => return Err(Error::invalid(join(at, "kind"), "missing field")),
        };
        let tagged = Value::Object(Map::from_iter([(kind.clone(), Value::Object(fields))]));
        serde_path_to_error::deserialize(tagged).map_err(|e| {
            let full = e.path().to_string();
            let rest = full.strip_prefix(kind.as_str()).unwrap_or("").trim_start_matches('.');
            let path = if rest.is_empty() { at.to_string() } else { join(at, rest) };
            Error::invalid(path, e.into_inner().to_string())
        })
    }

    /// Writes the flat `{"kind": ..., fields}` form.
    pub fn to_json(&self) -> Value {
        let Ok(Value::Object(tagged)) = serde_json::to_value(self) else {
            unreachable!("source configs serialize to objects")
        };
        let (kind, fields) = tagged.into_iter().next().expect("one variant");
        let mut flat = Map::new();
        flat.insert("kind".into(), Value::String(kind));
        if let Value::Object(f) = fields {
            flat.extend(f);
        }
        Value::Object(flat)
    }

    /// Validates and builds the source. `at` prefixes error paths.
    pub fn build(&self, at: &str) -> Result<Source> {
        let built = match self {
            SourceConfig::Constant { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    return Err(Error::invalid(join(at, "rate"), format!("{rate} must be finite and nonnegative")));
                }
                Ok(Source::Constant { rate: *rate })
            }
            SourceConfig::Discrete { transition, rates } => {
                DiscreteMarkovSource::new(transition.clone(), rates.clone()).map(Source::Discrete)
            }
            SourceConfig::Fluid { generator, rates } => {
                FluidMarkovSource::new(generator.clone(), rates.clone()).map(Source::Fluid)
            }
            SourceConfig::Mmpp { generator, intensities } => {
                MmppSource::new(generator.clone(), intensities.clone()).map(Source::Mmpp)
            }
            SourceConfig::OnoffDiscrete { p11, p22, lambda } => {
                OnOffDiscreteParams::new(*p11, *p22, *lambda).map(Source::OnOffDiscrete)
            }
            SourceConfig::OnoffFluid { alpha, beta, lambda } => {
                OnOffContinuousParams::new(*alpha, *beta, *lambda).map(Source::OnOffFluid)
            }
            SourceConfig::OnoffMmpp { alpha, beta, lambda } => {
                OnOffContinuousParams::new(*alpha, *beta, *lambda).map(Source::OnOffMmpp)
            }
            SourceConfig::BinomialDiscrete { n, s, lambda } => {
                build_binomial_discrete_source(*n, *s, *lambda).map(Source::Discrete)
            }
            SourceConfig::BirthDeathFluid { n, alpha, beta, lambda } => {
                build_birth_death_fluid(*n, *alpha, *beta, *lambda).map(Source::Fluid)
            }
            SourceConfig::BirthDeathMmpp { n, alpha, beta, lambda } => {
                build_birth_death_mmpp(*n, *alpha, *beta, *lambda).map(Source::Mmpp)
            }
        };
        built.map_err(|e| prefix_path(e, at))
    }
}

/// Channel as written in a configuration file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub m: usize,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "unit")]
    pub sigma_h_sq: f64,
}

fn unit() -> f64 {
    1.0
}

impl ChannelConfig {
    pub fn build(&self, at: &str) -> Result<ChannelSpec> {
        ChannelSpec::new(self.m, self.rho, self.sigma_h_sq).map_err(|e| prefix_path(e, at))
    }
}

/// Deserializes `text`, reporting the failing field as `at.<path>`.
pub fn parse_json<T: DeserializeOwned>(text: &str, at: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| path_error(e, at))
}

/// Like [`parse_json`] for an already parsed value.
pub fn from_value<T: DeserializeOwned>(value: Value, at: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| path_error(e, at))
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>, at: &str) -> Error {
    let path = e.path().to_string();
    let path = if path == "." { at.to_string() } else { join(at, &path) };
    Error::invalid(path, e.into_inner().to_string())
}

fn join(at: &str, field: &str) -> String {
    match (at.is_empty(), field.starts_with('[')) {
        (true, _) => field.to_string(),
        (false, true) => format!("{at}{field}"),
        (false, false) => format!("{at}.{field}"),
    }
}

/// Puts `at` in front of the path of an [`Error::Invalid`].
pub fn prefix_path(err: Error, at: &str) -> Error {
    match err {
        Error::Invalid { path, message } => Error::Invalid {
            path: join(at, &path),
            message,
        },
        other => other,
    }
}
